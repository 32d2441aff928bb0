//! Seeded synthetic fixtures.
//!
//! * [`harness_fixture`]: query/chunk pairs with planted PII and exact
//!   ground-truth spans, with entities recurring across pairs.
//! * [`round_trip_cases`]: small pairs whose entities the rule detector
//!   finds in full.
//! * [`retrieval_fixture`]: a contract corpus with planted facts and one
//!   question per fact.

use std::collections::HashSet;

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Document, DocumentMetadata};
use crate::dates::DateFormat;
use crate::detection::{EntitySpan, EntityType, SpanSource};
use crate::gazetteer;
use crate::text::find_token_bounded;

pub const HARNESS_SEED: u64 = 0x5EED_0050;
pub const ROUND_TRIP_SEED: u64 = 0x5EED_1000;
pub const RETRIEVAL_SEED: u64 = 0x5EED_0100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedEntity {
    pub surface: String,
    pub entity_type: EntityType,
    /// Byte offsets into the owning text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureChunk {
    pub doc_id: String,
    pub chunk_id: usize,
    pub text: String,
    pub entities: Vec<PlantedEntity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixturePair {
    pub id: String,
    pub question: String,
    pub question_entities: Vec<PlantedEntity>,
    pub chunks: Vec<FixtureChunk>,
}

impl FixturePair {
    /// Ground-truth spans tagged with their source.
    pub fn spans(&self) -> Vec<EntitySpan> {
        let tag = |e: &PlantedEntity, source: SpanSource| EntitySpan {
            surface: e.surface.clone(),
            entity_type: e.entity_type,
            start: e.start,
            end: e.end,
            source,
        };
        let mut out: Vec<EntitySpan> = self.question_entities.iter().map(|e| tag(e, SpanSource::Query)).collect();
        for c in &self.chunks {
            let source = SpanSource::Chunk { doc_id: c.doc_id.clone(), chunk_id: c.chunk_id };
            out.extend(c.entities.iter().map(|e| tag(e, source.clone())));
        }
        out
    }

    pub fn chunks(&self) -> Vec<Chunk> {
        self.chunks
            .iter()
            .map(|c| Chunk { doc_id: c.doc_id.clone(), chunk_id: c.chunk_id, char_start: 0, char_end: c.text.len(), text: c.text.clone() })
            .collect()
    }

    /// Distinct planted surfaces, in first-mention order.
    pub fn originals(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.question_entities
            .iter()
            .chain(self.chunks.iter().flat_map(|c| &c.entities))
            .filter(|e| seen.insert(e.surface.clone()))
            .map(|e| e.surface.clone())
            .collect()
    }

    pub fn occurrences(&self) -> usize {
        self.question_entities.len() + self.chunks.iter().map(|c| c.entities.len()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessFixture {
    pub seed: u64,
    pub pairs: Vec<FixturePair>,
}

impl HarnessFixture {
    pub fn mean_entities_per_pair(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(|p| p.originals().len()).sum::<usize>() as f64 / self.pairs.len() as f64
    }
}

/// Shape of a generated harness fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarnessShape {
    pub pairs: usize,
    /// Shared entities that recur across pairs.
    pub pool: usize,
    /// Entities per pair drawn from the shared pool.
    pub from_pool: usize,
    pub chunks_per_pair: usize,
}

impl Default for HarnessShape {
    fn default() -> Self {
        Self { pairs: 50, pool: 200, from_pool: 14, chunks_per_pair: 3 }
    }
}

const ORIG_ORG_STEMS: &[&str] = &[
    "Acme", "Globex", "Initech", "Northwind", "Contoso", "Fabrikam", "Tailspin", "Wingtip", "Litware", "Proseware",
    "Adventure Works", "Blue Yonder", "Coho Vineyard", "Lucerne", "Margie", "Humongous", "Alpine Ski", "Fourth Coffee",
    "Graphic Design", "Trey Research", "Wide World", "Southridge", "Datum", "Woodgrove", "Bellows", "Hanford",
    "Kingsport", "Larchmont", "Millbrook", "Newcastle", "Oxbridge", "Pinecrest", "Quarrymoor", "Ravensworth",
    "Silvercrest", "Thornbury", "Umberfield", "Valemont", "Westmarch", "Yorkshire Dales", "Zanzibar Trading",
    "Bluewater", "Copperline", "Deepwell", "Eastgate", "Fairhaven", "Goldleaf", "Highpoint", "Ironbridge", "Jetstream",
];

const ORIG_ORG_SUFFIXES: &[&str] = &["Corp", "LLC", "Corporation", "Limited", "GmbH", "PLC", "LLP", "Incorporated"];

const ORIG_FIRST: &[&str] = &[
    "Laura", "James", "Maria", "Robert", "Elena", "David", "Sofia", "Michael", "Hannah", "Daniel", "Julia", "Thomas",
    "Olivia", "Samuel", "Clara", "Peter", "Anna", "George", "Lucy", "Martin", "Emma", "Henry", "Grace", "Oliver",
    "Alice", "Edward", "Chloe", "Arthur", "Ruby", "Frederick", "Ella", "Benjamin", "Lily", "Charles", "Nora", "Walter",
    "Irene", "Victor", "Diana", "Simon",
];

const ORIG_LAST: &[&str] = &[
    "Chen", "Garcia", "Okonkwo", "Schmidt", "Rossi", "Nakamura", "Patel", "Kowalski", "Johansson", "Dubois", "Murphy",
    "Fischer", "Silva", "Haddad", "Lindgren", "Moreau", "Novotny", "Brennan", "Castillo", "Dawson", "Eriksen",
    "Ferreira", "Grant", "Hoffman", "Ibrahim", "Jensen", "Keller", "Lambert", "Mendes", "Nolan", "Ortega", "Pearson",
    "Quinn", "Reyes", "Sullivan", "Tanaka", "Usher", "Vogel", "Walsh", "Young",
];

const LAW_STEMS: &[&str] = &["Federal", "Uniform", "National", "Interstate", "Model", "Revised", "General", "Commonwealth"];

const LAW_TOPICS: &[&str] = &[
    "Arbitration", "Late Payment", "Product Liability", "Data Security", "Trade Secrets", "Electronic Signatures",
    "Commercial Agency", "Consumer Protection", "Supply Chain Transparency", "Warehouse Receipts",
];

const MONEY_PREFIXES: &[&str] = &["$", "$", "USD ", "EUR ", "£"];

const DATE_FORMATS: &[DateFormat] = &[DateFormat::MonthDayYear, DateFormat::DayMonthYear, DateFormat::Iso];

/// Locations that neither contain nor are contained in another location.
fn standalone_locations() -> Vec<&'static str> {
    gazetteer::LOCATIONS
        .iter()
        .copied()
        .filter(|a| {
            gazetteer::LOCATIONS
                .iter()
                .all(|b| a == b || (find_token_bounded(b, a).is_empty() && find_token_bounded(a, b).is_empty()))
        })
        .collect()
}

/// Draws distinct original surfaces of each type.
struct EntityFactory {
    used: HashSet<String>,
    locations: Vec<&'static str>,
}

impl EntityFactory {
    fn new() -> Self {
        Self { used: HashSet::new(), locations: standalone_locations() }
    }

    fn draw(&self, ty: EntityType, rng: &mut ChaCha8Rng) -> String {
        match ty {
            EntityType::Organization => {
                format!("{} {}", ORIG_ORG_STEMS.choose(rng).unwrap(), ORIG_ORG_SUFFIXES.choose(rng).unwrap())
            }
            EntityType::Person => format!("{} {}", ORIG_FIRST.choose(rng).unwrap(), ORIG_LAST.choose(rng).unwrap()),
            EntityType::Location => self.locations.choose(rng).unwrap().to_string(),
            EntityType::Date => {
                let base = NaiveDate::from_ymd_opt(1990, 1, 1).unwrap();
                let date = base.checked_add_days(Days::new(rng.random_range(0..14_600))).unwrap();
                DATE_FORMATS.choose(rng).unwrap().render(date)
            }
            EntityType::Money => {
                let n: u32 = rng.random_range(1_000_000..10_000_000);
                let digits = n.to_string();
                format!("{}{},{},{}", MONEY_PREFIXES.choose(rng).unwrap(), &digits[..1], &digits[1..4], &digits[4..])
            }
            EntityType::LawReference => format!(
                "{} {} Act of {}",
                LAW_STEMS.choose(rng).unwrap(),
                LAW_TOPICS.choose(rng).unwrap(),
                rng.random_range(1950..2020)
            ),
            EntityType::Other => format!("REF-{:06}", rng.random_range(0..1_000_000)),
        }
    }

    /// A fresh surface of type `ty` that neither equals, contains nor is
    /// contained in any surface already issued.
    fn fresh(&mut self, ty: EntityType, rng: &mut ChaCha8Rng) -> Option<String> {
        for _ in 0..1000 {
            let s = self.draw(ty, rng);
            let clash = self
                .used
                .iter()
                .any(|u| u.eq_ignore_ascii_case(&s) || !find_token_bounded(u, &s).is_empty() || !find_token_bounded(&s, u).is_empty());
            if !clash {
                self.used.insert(s.clone());
                return Some(s);
            }
        }
        None
    }
}

fn templates(ty: EntityType) -> &'static [&'static str] {
    match ty {
        EntityType::Organization => &[
            "{} shall deliver the products within thirty days.",
            "Invoices are issued by {} at the end of each month.",
            "The obligations of {} survive termination of this agreement.",
            "Each shipment is inspected by {} before acceptance.",
        ],
        EntityType::Person => &[
            "Notices shall be addressed to Ms. {}.",
            "The agreement was signed by Mr. {} as authorized officer.",
            "Technical questions go to Dr. {} during business hours.",
        ],
        EntityType::Location => &[
            "Deliveries are made to the warehouse in {}.",
            "The courts of {} have exclusive jurisdiction.",
            "The supplier maintains a regional office in {}.",
        ],
        EntityType::Date => &[
            "Payment is due on {}.",
            "The initial term ends on {}.",
            "This amendment takes effect on {}.",
        ],
        EntityType::Money => &[
            "The annual fee is {}.",
            "Total liability is capped at {}.",
            "A deposit of {} is payable on signature.",
        ],
        EntityType::LawReference => &["This agreement is subject to the {}.", "Each party shall comply with the {}."],
        EntityType::Other => &["The reference number is {}."],
    }
}

const FILLER: &[&str] = &[
    "Each party shall bear its own costs.",
    "The parties shall cooperate in good faith.",
    "Any amendment must be in writing and signed by both parties.",
    "Neither party may assign this agreement without prior written consent.",
    "All notices must be delivered in writing.",
    "This clause survives expiry or termination.",
    "The receiving party shall protect confidential information with reasonable care.",
    "Time is of the essence for all delivery obligations.",
];

/// Text under construction with planted entity offsets.
#[derive(Default)]
struct Builder {
    text: String,
    entities: Vec<PlantedEntity>,
}

impl Builder {
    fn push(&mut self, template: &str, slots: &[(&str, EntityType)]) {
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        let mut parts = template.split("{}");
        self.text.push_str(parts.next().unwrap_or_default());
        for ((surface, ty), rest) in slots.iter().zip(parts) {
            let start = self.text.len();
            self.text.push_str(surface);
            self.entities.push(PlantedEntity { surface: surface.to_string(), entity_type: *ty, start, end: self.text.len() });
            self.text.push_str(rest);
        }
    }
}

const QUESTIONS_TWO_ORGS: &[&str] = &[
    "When does {} have to notify {} of termination?",
    "Does {} owe any fees to {}?",
    "What must {} deliver to {} each month?",
];

const QUESTIONS_ORG_DATE: &[&str] = &[
    "What must {} pay by {}?",
    "Summarize the obligations of {} after {}.",
    "Which clauses bind {} from {}?",
];

fn doc_id(rng: &mut ChaCha8Rng) -> String {
    format!("doc-{:016x}", rng.random::<u64>())
}

/// Builds one pair mentioning every entity in `entities` at least once.
fn build_pair(id: String, entities: &[(String, EntityType)], n_chunks: usize, rng: &mut ChaCha8Rng) -> FixturePair {
    let orgs: Vec<&(String, EntityType)> = entities.iter().filter(|e| e.1 == EntityType::Organization).collect();
    let date = entities.iter().find(|e| e.1 == EntityType::Date);
    let mut question = Builder::default();
    match (orgs.as_slice(), date) {
        ([a, b, ..], _) if rng.random_bool(0.5) || date.is_none() => {
            question.push(QUESTIONS_TWO_ORGS.choose(rng).unwrap(), &[(&a.0, a.1), (&b.0, b.1)])
        }
        ([a, ..], Some(d)) => question.push(QUESTIONS_ORG_DATE.choose(rng).unwrap(), &[(&a.0, a.1), (&d.0, d.1)]),
        _ => question.push("What are the main obligations under this agreement?", &[]),
    }

    // one sentence per entity, a second mention for roughly a third of them
    let mut sentences: Vec<(usize, &'static str, &(String, EntityType))> = Vec::new();
    for e in entities {
        sentences.push((rng.random_range(0..n_chunks), templates(e.1).choose(rng).unwrap(), e));
        if rng.random_bool(0.3) {
            sentences.push((rng.random_range(0..n_chunks), templates(e.1).choose(rng).unwrap(), e));
        }
    }
    sentences.shuffle(rng);

    let docs: Vec<String> = (0..2).map(|_| doc_id(rng)).collect();
    let mut chunks = Vec::with_capacity(n_chunks);
    for i in 0..n_chunks {
        let mut b = Builder::default();
        let mut body: Vec<(&str, Option<&(String, EntityType)>)> =
            sentences.iter().filter(|s| s.0 == i).map(|s| (s.1, Some(s.2))).collect();
        for _ in 0..rng.random_range(1..3) {
            body.push((FILLER.choose(rng).unwrap(), None));
        }
        body.shuffle(rng);
        for (template, entity) in body {
            match entity {
                Some((surface, ty)) => b.push(template, &[(surface, *ty)]),
                None => b.push(template, &[]),
            }
        }
        chunks.push(FixtureChunk { doc_id: docs[i % docs.len()].clone(), chunk_id: i, text: b.text, entities: b.entities });
    }
    FixturePair { id, question: question.text, question_entities: question.entities, chunks }
}

const POOL_MIX: &[(EntityType, usize)] = &[
    (EntityType::Organization, 30),
    (EntityType::Person, 20),
    (EntityType::Location, 15),
    (EntityType::Date, 15),
    (EntityType::Money, 10),
    (EntityType::LawReference, 10),
];

const UNIQUE_PER_PAIR: &[EntityType] =
    &[EntityType::Organization, EntityType::Person, EntityType::Date, EntityType::Money];

/// The evaluation harness fixture.
pub fn harness_fixture(seed: u64, shape: HarnessShape) -> HarnessFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factory = EntityFactory::new();
    let weight_total: usize = POOL_MIX.iter().map(|(_, w)| w).sum();
    let mut pool: Vec<(String, EntityType)> = Vec::with_capacity(shape.pool);
    for (ty, w) in POOL_MIX {
        let n = shape.pool * w / weight_total;
        for _ in 0..n {
            if let Some(s) = factory.fresh(*ty, &mut rng) {
                pool.push((s, *ty));
            }
        }
    }
    let pairs = (0..shape.pairs)
        .map(|i| {
            let mut entities: Vec<(String, EntityType)> =
                pool.choose_multiple(&mut rng, shape.from_pool.min(pool.len())).cloned().collect();
            for ty in UNIQUE_PER_PAIR {
                if let Some(s) = factory.fresh(*ty, &mut rng) {
                    entities.push((s, *ty));
                }
            }
            entities.shuffle(&mut rng);
            build_pair(format!("pair-{:03}", i + 1), &entities, shape.chunks_per_pair, &mut rng)
        })
        .collect();
    HarnessFixture { seed, pairs }
}

/// `n` independent small pairs with 4 to 10 entities each.
pub fn round_trip_cases(seed: u64, n: usize) -> Vec<FixturePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types: Vec<EntityType> = POOL_MIX.iter().map(|(t, _)| *t).collect();
    (0..n)
        .map(|i| {
            let mut factory = EntityFactory::new();
            let count = rng.random_range(4..=10);
            let mut entities = Vec::with_capacity(count + 1);
            // every case has at least one organization for the question
            let org = factory.fresh(EntityType::Organization, &mut rng).expect("organization");
            entities.push((org, EntityType::Organization));
            while entities.len() < count {
                let ty = *types.choose(&mut rng).unwrap();
                if let Some(s) = factory.fresh(ty, &mut rng) {
                    entities.push((s, ty));
                }
            }
            entities.shuffle(&mut rng);
            build_pair(format!("case-{:04}", i + 1), &entities, rng.random_range(1..=3), &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedQuery {
    pub question: String,
    pub doc_id: String,
    /// The planted sentence; a chunk is a hit if it contains it whole.
    pub fact: String,
}

#[derive(Debug, Clone)]
pub struct RetrievalFixture {
    pub documents: Vec<(Document, DocumentMetadata)>,
    pub queries: Vec<PlantedQuery>,
}

const FACT_ATTRS: &[&str] = &[
    "calibration interval", "warranty period", "inspection fee", "restocking charge", "notice period",
    "service credit", "replacement lead time", "maintenance window", "acceptance threshold", "storage temperature",
    "minimum order quantity", "shipping surcharge", "audit frequency", "response time", "retention period",
    "training allowance", "spare parts discount", "uptime commitment", "escalation deadline", "packaging standard",
];

const FACT_ITEMS: &[&str] = &[
    "hydraulic pump", "cooling module", "control cabinet", "sensor array", "conveyor belt", "backup generator",
    "filtration unit", "robotic arm", "pressure valve", "thermal camera", "battery pack", "servo motor",
    "loading dock", "water chiller", "signal amplifier", "gear assembly", "spectrometer", "air compressor",
    "fiber switch", "label printer", "welding station", "drill press", "heat exchanger", "solar inverter",
    "packaging line",
];

const FACT_VALUES: &[&str] = &["{} days", "{} hours", "{} percent", "{} units", "{} weeks"];

const BOILERPLATE: &[&str] = &[
    "This agreement sets out the terms on which the supplier provides equipment and related services.",
    "The customer shall pay all undisputed invoices within the agreed payment period.",
    "Either party may terminate this agreement for material breach that remains uncured.",
    "The supplier warrants that all services are performed with reasonable skill and care.",
    "Confidential information remains the property of the disclosing party.",
    "Neither party is liable for delays caused by events beyond its reasonable control.",
    "The parties shall meet quarterly to review performance and open issues.",
    "All equipment remains at the risk of the supplier until delivery is complete.",
    "The customer shall provide reasonable access to its premises for installation.",
    "Any dispute shall first be referred to senior management for resolution.",
    "The supplier shall maintain adequate insurance throughout the term.",
    "Changes to the scope require a written change order signed by both parties.",
    "Intellectual property created under this agreement vests in the customer.",
    "The supplier shall comply with the site safety rules of the customer.",
    "Performance reports are delivered within ten business days after each quarter.",
];

const DISTRACTORS: &[&str] = &[
    "The {item} is covered by the general warranty terms.",
    "Questions about the {attr} are escalated to the account manager.",
    "The supplier may update the documentation for the {item} at any time.",
    "Changes to any {attr} require thirty days notice.",
];

/// A corpus of `n_docs` contracts with `facts_per_doc` planted facts each.
pub fn retrieval_fixture(seed: u64, n_docs: usize, facts_per_doc: usize) -> RetrievalFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut combos: Vec<(&str, &str)> =
        FACT_ATTRS.iter().flat_map(|a| FACT_ITEMS.iter().map(move |i| (*a, *i))).collect();
    combos.shuffle(&mut rng);
    let mut combos = combos.into_iter();
    let mut documents = Vec::with_capacity(n_docs);
    let mut queries = Vec::new();
    for d in 0..n_docs {
        let id = doc_id(&mut rng);
        let mut sentences: Vec<String> = BOILERPLATE.choose_multiple(&mut rng, 10).map(|s| s.to_string()).collect();
        for _ in 0..4 {
            let t = DISTRACTORS.choose(&mut rng).unwrap();
            sentences.push(t.replace("{item}", FACT_ITEMS.choose(&mut rng).unwrap()).replace("{attr}", FACT_ATTRS.choose(&mut rng).unwrap()));
        }
        for _ in 0..facts_per_doc {
            let (attr, item) = combos.next().expect("enough fact combinations");
            let value = FACT_VALUES.choose(&mut rng).unwrap().replace("{}", &rng.random_range(2..400).to_string());
            let fact = format!("The {attr} for the {item} is {value}.");
            queries.push(PlantedQuery { question: format!("What is the {attr} for the {item}?"), doc_id: id.clone(), fact: fact.clone() });
            sentences.push(fact);
        }
        sentences.shuffle(&mut rng);
        let text = sentences.join(" ");
        let doc = Document { doc_id: id.clone(), title: format!("equipment-services-{:02}", d + 1), text, source_path: format!("equipment-services-{:02}.txt", d + 1) };
        let meta = DocumentMetadata { doc_id: id, doc_type: Some("services agreement".into()), ..Default::default() };
        documents.push((doc, meta));
    }
    RetrievalFixture { documents, queries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{collect_total, detect, RuleDetector};

    #[test]
    fn planted_offsets_point_at_surfaces() {
        let fx = harness_fixture(HARNESS_SEED, HarnessShape::default());
        for p in &fx.pairs {
            for e in &p.question_entities {
                assert_eq!(&p.question[e.start..e.end], e.surface);
            }
            for c in &p.chunks {
                for e in &c.entities {
                    assert_eq!(&c.text[e.start..e.end], e.surface);
                }
            }
        }
    }

    #[test]
    fn harness_shape_meets_targets() {
        let fx = harness_fixture(HARNESS_SEED, HarnessShape::default());
        assert_eq!(fx.pairs.len(), 50);
        assert_eq!(fx.mean_entities_per_pair(), 18.0);
    }

    #[test]
    fn generation_is_seeded() {
        let a = harness_fixture(7, HarnessShape { pairs: 5, ..Default::default() });
        let b = harness_fixture(7, HarnessShape { pairs: 5, ..Default::default() });
        assert_eq!(a, b);
        assert_ne!(a, harness_fixture(8, HarnessShape { pairs: 5, ..Default::default() }));
    }

    #[test]
    fn rule_detector_finds_every_planted_entity() {
        let det = RuleDetector::new();
        for case in round_trip_cases(ROUND_TRIP_SEED, 100) {
            let mut spans = detect(&case.question, &SpanSource::Query, &det).unwrap();
            for c in &case.chunks {
                spans.extend(detect(&c.text, &SpanSource::Chunk { doc_id: c.doc_id.clone(), chunk_id: c.chunk_id }, &det).unwrap());
            }
            let detected = collect_total(spans.iter());
            let planted = collect_total(case.spans().iter());
            for key in planted.keys() {
                assert!(detected.contains(key), "{} missed {key}", case.id);
            }
        }
    }

    #[test]
    fn facts_are_unique_and_answerable() {
        let fx = retrieval_fixture(RETRIEVAL_SEED, 20, 5);
        assert_eq!(fx.queries.len(), 100);
        let facts: HashSet<&str> = fx.queries.iter().map(|q| q.fact.as_str()).collect();
        assert_eq!(facts.len(), 100);
        for q in &fx.queries {
            let (doc, _) = fx.documents.iter().find(|(d, _)| d.doc_id == q.doc_id).unwrap();
            assert!(doc.text.contains(&q.fact));
        }
    }
}
