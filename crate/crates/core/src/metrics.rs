//! Anonymization-quality metrics and the evaluation harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anonymizer::{anonymize, sensitive_surfaces};
use crate::deanonymizer::deanonymize;
use crate::detection::{collect_total, EntityKey, RuleDetector};
use crate::mapping::{generate_sets, originals_of, MappingConfig, MappingError, SessionMapping, SurrogateSet};
use crate::provider::{AnswerProvider, GenerationRequest, MockProvider};
use crate::query::QueryType;
use crate::surrogates::{SurrogateGenerator, WordlistGenerator};
use crate::synth::{FixturePair, HarnessFixture};
use crate::text::{find_token_bounded, normalize_surface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Fresh K-candidate sets per session, one uniform draw per entity.
    SessionMapping,
    /// One surrogate per entity, reused for every pair.
    FixedDictionary,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SessionMapping => "session-mapping",
            Strategy::FixedDictionary => "fixed-dictionary",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "session-mapping" => Ok(Strategy::SessionMapping),
            "fixed-dictionary" => Ok(Strategy::FixedDictionary),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// One entity's treatment in one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntityChoice {
    pub entity: EntityKey,
    pub surrogate: String,
    /// Planted occurrences in the pair's texts.
    pub occurrences: usize,
    /// Occurrences no longer present in the outbound payload.
    pub replaced: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub choices: Vec<EntityChoice>,
    pub expected_restored: usize,
    pub restored: usize,
}

/// 100 × replaced / detected occurrences, micro-averaged. 100 when empty.
pub fn compute_coverage(records: &[PairRecord]) -> f64 {
    let (replaced, total) = records
        .iter()
        .flat_map(|r| &r.choices)
        .fold((0usize, 0usize), |(r, t), c| (r + c.replaced.min(c.occurrences), t + c.occurrences));
    if total == 0 {
        100.0
    } else {
        100.0 * replaced as f64 / total as f64
    }
}

pub fn compute_missed(records: &[PairRecord]) -> f64 {
    100.0 - compute_coverage(records)
}

/// Pairs in which each (normalized) surrogate string was chosen.
fn surrogate_pairs(records: &[PairRecord]) -> BTreeMap<String, BTreeSet<&str>> {
    let mut out: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        for c in &r.choices {
            out.entry(normalize_surface(&c.surrogate)).or_default().insert(r.pair_id.as_str());
        }
    }
    out
}

/// 100 × distinct surrogates chosen in two or more pairs / distinct
/// surrogates chosen.
pub fn compute_reuse(records: &[PairRecord]) -> f64 {
    let pairs = surrogate_pairs(records);
    if pairs.is_empty() {
        return 0.0;
    }
    100.0 * pairs.values().filter(|p| p.len() >= 2).count() as f64 / pairs.len() as f64
}

/// 100 × distinct surrogates chosen / choice events.
pub fn compute_unique_surrogates(records: &[PairRecord]) -> f64 {
    let events: usize = records.iter().map(|r| r.choices.len()).sum();
    if events == 0 {
        return 100.0;
    }
    100.0 * surrogate_pairs(records).len() as f64 / events as f64
}

/// 100 × entities seen in two or more pairs whose surrogate repeats across
/// those pairs / entities seen in two or more pairs.
pub fn compute_linkability(records: &[PairRecord]) -> f64 {
    let mut per_entity: BTreeMap<&EntityKey, Vec<String>> = BTreeMap::new();
    for r in records {
        for c in &r.choices {
            per_entity.entry(&c.entity).or_default().push(normalize_surface(&c.surrogate));
        }
    }
    let repeated: Vec<&Vec<String>> = per_entity.values().filter(|v| v.len() >= 2).collect();
    if repeated.is_empty() {
        return 0.0;
    }
    let linked = repeated
        .iter()
        .filter(|v| v.iter().collect::<BTreeSet<_>>().len() < v.len())
        .count();
    100.0 * linked as f64 / repeated.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: Strategy,
    pub coverage_pct: f64,
    pub reuse_pct: f64,
    pub unique_surrogate_pct: f64,
    pub linkability_pct: f64,
    pub missed_pct: f64,
    pub restoration_accuracy: f64,
    pub n_queries: usize,
    /// Entity-in-pair events.
    pub n_entities: usize,
}

impl MetricsReport {
    pub fn from_records(strategy: Strategy, records: &[PairRecord]) -> Self {
        let expected: usize = records.iter().map(|r| r.expected_restored).sum();
        let restored: usize = records.iter().map(|r| r.restored).sum();
        Self {
            strategy,
            coverage_pct: compute_coverage(records),
            reuse_pct: compute_reuse(records),
            unique_surrogate_pct: compute_unique_surrogates(records),
            linkability_pct: compute_linkability(records),
            missed_pct: compute_missed(records),
            restoration_accuracy: if expected == 0 { 1.0 } else { restored as f64 / expected as f64 },
            n_queries: records.len(),
            n_entities: records.iter().map(|r| r.choices.len()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub seed: u64,
    pub k: usize,
    pub rows: Vec<MetricsReport>,
}

impl HarnessReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>8} {:>8} {:>10} {:>8} {:>8} {:>9}",
            "Method", "Cov.", "Reuse", "Uniq. Sur", "Link.", "Missed", "Restore"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<18} {:>8.2} {:>8.2} {:>10.2} {:>8.2} {:>8.2} {:>9.4}",
                r.strategy.as_str(),
                r.coverage_pct,
                r.reuse_pct,
                r.unique_surrogate_pct,
                r.linkability_pct,
                r.missed_pct,
                r.restoration_accuracy
            );
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("harness fixture {path} not found; generate it with `shroud harness-gen --out {path}`")]
    FixtureMissing { path: String },
    #[error("harness fixture {path} is malformed: {message}")]
    FixtureMalformed { path: String, message: String },
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

pub fn load_fixture(path: &Path) -> Result<HarnessFixture, HarnessError> {
    let shown = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|_| HarnessError::FixtureMissing { path: shown.clone() })?;
    serde_json::from_str(&raw).map_err(|e| HarnessError::FixtureMalformed { path: shown, message: e.to_string() })
}

/// One prompt the harness sent, tagged with the pair that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub pair_id: String,
    pub prompt: String,
}

#[derive(Clone)]
pub struct HarnessConfig {
    pub seed: u64,
    pub mapping: MappingConfig,
    /// Every prompt sent to the provider is appended here.
    pub audit_log: Arc<Mutex<Vec<AuditRecord>>>,
}

impl HarnessConfig {
    pub fn new(seed: u64) -> Self {
        Self { seed, mapping: MappingConfig::default(), audit_log: Arc::default() }
    }
}

fn pair_seed(seed: u64, strategy: Strategy, index: usize) -> u64 {
    let tag = match strategy {
        Strategy::SessionMapping => 0x51,
        Strategy::FixedDictionary => 0xF1,
    };
    seed ^ (tag << 56) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One surrogate per entity over the whole fixture, built in pair order.
fn fixed_dictionary(
    fixture: &HarnessFixture,
    config: &HarnessConfig,
    generator: &dyn SurrogateGenerator,
) -> Result<BTreeMap<EntityKey, String>, MappingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(config.seed, Strategy::FixedDictionary, usize::MAX));
    let mut dict = BTreeMap::new();
    let all_texts: Vec<&str> = fixture
        .pairs
        .iter()
        .flat_map(|p| std::iter::once(p.question.as_str()).chain(p.chunks.iter().map(|c| c.text.as_str())))
        .collect();
    let spans: Vec<_> = fixture.pairs.iter().flat_map(FixturePair::spans).collect();
    let total = collect_total(spans.iter());
    for set in generate_sets(&total, &all_texts, &config.mapping, generator, None, &mut rng)? {
        dict.insert(set.key, set.candidates[0].clone());
    }
    Ok(dict)
}

fn run_pair(
    pair: &FixturePair,
    strategy: Strategy,
    index: usize,
    dictionary: &BTreeMap<EntityKey, String>,
    config: &HarnessConfig,
    generator: &dyn SurrogateGenerator,
    provider: &dyn AnswerProvider,
) -> Result<PairRecord, HarnessError> {
    let spans = pair.spans();
    let total = collect_total(spans.iter());
    let chunks = pair.chunks();
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(config.seed, strategy, index));
    let sets: Vec<SurrogateSet> = match strategy {
        Strategy::SessionMapping => {
            let mut reserved: Vec<&str> = vec![pair.question.as_str()];
            reserved.extend(chunks.iter().map(|c| c.text.as_str()));
            generate_sets(&total, &reserved, &config.mapping, generator, None, &mut rng)?
        }
        Strategy::FixedDictionary => total
            .keys()
            .map(|k| SurrogateSet { key: k.clone(), entity_type: k.entity_type, candidates: vec![dictionary[k].clone()] })
            .collect(),
    };
    let mut session = SessionMapping::open(format!("{}-{}", strategy.as_str(), pair.id), sets, &originals_of(&total), &mut rng);

    let payload = anonymize(&pair.question, &chunks, &total, &session).ok();
    let texts: Vec<String> = match &payload {
        Some(p) => p.texts().map(str::to_string).collect(),
        // nothing leaves the premises; every occurrence counts as missed
        None => std::iter::once(pair.question.clone()).chain(chunks.iter().map(|c| c.text.clone())).collect(),
    };
    let answer = payload
        .as_ref()
        .and_then(|p| GenerationRequest::from_payload(p, QueryType::Simple, provider.tag()).ok())
        .and_then(|request| {
            config.audit_log.lock().expect("audit log poisoned").push(AuditRecord {
                pair_id: pair.id.clone(),
                prompt: format!("{}\n{}", request.system_prompt(), request.user_prompt()),
            });
            provider.generate(&request).ok()
        });

    let mut choices = Vec::with_capacity(total.len());
    for (key, key_spans) in total.iter() {
        let mut surfaces: Vec<&str> = key_spans.iter().map(|s| s.surface.as_str()).collect();
        surfaces.sort_unstable();
        surfaces.dedup();
        let remaining: usize = surfaces.iter().map(|s| texts.iter().map(|t| find_token_bounded(t, s).len()).sum::<usize>()).sum();
        let occurrences = key_spans.len();
        choices.push(EntityChoice {
            entity: key.clone(),
            surrogate: session.chosen(key)?.to_string(),
            occurrences,
            replaced: occurrences.saturating_sub(remaining),
        });
    }

    let expected: Vec<String> = total.keys().map(|k| total.original_surface(k).unwrap_or(&k.surface).to_string()).collect();
    let restored = match answer.map(|a| deanonymize(&a, &session, &RuleDetector::new())) {
        Some(Ok(answer_pair)) => expected.iter().filter(|e| !find_token_bounded(&answer_pair.recovered, e).is_empty()).count(),
        _ => 0,
    };
    session.close();
    Ok(PairRecord { pair_id: pair.id.clone(), choices, expected_restored: expected.len(), restored })
}

/// Runs every strategy over the fixture with the mock provider.
pub fn run_harness(
    fixture: &HarnessFixture,
    strategies: &[Strategy],
    config: &HarnessConfig,
) -> Result<HarnessReport, HarnessError> {
    let generator = WordlistGenerator;
    let provider = MockProvider::echo();
    let mut rows = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let dictionary = match strategy {
            Strategy::FixedDictionary => fixed_dictionary(fixture, config, &generator)?,
            Strategy::SessionMapping => BTreeMap::new(),
        };
        let records = fixture
            .pairs
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_pair(p, strategy, i, &dictionary, config, &generator, &provider))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(MetricsReport::from_records(strategy, &records));
    }
    Ok(HarnessReport { seed: config.seed, k: config.mapping.k, rows })
}

/// Every original surface in the fixture, for auditing recorded prompts.
pub fn fixture_originals(fixture: &HarnessFixture) -> Vec<String> {
    let spans: Vec<_> = fixture.pairs.iter().flat_map(FixturePair::spans).collect();
    sensitive_surfaces(&collect_total(spans.iter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::EntityType;

    fn choice(entity: &str, surrogate: &str, occurrences: usize, replaced: usize) -> EntityChoice {
        EntityChoice { entity: EntityKey::new(entity, EntityType::Organization), surrogate: surrogate.into(), occurrences, replaced }
    }

    fn record(id: &str, choices: Vec<EntityChoice>) -> PairRecord {
        PairRecord { pair_id: id.into(), choices, expected_restored: 0, restored: 0 }
    }

    #[test]
    fn coverage_arithmetic() {
        let r = vec![record("p", vec![choice("a", "x", 18, 17)])];
        assert!((compute_coverage(&r) - 94.444_444).abs() < 1e-4);
        assert!((compute_missed(&r) - 5.555_556).abs() < 1e-4);
        assert_eq!(compute_coverage(&[]), 100.0);
    }

    #[test]
    fn reuse_one_of_hundred() {
        // one surrogate in two pairs, 99 other fresh ones
        let mut records = vec![record("p0", vec![choice("a", "shared", 1, 1)]), record("p1", vec![choice("a", "shared", 1, 1)])];
        for i in 0..99 {
            records.push(record(&format!("q{i}"), vec![choice(&format!("e{i}"), &format!("fresh{i}"), 1, 1)]));
        }
        assert!((compute_reuse(&records) - 1.0).abs() < 1e-12);
        let fresh: Vec<_> = (0..5).map(|i| record(&format!("p{i}"), vec![choice("a", &format!("s{i}"), 1, 1)])).collect();
        assert_eq!(compute_reuse(&fresh), 0.0);
        assert_eq!(compute_unique_surrogates(&fresh), 100.0);
    }

    #[test]
    fn unique_and_linkability_for_a_fixed_mapping() {
        let same: Vec<_> = (0..5).map(|i| record(&format!("p{i}"), vec![choice("a", "same", 1, 1)])).collect();
        assert_eq!(compute_unique_surrogates(&same), 20.0);
        assert_eq!(compute_linkability(&same), 100.0);
        let differ = vec![record("p0", vec![choice("a", "x", 1, 1)]), record("p1", vec![choice("a", "y", 1, 1)])];
        assert_eq!(compute_linkability(&differ), 0.0);
        let single = vec![record("p0", vec![choice("a", "x", 1, 1)])];
        assert_eq!(compute_linkability(&single), 0.0);
    }

    #[test]
    fn empty_strategy_list_gives_empty_report() {
        let fx = crate::synth::harness_fixture(1, crate::synth::HarnessShape { pairs: 2, ..Default::default() });
        let report = run_harness(&fx, &[], &HarnessConfig::new(1)).unwrap();
        assert!(report.rows.is_empty());
    }

    #[test]
    fn missing_fixture_explains_how_to_generate() {
        let err = load_fixture(Path::new("/nonexistent/harness.json")).unwrap_err();
        assert!(err.to_string().contains("harness-gen"));
    }
}

