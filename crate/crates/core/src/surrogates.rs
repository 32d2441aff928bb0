//! Surrogate candidate generators.
//!
//! [`WordlistGenerator`] composes type-shaped names from curated word lists
//! and is fully determined by the RNG it is handed. [`PromptGenerator`] asks
//! the on-premises model for candidates instead. Either way the mapping
//! module validates every candidate before accepting it.

use chrono::{Days, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

use crate::dates::{self, DateFormat};
use crate::detection::{EntityKey, EntityType};
use crate::provider::LocalModel;

#[derive(Debug, thiserror::Error)]
#[error("surrogate generator failed: {0}")]
pub struct GeneratorError(pub String);

pub trait SurrogateGenerator: Send + Sync {
    /// Proposes `count` candidates for the entity whose first mention is
    /// `original`. Candidates may be rejected by the caller.
    fn propose(
        &self,
        key: &EntityKey,
        original: &str,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<String>, GeneratorError>;
}

const ORG_STEMS: &[&str] = &[
    "Orion", "Vega", "Halcyon", "Meridian", "Cobalt", "Sable", "Juniper", "Aurelia", "Kestrel", "Lumen", "Quill",
    "Tessera", "Altair", "Bramble", "Cinder", "Dorian", "Ember", "Fennel", "Garnet", "Helix", "Indigo", "Jasper",
    "Kinetic", "Larkspur", "Marlow", "Nimbus", "Obsidian", "Pallas", "Quarry", "Rowan", "Solace", "Tamarind", "Umber",
    "Verdant", "Wexford", "Xylo", "Yarrow", "Zephyr", "Argent", "Basalt", "Calder", "Dunmore", "Elara", "Fjord",
    "Galena", "Harrow", "Ironwood", "Jubilee", "Keystone", "Lowell", "Mistral", "Northam", "Onyx", "Pinnacle",
    "Quintess", "Redfern", "Silverline", "Thistle", "Upland", "Vireo", "Westbrook", "Yellowpine", "Zenith", "Amberly",
    "Birchwood", "Corvid", "Driftwood", "Evergale", "Foxglove", "Greywater", "Hollis", "Isola", "Jadeport", "Kingsley",
    "Lodestar", "Mossgate", "Nettlefield", "Oakhurst", "Peregrine", "Quayside", "Ravenna", "Stonemere", "Tidewell",
];

const ORG_MIDDLES: &[&str] = &[
    "Bridge", "Crest", "Field", "Stone", "Harbor", "Peak", "Forge", "Line", "River", "Point", "Gate", "Ridge", "Summit",
    "Vale", "Bay", "Crown", "Delta", "Beacon", "Anchor", "Arc", "Signal", "Vector", "Keel", "Prairie", "Canyon",
    "Meadow", "Granite", "Cedar", "Lantern", "Compass",
];

const ORG_SUFFIXES: &[&str] = &[
    "Holdings", "Industries", "Partners", "Group", "Systems", "Labs", "Ventures", "Capital", "Dynamics", "Logistics",
    "Enterprises", "Solutions", "Corp", "Inc.", "LLC", "Ltd.", "Trading", "Networks", "Works",
];

const FIRST_NAMES: &[&str] = &[
    "Avery", "Blake", "Camden", "Dana", "Elliot", "Finley", "Greer", "Harper", "Imogen", "Jonah", "Keaton", "Linnea",
    "Marlowe", "Nolan", "Oriana", "Pascal", "Quincy", "Rosalind", "Silas", "Tamsin", "Ulric", "Vivian", "Wesley",
    "Xenia", "Yusuf", "Zara", "Anders", "Beatrix", "Cyrus", "Delphine", "Emrys", "Fiona", "Gideon", "Hollis", "Ingrid",
    "Jasper", "Kiran", "Leona", "Magnus", "Nadia", "Oskar", "Priya", "Rafael", "Saoirse", "Tobias", "Ursula", "Valentin",
    "Willa", "Yara", "Zeno", "Adele", "Bastian", "Clio", "Dorian", "Esme", "Felix", "Gemma", "Hugo", "Isla", "Jude",
    "Kaia", "Lucian", "Mira", "Nico", "Ophelia", "Percy", "Rhea", "Soren", "Thea", "Umar", "Vera", "Wren", "Alma",
    "Bruno", "Cora", "Dmitri", "Elsa", "Fabian", "Greta", "Henrik", "Iris", "Joaquin", "Klara", "Leif", "Maren",
    "Nils", "Odette", "Pilar", "Quentin", "Ronan", "Selma", "Tristan", "Una", "Viggo", "Wilhelmina", "Ximena", "Yvette",
    "Zoltan", "Amaury", "Brisa", "Cosimo", "Dagny", "Eamon", "Flavia", "Gwen", "Hale", "Ilse", "Jorah", "Kestrel",
    "Lysander", "Mabel", "Niamh", "Orson", "Paloma", "Rufus", "Sigrid", "Talia", "Ulla",
];

const LAST_NAMES: &[&str] = &[
    "Ashdown", "Bellamy", "Carrow", "Dunleavy", "Ellery", "Fairbairn", "Galloway", "Hartigan", "Iverson", "Jessop",
    "Kilbride", "Lockwood", "Merriman", "Northcott", "Oakes", "Pemberton", "Quennell", "Radcliffe", "Sallow", "Thorne",
    "Underhill", "Vance", "Whitlock", "Yardley", "Ziegler", "Abernathy", "Blackwood", "Cresswell", "Darrow", "Eastwick",
    "Fenwick", "Gillespie", "Holloway", "Ingram", "Jardine", "Kettering", "Langford", "Mayhew", "Nettleton", "Orme",
    "Prescott", "Quigley", "Rutherford", "Stroud", "Tolliver", "Upton", "Vickery", "Wadsworth", "Yeats", "Zimmer",
    "Ainsley", "Brandt", "Calloway", "Delacroix", "Everhart", "Falkner", "Grimsby", "Hatherley", "Ives", "Jelinek",
    "Kovacs", "Lindqvist", "Marchetti", "Novak", "Okafor", "Petrov", "Quintero", "Rasmussen", "Sorensen", "Takahashi",
    "Ulbrich", "Varga", "Wojcik", "Xu", "Yilmaz", "Zubiri", "Alcott", "Birkett", "Coventry", "Draycott", "Esterhazy",
    "Fothergill", "Goodwin", "Hensley", "Islington", "Jolliffe", "Kingsmill", "Lovell", "Mortimer", "Nightingale",
    "Osgood", "Penhaligon", "Quarles", "Rivington", "Stanhope", "Trevelyan", "Ullswater", "Verity", "Winthrop",
    "Yelland", "Zouche", "Ardent", "Bramwell", "Chadwick", "Dexter", "Ellwood", "Farrant", "Greaves", "Hargreave",
    "Inchbald", "Jagger", "Kemble", "Larkin", "Mallory", "Norwood", "Ollerton", "Pickering", "Redgrave", "Sutcliffe",
];

const PLACE_ROOTS: &[&str] = &[
    "Alder", "Bracken", "Carra", "Dunn", "Elms", "Fal", "Glen", "Hazel", "Iver", "Juni", "Kell", "Lin", "Marsh", "Nor",
    "Ox", "Pem", "Quen", "Ross", "Stan", "Thorn", "Ul", "Vern", "Wil", "Yar", "Ash", "Birch", "Cold", "Dray", "Eller",
    "Fern", "Gold", "Holm", "Ivy", "Kings", "Lark", "Mill", "Ness", "Oak", "Pine", "Red", "Salt", "Tam", "Up", "Wick",
    "Amber", "Bell", "Clay", "Deer", "East", "Fox", "Green", "Heather", "Iron", "Knoll", "Lyn", "Moor", "Nettle",
    "Orchard", "Pebble", "Rook", "Sedge", "Tide", "Wren", "Yew", "Bram", "Cran", "Dal", "Emer", "Frost", "Gull",
];

const PLACE_TAILS: &[&str] = &[
    "ton", "ford", "field", "wood", "haven", "port", "bury", "dale", "mont", "view", "brook", "ridge", "stead", "wick",
    "mouth", "shire",
];

const PLACE_PREFIXES: &[&str] =
    &["", "", "", "Port ", "Lake ", "North ", "South ", "East ", "West ", "New ", "Fort ", "Mount "];

const LAW_SUBJECTS: &[&str] = &[
    "Data Protection", "Fair Trading", "Commercial Code", "Trade Practices", "Consumer Credit", "Securities Reform",
    "Digital Commerce", "Maritime Trade", "Competition", "Privacy Safeguards", "Export Control", "Franchise Disclosure",
];

/// Builds candidates from the word lists above.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordlistGenerator;

fn pick<'a>(rng: &mut dyn RngCore, list: &'a [&'a str]) -> &'a str {
    list.choose(rng).copied().expect("non-empty word list")
}

fn org_name(rng: &mut dyn RngCore) -> String {
    let stem = pick(rng, ORG_STEMS);
    let suffix = pick(rng, ORG_SUFFIXES);
    if rng.random_bool(0.6) {
        format!("{stem} {} {suffix}", pick(rng, ORG_MIDDLES))
    } else {
        format!("{stem} {suffix}")
    }
}

fn person_name(original: &str, rng: &mut dyn RngCore) -> String {
    let first = pick(rng, FIRST_NAMES);
    let last = pick(rng, LAST_NAMES);
    if original.split_whitespace().count() >= 3 {
        let initial = (b'A' + rng.random_range(0..26u8)) as char;
        format!("{first} {initial}. {last}")
    } else {
        format!("{first} {last}")
    }
}

fn place_name(rng: &mut dyn RngCore) -> String {
    let prefix = pick(rng, PLACE_PREFIXES);
    format!("{prefix}{}{}", pick(rng, PLACE_ROOTS), pick(rng, PLACE_TAILS))
}

fn surrogate_date(original: &str, rng: &mut dyn RngCore) -> String {
    let format = dates::parse_date(original).map_or(DateFormat::MonthDayYear, |(_, f)| f);
    let base = NaiveDate::from_ymd_opt(1995, 1, 1).expect("valid base date");
    let offset = rng.random_range(0..18_600u64);
    format.render(base.checked_add_days(Days::new(offset)).expect("date in range"))
}

/// Replaces every digit with a random digit (first digit non-zero), keeping
/// separators, currency markers and magnitude words.
fn surrogate_money(original: &str, rng: &mut dyn RngCore) -> String {
    let mut first_digit = true;
    original
        .chars()
        .map(|c| {
            if c.is_ascii_digit() {
                let d = if first_digit { rng.random_range(1..10u8) } else { rng.random_range(0..10u8) };
                first_digit = false;
                (b'0' + d) as char
            } else {
                c
            }
        })
        .collect()
}

fn law_name(rng: &mut dyn RngCore) -> String {
    let root = pick(rng, ORG_STEMS);
    let subject = pick(rng, LAW_SUBJECTS);
    format!("{root} {subject} Act of {}", rng.random_range(1950..2021))
}

/// Shape-preserving scramble for identifiers: letters stay letters of the
/// same case, digits stay digits.
fn scramble(original: &str, rng: &mut dyn RngCore) -> String {
    let out: String = original
        .chars()
        .map(|c| {
            if c.is_ascii_digit() {
                (b'0' + rng.random_range(0..10u8)) as char
            } else if c.is_ascii_uppercase() {
                (b'A' + rng.random_range(0..26u8)) as char
            } else if c.is_ascii_lowercase() {
                (b'a' + rng.random_range(0..26u8)) as char
            } else {
                c
            }
        })
        .collect();
    if out.chars().any(|c| c.is_alphanumeric()) {
        out
    } else {
        format!("Ref-{:05}", rng.random_range(0..100_000u32))
    }
}

impl SurrogateGenerator for WordlistGenerator {
    fn propose(
        &self,
        key: &EntityKey,
        original: &str,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<String>, GeneratorError> {
        Ok((0..count)
            .map(|_| match key.entity_type {
                EntityType::Organization => org_name(rng),
                EntityType::Person => person_name(original, rng),
                EntityType::Location => place_name(rng),
                EntityType::Date => surrogate_date(original, rng),
                EntityType::Money => surrogate_money(original, rng),
                EntityType::LawReference => law_name(rng),
                EntityType::Other => scramble(original, rng),
            })
            .collect())
    }
}

pub const SURROGATE_PROMPT: &str = include_str!("../assets/surrogates.v1.txt");

/// Asks the local model for candidates; expects a JSON array of strings.
pub struct PromptGenerator<M> {
    model: M,
}

impl<M: LocalModel> PromptGenerator<M> {
    pub fn new(model: M) -> Self {
        Self { model }
    }
}

impl<M: LocalModel> SurrogateGenerator for PromptGenerator<M> {
    fn propose(
        &self,
        key: &EntityKey,
        original: &str,
        count: usize,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<String>, GeneratorError> {
        let user = format!("entity_type: {}\nentity: {original}\ncount: {count}", key.entity_type);
        let raw = self.model.complete(SURROGATE_PROMPT, &user).map_err(|e| GeneratorError(e.to_string()))?;
        let start = raw.find('[').ok_or_else(|| GeneratorError("no JSON array in model output".into()))?;
        let end = raw.rfind(']').ok_or_else(|| GeneratorError("no JSON array in model output".into()))?;
        if end < start {
            return Err(GeneratorError("no JSON array in model output".into()));
        }
        serde_json::from_str::<Vec<String>>(&raw[start..=end]).map_err(|e| GeneratorError(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dates_keep_their_format() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for original in ["January 1, 2023", "2023-01-01", "01/01/2023", "1 January 2023"] {
            let (_, fmt) = dates::parse_date(original).unwrap();
            let s = surrogate_date(original, &mut rng);
            assert_eq!(dates::parse_date(&s).map(|(_, f)| f), Some(fmt), "{s}");
        }
    }

    #[test]
    fn money_keeps_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = surrogate_money("$1,500,000.00", &mut rng);
        assert_eq!(s.len(), "$1,500,000.00".len());
        assert!(s.starts_with('$') && s.contains(',') && s.contains('.'));
        assert!(!s[1..].starts_with('0'));
    }

    #[test]
    fn scramble_preserves_character_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = scramble("AB-12x", &mut rng);
        assert_eq!(s.len(), 6);
        assert!(s[..2].chars().all(|c| c.is_ascii_uppercase()));
        assert_eq!(&s[2..3], "-");
        assert!(s[3..5].chars().all(|c| c.is_ascii_digit()));
    }

    #[test]
    fn three_token_person_gets_middle_initial() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(person_name("John Q. Public", &mut rng).split_whitespace().count(), 3);
        assert_eq!(person_name("Jane Doe", &mut rng).split_whitespace().count(), 2);
    }
}
