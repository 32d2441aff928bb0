//! One-to-many surrogate sets and the ephemeral per-session mapping.
//!
//! For every entity a [`SurrogateSet`] of `k` candidates is generated. A
//! session then samples one candidate per entity uniformly at random as the
//! forward map, while the reverse map resolves *every* candidate back to the
//! original. Closing a session erases both maps and the sets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates;
use crate::detection::{EntityKey, EntityTotal, EntityType};
use crate::surrogates::SurrogateGenerator;
use crate::text::{find_token_bounded, normalize_mention, normalized_edit_distance};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_DELTA: f64 = 0.3;
pub const DEFAULT_RETRY_BUDGET: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("invalid mapping config: {0}")]
    InvalidConfig(String),
    #[error("could not build a valid surrogate set for {entity} ({accepted} of {k} candidates after {rounds} rounds)")]
    RetryBudgetExhausted { entity: String, accepted: usize, k: usize, rounds: usize },
    #[error("surrogate generator failed for {entity}: {message}")]
    Generator { entity: String, message: String },
    #[error("session is closed")]
    SessionClosed,
    #[error("surrogate not found: {0:?}")]
    NotFound(String),
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("session not found: {0}")]
    UnknownSession(String),
}

/// Optional numeric similarity check applied on top of the categorical
/// type/shape check.
pub trait SimilarityCheck: Send + Sync {
    /// Similarity in `[0, 1]` between an original and a candidate.
    fn similarity(&self, entity_type: EntityType, original: &str, candidate: &str) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    /// Candidates per entity.
    pub k: usize,
    /// Minimum similarity between original and candidate. `None` enforces
    /// similarity categorically (same type and shape).
    pub theta: Option<f64>,
    /// Minimum pairwise normalized edit distance between candidates.
    pub delta: f64,
    pub rng_seed: Option<u64>,
    /// Extra generation rounds allowed per entity after the first.
    pub retry_budget: usize,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, theta: None, delta: DEFAULT_DELTA, rng_seed: None, retry_budget: DEFAULT_RETRY_BUDGET }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<(), MappingError> {
        if self.k < 2 {
            return Err(MappingError::InvalidConfig(format!("k must be at least 2, got {}", self.k)));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(MappingError::InvalidConfig(format!("delta must be in [0, 1), got {}", self.delta)));
        }
        if let Some(t) = self.theta {
            if !(0.0..=1.0).contains(&t) {
                return Err(MappingError::InvalidConfig(format!("theta must be in [0, 1], got {t}")));
            }
        }
        Ok(())
    }

    /// RNG for one session: seeded when `rng_seed` is set, otherwise from OS
    /// entropy.
    pub fn rng(&self) -> ChaCha8Rng {
        match self.rng_seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_os_rng(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateSet {
    pub key: EntityKey,
    pub entity_type: EntityType,
    pub candidates: Vec<String>,
}

/// True if `candidate` has the same shape as entities of `ty`.
pub fn shape_matches(ty: EntityType, candidate: &str) -> bool {
    let words: Vec<&str> = candidate.split_whitespace().collect();
    let capitalized = |w: &&str| w.chars().next().is_some_and(|c| c.is_uppercase());
    match ty {
        EntityType::Date => dates::parse_date(candidate).is_some(),
        EntityType::Money => candidate.chars().any(|c| c.is_ascii_digit()),
        EntityType::Person => (2..=4).contains(&words.len()) && words.iter().all(capitalized),
        EntityType::Organization | EntityType::Location => {
            !words.is_empty() && words.first().is_some_and(capitalized)
        }
        EntityType::LawReference | EntityType::Other => candidate.chars().any(char::is_alphanumeric),
    }
}

/// Everything a candidate must avoid colliding with.
struct Constraints<'a> {
    originals: Vec<String>,
    reserved_texts: &'a [&'a str],
    taken: HashSet<String>,
}

impl Constraints<'_> {
    fn admits(&self, original_surface: &str, candidate: &str) -> bool {
        let norm = normalize_mention(candidate);
        if norm.is_empty() || self.taken.contains(&norm) {
            return false;
        }
        // no candidate equals, contains, or is contained by an original mention
        for o in &self.originals {
            if *o == norm || !find_token_bounded(candidate, o).is_empty() || !find_token_bounded(o, &norm).is_empty() {
                return false;
            }
        }
        if normalize_mention(original_surface) == norm {
            return false;
        }
        // a candidate that already occurs in the texts could not be restored unambiguously
        self.reserved_texts.iter().all(|t| find_token_bounded(t, candidate.trim_end_matches('.')).is_empty())
    }
}

/// Builds one surrogate set per entity, validating every candidate.
///
/// A candidate is accepted only if it has the entity's shape, passes the
/// optional similarity check, differs from every original mention, does not
/// occur in `reserved_texts` (the query and chunk texts being anonymized),
/// is not already a candidate of any set, and is at least `delta` apart from
/// the set's other candidates.
pub fn generate_sets(
    entities: &EntityTotal,
    reserved_texts: &[&str],
    config: &MappingConfig,
    generator: &dyn SurrogateGenerator,
    similarity: Option<&dyn SimilarityCheck>,
    rng: &mut dyn RngCore,
) -> Result<Vec<SurrogateSet>, MappingError> {
    let none = SessionMapping::empty("");
    generate_sets_for(entities, reserved_texts, &none, config, generator, similarity, rng)
}

/// As [`generate_sets`] for a session that may already hold sets: entities
/// with a set are skipped, and new candidates must differ from every
/// candidate already in `session`.
pub fn generate_sets_for(
    entities: &EntityTotal,
    reserved_texts: &[&str],
    session: &SessionMapping,
    config: &MappingConfig,
    generator: &dyn SurrogateGenerator,
    similarity: Option<&dyn SimilarityCheck>,
    rng: &mut dyn RngCore,
) -> Result<Vec<SurrogateSet>, MappingError> {
    config.validate()?;
    let mut originals: Vec<String> = entities.surfaces().iter().map(|s| normalize_mention(s)).collect();
    originals.sort();
    originals.dedup();
    let mut constraints = Constraints { originals, reserved_texts, taken: session.candidate_keys() };
    let mut sets = Vec::with_capacity(entities.len());
    for key in entities.keys().filter(|k| !session.sets.contains_key(k)) {
        let original = entities.original_surface(key).unwrap_or(&key.surface);
        let mut accepted: Vec<String> = Vec::with_capacity(config.k);
        let mut rounds = 0;
        while accepted.len() < config.k {
            if rounds > config.retry_budget {
                return Err(MappingError::RetryBudgetExhausted {
                    entity: key.to_string(),
                    accepted: accepted.len(),
                    k: config.k,
                    rounds,
                });
            }
            rounds += 1;
            let proposals = generator
                .propose(key, original, config.k - accepted.len(), rng)
                .map_err(|e| MappingError::Generator { entity: key.to_string(), message: e.0 })?;
            for candidate in proposals {
                let candidate = candidate.trim().to_string();
                if accepted.len() == config.k
                    || !shape_matches(key.entity_type, &candidate)
                    || !constraints.admits(original, &candidate)
                    || accepted.iter().any(|a| normalized_edit_distance(a, &candidate) < config.delta)
                {
                    continue;
                }
                if let (Some(theta), Some(sim)) = (config.theta, similarity) {
                    if sim.similarity(key.entity_type, original, &candidate) < theta {
                        continue;
                    }
                }
                constraints.taken.insert(normalize_mention(&candidate));
                accepted.push(candidate);
            }
        }
        sets.push(SurrogateSet { key: key.clone(), entity_type: key.entity_type, candidates: accepted });
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReverseEntry {
    pub key: EntityKey,
    pub original: String,
}

/// Forward and reverse maps of one session.
#[derive(Debug, Clone, Serialize)]
pub struct SessionMapping {
    session_id: String,
    forward: BTreeMap<EntityKey, String>,
    reverse: HashMap<String, ReverseEntry>,
    sets: BTreeMap<EntityKey, SurrogateSet>,
    state: SessionState,
    created_at: DateTime<Utc>,
}

/// Random 128-bit session identifier.
pub fn new_session_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

impl SessionMapping {
    /// An open session with no entities yet.
    pub fn empty(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            forward: BTreeMap::new(),
            reverse: HashMap::new(),
            sets: BTreeMap::new(),
            state: SessionState::Open,
            created_at: Utc::now(),
        }
    }

    /// Opens a session, drawing each entity's surrogate uniformly from its set.
    /// `originals` supplies the surface restored for each key.
    pub fn open(
        session_id: impl Into<String>,
        sets: Vec<SurrogateSet>,
        originals: &BTreeMap<EntityKey, String>,
        rng: &mut dyn RngCore,
    ) -> Self {
        let mut s = Self::empty(session_id);
        s.add_sets(sets, originals, rng).expect("fresh session is open");
        s
    }

    /// Adds sets for entities first seen in a follow-up query. Entities that
    /// already have a set keep their set and current choice.
    pub fn add_sets(
        &mut self,
        sets: Vec<SurrogateSet>,
        originals: &BTreeMap<EntityKey, String>,
        rng: &mut dyn RngCore,
    ) -> Result<(), MappingError> {
        self.ensure_open()?;
        for set in sets {
            if self.sets.contains_key(&set.key) {
                continue;
            }
            let original = originals.get(&set.key).cloned().unwrap_or_else(|| set.key.surface.clone());
            for c in &set.candidates {
                self.reverse.insert(normalize_mention(c), ReverseEntry { key: set.key.clone(), original: original.clone() });
            }
            let chosen = set.candidates.choose(rng).expect("surrogate sets are non-empty").clone();
            self.forward.insert(set.key.clone(), chosen);
            self.sets.insert(set.key.clone(), set);
        }
        Ok(())
    }

    fn ensure_open(&self) -> Result<(), MappingError> {
        match self.state {
            SessionState::Open => Ok(()),
            SessionState::Closed => Err(MappingError::SessionClosed),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn is_open(&self) -> bool {
        self.state == SessionState::Open
    }

    /// The chosen surrogate for `key`.
    pub fn chosen(&self, key: &EntityKey) -> Result<&str, MappingError> {
        self.ensure_open()?;
        self.forward.get(key).map(String::as_str).ok_or_else(|| MappingError::UnknownEntity(key.to_string()))
    }

    pub fn forward(&self) -> Result<&BTreeMap<EntityKey, String>, MappingError> {
        self.ensure_open()?;
        Ok(&self.forward)
    }

    pub fn sets(&self) -> Result<impl Iterator<Item = &SurrogateSet>, MappingError> {
        self.ensure_open()?;
        Ok(self.sets.values())
    }

    pub fn set(&self, key: &EntityKey) -> Result<&SurrogateSet, MappingError> {
        self.ensure_open()?;
        self.sets.get(key).ok_or_else(|| MappingError::UnknownEntity(key.to_string()))
    }

    /// Normalized forms of every candidate in the session.
    pub fn candidate_keys(&self) -> HashSet<String> {
        self.reverse.keys().cloned().collect()
    }

    /// Resolves any candidate of any set (after case, possessive and
    /// punctuation normalization) to the original surface.
    pub fn reverse_lookup(&self, surrogate: &str) -> Result<&str, MappingError> {
        self.reverse_entry(surrogate).map(|e| e.original.as_str())
    }

    pub fn reverse_entry(&self, surrogate: &str) -> Result<&ReverseEntry, MappingError> {
        self.ensure_open()?;
        self.reverse.get(&normalize_mention(surrogate)).ok_or_else(|| MappingError::NotFound(surrogate.to_string()))
    }

    /// All candidates with their entries, longest first (ties by text).
    pub fn candidates_longest_first(&self) -> Result<Vec<(&str, &ReverseEntry)>, MappingError> {
        self.ensure_open()?;
        let mut out: Vec<(&str, &ReverseEntry)> = self
            .sets
            .values()
            .flat_map(|s| s.candidates.iter())
            .map(|c| (c.as_str(), &self.reverse[&normalize_mention(c)]))
            .collect();
        out.sort_by(|a, b| b.0.chars().count().cmp(&a.0.chars().count()).then(a.0.cmp(b.0)));
        Ok(out)
    }

    /// Resamples the chosen surrogate for `key` uniformly from its set.
    pub fn reroll(&mut self, key: &EntityKey, rng: &mut dyn RngCore) -> Result<&str, MappingError> {
        self.ensure_open()?;
        let set = self.sets.get(key).ok_or_else(|| MappingError::UnknownEntity(key.to_string()))?;
        let chosen = set.candidates.choose(rng).expect("surrogate sets are non-empty").clone();
        let slot = self.forward.get_mut(key).expect("forward covers every set");
        *slot = chosen;
        Ok(slot)
    }

    /// Number of retained entries: forward + reverse + set candidates.
    pub fn retained(&self) -> usize {
        self.forward.len() + self.reverse.len() + self.sets.values().map(|s| s.candidates.len()).sum::<usize>()
    }

    /// Erases all maps and sets. Idempotent.
    pub fn close(&mut self) {
        self.forward = BTreeMap::new();
        self.reverse = HashMap::new();
        self.sets = BTreeMap::new();
        self.state = SessionState::Closed;
    }
}

impl Drop for SessionMapping {
    fn drop(&mut self) {
        self.close();
    }
}

/// Opens a session from `sets`, honoring `config.rng_seed` when set.
pub fn open_session(
    sets: Vec<SurrogateSet>,
    originals: &BTreeMap<EntityKey, String>,
    config: &MappingConfig,
) -> SessionMapping {
    let mut rng = config.rng();
    SessionMapping::open(new_session_id(), sets, originals, &mut rng)
}

/// Originals keyed by entity, for [`SessionMapping::open`].
pub fn originals_of(entities: &EntityTotal) -> BTreeMap<EntityKey, String> {
    entities
        .keys()
        .map(|k| (k.clone(), entities.original_surface(k).unwrap_or(&k.surface).to_string()))
        .collect()
}

/// A value the [`SessionStore`] can erase and account for.
pub trait Ephemeral: Send {
    /// Entries still held in memory.
    fn retained(&self) -> usize;
    fn close(&mut self);
}

impl Ephemeral for SessionMapping {
    fn retained(&self) -> usize {
        SessionMapping::retained(self)
    }
    fn close(&mut self) {
        SessionMapping::close(self)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("session {0} is closed")]
    Closed(String),
}

struct Slot<T> {
    value: Arc<Mutex<T>>,
    last_used: Mutex<Instant>,
}

/// In-memory store of open sessions. Independent sessions proceed
/// concurrently; each session's value sits behind its own mutex. Closed ids
/// are remembered (without data) so callers can tell "closed" from "unknown".
pub struct SessionStore<T> {
    open: RwLock<HashMap<String, Slot<T>>>,
    closed: RwLock<HashSet<String>>,
}

impl<T> Default for SessionStore<T> {
    fn default() -> Self {
        Self { open: RwLock::default(), closed: RwLock::default() }
    }
}

impl<T: Ephemeral> SessionStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, id: impl Into<String>, value: T) -> Arc<Mutex<T>> {
        let value = Arc::new(Mutex::new(value));
        let slot = Slot { value: Arc::clone(&value), last_used: Mutex::new(Instant::now()) };
        self.open.write().expect("store poisoned").insert(id.into(), slot);
        value
    }

    /// The session's value, marking it as used now.
    pub fn get(&self, id: &str) -> Result<Arc<Mutex<T>>, StoreError> {
        let open = self.open.read().expect("store poisoned");
        match open.get(id) {
            Some(slot) => {
                *slot.last_used.lock().expect("slot poisoned") = Instant::now();
                Ok(Arc::clone(&slot.value))
            }
            None if self.closed.read().expect("store poisoned").contains(id) => Err(StoreError::Closed(id.to_string())),
            None => Err(StoreError::NotFound(id.to_string())),
        }
    }

    /// Closes and removes a session.
    pub fn close(&self, id: &str) -> Result<(), StoreError> {
        let slot = self.open.write().expect("store poisoned").remove(id);
        match slot {
            Some(slot) => {
                slot.value.lock().unwrap_or_else(|p| p.into_inner()).close();
                self.closed.write().expect("store poisoned").insert(id.to_string());
                Ok(())
            }
            None if self.closed.read().expect("store poisoned").contains(id) => Err(StoreError::Closed(id.to_string())),
            None => Err(StoreError::NotFound(id.to_string())),
        }
    }

    /// Closes every session idle for longer than `ttl`; returns how many.
    pub fn purge_idle(&self, ttl: Duration) -> usize {
        let now = Instant::now();
        let expired: Vec<String> = self
            .open
            .read()
            .expect("store poisoned")
            .iter()
            .filter(|(_, s)| now.duration_since(*s.last_used.lock().expect("slot poisoned")) > ttl)
            .map(|(id, _)| id.clone())
            .collect();
        expired.iter().filter(|id| self.close(id).is_ok()).count()
    }

    pub fn open_count(&self) -> usize {
        self.open.read().expect("store poisoned").len()
    }

    /// Total entries retained by open sessions. Sessions busy in another
    /// thread are counted after they are released.
    pub fn retained_mappings(&self) -> usize {
        self.open
            .read()
            .expect("store poisoned")
            .values()
            .map(|s| s.value.lock().unwrap_or_else(|p| p.into_inner()).retained())
            .sum()
    }

    pub fn is_closed(&self, id: &str) -> bool {
        self.closed.read().expect("store poisoned").contains(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{collect_total, EntitySpan, SpanSource};
    use crate::surrogates::WordlistGenerator;

    fn total(entities: &[(&str, EntityType)]) -> EntityTotal {
        let spans: Vec<EntitySpan> = entities
            .iter()
            .map(|(s, t)| EntitySpan {
                surface: s.to_string(),
                entity_type: *t,
                start: 0,
                end: s.len(),
                source: SpanSource::Chunk { doc_id: s.to_string(), chunk_id: 0 },
            })
            .collect();
        collect_total(spans.iter())
    }

    fn fixed_sets() -> (Vec<SurrogateSet>, BTreeMap<EntityKey, String>) {
        let key = EntityKey::new("Acme Corp", EntityType::Organization);
        let set = SurrogateSet {
            key: key.clone(),
            entity_type: EntityType::Organization,
            candidates: ["Orion Holdings", "Vega Industries", "Halcyon Partners", "Cobalt Ridge Labs", "Sable Ventures"]
                .map(String::from)
                .to_vec(),
        };
        (vec![set], BTreeMap::from([(key, "Acme Corp".to_string())]))
    }

    #[test]
    fn k_below_two_is_rejected() {
        let cfg = MappingConfig { k: 1, ..MappingConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = generate_sets(&total(&[("Acme Corp", EntityType::Organization)]), &[], &cfg, &WordlistGenerator, None, &mut rng)
            .unwrap_err();
        assert!(matches!(err, MappingError::InvalidConfig(_)));
        assert!(MappingConfig { delta: 1.0, ..MappingConfig::default() }.validate().is_err());
    }

    #[test]
    fn sets_satisfy_constraints() {
        let cfg = MappingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ents = total(&[("Acme Corp", EntityType::Organization), ("Beta LLC", EntityType::Organization)]);
        let sets = generate_sets(&ents, &[], &cfg, &WordlistGenerator, None, &mut rng).unwrap();
        assert_eq!(sets.len(), 2);
        for s in &sets {
            assert_eq!(s.candidates.len(), 5);
            for (i, a) in s.candidates.iter().enumerate() {
                assert!(!a.eq_ignore_ascii_case("Acme Corp") && !a.eq_ignore_ascii_case("Beta LLC"));
                for b in &s.candidates[i + 1..] {
                    assert!(normalized_edit_distance(a, b) >= cfg.delta, "{a} vs {b}");
                }
            }
        }
        let a: HashSet<_> = sets[0].candidates.iter().collect();
        assert!(sets[1].candidates.iter().all(|c| !a.contains(c)));
    }

    struct Stuck;
    impl SurrogateGenerator for Stuck {
        fn propose(
            &self,
            _: &EntityKey,
            _: &str,
            count: usize,
            _: &mut dyn RngCore,
        ) -> Result<Vec<String>, crate::surrogates::GeneratorError> {
            Ok(vec!["Same Name Inc.".to_string(); count])
        }
    }

    #[test]
    fn exhausted_budget_names_the_entity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = generate_sets(
            &total(&[("Acme Corp", EntityType::Organization)]),
            &[],
            &MappingConfig::default(),
            &Stuck,
            None,
            &mut rng,
        )
        .unwrap_err();
        match err {
            MappingError::RetryBudgetExhausted { entity, accepted, k, rounds } => {
                assert_eq!(entity, "organization:acme corp");
                assert_eq!((accepted, k, rounds), (1, 5, 11));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn candidates_never_contain_originals_or_occur_in_texts() {
        struct Tricky;
        impl SurrogateGenerator for Tricky {
            fn propose(
                &self,
                _: &EntityKey,
                _: &str,
                _: usize,
                rng: &mut dyn RngCore,
            ) -> Result<Vec<String>, crate::surrogates::GeneratorError> {
                let mut v = vec!["Texas Holdings".to_string(), "Orion Holdings".to_string()];
                v.extend(WordlistGenerator.propose(&EntityKey::new("x", EntityType::Organization), "x", 5, rng)?);
                Ok(v)
            }
        }
        let ents = total(&[("Acme Corp", EntityType::Organization), ("Texas", EntityType::Location)]);
        let text = "Orion Holdings is unrelated.";
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = MappingConfig::default();
        let sets = generate_sets(&ents, &[text], &cfg, &Tricky, None, &mut rng).unwrap();
        let org = sets.iter().find(|s| s.entity_type == EntityType::Organization).unwrap();
        assert!(!org.candidates.iter().any(|c| c == "Texas Holdings" || c == "Orion Holdings"));
    }

    #[test]
    fn reverse_covers_every_candidate() {
        let (sets, originals) = fixed_sets();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SessionMapping::open("s", sets, &originals, &mut rng);
        assert_eq!(m.reverse_lookup("Orion Holdings"), Ok("Acme Corp"));
        assert_eq!(m.reverse_lookup("Vega Industries"), Ok("Acme Corp"));
        assert_eq!(m.reverse_lookup("Orion Holdings's"), Ok("Acme Corp"));
        assert_eq!(m.reverse_lookup("ORION HOLDINGS,"), Ok("Acme Corp"));
        assert!(matches!(m.reverse_lookup("Acme Corp"), Err(MappingError::NotFound(_))));
        let key = EntityKey::new("Acme Corp", EntityType::Organization);
        let chosen = m.chosen(&key).unwrap();
        assert_eq!(m.reverse_lookup(chosen), Ok("Acme Corp"));
    }

    #[test]
    fn seeded_sessions_are_reproducible() {
        let (sets, originals) = fixed_sets();
        let cfg = MappingConfig { rng_seed: Some(42), ..MappingConfig::default() };
        let a = open_session(sets.clone(), &originals, &cfg);
        let b = open_session(sets, &originals, &cfg);
        assert_eq!(a.forward().unwrap(), b.forward().unwrap());
    }

    #[test]
    fn empty_session_is_valid() {
        let m = open_session(Vec::new(), &BTreeMap::new(), &MappingConfig::default());
        assert!(m.is_open());
        assert!(m.forward().unwrap().is_empty());
        assert_eq!(m.retained(), 0);
    }

    #[test]
    fn close_erases_and_is_idempotent() {
        let (sets, originals) = fixed_sets();
        let mut m = open_session(sets, &originals, &MappingConfig::default());
        assert!(m.retained() > 0);
        m.close();
        m.close();
        assert_eq!(m.retained(), 0);
        assert_eq!(m.reverse_lookup("Orion Holdings"), Err(MappingError::SessionClosed));
        assert!(m.forward().is_err());
    }

    #[test]
    fn reroll_draws_from_the_set() {
        let (sets, originals) = fixed_sets();
        let key = sets[0].key.clone();
        let pool = sets[0].candidates.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = SessionMapping::open("s", sets, &originals, &mut rng);
        let mut seen = HashSet::new();
        for _ in 0..200 {
            seen.insert(m.reroll(&key, &mut rng).unwrap().to_string());
        }
        assert_eq!(seen.len(), pool.len());
        let unknown = EntityKey::new("nobody", EntityType::Person);
        assert!(matches!(m.reroll(&unknown, &mut rng), Err(MappingError::UnknownEntity(_))));
    }

    #[test]
    fn store_tracks_closed_ids() {
        let store: SessionStore<SessionMapping> = SessionStore::new();
        let (sets, originals) = fixed_sets();
        store.insert("a", open_session(sets, &originals, &MappingConfig::default()));
        assert!(store.retained_mappings() > 0);
        assert_eq!(store.close("a"), Ok(()));
        assert_eq!(store.close("a"), Err(StoreError::Closed("a".into())));
        assert_eq!(store.get("zzz").unwrap_err(), StoreError::NotFound("zzz".into()));
        assert_eq!(store.retained_mappings(), 0);
        assert_eq!(store.open_count(), 0);
    }

    #[test]
    fn idle_sessions_are_purged() {
        let store: SessionStore<SessionMapping> = SessionStore::new();
        let (sets, originals) = fixed_sets();
        let handle = store.insert("a", open_session(sets, &originals, &MappingConfig::default()));
        std::thread::sleep(Duration::from_millis(20));
        assert_eq!(store.purge_idle(Duration::from_millis(5)), 1);
        assert!(!handle.lock().unwrap().is_open());
        assert_eq!(store.get("a").unwrap_err(), StoreError::Closed("a".into()));
    }
}
