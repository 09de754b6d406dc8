//! Seeded synthetic benchmark with three adversarial query families.
//!
//! Every item owns a fresh two-word head `h1 h2`; the query repeats the head
//! plus one word of the golden keyword. Words drawn from the junk pool never
//! occur in training pairs.
//!
//! - `noise-token`: golden `h1 h2 N a b` where `N` is junk and `a b` is a
//!   frequent tail bigram; many junk siblings `h1 h2 N' y` share the node.
//! - `common-prefix`: a frequent trap word `c` under the head opens
//!   `trap_branch_count` completions that all end in junk; the golden goes
//!   through a rarer connector `h1 h2 r d`.
//! - `ambiguous-suffix`: decoy connectors are more frequent under the head
//!   than the golden connector but lead only to junk.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, QueryRecord};

pub const NOISE_TOKEN: &str = "noise-token";
pub const COMMON_PREFIX: &str = "common-prefix";
pub const AMBIGUOUS_SUFFIX: &str = "ambiguous-suffix";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub noise_queries: usize,
    pub trap_queries: usize,
    pub fork_queries: usize,
    /// Junk siblings next to the golden junk token.
    pub noise_distractors: usize,
    /// Completions under each trap prefix.
    pub trap_branch_count: usize,
    /// Mean decoy connectors per fork item; each item draws from
    /// `fork_decoys ± fork_decoy_spread` (at least 1).
    pub fork_decoys: usize,
    pub fork_decoy_spread: usize,
    pub tail_pool: usize,
    pub connector_pool: usize,
    pub junk_pool: usize,
    pub trap_words: usize,
    /// Distinct frequent tail bigrams.
    pub tail_bigrams: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            noise_queries: 167,
            trap_queries: 167,
            fork_queries: 166,
            noise_distractors: 20,
            trap_branch_count: 50,
            fork_decoys: 5,
            fork_decoy_spread: 2,
            tail_pool: 60,
            connector_pool: 30,
            junk_pool: 400,
            trap_words: 4,
            tail_bigrams: 30,
        }
    }
}

impl SynthSpec {
    pub fn total_queries(&self) -> usize {
        self.noise_queries + self.trap_queries + self.fork_queries
    }

    /// Training pairs per head, equal across families so that no family's
    /// heads dominate the first decoding step.
    pub fn pairs_per_head(&self) -> usize {
        (2 * self.max_decoys() + 1).max(3)
    }

    fn max_decoys(&self) -> usize {
        self.fork_decoys + self.fork_decoy_spread
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Synth(m.to_string()));
        if self.total_queries() == 0 {
            return bad("at least one query is required");
        }
        if self.tail_pool < 2 || self.connector_pool == 0 || self.junk_pool == 0 || self.trap_words == 0 || self.tail_bigrams == 0 {
            return bad("word pools must be non-empty (tail_pool >= 2)");
        }
        if self.trap_queries > 0 && (self.trap_branch_count == 0 || self.trap_branch_count > self.tail_pool) {
            return bad("trap_branch_count must be in 1..=tail_pool");
        }
        if self.noise_distractors + 1 > self.junk_pool {
            return bad("noise_distractors must be below junk_pool");
        }
        if self.fork_queries > 0 && (self.fork_decoys == 0 || self.max_decoys() + 2 > self.connector_pool) {
            return bad("fork_decoys must be positive and fork_decoys + fork_decoy_spread below connector_pool - 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthData {
    /// Keyword library, deduplicated, in generation order.
    pub keywords: Vec<String>,
    /// `(query, keyword)` training pairs.
    pub train_pairs: Vec<(String, String)>,
    pub test: Vec<QueryRecord>,
}

impl SynthData {
    /// Every text line in the library and the training pairs.
    pub fn corpus_lines(&self) -> Vec<String> {
        let mut lines = self.keywords.clone();
        for (q, k) in &self.train_pairs {
            lines.push(q.clone());
            lines.push(k.clone());
        }
        lines
    }
}

struct Words {
    used: HashSet<String>,
}

impl Words {
    const ONSETS: &'static [&'static str] =
        &["b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kl", "st", "tr"];
    const VOWELS: &'static [&'static str] = &["a", "e", "i", "o", "u", "ai", "ou"];

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(Self::ONSETS.choose(rng).unwrap());
                w.push_str(Self::VOWELS.choose(rng).unwrap());
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn pool(&mut self, rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh(rng)).collect()
    }
}

struct Builder {
    keywords: Vec<String>,
    seen: HashSet<String>,
    train_pairs: Vec<(String, String)>,
    test: Vec<QueryRecord>,
}

impl Builder {
    fn keyword(&mut self, kw: String) {
        if self.seen.insert(kw.clone()) {
            self.keywords.push(kw);
        }
    }

    fn pair(&mut self, query: String, keyword: String) {
        self.train_pairs.push((query, keyword));
    }

    fn record(&mut self, query: String, golden: String, scenario: &str) {
        self.keyword(golden.clone());
        let id = self.test.len() + 1;
        self.test.push(QueryRecord {
            id,
            query,
            golden: BTreeSet::from([golden]),
            scenario: Some(scenario.to_string()),
        });
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String]) -> &'a str {
    pool.choose(rng).unwrap()
}

fn pick_other<'a>(rng: &mut ChaCha8Rng, pool: &'a [String], avoid: &str) -> &'a str {
    loop {
        let w = pick(rng, pool);
        if w != avoid {
            return w;
        }
    }
}

/// Generate a benchmark; identical `(spec, seed)` gives identical output.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthData, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Words { used: HashSet::new() };
    let tails = words.pool(&mut rng, spec.tail_pool);
    let connectors = words.pool(&mut rng, spec.connector_pool);
    let junk = words.pool(&mut rng, spec.junk_pool);
    let traps = words.pool(&mut rng, spec.trap_words);
    let bigrams: Vec<(String, String)> = (0..spec.tail_bigrams)
        .map(|_| {
            let a = pick(&mut rng, &tails).to_string();
            let b = pick_other(&mut rng, &tails, &a).to_string();
            (a, b)
        })
        .collect();
    let p = spec.pairs_per_head();
    let mut out = Builder { keywords: Vec::new(), seen: HashSet::new(), train_pairs: Vec::new(), test: Vec::new() };

    for _ in 0..spec.noise_queries {
        let head = format!("{} {}", words.fresh(&mut rng), words.fresh(&mut rng));
        let mut trained = Vec::new();
        for _ in 0..p {
            let (a, b) = bigrams.choose(&mut rng).unwrap();
            let kw = format!("{head} {a} {b}");
            out.pair(format!("{head} {}", pick(&mut rng, &tails)), kw.clone());
            if !trained.contains(&kw) {
                trained.push(kw);
            }
        }
        for kw in trained.into_iter().take(2) {
            out.keyword(kw);
        }
        let noise: Vec<&String> = junk.choose_multiple(&mut rng, spec.noise_distractors + 1).collect();
        let (a, b) = bigrams.choose(&mut rng).unwrap().clone();
        for n in &noise[1..] {
            out.keyword(format!("{head} {n} {}", pick(&mut rng, &junk)));
        }
        out.record(format!("{head} {b}"), format!("{head} {} {a} {b}", noise[0]), NOISE_TOKEN);
    }

    for _ in 0..spec.trap_queries {
        let head = format!("{} {}", words.fresh(&mut rng), words.fresh(&mut rng));
        let trap = pick(&mut rng, &traps).to_string();
        let conn = pick(&mut rng, &connectors).to_string();
        let trained_tail = pick(&mut rng, &tails).to_string();
        let d = pick_other(&mut rng, &tails, &trained_tail).to_string();
        let mut branch: Vec<String> = Vec::new();
        for _ in 0..p - 2 {
            let x = pick(&mut rng, &tails).to_string();
            out.pair(format!("{head} {}", pick(&mut rng, &tails)), format!("{head} {trap} {x}"));
            if !branch.contains(&x) && branch.len() < spec.trap_branch_count {
                branch.push(x);
            }
        }
        for _ in 0..2 {
            out.pair(format!("{head} {}", pick(&mut rng, &tails)), format!("{head} {conn} {trained_tail}"));
        }
        let mut rest: Vec<&String> = tails.iter().filter(|t| !branch.contains(t)).collect();
        rest.shuffle(&mut rng);
        let fill = spec.trap_branch_count - branch.len();
        branch.extend(rest.into_iter().take(fill).cloned());
        for x in &branch {
            out.keyword(format!("{head} {trap} {x} {} {}", pick(&mut rng, &junk), pick(&mut rng, &junk)));
        }
        out.record(format!("{head} {d}"), format!("{head} {conn} {d}"), COMMON_PREFIX);
    }

    for _ in 0..spec.fork_queries {
        let head = format!("{} {}", words.fresh(&mut rng), words.fresh(&mut rng));
        let lo = spec.fork_decoys.saturating_sub(spec.fork_decoy_spread).max(1);
        let decoys = rng.random_range(lo..=spec.max_decoys());
        let conns: Vec<&String> = connectors.choose_multiple(&mut rng, decoys + 2).collect();
        let d = pick(&mut rng, &tails).to_string();
        for c in &conns[2..] {
            for _ in 0..2 {
                out.pair(format!("{head} {}", pick(&mut rng, &tails)), format!("{head} {c} {}", pick(&mut rng, &tails)));
            }
            out.keyword(format!("{head} {c} {}", pick(&mut rng, &junk)));
        }
        // golden connector: one pair, below every decoy; a connector outside
        // the library absorbs the rest so every head has `p` pairs
        let golden_conn = conns[0];
        let t = pick_other(&mut rng, &tails, &d);
        out.pair(format!("{head} {}", pick(&mut rng, &tails)), format!("{head} {golden_conn} {t}"));
        for _ in 0..p - 2 * decoys - 1 {
            out.pair(format!("{head} {}", pick(&mut rng, &tails)), format!("{head} {} {}", conns[1], pick(&mut rng, &tails)));
        }
        out.record(format!("{head} {d}"), format!("{head} {golden_conn} {d}"), AMBIGUOUS_SUFFIX);
    }

    out.train_pairs.shuffle(&mut rng);
    Ok(SynthData { keywords: out.keywords, train_pairs: out.train_pairs, test: out.test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { noise_queries: 5, trap_queries: 5, fork_queries: 5, ..Default::default() }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(generate(&small(), 7).unwrap(), generate(&small(), 7).unwrap());
        assert_ne!(generate(&small(), 7).unwrap(), generate(&small(), 8).unwrap());
    }

    #[test]
    fn zero_queries_rejected() {
        let spec = SynthSpec { noise_queries: 0, trap_queries: 0, fork_queries: 0, ..Default::default() };
        assert!(matches!(generate(&spec, 1), Err(EvalError::Synth(_))));
    }

    #[test]
    fn family_invariants() {
        let spec = small();
        let data = generate(&spec, 3).unwrap();
        assert_eq!(data.test.len(), 15);
        let lib: HashSet<&str> = data.keywords.iter().map(String::as_str).collect();
        let mut trained: HashSet<&str> = HashSet::new();
        for (q, k) in &data.train_pairs {
            trained.extend(q.split(' '));
            trained.extend(k.split(' '));
        }
        for r in &data.test {
            let golden = r.golden.iter().next().unwrap();
            assert!(lib.contains(golden.as_str()));
            let unseen = golden.split(' ').filter(|w| !trained.contains(w)).count();
            match r.scenario.as_deref().unwrap() {
                NOISE_TOKEN => assert_eq!(unseen, 1, "{golden}"),
                _ => assert_eq!(unseen, 0, "{golden}"),
            }
        }
        // each trap prefix has trap_branch_count completions, none golden
        for r in data.test.iter().filter(|r| r.scenario.as_deref() == Some(COMMON_PREFIX)) {
            let head: Vec<&str> = r.query.split(' ').take(2).collect();
            let head = head.join(" ");
            let mut by_second: std::collections::HashMap<&str, usize> = Default::default();
            for kw in data.keywords.iter().filter(|k| k.starts_with(&format!("{head} "))) {
                *by_second.entry(kw.split(' ').nth(2).unwrap()).or_default() += 1;
            }
            assert!(by_second.values().any(|&c| c == spec.trap_branch_count));
        }
    }
}
