//! Python bindings for the trie-constrained keyword decoder.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use trie_lookahead::baseline::{Bm25Index, Bm25Params};
use trie_lookahead::decoder::merge_ranked;
use trie_lookahead::eval::metrics;
use trie_lookahead::vocab::normalize_text;
use trie_lookahead::{self as core, CountScorerConfig, Scorer as _, TableScorer, TokenId};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ids(raw: &[u32]) -> Vec<TokenId> {
    raw.iter().copied().map(TokenId).collect()
}

fn raw(ids: &[TokenId]) -> Vec<u32> {
    ids.iter().map(|t| t.0).collect()
}

#[pyclass(module = "trie_lookahead_py", frozen)]
struct Vocabulary {
    inner: core::Vocabulary,
}

#[pymethods]
impl Vocabulary {
    /// Reserved tokens first, then `tokens` in order.
    #[new]
    fn new(tokens: Vec<String>) -> PyResult<Self> {
        Ok(Self { inner: core::Vocabulary::from_tokens(&tokens).map_err(value_err)? })
    }

    /// Most frequent words of `lines`, capped at `max_size` entries in total.
    #[staticmethod]
    fn build(lines: Vec<String>, max_size: usize) -> PyResult<Self> {
        Ok(Self { inner: core::Vocabulary::build(&lines, max_size).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let inner = core::Vocabulary::read_from(std::io::BufReader::new(file)).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().to_vec()
    }

    fn id(&self, token: &str) -> Option<u32> {
        self.inner.id(token).map(|t| t.0)
    }

    fn tokenize(&self, text: &str) -> Vec<u32> {
        raw(&self.inner.tokenize(text))
    }

    fn detokenize(&self, ids_: Vec<u32>) -> PyResult<String> {
        self.inner.detokenize(&ids(&ids_)).map_err(value_err)
    }
}

/// Keywords that contain an out-of-vocabulary word raise `ValueError`.
fn tokenize_keyword(vocab: &core::Vocabulary, text: &str) -> PyResult<Vec<TokenId>> {
    let t = vocab.tokenize(text);
    if t.contains(&TokenId::UNK) {
        return Err(PyValueError::new_err(format!("keyword {text:?} has out-of-vocabulary words")));
    }
    Ok(t)
}

#[pyclass(module = "trie_lookahead_py", frozen)]
struct Trie {
    inner: core::Trie,
}

#[pymethods]
impl Trie {
    #[staticmethod]
    fn build(vocab: &Vocabulary, keywords: Vec<String>) -> PyResult<Self> {
        let toks = keywords.iter().map(|k| tokenize_keyword(&vocab.inner, k)).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: core::Trie::build(vocab.inner.len(), toks.iter()).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: core::Trie::from_bytes(data).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let data = std::fs::read(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Self::from_bytes(&data)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.inner.to_bytes()
    }

    fn __len__(&self) -> usize {
        self.inner.keyword_count()
    }

    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn contains(&self, keyword: Vec<u32>) -> bool {
        self.inner.contains(&ids(&keyword))
    }

    fn keywords(&self) -> Vec<Vec<u32>> {
        self.inner.keywords().iter().map(|k| raw(k)).collect()
    }

    /// Allowed next tokens after `prefix`, or `None` if the prefix is not in the trie.
    fn children(&self, prefix: Vec<u32>) -> Option<Vec<u32>> {
        let node = self.inner.node(&ids(&prefix))?;
        Some(self.inner.children(node).iter().map(|&(t, _)| t.0).collect())
    }
}

#[pyclass(module = "trie_lookahead_py", frozen)]
struct Scorer {
    inner: Box<dyn core::Scorer>,
}

#[pymethods]
impl Scorer {
    /// Train a count-based scorer on `(query, keyword)` pairs.
    #[staticmethod]
    #[pyo3(signature = (vocab, pairs, markov_order=3, beta=1.0, prediction_order=3, future_top_k=8))]
    fn train(
        vocab: &Vocabulary,
        pairs: Vec<(String, String)>,
        markov_order: usize,
        beta: f64,
        prediction_order: usize,
        future_top_k: usize,
    ) -> PyResult<Self> {
        let pairs = pairs
            .iter()
            .map(|(q, k)| Ok((vocab.inner.tokenize(q), tokenize_keyword(&vocab.inner, k)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let config = CountScorerConfig {
            copy_bonus_beta: beta,
            prediction_order,
            future_top_k,
            ..CountScorerConfig::with_markov_order(markov_order)
        };
        let s = core::CountScorer::train(&pairs, vocab.inner.len(), config).map_err(value_err)?;
        Ok(Self { inner: Box::new(s) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Box::new(core::CountScorer::from_json(text).map_err(value_err)?) })
    }

    /// Table scorer from JSONL records of explicit distributions.
    #[staticmethod]
    fn from_table(text: &str, vocab: &Vocabulary) -> PyResult<Self> {
        let s = TableScorer::from_reader(text.as_bytes(), &vocab.inner).map_err(value_err)?;
        Ok(Self { inner: Box::new(s) })
    }

    fn order(&self) -> usize {
        self.inner.order()
    }

    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    /// One log-probability list per level.
    fn predict(&self, query: Vec<u32>, prefix: Vec<u32>) -> Vec<Vec<f64>> {
        let pred = self.inner.predict(&ids(&query), &ids(&prefix));
        (0..pred.order()).map(|l| pred.dist(l).to_vec()).collect()
    }
}

#[pyclass(module = "trie_lookahead_py", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct BeamConfig {
    beam_size: usize,
    ngram_order: usize,
    residual_weight: f64,
    max_length: usize,
    length_norm_alpha: f64,
}

impl From<&BeamConfig> for core::BeamConfig {
    fn from(c: &BeamConfig) -> Self {
        Self {
            beam_size: c.beam_size,
            ngram_order: c.ngram_order,
            residual_weight: c.residual_weight,
            max_length: c.max_length,
            length_norm_alpha: c.length_norm_alpha,
        }
    }
}

#[pymethods]
impl BeamConfig {
    #[new]
    #[pyo3(signature = (beam_size=5, ngram_order=3, residual_weight=0.8, max_length=20, length_norm_alpha=0.0))]
    fn new(beam_size: usize, ngram_order: usize, residual_weight: f64, max_length: usize, length_norm_alpha: f64) -> Self {
        Self { beam_size, ngram_order, residual_weight, max_length, length_norm_alpha }
    }

    fn __repr__(&self) -> String {
        format!(
            "BeamConfig(beam_size={}, ngram_order={}, residual_weight={}, max_length={}, length_norm_alpha={})",
            self.beam_size, self.ngram_order, self.residual_weight, self.max_length, self.length_norm_alpha
        )
    }
}

/// Token-level search: list of `(keyword_ids, logprob)`, best first.
#[pyfunction]
fn beam_search(py: Python<'_>, query: Vec<u32>, trie: &Trie, scorer: &Scorer, config: &BeamConfig) -> PyResult<Vec<(Vec<u32>, f64)>> {
    let config = core::BeamConfig::from(config);
    let query = ids(&query);
    let r = py
        .detach(|| core::beam_search(&query, &trie.inner, &scorer.inner, &config))
        .map_err(value_err)?;
    Ok(r.outputs.iter().map(|e| (raw(&e.keyword), e.original_score)).collect())
}

/// Text-level search: list of `(keyword, logprob)`, best first.
#[pyfunction]
#[pyo3(signature = (vocab, trie, scorer, query, config=None))]
fn extend(
    py: Python<'_>,
    vocab: &Vocabulary,
    trie: &Trie,
    scorer: &Scorer,
    query: &str,
    config: Option<&BeamConfig>,
) -> PyResult<Vec<(String, f64)>> {
    let config = config.map(core::BeamConfig::from).unwrap_or_default();
    let q = vocab.inner.tokenize(query);
    let r = py
        .detach(|| core::beam_search(&q, &trie.inner, &scorer.inner, &config))
        .map_err(value_err)?;
    r.outputs
        .iter()
        .map(|e| Ok((vocab.inner.detokenize(&e.keyword).map_err(value_err)?, e.original_score)))
        .collect()
}

/// Lookahead-modified scores of the tokens allowed after `prefix`.
#[pyfunction]
fn lookahead_scores(
    query: Vec<u32>,
    prefix: Vec<u32>,
    trie: &Trie,
    scorer: &Scorer,
    residual_weight: f64,
    depth: usize,
) -> PyResult<Vec<(u32, f64)>> {
    let prefix = ids(&prefix);
    let pred = scorer.inner.predict(&ids(&query), &prefix);
    let m = core::lookahead_modify(&pred, &trie.inner, &prefix, residual_weight, depth).map_err(value_err)?;
    Ok(m.entries.iter().map(|&(t, s)| (t.0, s)).collect())
}

#[pyclass(module = "trie_lookahead_py", frozen)]
struct Bm25 {
    inner: Bm25Index,
}

#[pymethods]
impl Bm25 {
    #[new]
    #[pyo3(signature = (keywords, k1=1.2, b=0.75, epsilon=0.25))]
    fn new(keywords: Vec<String>, k1: f64, b: f64, epsilon: f64) -> PyResult<Self> {
        let inner = Bm25Index::build(&keywords, Bm25Params { k1, b, epsilon }).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn score(&self, query: &str, doc: usize) -> PyResult<f64> {
        if doc >= self.inner.len() {
            return Err(PyValueError::new_err(format!("document index {doc} out of range")));
        }
        Ok(self.inner.score(query, doc))
    }

    fn query(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.inner.query(query, k)
    }
}

fn golden_set(golden: Vec<String>) -> BTreeSet<String> {
    golden.iter().map(|g| normalize_text(g)).collect()
}

#[pyfunction]
fn recall_at_k(results: Vec<String>, golden: Vec<String>, k: usize) -> PyResult<f64> {
    let results: Vec<String> = results.iter().map(|r| normalize_text(r)).collect();
    metrics::recall_at_k(&results, &golden_set(golden), k).map_err(value_err)
}

#[pyfunction]
fn average_precision_at_k(results: Vec<String>, golden: Vec<String>, k: usize) -> PyResult<f64> {
    let results: Vec<String> = results.iter().map(|r| normalize_text(r)).collect();
    metrics::average_precision_at_k(&results, &golden_set(golden), k).map_err(value_err)
}

/// Round-robin union of ranked lists, first occurrence wins.
#[pyfunction]
fn merge(lists: Vec<Vec<String>>, k: usize) -> Vec<String> {
    merge_ranked(&lists, k)
}

#[pymodule]
fn trie_lookahead_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BOS", TokenId::BOS.0)?;
    m.add("EOS", TokenId::EOS.0)?;
    m.add("UNK", TokenId::UNK.0)?;
    m.add_class::<Vocabulary>()?;
    m.add_class::<Trie>()?;
    m.add_class::<Scorer>()?;
    m.add_class::<BeamConfig>()?;
    m.add_class::<Bm25>()?;
    m.add_function(wrap_pyfunction!(beam_search, m)?)?;
    m.add_function(wrap_pyfunction!(extend, m)?)?;
    m.add_function(wrap_pyfunction!(lookahead_scores, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(merge, m)?)?;
    Ok(())
}
