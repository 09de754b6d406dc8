//! Okapi BM25 over the keyword library; each keyword is one document.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::split_words;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Bm25Error {
    #[error("empty keyword library")]
    EmptyLibrary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    /// IDF floor, as a fraction of the average IDF.
    pub epsilon: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75, epsilon: 0.25 }
    }
}

#[derive(Clone, Debug)]
pub struct Bm25Index {
    docs: Vec<String>,
    doc_term_freqs: Vec<HashMap<String, u32>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    idf: HashMap<String, f64>,
    postings: HashMap<String, Vec<usize>>,
    params: Bm25Params,
}

impl Bm25Index {
    /// Index keywords (deduplicated after normalization, first occurrence kept).
    pub fn build<S: AsRef<str>>(keywords: &[S], params: Bm25Params) -> Result<Self, Bm25Error> {
        let mut seen = BTreeSet::new();
        let mut docs = Vec::new();
        let mut doc_term_freqs = Vec::new();
        let mut doc_lengths = Vec::new();
        for kw in keywords {
            let words = split_words(kw.as_ref());
            let text = words.join(" ");
            if words.is_empty() || !seen.insert(text.clone()) {
                continue;
            }
            let mut tf: HashMap<String, u32> = HashMap::new();
            for w in &words {
                *tf.entry(w.clone()).or_insert(0) += 1;
            }
            docs.push(text);
            doc_lengths.push(words.len());
            doc_term_freqs.push(tf);
        }
        if docs.is_empty() {
            return Err(Bm25Error::EmptyLibrary);
        }

        let n = docs.len() as f64;
        let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / n;
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        for (d, tf) in doc_term_freqs.iter().enumerate() {
            for term in tf.keys() {
                postings.entry(term.clone()).or_default().push(d);
            }
        }
        let mut idf: HashMap<String, f64> = postings
            .iter()
            .map(|(term, docs)| {
                let df = docs.len() as f64;
                (term.clone(), ((n - df + 0.5) / (df + 0.5) + 1.0).ln())
            })
            .collect();
        let average_idf = idf.values().sum::<f64>() / idf.len() as f64;
        let floor = params.epsilon * average_idf;
        for v in idf.values_mut() {
            if *v < floor {
                *v = floor;
            }
        }
        Ok(Self { docs, doc_term_freqs, doc_lengths, avg_doc_length, idf, postings, params })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }

    /// Saturated term-frequency factor of `term` in document `doc`, without idf.
    pub fn tf_component(&self, doc: usize, term: &str) -> f64 {
        let tf = self.doc_term_freqs[doc].get(term).copied().unwrap_or(0) as f64;
        let Bm25Params { k1, b, .. } = self.params;
        let norm = 1.0 - b + b * self.doc_lengths[doc] as f64 / self.avg_doc_length;
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    pub fn doc_index(&self, keyword: &str) -> Option<usize> {
        let text = split_words(keyword).join(" ");
        self.docs.iter().position(|d| *d == text)
    }

    pub fn score(&self, query: &str, doc: usize) -> f64 {
        split_words(query)
            .iter()
            .filter_map(|t| self.idf.get(t).map(|idf| idf * self.tf_component(doc, t)))
            .sum()
    }

    /// Top-k keywords by score, ties by keyword text. Documents sharing no
    /// term with the query are omitted unless `include_zero` is set.
    pub fn query_with(&self, query: &str, k: usize, include_zero: bool) -> Vec<(String, f64)> {
        let terms = split_words(query);
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for t in &terms {
            let Some(idf) = self.idf.get(t) else { continue };
            for &d in &self.postings[t] {
                *scores.entry(d).or_insert(0.0) += idf * self.tf_component(d, t);
            }
        }
        if include_zero {
            for d in 0..self.docs.len() {
                scores.entry(d).or_insert(0.0);
            }
        }
        let mut ranked: Vec<(String, f64)> = scores.into_iter().map(|(d, s)| (self.docs[d].clone(), s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    pub fn query(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.query_with(query, k, false)
    }
}
