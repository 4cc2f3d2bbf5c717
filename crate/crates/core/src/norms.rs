//! Lexical norm lists: loading, token matching and integral-part binning.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_io::Vocabulary;
use crate::error::{Error, Result};

pub const VALENCE: &str = "valence";
pub const CONCRETENESS: &str = "concreteness";
pub const ICONICITY: &str = "iconicity";
pub const TABOO: &str = "taboo";
pub const AOA: &str = "aoa";

/// How a norm file's columns map onto words and values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormColumns {
    pub word: String,
    pub value: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Skip rows whose value is empty or `NA` instead of failing.
    #[serde(default)]
    pub skip_missing: bool,
}

fn default_delimiter() -> char {
    ','
}

impl Default for NormColumns {
    fn default() -> Self {
        NormColumns {
            word: "Word".into(),
            value: "Value".into(),
            delimiter: ',',
            skip_missing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormList {
    pub attribute: String,
    pub entries: Vec<(String, f64)>,
    pub declared_length: usize,
    /// Rows dropped because the value was missing (only with `skip_missing`).
    pub skipped_missing: usize,
}

impl NormList {
    pub fn new(attribute: impl Into<String>, entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (w, v) in &entries {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value for {w:?}"
                )));
            }
            if !seen.insert(w.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate word {w:?}")));
            }
        }
        Ok(NormList {
            attribute: attribute.into(),
            declared_length: entries.len(),
            entries,
            skipped_missing: 0,
        })
    }
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name).or_else(|| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    })
}

pub fn load_norm_list(
    path: impl AsRef<Path>,
    attribute: &str,
    columns: &NormColumns,
) -> Result<NormList> {
    let path = path.as_ref();
    let delimiter = u8::try_from(columns.delimiter)
        .map_err(|_| Error::InvalidArgument("delimiter must be a single byte".into()))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let word_idx = find_column(&headers, &columns.word)
        .ok_or_else(|| Error::format(path, format!("missing column {:?}", columns.word)))?;
    let value_idx = find_column(&headers, &columns.value)
        .ok_or_else(|| Error::format(path, format!("missing column {:?}", columns.value)))?;

    let mut entries = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut skipped = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let word = rec
            .get(word_idx)
            .ok_or_else(|| parse_err("missing word field".into()))?
            .trim()
            .to_string();
        let raw_value = rec
            .get(value_idx)
            .ok_or_else(|| parse_err("missing value field".into()))?
            .trim();
        if columns.skip_missing && (raw_value.is_empty() || raw_value.eq_ignore_ascii_case("na")) {
            skipped += 1;
            continue;
        }
        let value: f64 = raw_value
            .parse()
            .map_err(|_| parse_err(format!("non-numeric value {raw_value:?}")))?;
        if !value.is_finite() {
            return Err(parse_err(format!("non-finite value {raw_value:?}")));
        }
        if let Some(first) = seen.insert(word.clone(), line) {
            return Err(Error::format(
                path,
                format!("duplicate word {word:?} on lines {first} and {line}"),
            ));
        }
        entries.push((word, value));
    }
    Ok(NormList {
        attribute: attribute.to_string(),
        declared_length: entries.len(),
        entries,
        skipped_missing: skipped,
    })
}

/// Per-character simple case folding: a character folds to its lowercase
/// form only when that form is a single character.
pub fn case_fold(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        let mut lower = c.to_lowercase();
        match (lower.next(), lower.next()) {
            (Some(l), None) => out.push(l),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    CaseSensitive,
    CaseInsensitive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignedValue {
    pub word: String,
    pub value: f64,
    pub kind: MatchKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeAssignment {
    pub attribute: String,
    /// Keyed by token id.
    pub assigned: BTreeMap<u32, AssignedValue>,
    pub case_sensitive_count: usize,
    pub case_insensitive_count: usize,
    /// Norm words with no matching token.
    pub unmatched: Vec<(String, f64)>,
    /// Norm words whose only candidate token already carried a value.
    pub collisions: Vec<(String, f64, u32)>,
}

impl AttributeAssignment {
    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.assigned.iter().map(|(&t, a)| (t, a.value))
    }
}

/// Give each norm word's value to exactly one token.
///
/// A word goes to the lowest-id token whose surface equals it exactly; failing
/// that, to the lowest-id token whose case-folded surface equals the folded
/// word. Exact matches are settled first. A case-insensitive match whose token
/// is already taken is recorded as a collision and skipped; competing
/// case-insensitive words are settled in lexicographic word order.
pub fn match_tokens(vocab: &Vocabulary, norms: &NormList) -> AttributeAssignment {
    let mut exact: HashMap<&str, u32> = HashMap::new();
    let mut folded: HashMap<String, u32> = HashMap::new();
    for t in &vocab.tokens {
        exact.entry(t.surface.as_str()).or_insert(t.token_id);
        folded.entry(case_fold(&t.surface)).or_insert(t.token_id);
    }

    let mut assigned = BTreeMap::new();
    let mut insensitive: Vec<(&str, f64, u32)> = Vec::new();
    let mut unmatched = Vec::new();
    for (word, value) in &norms.entries {
        if let Some(&id) = exact.get(word.as_str()) {
            assigned.insert(
                id,
                AssignedValue {
                    word: word.clone(),
                    value: *value,
                    kind: MatchKind::CaseSensitive,
                },
            );
        } else if let Some(&id) = folded.get(&case_fold(word)) {
            insensitive.push((word, *value, id));
        } else {
            unmatched.push((word.clone(), *value));
        }
    }
    let case_sensitive_count = assigned.len();

    insensitive.sort_by(|a, b| a.0.cmp(b.0));
    let mut collisions = Vec::new();
    let mut case_insensitive_count = 0;
    for (word, value, id) in insensitive {
        if assigned.contains_key(&id) {
            collisions.push((word.to_string(), value, id));
            continue;
        }
        assigned.insert(
            id,
            AssignedValue {
                word: word.to_string(),
                value,
                kind: MatchKind::CaseInsensitive,
            },
        );
        case_insensitive_count += 1;
    }
    unmatched.sort_by(|a, b| a.0.cmp(&b.0));
    collisions.sort_by(|a, b| a.0.cmp(&b.0));

    AttributeAssignment {
        attribute: norms.attribute.clone(),
        assigned,
        case_sensitive_count,
        case_insensitive_count,
        unmatched,
        collisions,
    }
}

/// Attribute values grouped by integral part.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedAttribute {
    pub attribute: String,
    /// Integral parts that occur, ascending.
    pub bin_labels: Vec<i64>,
    pub counts: Vec<u64>,
    pub p_cat: Vec<f64>,
    /// Bin index of each annotated token.
    pub bin_of: BTreeMap<u32, usize>,
}

impl BinnedAttribute {
    pub fn from_values(attribute: &str, values: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let labelled: Vec<(u32, i64)> = values
            .into_iter()
            .map(|(t, v)| (t, v.floor() as i64))
            .collect();
        let mut by_label: BTreeMap<i64, u64> = BTreeMap::new();
        for &(_, l) in &labelled {
            *by_label.entry(l).or_default() += 1;
        }
        let bin_labels: Vec<i64> = by_label.keys().copied().collect();
        let counts: Vec<u64> = by_label.values().copied().collect();
        let index: HashMap<i64, usize> = bin_labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, i))
            .collect();
        let bin_of = labelled.iter().map(|&(t, l)| (t, index[&l])).collect();
        let total: u64 = counts.iter().sum();
        let p_cat = counts.iter().map(|&c| c as f64 / total as f64).collect();
        BinnedAttribute {
            attribute: attribute.to_string(),
            bin_labels,
            counts,
            p_cat,
            bin_of,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.bin_labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Count vector of each cluster over this attribute's bins.
    pub fn cluster_counts(&self, assignments: &[u32], k: usize) -> Result<Vec<Vec<u64>>> {
        let mut out = vec![vec![0u64; self.n_bins()]; k];
        for (&token, &bin) in &self.bin_of {
            let cluster = *assignments.get(token as usize).ok_or_else(|| {
                Error::InvalidArgument(format!("annotated token {token} has no cluster"))
            })? as usize;
            if cluster >= k {
                return Err(Error::AssignmentOutOfRange { index: cluster, k });
            }
            out[cluster][bin] += 1;
        }
        Ok(out)
    }
}

pub fn bin_values(assignment: &AttributeAssignment) -> BinnedAttribute {
    BinnedAttribute::from_values(&assignment.attribute, assignment.values())
}
