//! Interchange formats for vocabularies and embedding matrices.
//!
//! Vocabulary files are JSON lines. The first line is a header
//! `{"vocab_size": N, "marker_convention": "U+0120"}`; every following line is
//! `{"id": i, "surface": "...", "leading_space": bool}`.
//!
//! Matrix files are the 8-byte magic `LEXPROBE`, then `rows` and `dims` as
//! little-endian `u32`, then `rows * dims` little-endian `f32` in row-major
//! order.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 8] = b"LEXPROBE";
const MATRIX_HEADER_LEN: usize = 16;

/// Marker used by byte-level BPE tokenizers for "token follows a space".
pub const DEFAULT_MARKER: char = '\u{0120}';

/// Glyph used when rendering leading-space tokens in reports.
pub const DISPLAY_MARKER: char = '?';

/// Split a raw tokenizer string into its surface form and leading-space flag.
///
/// Only the first marker is stripped.
pub fn normalize_token(raw: &str, marker: char) -> (String, bool) {
    match raw.strip_prefix(marker) {
        Some(rest) => (rest.to_string(), true),
        None => (raw.to_string(), false),
    }
}

/// Inverse of [`normalize_token`].
pub fn denormalize_token(surface: &str, leading_space: bool, marker: char) -> String {
    if leading_space {
        let mut raw = String::with_capacity(surface.len() + marker.len_utf8());
        raw.push(marker);
        raw.push_str(surface);
        raw
    } else {
        surface.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRecord {
    pub token_id: u32,
    pub surface: String,
    pub leading_space: bool,
    pub raw: String,
}

impl TokenRecord {
    pub fn new(
        token_id: u32,
        surface: impl Into<String>,
        leading_space: bool,
        marker: char,
    ) -> Self {
        let surface = surface.into();
        let raw = denormalize_token(&surface, leading_space, marker);
        TokenRecord {
            token_id,
            surface,
            leading_space,
            raw,
        }
    }

    /// Build a record from the tokenizer's raw string.
    pub fn from_raw(token_id: u32, raw: &str, marker: char) -> Self {
        let (surface, leading_space) = normalize_token(raw, marker);
        TokenRecord {
            token_id,
            surface,
            leading_space,
            raw: raw.to_string(),
        }
    }

    /// Surface form as shown in reports, `?` prefixed for leading-space tokens.
    pub fn display(&self) -> String {
        denormalize_token(&self.surface, self.leading_space, DISPLAY_MARKER)
    }
}

/// A loaded vocabulary; `tokens[i].token_id == i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub marker: char,
    pub tokens: Vec<TokenRecord>,
}

impl Vocabulary {
    pub fn new(marker: char, tokens: Vec<TokenRecord>) -> Result<Self> {
        for (i, t) in tokens.iter().enumerate() {
            if t.token_id as usize != i {
                return Err(Error::InvalidArgument(format!(
                    "token at position {i} has id {}",
                    t.token_id
                )));
            }
        }
        Ok(Vocabulary { marker, tokens })
    }

    /// Build from raw tokenizer strings, in id order.
    pub fn from_raw<S: AsRef<str>>(marker: char, raw: &[S]) -> Self {
        let tokens = raw
            .iter()
            .enumerate()
            .map(|(i, r)| TokenRecord::from_raw(i as u32, r.as_ref(), marker))
            .collect();
        Vocabulary { marker, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabHeader {
    vocab_size: u64,
    marker_convention: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabLine<'a> {
    id: u64,
    #[serde(borrow)]
    surface: std::borrow::Cow<'a, str>,
    leading_space: bool,
}

/// Format a marker as `U+XXXX`.
pub fn marker_convention(marker: char) -> String {
    format!("U+{:04X}", marker as u32)
}

/// Parse a `U+XXXX` marker convention.
pub fn parse_marker_convention(s: &str) -> Option<char> {
    let hex = s.strip_prefix("U+").or_else(|| s.strip_prefix("u+"))?;
    u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = reader.lines().enumerate();
    let header_line = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "missing header record".into())),
    };
    let header: VocabHeader =
        serde_json::from_str(&header_line).map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    let marker = parse_marker_convention(&header.marker_convention).ok_or_else(|| {
        parse_err(
            1,
            format!("unknown marker convention {:?}", header.marker_convention),
        )
    })?;
    let declared = usize::try_from(header.vocab_size)
        .map_err(|_| parse_err(1, "vocab_size out of range".into()))?;

    let mut slots: Vec<Option<TokenRecord>> = vec![None; declared];
    let mut seen = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            return Err(parse_err(lineno, "empty line".into()));
        }
        let rec: VocabLine<'_> =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let id = usize::try_from(rec.id).unwrap_or(usize::MAX);
        if id >= declared {
            return Err(Error::format(
                path,
                format!(
                    "line {lineno}: id {} outside declared size {declared}",
                    rec.id
                ),
            ));
        }
        if slots[id].is_some() {
            return Err(Error::format(
                path,
                format!("line {lineno}: duplicate token id {id}"),
            ));
        }
        if !rec.leading_space && rec.surface.starts_with(marker) {
            return Err(Error::format(
                path,
                format!("line {lineno}: surface begins with the marker but leading_space is false"),
            ));
        }
        if !rec.leading_space && rec.surface.is_empty() {
            return Err(Error::format(path, format!("line {lineno}: empty token")));
        }
        slots[id] = Some(TokenRecord::new(
            id as u32,
            rec.surface,
            rec.leading_space,
            marker,
        ));
        seen += 1;
    }
    if seen != declared {
        return Err(Error::format(
            path,
            format!("header declares {declared} records but {seen} were found"),
        ));
    }
    let tokens = slots
        .into_iter()
        .map(|s| s.expect("all slots filled"))
        .collect();
    Ok(Vocabulary { marker, tokens })
}

pub fn save_vocabulary(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = VocabHeader {
        vocab_size: vocab.tokens.len() as u64,
        marker_convention: marker_convention(vocab.marker),
    };
    let write = |w: &mut BufWriter<File>, s: String| -> Result<()> {
        w.write_all(s.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    write(
        &mut w,
        serde_json::to_string(&header).map_err(|e| Error::json(path, e))?,
    )?;
    for t in &vocab.tokens {
        let line = VocabLine {
            id: u64::from(t.token_id),
            surface: std::borrow::Cow::Borrowed(&t.surface),
            leading_space: t.leading_space,
        };
        write(
            &mut w,
            serde_json::to_string(&line).map_err(|e| Error::json(path, e))?,
        )?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dense row-major matrix of static token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(dims) != Some(data.len()) {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{dims} matrix needs {} values, got {}",
                rows.saturating_mul(dims),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dims,
                col: pos % dims,
            });
        }
        Ok(EmbeddingMatrix { rows, dims, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(rows.len(), dims, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    /// Copy with every non-zero row scaled to unit Euclidean norm.
    pub fn l2_normalized(&self) -> EmbeddingMatrix {
        let mut data = self.data.clone();
        if self.dims > 0 {
            for row in data.chunks_mut(self.dims) {
                let norm = row
                    .iter()
                    .map(|&v| f64::from(v) * f64::from(v))
                    .sum::<f64>()
                    .sqrt();
                if norm > 0.0 {
                    for v in row.iter_mut() {
                        *v = (f64::from(*v) / norm) as f32;
                    }
                }
            }
        }
        EmbeddingMatrix {
            rows: self.rows,
            dims: self.dims,
            data,
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, ids: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(ids.len() * self.dims);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            rows: ids.len(),
            dims: self.dims,
            data,
        }
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path, message),
        other => other,
    })
}

fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let fmt = |m: String| Error::format("", m);
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(fmt(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MATRIX_MAGIC {
        return Err(fmt("magic mismatch: not a LEXPROBE matrix file".into()));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dims = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = (rows as u128) * (dims as u128) * 4;
    let payload = &bytes[MATRIX_HEADER_LEN..];
    if (payload.len() as u128) < expected {
        return Err(fmt(format!(
            "truncated payload: {rows}x{dims} needs {expected} bytes, found {}",
            payload.len()
        )));
    }
    if (payload.len() as u128) > expected {
        return Err(fmt(format!(
            "{} trailing bytes after {rows}x{dims} payload",
            payload.len() as u128 - expected
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(rows, dims, data)
}

pub fn save_embeddings(path: impl AsRef<Path>, matrix: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    let rows = u32::try_from(matrix.rows)
        .map_err(|_| Error::InvalidArgument("too many rows for u32 header".into()))?;
    let dims = u32::try_from(matrix.dims)
        .map_err(|_| Error::InvalidArgument("too many dims for u32 header".into()))?;
    let mut buf = Vec::with_capacity(MATRIX_HEADER_LEN + matrix.data.len() * 4);
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&dims.to_le_bytes());
    for v in &matrix.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Check that a vocabulary and a matrix describe the same token set.
pub fn check_alignment(vocab: &Vocabulary, matrix: &EmbeddingMatrix) -> Result<()> {
    if vocab.len() != matrix.rows() {
        return Err(Error::InvalidArgument(format!(
            "vocabulary has {} tokens but matrix has {} rows",
            vocab.len(),
            matrix.rows()
        )));
    }
    Ok(())
}

/// Surfaces that occur more than once (typographic duplicates).
pub fn duplicate_surfaces(vocab: &Vocabulary) -> usize {
    let mut seen = HashSet::new();
    vocab
        .tokens
        .iter()
        .filter(|t| !seen.insert(t.surface.as_str()))
        .count()
}
