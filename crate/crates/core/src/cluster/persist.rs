//! Binary model file.
//!
//! Layout (all little-endian): magic `LEXKMNS1`; `k`, `dims`, `rows` as `u32`;
//! `k * dims` centroid values as `f64`; `rows` assignments as `u32`; `seed` as
//! `u64`; `iterations_run` as `u32`; `wcss` as `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{sizes_of, ClusterModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"LEXKMNS1";

pub fn save_model(model: &ClusterModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let u32_of = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} too large for u32")))
    };
    let mut buf =
        Vec::with_capacity(8 + 12 + model.centroids.len() * 8 + model.assignments.len() * 4 + 20);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&u32_of(model.k, "k")?.to_le_bytes());
    buf.extend_from_slice(&u32_of(model.dims, "dims")?.to_le_bytes());
    buf.extend_from_slice(&u32_of(model.assignments.len(), "rows")?.to_le_bytes());
    for c in &model.centroids {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    for a in &model.assignments {
        buf.extend_from_slice(&a.to_le_bytes());
    }
    buf.extend_from_slice(&model.seed.to_le_bytes());
    buf.extend_from_slice(&model.iterations_run.to_le_bytes());
    buf.extend_from_slice(&model.wcss.to_le_bytes());
    let mut f = crate::report::create(path)?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.u64().map(f64::from_bits)
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClusterModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = || Error::format(path, "truncated model file");
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(8).ok_or_else(truncated)? != MODEL_MAGIC {
        return Err(Error::format(
            path,
            "magic mismatch: not a LEXKMNS1 model file",
        ));
    }
    let k = cur.u32().ok_or_else(truncated)? as usize;
    let dims = cur.u32().ok_or_else(truncated)? as usize;
    let rows = cur.u32().ok_or_else(truncated)? as usize;
    let expected = 8 + 12 + k * dims * 8 + rows * 4 + 8 + 4 + 8;
    if bytes.len() < expected {
        return Err(truncated());
    }
    if bytes.len() > expected {
        return Err(Error::format(path, "trailing bytes after model payload"));
    }
    let centroids: Vec<f64> = (0..k * dims).map(|_| cur.f64().unwrap()).collect();
    let assignments: Vec<u32> = (0..rows).map(|_| cur.u32().unwrap()).collect();
    let seed = cur.u64().unwrap();
    let iterations_run = cur.u32().unwrap();
    let wcss = cur.f64().unwrap();
    if let Some(&bad) = assignments.iter().find(|&&a| a as usize >= k) {
        return Err(Error::format(
            path,
            format!("assignment {bad} out of range for k = {k}"),
        ));
    }
    Ok(ClusterModel {
        k,
        dims,
        sizes: sizes_of(&assignments, k),
        centroids,
        assignments,
        wcss,
        seed,
        iterations_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{kmeans_fit, KMeansParams};
    use crate::corpus_io::EmbeddingMatrix;
    use tempfile::tempdir;

    fn fitted() -> ClusterModel {
        let m = EmbeddingMatrix::from_rows(&[
            vec![0.0, 0.1],
            vec![0.2, 0.0],
            vec![5.0, 5.1],
            vec![5.3, 4.9],
            vec![4.8, 5.0],
        ])
        .unwrap();
        kmeans_fit(
            &m,
            &KMeansParams {
                k: 2,
                seed: 99,
                ..KMeansParams::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_field_identical() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("model.bin");
        let model = fitted();
        save_model(&model, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.wcss.to_bits(), model.wcss.to_bits());
        let bits: Vec<u64> = back.centroids.iter().map(|c| c.to_bits()).collect();
        let orig: Vec<u64> = model.centroids.iter().map(|c| c.to_bits()).collect();
        assert_eq!(bits, orig);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("model.bin");
        save_model(&fitted(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        for cut in [4, 20, bytes.len() - 1] {
            fs::write(&p, &bytes[..cut]).unwrap();
            assert!(load_model(&p)
                .unwrap_err()
                .to_string()
                .contains("truncated"));
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("model.bin");
        save_model(&fitted(), &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[7] = b'2';
        fs::write(&p, &bytes).unwrap();
        assert!(load_model(&p).unwrap_err().to_string().contains("magic"));
    }
}
