//! Loader for precomputed frame-level embeddings and mean pooling.
//!
//! Interchange format: a header `id,dim=<D>` followed by one line per frame,
//! `id,v1,...,vD`. All frames of an id are contiguous.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{FeatureSet, FeatureVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Width of the speech-model embeddings used by the benchmark.
pub const EMBEDDING_DIM: usize = 512;

/// `T x D` frame matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    data: Vec<T>,
    dim: usize,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn from_frames(frames: &[Vec<T>]) -> Result<Self> {
        let dim = frames.first().map(Vec::len).unwrap_or(0);
        if frames.is_empty() || dim == 0 {
            return Err(Error::EmbeddingFormat("embedding matrix needs at least one non-empty frame".into()));
        }
        if let Some(bad) = frames.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(Self {
            data: frames.concat(),
            dim,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[T] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Per-dimension mean over frames.
///
/// Each column is summed in sorted order, so the result does not depend on
/// the frame order at all, not even in the last bit.
pub fn mean_pool<T: Scalar>(m: &EmbeddingMatrix<T>) -> FeatureVector<T> {
    let n = m.n_frames();
    let mut column = Vec::with_capacity(n);
    let values = (0..m.dim)
        .map(|d| {
            column.clear();
            column.extend(m.frames().map(|f| f[d]));
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            column.iter().fold(T::zero(), |acc, &v| acc + v) / T::from_usize_lossy(n)
        })
        .collect();
    FeatureVector {
        values,
        names: (0..m.dim).map(|d| format!("emb{d}")).collect(),
        feature_set: FeatureSet::Embedding,
    }
}

fn parse_header(line: &str) -> Result<usize> {
    let mut parts = line.split(',').map(str::trim);
    let (Some("id"), Some(dim), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(Error::EmbeddingFormat(format!("header must be `id,dim=<D>`, got `{line}`")));
    };
    dim.strip_prefix("dim=")
        .and_then(|d| d.parse::<usize>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::EmbeddingFormat(format!("bad dimension declaration `{dim}`")))
}

pub fn read_embeddings<T: Scalar, R: BufRead>(reader: R) -> Result<BTreeMap<String, EmbeddingMatrix<T>>> {
    let mut out = BTreeMap::new();
    let mut dim = None;
    let mut current: Option<(String, Vec<Vec<T>>)> = None;
    let flush = |cur: Option<(String, Vec<Vec<T>>)>, out: &mut BTreeMap<String, EmbeddingMatrix<T>>| -> Result<()> {
        if let Some((id, frames)) = cur {
            out.insert(id, EmbeddingMatrix::from_frames(&frames)?);
        }
        Ok(())
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::EmbeddingFormat(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(d) = dim else {
            dim = Some(parse_header(&line)?);
            continue;
        };
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::EmbeddingFormat(format!("row {}: empty id", i + 1)));
        }
        let values = fields
            .map(|v| {
                v.trim().parse::<f64>().map(T::lit).map_err(|_| {
                    Error::EmbeddingFormat(format!("id `{id}`, row {}: `{}` is not a number", i + 1, v.trim()))
                })
            })
            .collect::<Result<Vec<T>>>()?;
        if values.len() != d {
            return Err(Error::EmbeddingFormat(format!(
                "id `{id}`, row {}: expected {d} values, found {}",
                i + 1,
                values.len()
            )));
        }
        match &mut current {
            Some((cur, frames)) if *cur == id => frames.push(values),
            _ => {
                if out.contains_key(&id) {
                    return Err(Error::EmbeddingFormat(format!(
                        "id `{id}`, row {}: frames for this id are not contiguous",
                        i + 1
                    )));
                }
                flush(current.take(), &mut out)?;
                current = Some((id, vec![values]));
            }
        }
    }
    flush(current, &mut out)?;
    Ok(out)
}

pub fn load_embeddings<T: Scalar>(path: &Path) -> Result<BTreeMap<String, EmbeddingMatrix<T>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(f))
}

pub fn write_embeddings<T: Scalar>(path: &Path, items: &BTreeMap<String, EmbeddingMatrix<T>>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let dim = items.values().next().map(|m| m.dim()).unwrap_or(EMBEDDING_DIM);
    let io = |e| Error::io(path, e);
    writeln!(w, "id,dim={dim}").map_err(io)?;
    for (id, m) in items {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.dim(),
            });
        }
        for frame in m.frames() {
            write!(w, "{id}").map_err(io)?;
            for v in frame {
                write!(w, ",{}", v.as_f64()).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn body(rows: &[(&str, usize)], dim: usize) -> String {
        let mut s = format!("id,dim={dim}\n");
        for (id, n) in rows {
            for t in 0..*n {
                let vals: Vec<String> = (0..dim).map(|d| format!("{}", (t * dim + d) as f64 * 0.001)).collect();
                s.push_str(&format!("{id},{}\n", vals.join(",")));
            }
        }
        s
    }

    #[test]
    fn loads_shapes() {
        let map = read_embeddings::<f64, _>(body(&[("a", 149), ("b", 65)], 512).as_bytes()).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!((map["a"].n_frames(), map["a"].dim()), (149, 512));
        assert_eq!((map["b"].n_frames(), map["b"].dim()), (65, 512));
    }

    #[test]
    fn empty_file_is_empty_map() {
        assert!(read_embeddings::<f64, _>("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn short_row_names_id_and_row() {
        let mut s = body(&[("a", 2)], 512);
        let short: Vec<String> = (0..511).map(|_| "0.5".to_string()).collect();
        s.push_str(&format!("zz9,{}\n", short.join(",")));
        let err = read_embeddings::<f64, _>(s.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("zz9") && err.contains("row 4") && err.contains("511"), "{err}");
    }

    #[test]
    fn rejects_bad_header_and_split_ids() {
        assert!(read_embeddings::<f64, _>("a,1,2\n".as_bytes()).is_err());
        assert!(read_embeddings::<f64, _>("id,dim=2\na,1,2\nb,1,2\na,3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn pooling_examples() {
        let m = EmbeddingMatrix::from_frames(&[vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(mean_pool(&m).values, vec![2.0, 4.0]);
        let one = EmbeddingMatrix::from_frames(&[vec![0.1, -7.0, 2.5]]).unwrap();
        assert_eq!(mean_pool(&one).values, vec![0.1, -7.0, 2.5]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.csv");
        let map = read_embeddings::<f64, _>(body(&[("x", 3), ("y", 1)], 4).as_bytes()).unwrap();
        write_embeddings(&p, &map).unwrap();
        assert_eq!(load_embeddings::<f64>(&p).unwrap(), map);
    }

    proptest! {
        #[test]
        fn pooling_is_permutation_invariant(
            frames in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..20),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = frames.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = mean_pool(&EmbeddingMatrix::from_frames(&frames).unwrap());
            let b = mean_pool(&EmbeddingMatrix::from_frames(&shuffled).unwrap());
            prop_assert_eq!(a.values, b.values);
        }
    }
}
