use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConceptId, KnowledgeGraph};
use crate::eigen::symmetric_eigen;
use crate::embedding::read_embedding_table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmbeddingCoverage {
    pub rows: usize,
    pub matched: usize,
    pub concepts: usize,
    pub dim: usize,
}

impl EmbeddingCoverage {
    pub fn ratio(&self) -> f64 {
        if self.concepts == 0 {
            0.0
        } else {
            self.matched as f64 / self.concepts as f64
        }
    }
}

fn resolve_key(key: &str, language: &str) -> Option<ConceptId> {
    if key.starts_with("/c/") {
        ConceptId::from_uri(key)
    } else {
        ConceptId::from_label(key, language)
    }
}

/// Attaches pre-computed concept vectors (Numberbatch-style word-vector
/// text, with or without a header). Keys may be full concept URIs or bare
/// terms in the graph's language. Replaces any previous embeddings.
pub fn load_numberbatch(path: &Path, kg: &mut KnowledgeGraph) -> Result<EmbeddingCoverage> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let language = kg.language.clone();
    let (table, rows) =
        read_embedding_table(BufReader::with_capacity(1 << 20, file), path, |key| {
            resolve_key(key, &language).is_some_and(|c| kg.concepts.contains(&c))
        })?;
    let mut attached: BTreeMap<ConceptId, Vec<f64>> = BTreeMap::new();
    for (key, v) in table.vectors {
        let c = resolve_key(&key, &language).expect("kept rows resolve");
        if attached.insert(c.clone(), v).is_some() {
            return Err(Error::DuplicateKey(c.to_string()));
        }
    }
    let coverage = EmbeddingCoverage {
        rows,
        matched: attached.len(),
        concepts: kg.concepts.len(),
        dim: table.dim,
    };
    kg.embeddings = attached;
    Ok(coverage)
}

/// Spectral concept embeddings: the leading `dim` eigenvectors of the
/// symmetrically normalized weighted adjacency `D^-1/2 A D^-1/2`, found by
/// seeded subspace iteration with re-orthonormalization and a final
/// Rayleigh-Ritz rotation. Isolated concepts get zero vectors.
pub fn spectral_embed(
    kg: &mut KnowledgeGraph,
    dim: usize,
    iterations: usize,
    seed: u64,
) -> Result<()> {
    let n = kg.concepts.len();
    if n == 0 {
        return Err(Error::Config("spectral embedding of an empty graph".into()));
    }
    if dim == 0 || dim > n {
        return Err(Error::Config(format!(
            "embedding dim {dim} must be in 1..={n} (concept count)"
        )));
    }
    let index: HashMap<&ConceptId, usize> = kg
        .concepts
        .iter()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in &kg.relations {
        let (a, b) = (index[&r.src], index[&r.dst]);
        if a != b {
            *weights.entry((a, b)).or_default() += r.weight;
            *weights.entry((b, a)).or_default() += r.weight;
        }
    }
    let mut degree = vec![0.0; n];
    for ((a, _), w) in &weights {
        degree[*a] += w;
    }
    let active: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in active.iter().enumerate() {
        slot[i] = k;
    }
    let m = active.len();

    // (I + N) / 2 over active nodes: same eigenvectors as N, spectrum moved
    // into [0, 1] so the dominant subspace is the algebraically largest.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (k, row) in rows.iter_mut().enumerate() {
        row.push((k, 0.5));
    }
    for ((a, b), w) in &weights {
        let v = 0.5 * w / (degree[*a] * degree[*b]).sqrt();
        rows[slot[*a]].push((slot[*b], v));
    }

    let k = dim.min(m);
    let mut basis = vec![0.0; m * k];
    if k > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in basis.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        orthonormalize(&mut basis, m, k, &mut rng);
        for _ in 0..iterations {
            basis = apply(&rows, &basis, k);
            orthonormalize(&mut basis, m, k, &mut rng);
        }
        // Rayleigh-Ritz: rotate the basis onto the Ritz vectors, descending.
        let mb = apply(&rows, &basis, k);
        let mut t = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                t[a * k + b] = (0..m).map(|r| basis[r * k + a] * mb[r * k + b]).sum();
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                let s = 0.5 * (t[a * k + b] + t[b * k + a]);
                t[a * k + b] = s;
                t[b * k + a] = s;
            }
        }
        let (_, v) = symmetric_eigen(&t, k);
        let mut rotated = vec![0.0; m * k];
        for r in 0..m {
            for c in 0..k {
                rotated[r * k + c] = (0..k).map(|j| basis[r * k + j] * v[j * k + c]).sum();
            }
        }
        basis = rotated;
        // sign convention: largest-magnitude entry of each column is positive
        for c in 0..k {
            let mut pivot = 0;
            for r in 0..m {
                if basis[r * k + c].abs() > basis[pivot * k + c].abs() {
                    pivot = r;
                }
            }
            if basis[pivot * k + c] < 0.0 {
                for r in 0..m {
                    basis[r * k + c] = -basis[r * k + c];
                }
            }
        }
    }

    kg.embeddings = kg
        .concepts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut v = vec![0.0; dim];
            if slot[i] != usize::MAX {
                v[..k].copy_from_slice(&basis[slot[i] * k..slot[i] * k + k]);
            }
            (c.clone(), v)
        })
        .collect();
    Ok(())
}

fn apply(rows: &[Vec<(usize, f64)>], x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (r, row) in rows.iter().enumerate() {
        let dst = &mut out[r * k..r * k + k];
        for &(c, w) in row {
            for (d, s) in dst.iter_mut().zip(&x[c * k..c * k + k]) {
                *d += w * s;
            }
        }
    }
    out
}

/// Modified Gram-Schmidt on the columns of a row-major `m x k` matrix,
/// applied twice. Columns that collapse are re-drawn from `rng`.
fn orthonormalize(q: &mut [f64], m: usize, k: usize, rng: &mut ChaCha8Rng) {
    for c in 0..k {
        for attempt in 0..4 {
            for _pass in 0..2 {
                for p in 0..c {
                    let dot: f64 = (0..m).map(|r| q[r * k + c] * q[r * k + p]).sum();
                    for r in 0..m {
                        q[r * k + c] -= dot * q[r * k + p];
                    }
                }
            }
            let norm: f64 = (0..m).map(|r| q[r * k + c].powi(2)).sum::<f64>().sqrt();
            if norm > 1e-12 || attempt == 3 {
                let norm = norm.max(f64::MIN_POSITIVE);
                for r in 0..m {
                    q[r * k + c] /= norm;
                }
                break;
            }
            for r in 0..m {
                q[r * k + c] = rng.random_range(-1.0..1.0);
            }
        }
    }
}
