use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Matrix;
use crate::error::{Error, Result};

/// Seed source with label-keyed stream splitting.
///
/// Each call to [`SeededRng::stream`] derives an independent ChaCha8 stream from
/// `SHA-256(domain || seed_le || label)`, so a stream depends only on the seed and
/// its label, never on how many other streams were drawn before it. Both
/// primitives are fully specified, which keeps streams identical across
/// platforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
}

const DOMAIN: &[u8] = b"dfa-esn/chacha8/v1";

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, label: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(self.seed.to_le_bytes());
        h.update(label.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}

/// Weight distribution for randomly initialised matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightDist {
    Uniform { lo: f64, hi: f64 },
    /// Uniform values, each entry kept independently with probability `density`.
    SparseUniform { lo: f64, hi: f64, density: f64 },
}

impl WeightDist {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        WeightDist::Uniform { lo, hi }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = match *self {
            WeightDist::Uniform { lo, hi } => (lo, hi),
            WeightDist::SparseUniform { lo, hi, density } => {
                if !(density > 0.0 && density <= 1.0) {
                    return Err(Error::invalid(format!(
                        "density must lie in (0, 1], got {density}"
                    )));
                }
                (lo, hi)
            }
        };
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "uniform bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Draws a `rows × cols` matrix from the stream labelled `label`.
pub fn rng_matrix(
    rng: &SeededRng,
    label: &str,
    rows: usize,
    cols: usize,
    dist: WeightDist,
) -> Result<Matrix> {
    dist.validate()?;
    let mut s = rng.stream(label);
    let data = match dist {
        WeightDist::Uniform { lo, hi } => (0..rows * cols)
            .map(|_| s.random_range(lo..hi))
            .collect(),
        WeightDist::SparseUniform { lo, hi, density } => (0..rows * cols)
            .map(|_| {
                let keep = s.random::<f64>() < density;
                let v = s.random_range(lo..hi);
                if keep {
                    v
                } else {
                    0.0
                }
            })
            .collect(),
    };
    Matrix::from_vec(rows, cols, data)
}
