use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{NoteEmbedder, NotesError};

/// Pseudo-random standard-normal vector for one token, a pure function of
/// `(token, dim, seed)` on every platform.
pub fn hash_token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Mean of the token vectors; zero for an empty list.
pub fn hash_embed(tokens: &[String], dim: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if tokens.is_empty() {
        return out;
    }
    for t in tokens {
        for (o, v) in out.iter_mut().zip(hash_token_vector(t, dim, seed)) {
            *o += v;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, NotesError> {
        if dim < 8 {
            return Err(NotesError::DimensionTooSmall(dim));
        }
        Ok(Self { dim, seed })
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        hash_token_vector(token, self.dim, self.seed)
    }
}

impl NoteEmbedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Vec<f64> {
        hash_embed(tokens, self.dim, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_list_is_zero() {
        assert!(hash_embed(&[], 768, 1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pair_is_mean_of_singles() {
        let a = hash_embed(&["a".into()], 32, 7);
        let b = hash_embed(&["b".into()], 32, 7);
        let ab = hash_embed(&["a".into(), "b".into()], 32, 7);
        for i in 0..32 {
            assert!((ab[i] - (a[i] + b[i]) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn seed_changes_vector() {
        assert_ne!(hash_token_vector("x", 8, 0), hash_token_vector("x", 8, 1));
    }

    #[test]
    fn small_dim_rejected() {
        assert!(matches!(
            HashEmbedder::new(7, 0),
            Err(NotesError::DimensionTooSmall(7))
        ));
    }
}
