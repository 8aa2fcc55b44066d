//! Named random streams derived from one master seed.

use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Synthetic data generation.
    Data,
    /// Parameter initialization.
    Init,
    /// Minibatch shuffling and Shapley permutations.
    Sampling,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Data => "data",
            Stream::Init => "init",
            Stream::Sampling => "sampling",
        }
    }
}

/// Seed for the `index`-th consumer of `stream`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stream.as_str().as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_and_indices_differ() {
        let a = derive_seed(7, Stream::Init, 0);
        assert_eq!(a, derive_seed(7, Stream::Init, 0));
        assert_ne!(a, derive_seed(7, Stream::Init, 1));
        assert_ne!(a, derive_seed(7, Stream::Sampling, 0));
        assert_ne!(a, derive_seed(8, Stream::Init, 0));
    }
}
