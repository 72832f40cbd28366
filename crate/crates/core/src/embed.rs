//! Embedding providers and vector helpers.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub const HASHED_DIMENSION: usize = 256;
pub const HASHED_PROVIDER_TAG: &str = "local-hashed-bow-256";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingError {
    EmptyText,
    Provider(String),
    DimensionMismatch { expected: usize, found: usize },
}

impl fmt::Display for EmbeddingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingError::EmptyText => f.write_str("cannot embed empty text"),
            EmbeddingError::Provider(m) => write!(f, "embedding provider error: {m}"),
            EmbeddingError::DimensionMismatch { expected, found } => {
                write!(f, "embedding dimension {found} does not match {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EmbeddingError {}

/// Produces unit-norm vectors of a fixed dimension.
pub trait EmbeddingBackend {
    fn provider_tag(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError>;
}

impl<E: EmbeddingBackend + ?Sized> EmbeddingBackend for &E {
    fn provider_tag(&self) -> &str {
        (**self).provider_tag()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        (**self).embed(text)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercased tokens split on whitespace and ASCII/Unicode punctuation.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
}

/// Deterministic hashed bag-of-words embedder: FNV-1a of each lowercased
/// token selects one of 256 buckets, counts are L2-normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HashedEmbedder;

impl HashedEmbedder {
    pub fn bucket(token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % HASHED_DIMENSION as u64) as usize
    }
}

impl EmbeddingBackend for HashedEmbedder {
    fn provider_tag(&self) -> &str {
        HASHED_PROVIDER_TAG
    }

    fn dimension(&self) -> usize {
        HASHED_DIMENSION
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = vec![0.0; HASHED_DIMENSION];
        let mut any = false;
        for token in tokenize(text) {
            v[Self::bucket(&token)] += 1.0;
            any = true;
        }
        if !any {
            return Err(EmbeddingError::EmptyText);
        }
        normalize(&mut v);
        Ok(v)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Scales `v` to unit length in place. Zero vectors are left untouched.
pub fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let e = HashedEmbedder;
        let a = e.embed("The quick brown fox").unwrap();
        assert_eq!(a, e.embed("The quick brown fox").unwrap());
        assert!((norm(&a) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn bag_of_words_is_order_free() {
        let e = HashedEmbedder;
        let c = cosine(&e.embed("a b").unwrap(), &e.embed("b a").unwrap());
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_buckets_are_orthogonal() {
        assert_ne!(
            HashedEmbedder::bucket("alpha"),
            HashedEmbedder::bucket("zebra")
        );
        let e = HashedEmbedder;
        assert_eq!(
            cosine(&e.embed("alpha").unwrap(), &e.embed("zebra").unwrap()),
            0.0
        );
    }

    #[test]
    fn tokenizer_lowercases_and_splits_punctuation() {
        let t: Vec<String> = tokenize("Hello, WORLD!  foo-bar").collect();
        assert_eq!(t, ["hello", "world", "foo", "bar"]);
        assert_eq!(
            HashedEmbedder.embed(" ,.; "),
            Err(EmbeddingError::EmptyText)
        );
    }
}
