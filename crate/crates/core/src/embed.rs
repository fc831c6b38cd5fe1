//! Vectors, the embedding abstraction, and cosine similarity.
//!
//! The default embedder is token feature hashing: lowercase the text, split it
//! on runs of non-alphanumeric characters, hash every token with 64-bit
//! FNV-1a and add 1.0 at `hash mod d`, then L2-normalize. Text without tokens
//! maps to the zero vector. Any other embedder can be plugged in through the
//! [`Embedder`] trait as long as it keeps the store's dimension.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MemoryError, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Self {
        Vector(components)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// Unit basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Vector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    /// Returns the vector scaled to unit length; the zero vector stays zero.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for x in &mut self.0 {
                *x /= n;
            }
        }
        self
    }

    /// Component-wise mean of equal-length vectors. `None` for an empty input.
    pub fn mean<'a, I>(vectors: I) -> Result<Option<Vector>>
    where
        I: IntoIterator<Item = &'a Vector>,
    {
        let mut acc: Option<Vec<f64>> = None;
        let mut n = 0usize;
        for v in vectors {
            match acc.as_mut() {
                None => acc = Some(v.0.clone()),
                Some(a) => {
                    check_dim(a.len(), v.dim())?;
                    for (x, y) in a.iter_mut().zip(&v.0) {
                        *x += y;
                    }
                }
            }
            n += 1;
        }
        Ok(acc.map(|mut a| {
            for x in &mut a {
                *x /= n as f64;
            }
            Vector(a)
        }))
    }

    /// `self <- weight * self + (1 - weight) * other`.
    pub fn blend_toward(&mut self, other: &Vector, weight: f64) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        for (x, y) in self.0.iter_mut().zip(&other.0) {
            *x = weight * *x + (1.0 - weight) * y;
        }
        Ok(())
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nz: Vec<(usize, f64)> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(i, &x)| (i, x))
            .collect();
        write!(f, "Vector(d={}, nonzero={:?})", self.0.len(), nz)
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(MemoryError::DimensionMismatch { expected, found })
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    let dot = a.dot(b)?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

/// Text-to-vector map. Implementations must be deterministic.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vector;
}

/// Lowercased alphanumeric tokens of `text`, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the UTF-8 bytes of `token`.
pub fn token_hash(token: &str) -> u64 {
    token.bytes().fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn embed_default(text: &str, dim: usize) -> Vector {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut v = vec![0.0; dim];
    let mut any = false;
    for tok in tokenize(text) {
        v[(token_hash(&tok) % dim as u64) as usize] += 1.0;
        any = true;
    }
    let v = Vector(v);
    if any {
        v.normalized()
    } else {
        v
    }
}

#[derive(Clone, Debug)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        HashEmbedder { dim }
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vector {
        embed_default(text, self.dim)
    }
}
