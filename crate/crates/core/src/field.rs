//! Prime-field arithmetic and the erasure-coding layer built on it.
//!
//! All protocol payloads are vectors of words, where a word is a residue
//! modulo the Mersenne prime `P = 2^61 - 1`. A message of `l + 1` words is
//! read as the coefficients (lowest first) of a polynomial `p` of degree at
//! most `l`; party `j` (1-indexed) receives the chunk
//! `(p((j-1)c + 1), ..., p(jc))` with `c = ceil((l+1)/(f+1))`, so any `f + 1`
//! complete chunks carry enough evaluations to reconstruct `p` exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Field modulus `2^61 - 1`.
pub const P: u64 = (1 << 61) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("message must contain at least one word")]
    EmptyMessage,
    #[error("word {0} is outside [0, 2^61 - 1)")]
    InvalidWord(u64),
    #[error("duplicate abscissa {0}")]
    DuplicateAbscissa(u64),
    #[error("need {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
}

/// A residue modulo [`P`]. Always canonical: the wrapped word is in `[0, P)`.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElem(u64);

impl FieldElem {
    pub const ZERO: FieldElem = FieldElem(0);
    pub const ONE: FieldElem = FieldElem(1);

    /// Ingests an externally supplied word, rejecting anything outside `[0, P)`.
    pub fn new(word: u64) -> Result<FieldElem, FieldError> {
        if word < P {
            Ok(FieldElem(word))
        } else {
            Err(FieldError::InvalidWord(word))
        }
    }

    /// Reduces an arbitrary integer into the field.
    pub fn from_u64(value: u64) -> FieldElem {
        FieldElem(reduce64(value))
    }

    pub fn word(self) -> u64 {
        self.0
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: FieldElem) -> FieldElem {
        FieldElem(reduce64(self.0 + rhs.0))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: FieldElem) -> FieldElem {
        FieldElem(reduce64(self.0 + P - rhs.0))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: FieldElem) -> FieldElem {
        FieldElem(reduce128(self.0 as u128 * rhs.0 as u128))
    }

    pub fn pow(self, mut exp: u64) -> FieldElem {
        let mut base = self;
        let mut acc = FieldElem::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat. The zero element has no inverse;
    /// callers guarantee nonzero input (distinct abscissae).
    pub fn inv(self) -> FieldElem {
        debug_assert!(self.0 != 0, "inverse of zero");
        self.pow(P - 2)
    }
}

fn reduce64(x: u64) -> u64 {
    // x < 2^63, so one fold plus a conditional subtract suffices.
    let folded = (x & P) + (x >> 61);
    if folded >= P {
        folded - P
    } else {
        folded
    }
}

fn reduce128(x: u128) -> u64 {
    let lo = (x & P as u128) as u64;
    let hi = (x >> 61) as u64;
    reduce64(reduce64(lo + (hi & P)) + (hi >> 61))
}

/// A polynomial over the field, coefficients lowest-degree first.
///
/// Canonical form trims trailing zero coefficients; the zero polynomial is
/// the empty coefficient vector.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Poly {
    coeffs: Vec<FieldElem>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<FieldElem>) -> Poly {
        while coeffs.last() == Some(&FieldElem::ZERO) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn coeffs(&self) -> &[FieldElem] {
        &self.coeffs
    }

    /// Degree of the polynomial, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: FieldElem) -> FieldElem {
        let mut acc = FieldElem::ZERO;
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(x).add(*c);
        }
        acc
    }

    /// Coefficient words padded with zeros to `len` entries.
    pub fn words_padded(&self, len: usize) -> Vec<u64> {
        let mut out: Vec<u64> = self.coeffs.iter().map(|c| c.word()).collect();
        out.resize(len, 0);
        out
    }
}

/// Chunk length for a message of `len` words under resilience `f`.
pub fn chunk_len(len: usize, f: usize) -> usize {
    len.div_ceil(f + 1)
}

/// Splits `msg` into `n` chunks of `c = ceil(len/(f+1))` evaluations each.
///
/// Chunk `j` (1-indexed) holds `p((j-1)c + 1), ..., p(jc)` where `p` has
/// `msg` as its coefficient vector.
pub fn encode_chunks(msg: &[u64], n: usize, f: usize) -> Result<Vec<Vec<FieldElem>>, FieldError> {
    if msg.is_empty() {
        return Err(FieldError::EmptyMessage);
    }
    let coeffs = msg
        .iter()
        .map(|&w| FieldElem::new(w))
        .collect::<Result<Vec<_>, _>>()?;
    let p = Poly { coeffs };
    let c = chunk_len(msg.len(), f);
    let mut chunks = Vec::with_capacity(n);
    for j in 1..=n {
        let start = (j - 1) * c + 1;
        let chunk = (start..start + c)
            .map(|x| p.eval(FieldElem::from_u64(x as u64)))
            .collect();
        chunks.push(chunk);
    }
    Ok(chunks)
}

/// Interpolates the unique polynomial of degree at most `degree_bound`
/// through the first `degree_bound + 1` points; later points are ignored.
///
/// Abscissae within the used prefix must be distinct.
pub fn interpolate(points: &[(u64, u64)], degree_bound: usize) -> Result<Poly, FieldError> {
    let needed = degree_bound + 1;
    if points.len() < needed {
        return Err(FieldError::InsufficientPoints {
            needed,
            got: points.len(),
        });
    }
    let mut xs = Vec::with_capacity(needed);
    let mut ys = Vec::with_capacity(needed);
    for &(x, y) in &points[..needed] {
        let xe = FieldElem::new(x)?;
        if xs.contains(&xe) {
            return Err(FieldError::DuplicateAbscissa(x));
        }
        xs.push(xe);
        ys.push(FieldElem::new(y)?);
    }

    // full(x) = prod_i (x - x_i), then per-point synthetic division keeps the
    // whole interpolation at O(k^2) field operations with exact inverses.
    let mut full = vec![FieldElem::ZERO; needed + 1];
    full[0] = FieldElem::ONE;
    for (deg, &x) in xs.iter().enumerate() {
        full[deg + 1] = full[deg];
        for k in (1..=deg).rev() {
            full[k] = full[k - 1].sub(full[k].mul(x));
        }
        full[0] = FieldElem::ZERO.sub(full[0].mul(x));
    }

    let mut acc = vec![FieldElem::ZERO; needed];
    let mut quotient = vec![FieldElem::ZERO; needed];
    for i in 0..needed {
        // quotient = full / (x - x_i), exact by construction.
        let mut carry = FieldElem::ZERO;
        for k in (0..needed).rev() {
            carry = full[k + 1].add(carry.mul(xs[i]));
            quotient[k] = carry;
        }
        let denom = {
            let mut d = FieldElem::ONE;
            for (j, &x) in xs.iter().enumerate() {
                if j != i {
                    d = d.mul(xs[i].sub(x));
                }
            }
            d
        };
        let scale = ys[i].mul(denom.inv());
        for k in 0..needed {
            acc[k] = acc[k].add(quotient[k].mul(scale));
        }
    }
    Ok(Poly::new(acc))
}
