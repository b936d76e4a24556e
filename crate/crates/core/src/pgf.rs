//! Truncated probability generating functions.
//!
//! Coefficients up to the truncation degree are exact (up to rounding): a
//! product or composition of power series only ever needs the low-order
//! coefficients of its arguments to produce its own low-order coefficients.
//! Mass beyond the degree is reported as `tail_mass`.

use serde::Serialize;

use crate::env::OffspringLaw;
use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 256;
pub const MAX_DEGREE: usize = 1 << 14;
/// Auto-doubling stops once the unrepresented mass drops below this.
pub const TAIL_TARGET: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedPgf {
    coeffs: Vec<f64>,
    tail_mass: f64,
}

pub(crate) fn check_degree(degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        Err(Error::DegreeOverflow { required: degree, cap: MAX_DEGREE })
    } else {
        Ok(())
    }
}

impl TruncatedPgf {
    /// Series with the given coefficients; the tail is whatever is missing
    /// from total mass one.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Precondition("a series needs at least one coefficient".into()));
        }
        check_degree(coeffs.len() - 1)?;
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::Precondition(format!("coefficient {c} is negative")));
        }
        Ok(Self::from_raw(coeffs))
    }

    fn from_raw(coeffs: Vec<f64>) -> Self {
        let tail_mass = 1.0 - coeffs.iter().sum::<f64>();
        TruncatedPgf { coeffs, tail_mass }
    }

    /// s, truncated at `degree >= 1`.
    pub fn identity(degree: usize) -> Result<Self> {
        check_degree(degree)?;
        let mut coeffs = vec![0.0; degree.max(1) + 1];
        coeffs[1] = 1.0;
        Ok(Self::from_raw(coeffs))
    }

    /// Degree-zero series; `c = 1` is the pgf of the point mass at zero.
    pub fn constant(c: f64) -> Self {
        Self::from_raw(vec![c])
    }

    pub fn from_law(law: &OffspringLaw, degree: usize) -> Result<Self> {
        check_degree(degree)?;
        let coeffs = (0..=degree).map(|k| law.prob(k)).collect();
        Ok(Self::from_raw(coeffs))
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn coeff(&self, j: usize) -> Result<f64> {
        self.coeffs
            .get(j)
            .copied()
            .ok_or(Error::DegreeTooSmall { requested: j, degree: self.degree() })
    }

    /// Evaluates the represented polynomial; the tail is ignored.
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn truncate(&self, degree: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.truncate(degree + 1);
        Self::from_raw(coeffs)
    }

    /// Product of two series, at the smaller of the two degrees.
    pub fn mul(&self, other: &Self) -> Self {
        let d = self.degree().min(other.degree());
        Self::from_raw(mul_trunc(&self.coeffs, &other.coeffs, d))
    }

    /// `self ∘ inner` at the degree of `inner`.
    ///
    /// Only the represented coefficients of `self` are used, so any tail of
    /// the outer series ends up in the tail of the result.
    pub fn compose(&self, inner: &Self) -> Self {
        let d = inner.degree();
        let mut acc = vec![0.0; d + 1];
        for c in self.coeffs.iter().rev() {
            acc = mul_trunc(&acc, &inner.coeffs, d);
            acc[0] += c;
        }
        Self::from_raw(acc)
    }

    /// `self^z` by binary exponentiation; all intermediate terms are
    /// nonnegative so there is no cancellation.
    pub fn power(&self, z: usize) -> Self {
        let d = self.degree();
        let mut result = vec![0.0; d + 1];
        result[0] = 1.0;
        let mut base = self.coeffs.clone();
        let mut e = z;
        while e > 0 {
            if e & 1 == 1 {
                result = mul_trunc(&result, &base, d);
            }
            e >>= 1;
            if e > 0 {
                base = mul_trunc(&base, &base, d);
            }
        }
        Self::from_raw(result)
    }
}

/// Coefficients of a * b up to degree d.
pub(crate) fn mul_trunc(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d + 1];
    for (i, &ai) in a.iter().enumerate().take(d + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(d + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// `f ∘ inner` for an offspring law `f`, using the whole law rather than a
/// truncation of it, so every coefficient up to the degree of `inner` is
/// exact.
pub fn apply_law(law: &OffspringLaw, inner: &TruncatedPgf) -> TruncatedPgf {
    let d = inner.degree();
    let g = &inner.coeffs;
    match law {
        OffspringLaw::Finite { probs } => {
            let mut acc = vec![0.0; d + 1];
            for p in probs.iter().rev() {
                acc = mul_trunc(&acc, g, d);
                acc[0] += p;
            }
            TruncatedPgf::from_raw(acc)
        }
        OffspringLaw::LinearFractional { .. } => {
            // f(g) = atom + (1 - atom)(1 - r) h with h = g / (1 - r g).
            // The division recursion only adds nonnegative terms.
            let shape = law.lf_shape().unwrap();
            let r = shape.ratio;
            let d0 = 1.0 - r * g[0];
            let mut h = vec![0.0; d + 1];
            for k in 0..=d {
                let mut acc = g[k];
                for i in 1..=k {
                    acc += r * g[i] * h[k - i];
                }
                h[k] = acc / d0;
            }
            let scale = (1.0 - shape.atom) * (1.0 - r);
            let mut out: Vec<f64> = h.iter().map(|x| scale * x).collect();
            out[0] += shape.atom;
            TruncatedPgf::from_raw(out)
        }
    }
}
