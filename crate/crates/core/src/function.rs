//! Complex-valued functions on an affine space, stored in canonical point order.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::space::AffineSpace;

/// Slack allowed when checking `|f| ≤ 1`.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SpaceFunction {
    domain: AffineSpace,
    values: Vec<Complex64>,
    bounded: bool,
}

impl SpaceFunction {
    pub fn new(domain: AffineSpace, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DimensionMismatch {
                expected: domain.len(),
                got: values.len(),
            });
        }
        Ok(SpaceFunction {
            domain,
            values,
            bounded: false,
        })
    }

    /// Like [`SpaceFunction::new`] but verifies `|f| ≤ 1` and records it.
    pub fn bounded(domain: AffineSpace, values: Vec<Complex64>) -> Result<Self> {
        let mut f = SpaceFunction::new(domain, values)?;
        f.check_bounded()?;
        f.bounded = true;
        Ok(f)
    }

    pub fn real(domain: AffineSpace, values: &[f64]) -> Result<Self> {
        SpaceFunction::new(domain, values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn constant(domain: AffineSpace, value: Complex64) -> Self {
        let n = domain.len();
        let bounded = value.norm() <= 1.0 + BOUND_SLACK;
        SpaceFunction {
            domain,
            values: vec![value; n],
            bounded,
        }
    }

    /// `1_A` for a membership mask in canonical order.
    pub fn indicator(domain: AffineSpace, members: &[bool]) -> Result<Self> {
        let values = members
            .iter()
            .map(|&b| Complex64::new(if b { 1.0 } else { 0.0 }, 0.0))
            .collect();
        let mut f = SpaceFunction::new(domain, values)?;
        f.bounded = true;
        Ok(f)
    }

    pub fn domain(&self) -> &AffineSpace {
        &self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn check_bounded(&self) -> Result<()> {
        match self
            .values
            .iter()
            .position(|v| v.norm() > 1.0 + BOUND_SLACK)
        {
            Some(index) => Err(Error::Unbounded {
                index,
                magnitude: self.values[index].norm(),
            }),
            None => Ok(()),
        }
    }

    /// Errors unless every imaginary part is within `tol` of zero.
    pub fn check_real(&self, tol: f64) -> Result<()> {
        match self.values.iter().position(|v| v.im.abs() > tol) {
            Some(index) => Err(Error::NotReal {
                index,
                imag: self.values[index].im,
            }),
            None => Ok(()),
        }
    }

    pub fn mean(&self) -> Complex64 {
        par::pairwise_sum_c(&self.values) / self.values.len() as f64
    }

    /// `E_W |f|²`.
    pub fn mean_sq(&self) -> f64 {
        let v: Vec<f64> = self.values.iter().map(|c| c.norm_sqr()).collect();
        par::pairwise_sum(&v) / v.len() as f64
    }

    pub fn same_domain(&self, other: &SpaceFunction) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(())
    }

    pub fn sub(&self, other: &SpaceFunction) -> Result<SpaceFunction> {
        self.same_domain(other)?;
        SpaceFunction::new(
            self.domain.clone(),
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        )
    }

    /// Restriction to a subspace of the domain.
    pub fn restrict(&self, sub: &AffineSpace) -> Result<SpaceFunction> {
        let idx = sub.indices_in(&self.domain)?;
        Ok(SpaceFunction {
            domain: sub.clone(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            bounded: self.bounded,
        })
    }

    /// The same values on a space with the same number of points; used to
    /// re-base a function onto another coordinate description.
    pub fn relabel(&self, domain: AffineSpace, permutation: &[usize]) -> Result<SpaceFunction> {
        if domain.len() != self.len() || permutation.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: domain.len(),
            });
        }
        let mut values = vec![Complex64::new(0.0, 0.0); self.len()];
        for (i, &j) in permutation.iter().enumerate() {
            values[j] = self.values[i];
        }
        Ok(SpaceFunction {
            domain,
            values,
            bounded: self.bounded,
        })
    }
}
