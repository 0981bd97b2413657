//! Small dense matrices over macrostate indices.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex Hermitian `M x M` matrix with an identically zero diagonal.
///
/// Storage is row-major. Every mutator writes an entry and its conjugate
/// partner together, so Hermiticity holds bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct HollowHermitian {
    dim: usize,
    data: Vec<Complex64>,
}

impl HollowHermitian {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    /// Build from the strict upper triangle: `upper(n, m)` is called once for
    /// every `n < m` in row-major order.
    pub fn from_upper(dim: usize, mut upper: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut out = Self::zeros(dim);
        for n in 0..dim {
            for m in n + 1..dim {
                out.set_pair(n, m, upper(n, m));
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.data[n * self.dim + m]
    }

    /// Set entry `(n, m)` to `z` and `(m, n)` to `conj(z)`. Requires `n != m`.
    #[inline]
    pub fn set_pair(&mut self, n: usize, m: usize, z: Complex64) {
        debug_assert_ne!(n, m, "diagonal of a hollow Hermitian matrix is fixed at zero");
        self.data[n * self.dim + m] = z;
        self.data[m * self.dim + n] = z.conj();
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Exact structural check: zero diagonal and bitwise conjugate symmetry.
    pub fn is_hollow_hermitian(&self) -> bool {
        let zero = Complex64::new(0.0, 0.0);
        (0..self.dim)
            .all(|n| self.get(n, n) == zero && (n + 1..self.dim).all(|m| self.get(m, n) == self.get(n, m).conj()))
    }

    /// `self + scale * other`, entrywise.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b * scale).collect() }
    }
}

/// Real symmetric nonnegative matrix with zero diagonal holding the noise
/// amplitudes `sigma_nm`.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SigmaMatrix {
    /// Same amplitude `sigma` on every off-diagonal pair.
    pub fn uniform(dim: usize, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Invalid(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        let mut data = vec![sigma; dim * dim];
        for n in 0..dim {
            data[n * dim + n] = 0.0;
        }
        Ok(Self { dim, data })
    }

    /// From full rows; validates symmetry, nonnegativity and zero diagonal.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("sigma matrix must be square".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let out = Self { dim, data };
        for n in 0..dim {
            if out.get(n, n) != 0.0 {
                return Err(Error::Invalid(format!("sigma[{n}][{n}] must be 0")));
            }
            for m in 0..dim {
                let s = out.get(n, m);
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(Error::Invalid(format!("sigma[{n}][{m}] = {s} is not >= 0")));
                }
                if s != out.get(m, n) {
                    return Err(Error::Invalid(format!("sigma is not symmetric at ({n}, {m})")));
                }
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.data[n * self.dim + m]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }
}
