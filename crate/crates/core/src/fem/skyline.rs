//! Symmetric skyline storage with an unpivoted `LDLᵀ` factorization that
//! works for any [`Scalar`] (complex-symmetric, not Hermitian, in the
//! complex case).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row profile of a symmetric matrix: row `i` stores columns
/// `first[i]..=i` of the lower triangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    first: Vec<usize>,
    offsets: Vec<usize>,
}

impl Profile {
    /// Builds the profile from the first nonzero column of every row.
    pub fn new(first: Vec<usize>) -> Profile {
        let mut offsets = Vec::with_capacity(first.len() + 1);
        offsets.push(0);
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile column {f} beyond the diagonal of row {i}");
            offsets.push(offsets[i] + (i - f + 1));
        }
        Profile { first, offsets }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn first(&self, i: usize) -> usize {
        self.first[i]
    }

    fn index(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        (j >= self.first[i]).then(|| self.offsets[i] + j - self.first[i])
    }
}

#[derive(Debug, Clone)]
pub struct SkylineMatrix<S> {
    profile: Profile,
    values: Vec<S>,
}

impl<S: Scalar> SkylineMatrix<S> {
    pub fn zeros(profile: Profile) -> Self {
        let values = vec![S::zero(); profile.len()];
        SkylineMatrix { profile, values }
    }

    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Entry `(i, j)`; zero outside the profile.
    pub fn get(&self, i: usize, j: usize) -> S {
        self.profile
            .index(i, j)
            .map_or_else(S::zero, |idx| self.values[idx])
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    ///
    /// # Panics
    ///
    /// Panics if `(i, j)` lies outside the profile.
    pub fn add(&mut self, i: usize, j: usize, v: S) {
        let idx = self
            .profile
            .index(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the skyline profile"));
        self.values[idx] += v;
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        let n = self.dim();
        let mut y = vec![S::zero(); n];
        for i in 0..n {
            let f = self.profile.first[i];
            let row = &self.values[self.profile.offsets[i]..self.profile.offsets[i + 1]];
            for (c, &a) in row.iter().enumerate() {
                let j = f + c;
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Largest absolute diagonal real part.
    pub fn diagonal_scale(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.get(i, i).re().abs())
            .fold(0.0, f64::max)
    }

    /// In-place Crout factorization `A = L D Lᵀ` without pivoting.
    ///
    /// Fails with [`Error::SolverBreakdown`] when a pivot's real part falls
    /// below `1e-14` times the diagonal scale.
    pub fn factor(mut self) -> Result<LdlFactor<S>> {
        let n = self.dim();
        let tol = 1e-14 * self.diagonal_scale();
        let mut diag = vec![S::zero(); n];
        let p = &self.profile;
        for i in 0..n {
            let fi = p.first[i];
            let oi = p.offsets[i];
            // g_ij = a_ij − Σ_k g_ik l_jk, stored in place of row i
            for j in fi..i {
                let fj = p.first[j];
                let oj = p.offsets[j];
                let start = fi.max(fj);
                let mut s = self.values[oi + j - fi];
                for k in start..j {
                    s -= self.values[oi + k - fi] * self.values[oj + k - fj];
                }
                self.values[oi + j - fi] = s;
            }
            let mut d = self.values[oi + i - fi];
            for j in fi..i {
                let g = self.values[oi + j - fi];
                let l = g / diag[j];
                d -= g * l;
                self.values[oi + j - fi] = l;
            }
            if !(d.re().abs() > tol) {
                return Err(Error::SolverBreakdown { row: i, pivot: d.re() });
            }
            diag[i] = d;
            self.values[oi + i - fi] = S::one();
        }
        Ok(LdlFactor {
            lower: self,
            diag,
        })
    }
}

/// Factors `L` (unit lower, skyline) and `D` of an `LDLᵀ` decomposition.
#[derive(Debug, Clone)]
pub struct LdlFactor<S> {
    lower: SkylineMatrix<S>,
    diag: Vec<S>,
}

impl<S: Scalar> LdlFactor<S> {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[S] {
        &self.diag
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length");
        let p = &self.lower.profile;
        let v = &self.lower.values;
        let mut x = b.to_vec();
        for i in 0..n {
            let fi = p.first[i];
            let oi = p.offsets[i];
            let mut s = x[i];
            for j in fi..i {
                s -= v[oi + j - fi] * x[j];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] = x[i] / self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = p.first[i];
            let oi = p.offsets[i];
            let xi = x[i];
            for j in fi..i {
                x[j] -= v[oi + j - fi] * xi;
            }
        }
        x
    }
}
