//! Dense symmetric positive definite bookkeeping for regularized design matrices.
//!
//! A [`DesignState`] keeps three views of the same matrix in sync:
//!
//! ```text
//!   sigma     = lambda * I + sum_i phi_i phi_i^T
//!   sigma_inv = sigma^{-1}                       (Sherman-Morrison, O(d^2))
//!   chol_inv  = L,  L L^T = sigma_inv            (rank-one Cholesky downdate, O(d^2))
//! ```
//!
//! Every `recompute_period` updates the inverse and its factor are rebuilt
//! from `sigma` by direct factorization so rounding drift stays bounded.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Maximum tolerated `max|sigma * sigma_inv - I|`.
pub const STRUCTURAL_TOL: f64 = 1e-8;
/// Tolerance for accounting identities (sums of outer products, feature sums).
pub const ACCOUNTING_TOL: f64 = 1e-9;
pub const DEFAULT_RECOMPUTE_PERIOD: usize = 64;

/// Square dense matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn scaled_identity(dim: usize, scale: T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = scale;
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "matrix of dimension {dim} needs {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.dim).map(|i| dot(self.row(i), x)).collect()
    }

    /// `x^T M x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        (0..self.dim).map(|i| x[i] * dot(self.row(i), x)).sum()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `M += w * x x^T`.
    pub fn add_outer(&mut self, x: &[T], w: T) {
        let d = self.dim;
        for i in 0..d {
            let xi = w * x[i];
            for j in 0..d {
                self.data[i * d + j] += xi * x[j];
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// `max |M - I|` entrywise.
    pub fn max_abs_from_identity(&self) -> T {
        let d = self.dim;
        let mut m = T::zero();
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { T::one() } else { T::zero() };
                m = m.max((self[(i, j)] - target).abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        let half = T::lit(0.5);
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = half * (self.data[i * d + j] + self.data[j * d + i]);
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg;
            }
        }
    }

    /// Lower Cholesky factor `L` with `L L^T = self`.
    pub fn cholesky(&self) -> Result<Self> {
        let d = self.dim;
        let mut l = Self::zeros(d);
        for j in 0..d {
            let mut diag = self[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite (pivot {j} = {diag:e})"
                )));
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..d {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(l)
    }

    /// Inverse of a symmetric positive definite matrix through its Cholesky factor.
    pub fn spd_inverse(&self) -> Result<Self> {
        let d = self.dim;
        let l = self.cholesky()?;
        // Solve L L^T X = I column by column.
        let mut inv = Self::zeros(d);
        let mut col = vec![T::zero(); d];
        for c in 0..d {
            for i in 0..d {
                let mut s = if i == c { T::one() } else { T::zero() };
                for k in 0..i {
                    s -= l[(i, k)] * col[k];
                }
                col[i] = s / l[(i, i)];
            }
            for i in (0..d).rev() {
                let mut s = col[i];
                for k in (i + 1)..d {
                    s -= l[(k, i)] * col[k];
                }
                col[i] = s / l[(i, i)];
            }
            for i in 0..d {
                inv[(i, c)] = col[i];
            }
        }
        inv.symmetrize();
        Ok(inv)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

/// Which quadratic form [`DesignState::mahalanobis_norm`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `sqrt(phi^T sigma^{-1} phi)`
    Inverse,
    /// `sqrt(phi^T sigma phi)`
    Forward,
}

/// Regularized design matrix together with its inverse and the Cholesky
/// factor of the inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState<T> {
    lambda: T,
    sigma: Matrix<T>,
    sigma_inv: Matrix<T>,
    chol_inv: Matrix<T>,
    update_count: usize,
    recompute_period: usize,
}

impl<T: Scalar> DesignState<T> {
    pub fn new(dim: usize, lambda: T, recompute_period: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("design dimension must be at least 1"));
        }
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
        }
        if recompute_period == 0 {
            return Err(Error::invalid("recompute period must be positive"));
        }
        Ok(Self {
            lambda,
            sigma: Matrix::scaled_identity(dim, lambda),
            sigma_inv: Matrix::scaled_identity(dim, lambda.recip()),
            chol_inv: Matrix::scaled_identity(dim, lambda.recip().sqrt()),
            update_count: 0,
            recompute_period,
        })
    }

    /// Rebuilds a state from a stored `sigma`, deriving the inverse and factor directly.
    pub fn from_sigma(
        sigma: Matrix<T>,
        lambda: T,
        update_count: usize,
        recompute_period: usize,
    ) -> Result<Self> {
        let mut ds = Self::new(sigma.dim(), lambda, recompute_period)?;
        ds.sigma = sigma;
        ds.update_count = update_count;
        ds.refactor()?;
        Ok(ds)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn sigma(&self) -> &Matrix<T> {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &Matrix<T> {
        &self.sigma_inv
    }

    pub fn chol_inv(&self) -> &Matrix<T> {
        &self.chol_inv
    }

    pub fn update_count(&self) -> usize {
        self.update_count
    }

    pub fn recompute_period(&self) -> usize {
        self.recompute_period
    }

    fn check_dim(&self, phi: &[T]) -> Result<()> {
        if phi.len() != self.dim() {
            return Err(Error::invalid(format!(
                "feature has length {}, design dimension is {}",
                phi.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Absorbs `phi phi^T` into the design.
    pub fn rank_one_update(&mut self, phi: &[T]) -> Result<()> {
        self.check_dim(phi)?;
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite feature in rank-one update".into()));
        }
        self.update_count += 1;
        if phi.iter().all(|&x| x == T::zero()) {
            return Ok(());
        }
        self.sigma.add_outer(phi, T::one());

        if self.update_count % self.recompute_period == 0 {
            return self.refactor();
        }

        let u = self.sigma_inv.mul_vec(phi);
        let denom = T::one() + dot(phi, &u);
        if !(denom > T::zero()) || !denom.is_finite() {
            return self.refactor();
        }
        self.sigma_inv.add_outer(&u, -denom.recip());
        self.sigma_inv.symmetrize();

        let scale = denom.sqrt().recip();
        let mut v: Vec<T> = u.iter().map(|&x| x * scale).collect();
        if !cholesky_downdate(&mut self.chol_inv, &mut v) {
            self.chol_inv = self.sigma_inv.cholesky()?;
        }
        if !self.sigma_inv.is_finite() {
            return Err(Error::Numeric("design inverse became non-finite".into()));
        }
        Ok(())
    }

    /// Recomputes `sigma_inv` and `chol_inv` from `sigma` by direct factorization.
    pub fn refactor(&mut self) -> Result<()> {
        if !self.sigma.is_finite() {
            return Err(Error::Numeric("design matrix has non-finite entries".into()));
        }
        self.sigma_inv = self.sigma.spd_inverse()?;
        self.chol_inv = self.sigma_inv.cholesky()?;
        Ok(())
    }

    pub fn mahalanobis_norm(&self, phi: &[T], which: NormKind) -> Result<T> {
        self.check_dim(phi)?;
        let m = match which {
            NormKind::Inverse => &self.sigma_inv,
            NormKind::Forward => &self.sigma,
        };
        Ok(m.quad_form(phi).max(T::zero()).sqrt())
    }

    /// `‖phi‖_{sigma^{-1}}` without the dimension check, for hot loops.
    #[inline]
    pub(crate) fn inverse_norm_unchecked(&self, phi: &[T]) -> T {
        self.sigma_inv.quad_form(phi).max(T::zero()).sqrt()
    }

    /// Ridge solution `sigma^{-1} b`.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        self.check_dim(rhs)?;
        Ok(self.sigma_inv.mul_vec(rhs))
    }

    /// Draws from `N(0, variance_scale * sigma^{-1})`.
    pub fn sample_gaussian<R: Rng + ?Sized>(&self, variance_scale: T, rng: &mut R) -> Result<Vec<T>> {
        if !(variance_scale >= T::zero()) || !variance_scale.is_finite() {
            return Err(Error::invalid(format!(
                "variance scale must be nonnegative and finite, got {variance_scale}"
            )));
        }
        let d = self.dim();
        let z: Vec<T> = (0..d)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let scale = variance_scale.sqrt();
        Ok((0..d)
            .map(|i| {
                let row = self.chol_inv.row(i);
                scale * dot(&row[..=i], &z[..=i])
            })
            .collect())
    }

    /// `max |sigma * sigma_inv - I|`.
    pub fn inverse_residual(&self) -> T {
        self.sigma.matmul(&self.sigma_inv).max_abs_from_identity()
    }

    /// `max |chol_inv * chol_inv^T - sigma_inv|`.
    pub fn factor_residual(&self) -> T {
        self.chol_inv
            .matmul(&self.chol_inv.transpose())
            .max_abs_diff(&self.sigma_inv)
    }
}

/// In-place rank-one downdate: given lower `L` with `L L^T = M`, overwrites it
/// with the factor of `M - v v^T`. Returns false (leaving `L` partially
/// modified) if the result would not be positive definite.
fn cholesky_downdate<T: Scalar>(l: &mut Matrix<T>, v: &mut [T]) -> bool {
    let d = l.dim();
    for k in 0..d {
        let lkk = l[(k, k)];
        let r2 = lkk * lkk - v[k] * v[k];
        if !(r2 > T::zero()) {
            return false;
        }
        let r = r2.sqrt();
        let c = r / lkk;
        let s = v[k] / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..d {
            let lik = (l[(i, k)] - s * v[i]) / c;
            l[(i, k)] = lik;
            v[i] = c * v[i] - s * lik;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = crate::scalar::norm2(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn fresh_design_is_scaled_identity() {
        let ds = DesignState::new(2, 1.0, 64).unwrap();
        assert_eq!(ds.sigma(), &Matrix::scaled_identity(2, 1.0));
        assert_eq!(ds.sigma_inv(), &Matrix::scaled_identity(2, 1.0));

        let ds = DesignState::new(3, 4.0, 64).unwrap();
        assert_eq!(ds.chol_inv(), &Matrix::scaled_identity(3, 0.5));

        let ds = DesignState::new(1, 2.0, 64).unwrap();
        assert_eq!(ds.sigma_inv().as_slice(), &[0.5]);
        assert_eq!(ds.update_count(), 0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(DesignState::<f64>::new(0, 1.0, 64), Err(Error::InvalidArgument(_))));
        assert!(matches!(DesignState::new(2, 0.0, 64), Err(Error::InvalidArgument(_))));
        assert!(matches!(DesignState::new(2, -1.0, 64), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn update_along_basis_vector() {
        let mut ds = DesignState::new(2, 1.0, 64).unwrap();
        ds.rank_one_update(&[1.0, 0.0]).unwrap();
        assert_eq!(ds.sigma().as_slice(), &[2.0, 0.0, 0.0, 1.0]);
        assert!(ds.sigma_inv().max_abs_diff(&Matrix::from_row_major(2, vec![0.5, 0.0, 0.0, 1.0]).unwrap()) < 1e-15);
        assert_eq!(ds.update_count(), 1);
    }

    #[test]
    fn zero_update_leaves_matrices() {
        let mut ds = DesignState::new(3, 1.5, 64).unwrap();
        let before = ds.clone();
        ds.rank_one_update(&[0.0; 3]).unwrap();
        assert_eq!(ds.sigma(), before.sigma());
        assert_eq!(ds.sigma_inv(), before.sigma_inv());
        assert_eq!(ds.chol_inv(), before.chol_inv());
    }

    #[test]
    fn update_errors() {
        let mut ds = DesignState::new(2, 1.0, 64).unwrap();
        assert!(matches!(ds.rank_one_update(&[1.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(ds.rank_one_update(&[f64::NAN, 0.0]), Err(Error::Numeric(_))));
        assert!(matches!(
            ds.mahalanobis_norm(&[1.0, 2.0, 3.0], NormKind::Inverse),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn thousand_updates_track_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ds = DesignState::new(5, 1.0, DEFAULT_RECOMPUTE_PERIOD).unwrap();
        for _ in 0..1000 {
            let phi = unit_vector(&mut rng, 5);
            ds.rank_one_update(&phi).unwrap();
            assert!(ds.inverse_residual() <= STRUCTURAL_TOL);
            assert!(ds.factor_residual() <= STRUCTURAL_TOL);
        }
        let direct = ds.sigma().spd_inverse().unwrap();
        assert!(ds.sigma_inv().max_abs_diff(&direct) <= STRUCTURAL_TOL);
    }

    #[test]
    fn norms_on_fresh_designs() {
        let ds = DesignState::new(3, 1.0, 64).unwrap();
        assert_eq!(ds.mahalanobis_norm(&[0.0, 1.0, 0.0], NormKind::Inverse).unwrap(), 1.0);
        let ds = DesignState::new(3, 4.0, 64).unwrap();
        assert_eq!(ds.mahalanobis_norm(&[0.0, 0.0, 1.0], NormKind::Inverse).unwrap(), 0.5);
        assert_eq!(ds.mahalanobis_norm(&[0.0, 0.0, 1.0], NormKind::Forward).unwrap(), 2.0);
    }

    #[test]
    fn sampling_contracts() {
        let ds = DesignState::new(3, 1.0, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(ds.sample_gaussian(0.0, &mut rng).unwrap(), vec![0.0; 3]);
        assert!(matches!(ds.sample_gaussian(-1.0, &mut rng), Err(Error::InvalidArgument(_))));

        let a = ds.sample_gaussian(1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = ds.sample_gaussian(1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn downdate_matches_direct_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ds = DesignState::new(4, 1.0, 1_000_000).unwrap();
        for _ in 0..50 {
            let phi = unit_vector(&mut rng, 4);
            ds.rank_one_update(&phi).unwrap();
        }
        let direct = ds.sigma_inv().cholesky().unwrap();
        assert!(ds.chol_inv().max_abs_diff(&direct) < 1e-10);
    }

    #[test]
    fn works_in_single_precision() {
        let mut ds = DesignState::<f32>::new(3, 1.0, 64).unwrap();
        ds.rank_one_update(&[0.5, 0.5, 0.0]).unwrap();
        ds.rank_one_update(&[0.0, 0.3, 0.9]).unwrap();
        assert!(ds.inverse_residual() < 1e-5);
        assert!(ds.factor_residual() < 1e-5);
    }
}
