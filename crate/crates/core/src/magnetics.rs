//! Magnetic structure at the identity: inertia operator, right-invariant
//! primitive α, the exact two-form σ = dα, the Lorentz force and Mañé's
//! critical value.
//!
//! For right-invariant extensions both derivative terms of `dα(X, Y)` vanish
//! (α evaluated on a right-invariant field is constant), so at the identity
//! `σ(u, v) = −α([u, v])`.
//!
//! Two right-invariant primitives of the same σ differ by a covector β with
//! `β([u, v]) = 0` for all `u, v`, i.e. β in the annihilator of the derived
//! subalgebra. Since a right-invariant covector has constant dual norm, the
//! critical value reduces to the finite problem
//!
//! ```text
//! c = min { ½ |α + β|²_* : β ∈ Ann([g, g]) }
//! ```
//!
//! which is an equality-constrained convex quadratic program solved here
//! through its KKT system.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::{AlgebraVector, CircleBasis, Covector, LieAlgebra};
use crate::error::{check_dim, Error, Result};

/// Symmetric positive-definite operator `A` with `𝒢_e(u, v) = ⟨A u, v⟩`.
#[derive(Clone, Debug)]
pub struct InertiaOperator {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    sobolev_order: Option<f64>,
}

impl PartialEq for InertiaOperator {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix && self.sobolev_order == other.sobolev_order
    }
}

impl InertiaOperator {
    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::NotPositiveDefinite("matrix must be square and non-empty".into()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let scale = matrix.amax().max(1.0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite(format!("symmetry residual {asym:e}")));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        let inverse = chol.inverse();
        let op = Self {
            matrix,
            inverse,
            sobolev_order: None,
        };
        if op.min_eigenvalue() <= 0.0 {
            return Err(Error::NotPositiveDefinite("non-positive eigenvalue".into()));
        }
        Ok(op)
    }

    /// Gram matrix of the Sobolev inner product `⟨(1 − ∂²)^s u, v⟩_{L²}` in the
    /// real Fourier basis of the truncated circle algebra.
    pub fn sobolev(circle: &CircleBasis, s: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("Sobolev order must be >= 0, got {s}")));
        }
        let l2 = circle.l2_gram_diagonal();
        let diag: Vec<f64> = l2
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let k = circle.wavenumber(i) as f64;
                w * (1.0 + k * k).powf(s)
            })
            .collect();
        let mut op = Self::diagonal(&diag)?;
        op.sobolev_order = Some(s);
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn sobolev_order(&self) -> Option<f64> {
        self.sobolev_order
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Flat map `u ↦ A u`.
    pub fn flat(&self, u: &AlgebraVector) -> Result<Covector> {
        check_dim(self.dim(), u.dim())?;
        Ok(Covector(&self.matrix * &u.0))
    }

    /// Sharp map `p ↦ A⁻¹ p`.
    pub fn sharp(&self, p: &Covector) -> Result<AlgebraVector> {
        check_dim(self.dim(), p.dim())?;
        Ok(AlgebraVector(&self.inverse * &p.0))
    }

    pub fn inner(&self, u: &AlgebraVector, v: &AlgebraVector) -> Result<f64> {
        check_dim(self.dim(), u.dim())?;
        check_dim(self.dim(), v.dim())?;
        Ok((&self.matrix * &u.0).dot(&v.0))
    }

    /// `|u|_A = √⟨A u, u⟩`.
    pub fn norm(&self, u: &AlgebraVector) -> Result<f64> {
        Ok(self.inner(u, u)?.max(0.0).sqrt())
    }

    pub fn kinetic_energy(&self, u: &AlgebraVector) -> Result<f64> {
        Ok(0.5 * self.inner(u, u)?)
    }

    /// Operator norm of `p` with respect to `|·|_A`, i.e. `√(pᵀ A⁻¹ p)`.
    pub fn dual_norm(&self, p: &Covector) -> Result<f64> {
        check_dim(self.dim(), p.dim())?;
        Ok((&self.inverse * &p.0).dot(&p.0).max(0.0).sqrt())
    }
}

pub fn kinetic_energy(a: &InertiaOperator, u: &AlgebraVector) -> Result<f64> {
    a.kinetic_energy(u)
}

pub fn dual_norm(a: &InertiaOperator, p: &Covector) -> Result<f64> {
    a.dual_norm(p)
}

/// A right-invariant magnetic system `(G, 𝒢, dα)` described at the identity.
#[derive(Clone, Debug)]
pub struct MagneticSystem {
    algebra: LieAlgebra,
    inertia: InertiaOperator,
    alpha: Covector,
    kappa_default: Option<f64>,
    two_form: DMatrix<f64>,
    lorentz: DMatrix<f64>,
}

impl MagneticSystem {
    pub fn new(algebra: LieAlgebra, inertia: InertiaOperator, alpha: Covector) -> Result<Self> {
        check_dim(algebra.dim(), inertia.dim())?;
        check_dim(algebra.dim(), alpha.dim())?;
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument("primitive has non-finite entries".into()));
        }
        let n = algebra.dim();
        let mut two_form = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += alpha[k] * algebra.structure_constant(i, j, k);
                }
                two_form[(i, j)] = -acc;
            }
        }
        // ⟨σ♭ u, v⟩ = σ(u, v) = uᵀ Ω v, so σ♭ = Ωᵀ and Y = A⁻¹ Ωᵀ.
        let lorentz = inertia.inverse_matrix() * two_form.transpose();
        Ok(Self {
            algebra,
            inertia,
            alpha,
            kappa_default: None,
            two_form,
            lorentz,
        })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa_default = Some(kappa);
        self
    }

    pub fn algebra(&self) -> &LieAlgebra {
        &self.algebra
    }

    pub fn inertia(&self) -> &InertiaOperator {
        &self.inertia
    }

    pub fn alpha(&self) -> &Covector {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.algebra.dim()
    }

    /// Explicit energy level if one was set, otherwise `2c + 1`.
    pub fn kappa_default(&self) -> f64 {
        self.kappa_default
            .unwrap_or_else(|| 2.0 * mane_critical_value(self).value + 1.0)
    }

    /// The same system with primitive `α + β`.
    pub fn with_alpha(&self, alpha: Covector) -> Result<Self> {
        let mut sys = Self::new(self.algebra.clone(), self.inertia.clone(), alpha)?;
        sys.kappa_default = self.kappa_default;
        Ok(sys)
    }

    /// Matrix `Ω_ij = σ(e_i, e_j)`.
    pub fn two_form(&self) -> &DMatrix<f64> {
        &self.two_form
    }

    /// Matrix of the Lorentz force `Y` at the identity.
    pub fn lorentz_matrix(&self) -> &DMatrix<f64> {
        &self.lorentz
    }

    pub fn sigma(&self, u: &AlgebraVector, v: &AlgebraVector) -> Result<f64> {
        let b = self.algebra.bracket(u, v)?;
        Ok(-self.alpha.pair(&b)?)
    }

    /// `Y u`, the unique vector with `𝒢_e(Y u, v) = σ(u, v)` for all `v`.
    pub fn lorentz(&self, u: &AlgebraVector) -> Result<AlgebraVector> {
        check_dim(self.dim(), u.dim())?;
        Ok(AlgebraVector(&self.lorentz * &u.0))
    }

    /// Stable content hash of the algebra tag, inertia and primitive.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.algebra.kind().tag().as_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        if let Some(c) = self.algebra.circle() {
            h.update([c.convention as u8]);
        }
        for x in self.inertia.matrix().iter().chain(self.alpha.iter()) {
            h.update(x.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn sigma_at_identity(sys: &MagneticSystem, u: &AlgebraVector, v: &AlgebraVector) -> Result<f64> {
    sys.sigma(u, v)
}

pub fn lorentz(sys: &MagneticSystem, u: &AlgebraVector) -> Result<AlgebraVector> {
    sys.lorentz(u)
}

/// Solution of the Mañé quadratic program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManeResult {
    /// `c = ½ |α + β*|²_*`.
    pub value: f64,
    /// Optimal correction β* ∈ Ann([g, g]).
    pub beta: Covector,
    /// The optimal primitive α + β*.
    pub optimal_alpha: Covector,
    pub annihilator_dim: usize,
    /// `½ |α|²_*`, the bound obtained from the given primitive.
    pub upper_bound: f64,
    /// Norm of the gradient `A⁻¹(α + β*)` projected onto Ann([g, g]),
    /// relative to its full norm; zero at the exact optimum.
    pub certificate: f64,
}

/// Orthonormal basis (columns) of the derived subalgebra.
pub fn derived_subalgebra_basis(alg: &LieAlgebra) -> DMatrix<f64> {
    let d = alg.derived_generators();
    let gram = &d * d.transpose();
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-20 * top.max(1.0);
    let cols: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > tol)
        .collect();
    DMatrix::from_fn(alg.dim(), cols.len(), |r, c| eig.eigenvectors[(r, cols[c])])
}

pub fn mane_critical_value(sys: &MagneticSystem) -> ManeResult {
    let n = sys.dim();
    let a_inv = sys.inertia.inverse_matrix();
    let alpha = &sys.alpha.0;
    let q = derived_subalgebra_basis(&sys.algebra);
    let r = q.ncols();

    // minimize ½ (α + β)ᵀ A⁻¹ (α + β) subject to Qᵀ β = 0.
    let beta = if r == 0 {
        -alpha.clone()
    } else if r == n {
        DVector::zeros(n)
    } else {
        let size = n + r;
        let mut kkt = DMatrix::zeros(size, size);
        kkt.view_mut((0, 0), (n, n)).copy_from(a_inv);
        kkt.view_mut((0, n), (n, r)).copy_from(&q);
        kkt.view_mut((n, 0), (r, n)).copy_from(&q.transpose());
        let mut rhs = DVector::zeros(size);
        rhs.rows_mut(0, n).copy_from(&(-(a_inv * alpha)));
        let sol = kkt
            .lu()
            .solve(&rhs)
            .expect("KKT matrix of a strictly convex QP with independent constraints is regular");
        sol.rows(0, n).into_owned()
    };

    let optimal = alpha + &beta;
    let grad = a_inv * &optimal;
    let projected = &grad - &q * (q.transpose() * &grad);
    let certificate = if grad.norm() > 0.0 {
        projected.norm() / grad.norm()
    } else {
        0.0
    };
    let value = 0.5 * optimal.dot(&grad);
    let upper_bound = 0.5 * (a_inv * alpha).dot(alpha);
    ManeResult {
        value,
        beta: Covector(beta),
        optimal_alpha: Covector(optimal),
        annihilator_dim: n - r,
        upper_bound,
        certificate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::BracketConvention;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn e(n: usize, i: usize) -> AlgebraVector {
        AlgebraVector::basis(n, i)
    }

    #[test]
    fn inertia_rejects_non_spd() {
        assert!(InertiaOperator::diagonal(&[1.0, 0.0, 1.0]).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(InertiaOperator::from_matrix(m).is_err());
        assert!(InertiaOperator::diagonal(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn sigma_antisymmetric_and_signs() {
        let sys = MagneticSystem::new(
            LieAlgebra::heisenberg3(),
            InertiaOperator::identity(3),
            Covector::basis(3, 2),
        )
        .unwrap();
        assert_eq!(sys.sigma(&e(3, 0), &e(3, 1)).unwrap(), -1.0);
        let u = AlgebraVector::new(vec![0.3, 0.1, -2.0]);
        assert_eq!(sys.sigma(&u, &u).unwrap(), 0.0);

        let flat = MagneticSystem::new(LieAlgebra::so3(), InertiaOperator::identity(3), Covector::zeros(3))
            .unwrap();
        assert_eq!(flat.sigma(&u, &e(3, 1)).unwrap(), 0.0);
    }

    #[test]
    fn so3_lorentz_is_minus_cross_product() {
        let c = 0.7;
        let sys = MagneticSystem::new(
            LieAlgebra::so3(),
            InertiaOperator::identity(3),
            Covector::new(vec![0.0, 0.0, c]),
        )
        .unwrap();
        let u = AlgebraVector::new(vec![0.4, -1.0, 0.25]);
        let y = sys.lorentz(&u).unwrap();
        // Solve the defining system 𝒢(Yu, e_j) = σ(u, e_j) independently.
        let rhs = DVector::from_fn(3, |j, _| sys.sigma(&u, &e(3, j)).unwrap());
        let solved = InertiaOperator::identity(3).matrix().clone().lu().solve(&rhs).unwrap();
        let e3 = nalgebra::Vector3::new(0.0, 0.0, 1.0);
        let uu = nalgebra::Vector3::new(u[0], u[1], u[2]);
        let closed = -c * e3.cross(&uu);
        for k in 0..3 {
            assert_abs_diff_eq!(y[k], solved[k], epsilon = 1e-15);
            assert_abs_diff_eq!(y[k], closed[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn lorentz_is_skew_for_nontrivial_inertia() {
        let sys = MagneticSystem::new(
            LieAlgebra::se2(),
            InertiaOperator::diagonal(&[1.0, 2.0, 3.5]).unwrap(),
            Covector::new(vec![0.2, -0.4, 0.3]),
        )
        .unwrap();
        let u = AlgebraVector::new(vec![0.3, 1.0, -0.2]);
        let v = AlgebraVector::new(vec![-0.5, 0.1, 0.9]);
        let a = sys.inertia();
        let lhs = a.inner(&sys.lorentz(&u).unwrap(), &v).unwrap();
        let rhs = a.inner(&sys.lorentz(&v).unwrap(), &u).unwrap();
        assert_abs_diff_eq!(lhs, -rhs, epsilon = 1e-14);
        assert_abs_diff_eq!(a.inner(&sys.lorentz(&u).unwrap(), &u).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn circle_lorentz_of_sine_with_constant_primitive() {
        // α(u) = ⟨a₀, u⟩_{L²}; in the dual basis α = 2π a₀ e₀*.
        let a0 = 0.3;
        let alg = LieAlgebra::vect_s1_truncated(4, BracketConvention::VectorField).unwrap();
        let circle = alg.circle().unwrap().clone();
        let a = InertiaOperator::sobolev(&circle, 1.0).unwrap();
        let mut alpha = Covector::zeros(alg.dim());
        alpha.0[0] = 2.0 * PI * a0;
        let sys = MagneticSystem::new(alg, a, alpha).unwrap();
        let sin = e(9, 2);
        let y = sys.lorentz(&sin).unwrap();
        let mut expected = vec![0.0; 9];
        expected[1] = a0;
        for k in 0..9 {
            assert_abs_diff_eq!(y[k], expected[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn circle_lorentz_matches_quadrature_oracle() {
        // Quadrature oracle for 𝒢(Yu, v) = σ(u, v) with σ(u, v) = ∫ (a' u + 2 a u') v dx.
        let alg = LieAlgebra::vect_s1_truncated(3, BracketConvention::VectorField).unwrap();
        let circle = alg.circle().unwrap().clone();
        let afield = |x: f64| 0.2 + 0.1 * (2.0 * x).cos();
        let adx = |x: f64| -0.2 * (2.0 * x).sin();
        // α in the dual basis: α_i = ∫ a b_i.
        let quad = 512;
        let h = 2.0 * PI / quad as f64;
        let xs: Vec<f64> = (0..quad).map(|j| j as f64 * h).collect();
        let alpha: Vec<f64> = (0..alg.dim())
            .map(|i| xs.iter().map(|&x| afield(x) * circle.basis_value(i, x) * h).sum())
            .collect();
        let sys = MagneticSystem::new(
            alg.clone(),
            InertiaOperator::sobolev(&circle, 1.0).unwrap(),
            Covector::new(alpha),
        )
        .unwrap();
        let u = AlgebraVector::new(vec![0.0, 0.3, -0.2, 0.0, 0.1, 0.05, 0.0]);
        let y = sys.lorentz(&u).unwrap();
        for j in 0..alg.dim() {
            let sigma: f64 = xs
                .iter()
                .map(|&x| {
                    let uu = circle.eval(u.as_slice(), x);
                    let ux = circle.eval_derivative(u.as_slice(), x);
                    (adx(x) * uu + 2.0 * afield(x) * ux) * circle.basis_value(j, x) * h
                })
                .sum();
            let g = sys.inertia().inner(&y, &e(alg.dim(), j)).unwrap();
            assert_abs_diff_eq!(g, sigma, epsilon = 1e-12);
        }
    }

    #[test]
    fn dual_norm_examples() {
        let id = InertiaOperator::identity(3);
        assert_eq!(id.dual_norm(&Covector::basis(3, 0)).unwrap(), 1.0);
        assert_eq!(id.dual_norm(&Covector::zeros(3)).unwrap(), 0.0);
        let a = InertiaOperator::diagonal(&[1.0, 4.0]).unwrap();
        let p = Covector::new(vec![0.0, 2.0]);
        assert_abs_diff_eq!(a.dual_norm(&p).unwrap(), 1.0, epsilon = 1e-15);
        // Grid oracle: max p(v) over the A-unit circle v = (cos t, sin t / 2).
        let best = (0..100_000)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 100_000.0;
                2.0 * (t.sin() / 2.0)
            })
            .fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(a.dual_norm(&p).unwrap(), best, epsilon = 1e-9);
    }

    #[test]
    fn kinetic_energy_examples() {
        let id = InertiaOperator::identity(3);
        assert_eq!(kinetic_energy(&id, &e(3, 0)).unwrap(), 0.5);
        assert_eq!(kinetic_energy(&id, &AlgebraVector::zeros(3)).unwrap(), 0.0);
        let alg = LieAlgebra::vect_s1_truncated(3, BracketConvention::VectorField).unwrap();
        let a = InertiaOperator::sobolev(alg.circle().unwrap(), 1.0).unwrap();
        // ½ ∫ (sin² + cos²) dx = π.
        assert_abs_diff_eq!(kinetic_energy(&a, &e(7, 2)).unwrap(), PI, epsilon = 1e-14);
    }

    #[test]
    fn mane_zero_primitive() {
        let sys = MagneticSystem::new(LieAlgebra::heisenberg3(), InertiaOperator::identity(3), Covector::zeros(3))
            .unwrap();
        let m = mane_critical_value(&sys);
        assert_eq!(m.value, 0.0);
        assert!(m.beta.amax() < 1e-15);
    }

    #[test]
    fn mane_so3_has_trivial_annihilator() {
        let sys = MagneticSystem::new(LieAlgebra::so3(), InertiaOperator::identity(3), Covector::basis(3, 0))
            .unwrap();
        assert_eq!(derived_subalgebra_basis(sys.algebra()).ncols(), 3);
        let m = mane_critical_value(&sys);
        assert_eq!(m.annihilator_dim, 0);
        assert_abs_diff_eq!(m.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mane_heisenberg_example() {
        let sys = MagneticSystem::new(
            LieAlgebra::heisenberg3(),
            InertiaOperator::identity(3),
            Covector::new(vec![1.0, 0.0, 1.0]),
        )
        .unwrap();
        let m = mane_critical_value(&sys);
        assert_eq!(m.annihilator_dim, 2);
        assert_abs_diff_eq!(m.value, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(m.beta[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.beta[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.beta[2], 0.0, epsilon = 1e-14);
        assert!(m.certificate < 1e-10);
    }

    #[test]
    fn mane_se2_with_weighted_inertia_matches_grid() {
        // Derived algebra of se(2) is the translations; Ann = span{e1*}.
        let a = InertiaOperator::from_matrix(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5],
        ))
        .unwrap();
        let alpha = Covector::new(vec![0.4, -0.3, 0.6]);
        let sys = MagneticSystem::new(LieAlgebra::se2(), a.clone(), alpha.clone()).unwrap();
        let m = mane_critical_value(&sys);
        assert_eq!(m.annihilator_dim, 1);
        let mut best = f64::INFINITY;
        let mut t = -2.0;
        while t <= 2.0 {
            let p = Covector::new(vec![alpha[0] + t, alpha[1], alpha[2]]);
            best = best.min(0.5 * a.dual_norm(&p).unwrap().powi(2));
            t += 1e-5;
        }
        assert_abs_diff_eq!(m.value, best, epsilon = 1e-8);
        assert!(m.value <= m.upper_bound + 1e-12);
    }
}
