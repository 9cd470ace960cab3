//! Lie algebra and Lie group kernels for a closed catalog of desk-scale groups.
//!
//! Velocities are right-trivialized, `u = ġ g⁻¹`, so every discrete step
//! left-multiplies the current point: `g_{i+1} = exp(Δt ξ_i) g_i`.
//!
//! The catalog:
//!
//! | tag                 | dim    | representation                         |
//! |---------------------|--------|----------------------------------------|
//! | `so3`               | 3      | 3×3 rotation matrices, cross-product basis |
//! | `heisenberg3`       | 3      | 3×3 unipotent upper-triangular matrices |
//! | `se2`               | 3      | 3×3 homogeneous rigid motions (θ, x, y) |
//! | `vect_s1_truncated` | 2N + 1 | grid samples of a circle diffeomorphism |
//!
//! For the truncated circle algebra the basis is `1, cos x, sin x, …, cos Nx, sin Nx`
//! and brackets are evaluated on a padded grid of `4N` points before projecting
//! back onto the retained modes. Truncation breaks closure, so the Jacobi identity
//! only holds approximately there; [`LieAlgebra::jacobi_residual`] reports it.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    So3,
    Heisenberg3,
    Se2,
    VectS1Truncated,
}

impl GroupKind {
    pub fn tag(self) -> &'static str {
        match self {
            GroupKind::So3 => "so3",
            GroupKind::Heisenberg3 => "heisenberg3",
            GroupKind::Se2 => "se2",
            GroupKind::VectS1Truncated => "vect_s1_truncated",
        }
    }

    pub fn is_matrix_group(self) -> bool {
        !matches!(self, GroupKind::VectS1Truncated)
    }
}

impl std::fmt::Display for GroupKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Sign convention for the bracket on the truncated circle algebra.
///
/// `VectorField` is `[u, v] = u v' − v u'`. `Negated` flips it, which is the
/// bracket of the diffeomorphism group viewed as an abstract Lie group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketConvention {
    #[default]
    VectorField,
    Negated,
}

impl BracketConvention {
    fn sign(self) -> f64 {
        match self {
            BracketConvention::VectorField => 1.0,
            BracketConvention::Negated => -1.0,
        }
    }
}

/// Element of a Lie algebra in the fixed basis of its [`LieAlgebra`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlgebraVector(pub DVector<f64>);

/// Element of the dual of a Lie algebra, paired with [`AlgebraVector`] by `Σ p_i v_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Covector(pub DVector<f64>);

macro_rules! coordinate_newtype {
    ($name:ident) => {
        impl $name {
            pub fn new(coords: Vec<f64>) -> Self {
                Self(DVector::from_vec(coords))
            }

            pub fn zeros(dim: usize) -> Self {
                Self(DVector::zeros(dim))
            }

            /// The `i`-th basis element.
            pub fn basis(dim: usize, i: usize) -> Self {
                let mut v = DVector::zeros(dim);
                v[i] = 1.0;
                Self(v)
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }

            pub fn into_inner(self) -> DVector<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;
            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl From<DVector<f64>> for $name {
            fn from(v: DVector<f64>) -> Self {
                Self(v)
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self::new(v)
            }
        }

        impl From<$name> for Vec<f64> {
            fn from(v: $name) -> Vec<f64> {
                v.0.as_slice().to_vec()
            }
        }
    };
}

coordinate_newtype!(AlgebraVector);
coordinate_newtype!(Covector);

impl Covector {
    pub fn pair(&self, v: &AlgebraVector) -> Result<f64> {
        check_dim(self.dim(), v.dim())?;
        Ok(self.0.dot(&v.0))
    }
}

/// Retained modes and padded grid of the truncated circle algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleBasis {
    pub modes: usize,
    pub grid: usize,
    pub convention: BracketConvention,
}

impl CircleBasis {
    fn new(modes: usize, convention: BracketConvention) -> Self {
        Self {
            modes,
            grid: (4 * modes).max(8),
            convention,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.modes + 1
    }

    pub fn grid_point(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.grid as f64
    }

    /// Value of basis function `i` at `x`.
    pub fn basis_value(&self, i: usize, x: f64) -> f64 {
        match i {
            0 => 1.0,
            _ => {
                let k = ((i + 1) / 2) as f64;
                if i % 2 == 1 {
                    (k * x).cos()
                } else {
                    (k * x).sin()
                }
            }
        }
    }

    /// Derivative of basis function `i` at `x`.
    pub fn basis_derivative(&self, i: usize, x: f64) -> f64 {
        match i {
            0 => 0.0,
            _ => {
                let k = ((i + 1) / 2) as f64;
                if i % 2 == 1 {
                    -k * (k * x).sin()
                } else {
                    k * (k * x).cos()
                }
            }
        }
    }

    /// Evaluates the vector field with coordinates `coords` at `x`.
    pub fn eval(&self, coords: &[f64], x: f64) -> f64 {
        let mut acc = coords[0];
        for k in 1..=self.modes {
            let (s, c) = (k as f64 * x).sin_cos();
            acc += coords[2 * k - 1] * c + coords[2 * k] * s;
        }
        acc
    }

    pub fn eval_derivative(&self, coords: &[f64], x: f64) -> f64 {
        let mut acc = 0.0;
        for k in 1..=self.modes {
            let kf = k as f64;
            let (s, c) = (kf * x).sin_cos();
            acc += kf * (-coords[2 * k - 1] * s + coords[2 * k] * c);
        }
        acc
    }

    pub fn to_grid(&self, coords: &[f64]) -> Vec<f64> {
        (0..self.grid)
            .map(|j| self.eval(coords, self.grid_point(j)))
            .collect()
    }

    pub fn derivative_to_grid(&self, coords: &[f64]) -> Vec<f64> {
        (0..self.grid)
            .map(|j| self.eval_derivative(coords, self.grid_point(j)))
            .collect()
    }

    /// Projects grid samples onto the retained modes (trapezoidal quadrature,
    /// exact for trigonometric polynomials of degree below `grid − modes`).
    pub fn project(&self, samples: &[f64]) -> Vec<f64> {
        let m = self.grid as f64;
        let mut out = vec![0.0; self.dim()];
        out[0] = samples.iter().sum::<f64>() / m;
        for k in 1..=self.modes {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, f) in samples.iter().enumerate() {
                let (s, c) = (k as f64 * self.grid_point(j)).sin_cos();
                a += f * c;
                b += f * s;
            }
            out[2 * k - 1] = 2.0 * a / m;
            out[2 * k] = 2.0 * b / m;
        }
        out
    }

    /// `[u, v]` computed pseudospectrally on the padded grid and projected back,
    /// with the sign fixed by the convention.
    pub fn bracket_on_grid(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let (ug, uxg) = (self.to_grid(u), self.derivative_to_grid(u));
        let (vg, vxg) = (self.to_grid(v), self.derivative_to_grid(v));
        let sign = self.convention.sign();
        let prod: Vec<f64> = (0..self.grid)
            .map(|j| sign * (ug[j] * vxg[j] - vg[j] * uxg[j]))
            .collect();
        self.project(&prod)
    }

    /// Diagonal of the L² Gram matrix of the basis on [0, 2π).
    pub fn l2_gram_diagonal(&self) -> Vec<f64> {
        let mut d = vec![PI; self.dim()];
        d[0] = 2.0 * PI;
        d
    }

    /// Wavenumber of basis function `i`.
    pub fn wavenumber(&self, i: usize) -> usize {
        i.div_ceil(2)
    }
}

/// Lie algebra of one catalog group, carried by its structure constants
/// `[e_i, e_j] = Σ_k c[i][j][k] e_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LieAlgebra {
    kind: GroupKind,
    dim: usize,
    constants: Vec<f64>,
    circle: Option<CircleBasis>,
}

impl LieAlgebra {
    pub fn so3() -> Self {
        Self::matrix_algebra(GroupKind::So3)
    }

    pub fn heisenberg3() -> Self {
        Self::matrix_algebra(GroupKind::Heisenberg3)
    }

    pub fn se2() -> Self {
        Self::matrix_algebra(GroupKind::Se2)
    }

    /// Truncated `Vect(S¹)` with `modes ≥ 1` retained Fourier modes.
    pub fn vect_s1_truncated(modes: usize, convention: BracketConvention) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidArgument(
                "the truncated circle algebra needs at least one mode".into(),
            ));
        }
        let circle = CircleBasis::new(modes, convention);
        let dim = circle.dim();
        let mut constants = vec![0.0; dim * dim * dim];
        for i in 0..dim {
            for j in (i + 1)..dim {
                let ei = unit(dim, i);
                let ej = unit(dim, j);
                let b = circle.bracket_on_grid(&ei, &ej);
                for (k, value) in b.into_iter().enumerate() {
                    let value = if value.abs() < 1e-13 { 0.0 } else { value };
                    constants[(i * dim + j) * dim + k] = value;
                    constants[(j * dim + i) * dim + k] = -value;
                }
            }
        }
        Ok(Self {
            kind: GroupKind::VectS1Truncated,
            dim,
            constants,
            circle: Some(circle),
        })
    }

    /// Matrix groups by tag; the circle algebra needs [`LieAlgebra::vect_s1_truncated`].
    pub fn from_kind(kind: GroupKind) -> Result<Self> {
        match kind {
            GroupKind::VectS1Truncated => Err(Error::InvalidArgument(
                "vect_s1_truncated requires a mode count".into(),
            )),
            k => Ok(Self::matrix_algebra(k)),
        }
    }

    fn matrix_algebra(kind: GroupKind) -> Self {
        let basis = matrix_basis(kind);
        let dim = basis.len();
        let mut constants = vec![0.0; dim * dim * dim];
        for i in 0..dim {
            for j in (i + 1)..dim {
                let comm = basis[i] * basis[j] - basis[j] * basis[i];
                let b = vee3(kind, &comm);
                for k in 0..dim {
                    constants[(i * dim + j) * dim + k] = b[k];
                    constants[(j * dim + i) * dim + k] = -b[k];
                }
            }
        }
        Self {
            kind,
            dim,
            constants,
            circle: None,
        }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn circle(&self) -> Option<&CircleBasis> {
        self.circle.as_ref()
    }

    /// `c[i][j][k]`.
    #[inline]
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.constants[(i * self.dim + j) * self.dim + k]
    }

    pub fn bracket(&self, a: &AlgebraVector, b: &AlgebraVector) -> Result<AlgebraVector> {
        check_dim(self.dim, a.dim())?;
        check_dim(self.dim, b.dim())?;
        Ok(AlgebraVector(self.bracket_raw(a, b)))
    }

    pub(crate) fn bracket_raw(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        // Summing over i < j with the antisymmetrized weight makes
        // [a, b] = −[b, a] hold bit-for-bit.
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = a[i] * b[j] - a[j] * b[i];
                if w == 0.0 {
                    continue;
                }
                let row = &self.constants[(i * n + j) * n..(i * n + j + 1) * n];
                for k in 0..n {
                    out[k] += w * row[k];
                }
            }
        }
        out
    }

    /// `ad*_u m`, defined by `⟨ad*_u m, v⟩ = ⟨m, [u, v]⟩`.
    pub fn coad(&self, u: &AlgebraVector, m: &Covector) -> Result<Covector> {
        check_dim(self.dim, u.dim())?;
        check_dim(self.dim, m.dim())?;
        Ok(Covector(self.coad_raw(u, m)))
    }

    pub(crate) fn coad_raw(&self, u: &DVector<f64>, m: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let row = &self.constants[(i * n + j) * n..(i * n + j + 1) * n];
                let mut acc = 0.0;
                for k in 0..n {
                    acc += m[k] * row[k];
                }
                out[j] += u[i] * acc;
            }
        }
        out
    }

    /// Max-norm residual of the Jacobi identity over all basis triples.
    pub fn jacobi_residual(&self) -> f64 {
        let n = self.dim;
        let e: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_vec(unit(n, i))).collect();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let eij = self.bracket_raw(&e[i], &e[j]);
                for k in 0..n {
                    let ejk = self.bracket_raw(&e[j], &e[k]);
                    let eki = self.bracket_raw(&e[k], &e[i]);
                    let r = self.bracket_raw(&e[i], &ejk)
                        + self.bracket_raw(&e[j], &eki)
                        + self.bracket_raw(&e[k], &eij);
                    worst = worst.max(r.amax());
                }
            }
        }
        worst
    }

    /// Matrix whose columns are all brackets `[e_i, e_j]`, `i < j`; its column
    /// space is the derived subalgebra.
    pub fn derived_generators(&self) -> DMatrix<f64> {
        let n = self.dim;
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let mut d = DMatrix::zeros(n, pairs.len().max(1));
        for (col, (i, j)) in pairs.into_iter().enumerate() {
            for k in 0..n {
                d[(k, col)] = self.structure_constant(i, j, k);
            }
        }
        d
    }

    /// Matrix representative `Σ ξ_i E_i` (matrix groups only).
    pub fn hat(&self, xi: &AlgebraVector) -> Result<DMatrix<f64>> {
        check_dim(self.dim, xi.dim())?;
        self.require_matrix()?;
        Ok(to_dmatrix(&hat3(self.kind, xi.as_slice())))
    }

    /// Inverse of [`LieAlgebra::hat`], reading the coordinate entries.
    pub fn vee(&self, x: &DMatrix<f64>) -> Result<AlgebraVector> {
        self.require_matrix()?;
        check_dim(3, x.nrows())?;
        check_dim(3, x.ncols())?;
        let m = Matrix3::from_fn(|r, c| x[(r, c)]);
        Ok(AlgebraVector::new(vee3(self.kind, &m).to_vec()))
    }

    fn require_matrix(&self) -> Result<()> {
        if self.kind.is_matrix_group() {
            Ok(())
        } else {
            Err(Error::Unsupported(self.kind.tag().into()))
        }
    }

    pub fn identity(&self) -> GroupPoint {
        match &self.circle {
            None => GroupPoint::Matrix(DMatrix::identity(3, 3)),
            Some(c) => GroupPoint::Diffeo(CircleDiffeo::identity(c.grid)),
        }
    }

    /// Group exponential. Closed forms for the matrix groups; for the circle
    /// algebra, the time-1 flow of the vector field by substepped RK4.
    pub fn group_exp(&self, xi: &AlgebraVector) -> Result<GroupPoint> {
        check_dim(self.dim, xi.dim())?;
        Ok(match &self.circle {
            None => GroupPoint::Matrix(to_dmatrix(&matrix_exp3(self.kind, xi.as_slice()))),
            Some(c) => {
                let mut pts: Vec<f64> = (0..c.grid).map(|j| c.grid_point(j)).collect();
                flow_points(c, xi.as_slice(), &mut pts, 1.0);
                GroupPoint::Diffeo(CircleDiffeo { values: pts })
            }
        })
    }

    /// `exp(ξ)·g`.
    pub fn exp_left_mul(&self, xi: &AlgebraVector, g: &GroupPoint) -> Result<GroupPoint> {
        check_dim(self.dim, xi.dim())?;
        match (g, &self.circle) {
            (GroupPoint::Matrix(m), None) => {
                Ok(GroupPoint::Matrix(to_dmatrix(&matrix_exp3(self.kind, xi.as_slice())) * m))
            }
            (GroupPoint::Diffeo(phi), Some(c)) => {
                check_dim(c.grid, phi.values.len())?;
                let mut pts = phi.values.clone();
                flow_points(c, xi.as_slice(), &mut pts, 1.0);
                Ok(GroupPoint::Diffeo(CircleDiffeo { values: pts }))
            }
            _ => Err(Error::InvalidArgument(
                "group point does not belong to this algebra's group".into(),
            )),
        }
    }

    /// Logarithm near the identity for the matrix groups; `None` where no
    /// principal logarithm is available (rotation angle at π, circle group).
    pub fn group_log(&self, g: &GroupPoint) -> Option<AlgebraVector> {
        let GroupPoint::Matrix(m) = g else {
            return None;
        };
        if m.nrows() != 3 || m.ncols() != 3 || self.circle.is_some() {
            return None;
        }
        let m = Matrix3::from_fn(|r, c| m[(r, c)]);
        let v = match self.kind {
            GroupKind::So3 => so3_log(&m)?,
            GroupKind::Heisenberg3 => {
                let n = m - Matrix3::identity();
                vee3(self.kind, &(n - n * n * 0.5))
            }
            GroupKind::Se2 => {
                let theta = m[(1, 0)].atan2(m[(0, 0)]);
                let (a, b) = se2_v_coeffs(theta);
                // V = [[a, -b], [b, a]], so V⁻¹ t = [[a, b], [-b, a]] t / (a² + b²).
                let (tx, ty) = (m[(0, 2)], m[(1, 2)]);
                let det = a * a + b * b;
                [theta, (a * tx + b * ty) / det, (-b * tx + a * ty) / det]
            }
            GroupKind::VectS1Truncated => return None,
        };
        Some(AlgebraVector::new(v.to_vec()))
    }

    /// Evolution of piecewise-constant controls from the identity:
    /// `g_{i+1} = exp(Δt ξ_i) g_i`.
    pub fn evolve_controls(&self, controls: &[AlgebraVector], dt: f64) -> Result<GroupPoint> {
        if controls.is_empty() {
            return Err(Error::EmptyPath);
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
        }
        let mut g = self.identity();
        for xi in controls {
            g = self.exp_left_mul(&AlgebraVector(&xi.0 * dt), &g)?;
        }
        Ok(g)
    }

    pub fn evolve(&self, path: &ControlPath) -> Result<GroupPoint> {
        self.evolve_controls(&path.controls, path.dt)
    }

    /// Group-constraint residual of `g` (orthogonality and determinant for
    /// SO(3), unipotent shape for the Heisenberg group, homogeneous rigid
    /// motion for SE(2), negated minimal slope for diffeomorphisms).
    pub fn constraint_residual(&self, g: &GroupPoint) -> f64 {
        match g {
            GroupPoint::Matrix(m) => {
                let m = Matrix3::from_fn(|r, c| m[(r, c)]);
                match self.kind {
                    GroupKind::So3 => {
                        let orth = (m.transpose() * m - Matrix3::identity()).amax();
                        orth.max((m.determinant() - 1.0).abs())
                    }
                    GroupKind::Heisenberg3 => {
                        let mut worst: f64 = 0.0;
                        for r in 0..3 {
                            for c in 0..=r {
                                let target = if r == c { 1.0 } else { 0.0 };
                                worst = worst.max((m[(r, c)] - target).abs());
                            }
                        }
                        worst
                    }
                    GroupKind::Se2 => {
                        let rot = m.fixed_view::<2, 2>(0, 0).into_owned();
                        let orth = (rot.transpose() * rot - nalgebra::Matrix2::identity()).amax();
                        let bottom = m[(2, 0)]
                            .abs()
                            .max(m[(2, 1)].abs())
                            .max((m[(2, 2)] - 1.0).abs());
                        orth.max(bottom).max((rot.determinant() - 1.0).abs())
                    }
                    GroupKind::VectS1Truncated => f64::INFINITY,
                }
            }
            GroupPoint::Diffeo(phi) => {
                let min_slope = phi.min_slope();
                if min_slope > 0.0 {
                    0.0
                } else {
                    -min_slope
                }
            }
        }
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Flows each point under the (time-independent) vector field for time `t`,
/// using 16 RK4 substeps per unit coordinate norm.
pub(crate) fn flow_points(circle: &CircleBasis, coords: &[f64], points: &mut [f64], t: f64) {
    let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt() * t.abs();
    if norm == 0.0 {
        return;
    }
    let steps = (16.0 * norm).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    for p in points.iter_mut() {
        let mut y = *p;
        for _ in 0..steps {
            let k1 = circle.eval(coords, y);
            let k2 = circle.eval(coords, y + 0.5 * h * k1);
            let k3 = circle.eval(coords, y + 0.5 * h * k2);
            let k4 = circle.eval(coords, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        *p = y;
    }
}

fn matrix_basis(kind: GroupKind) -> Vec<Matrix3<f64>> {
    (0..3)
        .map(|i| {
            let mut xi = [0.0; 3];
            xi[i] = 1.0;
            hat3(kind, &xi)
        })
        .collect()
}

fn hat3(kind: GroupKind, xi: &[f64]) -> Matrix3<f64> {
    let (a, b, c) = (xi[0], xi[1], xi[2]);
    match kind {
        GroupKind::So3 => Matrix3::new(0.0, -c, b, c, 0.0, -a, -b, a, 0.0),
        GroupKind::Heisenberg3 => Matrix3::new(0.0, a, c, 0.0, 0.0, b, 0.0, 0.0, 0.0),
        GroupKind::Se2 => Matrix3::new(0.0, -a, b, a, 0.0, c, 0.0, 0.0, 0.0),
        GroupKind::VectS1Truncated => unreachable!("circle algebra has no matrix basis"),
    }
}

fn vee3(kind: GroupKind, m: &Matrix3<f64>) -> [f64; 3] {
    match kind {
        GroupKind::So3 => [m[(2, 1)], m[(0, 2)], m[(1, 0)]],
        GroupKind::Heisenberg3 => [m[(0, 1)], m[(1, 2)], m[(0, 2)]],
        GroupKind::Se2 => [m[(1, 0)], m[(0, 2)], m[(1, 2)]],
        GroupKind::VectS1Truncated => unreachable!("circle algebra has no matrix basis"),
    }
}

/// Coefficients `(sin θ / θ, (1 − cos θ) / θ)` of the SE(2) left Jacobian.
fn se2_v_coeffs(theta: f64) -> (f64, f64) {
    if theta.abs() < 1e-5 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta)
    }
}

pub(crate) fn matrix_exp3(kind: GroupKind, xi: &[f64]) -> Matrix3<f64> {
    let x = hat3(kind, xi);
    match kind {
        GroupKind::So3 => {
            let theta2 = xi.iter().map(|v| v * v).sum::<f64>();
            let theta = theta2.sqrt();
            let (a, b) = if theta < 1e-5 {
                (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
            } else {
                (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
            };
            Matrix3::identity() + x * a + x * x * b
        }
        GroupKind::Heisenberg3 => Matrix3::identity() + x + x * x * 0.5,
        GroupKind::Se2 => {
            let theta = xi[0];
            let (s, c) = theta.sin_cos();
            let (a, b) = se2_v_coeffs(theta);
            let (vx, vy) = (xi[1], xi[2]);
            Matrix3::new(
                c,
                -s,
                a * vx - b * vy,
                s,
                c,
                b * vx + a * vy,
                0.0,
                0.0,
                1.0,
            )
        }
        GroupKind::VectS1Truncated => unreachable!("circle algebra has no matrix basis"),
    }
}

fn so3_log(r: &Matrix3<f64>) -> Option<[f64; 3]> {
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos.acos();
    if PI - theta < 1e-6 {
        return None;
    }
    let w = [r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]];
    let scale = if theta < 1e-5 {
        0.5 + theta * theta / 12.0
    } else {
        theta / (2.0 * theta.sin())
    };
    Some([w[0] * scale, w[1] * scale, w[2] * scale])
}

fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |r, c| m[(r, c)])
}

/// Orientation-preserving circle diffeomorphism sampled on a uniform grid,
/// `values[j] = φ(2πj/M)`, with `φ(x + 2π) = φ(x) + 2π`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleDiffeo {
    values: Vec<f64>,
}

impl CircleDiffeo {
    pub fn identity(grid: usize) -> Self {
        Self {
            values: (0..grid)
                .map(|j| 2.0 * PI * j as f64 / grid as f64)
                .collect(),
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grid(&self) -> usize {
        self.values.len()
    }

    /// Real trigonometric interpolation coefficients of the periodic part φ(x) − x.
    fn periodic_coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.values.len();
        let kmax = m / 2;
        let p: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| v - 2.0 * PI * j as f64 / m as f64)
            .collect();
        let mut a = vec![0.0; kmax + 1];
        let mut b = vec![0.0; kmax + 1];
        for k in 0..=kmax {
            for (j, pj) in p.iter().enumerate() {
                let (s, c) = (k as f64 * 2.0 * PI * j as f64 / m as f64).sin_cos();
                a[k] += pj * c;
                b[k] += pj * s;
            }
            let w = if k == 0 || (m % 2 == 0 && k == kmax) {
                1.0
            } else {
                2.0
            };
            a[k] *= w / m as f64;
            b[k] *= w / m as f64;
        }
        (a, b)
    }

    /// Evaluates φ at an arbitrary point by trigonometric interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.periodic_coefficients();
        eval_series(&a, &b, x) + x
    }

    /// Minimal value of φ′ on the grid.
    pub fn min_slope(&self) -> f64 {
        let (a, b) = self.periodic_coefficients();
        let m = self.values.len();
        (0..m)
            .map(|j| {
                let x = 2.0 * PI * j as f64 / m as f64;
                let mut d = 1.0;
                for k in 1..a.len() {
                    let (s, c) = (k as f64 * x).sin_cos();
                    d += k as f64 * (-a[k] * s + b[k] * c);
                }
                d
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &CircleDiffeo) -> Result<CircleDiffeo> {
        check_dim(self.grid(), other.grid())?;
        let (a, b) = self.periodic_coefficients();
        Ok(CircleDiffeo {
            values: other
                .values
                .iter()
                .map(|&y| eval_series(&a, &b, y) + y)
                .collect(),
        })
    }
}

fn eval_series(a: &[f64], b: &[f64], x: f64) -> f64 {
    let mut acc = a[0];
    for k in 1..a.len() {
        let (s, c) = (k as f64 * x).sin_cos();
        acc += a[k] * c + b[k] * s;
    }
    acc
}

/// A group element of one of the catalog groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GroupPointRepr", try_from = "GroupPointRepr")]
pub enum GroupPoint {
    Matrix(DMatrix<f64>),
    Diffeo(CircleDiffeo),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GroupPointRepr {
    Matrix(Vec<Vec<f64>>),
    Diffeo(Vec<f64>),
}

impl From<GroupPoint> for GroupPointRepr {
    fn from(g: GroupPoint) -> Self {
        match g {
            GroupPoint::Matrix(m) => GroupPointRepr::Matrix(
                (0..m.nrows())
                    .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
                    .collect(),
            ),
            GroupPoint::Diffeo(d) => GroupPointRepr::Diffeo(d.values),
        }
    }
}

impl TryFrom<GroupPointRepr> for GroupPoint {
    type Error = String;

    fn try_from(r: GroupPointRepr) -> std::result::Result<Self, String> {
        match r {
            GroupPointRepr::Matrix(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|row| row.len() != n) {
                    return Err("group matrix must be square and non-empty".into());
                }
                Ok(GroupPoint::Matrix(DMatrix::from_fn(n, n, |r, c| rows[r][c])))
            }
            GroupPointRepr::Diffeo(values) => {
                if values.len() < 2 {
                    return Err("diffeomorphism needs at least two samples".into());
                }
                Ok(GroupPoint::Diffeo(CircleDiffeo { values }))
            }
        }
    }
}

impl GroupPoint {
    /// Group product `self · other` (composition `self ∘ other` for diffeomorphisms).
    pub fn mul(&self, other: &GroupPoint) -> Result<GroupPoint> {
        match (self, other) {
            (GroupPoint::Matrix(a), GroupPoint::Matrix(b)) => {
                check_dim(a.ncols(), b.nrows())?;
                Ok(GroupPoint::Matrix(a * b))
            }
            (GroupPoint::Diffeo(a), GroupPoint::Diffeo(b)) => Ok(GroupPoint::Diffeo(a.compose(b)?)),
            _ => Err(Error::InvalidArgument("mixed group point representations".into())),
        }
    }

    /// Inverse (matrix groups only).
    pub fn inverse(&self) -> Result<GroupPoint> {
        match self {
            GroupPoint::Matrix(m) => m
                .clone()
                .try_inverse()
                .map(GroupPoint::Matrix)
                .ok_or_else(|| Error::InvalidArgument("singular group matrix".into())),
            GroupPoint::Diffeo(_) => Err(Error::Unsupported("vect_s1_truncated".into())),
        }
    }

    /// Frobenius distance for matrices, sup distance of samples for diffeomorphisms.
    pub fn distance(&self, other: &GroupPoint) -> Result<f64> {
        match (self, other) {
            (GroupPoint::Matrix(a), GroupPoint::Matrix(b)) => {
                check_dim(a.len(), b.len())?;
                Ok((a - b).norm())
            }
            (GroupPoint::Diffeo(a), GroupPoint::Diffeo(b)) => {
                check_dim(a.grid(), b.grid())?;
                Ok(a
                    .values
                    .iter()
                    .zip(&b.values)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max))
            }
            _ => Err(Error::InvalidArgument("mixed group point representations".into())),
        }
    }

    /// Flat entries: row-major matrix entries or diffeomorphism samples.
    pub fn entries(&self) -> Vec<f64> {
        match self {
            GroupPoint::Matrix(m) => (0..m.nrows())
                .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
                .collect(),
            GroupPoint::Diffeo(d) => d.values.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            GroupPoint::Matrix(m) => m.iter().all(|x| x.is_finite()),
            GroupPoint::Diffeo(d) => d.values.iter().all(|x| x.is_finite()),
        }
    }
}

/// Piecewise-constant algebra-valued controls discretizing a path that starts
/// at `start`; the curve is `t ↦ h(t)·start` with `h` the evolution of the controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub controls: Vec<AlgebraVector>,
    pub dt: f64,
    pub start: GroupPoint,
    pub declared_target: GroupPoint,
}

impl ControlPath {
    pub fn new(
        controls: Vec<AlgebraVector>,
        dt: f64,
        start: GroupPoint,
        declared_target: GroupPoint,
    ) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::EmptyPath);
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
        }
        if controls.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite control".into()));
        }
        Ok(Self {
            controls,
            dt,
            start,
            declared_target,
        })
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.controls.len() as f64
    }

    /// `evolve(ξ)·start`.
    pub fn endpoint(&self, alg: &LieAlgebra) -> Result<GroupPoint> {
        alg.evolve(self)?.mul(&self.start)
    }
}
