//! Experiment configuration: a strict JSON schema turned into library objects.

use std::path::{Path, PathBuf};

use magflow::epdiff::{FourierField, SobolevInertia};
use magflow::{
    mane_critical_value, AlgebraVector, BracketConvention, Covector, GroupKind, GroupPoint, InertiaOperator,
    LieAlgebra, MagneticSystem,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: Option<GroupKind>,
    pub inertia: Option<InertiaSpec>,
    pub alpha: Option<AlphaSpec>,
    pub kappa: Option<KappaSpec>,
    pub flow: Option<FlowBlock>,
    pub connect: Option<ConnectBlock>,
    pub epdiff: Option<EpdiffBlock>,
    pub check: Option<CheckBlock>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// A 3×3 matrix (rows), a diagonal, or the Sobolev operator `(1 − ∂²)^s` on
/// `N` retained circle modes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InertiaSpec {
    Matrix(Vec<Vec<f64>>),
    Diagonal(DiagonalSpec),
    Sobolev(SobolevSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalSpec {
    pub diagonal: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevSpec {
    pub s: f64,
    #[serde(rename = "N")]
    pub modes: usize,
}

/// Primitive as covector coordinates, or (circle only) as a field `a(x)`
/// whose L² pairing defines the covector.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Coords(Vec<f64>),
    Field(FieldSpec),
}

/// A real field on the circle.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Samples(Samples),
    Fourier(SparseFourier),
    Coords(RealCoords),
}

/// Values at `x_j = 2πj/M`, `M ≥ 2N + 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Samples {
    pub samples: Vec<f64>,
}

/// Sparse Fourier coefficients `[k, re, im]` for `k ≥ 0`; negative modes
/// follow by conjugate symmetry.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseFourier {
    pub fourier: Vec<[f64; 3]>,
}

/// Real coordinates `(a_0, a_1, b_1, ...)` of `a_0 + Σ a_k cos kx + b_k sin kx`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealCoords {
    pub coords: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSpec {
    Value(f64),
    Named(KappaName),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaName {
    /// `2c + 1`.
    Auto,
}

/// A group element: exponential coordinates, an explicit matrix, or the
/// magnetic exponential of a velocity at the start point.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Exp(Vec<f64>),
    Matrix(MatrixPoint),
    MagneticExp(MagneticExpPoint),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixPoint {
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagneticExpPoint {
    pub magnetic_exp: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowBlock {
    pub u0: Vec<f64>,
    pub g0: Option<PointSpec>,
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    #[serde(default = "default_drift_tol")]
    pub drift_tol: f64,
}

fn default_drift_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectBlock {
    pub x: Option<PointSpec>,
    pub y: PointSpec,
    #[serde(rename = "N_steps", default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_true")]
    pub polish: bool,
}

fn default_steps() -> usize {
    32
}

fn default_seeds() -> usize {
    8
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpdiffBlock {
    pub u0: FieldSpec,
    /// Defaults to the field of the top-level `alpha`.
    pub a: Option<FieldSpec>,
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Mode band `[lo, hi]` for the spectral-slope monitor.
    pub band: Option<(usize, usize)>,
}

fn default_snapshot_every() -> usize {
    100
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBlock {
    #[serde(default)]
    pub suites: Vec<String>,
    /// Random samples per group in sampling suites.
    pub samples: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let mut numbers = Vec::new();
        if let Some(InertiaSpec::Matrix(rows)) = &self.inertia {
            numbers.extend(rows.iter().flatten().copied());
        }
        if let Some(InertiaSpec::Diagonal(d)) = &self.inertia {
            numbers.extend(&d.diagonal);
        }
        if let Some(InertiaSpec::Sobolev(s)) = &self.inertia {
            numbers.push(s.s);
        }
        if let Some(AlphaSpec::Coords(c)) = &self.alpha {
            numbers.extend(c);
        }
        if let Some(KappaSpec::Value(k)) = self.kappa {
            numbers.push(k);
        }
        if let Some(f) = &self.flow {
            numbers.extend(&f.u0);
            numbers.extend([f.t, f.dt, f.drift_tol]);
            positive("flow.T", f.t)?;
            positive("flow.dt", f.dt)?;
        }
        if let Some(c) = &self.connect {
            if c.steps < 8 {
                return Err(config_err(format!("connect.N_steps must be at least 8, got {}", c.steps)));
            }
            if c.seeds == 0 {
                return Err(config_err("connect.seeds must be positive"));
            }
        }
        if let Some(e) = &self.epdiff {
            numbers.extend([e.t, e.dt]);
            positive("epdiff.T", e.t)?;
            positive("epdiff.dt", e.dt)?;
            if e.snapshot_every == 0 {
                return Err(config_err("epdiff.snapshot_every must be positive"));
            }
        }
        if numbers.iter().any(|x| !x.is_finite()) {
            return Err(config_err("all physical parameters must be finite"));
        }
        Ok(())
    }

    pub fn group(&self) -> CliResult<GroupKind> {
        self.group.ok_or_else(|| config_err("missing key `group`"))
    }

    /// Builds the magnetic system described by `group`, `inertia` and `alpha`.
    pub fn system(&self) -> CliResult<MagneticSystem> {
        let kind = self.group()?;
        let (alg, inertia) = match kind {
            GroupKind::VectS1Truncated => {
                let Some(InertiaSpec::Sobolev(spec)) = &self.inertia else {
                    return Err(config_err("vect_s1_truncated needs inertia {\"s\": .., \"N\": ..}"));
                };
                let alg = LieAlgebra::vect_s1_truncated(spec.modes, BracketConvention::VectorField)?;
                let a = InertiaOperator::sobolev(alg.circle().expect("circle algebra"), spec.s)?;
                (alg, a)
            }
            _ => {
                let alg = LieAlgebra::from_kind(kind)?;
                let n = alg.dim();
                let a = match &self.inertia {
                    None => InertiaOperator::identity(n),
                    Some(InertiaSpec::Diagonal(d)) => InertiaOperator::diagonal(&d.diagonal)?,
                    Some(InertiaSpec::Matrix(rows)) => InertiaOperator::from_matrix(matrix(rows, n, "inertia")?)?,
                    Some(InertiaSpec::Sobolev(_)) => {
                        return Err(config_err(format!("Sobolev inertia is only defined for the circle, not {kind}")))
                    }
                };
                (alg, a)
            }
        };
        let n = alg.dim();
        let alpha = match &self.alpha {
            None => Covector::zeros(n),
            Some(AlphaSpec::Coords(c)) => {
                if c.len() != n {
                    return Err(config_err(format!("alpha has {} entries, expected {n}", c.len())));
                }
                Covector::new(c.clone())
            }
            Some(AlphaSpec::Field(field)) => {
                let Some(circle) = alg.circle() else {
                    return Err(config_err("alpha as a field is only defined for vect_s1_truncated"));
                };
                let a = field_from_spec(field, circle.modes)?;
                let gram = circle.l2_gram_diagonal();
                Covector::new(a.to_real_coords().iter().zip(&gram).map(|(c, w)| c * w).collect())
            }
        };
        Ok(MagneticSystem::new(alg, inertia, alpha)?)
    }

    /// Resolves `kappa`, with `"auto"` meaning `2c + 1`.
    pub fn kappa(&self, sys: &MagneticSystem) -> CliResult<f64> {
        match self.kappa {
            None => Err(config_err("missing key `kappa`")),
            Some(KappaSpec::Value(k)) => Ok(k),
            Some(KappaSpec::Named(KappaName::Auto)) => Ok(2.0 * mane_critical_value(sys).value + 1.0),
        }
    }

    pub fn point(&self, sys: &MagneticSystem, spec: Option<&PointSpec>, base: &GroupPoint) -> CliResult<GroupPoint> {
        let alg = sys.algebra();
        let n = alg.dim();
        match spec {
            None => Ok(alg.identity()),
            Some(PointSpec::Exp(xi)) => Ok(alg.group_exp(&vector(xi, n, "exponential coordinates")?)?),
            Some(PointSpec::Matrix(m)) => {
                if !alg.kind().is_matrix_group() {
                    return Err(config_err("matrix points need a matrix group"));
                }
                let g = GroupPoint::Matrix(matrix(&m.matrix, 3, "point")?);
                if alg.constraint_residual(&g) > 1e-8 {
                    return Err(config_err(format!("matrix is not an element of {}", alg.kind())));
                }
                Ok(g)
            }
            Some(PointSpec::MagneticExp(v)) => {
                Ok(magflow::flow::magnetic_exp(sys, base, &vector(&v.magnetic_exp, n, "magnetic_exp")?)?)
            }
        }
    }

    /// `u0`, `a`, inertia and the retained mode count for the spectral solver.
    pub fn epdiff_inputs(&self) -> CliResult<(FourierField, FourierField, SobolevInertia)> {
        let block = self.epdiff.as_ref().ok_or_else(|| config_err("missing block `epdiff`"))?;
        if self.group()? != GroupKind::VectS1Truncated {
            return Err(config_err("epdiff needs group vect_s1_truncated"));
        }
        let Some(InertiaSpec::Sobolev(spec)) = &self.inertia else {
            return Err(config_err("epdiff needs inertia {\"s\": .., \"N\": ..}"));
        };
        let inertia = SobolevInertia::new(spec.s)?;
        let u0 = field_from_spec(&block.u0, spec.modes)?;
        let a = match (&block.a, &self.alpha) {
            (Some(a), _) => field_from_spec(a, spec.modes)?,
            (None, None) => FourierField::zeros(spec.modes),
            (None, Some(AlphaSpec::Field(a))) => field_from_spec(a, spec.modes)?,
            (None, Some(AlphaSpec::Coords(c))) => {
                // α_i = gram_i · a_i, with gram = (2π, π, π, ...).
                let coords: Vec<f64> = c
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x / if i == 0 { 2.0 * std::f64::consts::PI } else { std::f64::consts::PI })
                    .collect();
                field_from_spec(&FieldSpec::Coords(RealCoords { coords }), spec.modes)?
            }
        };
        Ok((u0, a, inertia))
    }
}

fn positive(name: &str, x: f64) -> CliResult<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive, got {x}")))
    }
}

fn vector(xs: &[f64], n: usize, what: &str) -> CliResult<AlgebraVector> {
    if xs.len() != n {
        return Err(config_err(format!("{what} has {} entries, expected {n}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(config_err(format!("{what} must be finite")));
    }
    Ok(AlgebraVector::new(xs.to_vec()))
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> CliResult<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(config_err(format!("{what} must be a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn field_from_spec(spec: &FieldSpec, modes: usize) -> CliResult<FourierField> {
    match spec {
        FieldSpec::Samples(Samples { samples }) => {
            let m = samples.len();
            if m < 2 * modes + 1 {
                return Err(config_err(format!("{m} samples cannot resolve {modes} modes; need at least {}", 2 * modes + 1)));
            }
            if samples.iter().any(|x| !x.is_finite()) {
                return Err(config_err("field samples must be finite"));
            }
            let coeffs = (-(modes as i64)..=modes as i64)
                .map(|k| {
                    samples.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, f)| {
                        let x = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                        acc + Complex64::from_polar(*f, -(k as f64) * x)
                    }) / m as f64
                })
                .collect();
            Ok(FourierField::from_coeffs(modes, coeffs)?)
        }
        FieldSpec::Fourier(SparseFourier { fourier }) => {
            let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * modes + 1];
            for [k, re, im] in fourier {
                if k.fract() != 0.0 || *k < 0.0 || *k > modes as f64 {
                    return Err(config_err(format!("Fourier mode {k} is not an integer in 0..={modes}")));
                }
                if !re.is_finite() || !im.is_finite() {
                    return Err(config_err("Fourier coefficients must be finite"));
                }
                let k = *k as usize;
                if k == 0 && *im != 0.0 {
                    return Err(config_err("the mean of a real field has zero imaginary part"));
                }
                coeffs[modes + k] = Complex64::new(*re, *im);
                coeffs[modes - k] = Complex64::new(*re, -*im);
            }
            Ok(FourierField::from_coeffs(modes, coeffs)?)
        }
        FieldSpec::Coords(RealCoords { coords }) => {
            if coords.len() != 2 * modes + 1 {
                return Err(config_err(format!("field has {} coordinates, expected {}", coords.len(), 2 * modes + 1)));
            }
            Ok(FourierField::from_real_coords(coords)?)
        }
    }
}
