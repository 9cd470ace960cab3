//! Pseudospectral magnetic EPDiff on the circle.
//!
//! With `m = A_s u`, `A_s = (1 − ∂²)^s`, the equation reads
//!
//! ```text
//! m_t = −(u m_x + 2 u_x m) − (a_x u + 2 a u_x),
//! ```
//!
//! where the last bracket is `A_s Y u` for the magnetic field with kernel `a`.
//! Fields are truncated to modes `|k| ≤ N`; quadratic products are formed on a
//! zero-padded grid of `M ≥ 4N` points, which removes every aliased
//! contribution to the retained modes (the padded form of the 2/3 rule).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Real `2π`-periodic field `u(x) = Σ_{|k|≤N} c_k e^{ikx}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    modes: usize,
    grid: usize,
    /// `coeffs[j]` is the coefficient of mode `k = j − N`.
    coeffs: Vec<Complex64>,
}

impl FourierField {
    pub fn zeros(modes: usize) -> Self {
        Self {
            modes,
            grid: default_grid(modes),
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * modes + 1],
        }
    }

    /// Coefficients for `k = −N..=N`; Hermitian symmetry is checked to 1e−13.
    pub fn from_coeffs(modes: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_dim(2 * modes + 1, coeffs.len())?;
        let field = Self {
            modes,
            grid: default_grid(modes),
            coeffs,
        };
        if !field.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Fourier coefficient".into()));
        }
        let res = field.hermitian_residual();
        if res > 1e-13 * (1.0 + field.max_coeff()) {
            return Err(Error::InvalidArgument(format!(
                "coefficients are not Hermitian-symmetric (residual {res:e})"
            )));
        }
        Ok(field)
    }

    /// Truncated Fourier series of `f`, computed from `M` equispaced samples.
    pub fn from_fn(modes: usize, f: impl Fn(f64) -> f64) -> Self {
        let grid = default_grid(modes);
        let mut buf: Vec<Complex64> = (0..grid)
            .map(|j| Complex64::new(f(2.0 * PI * j as f64 / grid as f64), 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(grid).process(&mut buf);
        let mut field = Self::zeros(modes);
        for k in -(modes as i64)..=(modes as i64) {
            field.coeffs[(k + modes as i64) as usize] = buf[k.rem_euclid(grid as i64) as usize] / grid as f64;
        }
        field.symmetrize();
        field
    }

    /// Field with the given coordinates in the real basis
    /// `1, cos x, sin x, cos 2x, sin 2x, …`.
    pub fn from_real_coords(coords: &[f64]) -> Result<Self> {
        if coords.len() % 2 == 0 {
            return Err(Error::InvalidArgument("real coordinates need odd length 2N + 1".into()));
        }
        let modes = coords.len() / 2;
        let mut field = Self::zeros(modes);
        field.coeffs[modes] = Complex64::new(coords[0], 0.0);
        for k in 1..=modes {
            let c = Complex64::new(0.5 * coords[2 * k - 1], -0.5 * coords[2 * k]);
            field.coeffs[modes + k] = c;
            field.coeffs[modes - k] = c.conj();
        }
        Ok(field)
    }

    pub fn to_real_coords(&self) -> Vec<f64> {
        let mut out = vec![self.coeff(0).re];
        for k in 1..=self.modes as i64 {
            let c = self.coeff(k);
            out.push(2.0 * c.re);
            out.push(-2.0 * c.im);
        }
        out
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of mode `k`; zero for `|k| > N`.
    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.modes {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.modes as i64) as usize]
        }
    }

    /// `max_k |c_k − conj(c_{−k})|`.
    pub fn hermitian_residual(&self) -> f64 {
        (0..=self.modes as i64)
            .map(|k| (self.coeff(k) - self.coeff(-k).conj()).norm())
            .fold(0.0, f64::max)
    }

    fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn symmetrize(&mut self) {
        let n = self.modes as i64;
        for k in 0..=n {
            let avg = 0.5 * (self.coeff(k) + self.coeff(-k).conj());
            self.coeffs[(k + n) as usize] = avg;
            self.coeffs[(n - k) as usize] = avg.conj();
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.modes as i64;
        (-n..=n)
            .map(|k| (self.coeff(k) * Complex64::from_polar(1.0, k as f64 * x)).re)
            .sum()
    }

    /// Values at the `M` grid points `2πj/M`.
    pub fn to_grid(&self) -> Vec<f64> {
        let mut buf = self.padded(self.grid);
        FftPlanner::new().plan_fft_inverse(self.grid).process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// `max_x |u(x)|` sampled on the grid.
    pub fn max_abs(&self) -> f64 {
        self.to_grid().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn derivative(&self) -> Self {
        let mut out = self.clone();
        for (j, c) in out.coeffs.iter_mut().enumerate() {
            let k = j as f64 - self.modes as f64;
            *c *= Complex64::new(0.0, k);
        }
        out
    }

    fn padded(&self, size: usize) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for k in -(self.modes as i64)..=(self.modes as i64) {
            buf[k.rem_euclid(size as i64) as usize] += self.coeff(k);
        }
        buf
    }

    fn map_coeffs(&self, f: impl Fn(i64, Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for (j, c) in out.coeffs.iter_mut().enumerate() {
            *c = f(j as i64 - self.modes as i64, *c);
        }
        out
    }

    fn axpy(&self, a: f64, other: &FourierField) -> Self {
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o * a;
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// CSV with columns `k, re, im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,re,im\n");
        for k in -(self.modes as i64)..=(self.modes as i64) {
            let c = self.coeff(k);
            let _ = writeln!(out, "{k},{},{}", c.re, c.im);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::InvalidArgument(format!("bad row {line}")));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad number {s}: {e}")))
            };
            let k = parts[0]
                .trim()
                .parse::<i64>()
                .map_err(|e| Error::InvalidArgument(format!("bad mode {}: {e}", parts[0])))?;
            rows.push((k, Complex64::new(num(parts[1])?, num(parts[2])?)));
        }
        if rows.len() % 2 == 0 {
            return Err(Error::InvalidArgument("expected modes −N..=N".into()));
        }
        let modes = rows.len() / 2;
        for (j, (k, _)) in rows.iter().enumerate() {
            if *k != j as i64 - modes as i64 {
                return Err(Error::InvalidArgument(format!("mode {k} out of order")));
            }
        }
        Self::from_coeffs(modes, rows.into_iter().map(|(_, c)| c).collect())
    }
}

fn default_grid(modes: usize) -> usize {
    (4 * modes).max(8)
}

/// `A_s = (1 − ∂²)^s`, the Fourier multiplier `(1 + k²)^s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevInertia {
    s: f64,
}

impl SobolevInertia {
    /// Real order `s ≥ 1`; non-integer orders use the real power of the multiplier.
    pub fn new(s: f64) -> Result<Self> {
        if !(s >= 1.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("Sobolev order must be >= 1, got {s}")));
        }
        Ok(Self { s })
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn multiplier(&self, k: i64) -> f64 {
        (1.0 + (k * k) as f64).powf(self.s)
    }

    pub fn apply(&self, u: &FourierField) -> FourierField {
        u.map_coeffs(|k, c| c * self.multiplier(k))
    }

    pub fn invert(&self, m: &FourierField) -> FourierField {
        m.map_coeffs(|k, c| c / self.multiplier(k))
    }

    /// `E = ½ ⟨A_s u, u⟩_{L²} = π Σ_k (1 + k²)^s |c_k|²`.
    pub fn energy(&self, u: &FourierField) -> f64 {
        let n = u.modes as i64;
        PI * (-n..=n).map(|k| self.multiplier(k) * u.coeff(k).norm_sqr()).sum::<f64>()
    }
}

/// FFT plans and the precomputed forcing field on the product grid.
struct Workspace {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    a: Vec<f64>,
    a_x: Vec<f64>,
    inertia: SobolevInertia,
    modes: usize,
}

impl Workspace {
    fn new(u: &FourierField, inertia: SobolevInertia, a: &FourierField, dealias: bool) -> Result<Self> {
        check_dim(u.modes, a.modes)?;
        check_dim(u.grid, a.grid)?;
        let size = if dealias { u.grid } else { 2 * u.modes + 1 };
        let mut planner = FftPlanner::new();
        let mut ws = Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            a: vec![],
            a_x: vec![],
            inertia,
            modes: u.modes,
        };
        ws.a = ws.values(a);
        ws.a_x = ws.values(&a.derivative());
        Ok(ws)
    }

    fn values(&self, f: &FourierField) -> Vec<f64> {
        let mut buf = f.padded(self.size);
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    fn rhs(&self, u: &FourierField) -> FourierField {
        let m = self.inertia.apply(u);
        let uv = self.values(u);
        let ux = self.values(&u.derivative());
        let mv = self.values(&m);
        let mx = self.values(&m.derivative());
        let mut buf: Vec<Complex64> = (0..self.size)
            .map(|j| {
                let euler = uv[j] * mx[j] + 2.0 * ux[j] * mv[j];
                let forcing = self.a_x[j] * uv[j] + 2.0 * self.a[j] * ux[j];
                Complex64::new(-(euler + forcing), 0.0)
            })
            .collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        let n = self.modes as i64;
        let mut out = FourierField::zeros(self.modes);
        out.grid = u.grid;
        for k in -n..=n {
            let c = buf[k.rem_euclid(self.size as i64) as usize] * scale;
            out.coeffs[(k + n) as usize] = c / self.inertia.multiplier(k);
        }
        out.symmetrize();
        out
    }
}

/// `u_t` of the magnetic EPDiff equation with field kernel `a`.
pub fn epdiff_rhs(u: &FourierField, inertia: &SobolevInertia, a: &FourierField) -> Result<FourierField> {
    epdiff_rhs_with(u, inertia, a, true)
}

/// As [`epdiff_rhs`]; with `dealias = false` products are formed on the
/// unpadded `2N + 1` point grid, so aliased modes fold back.
pub fn epdiff_rhs_with(
    u: &FourierField,
    inertia: &SobolevInertia,
    a: &FourierField,
    dealias: bool,
) -> Result<FourierField> {
    Ok(Workspace::new(u, *inertia, a, dealias)?.rhs(u))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpdiffOptions {
    pub dealias: bool,
    /// Store a spectral snapshot every this many steps (the final state is always stored).
    pub snapshot_every: usize,
}

impl Default for EpdiffOptions {
    fn default() -> Self {
        Self {
            dealias: true,
            snapshot_every: 100,
        }
    }
}

/// Spectral snapshots plus the per-step energy series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpdiffTrajectory {
    pub sobolev_order: f64,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<FourierField>,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
}

impl EpdiffTrajectory {
    pub fn final_state(&self) -> &FourierField {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    /// `max_t |E(t) − E(0)| / E(0)`; absolute when `E(0) = 0`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        let worst = self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
        if e0 > 0.0 {
            worst / e0
        } else {
            worst
        }
    }

    /// CSV `t, E`.
    pub fn energy_csv(&self) -> String {
        let mut out = String::from("t,E\n");
        for (t, e) in self.times.iter().zip(&self.energies) {
            let _ = writeln!(out, "{t},{e}");
        }
        out
    }

    /// CSV `t, k, re, im` with one row per snapshot and mode.
    pub fn snapshots_csv(&self) -> String {
        let mut out = String::from("t,k,re,im\n");
        for (t, f) in self.snapshot_times.iter().zip(&self.snapshots) {
            for k in -(f.modes as i64)..=(f.modes as i64) {
                let c = f.coeff(k);
                let _ = writeln!(out, "{t},{k},{},{}", c.re, c.im);
            }
        }
        out
    }
}

/// RK4 in spectral space. Refuses steps with `dt · max|u0| · N > 0.5`.
pub fn integrate_epdiff(
    u0: &FourierField,
    inertia: &SobolevInertia,
    a: &FourierField,
    t: f64,
    dt: f64,
) -> Result<EpdiffTrajectory> {
    integrate_epdiff_with(u0, inertia, a, t, dt, &EpdiffOptions::default())
}

pub fn integrate_epdiff_with(
    u0: &FourierField,
    inertia: &SobolevInertia,
    a: &FourierField,
    t: f64,
    dt: f64,
    opts: &EpdiffOptions,
) -> Result<EpdiffTrajectory> {
    if !(t > 0.0) || !t.is_finite() || !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("need positive duration and step, got T = {t}, dt = {dt}")));
    }
    if !u0.is_finite() || !a.is_finite() {
        return Err(Error::InvalidArgument("non-finite initial data".into()));
    }
    let speed = u0.max_abs() * u0.modes as f64;
    if dt * speed > 0.5 {
        return Err(Error::Cfl {
            dt,
            required: 0.5 / speed,
        });
    }
    let ws = Workspace::new(u0, *inertia, a, opts.dealias)?;
    let ratio = t / dt;
    let n = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round().max(1.0) as usize
    } else {
        ratio.ceil() as usize
    };
    let dt = t / n as f64;
    let every = opts.snapshot_every.max(1);
    let mut traj = EpdiffTrajectory {
        sobolev_order: inertia.order(),
        dt,
        snapshot_times: vec![0.0],
        snapshots: vec![u0.clone()],
        times: vec![0.0],
        energies: vec![inertia.energy(u0)],
    };
    let mut u = u0.clone();
    for step in 1..=n {
        let k1 = ws.rhs(&u);
        let k2 = ws.rhs(&u.axpy(0.5 * dt, &k1));
        let k3 = ws.rhs(&u.axpy(0.5 * dt, &k2));
        let k4 = ws.rhs(&u.axpy(dt, &k3));
        let next = u
            .axpy(dt / 6.0, &k1)
            .axpy(dt / 3.0, &k2)
            .axpy(dt / 3.0, &k3)
            .axpy(dt / 6.0, &k4);
        if !next.is_finite() {
            return Err(Error::NonFinite {
                last_valid_time: (step - 1) as f64 * dt,
            });
        }
        u = next;
        let time = step as f64 * dt;
        traj.times.push(time);
        traj.energies.push(inertia.energy(&u));
        if step % every == 0 || step == n {
            traj.snapshot_times.push(time);
            traj.snapshots.push(u.clone());
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub band: (usize, usize),
    /// Least-squares slope of `log|c_k|` against `log k` per snapshot.
    pub slopes: Vec<f64>,
    pub max_deviation: f64,
}

/// Tracks the spectral slope over the mode band `[lo, hi]`.
pub fn decay_monitor(traj: &EpdiffTrajectory, band: (usize, usize)) -> Result<DecayReport> {
    let (lo, hi) = band;
    if lo == 0 || hi <= lo {
        return Err(Error::InvalidArgument(format!("empty or invalid band {lo}..={hi}")));
    }
    let modes = traj.snapshots[0].modes;
    if hi > modes {
        return Err(Error::InvalidArgument(format!("band reaches mode {hi} beyond N = {modes}")));
    }
    let xs: Vec<f64> = (lo..=hi).map(|k| (k as f64).ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let mut slopes = Vec::with_capacity(traj.snapshots.len());
    for (t, f) in traj.snapshot_times.iter().zip(&traj.snapshots) {
        let ys = (lo..=hi)
            .map(|k| {
                let amp = f.coeff(k as i64).norm();
                if amp > 0.0 && amp.is_finite() {
                    Ok(amp.ln())
                } else {
                    Err(Error::InvalidArgument(format!("mode {k} carries no energy at t = {t}; band under-resolved")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        slopes.push(sxy / sxx);
    }
    let max_deviation = slopes.iter().map(|s| (s - slopes[0]).abs()).fold(0.0, f64::max);
    Ok(DecayReport {
        band,
        slopes,
        max_deviation,
    })
}
