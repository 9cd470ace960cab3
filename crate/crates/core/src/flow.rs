//! Time integration of magnetic geodesics.
//!
//! The reduced magnetic Euler–Arnold equation in right-trivialized velocity is
//!
//! ```text
//! u̇ = −A⁻¹ ad*_u (A u) − Y u,
//! ```
//!
//! and its Hamiltonian counterpart, with `p = A u − α` and `u = A⁻¹(p + α)`,
//! is the Lie–Poisson equation `ṗ = −ad*_u p`. The two are stepped by
//! separate RK4 loops in different variables, so their agreement checks the
//! Legendre conjugacy rather than restating it.
//!
//! Group reconstruction solves `ġ = u(t) g`. Between steps `u(t)` is the cubic
//! Hermite interpolant of the RK4 nodes; matrix groups advance with the
//! two-point Gauss Magnus step, circle diffeomorphisms by RK4 on the grid
//! particles. Both are fourth order, matching the velocity integrator.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraVector, CircleBasis, CircleDiffeo, Covector, GroupKind, GroupPoint, LieAlgebra};
use crate::error::{check_dim, Error, Result};
use crate::magnetics::MagneticSystem;

/// Point of the cotangent bundle in right-trivialized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub g: GroupPoint,
    pub p: Covector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub integrator: String,
    pub group: GroupKind,
    pub dt: f64,
    pub system_hash: String,
}

/// Time-sampled magnetic geodesic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<GroupPoint>,
    pub velocities: Vec<AlgebraVector>,
    /// Kinetic energy `½⟨A u, u⟩` (or the Hamiltonian value) per sample.
    pub energies: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_point(&self) -> &GroupPoint {
        self.points.last().expect("trajectories are never empty")
    }

    pub fn final_velocity(&self) -> &AlgebraVector {
        self.velocities.last().expect("trajectories are never empty")
    }

    /// `max_t |E(t) − E(0)| / E(0)`; absolute drift when `E(0) = 0`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        let worst = self
            .energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max);
        if e0 > 0.0 {
            worst / e0
        } else {
            worst
        }
    }

    /// Sup-norm distance between velocity series sampled at the same times.
    pub fn velocity_distance(&self, other: &Trajectory) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(self
            .velocities
            .iter()
            .zip(&other.velocities)
            .map(|(a, b)| (&a.0 - &b.0).amax())
            .fold(0.0, f64::max))
    }

    /// Sup over samples of the group-point distance.
    pub fn point_distance(&self, other: &Trajectory) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        self.points
            .iter()
            .zip(&other.points)
            .try_fold(0.0f64, |acc, (a, b)| Ok(acc.max(a.distance(b)?)))
    }

    /// CSV with columns `t, g_0.., u_0.., E` (group entries row-major).
    pub fn to_csv(&self) -> String {
        let ng = self.points[0].entries().len();
        let nu = self.velocities[0].dim();
        let mut out = String::from("t");
        for i in 0..ng {
            out.push_str(&format!(",g{i}"));
        }
        for i in 0..nu {
            out.push_str(&format!(",u{i}"));
        }
        out.push_str(",E\n");
        for k in 0..self.len() {
            out.push_str(&self.times[k].to_string());
            for x in self.points[k].entries() {
                out.push(',');
                out.push_str(&x.to_string());
            }
            for x in self.velocities[k].iter() {
                out.push(',');
                out.push_str(&x.to_string());
            }
            out.push(',');
            out.push_str(&self.energies[k].to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the CSV written by [`Trajectory::to_csv`]; metadata is supplied
    /// by the caller since the CSV form does not carry it.
    pub fn from_csv(text: &str, meta: TrajectoryMeta) -> Result<Trajectory> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let ng = cols.iter().filter(|c| c.starts_with('g')).count();
        let nu = cols.iter().filter(|c| c.starts_with('u')).count();
        if cols.len() != ng + nu + 2 || cols[0] != "t" || cols[cols.len() - 1] != "E" {
            return Err(Error::InvalidArgument(format!("unexpected header {header}")));
        }
        let mut traj = Trajectory {
            times: vec![],
            points: vec![],
            velocities: vec![],
            energies: vec![],
            meta,
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals = line
                .split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad number {v}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            check_dim(cols.len(), vals.len())?;
            traj.times.push(vals[0]);
            let g = &vals[1..1 + ng];
            traj.points.push(if traj.meta.group.is_matrix_group() {
                let n = (ng as f64).sqrt().round() as usize;
                GroupPoint::Matrix(nalgebra::DMatrix::from_row_slice(n, n, g))
            } else {
                GroupPoint::Diffeo(CircleDiffeo::from_values(g.to_vec()))
            });
            traj.velocities
                .push(AlgebraVector::new(vals[1 + ng..1 + ng + nu].to_vec()));
            traj.energies.push(vals[cols.len() - 1]);
        }
        if traj.is_empty() {
            return Err(Error::InvalidArgument("CSV has no rows".into()));
        }
        Ok(traj)
    }
}

/// `u̇ = −A⁻¹ ad*_u (A u) − Y u`.
pub fn magnetic_rhs(sys: &MagneticSystem, u: &AlgebraVector) -> Result<AlgebraVector> {
    check_dim(sys.dim(), u.dim())?;
    Ok(AlgebraVector(rhs_raw(sys, &u.0)))
}

fn rhs_raw(sys: &MagneticSystem, u: &DVector<f64>) -> DVector<f64> {
    let a = sys.inertia();
    let m = a.matrix() * u;
    let euler = a.inverse_matrix() * sys.algebra().coad_raw(u, &m);
    -euler - sys.lorentz_matrix() * u
}

/// `p = A u − α`.
pub fn legendre(sys: &MagneticSystem, u: &AlgebraVector) -> Result<Covector> {
    let m = sys.inertia().flat(u)?;
    Ok(Covector(m.0 - &sys.alpha().0))
}

/// `u = A⁻¹(p + α)`.
pub fn inverse_legendre(sys: &MagneticSystem, p: &Covector) -> Result<AlgebraVector> {
    check_dim(sys.dim(), p.dim())?;
    sys.inertia().sharp(&Covector(&p.0 + &sys.alpha().0))
}

/// `H(p) = ½ |p + α|²_*`.
pub fn hamiltonian(sys: &MagneticSystem, pp: &PhasePoint) -> Result<f64> {
    check_dim(sys.dim(), pp.p.dim())?;
    let shifted = Covector(&pp.p.0 + &sys.alpha().0);
    Ok(0.5 * sys.inertia().dual_norm(&shifted)?.powi(2))
}

fn step_count(t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {t}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    let ratio = t / dt;
    let n = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round().max(1.0) as usize
    } else {
        ratio.ceil() as usize
    };
    Ok((n, t / n as f64))
}

fn rk4(f: &impl Fn(&DVector<f64>) -> DVector<f64>, y: &DVector<f64>, k1: &DVector<f64>, h: f64) -> DVector<f64> {
    let k2 = f(&(y + k1 * (0.5 * h)));
    let k3 = f(&(y + &k2 * (0.5 * h)));
    let k4 = f(&(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Cubic Hermite interpolant of a velocity over one step, `θ ∈ [0, 1]`.
struct HermiteSegment<'a> {
    u0: &'a DVector<f64>,
    f0: &'a DVector<f64>,
    u1: &'a DVector<f64>,
    f1: &'a DVector<f64>,
    dt: f64,
}

impl HermiteSegment<'_> {
    fn at(&self, th: f64) -> DVector<f64> {
        let t2 = th * th;
        let t3 = t2 * th;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + th;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.u0 * h00 + self.f0 * (h10 * self.dt) + self.u1 * h01 + self.f1 * (h11 * self.dt)
    }
}

fn advance_point(alg: &LieAlgebra, g: &GroupPoint, seg: &HermiteSegment) -> Result<GroupPoint> {
    let dt = seg.dt;
    match (g, alg.circle()) {
        (GroupPoint::Matrix(_), None) => {
            let s3 = 3f64.sqrt();
            let u1 = seg.at(0.5 - s3 / 6.0);
            let u2 = seg.at(0.5 + s3 / 6.0);
            let comm = alg.bracket_raw(&u2, &u1);
            let omega = (&u1 + &u2) * (0.5 * dt) + comm * (s3 / 12.0 * dt * dt);
            alg.exp_left_mul(&AlgebraVector(omega), g)
        }
        (GroupPoint::Diffeo(phi), Some(circle)) => {
            let (ua, ub, uc) = (seg.at(0.0), seg.at(0.5), seg.at(1.0));
            let mut next = phi.clone();
            advance_particles(circle, next.values_mut(), [&ua, &ub, &uc], dt);
            Ok(GroupPoint::Diffeo(next))
        }
        _ => Err(Error::InvalidArgument(
            "group point does not belong to the system's group".into(),
        )),
    }
}

fn advance_particles(circle: &CircleBasis, pts: &mut [f64], u: [&DVector<f64>; 3], dt: f64) {
    let [ua, ub, uc] = u.map(|v| v.as_slice());
    for y in pts.iter_mut() {
        let k1 = circle.eval(ua, *y);
        let k2 = circle.eval(ub, *y + 0.5 * dt * k1);
        let k3 = circle.eval(ub, *y + 0.5 * dt * k2);
        let k4 = circle.eval(uc, *y + dt * k3);
        *y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
}

pub(crate) fn check_point(alg: &LieAlgebra, g: &GroupPoint) -> Result<()> {
    match (g, alg.circle()) {
        (GroupPoint::Matrix(m), None) if m.nrows() == 3 && m.ncols() == 3 => Ok(()),
        (GroupPoint::Diffeo(d), Some(c)) => check_dim(c.grid, d.grid()),
        _ => Err(Error::InvalidArgument(
            "initial point does not belong to the system's group".into(),
        )),
    }
}

fn constant_trajectory(sys: &MagneticSystem, g0: &GroupPoint, u0: &AlgebraVector, n: usize, dt: f64, name: &str, energy: f64) -> Trajectory {
    Trajectory {
        times: (0..=n).map(|k| k as f64 * dt).collect(),
        points: vec![g0.clone(); n + 1],
        velocities: vec![u0.clone(); n + 1],
        energies: vec![energy; n + 1],
        meta: TrajectoryMeta {
            integrator: name.into(),
            group: sys.algebra().kind(),
            dt,
            system_hash: sys.fingerprint(),
        },
    }
}

/// Shared RK4 + reconstruction loop. `state` is advanced by `f`; `to_velocity`
/// and `velocity_rate` map the state and its derivative to `u` and `u̇`.
#[allow(clippy::too_many_arguments)]
fn drive(
    sys: &MagneticSystem,
    y0: DVector<f64>,
    g0: &GroupPoint,
    n: usize,
    dt: f64,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    to_velocity: impl Fn(&DVector<f64>) -> DVector<f64>,
    velocity_rate: impl Fn(&DVector<f64>) -> DVector<f64>,
    energy: impl Fn(&DVector<f64>) -> f64,
    name: &str,
) -> Result<Trajectory> {
    let alg = sys.algebra();
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        points: Vec::with_capacity(n + 1),
        velocities: Vec::with_capacity(n + 1),
        energies: Vec::with_capacity(n + 1),
        meta: TrajectoryMeta {
            integrator: name.into(),
            group: alg.kind(),
            dt,
            system_hash: sys.fingerprint(),
        },
    };
    let mut y = y0;
    let mut g = g0.clone();
    let mut fy = f(&y);
    traj.times.push(0.0);
    traj.points.push(g.clone());
    traj.velocities.push(AlgebraVector(to_velocity(&y)));
    traj.energies.push(energy(&y));
    for k in 0..n {
        let y_next = rk4(&f, &y, &fy, dt);
        let f_next = f(&y_next);
        let t_next = (k + 1) as f64 * dt;
        if !y_next.iter().all(|x| x.is_finite()) || !f_next.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                last_valid_time: k as f64 * dt,
            });
        }
        let (u0, u1) = (to_velocity(&y), to_velocity(&y_next));
        let (du0, du1) = (velocity_rate(&fy), velocity_rate(&f_next));
        let seg = HermiteSegment {
            u0: &u0,
            f0: &du0,
            u1: &u1,
            f1: &du1,
            dt,
        };
        g = advance_point(alg, &g, &seg)?;
        if !g.is_finite() {
            return Err(Error::NonFinite {
                last_valid_time: k as f64 * dt,
            });
        }
        traj.times.push(t_next);
        traj.points.push(g.clone());
        traj.velocities.push(AlgebraVector(u1));
        traj.energies.push(energy(&y_next));
        y = y_next;
        fy = f_next;
    }
    Ok(traj)
}

/// RK4 on the reduced magnetic equation with fourth-order group reconstruction.
/// `dt` is shrunk slightly if needed so that an integer number of steps hits `t`.
pub fn integrate_magnetic(
    sys: &MagneticSystem,
    u0: &AlgebraVector,
    g0: &GroupPoint,
    t: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_dim(sys.dim(), u0.dim())?;
    check_point(sys.algebra(), g0)?;
    if !u0.is_finite() {
        return Err(Error::InvalidArgument("initial velocity is not finite".into()));
    }
    let (n, dt) = step_count(t, dt)?;
    if u0.iter().all(|x| *x == 0.0) {
        // Rest point of the flow.
        return Ok(constant_trajectory(sys, g0, u0, n, dt, "rk4-lagrangian", 0.0));
    }
    let a = sys.inertia().matrix().clone();
    drive(
        sys,
        u0.0.clone(),
        g0,
        n,
        dt,
        |u| rhs_raw(sys, u),
        |u| u.clone(),
        |du| du.clone(),
        |u| 0.5 * (&a * u).dot(u),
        "rk4-lagrangian",
    )
}

/// RK4 on the Lie–Poisson equation `ṗ = −ad*_u p`, `u = A⁻¹(p + α)`.
/// Recorded velocities are `A⁻¹(p + α)`; recorded energies are `H(p)`.
pub fn integrate_hamiltonian(sys: &MagneticSystem, pp0: &PhasePoint, t: f64, dt: f64) -> Result<Trajectory> {
    check_dim(sys.dim(), pp0.p.dim())?;
    check_point(sys.algebra(), &pp0.g)?;
    if !pp0.p.is_finite() {
        return Err(Error::InvalidArgument("initial momentum is not finite".into()));
    }
    let (n, dt) = step_count(t, dt)?;
    let a_inv = sys.inertia().inverse_matrix().clone();
    let alpha = sys.alpha().0.clone();
    let alg = sys.algebra();
    let velocity = |p: &DVector<f64>| &a_inv * (p + &alpha);
    if velocity(&pp0.p.0).iter().all(|x| *x == 0.0) {
        let u0 = AlgebraVector::zeros(sys.dim());
        return Ok(constant_trajectory(sys, &pp0.g, &u0, n, dt, "rk4-hamiltonian", 0.0));
    }
    drive(
        sys,
        pp0.p.0.clone(),
        &pp0.g,
        n,
        dt,
        |p| -alg.coad_raw(&velocity(p), p),
        velocity,
        |dp| &a_inv * dp,
        |p| {
            let shifted = p + &alpha;
            0.5 * (&a_inv * &shifted).dot(&shifted)
        },
        "rk4-hamiltonian",
    )
}

/// Number of RK4 steps used by [`magnetic_exp`] for an initial velocity.
pub fn magnetic_exp_steps(v: &AlgebraVector) -> usize {
    let scale = v.amax().max(1.0);
    (400.0 * scale).ceil() as usize
}

/// Time-one endpoint of the magnetic geodesic through `g` with velocity `v`.
pub fn magnetic_exp(sys: &MagneticSystem, g: &GroupPoint, v: &AlgebraVector) -> Result<GroupPoint> {
    check_dim(sys.dim(), v.dim())?;
    if v.iter().all(|x| *x == 0.0) {
        return Ok(g.clone());
    }
    let n = magnetic_exp_steps(v);
    let traj = integrate_magnetic(sys, v, g, 1.0, 1.0 / n as f64)?;
    Ok(traj.final_point().clone())
}
