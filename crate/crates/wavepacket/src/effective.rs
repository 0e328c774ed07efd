//! Emergent classical dynamics: the Newton-like equation with multipole
//! correction forces, the coupled two-particle system, the relativistic
//! momentum-velocity relation and quantum-vs-effective trajectory metrics.

use std::collections::BTreeMap;

use crate::dynamics::{interp_series, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::moments::{
    central_moments, density, two_body_central_moments, MultipoleSet, TwoBodyMoments,
};
use crate::multi_index::{indices_up_to, MultiIndex};
use crate::potential::Potential;

/// Default ODE sub-step ceiling for the fourth-order integrator.
pub const DEFAULT_MAX_SUBSTEP: f64 = 1e-3;

/// Time-dependent source of multipole moments for the correction forces.
pub enum MultipoleSource<'a> {
    /// No corrections beyond the bare Newton force.
    Bare,
    /// Moments frozen at their initial values (a closed predictive model).
    Frozen(&'a MultipoleSet),
    /// Moments linearly interpolated from a quantum record (a consistency
    /// check, not a prediction).
    Interpolated(&'a MomentSeries),
    /// Analytic moments supplied by the caller.
    Prescribed(&'a dyn Fn(f64) -> MultipoleSet),
}

/// Central density moments along a trajectory record, one set per snapshot.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub sets: Vec<MultipoleSet>,
}

impl MomentSeries {
    /// Density moments of every snapshot about its own `<x>(t)`.
    pub fn from_record(record: &TrajectoryRecord, order: usize) -> Result<Self> {
        let mut times = Vec::with_capacity(record.snapshots.len());
        let mut sets = Vec::with_capacity(record.snapshots.len());
        for (ti, snap) in &record.snapshots {
            let field = density(snap)?;
            let set = central_moments(&field, &record.x_mean[*ti], order)?;
            times.push(record.times[*ti]);
            sets.push(set);
        }
        if times.len() < 2 {
            return Err(Error::TooFewTimes {
                required: 2,
                got: times.len(),
            });
        }
        Ok(MomentSeries { times, sets })
    }

    /// Entry-wise linear interpolation of the density moments.
    pub fn at(&self, t: f64) -> MultipoleSet {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        let t = t.clamp(t0, t1);
        let i = match self
            .times
            .binary_search_by(|v| v.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.sets[i].clone(),
            Err(i) => i.clamp(1, self.times.len() - 1),
        };
        let (ta, tb) = (self.times[i - 1], self.times[i]);
        let w = (t - ta) / (tb - ta);
        let mut out = self.sets[i - 1].clone();
        for (alpha, v) in out.density.iter_mut() {
            let b = self.sets[i].density.get(alpha).copied().unwrap_or(*v);
            *v += w * (b - *v);
        }
        out
    }
}

impl<'a> MultipoleSource<'a> {
    fn moments_at(&self, t: f64) -> Option<MultipoleSet> {
        match self {
            MultipoleSource::Bare => None,
            MultipoleSource::Frozen(set) => Some((*set).clone()),
            MultipoleSource::Interpolated(series) => Some(series.at(t)),
            MultipoleSource::Prescribed(f) => Some(f(t)),
        }
    }
}

/// Newton force plus multipole corrections:
/// `F_r = -dV/dx_r - sum_{2 <= |alpha| <= order} rho_alpha / alpha! *
/// d^(alpha + e_r) V`. Reduces to the bare force at order 1 or for
/// potentials with vanishing third derivatives.
pub fn effective_force(
    x: &[f64],
    v: &Potential,
    moments: Option<&MultipoleSet>,
    order: usize,
) -> Result<Vec<f64>> {
    let d = x.len();
    if order < 1 {
        return Err(Error::Other("force order must be at least 1".into()));
    }
    if let Some(maxo) = v.max_derivative_order() {
        if order + 1 > maxo {
            return Err(Error::MissingDerivative { order: order + 1 });
        }
    }
    let mut force = Vec::with_capacity(d);
    for r in 0..d {
        let mut f = -v.derivative(&MultiIndex::unit(d, r), x)?;
        if order >= 2 {
            let set = moments.ok_or_else(|| {
                Error::Other("correction forces need a multipole source".into())
            })?;
            if set.order < order {
                return Err(Error::Other(format!(
                    "multipole set has order {}, force needs {}",
                    set.order, order
                )));
            }
            for alpha in indices_up_to(d, 2, order) {
                let rho = set.density_moment(&alpha).unwrap_or(0.0);
                if rho == 0.0 {
                    continue;
                }
                let da = v.derivative(&alpha.plus_axis(r), x)?;
                f -= rho / alpha.factorial() * da;
            }
        }
        force.push(f);
    }
    Ok(force)
}

/// A classical trajectory with positions and velocities per output time.
#[derive(Debug, Clone)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl ClassicalTrajectory {
    pub fn csv(&self) -> String {
        let d = self.x.first().map_or(0, |x| x.len());
        let mut out = String::from("t");
        for a in 0..d {
            out.push_str(&format!(",x{a}"));
        }
        for a in 0..d {
            out.push_str(&format!(",v{a}"));
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:e}"));
            for a in 0..d {
                out.push_str(&format!(",{:e}", self.x[i][a]));
            }
            for a in 0..d {
                out.push_str(&format!(",{:e}", self.v[i][a]));
            }
            out.push('\n');
        }
        out
    }
}

fn rk4_step<F>(x: &mut Vec<f64>, v: &mut Vec<f64>, t: f64, h: f64, accel: &F) -> Result<()>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let d = x.len();
    let a1 = accel(t, x)?;
    let x2: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * h * v[i]).collect();
    let v2: Vec<f64> = (0..d).map(|i| v[i] + 0.5 * h * a1[i]).collect();
    let a2 = accel(t + 0.5 * h, &x2)?;
    let x3: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * h * v2[i]).collect();
    let v3: Vec<f64> = (0..d).map(|i| v[i] + 0.5 * h * a2[i]).collect();
    let a3 = accel(t + 0.5 * h, &x3)?;
    let x4: Vec<f64> = (0..d).map(|i| x[i] + h * v3[i]).collect();
    let v4: Vec<f64> = (0..d).map(|i| v[i] + h * a3[i]).collect();
    let a4 = accel(t + h, &x4)?;
    for i in 0..d {
        let dx = (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]) / 6.0;
        let dv = (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]) / 6.0;
        x[i] += h * dx;
        v[i] += h * dv;
    }
    Ok(())
}

/// Integrate `m x'' = F_eff` with classic fourth-order one-step integration,
/// reporting the state at every time in `t_grid`.
pub fn integrate_effective(
    x0: &[f64],
    v0: &[f64],
    mass: f64,
    v: &Potential,
    source: &MultipoleSource,
    order: usize,
    t_grid: &[f64],
    max_substep: f64,
) -> Result<ClassicalTrajectory> {
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Other("output times must be strictly increasing".into()));
    }
    let accel = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
        let set = source.moments_at(t);
        let f = effective_force(x, v, set.as_ref(), order)
            .map_err(|e| e.at("effective_force", t))?;
        Ok(f.into_iter().map(|fi| fi / mass).collect())
    };
    let mut x = x0.to_vec();
    let mut vel = v0.to_vec();
    let mut out = ClassicalTrajectory {
        times: vec![t_grid[0]],
        x: vec![x.clone()],
        v: vec![vel.clone()],
    };
    for w in t_grid.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let nsub = ((tb - ta) / max_substep).ceil().max(1.0) as usize;
        let h = (tb - ta) / nsub as f64;
        for s in 0..nsub {
            rk4_step(&mut x, &mut vel, ta + s as f64 * h, h, &accel)?;
        }
        out.times.push(tb);
        out.x.push(x.clone());
        out.v.push(vel.clone());
    }
    Ok(out)
}

/// Double-moment source for the two-particle system.
pub enum TwoBodySource<'a> {
    Bare,
    Frozen(&'a TwoBodyMoments),
    Interpolated(&'a TwoBodyMomentSeries),
}

#[derive(Debug, Clone)]
pub struct TwoBodyMomentSeries {
    pub times: Vec<f64>,
    pub sets: Vec<TwoBodyMoments>,
}

impl TwoBodyMomentSeries {
    pub fn from_record(record: &TrajectoryRecord, order: usize) -> Result<Self> {
        let mut times = Vec::new();
        let mut sets = Vec::new();
        for (ti, snap) in &record.snapshots {
            let c = [record.x_mean[*ti][0], record.x_mean[*ti][1]];
            sets.push(two_body_central_moments(snap, c, order)?);
            times.push(record.times[*ti]);
        }
        Ok(TwoBodyMomentSeries { times, sets })
    }

    pub fn at(&self, t: f64) -> TwoBodyMoments {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        let t = t.clamp(t0, t1);
        let i = match self.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.sets[i].clone(),
            Err(i) => i.clamp(1, self.times.len() - 1),
        };
        let (ta, tb) = (self.times[i - 1], self.times[i]);
        let w = (t - ta) / (tb - ta);
        let mut out = self.sets[i - 1].clone();
        let mut moments = BTreeMap::new();
        for (k, v) in &out.moments {
            let b = self.sets[i].moments.get(k).copied().unwrap_or(*v);
            moments.insert(*k, v + w * (b - v));
        }
        out.moments = moments;
        out
    }
}

impl<'a> TwoBodySource<'a> {
    fn moments_at(&self, t: f64) -> Option<TwoBodyMoments> {
        match self {
            TwoBodySource::Bare => None,
            TwoBodySource::Frozen(m) => Some((*m).clone()),
            TwoBodySource::Interpolated(s) => Some(s.at(t)),
        }
    }
}

/// Coupled two-particle forces with double-moment corrections. The sum runs
/// over `n + m >= 2`, the three dipole terms being excluded: they must
/// vanish in the source (checked against `dipole_tol`). Newton's third law
/// holds exactly for the bare interaction part.
pub fn two_body_force(
    x1: f64,
    x2: f64,
    v: &Potential,
    moments: Option<&TwoBodyMoments>,
    order: usize,
    dipole_tol: f64,
) -> Result<(f64, f64)> {
    let x = [x1, x2];
    let mut force = [0.0f64; 2];
    for i in 0..2 {
        force[i] = -v.derivative(&MultiIndex::unit(2, i), &x)?;
    }
    if order >= 2 {
        let set = moments.ok_or_else(|| {
            Error::Other("two-body corrections need a double-moment source".into())
        })?;
        for (k, d) in set.dipoles().into_iter().enumerate() {
            if d.abs() > dipole_tol {
                let _ = k;
                return Err(Error::NonVanishingDipole {
                    value: d.abs(),
                    tol: dipole_tol,
                });
            }
        }
        for n in 0..=order {
            for m in 0..=order {
                if n + m < 2 || n + m > order || (n == 1 && m == 1) {
                    continue;
                }
                let rho = set.get(n, m);
                if rho == 0.0 {
                    continue;
                }
                let w = rho
                    / (crate::multi_index::factorial(n) * crate::multi_index::factorial(m));
                for i in 0..2 {
                    let mut alpha = MultiIndex(vec![n as u8, m as u8]);
                    alpha.0[i] += 1;
                    force[i] -= w * v.derivative(&alpha, &x)?;
                }
            }
        }
    }
    Ok((force[0], force[1]))
}

/// Integrate the coupled two-particle equations of motion. `dipole_tol`
/// bounds the three double-expansion dipoles of the source moments; note
/// that the cross entry is the position covariance, which interacting
/// evolution grows even for initially product states.
#[allow(clippy::too_many_arguments)]
pub fn integrate_two_body(
    x0: [f64; 2],
    v0: [f64; 2],
    masses: [f64; 2],
    v: &Potential,
    source: &TwoBodySource,
    order: usize,
    t_grid: &[f64],
    max_substep: f64,
    dipole_tol: f64,
) -> Result<ClassicalTrajectory> {
    let accel = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
        let set = source.moments_at(t);
        let (f1, f2) = two_body_force(x[0], x[1], v, set.as_ref(), order, dipole_tol)
            .map_err(|e| e.at("two_body_force", t))?;
        Ok(vec![f1 / masses[0], f2 / masses[1]])
    };
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Other("output times must be strictly increasing".into()));
    }
    let mut x = x0.to_vec();
    let mut vel = v0.to_vec();
    let mut out = ClassicalTrajectory {
        times: vec![t_grid[0]],
        x: vec![x.clone()],
        v: vec![vel.clone()],
    };
    for w in t_grid.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let nsub = ((tb - ta) / max_substep).ceil().max(1.0) as usize;
        let h = (tb - ta) / nsub as f64;
        for s in 0..nsub {
            rk4_step(&mut x, &mut vel, ta + s as f64 * h, h, &accel)?;
        }
        out.times.push(tb);
        out.x.push(x.clone());
        out.v.push(vel.clone());
    }
    Ok(out)
}

/// Equal-mass relativistic relation between the relative velocity and the
/// relative momentum: `pi = m v / sqrt(4 - v^2/c^2)`, the inverse of
/// `v(pi) = 2 pi c / sqrt(m^2 c^2 + pi^2)`.
pub fn relativistic_relative_momentum(v_rel: f64, m: f64, c: f64) -> Result<f64> {
    let bound = 2.0 * c;
    if v_rel.abs() >= bound {
        return Err(Error::SuperluminalVelocity {
            speed: v_rel.abs(),
            bound,
        });
    }
    Ok(m * v_rel / (4.0 - (v_rel / c).powi(2)).sqrt())
}

/// Relative velocity of a relative momentum, general masses:
/// `v(pi) = c pi (1/sqrt(m1^2 c^2 + pi^2) + 1/sqrt(m2^2 c^2 + pi^2))`.
pub fn relativistic_relative_velocity(pi: f64, m1: f64, m2: f64, c: f64) -> f64 {
    c * pi
        * (1.0 / (m1 * m1 * c * c + pi * pi).sqrt() + 1.0 / (m2 * m2 * c * c + pi * pi).sqrt())
}

/// Error metrics between a quantum expectation trajectory and a classical
/// effective one.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonMetrics {
    pub max_position_error: f64,
    pub rms_position_error: f64,
    /// `max_position_error / (hbar^2 * scale)`.
    pub error_vs_hbar2_bound: f64,
    /// First time the error exceeds the threshold, if it ever does.
    pub horizon: Option<f64>,
}

pub fn compare_trajectories(
    quantum_times: &[f64],
    quantum_x: &[Vec<f64>],
    classical: &ClassicalTrajectory,
    hbar: f64,
    hbar2_scale: f64,
    horizon_threshold: f64,
) -> Result<ComparisonMetrics> {
    let (ct0, ct1) = (classical.times[0], *classical.times.last().unwrap());
    let mut max_err = 0.0f64;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    let mut horizon = None;
    for (i, &t) in quantum_times.iter().enumerate() {
        if t < ct0 - 1e-12 || t > ct1 + 1e-12 {
            continue;
        }
        let xc = interp_series(&classical.times, &classical.x, t)?;
        let err = quantum_x[i]
            .iter()
            .zip(&xc)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if err > horizon_threshold && horizon.is_none() {
            horizon = Some(t);
        }
        max_err = max_err.max(err);
        sum_sq += err * err;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Other(
            "quantum and classical time ranges do not overlap".into(),
        ));
    }
    Ok(ComparisonMetrics {
        max_position_error: max_err,
        rms_position_error: (sum_sq / count as f64).sqrt(),
        error_vs_hbar2_bound: max_err / (hbar * hbar * hbar2_scale),
        horizon,
    })
}
