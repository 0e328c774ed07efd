//! Time evolution: Strang-split propagation under `H = p^2/2m + V`, exact
//! Fourier-multiplier propagation for the relativistic two-body relative
//! motion, and energy bookkeeping.

use ndarray::ArrayD;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{fft_all, ifft_all, WaveFunction};
use crate::multi_index::MultiIndex;
use crate::potential::Potential;

/// Settings for a propagation run.
#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Expectations are recorded every `save_stride` steps.
    pub save_stride: usize,
    /// Full wave-function snapshots are kept every `snapshot_stride` saves.
    pub snapshot_stride: usize,
}

impl EvolveConfig {
    pub fn new(dt: f64, t_final: f64, save_stride: usize) -> Self {
        EvolveConfig {
            dt,
            t_final,
            save_stride,
            snapshot_stride: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Other("dt and t_final must be positive".into()));
        }
        if self.t_final < self.dt {
            return Err(Error::Other("t_final is smaller than one step".into()));
        }
        if self.save_stride == 0 || self.snapshot_stride == 0 {
            return Err(Error::Other("strides must be at least 1".into()));
        }
        Ok(())
    }
}

/// Time series produced by a propagation run: saved times, expectation
/// values, force expectations, and (strided) wave-function snapshots.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub x_mean: Vec<Vec<f64>>,
    pub p_mean: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub force_mean: Vec<Vec<f64>>,
    /// `(index into times, state)` pairs.
    pub snapshots: Vec<(usize, WaveFunction)>,
    pub norm_drift: f64,
    pub boundary_max: f64,
    pub dt: f64,
    pub save_stride: usize,
    pub scenario_hash: Option<String>,
    pub integrator: String,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.x_mean.first().map_or(0, |x| x.len())
    }

    /// Spacing of the saved times; errors if non-uniform.
    pub fn uniform_stride(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::TooFewTimes {
                required: 2,
                got: self.times.len(),
            });
        }
        let h = self.times[1] - self.times[0];
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::NonUniformStride);
            }
        }
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .times
            .windows(2)
            .any(|w| w[1] <= w[0])
        {
            return Err(Error::Other("record times are not strictly increasing".into()));
        }
        let n = self.times.len();
        if self.x_mean.len() != n || self.p_mean.len() != n || self.energy.len() != n {
            return Err(Error::Other("expectation series length mismatch".into()));
        }
        for (_, snap) in &self.snapshots {
            snap.assert_normalized(1e-8)?;
        }
        Ok(())
    }

    /// Linear interpolation of `<x>` at an arbitrary time inside the range.
    pub fn x_mean_at(&self, t: f64) -> Result<Vec<f64>> {
        interp_series(&self.times, &self.x_mean, t)
    }

    pub fn p_mean_at(&self, t: f64) -> Result<Vec<f64>> {
        interp_series(&self.times, &self.p_mean, t)
    }

    pub fn initial_state(&self) -> &WaveFunction {
        &self.snapshots[0].1
    }

    pub fn final_state(&self) -> &WaveFunction {
        &self.snapshots.last().expect("record has snapshots").1
    }
}

pub(crate) fn interp_series(times: &[f64], series: &[Vec<f64>], t: f64) -> Result<Vec<f64>> {
    let (t0, t1) = (times[0], *times.last().unwrap());
    if t < t0 - 1e-12 || t > t1 + 1e-12 {
        return Err(Error::TimeOutOfRange { time: t, t0, t1 });
    }
    let t = t.clamp(t0, t1);
    let i = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
        Ok(i) => return Ok(series[i].clone()),
        Err(i) => i.clamp(1, times.len() - 1),
    };
    let (ta, tb) = (times[i - 1], times[i]);
    let w = (t - ta) / (tb - ta);
    Ok(series[i - 1]
        .iter()
        .zip(&series[i])
        .map(|(a, b)| a + w * (b - a))
        .collect())
}

/// Pointwise expectations from the raw momentum spectrum: normalized mode
/// weights, `<p>` per axis and the kinetic energy for the given dispersion.
fn momentum_observables<F>(psi: &WaveFunction, kinetic: F) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut spec = psi.amplitudes().clone();
    fft_all(&mut spec);
    let grid = psi.grid();
    let d = grid.dims();
    let momenta: Vec<Vec<f64>> = (0..d).map(|a| grid.momenta(a, psi.hbar())).collect();
    let mut p_mean = vec![0.0; d];
    let mut e_kin = 0.0;
    let mut total = 0.0;
    let mut p = vec![0.0; d];
    for (idx, z) in spec.indexed_iter() {
        let w = z.norm_sqr();
        total += w;
        for a in 0..d {
            p[a] = momenta[a][idx[a]];
            p_mean[a] += w * p[a];
        }
        e_kin += w * kinetic(&p);
    }
    for v in &mut p_mean {
        *v /= total;
    }
    (p_mean, e_kin / total)
}

fn nonrelativistic_kinetic(psi: &WaveFunction) -> impl Fn(&[f64]) -> f64 + '_ {
    let d = psi.grid().dims();
    let units = psi.units().clone();
    move |p: &[f64]| {
        (0..d)
            .map(|a| p[a] * p[a] / (2.0 * units.axis_mass(a, d)))
            .sum()
    }
}

/// Total, kinetic and potential energy of a normalized state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub kinetic: f64,
    pub potential: f64,
}

pub fn hamiltonian_expectation(psi: &WaveFunction, v: &Potential) -> Result<EnergyBreakdown> {
    psi.assert_normalized(1e-6)?;
    let (_, kinetic) = momentum_observables(psi, nonrelativistic_kinetic(psi));
    let table = v.eval_on_grid(psi.grid())?;
    let dv = psi.grid().cell_volume();
    let potential: f64 = psi
        .amplitudes()
        .iter()
        .zip(table.iter())
        .map(|(z, v)| z.norm_sqr() * v)
        .sum::<f64>()
        * dv;
    Ok(EnergyBreakdown {
        total: kinetic + potential,
        kinetic,
        potential,
    })
}

struct StrangTables {
    half_kick: Option<ArrayD<Complex64>>,
    kinetic: ArrayD<Complex64>,
    potential: Option<ArrayD<f64>>,
    gradients: Vec<ArrayD<f64>>,
}

fn strang_tables(psi: &WaveFunction, v: &Potential, dt: f64) -> Result<StrangTables> {
    let grid = psi.grid();
    let hbar = psi.hbar();
    let d = grid.dims();
    let units = psi.units().clone();
    let (potential, half_kick) = match v {
        Potential::Free => (None, None),
        _ => {
            let table = v.eval_on_grid(grid)?;
            let half = table.mapv(|val| Complex64::from_polar(1.0, -val * dt / (2.0 * hbar)));
            (Some(table), Some(half))
        }
    };
    let momenta: Vec<Vec<f64>> = (0..d).map(|a| grid.momenta(a, hbar)).collect();
    let mut kinetic = ArrayD::<Complex64>::zeros(ndarray::IxDyn(grid.shape()));
    for (idx, z) in kinetic.indexed_iter_mut() {
        let mut t = 0.0;
        for a in 0..d {
            let p = momenta[a][idx[a]];
            t += p * p / (2.0 * units.axis_mass(a, d));
        }
        *z = Complex64::from_polar(1.0, -t * dt / hbar);
    }
    let mut gradients = Vec::with_capacity(d);
    for a in 0..d {
        gradients.push(v.derivative_on_grid(grid, &MultiIndex::unit(d, a))?);
    }
    Ok(StrangTables {
        half_kick,
        kinetic,
        potential,
        gradients,
    })
}

fn apply_strang(amps: &mut ArrayD<Complex64>, tables: &StrangTables) {
    if let Some(h) = &tables.half_kick {
        for (z, f) in amps.iter_mut().zip(h.iter()) {
            *z *= *f;
        }
    }
    fft_all(amps);
    for (z, f) in amps.iter_mut().zip(tables.kinetic.iter()) {
        *z *= *f;
    }
    ifft_all(amps);
    if let Some(h) = &tables.half_kick {
        for (z, f) in amps.iter_mut().zip(h.iter()) {
            *z *= *f;
        }
    }
}

/// One Strang step `exp(-iV dt/2h) exp(-iT dt/h) exp(-iV dt/2h)`.
/// Norm-preserving; local error `O(dt^3)`.
pub fn split_step(psi: &WaveFunction, v: &Potential, dt: f64) -> Result<WaveFunction> {
    if dt < 0.0 {
        return Err(Error::Other("dt must be nonnegative".into()));
    }
    if dt == 0.0 {
        return Ok(psi.clone());
    }
    let tables = strang_tables(psi, v, dt)?;
    let mut amps = psi.amplitudes().clone();
    apply_strang(&mut amps, &tables);
    psi.with_amps(amps, psi.time() + dt).finite_checked()
}

fn record_observables(
    psi: &WaveFunction,
    tables: &StrangTables,
    x_tables: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>) {
    let grid = psi.grid();
    let d = grid.dims();
    let dv = grid.cell_volume();
    let shape = grid.shape();
    let amps = psi.amplitudes().as_slice().expect("standard layout");
    let mut x_mean = vec![0.0; d];
    let mut force = vec![0.0; d];
    let mut e_pot = 0.0;
    let grads: Vec<&[f64]> = tables
        .gradients
        .iter()
        .map(|g| g.as_slice().expect("standard layout"))
        .collect();
    let pot = tables
        .potential
        .as_ref()
        .map(|p| p.as_slice().expect("standard layout"));
    let mut idx = vec![0usize; d];
    for (flat, z) in amps.iter().enumerate() {
        let r = z.norm_sqr();
        let mut rem = flat;
        for a in (0..d).rev() {
            idx[a] = rem % shape[a];
            rem /= shape[a];
        }
        for a in 0..d {
            x_mean[a] += r * x_tables[a][idx[a]];
            force[a] -= r * grads[a][flat];
        }
        if let Some(p) = pot {
            e_pot += r * p[flat];
        }
    }
    for v in x_mean.iter_mut().chain(force.iter_mut()) {
        *v *= dv;
    }
    e_pot *= dv;
    let (p_mean, e_kin) = momentum_observables(psi, nonrelativistic_kinetic(psi));
    (x_mean, p_mean, e_kin + e_pot, force)
}

/// Propagate and record expectations every `save_stride` steps.
pub fn evolve(
    psi0: &WaveFunction,
    v: &Potential,
    cfg: &EvolveConfig,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    psi0.assert_normalized(1e-8)?;
    let steps = ((cfg.t_final / cfg.dt) + 1e-9).floor() as usize;
    let tables = strang_tables(psi0, v, cfg.dt)?;
    let grid = psi0.grid();
    let x_tables: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.positions(a)).collect();

    let mut record = TrajectoryRecord {
        times: Vec::new(),
        x_mean: Vec::new(),
        p_mean: Vec::new(),
        energy: Vec::new(),
        force_mean: Vec::new(),
        snapshots: Vec::new(),
        norm_drift: 0.0,
        boundary_max: 0.0,
        dt: cfg.dt,
        save_stride: cfg.save_stride,
        scenario_hash: None,
        integrator: "strang-2".into(),
    };

    let t0 = psi0.time();
    let mut amps = psi0.amplitudes().clone();
    let mut saves = 0usize;
    for step in 0..=steps {
        let t = t0 + step as f64 * cfg.dt;
        if step % cfg.save_stride == 0 {
            let state = psi0.with_amps(amps.clone(), t);
            let n2 = state.norm_sq();
            if !n2.is_finite() {
                return Err(Error::NonFinite {
                    context: "norm during evolve".into(),
                }
                .at("evolve", t));
            }
            record.norm_drift = record.norm_drift.max((n2 - 1.0).abs());
            record.boundary_max = record.boundary_max.max(state.boundary_max_density());
            let (x, p, e, f) = record_observables(&state, &tables, &x_tables);
            record.times.push(t);
            record.x_mean.push(x);
            record.p_mean.push(p);
            record.energy.push(e);
            record.force_mean.push(f);
            if saves % cfg.snapshot_stride == 0 {
                record.snapshots.push((record.times.len() - 1, state));
            }
            saves += 1;
        }
        if step < steps {
            apply_strang(&mut amps, &tables);
            if amps.iter().take(4).any(|z| !z.re.is_finite()) {
                return Err(Error::NonFinite {
                    context: "amplitudes after split step (dt too large or V pathological)".into(),
                }
                .at("split_step", t + cfg.dt));
            }
        }
    }
    record.validate()?;
    Ok(record)
}

/// Parameters of the relativistic rest-frame relative-motion propagation
/// under `E(pi) = c (sqrt(m1^2 c^2 + pi^2) + sqrt(m2^2 c^2 + pi^2))`.
#[derive(Debug, Clone)]
pub struct RelativisticConfig {
    pub m1: f64,
    pub m2: f64,
    pub c: f64,
    /// Remove the constant rest-energy phase `(m1 + m2) c^2` so runs are
    /// directly comparable with nonrelativistic ones.
    pub subtract_rest_energy: bool,
}

impl RelativisticConfig {
    pub fn energy(&self, p_sq: f64) -> f64 {
        let c = self.c;
        let e = c * ((self.m1 * self.m1 * c * c + p_sq).sqrt()
            + (self.m2 * self.m2 * c * c + p_sq).sqrt());
        if self.subtract_rest_energy {
            e - (self.m1 + self.m2) * c * c
        } else {
            e
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.m1 > 0.0) || !(self.m2 > 0.0) || !(self.c > 0.0) {
            return Err(Error::Other("masses and c must be positive".into()));
        }
        Ok(())
    }
}

fn relativistic_multiplier(
    psi: &WaveFunction,
    cfg: &RelativisticConfig,
    dtau: f64,
) -> ArrayD<Complex64> {
    let grid = psi.grid();
    let d = grid.dims();
    let hbar = psi.hbar();
    let momenta: Vec<Vec<f64>> = (0..d).map(|a| grid.momenta(a, hbar)).collect();
    let mut table = ArrayD::<Complex64>::zeros(ndarray::IxDyn(grid.shape()));
    for (idx, z) in table.indexed_iter_mut() {
        let p_sq: f64 = (0..d).map(|a| momenta[a][idx[a]].powi(2)).sum();
        *z = Complex64::from_polar(1.0, -cfg.energy(p_sq) * dtau / hbar);
    }
    table
}

/// Exact free-case step for the relativistic relative motion: a unitary
/// Fourier multiplier, diagonal in momentum space (no splitting error).
pub fn relativistic_step(
    psi: &WaveFunction,
    m1: f64,
    m2: f64,
    c: f64,
    dtau: f64,
) -> Result<WaveFunction> {
    let cfg = RelativisticConfig {
        m1,
        m2,
        c,
        subtract_rest_energy: false,
    };
    cfg.validate()?;
    if dtau == 0.0 {
        return Ok(psi.clone());
    }
    let table = relativistic_multiplier(psi, &cfg, dtau);
    let mut amps = psi.amplitudes().clone();
    fft_all(&mut amps);
    for (z, f) in amps.iter_mut().zip(table.iter()) {
        *z *= *f;
    }
    ifft_all(&mut amps);
    psi.with_amps(amps, psi.time() + dtau).finite_checked()
}

/// Propagate the relative wave function; an optional interaction `V(rho)` is
/// added by Strang splitting around the exact free multiplier.
pub fn evolve_relativistic(
    psi0: &WaveFunction,
    rel: &RelativisticConfig,
    v: Option<&Potential>,
    cfg: &EvolveConfig,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    rel.validate()?;
    psi0.assert_normalized(1e-8)?;
    let steps = ((cfg.t_final / cfg.dt) + 1e-9).floor() as usize;
    let grid = psi0.grid();
    let d = grid.dims();
    let kin_table = relativistic_multiplier(psi0, rel, cfg.dt);
    let (pot_table, half_kick, gradients) = match v {
        None | Some(Potential::Free) => (None, None, vec![ArrayD::zeros(psi0.amplitudes().raw_dim()); d]),
        Some(p) => {
            let table = p.eval_on_grid(grid)?;
            let hk =
                table.mapv(|val| Complex64::from_polar(1.0, -val * cfg.dt / (2.0 * psi0.hbar())));
            let mut grads = Vec::with_capacity(d);
            for a in 0..d {
                grads.push(p.derivative_on_grid(grid, &MultiIndex::unit(d, a))?);
            }
            (Some(table), Some(hk), grads)
        }
    };
    let tables = StrangTables {
        half_kick,
        kinetic: kin_table,
        potential: pot_table,
        gradients,
    };
    let x_tables: Vec<Vec<f64>> = (0..d).map(|a| grid.positions(a)).collect();

    let mut record = TrajectoryRecord {
        times: Vec::new(),
        x_mean: Vec::new(),
        p_mean: Vec::new(),
        energy: Vec::new(),
        force_mean: Vec::new(),
        snapshots: Vec::new(),
        norm_drift: 0.0,
        boundary_max: 0.0,
        dt: cfg.dt,
        save_stride: cfg.save_stride,
        scenario_hash: None,
        integrator: "relativistic-multiplier".into(),
    };
    let t0 = psi0.time();
    let mut amps = psi0.amplitudes().clone();
    let mut saves = 0usize;
    for step in 0..=steps {
        let t = t0 + step as f64 * cfg.dt;
        if step % cfg.save_stride == 0 {
            let state = psi0.with_amps(amps.clone(), t);
            let n2 = state.norm_sq();
            record.norm_drift = record.norm_drift.max((n2 - 1.0).abs());
            record.boundary_max = record.boundary_max.max(state.boundary_max_density());
            // <x>, <pi>, relativistic energy, and -<dV/dx>
            let dv = grid.cell_volume();
            let mut x_mean = vec![0.0; d];
            let mut force = vec![0.0; d];
            let mut e_pot = 0.0;
            let amps_s = state.amplitudes().as_slice().expect("standard layout");
            let shape = grid.shape();
            let mut idx = vec![0usize; d];
            for (flat, z) in amps_s.iter().enumerate() {
                let r = z.norm_sqr();
                let mut rem = flat;
                for a in (0..d).rev() {
                    idx[a] = rem % shape[a];
                    rem /= shape[a];
                }
                for a in 0..d {
                    x_mean[a] += r * x_tables[a][idx[a]];
                    force[a] -= r
                        * tables
                            .gradients
                            .get(a)
                            .map_or(0.0, |g| g.as_slice().unwrap()[flat]);
                }
                if let Some(p) = &tables.potential {
                    e_pot += r * p.as_slice().unwrap()[flat];
                }
            }
            for v in x_mean.iter_mut().chain(force.iter_mut()) {
                *v *= dv;
            }
            e_pot *= dv;
            let (p_mean, e_kin) =
                momentum_observables(&state, |p: &[f64]| {
                    rel.energy(p.iter().map(|v| v * v).sum())
                });
            record.times.push(t);
            record.x_mean.push(x_mean);
            record.p_mean.push(p_mean);
            record.energy.push(e_kin + e_pot);
            record.force_mean.push(force);
            if saves % cfg.snapshot_stride == 0 {
                record.snapshots.push((record.times.len() - 1, state));
            }
            saves += 1;
        }
        if step < steps {
            apply_strang(&mut amps, &tables);
        }
    }
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Units};
    use crate::states::gaussian_packet;
    use std::sync::Arc;

    fn packet() -> WaveFunction {
        let g = Arc::new(Grid::new(&[32.0], &[256]).unwrap());
        gaussian_packet(g, Units::unit(), &[0.0], &[1.0], &[1.0]).unwrap()
    }

    #[test]
    fn zero_step_is_identity() {
        let psi = packet();
        let out = split_step(&psi, &Potential::Free, 0.0).unwrap();
        let diff: f64 = psi
            .amplitudes()
            .iter()
            .zip(out.amplitudes().iter())
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn step_preserves_norm() {
        let psi = packet();
        let v = Potential::Harmonic {
            mass: 1.0,
            omega: 1.0,
        };
        let out = split_step(&psi, &v, 1e-3).unwrap();
        assert!((out.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolve_rejects_bad_config() {
        let psi = packet();
        let cfg = EvolveConfig::new(0.0, 1.0, 1);
        assert!(evolve(&psi, &Potential::Free, &cfg).is_err());
        let cfg = EvolveConfig::new(2.0, 1.0, 1);
        assert!(evolve(&psi, &Potential::Free, &cfg).is_err());
    }

    #[test]
    fn hamiltonian_rejects_unnormalized() {
        let psi = packet();
        let bad = psi.with_amps(psi.amplitudes() * Complex64::new(2.0, 0.0), 0.0);
        assert!(matches!(
            hamiltonian_expectation(&bad, &Potential::Free),
            Err(Error::NotNormalized { .. })
        ));
    }
}
