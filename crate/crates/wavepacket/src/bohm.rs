//! Pilot-wave comparator: polar-decomposition fields, guidance trajectories,
//! the Euler-type residual and the monopole relation between `<p>` and the
//! velocity field at the packet centre.
//!
//! The phase is never unwrapped: every formula uses node-safe ratio forms
//! (`v_B = j/(m rho)`, `Q` from `sqrt(rho)`), and points below the node
//! threshold are masked rather than thrown.

use std::sync::Arc;

use ndarray::ArrayD;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::grid::{fft_all, Grid, WaveFunction};
use crate::moments::{density, DensityField, MultipoleSet};
use crate::multi_index::{multi_binomial, sub_indices, MultiIndex};

/// Default node threshold relative to the density maximum.
pub const DEFAULT_NODE_EPS: f64 = 1e-10;

/// Bohm velocity field, quantum potential and node mask of one state.
#[derive(Debug, Clone)]
pub struct PilotWaveFields {
    grid: Arc<Grid>,
    pub sqrt_density: ArrayD<f64>,
    /// `v_B = j / (m rho)` per axis; zero on the node mask.
    pub velocity: Vec<ArrayD<f64>>,
    /// `Q = -(hbar^2/2m) (lap sqrt(rho)) / sqrt(rho)`; zero on the mask.
    pub quantum_potential: ArrayD<f64>,
    pub node_mask: ArrayD<bool>,
    pub eps_node: f64,
}

impl PilotWaveFields {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

/// Spectral Laplacian of a real field.
fn laplacian(grid: &Grid, field: &ArrayD<f64>) -> ArrayD<f64> {
    let mut spec = field.mapv(|v| Complex64::new(v, 0.0));
    fft_all(&mut spec);
    let ks: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.wavenumbers(a)).collect();
    for (idx, z) in spec.indexed_iter_mut() {
        let k2: f64 = (0..grid.dims()).map(|a| ks[a][idx[a]].powi(2)).sum();
        *z *= -k2;
    }
    crate::grid::ifft_all(&mut spec);
    spec.mapv(|z| z.re)
}

/// Spectral partial derivative of a real field.
fn partial(grid: &Grid, field: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
    let mut spec = field.mapv(|v| Complex64::new(v, 0.0));
    crate::grid::fft_axis(&mut spec, axis, false);
    let ks = grid.wavenumbers(axis);
    for (idx, z) in spec.indexed_iter_mut() {
        *z *= Complex64::new(0.0, ks[idx[axis]]);
    }
    crate::grid::fft_axis(&mut spec, axis, true);
    let scale = 1.0 / grid.shape()[axis] as f64;
    spec.mapv(|z| z.re * scale)
}

pub fn pilot_fields(psi: &WaveFunction, eps_rel: f64) -> Result<PilotWaveFields> {
    let field = density(psi)?;
    let grid = psi.grid_arc();
    let d = grid.dims();
    let max_rho = field.rho.iter().copied().fold(0.0f64, f64::max);
    let eps_node = eps_rel * max_rho;
    let node_mask = field.rho.mapv(|r| r < eps_node);
    let sqrt_density = field.rho.mapv(|r| r.max(0.0).sqrt());

    let mut velocity = Vec::with_capacity(d);
    for a in 0..d {
        let m = psi.units().axis_mass(a, d);
        let mut v = ArrayD::<f64>::zeros(field.rho.raw_dim());
        for ((vv, &j), (&r, &masked)) in v
            .iter_mut()
            .zip(field.current[a].iter())
            .zip(field.rho.iter().zip(node_mask.iter()))
        {
            *vv = if masked { 0.0 } else { j / (m * r) };
        }
        velocity.push(v);
    }

    let lap = laplacian(&grid, &sqrt_density);
    let hbar = psi.hbar();
    let m0 = psi.units().axis_mass(0, d);
    let mut quantum_potential = ArrayD::<f64>::zeros(field.rho.raw_dim());
    for ((q, (&l, &s)), &masked) in quantum_potential
        .iter_mut()
        .zip(lap.iter().zip(sqrt_density.iter()))
        .zip(node_mask.iter())
    {
        *q = if masked {
            0.0
        } else {
            -(hbar * hbar) / (2.0 * m0) * l / s
        };
    }
    Ok(PilotWaveFields {
        grid,
        sqrt_density,
        velocity,
        quantum_potential,
        node_mask,
        eps_node,
    })
}

/// Band-limited evaluation of one 1-D snapshot: `psi(x)` and `psi'(x)`
/// from its spectrum, summed with incremental mode phases.
struct SnapshotEvaluator {
    spec: Vec<Complex64>,
    dk: f64,
    x0: f64,
    n: usize,
    max_rho: f64,
}

impl SnapshotEvaluator {
    fn new(psi: &WaveFunction) -> Self {
        let grid = psi.grid();
        let mut spec_arr = psi.amplitudes().clone();
        fft_all(&mut spec_arr);
        let (spec, _) = spec_arr.into_raw_vec_and_offset();
        let max_rho = psi
            .amplitudes()
            .iter()
            .map(|z| z.norm_sqr())
            .fold(0.0f64, f64::max);
        SnapshotEvaluator {
            spec,
            dk: 2.0 * std::f64::consts::PI / grid.extents()[0],
            x0: -0.5 * grid.extents()[0],
            n: grid.shape()[0],
            max_rho,
        }
    }

    fn eval(&self, x: f64) -> (Complex64, Complex64) {
        let n = self.n;
        let u = Complex64::from_polar(1.0, self.dk * (x - self.x0));
        let mut psi = self.spec[0];
        let mut dpsi = Complex64::default();
        let mut pos = Complex64::new(1.0, 0.0);
        for j in 1..n / 2 {
            pos *= u;
            let k = j as f64 * self.dk;
            psi += self.spec[j] * pos;
            dpsi += self.spec[j] * pos * Complex64::new(0.0, k);
        }
        let mut neg = Complex64::new(1.0, 0.0);
        let uc = u.conj();
        for j in 1..=n / 2 {
            neg *= uc;
            let k = -(j as f64) * self.dk;
            let idx = n - j;
            psi += self.spec[idx] * neg;
            dpsi += self.spec[idx] * neg * Complex64::new(0.0, k);
        }
        let s = 1.0 / n as f64;
        (psi * s, dpsi * s)
    }

    /// Bohm velocity at a point; `None` on the node mask.
    fn velocity(&self, x: f64, mass: f64, hbar: f64, eps_rel: f64) -> Option<f64> {
        let (psi, dpsi) = self.eval(x);
        let rho = psi.norm_sqr();
        if rho < eps_rel * self.max_rho {
            return None;
        }
        Some(hbar * (psi.conj() * dpsi).im / (mass * rho))
    }
}

/// A bundle of guidance trajectories integrated through a record.
#[derive(Debug, Clone)]
pub struct BohmBundle {
    /// Snapshot times the positions are reported at.
    pub times: Vec<f64>,
    /// `positions[time][seed]`.
    pub positions: Vec<Vec<f64>>,
    /// Per-seed index of the time at which the trajectory hit the node mask.
    pub truncated_at: Vec<Option<usize>>,
    /// Count of adjacent-pair order swaps observed (must stay 0 in 1-D).
    pub ordering_violations: usize,
    /// Set when `v_B` varied by more than 10% between consecutive saved
    /// times along some trajectory.
    pub stride_warning: bool,
}

impl BohmBundle {
    pub fn csv(&self) -> String {
        let mut out = String::from("seed_id,t,x\n");
        for (s, _) in self.truncated_at.iter().enumerate() {
            for (ti, t) in self.times.iter().enumerate() {
                out.push_str(&format!("{s},{t:e},{:e}\n", self.positions[ti][s]));
            }
        }
        out
    }

    pub fn final_positions(&self) -> &[f64] {
        self.positions.last().expect("bundle has times")
    }
}

/// Integrate `dx/dt = v_B(x, t)` for every seed with fourth-order stepping;
/// the velocity field is interpolated linearly between snapshots in time and
/// band-limited in space. 1-D only.
pub fn integrate_bohm_trajectories(
    record: &TrajectoryRecord,
    seeds: &[f64],
    eps_rel: f64,
) -> Result<BohmBundle> {
    let grid = record.initial_state().grid();
    if grid.dims() != 1 {
        return Err(Error::DimensionUnsupported {
            max: 1,
            got: grid.dims(),
        });
    }
    if record.snapshots.len() < 2 {
        return Err(Error::TooFewTimes {
            required: 2,
            got: record.snapshots.len(),
        });
    }
    let mass = record.initial_state().units().axis_mass(0, 1);
    let hbar = record.initial_state().hbar();
    let dx = grid.spacing(0);
    let evaluators: Vec<SnapshotEvaluator> = record
        .snapshots
        .par_iter()
        .map(|(_, snap)| SnapshotEvaluator::new(snap))
        .collect();
    let times: Vec<f64> = record.snapshots.iter().map(|(ti, _)| record.times[*ti]).collect();

    // check seeds start off-mask
    for (i, &s) in seeds.iter().enumerate() {
        if evaluators[0].velocity(s, mass, hbar, eps_rel).is_none() {
            return Err(Error::Other(format!(
                "seed {i} at x = {s} starts on the node mask"
            )));
        }
    }

    struct SeedResult {
        path: Vec<f64>,
        truncated: Option<usize>,
        warned: bool,
    }

    let results: Vec<SeedResult> = seeds
        .par_iter()
        .map(|&s0| {
            let mut x = s0;
            let mut path = Vec::with_capacity(times.len());
            path.push(x);
            let mut truncated = None;
            let mut warned = false;
            'outer: for i in 0..times.len() - 1 {
                let (ta, tb) = (times[i], times[i + 1]);
                let va = &evaluators[i];
                let vb = &evaluators[i + 1];
                let vel = |x: f64, t: f64| -> Option<f64> {
                    let w = (t - ta) / (tb - ta);
                    let a = va.velocity(x, mass, hbar, eps_rel)?;
                    let b = vb.velocity(x, mass, hbar, eps_rel)?;
                    Some((1.0 - w) * a + w * b)
                };
                // stride sanity: v_B should move slowly between saves
                if let (Some(a), Some(b)) = (
                    va.velocity(x, mass, hbar, eps_rel),
                    vb.velocity(x, mass, hbar, eps_rel),
                ) {
                    let scale = a.abs().max(b.abs()).max(1e-6);
                    if (b - a).abs() > 0.1 * scale {
                        warned = true;
                    }
                }
                let mut t = ta;
                let mut guard = 0usize;
                while t < tb - 1e-15 {
                    let v_here = match vel(x, t) {
                        Some(v) => v,
                        None => {
                            truncated = Some(i);
                            // freeze for the remaining times
                            for _ in i..times.len() - 1 {
                                path.push(x);
                            }
                            break 'outer;
                        }
                    };
                    let h_adapt = 0.25 * dx / (v_here.abs() + 1e-12);
                    let h = h_adapt.min(tb - t).min((tb - ta) / 2.0);
                    // RK4
                    let k1 = vel(x, t);
                    let k2 = k1.and_then(|k| vel(x + 0.5 * h * k, t + 0.5 * h));
                    let k3 = k2.and_then(|k| vel(x + 0.5 * h * k, t + 0.5 * h));
                    let k4 = k3.and_then(|k| vel(x + h * k, t + h));
                    match (k1, k2, k3, k4) {
                        (Some(k1), Some(k2), Some(k3), Some(k4)) => {
                            x += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
                            t += h;
                        }
                        _ => {
                            truncated = Some(i);
                            for _ in i..times.len() - 1 {
                                path.push(x);
                            }
                            break 'outer;
                        }
                    }
                    guard += 1;
                    if guard > 200_000 {
                        truncated = Some(i);
                        for _ in i..times.len() - 1 {
                            path.push(x);
                        }
                        break 'outer;
                    }
                }
                path.push(x);
            }
            SeedResult {
                path,
                truncated,
                warned,
            }
        })
        .collect();

    // transpose to [time][seed] and check 1-D non-crossing
    let nt = times.len();
    let mut positions = vec![vec![0.0; seeds.len()]; nt];
    for (s, r) in results.iter().enumerate() {
        for (ti, &x) in r.path.iter().enumerate() {
            positions[ti][s] = x;
        }
    }
    let order0: Vec<usize> = {
        let mut idx: Vec<usize> = (0..seeds.len()).collect();
        idx.sort_by(|&a, &b| seeds[a].partial_cmp(&seeds[b]).unwrap());
        idx
    };
    let mut ordering_violations = 0usize;
    for row in &positions {
        for w in order0.windows(2) {
            let (a, b) = (w[0], w[1]);
            // positions equal to within the integrator error are not
            // counted as crossings (dense bundles sit closer than that)
            if results[a].truncated.is_none()
                && results[b].truncated.is_none()
                && row[a] > row[b] + 1e-6
            {
                ordering_violations += 1;
            }
        }
    }
    Ok(BohmBundle {
        times,
        positions,
        truncated_at: results.iter().map(|r| r.truncated).collect(),
        ordering_violations,
        stride_warning: results.iter().any(|r| r.warned),
    })
}

/// Deterministic density-weighted seeds by stratified inverse-CDF sampling;
/// a seed value adds reproducible jitter inside each stratum.
pub fn density_weighted_seeds(
    field: &DensityField,
    n: usize,
    jitter_seed: Option<u64>,
) -> Result<Vec<f64>> {
    let grid = field.grid();
    if grid.dims() != 1 {
        return Err(Error::DimensionUnsupported {
            max: 1,
            got: grid.dims(),
        });
    }
    let dx = grid.spacing(0);
    let xs = grid.positions(0);
    let rho = field.rho.as_slice().expect("standard layout");
    let total: f64 = rho.iter().sum::<f64>() * dx;
    let mut rng = jitter_seed.map(ChaCha8Rng::seed_from_u64);
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut cell = 0usize;
    for i in 0..n {
        let frac = match &mut rng {
            Some(r) => r.gen_range(0.0..1.0),
            None => 0.5,
        };
        let target = (i as f64 + frac) / n as f64 * total;
        while cell < rho.len() && cum + rho[cell] * dx < target {
            cum += rho[cell] * dx;
            cell += 1;
        }
        let cell_mass = rho[cell.min(rho.len() - 1)] * dx;
        let within = if cell_mass > 0.0 {
            ((target - cum) / cell_mass).clamp(0.0, 1.0)
        } else {
            0.5
        };
        out.push(xs[cell.min(xs.len() - 1)] + within * dx);
    }
    Ok(out)
}

/// Evenly spaced seeds over `[a, b]`.
pub fn uniform_seeds(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64)
        .collect()
}

/// Total-variation distance between a sample histogram and a density,
/// binned on `bins` equal cells of the box.
pub fn total_variation_vs_density(samples: &[f64], field: &DensityField, bins: usize) -> f64 {
    let grid = field.grid();
    let l = grid.extents()[0];
    let x0 = -0.5 * l;
    let dx = grid.spacing(0);
    let rho = field.rho.as_slice().expect("standard layout");
    let mut q = vec![0.0f64; bins];
    for (i, &r) in rho.iter().enumerate() {
        let x = x0 + i as f64 * dx;
        let b = (((x - x0) / l) * bins as f64) as usize;
        q[b.min(bins - 1)] += r * dx;
    }
    let qtot: f64 = q.iter().sum();
    let mut h = vec![0.0f64; bins];
    for &s in samples {
        let b = (((s - x0) / l).rem_euclid(1.0) * bins as f64) as usize;
        h[b.min(bins - 1)] += 1.0;
    }
    let n = samples.len() as f64;
    0.5 * q
        .iter()
        .zip(&h)
        .map(|(qi, hi)| (qi / qtot - hi / n).abs())
        .sum::<f64>()
}

/// Euler-equation residual `m (d_t + v.grad) v + grad(V + Q)` per interior
/// snapshot, maximized off the mask `rho >= eps_rel * max rho`. All spatial
/// derivatives are taken on the smooth fields `rho`, `j`, `sqrt(rho)` and
/// combined with quotient rules, so masked nodes never pollute the spectra.
#[derive(Debug, Clone)]
pub struct EulerResidualSeries {
    pub times: Vec<f64>,
    pub max_residual: Vec<f64>,
}

pub fn euler_residual(
    record: &TrajectoryRecord,
    v_ext: &crate::potential::Potential,
    eps_rel: f64,
) -> Result<EulerResidualSeries> {
    let snaps = &record.snapshots;
    if snaps.len() < 3 {
        return Err(Error::TooFewTimes {
            required: 3,
            got: snaps.len(),
        });
    }
    let grid = record.initial_state().grid();
    let d = grid.dims();
    let hbar = record.initial_state().hbar();
    let units = record.initial_state().units().clone();

    // uniform snapshot spacing
    let stimes: Vec<f64> = snaps.iter().map(|(ti, _)| record.times[*ti]).collect();
    let h = stimes[1] - stimes[0];
    for w in stimes.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::NonUniformStride);
        }
    }

    let fields: Vec<DensityField> = snaps
        .par_iter()
        .map(|(_, s)| density(s))
        .collect::<Result<_>>()?;
    let grad_v_ext: Vec<ArrayD<f64>> = (0..d)
        .map(|a| v_ext.derivative_on_grid(grid, &MultiIndex::unit(d, a)))
        .collect::<Result<_>>()?;

    let mut out_t = Vec::new();
    let mut out_r = Vec::new();
    for i in 1..snaps.len() - 1 {
        let f = &fields[i];
        let max_rho = f.rho.iter().copied().fold(0.0f64, f64::max);
        let floor = eps_rel * max_rho;
        let sqrt_rho = f.rho.mapv(|r| r.max(0.0).sqrt());
        let lap_sqrt = laplacian(grid, &sqrt_rho);
        // spatial derivative fields of rho and j
        let drho: Vec<ArrayD<f64>> = (0..d).map(|a| partial(grid, &f.rho, a)).collect();
        let dsqrt: Vec<ArrayD<f64>> = (0..d).map(|a| partial(grid, &sqrt_rho, a)).collect();
        let dlap: Vec<ArrayD<f64>> = (0..d).map(|a| partial(grid, &lap_sqrt, a)).collect();
        let mut dj = Vec::with_capacity(d);
        for comp in 0..d {
            let per: Vec<ArrayD<f64>> = (0..d)
                .map(|a| partial(grid, &fields[i].current[comp], a))
                .collect();
            dj.push(per);
        }

        let mut max_res = 0.0f64;
        let rho_s = f.rho.as_slice().unwrap();
        let rho_prev = fields[i - 1].rho.as_slice().unwrap();
        let rho_next = fields[i + 1].rho.as_slice().unwrap();
        for (flat, &r) in rho_s.iter().enumerate() {
            if r < floor || rho_prev[flat] < floor || rho_next[flat] < floor {
                continue;
            }
            let s = sqrt_rho.as_slice().unwrap()[flat];
            let mut res_sq = 0.0;
            for comp in 0..d {
                let m = units.axis_mass(comp, d);
                let v_now = fields[i].current[comp].as_slice().unwrap()[flat] / (m * r);
                let v_prev =
                    fields[i - 1].current[comp].as_slice().unwrap()[flat] / (m * rho_prev[flat]);
                let v_next =
                    fields[i + 1].current[comp].as_slice().unwrap()[flat] / (m * rho_next[flat]);
                let dt_v = (v_next - v_prev) / (2.0 * h);
                // advective term: sum_b v_b d_b v_comp with
                // d_b v = (d_b j - m v d_b rho) / (m rho)
                let mut adv = 0.0;
                for b in 0..d {
                    let mb = units.axis_mass(b, d);
                    let v_b = fields[i].current[b].as_slice().unwrap()[flat] / (mb * r);
                    let djv = dj[comp][b].as_slice().unwrap()[flat];
                    let drv = drho[b].as_slice().unwrap()[flat];
                    let dv = (djv - m * v_now * drv) / (m * r);
                    adv += v_b * dv;
                }
                // grad Q = -(hbar^2/2m) d( lap s / s ) = -(hbar^2/2m)
                //          (d lap s - (lap s / s) d s) / s
                let m0 = units.axis_mass(0, d);
                let q_grad = -(hbar * hbar) / (2.0 * m0)
                    * (dlap[comp].as_slice().unwrap()[flat]
                        - (lap_sqrt.as_slice().unwrap()[flat] / s)
                            * dsqrt[comp].as_slice().unwrap()[flat])
                    / s;
                let resid = m * (dt_v + adv) + grad_v_ext[comp].as_slice().unwrap()[flat] + q_grad;
                res_sq += resid * resid;
            }
            max_res = max_res.max(res_sq.sqrt());
        }
        out_t.push(stimes[i]);
        out_r.push(max_res);
    }
    Ok(EulerResidualSeries {
        times: out_t,
        max_residual: out_r,
    })
}

/// Verification of the momentum/velocity-field monopole relation
/// `<p> = m v_B(x_c) + sum_{n>=1} (1/alpha!) rho_alpha d^alpha (m v_B)(x_c)`
/// truncated at each order, with the remainder per order.
#[derive(Debug, Clone)]
pub struct MonopoleRelationReport {
    /// `<p>` per axis.
    pub momentum: Vec<f64>,
    /// `m v_B(x_c)` per axis.
    pub velocity_term: Vec<f64>,
    /// Partial sums of the correction series by truncation order (order 0 =
    /// velocity term alone).
    pub partial_sums: Vec<Vec<f64>>,
    /// Euclidean remainder `|<p> - partial_sum(order)|` per order.
    pub remainders: Vec<f64>,
}

pub fn monopole_relation_check(
    psi: &WaveFunction,
    multipoles: &MultipoleSet,
    order: usize,
) -> Result<MonopoleRelationReport> {
    let grid = psi.grid();
    let d = grid.dims();
    if multipoles.order < order {
        return Err(Error::Other(format!(
            "multipole set has order {}, check needs {}",
            multipoles.order, order
        )));
    }
    let x_c = &multipoles.center;
    let f = density(psi)?;
    let max_rho = f.rho.iter().copied().fold(0.0f64, f64::max);

    // spectra of rho and j
    let mut rho_spec = f.rho.mapv(|v| Complex64::new(v, 0.0));
    fft_all(&mut rho_spec);
    let j_specs: Vec<ArrayD<Complex64>> = (0..d)
        .map(|a| {
            let mut s = f.current[a].mapv(|v| Complex64::new(v, 0.0));
            fft_all(&mut s);
            s
        })
        .collect();

    // point derivatives d^beta rho(x_c), d^beta j(x_c) for |beta| <= order
    let betas = crate::multi_index::indices_up_to(d, 0, order);
    let eval = |spec: &ArrayD<Complex64>, beta: &MultiIndex| -> f64 {
        let ks: Vec<Vec<f64>> = (0..d).map(|a| grid.wavenumbers(a)).collect();
        let x0: Vec<f64> = (0..d).map(|a| -0.5 * grid.extents()[a]).collect();
        let mut acc = Complex64::default();
        for (idx, c) in spec.indexed_iter() {
            let mut fct = *c;
            for a in 0..d {
                let k = ks[a][idx[a]];
                fct *= Complex64::from_polar(1.0, k * (x_c[a] - x0[a]));
                for _ in 0..beta.0[a] {
                    fct *= Complex64::new(0.0, k);
                }
            }
            acc += fct;
        }
        (acc / grid.len() as f64).re
    };
    let rho_at: std::collections::BTreeMap<MultiIndex, f64> =
        betas.iter().map(|b| (b.clone(), eval(&rho_spec, b))).collect();
    let rho_c = rho_at[&MultiIndex::zero(d)];
    if rho_c < DEFAULT_NODE_EPS * max_rho {
        return Err(Error::CenterOnNodeMask);
    }

    // v^{(alpha)} by the Leibniz quotient recursion from j = m v rho
    let mut velocity_term = vec![0.0; d];
    let mut partial_sums: Vec<Vec<f64>> = vec![vec![0.0; d]; order + 1];
    let momentum: Vec<f64> = (0..d)
        .map(|a| {
            multipoles
                .momentum_moment(a, &MultiIndex::zero(d))
                .unwrap_or(0.0)
        })
        .collect();
    for comp in 0..d {
        let m = psi.units().axis_mass(comp, d);
        let j_at: std::collections::BTreeMap<MultiIndex, f64> = betas
            .iter()
            .map(|b| (b.clone(), eval(&j_specs[comp], b)))
            .collect();
        let mut v_der: std::collections::BTreeMap<MultiIndex, f64> =
            std::collections::BTreeMap::new();
        // graded recursion
        for n in 0..=order {
            for alpha in crate::multi_index::indices_of_order(d, n) {
                let mut num = j_at[&alpha] / m;
                for beta in sub_indices(&alpha) {
                    if beta.order() == 0 {
                        continue;
                    }
                    let rest = alpha.minus(&beta).unwrap();
                    num -= multi_binomial(&alpha, &beta) * rho_at[&beta] * v_der[&rest];
                }
                v_der.insert(alpha, num / rho_c);
            }
        }
        velocity_term[comp] = m * v_der[&MultiIndex::zero(d)];
        let mut acc = velocity_term[comp];
        partial_sums[0][comp] = acc;
        for n in 1..=order {
            for alpha in crate::multi_index::indices_of_order(d, n) {
                let rho_n = multipoles.density_moment(&alpha).unwrap_or(0.0);
                acc += rho_n / alpha.factorial() * m * v_der[&alpha];
            }
            partial_sums[n][comp] = acc;
        }
    }
    let remainders: Vec<f64> = partial_sums
        .iter()
        .map(|s| {
            s.iter()
                .zip(&momentum)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(MonopoleRelationReport {
        momentum,
        velocity_term,
        partial_sums,
        remainders,
    })
}
