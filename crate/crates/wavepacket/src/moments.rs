//! Densities, momentum densities, central-moment (multipole) tensors,
//! expectation values, uncertainties, angular momentum and derivative-pair
//! integrals.
//!
//! All integrals are position-space Riemann sums; every derivative entering
//! a moment is spectral. Moment tensors are stored per exponent vector, so
//! index-permutation symmetry holds by construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::ArrayD;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, WaveFunction, BOUNDARY_ERROR};
use crate::multi_index::{indices_up_to, MultiIndex};

/// Probability density `rho = |psi|^2` and momentum density
/// `j_a = hbar * Im(conj(psi) d_a psi)`, with `integral j = <p>`.
#[derive(Debug, Clone)]
pub struct DensityField {
    grid: Arc<Grid>,
    pub rho: ArrayD<f64>,
    pub current: Vec<ArrayD<f64>>,
    pub boundary_max: f64,
}

impl DensityField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `integral rho dV`; 1 for a normalized state.
    pub fn total(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.cell_volume()
    }

    fn check_boundary(&self) -> Result<()> {
        if self.boundary_max > BOUNDARY_ERROR {
            return Err(Error::BoundaryLeak {
                max_density: self.boundary_max,
                limit: BOUNDARY_ERROR,
            });
        }
        Ok(())
    }
}

/// Compute the density field of a normalized state.
pub fn density(psi: &WaveFunction) -> Result<DensityField> {
    psi.assert_normalized(1e-6)?;
    let rho = psi.amplitudes().mapv(|z| z.norm_sqr());
    let hbar = psi.hbar();
    let mut current = Vec::with_capacity(psi.grid().dims());
    for axis in 0..psi.grid().dims() {
        let grad = psi.spectral_gradient(axis)?;
        let mut j = ArrayD::<f64>::zeros(rho.raw_dim());
        for ((jv, z), g) in j.iter_mut().zip(psi.amplitudes()).zip(grad.iter()) {
            *jv = hbar * (z.conj() * g).im;
        }
        current.push(j);
    }
    Ok(DensityField {
        grid: psi.grid_arc(),
        rho,
        current,
        boundary_max: psi.boundary_max_density(),
    })
}

/// `<x>` as the first moment of the density.
pub fn position_expectation(psi: &WaveFunction) -> Result<Vec<f64>> {
    let field = density(psi)?;
    field.check_boundary()?;
    let grid = field.grid();
    let dv = grid.cell_volume();
    let axes: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.positions(a)).collect();
    let mut out = vec![0.0; grid.dims()];
    for (idx, r) in field.rho.indexed_iter() {
        for a in 0..grid.dims() {
            out[a] += axes[a][idx[a]] * r;
        }
    }
    for v in &mut out {
        *v *= dv;
    }
    Ok(out)
}

/// `<p>` as the integral of the momentum density.
pub fn momentum_expectation(psi: &WaveFunction) -> Result<Vec<f64>> {
    let field = density(psi)?;
    field.check_boundary()?;
    let dv = field.grid().cell_volume();
    Ok(field
        .current
        .iter()
        .map(|j| j.iter().sum::<f64>() * dv)
        .collect())
}

/// Central moments of the density and momentum distributions about a
/// reference point, to a truncation order, plus (optionally) derivative-pair
/// monopoles.
#[derive(Debug, Clone)]
pub struct MultipoleSet {
    pub center: Vec<f64>,
    pub order: usize,
    pub density: BTreeMap<MultiIndex, f64>,
    pub momentum: BTreeMap<(usize, MultiIndex), f64>,
    pub pairs: BTreeMap<(MultiIndex, MultiIndex), Complex64>,
}

impl MultipoleSet {
    pub fn density_moment(&self, alpha: &MultiIndex) -> Option<f64> {
        self.density.get(alpha).copied()
    }

    pub fn momentum_moment(&self, component: usize, alpha: &MultiIndex) -> Option<f64> {
        self.momentum.get(&(component, alpha.clone())).copied()
    }

    pub fn pair(&self, mu: &MultiIndex, nu: &MultiIndex) -> Option<Complex64> {
        self.pairs.get(&(mu.clone(), nu.clone())).copied()
    }

    pub fn dims(&self) -> usize {
        self.center.len()
    }

    /// First central moment of the density (zero about `<x>` by construction).
    pub fn dipole(&self) -> Vec<f64> {
        (0..self.dims())
            .map(|a| {
                self.density_moment(&MultiIndex::unit(self.dims(), a))
                    .unwrap_or(0.0)
            })
            .collect()
    }

    /// Second central moments as a covariance matrix.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dims();
        let mut m = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut alpha = MultiIndex::zero(d);
                alpha.0[i] += 1;
                alpha.0[j] += 1;
                m[i][j] = self.density_moment(&alpha).unwrap_or(0.0);
            }
        }
        m
    }

    /// Monopole normalization, dipole and covariance positivity checks.
    pub fn validate(&self) -> Result<()> {
        let mono = self
            .density_moment(&MultiIndex::zero(self.dims()))
            .unwrap_or(0.0);
        if (mono - 1.0).abs() > 1e-9 {
            return Err(Error::Other(format!(
                "density monopole {mono} deviates from 1"
            )));
        }
        if self.order >= 2 {
            let cov = self.covariance();
            if !is_positive_semidefinite(&cov, 1e-10) {
                return Err(Error::Other(
                    "order-2 density moments are not positive semidefinite".into(),
                ));
            }
        }
        Ok(())
    }
}

fn is_positive_semidefinite(m: &[Vec<f64>], tol: f64) -> bool {
    // Cholesky with tolerance; dimensions here are at most 6.
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for k in 0..n {
        if a[k][k] < -tol {
            return false;
        }
        let pivot = a[k][k].max(0.0);
        if pivot <= tol {
            // row/column must then be ~zero
            for j in k + 1..n {
                if a[k][j].abs() > tol.sqrt() {
                    return false;
                }
            }
            continue;
        }
        for i in k + 1..n {
            let f = a[i][k] / pivot;
            for j in k..n {
                let akj = a[k][j];
                a[i][j] -= f * akj;
            }
        }
    }
    true
}

/// Maximum multipole truncation order.
pub const MAX_MOMENT_ORDER: usize = 8;
/// Maximum derivative-pair order.
pub const MAX_PAIR_ORDER: usize = 4;

/// Central density and momentum moments about `center`, to order `n_max`.
pub fn central_moments(
    field: &DensityField,
    center: &[f64],
    n_max: usize,
) -> Result<MultipoleSet> {
    field.check_boundary()?;
    let grid = field.grid();
    let d = grid.dims();
    if center.len() != d {
        return Err(Error::DimensionMismatch {
            required: d,
            got: center.len(),
        });
    }
    if n_max > MAX_MOMENT_ORDER {
        return Err(Error::Other(format!(
            "moment order {n_max} exceeds the cap {MAX_MOMENT_ORDER}"
        )));
    }
    for (a, &c) in center.iter().enumerate() {
        if c < -0.5 * grid.extents()[a] || c > 0.5 * grid.extents()[a] {
            return Err(Error::Other(format!(
                "expansion center component {a} = {c} lies outside the box"
            )));
        }
    }
    let dv = grid.cell_volume();
    // per-axis tables (x_j - c_a)^e
    let powers: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|a| {
            let xs = grid.positions(a);
            (0..=n_max)
                .map(|e| xs.iter().map(|x| (x - center[a]).powi(e as i32)).collect())
                .collect()
        })
        .collect();
    let alphas = indices_up_to(d, 0, n_max);
    let mut density_moments: Vec<f64> = vec![0.0; alphas.len()];
    let mut momentum_moments: Vec<Vec<f64>> = vec![vec![0.0; alphas.len()]; d];
    let rho = field.rho.as_slice().expect("standard layout");
    let currents: Vec<&[f64]> = field
        .current
        .iter()
        .map(|j| j.as_slice().expect("standard layout"))
        .collect();
    let shape = grid.shape();
    let mut idx = vec![0usize; d];
    for (flat, &r) in rho.iter().enumerate() {
        let mut rem = flat;
        for a in (0..d).rev() {
            idx[a] = rem % shape[a];
            rem /= shape[a];
        }
        for (ai, alpha) in alphas.iter().enumerate() {
            let mut w = 1.0;
            for a in 0..d {
                w *= powers[a][alpha.0[a] as usize][idx[a]];
            }
            density_moments[ai] += w * r;
            for comp in 0..d {
                momentum_moments[comp][ai] += w * currents[comp][flat];
            }
        }
    }
    let mut density = BTreeMap::new();
    let mut momentum = BTreeMap::new();
    for (ai, alpha) in alphas.iter().enumerate() {
        density.insert(alpha.clone(), density_moments[ai] * dv);
        for comp in 0..d {
            momentum.insert((comp, alpha.clone()), momentum_moments[comp][ai] * dv);
        }
    }
    let set = MultipoleSet {
        center: center.to_vec(),
        order: n_max,
        density,
        momentum,
        pairs: BTreeMap::new(),
    };
    set.validate()?;
    Ok(set)
}

/// Monopole-level derivative-pair integrals
/// `P(mu, nu) = integral conj(d^mu psi) d^nu psi dV` for `|mu|+|nu| <= c_max`.
///
/// Hermiticity `P(mu, nu) = conj(P(nu, mu))` holds exactly because both
/// entries are assembled from the same spectral derivative fields.
pub fn derivative_pair_moments(
    psi: &WaveFunction,
    c_max: usize,
) -> Result<BTreeMap<(MultiIndex, MultiIndex), Complex64>> {
    if c_max > MAX_PAIR_ORDER {
        return Err(Error::Other(format!(
            "pair order {c_max} exceeds the cap {MAX_PAIR_ORDER}"
        )));
    }
    let d = psi.grid().dims();
    let dv = psi.grid().cell_volume();
    let orders = indices_up_to(d, 0, c_max);
    let mut fields: BTreeMap<MultiIndex, ArrayD<Complex64>> = BTreeMap::new();
    for nu in &orders {
        let f = if nu.order() == 0 {
            psi.amplitudes().clone()
        } else {
            psi.spectral_derivative_multi(&nu.0)?
        };
        fields.insert(nu.clone(), f);
    }
    let mut out = BTreeMap::new();
    for mu in &orders {
        for nu in &orders {
            if mu.order() + nu.order() > c_max {
                continue;
            }
            let fm = &fields[mu];
            let fn_ = &fields[nu];
            let mut acc = Complex64::default();
            for (a, b) in fm.iter().zip(fn_.iter()) {
                acc += a.conj() * b;
            }
            out.insert((mu.clone(), nu.clone()), acc * dv);
        }
    }
    Ok(out)
}

/// Convenience: moments about `<x>` with pair integrals attached.
pub fn multipoles_with_pairs(
    psi: &WaveFunction,
    n_max: usize,
    c_max: usize,
) -> Result<MultipoleSet> {
    let field = density(psi)?;
    let center = position_expectation(psi)?;
    let mut set = central_moments(&field, &center, n_max)?;
    set.pairs = derivative_pair_moments(psi, c_max)?;
    Ok(set)
}

/// Per-axis standard deviations `(dx, dp)` from the quadrupole and the
/// second derivative-pair monopole:
/// `(dx_r)^2 = rho2^{rr}`, `(dp_r)^2 = -hbar^2 P(0, 2 e_r) - <p_r>^2`.
pub fn uncertainties(psi: &WaveFunction, multipoles: &MultipoleSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = psi.grid().dims();
    if multipoles.order < 2 {
        return Err(Error::Other("uncertainties need moments of order >= 2".into()));
    }
    let mean_x = position_expectation(psi)?;
    for (a, (&c, &x)) in multipoles.center.iter().zip(&mean_x).enumerate() {
        if (c - x).abs() > 1e-6 {
            return Err(Error::Other(format!(
                "multipoles are centred at {c} on axis {a}, but <x> = {x}"
            )));
        }
    }
    let hbar = psi.hbar();
    let mut dx = Vec::with_capacity(d);
    let mut dp = Vec::with_capacity(d);
    for a in 0..d {
        let mut alpha = MultiIndex::zero(d);
        alpha.0[a] = 2;
        let var_x = multipoles
            .density_moment(&alpha)
            .ok_or_else(|| Error::Other("missing order-2 density moment".into()))?;
        if var_x < -1e-12 {
            return Err(Error::NegativeVariance { value: var_x });
        }
        dx.push(var_x.max(0.0).sqrt());

        let pair = multipoles
            .pair(&MultiIndex::zero(d), &alpha)
            .ok_or_else(|| Error::Other("derivative pairs up to c = 2 are required".into()))?;
        let p_mean = multipoles
            .momentum_moment(a, &MultiIndex::zero(d))
            .ok_or_else(|| Error::Other("missing momentum monopole".into()))?;
        let var_p = -hbar * hbar * pair.re - p_mean * p_mean;
        if var_p < -1e-9 {
            return Err(Error::NegativeVariance { value: var_p });
        }
        dp.push(var_p.max(0.0).sqrt());
    }
    Ok((dx, dp))
}

/// Angular-momentum bookkeeping for 3-D states, with the conventional
/// normalization `L = x cross p`.
#[derive(Debug, Clone)]
pub struct AngularMomentumReport {
    /// `<L^i> = eps^{ijk} (x_c^j <p^k> + rho_(1)1^{kj})`.
    pub total: [f64; 3],
    /// Classical part `eps^{ijk} x_c^j <p^k>`.
    pub classical: [f64; 3],
    /// Antisymmetric momentum-dipole residual `eps^{ijk} rho_(1)1^{kj}`.
    pub residual: [f64; 3],
}

pub fn angular_momentum_expectation(
    psi: &WaveFunction,
    multipoles: &MultipoleSet,
) -> Result<AngularMomentumReport> {
    let d = psi.grid().dims();
    if d != 3 {
        return Err(Error::DimensionMismatch { required: 3, got: d });
    }
    if multipoles.order < 1 {
        return Err(Error::Other("angular momentum needs momentum dipoles".into()));
    }
    let eps = |i: usize, j: usize, k: usize| -> f64 {
        match (i, j, k) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
            (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
            _ => 0.0,
        }
    };
    let p_mono: Vec<f64> = (0..3)
        .map(|k| {
            multipoles
                .momentum_moment(k, &MultiIndex::zero(3))
                .unwrap_or(0.0)
        })
        .collect();
    let mut total = [0.0; 3];
    let mut classical = [0.0; 3];
    let mut residual = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let e = eps(i, j, k);
                if e == 0.0 {
                    continue;
                }
                let dip = multipoles
                    .momentum_moment(k, &MultiIndex::unit(3, j))
                    .unwrap_or(0.0);
                classical[i] += e * multipoles.center[j] * p_mono[k];
                residual[i] += e * dip;
            }
        }
        total[i] = classical[i] + residual[i];
    }
    Ok(AngularMomentumReport {
        total,
        classical,
        residual,
    })
}

/// Double central moments `integral (x1-c1)^n (x2-c2)^m rho dx1 dx2` for a
/// two-particle state with one dimension per particle.
#[derive(Debug, Clone)]
pub struct TwoBodyMoments {
    pub centers: [f64; 2],
    pub order: usize,
    pub moments: BTreeMap<(u8, u8), f64>,
}

impl TwoBodyMoments {
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.moments.get(&(n as u8, m as u8)).copied().unwrap_or(0.0)
    }

    /// The three dipole magnitudes: particle 1, particle 2 and the cross term.
    pub fn dipoles(&self) -> [f64; 3] {
        [self.get(1, 0), self.get(0, 1), self.get(1, 1)]
    }
}

pub fn two_body_central_moments(
    psi: &WaveFunction,
    centers: [f64; 2],
    order: usize,
) -> Result<TwoBodyMoments> {
    let grid = psi.grid();
    if grid.dims() != 2 || psi.units().particles() != 2 {
        return Err(Error::DimensionMismatch {
            required: 2,
            got: grid.dims(),
        });
    }
    let field = density(psi)?;
    field.check_boundary()?;
    let dv = grid.cell_volume();
    let x1 = grid.positions(0);
    let x2 = grid.positions(1);
    let pow = |xs: &[f64], c: f64| -> Vec<Vec<f64>> {
        (0..=order)
            .map(|e| xs.iter().map(|x| (x - c).powi(e as i32)).collect())
            .collect()
    };
    let p1 = pow(&x1, centers[0]);
    let p2 = pow(&x2, centers[1]);
    let n2 = grid.shape()[1];
    let rho = field.rho.as_slice().expect("standard layout");
    let mut sums = vec![vec![0.0; order + 1]; order + 1];
    for (flat, &r) in rho.iter().enumerate() {
        let i1 = flat / n2;
        let i2 = flat % n2;
        for n in 0..=order {
            let w1 = p1[n][i1] * r;
            for m in 0..=order {
                sums[n][m] += w1 * p2[m][i2];
            }
        }
    }
    let mut moments = BTreeMap::new();
    for n in 0..=order {
        for m in 0..=order {
            moments.insert((n as u8, m as u8), sums[n][m] * dv);
        }
    }
    Ok(TwoBodyMoments {
        centers,
        order,
        moments,
    })
}

/// Moments exported one row per (time, multi-index).
pub fn moments_csv(times: &[f64], sets: &[MultipoleSet]) -> String {
    let mut out = String::from("t,alpha,value,kind\n");
    for (t, set) in times.iter().zip(sets) {
        for (alpha, v) in &set.density {
            out.push_str(&format!("{:e},{},{:e},density\n", t, alpha.label(), v));
        }
        for ((comp, alpha), v) in &set.momentum {
            out.push_str(&format!(
                "{:e},{},{:e},momentum_{}\n",
                t,
                alpha.label(),
                v,
                comp
            ));
        }
        for ((mu, nu), v) in &set.pairs {
            out.push_str(&format!(
                "{:e},{}|{},{:e},pair_{}_{}\n",
                t,
                mu.label(),
                nu.label(),
                v.re,
                mu.order() + nu.order(),
                nu.order()
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Units;
    use crate::states::gaussian_packet;

    #[test]
    fn real_state_has_zero_current() {
        let g = Arc::new(Grid::new(&[20.0], &[128]).unwrap());
        let psi = gaussian_packet(g, Units::unit(), &[0.0], &[0.0], &[1.0]).unwrap();
        let f = density(&psi).unwrap();
        let max_j = f.current[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_j < 1e-12);
    }

    #[test]
    fn boundary_leak_is_an_error() {
        let g = Arc::new(Grid::new(&[8.0], &[64]).unwrap());
        // wide packet leaking onto the wrap
        let psi = gaussian_packet(g, Units::unit(), &[0.0], &[0.0], &[3.0]).unwrap();
        assert!(matches!(
            position_expectation(&psi),
            Err(Error::BoundaryLeak { .. })
        ));
    }

    #[test]
    fn shifted_center_moves_dipole() {
        let g = Arc::new(Grid::new(&[24.0], &[256]).unwrap());
        let psi = gaussian_packet(g, Units::unit(), &[0.5], &[0.0], &[0.8]).unwrap();
        let f = density(&psi).unwrap();
        let mean = position_expectation(&psi).unwrap();
        let delta = 0.3;
        let set = central_moments(&f, &[mean[0] + delta], 2).unwrap();
        let dip = set.dipole()[0];
        assert!((dip + delta).abs() < 1e-9, "dipole {dip}");
    }

    #[test]
    fn moment_cap_enforced() {
        let g = Arc::new(Grid::new(&[24.0], &[128]).unwrap());
        let psi = gaussian_packet(g, Units::unit(), &[0.0], &[0.0], &[1.0]).unwrap();
        let f = density(&psi).unwrap();
        assert!(central_moments(&f, &[0.0], 9).is_err());
        assert!(derivative_pair_moments(&psi, 5).is_err());
    }

    #[test]
    fn pair_hermiticity() {
        let g = Arc::new(Grid::new(&[24.0], &[128]).unwrap());
        let psi = gaussian_packet(g, Units::unit(), &[0.4], &[1.3], &[0.9]).unwrap();
        let pairs = derivative_pair_moments(&psi, 2).unwrap();
        let d = MultiIndex(vec![1]);
        let z = MultiIndex(vec![0]);
        let a = pairs[&(z.clone(), d.clone())];
        let b = pairs[&(d, z)];
        assert!((a - b.conj()).norm() < 1e-12);
    }
}
