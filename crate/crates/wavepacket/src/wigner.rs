//! Phase-space view: the Wigner transform, polynomial Weyl symbols,
//! expectation values, marginals, multipole coefficients and the canonical
//! commutator identities.
//!
//! Normalization convention: `integral W dx dp / (2 pi hbar)^d = 1`, so the
//! `p`-marginal `integral W dp / (2 pi hbar)^d` is `|psi(x)|^2` and the
//! `x`-marginal is the momentum density.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fft_all, fft_axis, Grid, WaveFunction};
use crate::moments::{derivative_pair_moments, MultipoleSet};
use crate::multi_index::{binomial, indices_of_order, multi_binomial, sub_indices, MultiIndex};

/// Cap on `N^{2d}` phase-space points.
pub const WIGNER_POINT_CAP: usize = 1 << 24;

/// Real-valued Wigner function on a position x momentum lattice.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    grid: Arc<Grid>,
    hbar: f64,
    /// Shape: position axes then momentum axes; momentum values ascending.
    pub values: ArrayD<f64>,
    /// Ascending momentum lattice per axis.
    pub p_axes: Vec<Vec<f64>>,
    /// Largest imaginary residue discarded when taking the real part.
    pub im_residual: f64,
}

impl WignerGrid {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dims(&self) -> usize {
        self.grid.dims()
    }

    /// Phase-space cell volume `dx dp`.
    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume() * self.grid.momentum_cell_volume(self.hbar)
    }

    fn measure(&self) -> f64 {
        let d = self.dims() as i32;
        self.cell_volume() / (2.0 * std::f64::consts::PI * self.hbar).powi(d)
    }

    /// `integral W dx dp / (2 pi hbar)^d`; 1 for a normalized state.
    pub fn normalization(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.measure()
    }

    /// `integral W^2 dx dp / (2 pi hbar)^d`; 1 for pure states.
    pub fn purity(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.measure()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Both marginals: the position density and the momentum density.
    pub fn marginals(&self) -> (ArrayD<f64>, ArrayD<f64>) {
        let d = self.dims();
        let xs = self.grid.shape().to_vec();
        let np: usize = xs.iter().product();
        let flat = self.values.as_slice().expect("standard layout");
        let dp_over = self.grid.momentum_cell_volume(self.hbar)
            / (2.0 * std::f64::consts::PI * self.hbar).powi(d as i32);
        let dx_over = self.grid.cell_volume()
            / (2.0 * std::f64::consts::PI * self.hbar).powi(d as i32);
        let mut rho_x = vec![0.0; np];
        let mut rho_p = vec![0.0; np];
        for (xf, row) in flat.chunks(np).enumerate() {
            for (pf, w) in row.iter().enumerate() {
                rho_x[xf] += w * dp_over;
                rho_p[pf] += w * dx_over;
            }
        }
        (
            ArrayD::from_shape_vec(IxDyn(&xs), rho_x).unwrap(),
            ArrayD::from_shape_vec(IxDyn(&xs), rho_p).unwrap(),
        )
    }

    /// Down-sampled CSV for plotting: `x.., p.., w` every `stride`-th point.
    pub fn csv(&self, stride: usize) -> String {
        let d = self.dims();
        let stride = stride.max(1);
        let mut out = String::new();
        for a in 0..d {
            out.push_str(&format!("x{a},"));
        }
        for a in 0..d {
            out.push_str(&format!("p{a},"));
        }
        out.push_str("w\n");
        let axes: Vec<Vec<f64>> = (0..d).map(|a| self.grid.positions(a)).collect();
        for (idx, w) in self.values.indexed_iter() {
            if (0..2 * d).any(|a| idx[a] % stride != 0) {
                continue;
            }
            for a in 0..d {
                out.push_str(&format!("{:e},", axes[a][idx[a]]));
            }
            for a in 0..d {
                out.push_str(&format!("{:e},", self.p_axes[a][idx[d + a]]));
            }
            out.push_str(&format!("{w:e}\n"));
        }
        out
    }
}

/// Wigner transform by per-point FFT over a symmetric relative-coordinate
/// window; values at half-lattice points come from band-limited (Fourier
/// phase-ramp) interpolation.
pub fn wigner_transform(psi: &WaveFunction) -> Result<WignerGrid> {
    let grid = psi.grid_arc();
    let d = grid.dims();
    if d > 2 {
        return Err(Error::DimensionUnsupported { max: 2, got: d });
    }
    let npts = grid.len();
    if npts.saturating_mul(npts) > WIGNER_POINT_CAP {
        return Err(Error::InvalidGrid(format!(
            "wigner lattice {npts}^2 exceeds the cap {WIGNER_POINT_CAP}"
        )));
    }
    psi.assert_normalized(1e-6)?;
    let hbar = psi.hbar();
    let shape = grid.shape().to_vec();

    // 2^d copies of psi shifted by +dx/2 along every axis subset
    let mut base = psi.amplitudes().clone();
    fft_all(&mut base);
    let ks: Vec<Vec<f64>> = (0..d).map(|a| grid.wavenumbers(a)).collect();
    let mut copies: Vec<Vec<Complex64>> = Vec::with_capacity(1 << d);
    for mask in 0u32..(1 << d) {
        let mut spec = base.clone();
        for (idx, v) in spec.indexed_iter_mut() {
            let mut phase = 0.0;
            for a in 0..d {
                if mask & (1 << a) != 0 {
                    phase += ks[a][idx[a]] * 0.5 * grid.spacing(a);
                }
            }
            *v *= Complex64::from_polar(1.0, phase);
        }
        crate::grid::ifft_all(&mut spec);
        copies.push(spec.into_raw_vec_and_offset().0);
    }

    let dxi: f64 = grid.cell_volume();
    let strides: Vec<usize> = {
        let mut s = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * shape[a + 1];
        }
        s
    };
    let flat_of = |idx: &[usize]| -> usize {
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    };

    let mut values = vec![0.0f64; npts * npts];
    let im_residual = values
        .par_chunks_mut(npts)
        .enumerate()
        .map(|(xf, row)| {
            // decompose x index
            let mut j = vec![0usize; d];
            let mut rem = xf;
            for a in (0..d).rev() {
                j[a] = rem % shape[a];
                rem /= shape[a];
            }
            // correlation g(xi) on the xi lattice
            let mut g = ArrayD::<Complex64>::zeros(IxDyn(&shape));
            let mut left = vec![0usize; d];
            let mut right = vec![0usize; d];
            for (l, gv) in g.indexed_iter_mut() {
                let mut mask = 0u32;
                for a in 0..d {
                    let n = shape[a] as isize;
                    let lt = l[a] as isize - n / 2;
                    let (m, odd) = if lt.rem_euclid(2) == 0 {
                        (lt.div_euclid(2), 0)
                    } else {
                        mask |= 1 << a;
                        ((lt - 1).div_euclid(2), 1)
                    };
                    left[a] = (j[a] as isize - m - odd).rem_euclid(n) as usize;
                    right[a] = (j[a] as isize + m).rem_euclid(n) as usize;
                }
                let lv = copies[mask as usize][flat_of(&left)];
                let rv = copies[mask as usize][flat_of(&right)];
                *gv = lv * rv.conj();
            }
            // unnormalized inverse DFT over xi
            for a in 0..d {
                fft_axis(&mut g, a, true);
            }
            let gflat = g.as_slice().expect("standard layout");
            let mut max_im = 0.0f64;
            // reorder to ascending momentum and apply the window phase
            let mut sk = vec![0usize; d];
            for (pf, slot) in row.iter_mut().enumerate() {
                let mut rem = pf;
                for a in (0..d).rev() {
                    sk[a] = rem % shape[a];
                    rem /= shape[a];
                }
                let mut unshifted = 0usize;
                let mut sign = 1.0f64;
                for a in 0..d {
                    let n = shape[a];
                    let kt = sk[a] as isize - (n / 2) as isize;
                    if kt.rem_euclid(2) != 0 {
                        sign = -sign;
                    }
                    let kun = kt.rem_euclid(n as isize) as usize;
                    unshifted = unshifted * n + kun;
                }
                let z = gflat[unshifted] * sign * dxi;
                max_im = max_im.max(z.im.abs());
                *slot = z.re;
            }
            max_im
        })
        .reduce(|| 0.0, f64::max);

    let p_axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let n = shape[a];
            let dp = 2.0 * std::f64::consts::PI * hbar / grid.extents()[a];
            (0..n)
                .map(|s| (s as isize - (n / 2) as isize) as f64 * dp)
                .collect()
        })
        .collect();

    let mut out_shape = shape.clone();
    out_shape.extend_from_slice(&shape);
    Ok(WignerGrid {
        grid,
        hbar,
        values: ArrayD::from_shape_vec(IxDyn(&out_shape), values).unwrap(),
        p_axes,
        im_residual,
    })
}

/// Real polynomial Weyl symbol: a map from `(x exponents, p exponents)` to
/// coefficients, degree at most 4.
#[derive(Debug, Clone)]
pub struct PhaseSpacePolynomial {
    pub terms: BTreeMap<(MultiIndex, MultiIndex), f64>,
    /// Marks the polynomial as the Weyl (symmetrically ordered) symbol.
    pub weyl_ordered: bool,
}

impl PhaseSpacePolynomial {
    pub fn new(terms: Vec<((MultiIndex, MultiIndex), f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((xa, pb), c) in terms {
            if xa.order() + pb.order() > 4 {
                return Err(Error::Other("phase-space polynomial degree exceeds 4".into()));
            }
            *map.entry((xa, pb)).or_insert(0.0) += c;
        }
        Ok(PhaseSpacePolynomial {
            terms: map,
            weyl_ordered: true,
        })
    }

    pub fn constant(dims: usize) -> Self {
        Self::new(vec![(
            (MultiIndex::zero(dims), MultiIndex::zero(dims)),
            1.0,
        )])
        .unwrap()
    }

    pub fn x(dims: usize, axis: usize) -> Self {
        Self::new(vec![(
            (MultiIndex::unit(dims, axis), MultiIndex::zero(dims)),
            1.0,
        )])
        .unwrap()
    }

    pub fn p(dims: usize, axis: usize) -> Self {
        Self::new(vec![(
            (MultiIndex::zero(dims), MultiIndex::unit(dims, axis)),
            1.0,
        )])
        .unwrap()
    }

    pub fn x_sq(dims: usize, axis: usize) -> Self {
        let mut a = MultiIndex::zero(dims);
        a.0[axis] = 2;
        Self::new(vec![((a, MultiIndex::zero(dims)), 1.0)]).unwrap()
    }

    pub fn p_sq(dims: usize, axis: usize) -> Self {
        let mut b = MultiIndex::zero(dims);
        b.0[axis] = 2;
        Self::new(vec![((MultiIndex::zero(dims), b), 1.0)]).unwrap()
    }

    /// Symbol `x p` of the symmetrized product on one axis.
    pub fn xp_symmetrized(dims: usize, axis: usize) -> Self {
        Self::new(vec![(
            (MultiIndex::unit(dims, axis), MultiIndex::unit(dims, axis)),
            1.0,
        )])
        .unwrap()
    }
}

/// `integral Omega_W W dx dp / (2 pi hbar)^d` for a polynomial symbol.
pub fn wigner_expectation(w: &WignerGrid, poly: &PhaseSpacePolynomial) -> f64 {
    let d = w.dims();
    let axes: Vec<Vec<f64>> = (0..d).map(|a| w.grid().positions(a)).collect();
    let measure = w.measure();
    let mut acc = 0.0;
    for (idx, val) in w.values.indexed_iter() {
        let mut omega = 0.0;
        for ((xa, pb), c) in &poly.terms {
            let mut term = *c;
            for a in 0..d {
                for _ in 0..xa.0[a] {
                    term *= axes[a][idx[a]];
                }
                for _ in 0..pb.0[a] {
                    term *= w.p_axes[a][idx[d + a]];
                }
            }
            omega += term;
        }
        acc += omega * val;
    }
    acc * measure
}

/// Weyl symbol of the ordered monomial `x^a p^b` (or `p^b x^a`) on one axis,
/// as complex coefficients of `x^(a-k) p^(b-k)`. The validation path for
/// matching ordered operator products against phase-space integrals.
pub fn ordered_monomial_symbol(
    a: usize,
    b: usize,
    x_first: bool,
    hbar: f64,
) -> Vec<((usize, usize), Complex64)> {
    let sign = if x_first { 1.0 } else { -1.0 };
    let mut out = Vec::new();
    for k in 0..=a.min(b) {
        let coeff = Complex64::new(0.0, sign * hbar / 2.0).powu(k as u32)
            * crate::multi_index::factorial(k)
            * binomial(a, k)
            * binomial(b, k);
        out.push(((a - k, b - k), coeff));
    }
    out
}

/// Complex-valued phase-space integral against monomial terms `x^a p^b`
/// (1-D), used to validate ordered-operator symbols.
pub fn wigner_expectation_complex(
    w: &WignerGrid,
    terms: &[((usize, usize), Complex64)],
) -> Result<Complex64> {
    if w.dims() != 1 {
        return Err(Error::DimensionUnsupported {
            max: 1,
            got: w.dims(),
        });
    }
    let xs = w.grid().positions(0);
    let measure = w.measure();
    let mut acc = Complex64::default();
    for (idx, val) in w.values.indexed_iter() {
        let x = xs[idx[0]];
        let p = w.p_axes[0][idx[1]];
        for ((ax, bp), c) in terms {
            acc += c * x.powi(*ax as i32) * p.powi(*bp as i32) * *val;
        }
    }
    Ok(acc * measure)
}

/// Multipole coefficients of the Wigner function at the monopole level:
/// `W_(o)(c)^{gamma} = (-i hbar/2)^c sum_a (-1)^a <avg over orderings>` of
/// the derivative-pair monopoles, with `a` counting derivatives on the
/// conjugate factor. Real after the hermitian combination; the order-0 and
/// order-1 coefficients reproduce 1 and `<p>`.
#[derive(Debug, Clone)]
pub struct WignerCoefficients {
    pub by_index: BTreeMap<MultiIndex, f64>,
    pub max_im_residual: f64,
}

pub fn wigner_multipole_coefficients(
    psi: &WaveFunction,
    c_max: usize,
) -> Result<WignerCoefficients> {
    let d = psi.grid().dims();
    let pairs = derivative_pair_moments(psi, c_max)?;
    let hbar = psi.hbar();
    let mut by_index = BTreeMap::new();
    let mut max_im = 0.0f64;
    for c in 0..=c_max {
        for gamma in indices_of_order(d, c) {
            let mut acc = Complex64::default();
            for nu in sub_indices(&gamma) {
                let a = nu.order();
                let mu_weight = multi_binomial(&gamma, &nu) / binomial(c, a);
                let rest = gamma.minus(&nu).expect("nu <= gamma");
                let p = pairs
                    .get(&(nu.clone(), rest))
                    .copied()
                    .ok_or_else(|| Error::Other("missing derivative pair".into()))?;
                let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * mu_weight * p;
            }
            let factor = Complex64::new(0.0, -hbar / 2.0).powu(c as u32);
            let value = factor * acc;
            max_im = max_im.max(value.im.abs());
            by_index.insert(gamma, value.re);
        }
    }
    Ok(WignerCoefficients {
        by_index,
        max_im_residual: max_im,
    })
}

/// Mixed expectations `<x^i p^j>` and `<p^j x^i>` assembled from the
/// momentum monopole and dipole about `<x>`, against direct operator
/// quadrature; their difference realizes the canonical commutator
/// `i hbar delta^{ij}`.
#[derive(Debug, Clone)]
pub struct CommutatorReport {
    pub assembled_xp: Vec<Vec<Complex64>>,
    pub assembled_px: Vec<Vec<Complex64>>,
    pub direct_xp: Vec<Vec<Complex64>>,
    pub direct_px: Vec<Vec<Complex64>>,
    /// `assembled_xp - assembled_px` (should be `i hbar delta`).
    pub difference: Vec<Vec<Complex64>>,
    /// Largest deviation between assembled and direct values.
    pub max_assembly_deviation: f64,
}

pub fn commutator_check(psi: &WaveFunction, multipoles: &MultipoleSet) -> Result<CommutatorReport> {
    let d = psi.grid().dims();
    if multipoles.order < 1 {
        return Err(Error::Other("commutator check needs momentum dipoles".into()));
    }
    let hbar = psi.hbar();
    let grid = psi.grid();
    let dv = grid.cell_volume();
    let axes: Vec<Vec<f64>> = (0..d).map(|a| grid.positions(a)).collect();

    let mut assembled_xp = vec![vec![Complex64::default(); d]; d];
    let mut assembled_px = vec![vec![Complex64::default(); d]; d];
    for i in 0..d {
        for j in 0..d {
            let pj = multipoles
                .momentum_moment(j, &MultiIndex::zero(d))
                .unwrap_or(0.0);
            let dip = multipoles
                .momentum_moment(j, &MultiIndex::unit(d, i))
                .unwrap_or(0.0);
            let sym = multipoles.center[i] * pj + dip;
            let half = Complex64::new(0.0, 0.5 * hbar * if i == j { 1.0 } else { 0.0 });
            assembled_xp[i][j] = Complex64::new(sym, 0.0) + half;
            assembled_px[i][j] = Complex64::new(sym, 0.0) - half;
        }
    }

    let mut direct_xp = vec![vec![Complex64::default(); d]; d];
    let mut direct_px = vec![vec![Complex64::default(); d]; d];
    let shape = grid.shape();
    for j in 0..d {
        let grad = psi.spectral_gradient(j)?;
        // <x^i p^j> = -i hbar  integral conj(psi) x_i d_j psi
        let mut acc = vec![Complex64::default(); d];
        let psi_s = psi.amplitudes().as_slice().expect("standard layout");
        let grad_s = grad.as_slice().expect("standard layout");
        let mut idx = vec![0usize; d];
        for (flat, (z, g)) in psi_s.iter().zip(grad_s.iter()).enumerate() {
            let mut rem = flat;
            for a in (0..d).rev() {
                idx[a] = rem % shape[a];
                rem /= shape[a];
            }
            let w = z.conj() * g;
            for (i, acc_i) in acc.iter_mut().enumerate() {
                *acc_i += w * axes[i][idx[i]];
            }
        }
        for i in 0..d {
            direct_xp[i][j] = Complex64::new(0.0, -hbar) * acc[i] * dv;
            // p^j x^i = x^i p^j - i hbar delta  (acting on psi); evaluate
            // directly as  -i hbar integral conj(psi) d_j (x_i psi)
            let mut xpsi = psi.amplitudes().clone();
            {
                let xs = &axes[i];
                let xpsi_s = xpsi.as_slice_mut().expect("standard layout");
                let mut idx2 = vec![0usize; d];
                for (flat, z) in xpsi_s.iter_mut().enumerate() {
                    let mut rem = flat;
                    for a in (0..d).rev() {
                        idx2[a] = rem % shape[a];
                        rem /= shape[a];
                    }
                    *z *= xs[idx2[i]];
                }
            }
            let xstate = psi.with_amps(xpsi, psi.time());
            let dxpsi = xstate.spectral_gradient(j)?;
            let mut acc2 = Complex64::default();
            for (z, g) in psi_s.iter().zip(dxpsi.as_slice().unwrap()) {
                acc2 += z.conj() * g;
            }
            direct_px[i][j] = Complex64::new(0.0, -hbar) * acc2 * dv;
        }
    }

    let mut difference = vec![vec![Complex64::default(); d]; d];
    let mut max_dev = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            difference[i][j] = assembled_xp[i][j] - assembled_px[i][j];
            max_dev = max_dev
                .max((assembled_xp[i][j] - direct_xp[i][j]).norm())
                .max((assembled_px[i][j] - direct_px[i][j]).norm());
        }
    }
    Ok(CommutatorReport {
        assembled_xp,
        assembled_px,
        direct_xp,
        direct_px,
        difference,
        max_assembly_deviation: max_dev,
    })
}
