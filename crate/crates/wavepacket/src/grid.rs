//! Periodic grids, wave-function storage and spectral (Fourier) operators.
//!
//! Conventions used throughout the crate:
//! * each axis spans `[-L/2, L/2)` with `N` points, `N` a power of two,
//! * the momentum lattice is `p_k = 2*pi*hbar*k/L` with `k in [-N/2, N/2)`,
//! * all integrals are Riemann sums with uniform cell volume, which is
//!   spectrally accurate for smooth decaying integrands.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the total number of grid points (memory guard).
pub const DEFAULT_POINT_CAP: usize = 1 << 24;

/// Warning threshold for density touching the box boundary.
pub const BOUNDARY_WARN: f64 = 1e-6;
/// Above this boundary density, moment integrals are refused.
pub const BOUNDARY_ERROR: f64 = 1e-3;

/// Uniform periodic grid over a centred box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    shape: Vec<usize>,
    extents: Vec<f64>,
}

impl Grid {
    /// Build a grid with the default point cap.
    pub fn new(extents: &[f64], points: &[usize]) -> Result<Self> {
        Self::with_cap(extents, points, DEFAULT_POINT_CAP)
    }

    /// Build a grid with an explicit cap on the total point count.
    pub fn with_cap(extents: &[f64], points: &[usize], cap: usize) -> Result<Self> {
        if extents.is_empty() || extents.len() != points.len() {
            return Err(Error::InvalidGrid(format!(
                "got {} extents and {} point counts",
                extents.len(),
                points.len()
            )));
        }
        let mut total = 1usize;
        for (a, (&ext, &n)) in extents.iter().zip(points).enumerate() {
            if !(ext > 0.0) || !ext.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "extent {ext} on axis {a} must be positive and finite"
                )));
            }
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} has {n} points; need a power of two >= 8"
                )));
            }
            total = total.checked_mul(n).ok_or_else(|| {
                Error::InvalidGrid("total point count overflows usize".into())
            })?;
        }
        if total > cap {
            return Err(Error::InvalidGrid(format!(
                "total point count {total} exceeds the configured cap {cap}"
            )));
        }
        Ok(Grid {
            shape: points.to_vec(),
            extents: extents.to_vec(),
        })
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.shape[axis] as f64
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|a| self.spacing(a)).product()
    }

    /// Position samples along one axis: `x_j = -L/2 + j*dx`.
    pub fn positions(&self, axis: usize) -> Vec<f64> {
        let dx = self.spacing(axis);
        let x0 = -0.5 * self.extents[axis];
        (0..self.shape[axis]).map(|j| x0 + j as f64 * dx).collect()
    }

    /// Angular wavenumbers along one axis in FFT index order
    /// (`k_j = 2*pi*j'/L` with `j' = j` for `j < N/2` and `j' = j - N` after).
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.shape[axis];
        let dk = 2.0 * std::f64::consts::PI / self.extents[axis];
        (0..n)
            .map(|j| {
                let signed = if j < n / 2 {
                    j as isize
                } else {
                    j as isize - n as isize
                };
                signed as f64 * dk
            })
            .collect()
    }

    /// Momentum lattice `p = hbar * k` along one axis, FFT index order.
    pub fn momenta(&self, axis: usize, hbar: f64) -> Vec<f64> {
        self.wavenumbers(axis).iter().map(|k| hbar * k).collect()
    }

    /// Momentum-space cell volume `prod_a 2*pi*hbar/L_a`.
    pub fn momentum_cell_volume(&self, hbar: f64) -> f64 {
        self.extents
            .iter()
            .map(|l| 2.0 * std::f64::consts::PI * hbar / l)
            .product()
    }

    /// Position of a flattened index.
    pub fn position_of(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut out = vec![0.0; self.dims()];
        for a in (0..self.dims()).rev() {
            let n = self.shape[a];
            let j = rem % n;
            rem /= n;
            out[a] = -0.5 * self.extents[a] + j as f64 * self.spacing(a);
        }
        out
    }
}

/// Physical constants attached to a state: `hbar`, per-particle masses and,
/// where relevant, the speed of light.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub hbar: f64,
    pub masses: Vec<f64>,
    pub c: Option<f64>,
}

impl Units {
    /// Single-particle defaults `m = hbar = 1`.
    pub fn unit() -> Self {
        Units {
            hbar: 1.0,
            masses: vec![1.0],
            c: None,
        }
    }

    pub fn single(hbar: f64, mass: f64) -> Self {
        Units {
            hbar,
            masses: vec![mass],
            c: None,
        }
    }

    pub fn two_particle(hbar: f64, m1: f64, m2: f64) -> Self {
        Units {
            hbar,
            masses: vec![m1, m2],
            c: None,
        }
    }

    pub fn particles(&self) -> usize {
        self.masses.len()
    }

    /// Mass associated with a grid axis. For a two-particle configuration
    /// space the first half of the axes belongs to particle 1.
    pub fn axis_mass(&self, axis: usize, dims: usize) -> f64 {
        match self.masses.len() {
            1 => self.masses[0],
            2 => {
                let per = dims / 2;
                if axis < per {
                    self.masses[0]
                } else {
                    self.masses[1]
                }
            }
            _ => self.masses[axis % self.masses.len()],
        }
    }

    fn validate(&self, dims: usize) -> Result<()> {
        if !(self.hbar > 0.0) {
            return Err(Error::InvalidGrid("hbar must be positive".into()));
        }
        if self.masses.is_empty() || self.masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidGrid("masses must be positive".into()));
        }
        // with c set, two masses describe the constituents of a
        // relative-coordinate (rest-frame) state of any dimension
        if self.masses.len() == 2 && dims % 2 != 0 && self.c.is_none() {
            return Err(Error::InvalidGrid(
                "two-particle units need an even-dimensional configuration grid".into(),
            ));
        }
        if let Some(c) = self.c {
            if !(c > 0.0) {
                return Err(Error::InvalidGrid("c must be positive".into()));
            }
        }
        Ok(())
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// In-place unnormalized FFT along one axis of an n-dimensional array.
pub(crate) fn fft_axis(data: &mut ArrayD<Complex64>, axis: usize, inverse: bool) {
    let len = data.shape()[axis];
    let fft = plan(len, inverse);
    let mut scratch = vec![Complex64::default(); len];
    for mut lane in data.lanes_mut(Axis(axis)) {
        for (s, v) in scratch.iter_mut().zip(lane.iter()) {
            *s = *v;
        }
        fft.process(&mut scratch);
        for (v, s) in lane.iter_mut().zip(scratch.iter()) {
            *v = *s;
        }
    }
}

/// Forward FFT over all axes (unnormalized).
pub(crate) fn fft_all(data: &mut ArrayD<Complex64>) {
    for axis in 0..data.ndim() {
        fft_axis(data, axis, false);
    }
}

/// Inverse FFT over all axes, normalized by `1/N_total`.
pub(crate) fn ifft_all(data: &mut ArrayD<Complex64>) {
    for axis in 0..data.ndim() {
        fft_axis(data, axis, true);
    }
    let scale = 1.0 / data.len() as f64;
    data.mapv_inplace(|v| v * scale);
}

/// A function of the momentum vector applied as a diagonal operator in
/// Fourier space (a pseudo-differential operator).
#[derive(Debug, Clone)]
pub struct FourierMultiplier {
    values: ArrayD<Complex64>,
}

impl FourierMultiplier {
    /// Tabulate `symbol(p)` on the momentum lattice of `grid`.
    pub fn from_symbol<F>(grid: &Grid, hbar: f64, symbol: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let momenta: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.momenta(a, hbar)).collect();
        let mut values = ArrayD::<Complex64>::zeros(IxDyn(grid.shape()));
        let mut p = vec![0.0; grid.dims()];
        for (idx, v) in values.indexed_iter_mut() {
            for a in 0..grid.dims() {
                p[a] = momenta[a][idx[a]];
            }
            let s = symbol(&p);
            if !s.re.is_finite() || !s.im.is_finite() {
                return Err(Error::SymbolNotFinite);
            }
            *v = s;
        }
        Ok(FourierMultiplier { values })
    }

    pub fn values(&self) -> &ArrayD<Complex64> {
        &self.values
    }
}

/// A complex scalar field sampled on a periodic grid, with its physical units.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    grid: Arc<Grid>,
    units: Units,
    amps: ArrayD<Complex64>,
    time: f64,
}

impl WaveFunction {
    /// Wrap raw amplitudes. Fails on non-finite entries or shape mismatch.
    pub fn new(grid: Arc<Grid>, units: Units, amps: ArrayD<Complex64>, time: f64) -> Result<Self> {
        units.validate(grid.dims())?;
        if amps.shape() != grid.shape() {
            return Err(Error::InvalidGrid(format!(
                "amplitude shape {:?} does not match grid shape {:?}",
                amps.shape(),
                grid.shape()
            )));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite {
                context: "wave-function amplitudes".into(),
            });
        }
        Ok(WaveFunction {
            grid,
            units,
            amps,
            time,
        })
    }

    /// Build from a function of position, then normalize.
    pub fn from_fn<F>(grid: Arc<Grid>, units: Units, time: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let axes: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.positions(a)).collect();
        let mut amps = ArrayD::<Complex64>::zeros(IxDyn(grid.shape()));
        let mut x = vec![0.0; grid.dims()];
        for (idx, v) in amps.indexed_iter_mut() {
            for a in 0..grid.dims() {
                x[a] = axes[a][idx[a]];
            }
            *v = f(&x);
        }
        WaveFunction::new(grid, units, amps, time)?.normalized()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        self.grid.clone()
    }

    pub fn units(&self) -> &Units {
        &self.units
    }

    pub fn hbar(&self) -> f64 {
        self.units.hbar
    }

    pub fn amplitudes(&self) -> &ArrayD<Complex64> {
        &self.amps
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub(crate) fn with_amps(&self, amps: ArrayD<Complex64>, time: f64) -> Self {
        WaveFunction {
            grid: self.grid.clone(),
            units: self.units.clone(),
            amps,
            time,
        }
    }

    pub fn same_grid(&self, other: &WaveFunction) -> bool {
        self.grid == other.grid
    }

    /// Squared norm as a Riemann sum of `|psi|^2`.
    pub fn norm_sq(&self) -> f64 {
        let dv = self.grid.cell_volume();
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv
    }

    /// Rescale to unit norm.
    pub fn normalized(&self) -> Result<WaveFunction> {
        let n2 = self.norm_sq();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let s = 1.0 / n2.sqrt();
        let mut amps = self.amps.clone();
        amps.mapv_inplace(|z| z * s);
        Ok(self.with_amps(amps, self.time))
    }

    pub fn assert_normalized(&self, tol: f64) -> Result<()> {
        let n2 = self.norm_sq();
        if (n2 - 1.0).abs() > tol {
            return Err(Error::NotNormalized { norm_sq: n2 });
        }
        Ok(())
    }

    /// `<self|other>` with the first argument conjugated.
    pub fn inner_product(&self, other: &WaveFunction) -> Result<Complex64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let dv = self.grid.cell_volume();
        let mut acc = Complex64::default();
        for (a, b) in self.amps.iter().zip(other.amps.iter()) {
            acc += a.conj() * b;
        }
        Ok(acc * dv)
    }

    /// Spectral partial derivative along `axis`: exact for band-limited fields.
    pub fn spectral_gradient(&self, axis: usize) -> Result<ArrayD<Complex64>> {
        if axis >= self.grid.dims() {
            return Err(Error::AxisOutOfRange {
                axis,
                dims: self.grid.dims(),
            });
        }
        let mut data = self.amps.clone();
        fft_axis(&mut data, axis, false);
        let ks = self.grid.wavenumbers(axis);
        for (idx, v) in data.indexed_iter_mut() {
            *v *= Complex64::new(0.0, ks[idx[axis]]);
        }
        fft_axis(&mut data, axis, true);
        let scale = 1.0 / self.grid.shape()[axis] as f64;
        data.mapv_inplace(|z| z * scale);
        Ok(data)
    }

    /// Spectral mixed derivative with per-axis orders `alpha`.
    pub fn spectral_derivative_multi(&self, alpha: &[u8]) -> Result<ArrayD<Complex64>> {
        if alpha.len() != self.grid.dims() {
            return Err(Error::DimensionMismatch {
                required: self.grid.dims(),
                got: alpha.len(),
            });
        }
        let mut data = self.amps.clone();
        fft_all(&mut data);
        let ks: Vec<Vec<f64>> = (0..self.grid.dims())
            .map(|a| self.grid.wavenumbers(a))
            .collect();
        for (idx, v) in data.indexed_iter_mut() {
            let mut f = Complex64::new(1.0, 0.0);
            for (a, &ord) in alpha.iter().enumerate() {
                for _ in 0..ord {
                    f *= Complex64::new(0.0, ks[a][idx[a]]);
                }
            }
            *v *= f;
        }
        ifft_all(&mut data);
        Ok(data)
    }

    /// Apply a Fourier multiplier: each momentum mode is scaled by the symbol.
    pub fn apply_multiplier(&self, m: &FourierMultiplier) -> Result<WaveFunction> {
        if m.values.shape() != self.grid.shape() {
            return Err(Error::GridMismatch);
        }
        let mut data = self.amps.clone();
        fft_all(&mut data);
        for (v, s) in data.iter_mut().zip(m.values.iter()) {
            *v *= *s;
        }
        ifft_all(&mut data);
        self.with_amps(data, self.time).finite_checked()
    }

    pub(crate) fn finite_checked(self) -> Result<WaveFunction> {
        if self
            .amps
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite {
                context: "wave-function amplitudes".into(),
            });
        }
        Ok(self)
    }

    /// Normalized momentum representation on the lattice `p_k = 2*pi*hbar*k/L`
    /// (FFT index order): `sum_k |phi_k|^2 * dp = 1` when `psi` is normalized.
    pub fn momentum_representation(&self) -> ArrayD<Complex64> {
        let mut data = self.amps.clone();
        fft_all(&mut data);
        let d = self.grid.dims();
        let hbar = self.units.hbar;
        // scale: prod_a dx_a / sqrt(2*pi*hbar)  and the phase from x0 = -L/2
        let mut scale = 1.0;
        for a in 0..d {
            scale *= self.grid.spacing(a) / (2.0 * std::f64::consts::PI * hbar).sqrt();
        }
        let ks: Vec<Vec<f64>> = (0..d).map(|a| self.grid.wavenumbers(a)).collect();
        let x0: Vec<f64> = (0..d).map(|a| -0.5 * self.grid.extents()[a]).collect();
        for (idx, v) in data.indexed_iter_mut() {
            let mut phase = 0.0;
            for a in 0..d {
                phase -= ks[a][idx[a]] * x0[a];
            }
            *v *= Complex64::from_polar(scale, phase);
        }
        data
    }

    /// Squared norm computed in momentum space (Parseval check).
    pub fn norm_sq_momentum(&self) -> f64 {
        let phi = self.momentum_representation();
        let dp = self.grid.momentum_cell_volume(self.units.hbar);
        phi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dp
    }

    /// Largest `|psi|^2` on the outermost shell of the box (leak monitor).
    pub fn boundary_max_density(&self) -> f64 {
        let shape = self.grid.shape();
        let mut max = 0.0f64;
        for (idx, z) in self.amps.indexed_iter() {
            let mut on_boundary = false;
            for a in 0..shape.len() {
                if idx[a] == 0 || idx[a] == shape[a] - 1 {
                    on_boundary = true;
                    break;
                }
            }
            if on_boundary {
                max = max.max(z.norm_sqr());
            }
        }
        max
    }

    /// Band-limited evaluation of `psi` at an arbitrary point inside the box.
    pub fn eval_at(&self, x: &[f64]) -> Complex64 {
        let d = self.grid.dims();
        assert_eq!(x.len(), d, "point dimension mismatch");
        let mut spec = self.amps.clone();
        fft_all(&mut spec);
        eval_spectrum_at(self.grid(), &spec, x)
    }
}

/// Evaluate an unnormalized forward spectrum at an arbitrary point:
/// `f(x) = (1/N) sum_k C_k exp(i k (x - x0))`.
pub(crate) fn eval_spectrum_at(grid: &Grid, spec: &ArrayD<Complex64>, x: &[f64]) -> Complex64 {
    let d = grid.dims();
    let nt = grid.len() as f64;
    // per-axis phase tables exp(i k_j (x_a - x0_a))
    let tables: Vec<Vec<Complex64>> = (0..d)
        .map(|a| {
            let ks = grid.wavenumbers(a);
            let x0 = -0.5 * grid.extents()[a];
            ks.iter()
                .map(|k| Complex64::from_polar(1.0, k * (x[a] - x0)))
                .collect()
        })
        .collect();
    let mut acc = Complex64::default();
    for (idx, c) in spec.indexed_iter() {
        let mut f = *c;
        for a in 0..d {
            f *= tables[a][idx[a]];
        }
        acc += f;
    }
    acc / nt
}
