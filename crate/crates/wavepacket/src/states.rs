//! Initial-state constructors: Gaussian packets, oscillator eigenstates and
//! coherent states, superpositions, and two-particle products.

use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, Units, WaveFunction};

/// Normalized Gaussian packet with per-axis standard deviations `sigma`
/// (of the *density*), centre `x0` and mean momentum `p0`:
/// `psi ~ exp(-(x-x0)^2/(4 sigma^2) + i p0.x/hbar)`.
pub fn gaussian_packet(
    grid: Arc<Grid>,
    units: Units,
    x0: &[f64],
    p0: &[f64],
    sigma: &[f64],
) -> Result<WaveFunction> {
    let d = grid.dims();
    if x0.len() != d || p0.len() != d || sigma.len() != d {
        return Err(Error::DimensionMismatch {
            required: d,
            got: x0.len().min(p0.len()).min(sigma.len()),
        });
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Other("gaussian width must be positive".into()));
    }
    let hbar = units.hbar;
    let x0 = x0.to_vec();
    let p0 = p0.to_vec();
    let sigma = sigma.to_vec();
    WaveFunction::from_fn(grid, units, 0.0, move |x| {
        let mut arg = 0.0;
        let mut phase = 0.0;
        for a in 0..x.len() {
            let dx = x[a] - x0[a];
            arg -= dx * dx / (4.0 * sigma[a] * sigma[a]);
            phase += p0[a] * x[a] / hbar;
        }
        Complex64::from_polar(arg.exp(), phase)
    })
}

/// Harmonic-oscillator coherent state: the ground-state Gaussian of the
/// oscillator `omega` displaced to `x0` and boosted to `p0`. Its width is
/// `sigma^2 = hbar/(2 m omega)` per axis, and it is an exact minimal packet.
pub fn coherent_state(
    grid: Arc<Grid>,
    units: Units,
    omega: f64,
    x0: &[f64],
    p0: &[f64],
) -> Result<WaveFunction> {
    if !(omega > 0.0) {
        return Err(Error::Other("oscillator frequency must be positive".into()));
    }
    let m = units.masses[0];
    let sigma2 = units.hbar / (2.0 * m * omega);
    let sigma = vec![sigma2.sqrt(); grid.dims()];
    gaussian_packet(grid, units, x0, p0, &sigma)
}

fn hermite(n: usize, u: f64) -> f64 {
    // physicists' Hermite polynomials by recurrence
    let mut h0 = 1.0;
    if n == 0 {
        return h0;
    }
    let mut h1 = 2.0 * u;
    for k in 1..n {
        let h2 = 2.0 * u * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Harmonic-oscillator eigenstate with per-axis quantum numbers `n`.
pub fn oscillator_eigenstate(
    grid: Arc<Grid>,
    units: Units,
    omega: f64,
    n: &[usize],
) -> Result<WaveFunction> {
    let d = grid.dims();
    if n.len() != d {
        return Err(Error::DimensionMismatch {
            required: d,
            got: n.len(),
        });
    }
    if !(omega > 0.0) {
        return Err(Error::Other("oscillator frequency must be positive".into()));
    }
    let m = units.masses[0];
    let scale = (m * omega / units.hbar).sqrt();
    let n = n.to_vec();
    WaveFunction::from_fn(grid, units, 0.0, move |x| {
        let mut v = 1.0;
        for a in 0..x.len() {
            let u = scale * x[a];
            v *= hermite(n[a], u) * (-0.5 * u * u).exp();
        }
        Complex64::new(v, 0.0)
    })
}

/// Normalized linear combination `sum_i c_i psi_i` on a common grid.
pub fn superposition(components: &[(Complex64, &WaveFunction)]) -> Result<WaveFunction> {
    let (_, first) = components
        .first()
        .ok_or_else(|| Error::Other("superposition needs at least one component".into()))?;
    for (_, psi) in components {
        if !psi.same_grid(first) {
            return Err(Error::GridMismatch);
        }
    }
    let mut amps = ArrayD::<Complex64>::zeros(IxDyn(first.grid().shape()));
    for (c, psi) in components {
        for (acc, z) in amps.iter_mut().zip(psi.amplitudes().iter()) {
            *acc += c * z;
        }
    }
    WaveFunction::new(first.grid_arc(), first.units().clone(), amps, first.time())?.normalized()
}

/// Tensor product of two single-particle states on the combined
/// configuration-space grid. Axis order is (particle 1 axes, particle 2 axes).
pub fn two_particle_product(psi1: &WaveFunction, psi2: &WaveFunction) -> Result<WaveFunction> {
    let g1 = psi1.grid();
    let g2 = psi2.grid();
    let extents: Vec<f64> = g1.extents().iter().chain(g2.extents()).copied().collect();
    let points: Vec<usize> = g1.shape().iter().chain(g2.shape()).copied().collect();
    let grid = Arc::new(Grid::new(&extents, &points)?);
    let hbar = psi1.units().hbar;
    if (psi2.units().hbar - hbar).abs() > 1e-15 {
        return Err(Error::Other("mismatched hbar between factors".into()));
    }
    let units = Units::two_particle(hbar, psi1.units().masses[0], psi2.units().masses[0]);
    let n2 = g2.len();
    let a1: Vec<Complex64> = psi1.amplitudes().iter().copied().collect();
    let a2: Vec<Complex64> = psi2.amplitudes().iter().copied().collect();
    let mut amps = ArrayD::<Complex64>::zeros(IxDyn(grid.shape()));
    for (flat, v) in amps.iter_mut().enumerate() {
        *v = a1[flat / n2] * a2[flat % n2];
    }
    WaveFunction::new(grid, units, amps, psi1.time())?.normalized()
}

/// Entangled two-particle state `alpha |A1>|A2> + beta |B1>|B2>`, normalized.
pub fn entangled_pair(
    alpha: Complex64,
    branch_a: (&WaveFunction, &WaveFunction),
    beta: Complex64,
    branch_b: (&WaveFunction, &WaveFunction),
) -> Result<WaveFunction> {
    let pa = two_particle_product(branch_a.0, branch_a.1)?;
    let pb = two_particle_product(branch_b.0, branch_b.1)?;
    superposition(&[(alpha, &pa), (beta, &pb)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid64() -> Arc<Grid> {
        Arc::new(Grid::new(&[20.0], &[128]).unwrap())
    }

    #[test]
    fn gaussian_is_normalized() {
        let psi =
            gaussian_packet(grid64(), Units::unit(), &[1.5], &[0.0], &[1.0]).unwrap();
        assert!((psi.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenstate_orthogonality() {
        let g = grid64();
        let psi0 = oscillator_eigenstate(g.clone(), Units::unit(), 1.0, &[0]).unwrap();
        let psi1 = oscillator_eigenstate(g, Units::unit(), 1.0, &[1]).unwrap();
        let ip = psi0.inner_product(&psi1).unwrap();
        assert!(ip.norm() < 1e-12);
    }

    #[test]
    fn product_state_norm() {
        let g = Arc::new(Grid::new(&[16.0], &[64]).unwrap());
        let a = gaussian_packet(g.clone(), Units::unit(), &[-1.0], &[0.0], &[0.7]).unwrap();
        let b = gaussian_packet(g, Units::unit(), &[1.0], &[0.0], &[0.7]).unwrap();
        let p = two_particle_product(&a, &b).unwrap();
        assert_eq!(p.grid().dims(), 2);
        assert!((p.norm_sq() - 1.0).abs() < 1e-12);
        assert_eq!(p.units().particles(), 2);
    }
}
