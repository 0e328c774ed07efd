//! Moment machinery against independent quadrature: expectation values,
//! central moments, uncertainty products, derivative-pair monopoles, angular
//! momentum and the continuity equation.

mod common;

use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use wavepacket::dynamics::{evolve, EvolveConfig};
use wavepacket::grid::{Grid, Units, WaveFunction};
use wavepacket::moments::{
    angular_momentum_expectation, central_moments, density, derivative_pair_moments,
    momentum_expectation, multipoles_with_pairs, position_expectation, uncertainties,
};
use wavepacket::potential::Potential;
use wavepacket::states::{gaussian_packet, oscillator_eigenstate, superposition};
use wavepacket::MultiIndex;

use common::{assert_close, assert_rel_close};

fn grid1(l: f64, n: usize) -> Arc<Grid> {
    Arc::new(Grid::new(&[l], &[n]).unwrap())
}

#[test]
fn gaussian_expectations_match_parameters() {
    let g = grid1(30.0, 256);
    let psi = gaussian_packet(g, Units::unit(), &[1.5], &[0.0], &[1.0]).unwrap();
    let x = position_expectation(&psi).unwrap();
    assert_close(x[0], 1.5, 1e-8, "<x> of centred gaussian");

    // oracle: quadrature of the analytic momentum density for p0 = 3
    let p_oracle = common::midpoint_quadrature(-15.0, 15.0, 30000, |x| {
        let psi = common::gaussian_sample(x, 0.0, 3.0, 1.0, 1.0);
        // j = hbar Im(conj(psi) dpsi); analytic derivative
        let dpsi = psi * (Complex64::new(-x / 2.0, 3.0));
        (psi.conj() * dpsi).im
    });
    assert_close(p_oracle, 3.0, 1e-9, "oracle <p>");

    let g = grid1(30.0, 256);
    let boosted = gaussian_packet(g, Units::unit(), &[0.0], &[3.0], &[1.0]).unwrap();
    let p = momentum_expectation(&boosted).unwrap();
    assert_close(p[0], 3.0, 1e-8, "<p> of boosted gaussian");

    // integral of the momentum density equals <p>
    let f = density(&boosted).unwrap();
    let total_j: f64 = f.current[0].iter().sum::<f64>() * boosted.grid().cell_volume();
    assert_close(total_j, 3.0, 1e-8, "integral j");
    assert_close(f.total(), 1.0, 1e-9, "integral rho");
}

#[test]
fn parity_eigenstate_has_zero_dipole_about_origin() {
    let g = grid1(24.0, 256);
    let psi = oscillator_eigenstate(g, Units::unit(), 1.0, &[2]).unwrap();
    let x = position_expectation(&psi).unwrap();
    assert_close(x[0], 0.0, 1e-10, "parity eigenstate <x>");
}

#[test]
fn central_moments_of_gaussian_match_quadrature() {
    // oracle: variance of a sigma^2 = 0.25 gaussian is exactly 0.25, fourth
    // central moment is 3 sigma^4
    let var_oracle = common::midpoint_quadrature(-8.0, 8.0, 20000, |x| {
        let rho = common::gaussian_sample(x, 0.0, 0.0, 0.5, 1.0).norm_sqr();
        x * x * rho
    });
    assert_close(var_oracle, 0.25, 1e-10, "oracle variance");

    let g = grid1(24.0, 256);
    let psi = gaussian_packet(g, Units::unit(), &[0.7], &[0.0], &[0.5]).unwrap();
    let f = density(&psi).unwrap();
    let mean = position_expectation(&psi).unwrap();
    let set = central_moments(&f, &mean, 4).unwrap();
    assert_close(
        set.density_moment(&MultiIndex(vec![1])).unwrap(),
        0.0,
        1e-10,
        "dipole about the mean",
    );
    assert_close(
        set.density_moment(&MultiIndex(vec![2])).unwrap(),
        0.25,
        1e-6,
        "quadrupole",
    );
    assert_close(
        set.density_moment(&MultiIndex(vec![4])).unwrap(),
        3.0 * 0.25 * 0.25,
        1e-6,
        "fourth moment",
    );
    assert_close(
        set.density_moment(&MultiIndex(vec![0])).unwrap(),
        1.0,
        1e-9,
        "monopole",
    );
}

#[test]
fn minimal_packet_saturates_heisenberg() {
    let g = grid1(32.0, 256);
    let psi = gaussian_packet(g, Units::unit(), &[0.0], &[1.0], &[1.0]).unwrap();
    let set = multipoles_with_pairs(&psi, 2, 2).unwrap();
    let (dx, dp) = uncertainties(&psi, &set).unwrap();
    assert_close(dx[0] * dp[0], 0.5, 1e-6, "minimal packet dx dp");
}

#[test]
fn first_excited_state_uncertainty_product() {
    // analytic oscillator: dx dp = (n + 1/2) hbar = 3/2 for n = 1
    let g = grid1(24.0, 256);
    let psi = oscillator_eigenstate(g, Units::unit(), 1.0, &[1]).unwrap();
    let set = multipoles_with_pairs(&psi, 2, 2).unwrap();
    let (dx, dp) = uncertainties(&psi, &set).unwrap();
    assert_close(dx[0] * dp[0], 1.5, 1e-5, "n=1 dx dp");
}

#[test]
fn evolved_states_respect_heisenberg_bound() {
    let g = grid1(30.0, 256);
    let psi = gaussian_packet(g, Units::unit(), &[1.0], &[0.0], &[0.5]).unwrap();
    let v = Potential::Quartic { lambda: 0.1 };
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 3.0,
        save_stride: 300,
        snapshot_stride: 1,
    };
    let record = evolve(&psi, &v, &cfg).unwrap();
    for (_, snap) in &record.snapshots {
        let set = multipoles_with_pairs(snap, 2, 2).unwrap();
        let (dx, dp) = uncertainties(snap, &set).unwrap();
        assert!(
            dx[0] * dp[0] >= 0.5 - 1e-9,
            "Heisenberg bound violated: {}",
            dx[0] * dp[0]
        );
    }
}

#[test]
fn derivative_pairs_reproduce_normalization_momentum_and_p_squared() {
    let g = grid1(28.0, 256);
    let psi = gaussian_packet(g.clone(), Units::unit(), &[0.4], &[1.3], &[0.9]).unwrap();
    let pairs = derivative_pair_moments(&psi, 2).unwrap();
    let zero = MultiIndex(vec![0]);
    let one = MultiIndex(vec![1]);
    let two = MultiIndex(vec![2]);

    // c = 0: normalization
    let p00 = pairs[&(zero.clone(), zero.clone())];
    assert_close(p00.re, 1.0, 1e-9, "pair c=0");

    // c = 1 hermitian combination reproduces <p>:
    // -i hbar/2 (P(0, d) - P(d, 0)) = <p>
    let w = Complex64::new(0.0, -0.5)
        * (pairs[&(zero.clone(), one.clone())] - pairs[&(one.clone(), zero.clone())]);
    let p_mean = momentum_expectation(&psi).unwrap()[0];
    assert_close(w.re, p_mean, 1e-8, "pair c=1 vs <p>");
    assert_close(w.im, 0.0, 1e-12, "pair c=1 imaginary residue");

    // c = 2, a = 0 diagonal: -hbar^2 P(0, 2e_r) = <p^2>, from the
    // Fourier-space oracle sum |phi_k|^2 p_k^2 dp
    let phi = psi.momentum_representation();
    let dp = psi.grid().momentum_cell_volume(1.0);
    let momenta = psi.grid().momenta(0, 1.0);
    let mut p_sq = 0.0;
    for (idx, z) in phi.indexed_iter() {
        p_sq += z.norm_sqr() * momenta[idx[0]].powi(2) * dp;
    }
    let via_pairs = -pairs[&(zero, two)].re;
    assert_close(via_pairs, p_sq, 1e-8, "pair c=2 vs spectral <p^2>");
    // analytic: <p^2> = p0^2 + hbar^2/(4 sigma^2)
    assert_close(p_sq, 1.3 * 1.3 + 1.0 / (4.0 * 0.81), 1e-6, "<p^2> analytic");
}

#[test]
fn angular_momentum_of_boosted_and_lm_states() {
    let g3 = Arc::new(Grid::new(&[16.0, 16.0, 16.0], &[64, 64, 64]).unwrap());
    // real 3-D packet at rest: everything vanishes
    let rest = gaussian_packet(
        g3.clone(),
        Units::unit(),
        &[0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0],
        &[0.8, 0.8, 0.8],
    )
    .unwrap();
    let set = multipoles_with_pairs(&rest, 1, 0).unwrap();
    let rep = angular_momentum_expectation(&rest, &set).unwrap();
    for i in 0..3 {
        assert_close(rep.total[i], 0.0, 1e-10, "L of real state");
    }

    // boosted off-axis packet: L3 = x0 * p0 = 1 * 2
    let boosted = gaussian_packet(
        g3.clone(),
        Units::unit(),
        &[1.0, 0.0, 0.0],
        &[0.0, 2.0, 0.0],
        &[0.8, 0.8, 0.8],
    )
    .unwrap();
    let set = multipoles_with_pairs(&boosted, 1, 0).unwrap();
    let rep = angular_momentum_expectation(&boosted, &set).unwrap();
    assert_close(rep.classical[2], 2.0, 1e-6, "classical L3");
    assert_close(rep.residual[2], 0.0, 1e-6, "residual L3");

    // m = 1 eigenstate: psi ~ (x + i y) exp(-r^2 / 2) has <L3> = hbar
    let lm = WaveFunction::from_fn(g3, Units::unit(), 0.0, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Complex64::new(x[0], x[1]) * (-0.5 * r2).exp()
    })
    .unwrap();
    let set = multipoles_with_pairs(&lm, 1, 0).unwrap();
    let rep = angular_momentum_expectation(&lm, &set).unwrap();
    assert_close(rep.total[2], 1.0, 1e-5, "<L3> of m = 1 state");
    // centred at the origin, so the whole value is the dipole residual
    assert_close(rep.classical[2], 0.0, 1e-8, "classical part");
}

#[test]
fn continuity_equation_on_a_half_box() {
    // d/dt int_Omega rho = -(1/m) [j(b) - j(a)] for Omega = [a, b]
    let g = grid1(30.0, 256);
    let psi = gaussian_packet(g.clone(), Units::unit(), &[-1.0], &[1.5], &[0.8]).unwrap();
    let dt = 1e-3;
    let cfg = EvolveConfig {
        dt,
        t_final: 2.0 * dt,
        save_stride: 1,
        snapshot_stride: 1,
    };
    let record = evolve(&psi, &Potential::Free, &cfg).unwrap();
    let f0 = density(&record.snapshots[0].1).unwrap();
    let f1 = density(&record.snapshots[1].1).unwrap();
    let f2 = density(&record.snapshots[2].1).unwrap();
    let dx = g.spacing(0);
    let half = g.shape()[0] / 2; // Omega = left half of the box
    let mass_flow = |f: &wavepacket::moments::DensityField| -> f64 {
        f.rho.as_slice().unwrap()[..half].iter().sum::<f64>() * dx
    };
    let d_dt = (mass_flow(&f2) - mass_flow(&f0)) / (2.0 * dt);
    // the node sum ends between nodes half-1 and half, so the outward flux
    // sits at the cell edge; a sharp window makes this quadrature O(dx^2)
    let j_edge = 0.5
        * (f1.current[0].as_slice().unwrap()[half - 1]
            + f1.current[0].as_slice().unwrap()[half]);
    assert_rel_close(d_dt, -j_edge, 5e-3, "sharp-window continuity balance");

    // weak form with a smooth window removes the window quadrature error:
    // d/dt int w rho = (1/m) int w' j, spectrally accurate on both sides
    let xs = g.positions(0);
    let w: Vec<f64> = xs.iter().map(|x| 1.0 / (1.0 + (x / 0.5).exp())).collect();
    let dw: Vec<f64> = xs
        .iter()
        .map(|x| {
            let e = (x / 0.5_f64).exp();
            -e / (0.5 * (1.0 + e).powi(2))
        })
        .collect();
    let wmass = |f: &wavepacket::moments::DensityField| -> f64 {
        f.rho
            .as_slice()
            .unwrap()
            .iter()
            .zip(&w)
            .map(|(r, wi)| r * wi)
            .sum::<f64>()
            * dx
    };
    let d_dt_w = (wmass(&f2) - wmass(&f0)) / (2.0 * dt);
    let rhs: f64 = f1
        .current[0]
        .as_slice()
        .unwrap()
        .iter()
        .zip(&dw)
        .map(|(j, d)| j * d)
        .sum::<f64>()
        * dx;
    assert_rel_close(d_dt_w, rhs, 1e-5, "smooth-window continuity balance");
}

#[test]
fn interference_term_for_overlapping_packets_matches_quadrature() {
    let g = grid1(30.0, 512);
    let a = gaussian_packet(g.clone(), Units::unit(), &[-0.7], &[1.0], &[0.8]).unwrap();
    let b = gaussian_packet(g.clone(), Units::unit(), &[0.7], &[-1.0], &[0.8]).unwrap();
    let alpha = Complex64::new(0.6, 0.2);
    let beta = Complex64::new(0.5, -0.4);
    let sup = superposition(&[(alpha, &a), (beta, &b)]).unwrap();
    let mean = position_expectation(&sup).unwrap();

    // brute-force quadrature of the analytic integrand
    let oracle = common::midpoint_quadrature(-15.0, 15.0, 60000, |x| {
        let pa = common::gaussian_sample(x, -0.7, 1.0, 0.8, 1.0);
        let pb = common::gaussian_sample(x, 0.7, -1.0, 0.8, 1.0);
        let chi = alpha * pa + beta * pb;
        x * chi.norm_sqr()
    }) / common::midpoint_quadrature(-15.0, 15.0, 60000, |x| {
        let pa = common::gaussian_sample(x, -0.7, 1.0, 0.8, 1.0);
        let pb = common::gaussian_sample(x, 0.7, -1.0, 0.8, 1.0);
        (alpha * pa + beta * pb).norm_sqr()
    });
    assert_close(mean[0], oracle, 1e-8, "superposition <x> vs quadrature");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Lattice translations shift `<x>` and leave central moments invariant.
    #[test]
    fn translation_covariance(cells in 1usize..40, sigma in 0.6f64..1.2) {
        let g = grid1(32.0, 256);
        let dx = g.spacing(0);
        let shift = cells as f64 * dx;
        let psi = gaussian_packet(g.clone(), Units::unit(), &[-3.0], &[0.7], &[sigma]).unwrap();
        let moved = gaussian_packet(g, Units::unit(), &[-3.0 + shift], &[0.7], &[sigma]).unwrap();
        let x_a = position_expectation(&psi).unwrap()[0];
        let x_b = position_expectation(&moved).unwrap()[0];
        prop_assert!((x_b - x_a - shift).abs() < 1e-9, "shift {} vs {}", x_b - x_a, shift);
        let fa = density(&psi).unwrap();
        let fb = density(&moved).unwrap();
        let sa = central_moments(&fa, &[x_a], 4).unwrap();
        let sb = central_moments(&fb, &[x_b], 4).unwrap();
        for (alpha, va) in &sa.density {
            let vb = sb.density_moment(alpha).unwrap();
            prop_assert!((va - vb).abs() < 1e-10, "moment {alpha:?}: {va} vs {vb}");
        }
    }

    /// The order-2 moment matrix is positive semidefinite for every state
    /// (validated inside `central_moments`).
    #[test]
    fn covariance_psd(x0 in -2.0f64..2.0, p0 in -2.0f64..2.0, s in 0.5f64..1.5) {
        let g = grid1(32.0, 128);
        let psi = gaussian_packet(g, Units::unit(), &[x0], &[p0], &[s]).unwrap();
        let f = density(&psi).unwrap();
        let mean = position_expectation(&psi).unwrap();
        prop_assert!(central_moments(&f, &mean, 2).is_ok());
    }
}
