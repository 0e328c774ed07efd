//! Effective Newton-like dynamics against oracles: the analytic oscillator,
//! a symbolic expansion of the corrected quartic force, order monotonicity
//! with record-fed moments, and the coupled two-body system.

mod common;

use std::sync::Arc;

use wavepacket::dynamics::{evolve, EvolveConfig};
use wavepacket::effective::{
    compare_trajectories, effective_force, integrate_effective, integrate_two_body,
    two_body_force, MomentSeries, MultipoleSource, TwoBodyMomentSeries, TwoBodySource,
};
use wavepacket::grid::{Grid, Units};
use wavepacket::moments::two_body_central_moments;
use wavepacket::potential::Potential;
use wavepacket::states::{coherent_state, gaussian_packet, two_particle_product};

use common::assert_close;

fn grid1(l: f64, n: usize) -> Arc<Grid> {
    Arc::new(Grid::new(&[l], &[n]).unwrap())
}

/// Tiny symbolic polynomial differentiator, independent of the library:
/// coefficients of `V = sum c_k x^k`.
#[derive(Clone)]
struct Poly(Vec<f64>);

impl Poly {
    fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    fn nth_derivative(&self, n: usize) -> Poly {
        let mut p = self.clone();
        for _ in 0..n {
            p = p.derivative();
        }
        p
    }

    fn eval(&self, x: f64) -> f64 {
        self.0
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c)
    }
}

#[test]
fn corrected_force_matches_symbolic_expansion() {
    // F = -V' - sum_{n=2..N} rho_n / n! * V^{(n+1)}, evaluated symbolically
    let lambda = 0.17;
    let poly = Poly(vec![0.0, 0.0, 0.0, 0.0, lambda]); // lambda x^4
    let rho = [0.0, 0.0, 0.83, -0.21, 0.64]; // rho_0..rho_4 (rho_0 unused here)
    let x = 0.9;
    let mut expected = -poly.nth_derivative(1).eval(x);
    let mut fact = 1.0;
    for n in 2..=4usize {
        fact *= n as f64;
        expected -= rho[n] / fact * poly.nth_derivative(n + 1).eval(x);
    }

    let mut density = std::collections::BTreeMap::new();
    density.insert(wavepacket::MultiIndex(vec![0]), 1.0);
    density.insert(wavepacket::MultiIndex(vec![1]), 0.0);
    for n in 2..=4usize {
        density.insert(wavepacket::MultiIndex(vec![n as u8]), rho[n]);
    }
    let set = wavepacket::moments::MultipoleSet {
        center: vec![0.0],
        order: 4,
        density,
        momentum: Default::default(),
        pairs: Default::default(),
    };
    let v = Potential::Quartic { lambda };
    let f = effective_force(&[x], &v, Some(&set), 4).unwrap()[0];
    assert_close(f, expected, 1e-13, "symbolic quartic force");
}

#[test]
fn harmonic_effective_trajectory_is_cosine() {
    let v = Potential::Harmonic {
        mass: 1.0,
        omega: 1.0,
    };
    let t_grid: Vec<f64> = (0..=600).map(|i| i as f64 * 0.01).collect();
    let traj = integrate_effective(
        &[1.0],
        &[0.0],
        1.0,
        &v,
        &MultipoleSource::Bare,
        1,
        &t_grid,
        1e-3,
    )
    .unwrap();
    for (i, t) in traj.times.iter().enumerate() {
        assert_close(traj.x[i][0], t.cos(), 1e-8, &format!("cos at t={t}"));
    }
}

#[test]
fn bare_newton_conserves_energy_on_the_quartic() {
    let v = Potential::Quartic { lambda: 0.1 };
    let t_grid: Vec<f64> = (0..=500).map(|i| i as f64 * 0.01).collect();
    let traj = integrate_effective(
        &[1.0],
        &[0.3],
        1.0,
        &v,
        &MultipoleSource::Bare,
        1,
        &t_grid,
        1e-3,
    )
    .unwrap();
    let energy = |x: f64, vel: f64| 0.5 * vel * vel + 0.1 * x.powi(4);
    let e0 = energy(traj.x[0][0], traj.v[0][0]);
    for i in 0..traj.times.len() {
        let e = energy(traj.x[i][0], traj.v[i][0]);
        assert!(
            ((e - e0) / e0).abs() < 1e-8,
            "energy drift {} at step {i}",
            ((e - e0) / e0).abs()
        );
    }
}

/// Quartic packet comparison: the effective run with record-fed moments at
/// order >= 3 tracks `<x>(t)` far better than bare Newton, and the error is
/// non-increasing in the truncation order.
#[test]
fn record_fed_moments_close_the_quartic_ehrenfest_gap() {
    let g = grid1(20.0, 512);
    let psi = gaussian_packet(g, Units::unit(), &[1.0], &[0.0], &[0.5]).unwrap();
    let v = Potential::Quartic { lambda: 0.1 };
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 5.0,
        save_stride: 10,
        snapshot_stride: 5,
    };
    let record = evolve(&psi, &v, &cfg).unwrap();
    let series = MomentSeries::from_record(&record, 4).unwrap();
    let x0 = record.x_mean[0].clone();
    let v0 = vec![record.p_mean[0][0] / 1.0];

    let mut rms = Vec::new();
    for order in 1..=4usize {
        let source = if order == 1 {
            MultipoleSource::Bare
        } else {
            MultipoleSource::Interpolated(&series)
        };
        let traj =
            integrate_effective(&x0, &v0, 1.0, &v, &source, order, &record.times, 1e-3).unwrap();
        let metrics =
            compare_trajectories(&record.times, &record.x_mean, &traj, 1.0, 1.0, 0.1).unwrap();
        rms.push(metrics.rms_position_error);
    }
    // monotone non-increasing in the truncation order
    for w in rms.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-9),
            "rms not monotone: {:?}",
            rms
        );
    }
    // order 4 error at most a fifth of bare Newton
    assert!(
        rms[3] <= 0.2 * rms[0],
        "insufficient improvement: order-4 rms {} vs bare {}",
        rms[3],
        rms[0]
    );
    // orders 3 and 4 coincide for a pure quartic (the fifth derivative is 0)
    assert!((rms[2] - rms[3]).abs() < 1e-12);
}

#[test]
fn frozen_moments_are_a_closed_predictive_model() {
    // frozen initial moments still beat bare Newton early on
    let g = grid1(20.0, 512);
    let psi = gaussian_packet(g, Units::unit(), &[1.0], &[0.0], &[0.5]).unwrap();
    let v = Potential::Quartic { lambda: 0.1 };
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 1.5,
        save_stride: 10,
        snapshot_stride: 5,
    };
    let record = evolve(&psi, &v, &cfg).unwrap();
    let series = MomentSeries::from_record(&record, 4).unwrap();
    let frozen = series.sets[0].clone();
    let x0 = record.x_mean[0].clone();
    let v0 = vec![record.p_mean[0][0]];
    let bare = integrate_effective(
        &x0,
        &v0,
        1.0,
        &v,
        &MultipoleSource::Bare,
        1,
        &record.times,
        1e-3,
    )
    .unwrap();
    let pred = integrate_effective(
        &x0,
        &v0,
        1.0,
        &v,
        &MultipoleSource::Frozen(&frozen),
        4,
        &record.times,
        1e-3,
    )
    .unwrap();
    let m_bare = compare_trajectories(&record.times, &record.x_mean, &bare, 1.0, 1.0, 0.1).unwrap();
    let m_pred = compare_trajectories(&record.times, &record.x_mean, &pred, 1.0, 1.0, 0.1).unwrap();
    assert!(
        m_pred.rms_position_error < m_bare.rms_position_error,
        "frozen-moment model should improve on bare Newton over a short window: {} vs {}",
        m_pred.rms_position_error,
        m_bare.rms_position_error
    );
}

#[test]
fn identical_trajectories_compare_to_zero() {
    let v = Potential::Free;
    let t: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    let traj = integrate_effective(
        &[0.0],
        &[2.0],
        1.0,
        &v,
        &MultipoleSource::Bare,
        1,
        &t,
        1e-2,
    )
    .unwrap();
    let metrics = compare_trajectories(&traj.times, &traj.x, &traj, 1.0, 1.0, 0.5).unwrap();
    assert_eq!(metrics.max_position_error, 0.0);
    assert_eq!(metrics.rms_position_error, 0.0);
    assert!(metrics.horizon.is_none());
    assert!(metrics.rms_position_error <= metrics.max_position_error);
}

#[test]
fn quartic_order4_horizon_is_longer_than_bare() {
    let g = grid1(20.0, 512);
    let psi = gaussian_packet(g, Units::unit(), &[1.0], &[0.0], &[0.5]).unwrap();
    let v = Potential::Quartic { lambda: 0.1 };
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 5.0,
        save_stride: 10,
        snapshot_stride: 5,
    };
    let record = evolve(&psi, &v, &cfg).unwrap();
    let series = MomentSeries::from_record(&record, 4).unwrap();
    let x0 = record.x_mean[0].clone();
    let v0 = vec![record.p_mean[0][0]];
    let threshold = 0.02;
    let bare = integrate_effective(
        &x0,
        &v0,
        1.0,
        &v,
        &MultipoleSource::Bare,
        1,
        &record.times,
        1e-3,
    )
    .unwrap();
    let corrected = integrate_effective(
        &x0,
        &v0,
        1.0,
        &v,
        &MultipoleSource::Interpolated(&series),
        4,
        &record.times,
        1e-3,
    )
    .unwrap();
    let m_bare =
        compare_trajectories(&record.times, &record.x_mean, &bare, 1.0, 1.0, threshold).unwrap();
    let m_corr = compare_trajectories(&record.times, &record.x_mean, &corrected, 1.0, 1.0, threshold)
        .unwrap();
    let h_bare = m_bare.horizon.expect("bare Newton exceeds the threshold");
    match m_corr.horizon {
        None => {}
        Some(h) => assert!(h > h_bare, "corrected horizon {h} vs bare {h_bare}"),
    }
}

#[test]
fn two_body_spring_reproduces_classical_dynamics() {
    // product of coherent states in a pure spring: a quadratic potential, so
    // the quantum expectations follow the classical two-body solution; the
    // free centre of mass spreads, so the box must stay several sigma wide
    let g = grid1(32.0, 256);
    let omega_s = 1.0; // spring constant k = m omega^2 with m = 1
    let spring = Potential::Harmonic {
        mass: 1.0,
        omega: omega_s,
    };
    let v2 = Potential::two_body(spring, None, None).unwrap();
    let a = coherent_state(g.clone(), Units::unit(), 2.0, &[-1.0], &[0.0]).unwrap();
    let b = coherent_state(g, Units::unit(), 2.0, &[1.0], &[0.0]).unwrap();
    let product = two_particle_product(&a, &b).unwrap();
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 4.0,
        save_stride: 40,
        snapshot_stride: 1,
    };
    let record = evolve(&product, &v2, &cfg).unwrap();

    // analytic: CM at rest, relative coordinate s(t) = s0 cos(omega_rel t),
    // omega_rel = sqrt(k/mu) = sqrt(2) omega_s for equal unit masses
    let omega_rel = omega_s * 2.0f64.sqrt();
    for (i, &t) in record.times.iter().enumerate() {
        let s = 2.0 * (omega_rel * t).cos();
        assert_close(record.x_mean[i][0], -0.5 * s, 1e-5, &format!("x1 at t={t}"));
        assert_close(record.x_mean[i][1], 0.5 * s, 1e-5, &format!("x2 at t={t}"));
    }

    // the effective two-body integrator agrees at order 1 (bare Newton is
    // already exact for a quadratic potential) ...
    let bare = integrate_two_body(
        [-1.0, 1.0],
        [0.0, 0.0],
        [1.0, 1.0],
        &v2,
        &TwoBodySource::Bare,
        1,
        &record.times,
        1e-3,
        1e-6,
    )
    .unwrap();
    for (i, &t) in bare.times.iter().enumerate() {
        let s = 2.0 * (omega_rel * t).cos();
        assert_close(bare.x[i][0], -0.5 * s, 1e-8, &format!("effective x1 at t={t}"));
    }
    // ... and order-2 corrections change nothing (cubic derivatives vanish).
    // The spreading centre of mass builds up a large position covariance
    // (var_X grows freely while the relative spread stays bound), so the
    // cross-dipole bound is relaxed: every term it would multiply is zero
    // for a quadratic potential, and the assertion below checks exactly that.
    let series = TwoBodyMomentSeries::from_record(&record, 2).unwrap();
    let corrected = integrate_two_body(
        [-1.0, 1.0],
        [0.0, 0.0],
        [1.0, 1.0],
        &v2,
        &TwoBodySource::Interpolated(&series),
        2,
        &record.times,
        1e-3,
        20.0,
    )
    .unwrap();
    for i in 0..bare.times.len() {
        assert!(
            (bare.x[i][0] - corrected.x[i][0]).abs() < 1e-12,
            "quadratic corrections must vanish"
        );
    }
}

#[test]
fn decoupled_two_body_matches_single_particle_runs() {
    let g = grid1(16.0, 128);
    let ext = Potential::Harmonic {
        mass: 1.0,
        omega: 1.0,
    };
    let v2 = Potential::two_body(
        Potential::Free,
        Some(ext.clone()),
        Some(ext.clone()),
    )
    .unwrap();
    let a = coherent_state(g.clone(), Units::unit(), 1.0, &[-1.0], &[0.0]).unwrap();
    let b = coherent_state(g.clone(), Units::unit(), 1.0, &[0.5], &[0.0]).unwrap();
    let product = two_particle_product(&a, &b).unwrap();
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 2.0,
        save_stride: 100,
        snapshot_stride: 1,
    };
    let record2 = evolve(&product, &v2, &cfg).unwrap();
    let r_a = evolve(&a, &ext, &cfg).unwrap();
    let r_b = evolve(&b, &ext, &cfg).unwrap();
    for (i, _) in record2.times.iter().enumerate() {
        assert!(
            (record2.x_mean[i][0] - r_a.x_mean[i][0]).abs() < 1e-10,
            "particle 1 deviates: {} vs {}",
            record2.x_mean[i][0],
            r_a.x_mean[i][0]
        );
        assert!(
            (record2.x_mean[i][1] - r_b.x_mean[i][0]).abs() < 1e-10,
            "particle 2 deviates"
        );
    }
}

#[test]
fn two_body_quartic_force_matches_symbolic_oracle() {
    // V12 = lambda (x1 - x2)^4 with double moments: expansion evaluated
    // symbolically through d^{n+m+1} V12 = lambda (-1)^m 4!/(3-n-m)! s^(3-n-m)
    let lambda = 0.2;
    let v12 = Potential::Quartic { lambda };
    let v2 = Potential::two_body(v12, None, None).unwrap();
    let (x1, x2) = (0.8, -0.3);
    let s: f64 = x1 - x2;
    let moments = {
        let g = grid1(16.0, 128);
        let a = gaussian_packet(g.clone(), Units::unit(), &[0.8], &[0.0], &[0.5]).unwrap();
        let b = gaussian_packet(g, Units::unit(), &[-0.3], &[0.0], &[0.7]).unwrap();
        let p = two_particle_product(&a, &b).unwrap();
        two_body_central_moments(&p, [0.8, -0.3], 4).unwrap()
    };
    let (f1, f2) = two_body_force(x1, x2, &v2, Some(&moments), 4, 1e-6).unwrap();

    // oracle: direct sum over (n, m) with n + m >= 2, (1,1) excluded
    let d_v12 = |order: usize, s: f64| -> f64 {
        match order {
            0 => lambda * s.powi(4),
            1 => 4.0 * lambda * s.powi(3),
            2 => 12.0 * lambda * s.powi(2),
            3 => 24.0 * lambda * s,
            4 => 24.0 * lambda,
            _ => 0.0,
        }
    };
    let fact = |n: usize| -> f64 { (1..=n).map(|k| k as f64).product::<f64>().max(1.0) };
    let mut expect1 = -d_v12(1, s);
    let mut expect2 = d_v12(1, s);
    for n in 0..=4usize {
        for m in 0..=4usize {
            if n + m < 2 || n + m > 4 || (n == 1 && m == 1) {
                continue;
            }
            let rho = moments.get(n, m);
            let w = rho / (fact(n) * fact(m));
            // d/dx1 then n, m more: sign (-1)^m, total order n + m + 1
            let sign_m = if m % 2 == 0 { 1.0 } else { -1.0 };
            expect1 -= w * sign_m * d_v12(n + m + 1, s);
            // d/dx2 brings one more (-1)
            expect2 += w * sign_m * d_v12(n + m + 1, s);
        }
    }
    assert_close(f1, expect1, 1e-12, "two-body F1 vs oracle");
    assert_close(f2, expect2, 1e-12, "two-body F2 vs oracle");
}

#[test]
fn small_velocity_momentum_relation_is_reduced_mass() {
    // series oracle: pi = (m/2) v (1 + v^2/(8 c^2) + ...)
    let (m, c) = (1.0, 10.0);
    for v in [0.01, 0.1, 0.5] {
        let pi = wavepacket::effective::relativistic_relative_momentum(v, m, c).unwrap();
        let mu_v = 0.5 * m * v;
        assert!(
            (pi - mu_v).abs() <= mu_v * (v / c).powi(2),
            "small-v expansion violated at v={v}: pi={pi}, mu v={mu_v}"
        );
    }
}
