//! Pilot-wave tests: velocity and quantum-potential fields against analytic
//! forms, guidance trajectories, equivariance of the flow, the Euler-type
//! residual and the momentum monopole relation.

mod common;

use std::sync::Arc;

use num_complex::Complex64;
use wavepacket::bohm::{
    density_weighted_seeds, euler_residual, integrate_bohm_trajectories,
    monopole_relation_check, pilot_fields, total_variation_vs_density, DEFAULT_NODE_EPS,
};
use wavepacket::dynamics::{evolve, EvolveConfig, TrajectoryRecord};
use wavepacket::grid::{Grid, Units, WaveFunction};
use wavepacket::moments::{density, multipoles_with_pairs};
use wavepacket::potential::Potential;
use wavepacket::states::{coherent_state, gaussian_packet, oscillator_eigenstate, superposition};

use common::{assert_close, FreeGaussianOracle};

fn grid1(l: f64, n: usize) -> Arc<Grid> {
    Arc::new(Grid::new(&[l], &[n]).unwrap())
}

#[test]
fn free_packet_velocity_field_matches_the_analytic_form() {
    let oracle = FreeGaussianOracle {
        x0: -2.0,
        p0: 1.5,
        sigma0: 1.0,
        mass: 1.0,
        hbar: 1.0,
    };
    let g = grid1(40.0, 512);
    let psi = gaussian_packet(g.clone(), Units::unit(), &[oracle.x0], &[oracle.p0], &[1.0])
        .unwrap();
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 1.5,
        save_stride: 500,
        snapshot_stride: 1,
    };
    let record = evolve(&psi, &Potential::Free, &cfg).unwrap();
    for (ti, snap) in &record.snapshots {
        let t = record.times[*ti];
        let fields = pilot_fields(snap, DEFAULT_NODE_EPS).unwrap();
        let xs = g.positions(0);
        let v = fields.velocity[0].as_slice().unwrap();
        let rho = density(snap).unwrap();
        let rho_s = rho.rho.as_slice().unwrap();
        let max_rho = rho_s.iter().copied().fold(0.0f64, f64::max);
        for (j, &x) in xs.iter().enumerate() {
            if rho_s[j] < 1e-6 * max_rho {
                continue;
            }
            let expect = oracle.velocity_field(x, t);
            assert!(
                (v[j] - expect).abs() < 1e-6,
                "v_B({x}, {t}) = {} vs {expect}",
                v[j]
            );
        }
    }
}

#[test]
fn quantum_potential_of_a_modulated_gaussian() {
    // symbolic oracle: for psi = G_sigma * e^{i p0 x}, the phase drops out of
    // rho and Q(x0) = hbar^2 / (4 m sigma^2)
    let (sigma, p0) = (0.8, 2.0);
    let g = grid1(30.0, 256);
    let psi = gaussian_packet(g.clone(), Units::unit(), &[0.5], &[p0], &[sigma]).unwrap();
    let fields = pilot_fields(&psi, DEFAULT_NODE_EPS).unwrap();
    let xs = g.positions(0);
    let j_center = xs
        .iter()
        .position(|x| (x - 0.5).abs() < 0.5 * g.spacing(0))
        .unwrap();
    let x = xs[j_center];
    // full field: Q(x) = -(1/2) [ (x-x0)^2/(4 sigma^4) - 1/(2 sigma^2) ]
    let expect = -0.5 * ((x - 0.5).powi(2) / (4.0 * sigma.powi(4)) - 1.0 / (2.0 * sigma * sigma));
    assert_close(
        fields.quantum_potential.as_slice().unwrap()[j_center],
        expect,
        1e-6,
        "Q at the packet centre",
    );
}

#[test]
fn stationary_state_trajectories_do_not_move() {
    let g = grid1(24.0, 256);
    let psi = oscillator_eigenstate(g, Units::unit(), 1.0, &[0]).unwrap();
    let v = Potential::Harmonic {
        mass: 1.0,
        omega: 1.0,
    };
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 0.5,
        save_stride: 50,
        snapshot_stride: 1,
    };
    let record = evolve(&psi, &v, &cfg).unwrap();
    let seeds = [-1.0, -0.3, 0.4, 1.2];
    let bundle = integrate_bohm_trajectories(&record, &seeds, DEFAULT_NODE_EPS).unwrap();
    for (s, &seed) in seeds.iter().enumerate() {
        for row in &bundle.positions {
            assert!(
                (row[s] - seed).abs() < 1e-7,
                "stationary trajectory moved: {} from {seed}",
                row[s]
            );
        }
    }
    assert_eq!(bundle.ordering_violations, 0);
}

#[test]
fn central_trajectory_of_a_free_packet_is_ballistic() {
    let g = grid1(40.0, 512);
    let psi = gaussian_packet(g, Units::unit(), &[-2.0], &[1.5], &[1.0]).unwrap();
    // the guidance field is interpolated linearly between snapshots, so the
    // snapshot spacing sets the trajectory accuracy
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 2.0,
        save_stride: 10,
        snapshot_stride: 1,
    };
    let record = evolve(&psi, &Potential::Free, &cfg).unwrap();
    let bundle = integrate_bohm_trajectories(&record, &[-2.0], DEFAULT_NODE_EPS).unwrap();
    for (i, &t) in bundle.times.iter().enumerate() {
        assert!(
            (bundle.positions[i][0] - (-2.0 + 1.5 * t)).abs() < 1e-5,
            "central trajectory at t={t}: {}",
            bundle.positions[i][0]
        );
    }
    assert!(bundle.truncated_at.iter().all(Option::is_none));
}

fn colliding_packets_record() -> (TrajectoryRecord, Arc<Grid>) {
    let g = grid1(40.0, 512);
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let a = gaussian_packet(g.clone(), Units::unit(), &[-4.0], &[2.0], &[0.7]).unwrap();
    let b = gaussian_packet(g.clone(), Units::unit(), &[4.0], &[-2.0], &[0.7]).unwrap();
    let cat = superposition(&[(c, &a), (c, &b)]).unwrap();
    // the guidance field steepens near the fringe minima; a 0.01 snapshot
    // spacing keeps the interpolated flow crossing-free
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 2.0,
        save_stride: 10,
        snapshot_stride: 1,
    };
    (evolve(&cat, &Potential::Free, &cfg).unwrap(), g)
}

#[test]
fn interference_flow_is_equivariant_and_noncrossing() {
    let (record, _g) = colliding_packets_record();
    let rho0 = density(&record.snapshots[0].1).unwrap();
    let seeds = density_weighted_seeds(&rho0, 10_000, None).unwrap();
    let bundle = integrate_bohm_trajectories(&record, &seeds, DEFAULT_NODE_EPS).unwrap();
    assert_eq!(bundle.ordering_violations, 0, "1-D trajectories crossed");
    let truncated = bundle.truncated_at.iter().filter(|t| t.is_some()).count();
    assert!(truncated < 50, "{truncated} trajectories truncated");
    let rho_final = density(record.final_state()).unwrap();
    let tv = total_variation_vs_density(bundle.final_positions(), &rho_final, 64);
    assert!(tv < 0.05, "equivariance TV distance {tv}");
}

#[test]
fn bright_fringe_occupancy_matches_the_final_density() {
    let (record, g) = colliding_packets_record();
    let rho0 = density(&record.snapshots[0].1).unwrap();
    // 100 uniform quantile seeds (inverse CDF at uniform levels)
    let seeds = density_weighted_seeds(&rho0, 100, None).unwrap();
    let bundle = integrate_bohm_trajectories(&record, &seeds, DEFAULT_NODE_EPS).unwrap();
    let rho_final = density(record.final_state()).unwrap();
    let rho_s = rho_final.rho.as_slice().unwrap();
    let max_rho = rho_s.iter().copied().fold(0.0f64, f64::max);
    // bright fringes: cells above half the peak density
    let bright: Vec<bool> = rho_s.iter().map(|r| *r > 0.5 * max_rho).collect();
    let bright_mass: f64 = rho_s
        .iter()
        .zip(&bright)
        .filter(|(_, b)| **b)
        .map(|(r, _)| r)
        .sum::<f64>()
        * g.spacing(0);
    let dx = g.spacing(0);
    let x0 = -0.5 * g.extents()[0];
    let in_bright = bundle
        .final_positions()
        .iter()
        .filter(|&&x| {
            let j = (((x - x0) / dx).round() as usize).min(bright.len() - 1);
            bright[j]
        })
        .count() as f64
        / 100.0;
    assert!(
        (in_bright - bright_mass).abs() < 0.05,
        "bright-fringe occupancy {in_bright} vs mass {bright_mass}"
    );
}

#[test]
fn euler_residual_is_small_and_second_order() {
    let g = grid1(40.0, 512);
    let psi = gaussian_packet(g, Units::unit(), &[-1.0], &[1.0], &[1.0]).unwrap();
    let run = |snapshot_stride: usize| -> f64 {
        let cfg = EvolveConfig {
            dt: 1e-3,
            t_final: 24e-3,
            save_stride: 1,
            snapshot_stride,
        };
        let record = evolve(&psi, &Potential::Free, &cfg).unwrap();
        let series = euler_residual(&record, &Potential::Free, 1e-6).unwrap();
        series.max_residual.iter().copied().fold(0.0, f64::max)
    };
    let fine = run(1); // differencing step 1e-3
    assert!(fine < 1e-4, "free-packet Euler residual {fine}");
    let coarse = run(2); // differencing step 2e-3
    let ratio = coarse / fine;
    assert!(
        (2.5..=5.5).contains(&ratio),
        "second-order decay violated: ratio {ratio} ({coarse:.3e}/{fine:.3e})"
    );
}

#[test]
fn euler_residual_for_a_coherent_state() {
    let g = grid1(32.0, 512);
    let psi = coherent_state(g, Units::unit(), 1.0, &[1.5], &[0.0]).unwrap();
    let v = Potential::Harmonic {
        mass: 1.0,
        omega: 1.0,
    };
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 12e-3,
        save_stride: 1,
        snapshot_stride: 1,
    };
    let record = evolve(&psi, &v, &cfg).unwrap();
    let series = euler_residual(&record, &v, 1e-6).unwrap();
    let max = series.max_residual.iter().copied().fold(0.0, f64::max);
    assert!(max < 1e-4, "coherent-state Euler residual {max}");
}

#[test]
fn monopole_relation_for_free_packets() {
    // at t = 0 the velocity field is uniform: the relation is exact with
    // all corrections zero
    let g = grid1(40.0, 512);
    let psi = gaussian_packet(g.clone(), Units::unit(), &[-2.0], &[1.0], &[1.0]).unwrap();
    let set = multipoles_with_pairs(&psi, 4, 0).unwrap();
    let rep = monopole_relation_check(&psi, &set, 4).unwrap();
    assert_close(rep.velocity_term[0], 1.0, 1e-8, "m v_B(x_c) at t=0");
    for r in &rep.remainders {
        assert!(*r < 1e-8, "t=0 remainder {r}");
    }

    // spread packet at t = 2 (hbar = m = sigma0 = 1): v_B is linear, the
    // dipole vanishes at the centre, so the relation holds at every order
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 2.0,
        save_stride: 2000,
        snapshot_stride: 1,
    };
    let record = evolve(&psi, &Potential::Free, &cfg).unwrap();
    let snap = record.final_state();
    let set = multipoles_with_pairs(snap, 4, 0).unwrap();
    let rep = monopole_relation_check(snap, &set, 4).unwrap();
    assert_close(rep.momentum[0], 1.0, 1e-8, "<p> at t=2");
    for (n, r) in rep.remainders.iter().enumerate() {
        assert!(*r < 1e-5, "order-{n} remainder {r}");
    }
    // remainders non-increasing in the truncation order, up to the
    // high-order spectral point-derivative noise floor
    for w in rep.remainders.windows(2) {
        assert!(w[1] <= w[0] + 1e-7, "remainders not monotone: {:?}", rep.remainders);
    }
}

#[test]
fn monopole_relation_remainder_decreases_for_an_asymmetric_state() {
    // weak first-excited admixture on a coherent state: a nonlinear velocity
    // field whose Taylor series still converges over the packet width. A
    // strong admixture pulls near-nodes of psi (poles of v_B) inside the
    // packet and the series turns asymptotic, so the weight stays small.
    let g = grid1(32.0, 512);
    let a = coherent_state(g.clone(), Units::unit(), 1.0, &[1.0], &[0.0]).unwrap();
    let b = oscillator_eigenstate(g.clone(), Units::unit(), 1.0, &[1]).unwrap();
    let chi = superposition(&[
        (Complex64::new(0.95, 0.0), &a),
        (Complex64::new(0.10, 0.10), &b),
    ])
    .unwrap();
    let v = Potential::Harmonic {
        mass: 1.0,
        omega: 1.0,
    };
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 3.1,
        save_stride: 3100,
        snapshot_stride: 1,
    };
    let record = evolve(&chi, &v, &cfg).unwrap();
    let snap = record.final_state();
    let set = multipoles_with_pairs(snap, 4, 0).unwrap();
    let rep = monopole_relation_check(snap, &set, 4).unwrap();
    // the order-4 series recovers most of the velocity-term discrepancy
    assert!(
        rep.remainders[4] < 0.1 * rep.remainders[0],
        "series failed to converge: {:?}",
        rep.remainders
    );
    // non-increasing over orders 1..4 (odd orders move little; 2% slack)
    for w in rep.remainders.windows(2) {
        assert!(
            w[1] <= w[0] * 1.02 + 1e-12,
            "remainders not monotone over orders: {:?}",
            rep.remainders
        );
    }
}

#[test]
fn ratio_and_log_derivative_forms_of_the_velocity_agree() {
    // j / (m rho) against (hbar/m) Im(psi'/psi), the two spellings of the
    // guidance field
    let g = grid1(30.0, 256);
    let psi = gaussian_packet(g.clone(), Units::unit(), &[0.3], &[1.2], &[0.8]).unwrap();
    let fields = pilot_fields(&psi, DEFAULT_NODE_EPS).unwrap();
    let grad = psi.spectral_gradient(0).unwrap();
    let v = fields.velocity[0].as_slice().unwrap();
    let rho = density(&psi).unwrap();
    let rho_s = rho.rho.as_slice().unwrap();
    let max_rho = rho_s.iter().copied().fold(0.0f64, f64::max);
    for (j, z) in psi.amplitudes().iter().enumerate() {
        if rho_s[j] < 1e-8 * max_rho {
            continue;
        }
        let log_form = (grad.as_slice().unwrap()[j] / z).im;
        assert!(
            (v[j] - log_form).abs() < 1e-10,
            "velocity forms disagree at cell {j}: {} vs {log_form}",
            v[j]
        );
    }
}

#[test]
fn trajectory_entering_a_node_is_truncated_not_fatal() {
    // an eigenstate with a fixed node at the origin: a seed placed just off
    // the node face must stop there while others continue
    let g = grid1(24.0, 256);
    let psi = oscillator_eigenstate(g, Units::unit(), 1.0, &[1]).unwrap();
    let v = Potential::Harmonic {
        mass: 1.0,
        omega: 1.0,
    };
    let cfg = EvolveConfig {
        dt: 1e-3,
        t_final: 0.2,
        save_stride: 20,
        snapshot_stride: 1,
    };
    let record = evolve(&psi, &v, &cfg).unwrap();
    // the node sits exactly at x = 0; a seed on it is rejected up front
    let err = integrate_bohm_trajectories(&record, &[0.0], DEFAULT_NODE_EPS);
    assert!(err.is_err(), "seed on the node must be rejected");
    let bundle = integrate_bohm_trajectories(&record, &[-1.0, 1.0], DEFAULT_NODE_EPS).unwrap();
    assert!(bundle.truncated_at.iter().all(Option::is_none));
}
