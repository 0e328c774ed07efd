//! Executes a validated scenario: shared evolve stage, then each requested
//! analysis with per-stage failure isolation, CSV/binary artifacts, a
//! human-readable report and a content-hash manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::Digest;

use wavepacket::bohm;
use wavepacket::classifier;
use wavepacket::dynamics::{self, EvolveConfig, RelativisticConfig, TrajectoryRecord};
use wavepacket::effective;
use wavepacket::io;
use wavepacket::mixtures;
use wavepacket::moments;
use wavepacket::potential::Potential;
use wavepacket::wigner;

use crate::scenario::{
    build, build_initial, AnalysisSpec, InitialSpec, MixtureComponentSpec, Mode, Scenario,
};

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub failures: Vec<String>,
    pub report: String,
}

struct Report {
    lines: Vec<String>,
    failures: Vec<String>,
}

impl Report {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn pass(&mut self, stage: &str, detail: &str) {
        self.lines.push(format!("analysis {stage}: PASS {detail}"));
    }

    fn fail(&mut self, stage: &str, err: &dyn std::fmt::Display) {
        self.lines.push(format!("analysis {stage}: FAIL {err}"));
        self.failures.push(format!("{stage}: {err}"));
    }
}

fn write_file(files: &mut BTreeMap<String, Vec<u8>>, name: &str, content: Vec<u8>) {
    files.insert(name.to_string(), content);
}

/// Run a scenario into `out_dir` (created; must not already contain a
/// manifest). Deterministic for a fixed seed and thread count.
pub fn run_scenario(
    scenario: &Scenario,
    out_dir: &Path,
    seed_override: Option<u64>,
    tol_scale: f64,
) -> wavepacket::Result<RunOutcome> {
    let seed = seed_override.unwrap_or(scenario.seed);
    let tol_dipole = scenario.tolerances.dipole * tol_scale;
    let tol_ehrenfest = scenario.tolerances.ehrenfest * tol_scale;

    let (_grid, units, potential, psi0) = build(scenario)?;
    let cfg = EvolveConfig {
        dt: scenario.integrator.dt,
        t_final: scenario.integrator.t_final,
        save_stride: scenario.integrator.save_stride,
        snapshot_stride: scenario.integrator.snapshot_stride,
    };

    let mut record = match scenario.mode {
        Mode::NonRelativistic => dynamics::evolve(&psi0, &potential, &cfg)?,
        Mode::RelativisticRelative => {
            let rel = RelativisticConfig {
                m1: units.masses[0],
                m2: units.masses[1],
                c: units.c.expect("validated"),
                subtract_rest_energy: scenario.integrator.subtract_rest_energy,
            };
            let v = match &potential {
                Potential::Free => None,
                other => Some(other),
            };
            dynamics::evolve_relativistic(&psi0, &rel, v, &cfg)?
        }
    };
    record.scenario_hash = Some(scenario.hash.clone());

    let mut report = Report {
        lines: Vec::new(),
        failures: Vec::new(),
    };
    report.line(format!("scenario: {}", scenario.name));
    report.line(format!("hash: {}", scenario.hash));
    report.line(format!("seed: {seed}"));
    report.line(format!(
        "mode: {}",
        match scenario.mode {
            Mode::NonRelativistic => "nonrelativistic",
            Mode::RelativisticRelative => "relativistic_relative",
        }
    ));
    report.line(format!("saved_times: {}", record.times.len()));
    report.line(format!("norm_drift: {:e}", record.norm_drift));
    report.line(format!("boundary_max_density: {:e}", record.boundary_max));
    if record.boundary_max > wavepacket::grid::BOUNDARY_WARN {
        report.line(format!(
            "warning: boundary density {:e} exceeds {:e}",
            record.boundary_max,
            wavepacket::grid::BOUNDARY_WARN
        ));
    }

    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    write_file(
        &mut files,
        "expectations.csv",
        io::expectations_csv(&record).into_bytes(),
    );
    let meta = io::RecordMeta::from_record(&record);
    write_file(
        &mut files,
        "meta.json",
        serde_json::to_string_pretty(&meta)
            .map_err(|e| wavepacket::Error::Other(e.to_string()))?
            .into_bytes(),
    );

    for analysis in &scenario.analyses {
        match analysis {
            AnalysisSpec::Classify => {
                match classifier::emwf_check(&record, &potential, tol_dipole, tol_ehrenfest) {
                    Ok(rep) => {
                        write_file(
                            &mut files,
                            "classification.txt",
                            rep.to_text().into_bytes(),
                        );
                        write_file(
                            &mut files,
                            "residuals.csv",
                            rep.residuals_csv().into_bytes(),
                        );
                        report.pass(
                            "classify",
                            &format!(
                                "verdict={} max_dipole={:e} max_res1={:e} max_res2={:e}",
                                rep.verdict, rep.audit.max_dipole, rep.max_res1, rep.max_res2
                            ),
                        );
                    }
                    Err(e) => report.fail("classify", &e),
                }
            }
            AnalysisSpec::Moments { order } => {
                let result = (|| -> wavepacket::Result<String> {
                    let series = effective::MomentSeries::from_record(&record, *order)?;
                    Ok(moments::moments_csv(&series.times, &series.sets))
                })();
                match result {
                    Ok(csv) => {
                        write_file(&mut files, "moments.csv", csv.into_bytes());
                        report.pass("moments", &format!("order={order}"));
                    }
                    Err(e) => report.fail("moments", &e),
                }
            }
            AnalysisSpec::Effective {
                orders,
                source,
                horizon_threshold,
            } => match run_effective(
                &record,
                &potential,
                &units,
                orders,
                source,
                *horizon_threshold,
                &mut files,
            ) {
                Ok(summary) => report.pass("effective", &summary),
                Err(e) => report.fail("effective", &e),
            },
            AnalysisSpec::Wigner { downsample } => {
                let result = (|| -> wavepacket::Result<String> {
                    let snap = record.final_state();
                    let w = wigner::wigner_transform(snap)?;
                    let (rho_x, _rho_p) = w.marginals();
                    let mut marg_dev = 0.0f64;
                    for (r, z) in rho_x.iter().zip(snap.amplitudes().iter()) {
                        marg_dev = marg_dev.max((r - z.norm_sqr()).abs());
                    }
                    write_file(&mut files, "wigner.csv", w.csv(*downsample).into_bytes());
                    if w.dims() == 1 {
                        let tmp = std::env::temp_dir().join(format!(
                            "wigner_{}_{}.bin",
                            std::process::id(),
                            scenario.name
                        ));
                        io::write_wigner(&tmp, &w)?;
                        let bytes = fs::read(&tmp)?;
                        fs::remove_file(&tmp).ok();
                        write_file(&mut files, "wigner.bin", bytes);
                    }
                    Ok(format!(
                        "normalization={:.6} purity={:.6} min={:.4} marginal_dev={:e}",
                        w.normalization(),
                        w.purity(),
                        w.min_value(),
                        marg_dev
                    ))
                })();
                match result {
                    Ok(summary) => report.pass("wigner", &summary),
                    Err(e) => report.fail("wigner", &e),
                }
            }
            AnalysisSpec::Bohm {
                seeds,
                seeding,
                region,
            } => {
                let result = (|| -> wavepacket::Result<String> {
                    let rho0 = moments::density(&record.snapshots[0].1)?;
                    let seed_positions = match seeding.as_str() {
                        "uniform" => {
                            let (a, b) = region.expect("validated");
                            bohm::uniform_seeds(a, b, *seeds)
                        }
                        _ => bohm::density_weighted_seeds(&rho0, *seeds, Some(seed))?,
                    };
                    let bundle = bohm::integrate_bohm_trajectories(
                        &record,
                        &seed_positions,
                        bohm::DEFAULT_NODE_EPS,
                    )?;
                    write_file(
                        &mut files,
                        "bohm_trajectories.csv",
                        bundle.csv().into_bytes(),
                    );
                    let rho_final = moments::density(record.final_state())?;
                    let tv = bohm::total_variation_vs_density(
                        bundle.final_positions(),
                        &rho_final,
                        64,
                    );
                    let truncated =
                        bundle.truncated_at.iter().filter(|t| t.is_some()).count();
                    Ok(format!(
                        "seeds={} tv_distance={:.4} truncated={} ordering_violations={} stride_warning={}",
                        seeds, tv, truncated, bundle.ordering_violations, bundle.stride_warning
                    ))
                })();
                match result {
                    Ok(summary) => report.pass("bohm", &summary),
                    Err(e) => report.fail("bohm", &e),
                }
            }
            AnalysisSpec::Mixture { components } => {
                match run_mixture(
                    scenario,
                    components,
                    &potential,
                    &cfg,
                    tol_dipole,
                    tol_ehrenfest,
                    &mut files,
                ) {
                    Ok(summary) => report.pass("mixture", &summary),
                    Err(e) => report.fail("mixture", &e),
                }
            }
            AnalysisSpec::Relativistic => {
                let drift = record
                    .p_mean
                    .iter()
                    .map(|p| (p[0] - record.p_mean[0][0]).abs())
                    .fold(0.0f64, f64::max);
                let mut detail = format!("momentum_drift={drift:e}");
                if (units.masses[0] - units.masses[1]).abs() < 1e-12 {
                    let c = units.c.expect("validated");
                    let pi0 = record.p_mean[0][0];
                    let v = effective::relativistic_relative_velocity(
                        pi0,
                        units.masses[0],
                        units.masses[1],
                        c,
                    );
                    match effective::relativistic_relative_momentum(v, units.masses[0], c) {
                        Ok(back) => {
                            let _ = write!(detail, " round_trip_error={:e}", (back - pi0).abs());
                        }
                        Err(e) => {
                            let _ = write!(detail, " round_trip_error=({e})");
                        }
                    }
                }
                report.pass("relativistic", &detail);
            }
        }
    }

    // write everything: per-file then snapshots, manifest last
    fs::create_dir_all(out_dir)?;
    for (name, bytes) in &files {
        fs::write(out_dir.join(name), bytes)?;
    }
    if scenario.dump_snapshots {
        let snap_dir = out_dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        for (ti, snap) in &record.snapshots {
            let name = format!("snapshots/snap_{ti:06}.bin");
            io::write_snapshot(&out_dir.join(&name), snap)?;
            let bytes = fs::read(out_dir.join(&name))?;
            files.insert(name, bytes);
        }
    }

    let status = if report.failures.is_empty() {
        "ok"
    } else {
        "failed"
    };
    report.line(format!("status: {status}"));
    let report_text = report.lines.join("\n") + "\n";
    fs::write(out_dir.join("report.txt"), &report_text)?;

    let mut manifest = String::from("{\n  \"files\": {\n");
    let mut entries: Vec<String> = Vec::new();
    let mut hash_input: Vec<(String, Vec<u8>)> =
        files.into_iter().collect();
    hash_input.push(("report.txt".into(), report_text.clone().into_bytes()));
    hash_input.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, bytes) in &hash_input {
        let digest = sha2::Sha256::digest(bytes);
        entries.push(format!(
            "    \"{name}\": {{ \"sha256\": \"{digest:x}\", \"bytes\": {} }}",
            bytes.len()
        ));
    }
    manifest.push_str(&entries.join(",\n"));
    manifest.push_str("\n  }\n}\n");
    fs::write(out_dir.join("manifest.json"), manifest)?;

    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        failures: report.failures,
        report: report_text,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_effective(
    record: &TrajectoryRecord,
    potential: &Potential,
    units: &wavepacket::grid::Units,
    orders: &[usize],
    source: &str,
    horizon_threshold: f64,
    files: &mut BTreeMap<String, Vec<u8>>,
) -> wavepacket::Result<String> {
    let two_body = matches!(potential, Potential::TwoBody { .. });
    let max_order = orders.iter().copied().max().unwrap_or(1);
    let mut summary = String::new();
    if two_body {
        let series = effective::TwoBodyMomentSeries::from_record(record, max_order.max(1))?;
        let frozen = series.sets[0].clone();
        for order in orders {
            let src = if *order == 1 {
                effective::TwoBodySource::Bare
            } else if source == "frozen" {
                effective::TwoBodySource::Frozen(&frozen)
            } else {
                effective::TwoBodySource::Interpolated(&series)
            };
            let traj = effective::integrate_two_body(
                [record.x_mean[0][0], record.x_mean[0][1]],
                [
                    record.p_mean[0][0] / units.masses[0],
                    record.p_mean[0][1] / units.masses[1],
                ],
                [units.masses[0], units.masses[1]],
                potential,
                &src,
                *order,
                &record.times,
                1e-3,
                1e-6,
            )?;
            let metrics = effective::compare_trajectories(
                &record.times,
                &record.x_mean,
                &traj,
                units.hbar,
                1.0,
                horizon_threshold,
            )?;
            let _ = write!(
                summary,
                "rms[N={order}]={:e} max[N={order}]={:e} ",
                metrics.rms_position_error, metrics.max_position_error
            );
            write_file(
                files,
                &format!("classical_order{order}.csv"),
                traj.csv().into_bytes(),
            );
        }
    } else {
        let series = effective::MomentSeries::from_record(record, max_order.max(2))?;
        let frozen = series.sets[0].clone();
        let x0 = record.x_mean[0].clone();
        let mass = units.masses[0];
        let v0: Vec<f64> = record.p_mean[0].iter().map(|p| p / mass).collect();
        for order in orders {
            let src = if *order == 1 {
                effective::MultipoleSource::Bare
            } else if source == "frozen" {
                effective::MultipoleSource::Frozen(&frozen)
            } else {
                effective::MultipoleSource::Interpolated(&series)
            };
            let traj = effective::integrate_effective(
                &x0,
                &v0,
                mass,
                potential,
                &src,
                *order,
                &record.times,
                1e-3,
            )?;
            let metrics = effective::compare_trajectories(
                &record.times,
                &record.x_mean,
                &traj,
                units.hbar,
                1.0,
                horizon_threshold,
            )?;
            let _ = write!(
                summary,
                "rms[N={order}]={:e} max[N={order}]={:e} ",
                metrics.rms_position_error, metrics.max_position_error
            );
            write_file(
                files,
                &format!("classical_order{order}.csv"),
                traj.csv().into_bytes(),
            );
        }
    }
    Ok(summary.trim_end().to_string())
}

fn run_mixture(
    scenario: &Scenario,
    components: &[MixtureComponentSpec],
    potential: &Potential,
    cfg: &EvolveConfig,
    tol_dipole: f64,
    tol_ehrenfest: f64,
    files: &mut BTreeMap<String, Vec<u8>>,
) -> wavepacket::Result<String> {
    let grid = std::sync::Arc::new(wavepacket::Grid::new(
        &scenario.grid.extents,
        &scenario.grid.points,
    )?);
    let units = wavepacket::Units {
        hbar: scenario.units.hbar,
        masses: scenario.units.masses.clone(),
        c: scenario.units.c,
    };
    let mut built = Vec::new();
    for comp in components {
        let (weight, spec) = match comp {
            MixtureComponentSpec::Product { weight, x, p, omega } => (
                *weight,
                InitialSpec::Product {
                    particle1: crate::scenario::ParticleSpec {
                        center: vec![x[0]],
                        momentum: vec![p[0]],
                        sigma: None,
                        omega: Some(*omega),
                    },
                    particle2: crate::scenario::ParticleSpec {
                        center: vec![x[1]],
                        momentum: vec![p[1]],
                        sigma: None,
                        omega: Some(*omega),
                    },
                },
            ),
            MixtureComponentSpec::Entangled {
                weight,
                x_a,
                x_b,
                omega,
            } => (
                *weight,
                InitialSpec::Entangled {
                    coeff_a: num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                    coeff_b: num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                    omega: *omega,
                    branch_a: (*x_a, [0.0, 0.0]),
                    branch_b: (*x_b, [0.0, 0.0]),
                },
            ),
        };
        let psi = build_initial(&spec, &grid, &units)?;
        let record = dynamics::evolve(&psi, potential, cfg)?;
        built.push((weight, mixtures::ComponentSource::Record(record)));
    }
    let mut ensemble = mixtures::reduced_density(built)?;
    let reports =
        mixtures::classicality_check(&mut ensemble, potential, tol_dipole, tol_ehrenfest)?;
    let all_pass = reports.iter().all(|r| r.passed);
    let times: Vec<f64> = match &ensemble.components[0].source {
        mixtures::ComponentSource::Record(r) => {
            r.snapshots.iter().map(|(ti, _)| r.times[*ti]).collect()
        }
        _ => unreachable!("components are records"),
    };
    let mut residuals = Vec::with_capacity(times.len());
    let mut max_residual = 0.0f64;
    for &t in &times {
        let e = mixtures::mixture_expectation(&ensemble, 0, 0, t)?;
        max_residual = max_residual.max(e.residual);
        residuals.push((t, e));
    }
    write_file(
        files,
        "mixture_report.csv",
        mixtures::mixture_report_csv(&reports, &residuals).into_bytes(),
    );
    Ok(format!(
        "components={} all_classical={} max_residual={:e}",
        reports.len(),
        all_pass,
        max_residual
    ))
}
