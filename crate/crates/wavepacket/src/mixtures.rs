//! Diagonal reduced density matrices as weighted ensembles of two-particle
//! components, and the improper-to-classical-statistical transition check:
//! once every component has vanishing dipoles (including the cross term) and
//! passes the Ehrenfest classification, the mixed expectation
//! `<x1 x2>_red` computed from the quantum densities coincides with the
//! classical statistical average over the component trajectories.

use ndarray::ArrayD;

use crate::classifier::{emwf_check, Verdict};
use crate::dynamics::{interp_series, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::moments::{density, two_body_central_moments};
use crate::potential::Potential;

/// One mixture component: a weight and either a full evolved record or a
/// precomputed pair of trajectories.
#[derive(Debug, Clone)]
pub enum ComponentSource {
    Record(TrajectoryRecord),
    Trajectories {
        times: Vec<f64>,
        x1: Vec<f64>,
        x2: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct MixtureComponent {
    pub weight: f64,
    pub source: ComponentSource,
    /// Set by `classicality_check`.
    pub verdict: Option<Verdict>,
    /// The three dipole audit maxima (particle 1, particle 2, cross).
    pub dipole_audit: Option<[f64; 3]>,
    /// Overall classicality (dipoles and verdict), set by the check.
    pub classical: Option<bool>,
}

impl MixtureComponent {
    fn times(&self) -> &[f64] {
        match &self.source {
            ComponentSource::Record(r) => &r.times,
            ComponentSource::Trajectories { times, .. } => times,
        }
    }

    fn trajectory_at(&self, t: f64) -> Result<(f64, f64)> {
        match &self.source {
            ComponentSource::Record(r) => {
                let x = r.x_mean_at(t)?;
                Ok((x[0], x[1]))
            }
            ComponentSource::Trajectories { times, x1, x2 } => {
                let s1: Vec<Vec<f64>> = x1.iter().map(|v| vec![*v]).collect();
                let s2: Vec<Vec<f64>> = x2.iter().map(|v| vec![*v]).collect();
                Ok((
                    interp_series(times, &s1, t)?[0],
                    interp_series(times, &s2, t)?[0],
                ))
            }
        }
    }
}

/// Weighted ensemble of two-particle components on a common grid.
#[derive(Debug)]
pub struct MixtureEnsemble {
    pub components: Vec<MixtureComponent>,
}

/// Build the ensemble, checking weights and grid compatibility.
pub fn reduced_density(components: Vec<(f64, ComponentSource)>) -> Result<MixtureEnsemble> {
    if components.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if components.iter().any(|(w, _)| *w < 0.0) {
        return Err(Error::Other("mixture weights must be nonnegative".into()));
    }
    let sum: f64 = components.iter().map(|(w, _)| w).sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::WeightSum { sum });
    }
    let mut grid = None;
    for (_, src) in &components {
        if let ComponentSource::Record(r) = src {
            let g = r.initial_state().grid().clone();
            match &grid {
                None => grid = Some(g),
                Some(g0) => {
                    if *g0 != g {
                        return Err(Error::GridMismatch);
                    }
                }
            }
        }
    }
    Ok(MixtureEnsemble {
        components: components
            .into_iter()
            .map(|(weight, source)| MixtureComponent {
                weight,
                source,
                verdict: None,
                dipole_audit: None,
                classical: None,
            })
            .collect(),
    })
}

impl MixtureEnsemble {
    /// Pointwise mixture density `sum_w p_w |psi_w|^2` at a recorded time
    /// index (components must carry records).
    pub fn mixture_density(&self, snapshot_index: usize) -> Result<ArrayD<f64>> {
        let mut out: Option<ArrayD<f64>> = None;
        for comp in &self.components {
            let ComponentSource::Record(r) = &comp.source else {
                return Err(Error::Other(
                    "mixture density needs full records for every component".into(),
                ));
            };
            let (_, snap) = r.snapshots.get(snapshot_index).ok_or(Error::TooFewTimes {
                required: snapshot_index + 1,
                got: r.snapshots.len(),
            })?;
            let rho = snap.amplitudes().mapv(|z| z.norm_sqr() * comp.weight);
            out = Some(match out {
                None => rho,
                Some(mut acc) => {
                    acc.zip_mut_with(&rho, |a, b| *a += b);
                    acc
                }
            });
        }
        Ok(out.expect("nonempty ensemble"))
    }
}

/// Per-component classicality report.
#[derive(Debug, Clone)]
pub struct ComponentReport {
    pub weight: f64,
    pub dipoles: [f64; 3],
    pub verdict: Verdict,
    pub passed: bool,
}

/// Audit every component: the three double-expansion dipoles about the
/// per-particle trajectories, and the EMWF classification of the record.
pub fn classicality_check(
    ensemble: &mut MixtureEnsemble,
    v: &Potential,
    tol_dipole: f64,
    tol_ehrenfest: f64,
) -> Result<Vec<ComponentReport>> {
    let mut out = Vec::with_capacity(ensemble.components.len());
    for comp in &mut ensemble.components {
        let ComponentSource::Record(record) = &comp.source else {
            return Err(Error::Other(
                "classicality check needs full records for every component".into(),
            ));
        };
        let mut dips = [0.0f64; 3];
        for (ti, snap) in &record.snapshots {
            let centers = [record.x_mean[*ti][0], record.x_mean[*ti][1]];
            let m = two_body_central_moments(snap, centers, 1)?;
            let d = m.dipoles();
            for k in 0..3 {
                dips[k] = dips[k].max(d[k].abs());
            }
        }
        let class = emwf_check(record, v, tol_dipole, tol_ehrenfest)?;
        let cross_ok = dips.iter().all(|d| *d <= tol_dipole.max(1e-6));
        let passed = cross_ok && class.verdict == Verdict::Emwf;
        comp.verdict = Some(class.verdict);
        comp.dipole_audit = Some(dips);
        comp.classical = Some(passed);
        out.push(ComponentReport {
            weight: comp.weight,
            dipoles: dips,
            verdict: class.verdict,
            passed,
        });
    }
    Ok(out)
}

/// The two readings of `<x1^i x2^j>` at time `t`.
#[derive(Debug, Clone, Copy)]
pub struct MixtureExpectation {
    /// `sum_w p_w integral x1 x2 |psi_w|^2`.
    pub quantum: f64,
    /// `sum_w p_w x_{1w}(t) x_{2w}(t)`.
    pub classical: f64,
    pub residual: f64,
    /// Set when a component failed (or has not run) the classicality check.
    pub warning: bool,
}

/// Evaluate the transition identity at one time; axes `i`, `j` index the
/// coordinates of particle 1 and 2 (both 0 in one dimension per particle).
pub fn mixture_expectation(
    ensemble: &MixtureEnsemble,
    i: usize,
    j: usize,
    t: f64,
) -> Result<MixtureExpectation> {
    if i != 0 || j != 0 {
        return Err(Error::DimensionUnsupported { max: 1, got: 2 });
    }
    let mut quantum = 0.0;
    let mut classical = 0.0;
    let mut warning = false;
    for comp in &ensemble.components {
        let times = comp.times();
        if times.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let (t0, t1) = (times[0], *times.last().unwrap());
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            return Err(Error::TimeOutOfRange { time: t, t0, t1 });
        }
        if comp.classical != Some(true) {
            warning = true;
        }
        let (x1, x2) = comp.trajectory_at(t)?;
        classical += comp.weight * x1 * x2;
        match &comp.source {
            ComponentSource::Record(r) => {
                // nearest snapshots bracket t; interpolate the quantum
                // cross expectation linearly between them
                let stimes: Vec<f64> = r.snapshots.iter().map(|(ti, _)| r.times[*ti]).collect();
                let cross: Result<Vec<Vec<f64>>> = r
                    .snapshots
                    .iter()
                    .map(|(_, snap)| -> Result<Vec<f64>> {
                        Ok(vec![cross_expectation(snap)?])
                    })
                    .collect();
                let series = cross?;
                quantum += comp.weight * interp_series(&stimes, &series, t)?[0];
            }
            ComponentSource::Trajectories { .. } => {
                // trajectory-only components contribute their product (valid
                // once classicality is established)
                quantum += comp.weight * x1 * x2;
            }
        }
    }
    Ok(MixtureExpectation {
        quantum,
        classical,
        residual: (quantum - classical).abs(),
        warning,
    })
}

/// `integral x1 x2 |psi|^2` for a two-particle snapshot.
fn cross_expectation(snap: &crate::grid::WaveFunction) -> Result<f64> {
    let grid = snap.grid();
    if grid.dims() != 2 {
        return Err(Error::DimensionMismatch {
            required: 2,
            got: grid.dims(),
        });
    }
    let f = density(snap)?;
    let x1 = grid.positions(0);
    let x2 = grid.positions(1);
    let n2 = grid.shape()[1];
    let rho = f.rho.as_slice().expect("standard layout");
    let mut acc = 0.0;
    for (flat, &r) in rho.iter().enumerate() {
        acc += x1[flat / n2] * x2[flat % n2] * r;
    }
    Ok(acc * grid.cell_volume())
}

/// `w, dipole audits, verdict, residual` rows for a report file.
pub fn mixture_report_csv(
    reports: &[ComponentReport],
    residuals: &[(f64, MixtureExpectation)],
) -> String {
    let mut out = String::from("w,dipole1,dipole2,dipole_cross,verdict,passed\n");
    for r in reports {
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{},{}\n",
            r.weight, r.dipoles[0], r.dipoles[1], r.dipoles[2], r.verdict, r.passed
        ));
    }
    out.push_str("t,quantum,classical,residual,warning\n");
    for (t, e) in residuals {
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{}\n",
            t, e.quantum, e.classical, e.residual, e.warning
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(times: Vec<f64>, x1: Vec<f64>, x2: Vec<f64>) -> ComponentSource {
        ComponentSource::Trajectories { times, x1, x2 }
    }

    #[test]
    fn weight_sum_enforced() {
        let c = vec![
            (0.7, traj(vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0])),
            (0.4, traj(vec![0.0, 1.0], vec![3.0, 3.0], vec![4.0, 4.0])),
        ];
        assert!(matches!(reduced_density(c), Err(Error::WeightSum { .. })));
    }

    #[test]
    fn empty_ensemble_rejected() {
        assert!(matches!(reduced_density(vec![]), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn classical_arithmetic() {
        let c = vec![
            (0.5, traj(vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0])),
            (0.5, traj(vec![0.0, 1.0], vec![3.0, 3.0], vec![4.0, 4.0])),
        ];
        let e = reduced_density(c).unwrap();
        let r = mixture_expectation(&e, 0, 0, 0.5).unwrap();
        assert!((r.classical - 7.0).abs() < 1e-12);
        assert!(r.warning); // no classicality check has run
    }

    #[test]
    fn time_out_of_range() {
        let c = vec![(1.0, traj(vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]))];
        let e = reduced_density(c).unwrap();
        assert!(matches!(
            mixture_expectation(&e, 0, 0, 2.0),
            Err(Error::TimeOutOfRange { .. })
        ));
    }
}
