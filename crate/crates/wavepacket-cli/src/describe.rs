//! Built-in documentation for `list` and `describe`.

use crate::scenario::{nearest, ANALYSIS_KINDS};

/// Shipped scenarios, embedded so `list` and `run` work from any directory.
pub const SHIPPED: &[(&str, &str)] = &[
    (
        "free_gaussian",
        include_str!("../scenarios/free_gaussian.scn"),
    ),
    (
        "harmonic_coherent",
        include_str!("../scenarios/harmonic_coherent.scn"),
    ),
    (
        "harmonic_ground",
        include_str!("../scenarios/harmonic_ground.scn"),
    ),
    (
        "quartic_orders",
        include_str!("../scenarios/quartic_orders.scn"),
    ),
    (
        "double_gaussian_interference",
        include_str!("../scenarios/double_gaussian_interference.scn"),
    ),
    (
        "first_excited_wigner",
        include_str!("../scenarios/first_excited_wigner.scn"),
    ),
    (
        "two_body_spring",
        include_str!("../scenarios/two_body_spring.scn"),
    ),
    (
        "relativistic_free",
        include_str!("../scenarios/relativistic_free.scn"),
    ),
    (
        "mixture_classical",
        include_str!("../scenarios/mixture_classical.scn"),
    ),
    (
        "mixture_spoiled",
        include_str!("../scenarios/mixture_spoiled.scn"),
    ),
];

pub fn list_scenarios() -> String {
    let mut out = String::from("shipped scenarios:\n");
    for (name, text) in SHIPPED {
        let description = text
            .lines()
            .find_map(|l| l.strip_prefix("description = "))
            .map(|d| d.trim_matches('"').to_string())
            .unwrap_or_default();
        out.push_str(&format!("  {name:32} {description}\n"));
    }
    out
}

pub fn describe(analysis: &str) -> Result<String, String> {
    let text = match analysis {
        "classify" => {
            "classify: null-dipole audit plus both Ehrenfest residuals on the saved\n\
             stride, with central time differences. Emits classification.txt and\n\
             residuals.csv (t, res1, res2, dipole_audit). The verdict is EMWF when\n\
             the dipole audit and both residual maxima pass their tolerances,\n\
             NDWF-only when only the dipole audit passes, neither otherwise.\n\
             Tolerances come from [tolerances] (dipole, ehrenfest) and scale with\n\
             --tol-scale; the report embeds the stride and a two-level refinement\n\
             ratio because the verdict is stride-relative."
        }
        "moments" => {
            "moments: central density and momentum moments about <x>(t) for every\n\
             stored snapshot, exported to moments.csv as one row per\n\
             (time, multi-index) with columns t, alpha, value, kind."
        }
        "effective" => {
            "effective: integrates the Newton-like equation with multipole\n\
             correction forces and compares against the recorded <x>(t).\n\
             Options: orders = [..] (truncation orders, 1 = bare Newton) and\n\
             multipole_source = \"time-interpolated\" | \"frozen\".\n\
             time-interpolated feeds the moments measured along the quantum\n\
             record (a consistency check of the corrected force law); frozen\n\
             holds the initial moments fixed (a closed predictive model).\n\
             Emits classical_order<N>.csv and rms/max error metrics per order."
        }
        "wigner" => {
            "wigner: phase-space transform of the final snapshot (1- or 2-D).\n\
             Emits wigner.csv (down-sampled lattice) and wigner.bin for 1-D runs,\n\
             and reports normalization, purity, minimum value and the worst\n\
             deviation of the position marginal from |psi|^2."
        }
        "bohm" => {
            "bohm: integrates guidance trajectories through the stored snapshots\n\
             with band-limited spatial interpolation and fourth-order stepping.\n\
             Options: seeds = <count>, seeding = \"density\" (stratified inverse\n\
             CDF, jittered by the run seed) | \"uniform\" (needs region = [a, b]).\n\
             Emits bohm_trajectories.csv (seed_id, t, x) and reports the\n\
             total-variation distance between flowed samples and the final\n\
             density, truncated-trajectory and ordering-violation counts."
        }
        "mixture" => {
            "mixture: evolves each [[analysis.component]] (product or entangled\n\
             two-particle states) under the scenario potential, audits the three\n\
             double-expansion dipoles and the EMWF verdict per component, and\n\
             compares the mixed expectation <x1 x2> computed from the quantum\n\
             densities against the classical statistical average over component\n\
             trajectories. Emits mixture_report.csv."
        }
        "relativistic" => {
            "relativistic: for relativistic_relative runs, reports the relative\n\
             momentum drift over the whole record and, in the equal-mass case,\n\
             the velocity <-> momentum round-trip error."
        }
        other => {
            let hint = nearest(other, ANALYSIS_KINDS)
                .map(|n| format!("; did you mean `{n}`?"))
                .unwrap_or_default();
            return Err(format!("unknown analysis `{other}`{hint}"));
        }
    };
    Ok(text.to_string())
}
