//! Declarative scenario files: TOML-syntax key-value sections, strictly
//! validated. Unknown keys are errors (with a nearest-match suggestion) and
//! validation reports every problem found, not just the first.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use toml::Value;

use wavepacket::grid::{Grid, Units, WaveFunction};
use wavepacket::potential::Potential;
use wavepacket::states;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    NonRelativistic,
    RelativisticRelative,
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct UnitsSpec {
    pub hbar: f64,
    pub masses: Vec<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum PotentialSpec {
    Free,
    Harmonic { omega: f64 },
    Quartic { lambda: f64 },
    GaussianWell { depth: f64, width: f64 },
    Tabulated { file: String },
    TwoBody {
        v12: Box<PotentialSpec>,
        external1: Option<Box<PotentialSpec>>,
        external2: Option<Box<PotentialSpec>>,
    },
}

#[derive(Debug, Clone)]
pub struct ParticleSpec {
    pub center: Vec<f64>,
    pub momentum: Vec<f64>,
    /// Either an explicit width or an oscillator frequency fixing it.
    pub sigma: Option<Vec<f64>>,
    pub omega: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum InitialSpec {
    Gaussian {
        center: Vec<f64>,
        momentum: Vec<f64>,
        sigma: Vec<f64>,
    },
    Coherent {
        omega: f64,
        center: Vec<f64>,
        momentum: Vec<f64>,
    },
    Eigenstate {
        omega: f64,
        n: Vec<usize>,
    },
    Superposition {
        components: Vec<(Complex64, Box<InitialSpec>)>,
    },
    Product {
        particle1: ParticleSpec,
        particle2: ParticleSpec,
    },
    Entangled {
        coeff_a: Complex64,
        coeff_b: Complex64,
        omega: f64,
        branch_a: ([f64; 2], [f64; 2]),
        branch_b: ([f64; 2], [f64; 2]),
    },
}

#[derive(Debug, Clone)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_final: f64,
    pub save_stride: usize,
    pub snapshot_stride: usize,
    pub subtract_rest_energy: bool,
}

#[derive(Debug, Clone)]
pub enum MixtureComponentSpec {
    Product {
        weight: f64,
        x: [f64; 2],
        p: [f64; 2],
        omega: f64,
    },
    Entangled {
        weight: f64,
        x_a: [f64; 2],
        x_b: [f64; 2],
        omega: f64,
    },
}

#[derive(Debug, Clone)]
pub enum AnalysisSpec {
    Classify,
    Moments {
        order: usize,
    },
    Effective {
        orders: Vec<usize>,
        source: String, // "time-interpolated" | "frozen"
        horizon_threshold: f64,
    },
    Wigner {
        downsample: usize,
    },
    Bohm {
        seeds: usize,
        seeding: String, // "density" | "uniform"
        region: Option<(f64, f64)>,
    },
    Mixture {
        components: Vec<MixtureComponentSpec>,
    },
    Relativistic,
}

impl AnalysisSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnalysisSpec::Classify => "classify",
            AnalysisSpec::Moments { .. } => "moments",
            AnalysisSpec::Effective { .. } => "effective",
            AnalysisSpec::Wigner { .. } => "wigner",
            AnalysisSpec::Bohm { .. } => "bohm",
            AnalysisSpec::Mixture { .. } => "mixture",
            AnalysisSpec::Relativistic => "relativistic",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tolerances {
    pub dipole: f64,
    pub ehrenfest: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub mode: Mode,
    pub grid: GridSpec,
    pub units: UnitsSpec,
    pub potential: PotentialSpec,
    pub initial: InitialSpec,
    pub integrator: IntegratorSpec,
    pub analyses: Vec<AnalysisSpec>,
    pub tolerances: Tolerances,
    pub dump_snapshots: bool,
    /// SHA-256 of the scenario file contents.
    pub hash: String,
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn nearest(key: &str, allowed: &[&str]) -> Option<String> {
    allowed
        .iter()
        .map(|k| (levenshtein(key, k), *k))
        .min()
        .filter(|(d, _)| *d <= 3)
        .map(|(_, k)| k.to_string())
}

/// Collector with path bookkeeping.
struct Ctx {
    errors: Vec<ValidationError>,
}

impl Ctx {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ValidationError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn check_keys(&mut self, path: &str, table: &toml::value::Table, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let hint = nearest(key, allowed)
                    .map(|n| format!("; did you mean `{n}`?"))
                    .unwrap_or_default();
                self.err(path, format!("unknown key `{key}`{hint}"));
            }
        }
    }

    fn f64(&mut self, path: &str, table: &toml::value::Table, key: &str) -> Onepiece<f64> {
        match table.get(key) {
            Some(Value::Float(v)) => Some(*v),
            Some(Value::Integer(v)) => Some(*v as f64),
            Some(_) => {
                self.err(path, format!("`{key}` must be a number"));
                None
            }
            None => {
                self.err(path, format!("missing required key `{key}`"));
                None
            }
        }
    }

    fn f64_or(&mut self, path: &str, table: &toml::value::Table, key: &str, default: f64) -> f64 {
        match table.get(key) {
            Some(Value::Float(v)) => *v,
            Some(Value::Integer(v)) => *v as f64,
            Some(_) => {
                self.err(path, format!("`{key}` must be a number"));
                default
            }
            None => default,
        }
    }

    fn usize_or(
        &mut self,
        path: &str,
        table: &toml::value::Table,
        key: &str,
        default: usize,
    ) -> usize {
        match table.get(key) {
            Some(Value::Integer(v)) if *v >= 0 => *v as usize,
            Some(_) => {
                self.err(path, format!("`{key}` must be a nonnegative integer"));
                default
            }
            None => default,
        }
    }

    fn f64_list(&mut self, path: &str, table: &toml::value::Table, key: &str) -> Option<Vec<f64>> {
        match table.get(key) {
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    match item {
                        Value::Float(v) => out.push(*v),
                        Value::Integer(v) => out.push(*v as f64),
                        _ => {
                            self.err(path, format!("`{key}[{i}]` must be a number"));
                            return None;
                        }
                    }
                }
                Some(out)
            }
            Some(_) => {
                self.err(path, format!("`{key}` must be an array of numbers"));
                None
            }
            None => {
                self.err(path, format!("missing required key `{key}`"));
                None
            }
        }
    }

    fn string_or(
        &mut self,
        path: &str,
        table: &toml::value::Table,
        key: &str,
        default: &str,
    ) -> String {
        match table.get(key) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.err(path, format!("`{key}` must be a string"));
                default.to_string()
            }
            None => default.to_string(),
        }
    }
}

type Onepiece<T> = Option<T>;

fn complex_pair(
    ctx: &mut Ctx,
    path: &str,
    table: &toml::value::Table,
    key: &str,
) -> Complex64 {
    match ctx.f64_list(path, table, key) {
        Some(v) if v.len() == 2 => Complex64::new(v[0], v[1]),
        Some(_) => {
            ctx.err(path, format!("`{key}` must be `[re, im]`"));
            Complex64::default()
        }
        None => Complex64::default(),
    }
}

fn parse_potential(ctx: &mut Ctx, path: &str, table: &toml::value::Table) -> PotentialSpec {
    const ALLOWED: &[&str] = &[
        "kind", "omega", "lambda", "depth", "width", "file", "v12", "external1", "external2",
    ];
    ctx.check_keys(path, table, ALLOWED);
    let kind = ctx.string_or(path, table, "kind", "free");
    match kind.as_str() {
        "free" => PotentialSpec::Free,
        "harmonic" => PotentialSpec::Harmonic {
            omega: ctx.f64(path, table, "omega").unwrap_or(1.0),
        },
        "quartic" => PotentialSpec::Quartic {
            lambda: ctx.f64(path, table, "lambda").unwrap_or(0.0),
        },
        "gaussian_well" => PotentialSpec::GaussianWell {
            depth: ctx.f64(path, table, "depth").unwrap_or(1.0),
            width: ctx.f64(path, table, "width").unwrap_or(1.0),
        },
        "tabulated" => PotentialSpec::Tabulated {
            file: ctx.string_or(path, table, "file", ""),
        },
        "two_body" => {
            let sub = |ctx: &mut Ctx, name: &str| -> Option<Box<PotentialSpec>> {
                match table.get(name) {
                    Some(Value::Table(t)) => {
                        Some(Box::new(parse_potential(ctx, &format!("{path}.{name}"), t)))
                    }
                    Some(_) => {
                        ctx.err(path, format!("`{name}` must be a table"));
                        None
                    }
                    None => None,
                }
            };
            let v12 = sub(ctx, "v12").unwrap_or_else(|| {
                ctx.err(path, "two_body potential needs a `v12` table");
                Box::new(PotentialSpec::Free)
            });
            PotentialSpec::TwoBody {
                v12,
                external1: sub(ctx, "external1"),
                external2: sub(ctx, "external2"),
            }
        }
        other => {
            let hint = nearest(
                other,
                &["free", "harmonic", "quartic", "gaussian_well", "tabulated", "two_body"],
            )
            .map(|n| format!("; did you mean `{n}`?"))
            .unwrap_or_default();
            ctx.err(path, format!("unknown potential kind `{other}`{hint}"));
            PotentialSpec::Free
        }
    }
}

fn parse_particle(ctx: &mut Ctx, path: &str, table: &toml::value::Table) -> ParticleSpec {
    ctx.check_keys(path, table, &["center", "momentum", "sigma", "omega"]);
    ParticleSpec {
        center: ctx.f64_list(path, table, "center").unwrap_or_default(),
        momentum: ctx.f64_list(path, table, "momentum").unwrap_or_default(),
        sigma: match table.get("sigma") {
            Some(_) => ctx.f64_list(path, table, "sigma"),
            None => None,
        },
        omega: match table.get("omega") {
            Some(Value::Float(v)) => Some(*v),
            Some(Value::Integer(v)) => Some(*v as f64),
            Some(_) => {
                ctx.err(path, "`omega` must be a number");
                None
            }
            None => None,
        },
    }
}

fn parse_initial(ctx: &mut Ctx, path: &str, table: &toml::value::Table) -> InitialSpec {
    const ALLOWED: &[&str] = &[
        "kind", "center", "momentum", "sigma", "omega", "n", "component", "particle1",
        "particle2", "coeff", "coeff_a", "coeff_b", "x_a", "p_a", "x_b", "p_b",
    ];
    ctx.check_keys(path, table, ALLOWED);
    let kind = ctx.string_or(path, table, "kind", "gaussian");
    match kind.as_str() {
        "gaussian" => InitialSpec::Gaussian {
            center: ctx.f64_list(path, table, "center").unwrap_or_default(),
            momentum: ctx.f64_list(path, table, "momentum").unwrap_or_default(),
            sigma: ctx.f64_list(path, table, "sigma").unwrap_or_default(),
        },
        "coherent" => InitialSpec::Coherent {
            omega: ctx.f64(path, table, "omega").unwrap_or(1.0),
            center: ctx.f64_list(path, table, "center").unwrap_or_default(),
            momentum: ctx.f64_list(path, table, "momentum").unwrap_or_default(),
        },
        "eigenstate" => {
            let n = match table.get("n") {
                Some(Value::Array(items)) => items
                    .iter()
                    .filter_map(|v| v.as_integer().map(|i| i as usize))
                    .collect(),
                Some(Value::Integer(v)) => vec![*v as usize],
                _ => {
                    ctx.err(path, "eigenstate needs `n` (integer or array)");
                    vec![0]
                }
            };
            InitialSpec::Eigenstate {
                omega: ctx.f64(path, table, "omega").unwrap_or(1.0),
                n,
            }
        }
        "superposition" => {
            let mut components = Vec::new();
            match table.get("component") {
                Some(Value::Array(items)) => {
                    for (i, item) in items.iter().enumerate() {
                        let cpath = format!("{path}.component[{i}]");
                        match item {
                            Value::Table(t) => {
                                let coeff = complex_pair(ctx, &cpath, t, "coeff");
                                let mut inner = t.clone();
                                inner.remove("coeff");
                                let spec = parse_initial(ctx, &cpath, &inner);
                                components.push((coeff, Box::new(spec)));
                            }
                            _ => ctx.err(&cpath, "component must be a table"),
                        }
                    }
                }
                _ => ctx.err(path, "superposition needs `[[initial.component]]` entries"),
            }
            if components.len() < 2 {
                ctx.err(path, "superposition needs at least two components");
            }
            InitialSpec::Superposition { components }
        }
        "product" => {
            let particle = |ctx: &mut Ctx, name: &str| -> ParticleSpec {
                match table.get(name) {
                    Some(Value::Table(t)) => parse_particle(ctx, &format!("{path}.{name}"), t),
                    _ => {
                        ctx.err(path, format!("product initial state needs `{name}`"));
                        ParticleSpec {
                            center: vec![0.0],
                            momentum: vec![0.0],
                            sigma: Some(vec![1.0]),
                            omega: None,
                        }
                    }
                }
            };
            InitialSpec::Product {
                particle1: particle(ctx, "particle1"),
                particle2: particle(ctx, "particle2"),
            }
        }
        "entangled" => InitialSpec::Entangled {
            coeff_a: complex_pair(ctx, path, table, "coeff_a"),
            coeff_b: complex_pair(ctx, path, table, "coeff_b"),
            omega: ctx.f64(path, table, "omega").unwrap_or(1.0),
            branch_a: {
                let x = ctx.f64_list(path, table, "x_a").unwrap_or(vec![0.0, 0.0]);
                let p = ctx.f64_list(path, table, "p_a").unwrap_or(vec![0.0, 0.0]);
                (
                    [x.first().copied().unwrap_or(0.0), x.get(1).copied().unwrap_or(0.0)],
                    [p.first().copied().unwrap_or(0.0), p.get(1).copied().unwrap_or(0.0)],
                )
            },
            branch_b: {
                let x = ctx.f64_list(path, table, "x_b").unwrap_or(vec![0.0, 0.0]);
                let p = ctx.f64_list(path, table, "p_b").unwrap_or(vec![0.0, 0.0]);
                (
                    [x.first().copied().unwrap_or(0.0), x.get(1).copied().unwrap_or(0.0)],
                    [p.first().copied().unwrap_or(0.0), p.get(1).copied().unwrap_or(0.0)],
                )
            },
        },
        other => {
            let hint = nearest(
                other,
                &["gaussian", "coherent", "eigenstate", "superposition", "product", "entangled"],
            )
            .map(|n| format!("; did you mean `{n}`?"))
            .unwrap_or_default();
            ctx.err(path, format!("unknown initial kind `{other}`{hint}"));
            InitialSpec::Gaussian {
                center: vec![0.0],
                momentum: vec![0.0],
                sigma: vec![1.0],
            }
        }
    }
}

fn parse_analysis(ctx: &mut Ctx, path: &str, table: &toml::value::Table) -> Option<AnalysisSpec> {
    let kind = ctx.string_or(path, table, "kind", "");
    match kind.as_str() {
        "classify" => {
            ctx.check_keys(path, table, &["kind"]);
            Some(AnalysisSpec::Classify)
        }
        "moments" => {
            ctx.check_keys(path, table, &["kind", "order"]);
            Some(AnalysisSpec::Moments {
                order: ctx.usize_or(path, table, "order", 4),
            })
        }
        "effective" => {
            ctx.check_keys(
                path,
                table,
                &["kind", "orders", "multipole_source", "horizon_threshold"],
            );
            let orders = match table.get("orders") {
                Some(Value::Array(items)) => items
                    .iter()
                    .filter_map(|v| v.as_integer().map(|i| i as usize))
                    .collect(),
                None => vec![1, 4],
                _ => {
                    ctx.err(path, "`orders` must be an array of integers");
                    vec![1]
                }
            };
            let source = ctx.string_or(path, table, "multipole_source", "time-interpolated");
            if !["time-interpolated", "frozen"].contains(&source.as_str()) {
                ctx.err(
                    path,
                    format!("`multipole_source` must be `time-interpolated` or `frozen`, got `{source}`"),
                );
            }
            for o in &orders {
                if *o < 1 || *o > 8 {
                    ctx.err(path, format!("force order {o} out of range 1..=8"));
                }
            }
            Some(AnalysisSpec::Effective {
                orders,
                source,
                horizon_threshold: ctx.f64_or(path, table, "horizon_threshold", 0.02),
            })
        }
        "wigner" => {
            ctx.check_keys(path, table, &["kind", "downsample"]);
            Some(AnalysisSpec::Wigner {
                downsample: ctx.usize_or(path, table, "downsample", 8).max(1),
            })
        }
        "bohm" => {
            ctx.check_keys(path, table, &["kind", "seeds", "seeding", "region"]);
            let seeding = ctx.string_or(path, table, "seeding", "density");
            if !["density", "uniform"].contains(&seeding.as_str()) {
                ctx.err(path, format!("`seeding` must be `density` or `uniform`, got `{seeding}`"));
            }
            let region = match table.get("region") {
                Some(_) => ctx.f64_list(path, table, "region").and_then(|v| {
                    if v.len() == 2 && v[0] < v[1] {
                        Some((v[0], v[1]))
                    } else {
                        ctx.err(path, "`region` must be `[a, b]` with a < b");
                        None
                    }
                }),
                None => None,
            };
            if seeding == "uniform" && region.is_none() {
                ctx.err(path, "uniform seeding needs a `region`");
            }
            Some(AnalysisSpec::Bohm {
                seeds: ctx.usize_or(path, table, "seeds", 100),
                seeding,
                region,
            })
        }
        "mixture" => {
            ctx.check_keys(path, table, &["kind", "component"]);
            let mut components = Vec::new();
            match table.get("component") {
                Some(Value::Array(items)) => {
                    for (i, item) in items.iter().enumerate() {
                        let cpath = format!("{path}.component[{i}]");
                        let Value::Table(t) = item else {
                            ctx.err(&cpath, "component must be a table");
                            continue;
                        };
                        ctx.check_keys(
                            &cpath,
                            t,
                            &["weight", "kind", "x", "p", "x_a", "x_b", "omega"],
                        );
                        let weight = ctx.f64(&cpath, t, "weight").unwrap_or(0.0);
                        let omega = ctx.f64_or(&cpath, t, "omega", 1.0);
                        let ckind = ctx.string_or(&cpath, t, "kind", "product");
                        let pair = |ctx: &mut Ctx, key: &str, default: [f64; 2]| -> [f64; 2] {
                            match t.get(key) {
                                Some(_) => match ctx.f64_list(&cpath, t, key) {
                                    Some(v) if v.len() == 2 => [v[0], v[1]],
                                    _ => {
                                        ctx.err(&cpath, format!("`{key}` must have 2 entries"));
                                        default
                                    }
                                },
                                None => default,
                            }
                        };
                        match ckind.as_str() {
                            "product" => components.push(MixtureComponentSpec::Product {
                                weight,
                                x: pair(ctx, "x", [0.0, 0.0]),
                                p: pair(ctx, "p", [0.0, 0.0]),
                                omega,
                            }),
                            "entangled" => components.push(MixtureComponentSpec::Entangled {
                                weight,
                                x_a: pair(ctx, "x_a", [0.0, 0.0]),
                                x_b: pair(ctx, "x_b", [0.0, 0.0]),
                                omega,
                            }),
                            other => ctx.err(&cpath, format!("unknown component kind `{other}`")),
                        }
                    }
                }
                _ => ctx.err(path, "mixture needs `[[analysis.component]]` entries"),
            }
            let sum: f64 = components
                .iter()
                .map(|c| match c {
                    MixtureComponentSpec::Product { weight, .. } => *weight,
                    MixtureComponentSpec::Entangled { weight, .. } => *weight,
                })
                .sum();
            if components.is_empty() {
                ctx.err(path, "mixture needs at least one component");
            } else if (sum - 1.0).abs() > 1e-12 {
                ctx.err(path, format!("component weights sum to {sum}, expected 1"));
            }
            Some(AnalysisSpec::Mixture { components })
        }
        "relativistic" => {
            ctx.check_keys(path, table, &["kind"]);
            Some(AnalysisSpec::Relativistic)
        }
        "" => {
            ctx.err(path, "analysis needs a `kind`");
            None
        }
        other => {
            let hint = nearest(other, ANALYSIS_KINDS)
                .map(|n| format!("; did you mean `{n}`?"))
                .unwrap_or_default();
            ctx.err(path, format!("unknown analysis kind `{other}`{hint}"));
            None
        }
    }
}

pub const ANALYSIS_KINDS: &[&str] = &[
    "classify",
    "moments",
    "effective",
    "wigner",
    "bohm",
    "mixture",
    "relativistic",
];

/// Parse and fully validate a scenario file; returns either the scenario or
/// every validation error found.
pub fn parse_scenario(path: &Path) -> Result<Scenario, Vec<ValidationError>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ValidationError {
            path: path.display().to_string(),
            message: format!("cannot read file: {e}"),
        }]
    })?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, Vec<ValidationError>> {
    use sha2::Digest;
    let hash = format!("{:x}", sha2::Sha256::digest(text.as_bytes()));
    let root: Value = toml::from_str(text).map_err(|e| {
        vec![ValidationError {
            path: "(file)".into(),
            message: format!("TOML syntax error: {e}"),
        }]
    })?;
    let Value::Table(top) = root else {
        return Err(vec![ValidationError {
            path: "(file)".into(),
            message: "scenario must be a table".into(),
        }]);
    };
    let mut ctx = Ctx { errors: Vec::new() };
    const TOP: &[&str] = &[
        "name",
        "description",
        "seed",
        "mode",
        "grid",
        "units",
        "potential",
        "initial",
        "integrator",
        "analysis",
        "tolerances",
        "output",
    ];
    ctx.check_keys("(top level)", &top, TOP);

    let name = ctx.string_or("(top level)", &top, "name", "");
    if name.is_empty() {
        ctx.err("(top level)", "missing required key `name`");
    }
    let description = ctx.string_or("(top level)", &top, "description", "");
    let seed = ctx.usize_or("(top level)", &top, "seed", 0) as u64;
    let mode = match ctx.string_or("(top level)", &top, "mode", "nonrelativistic").as_str() {
        "nonrelativistic" => Mode::NonRelativistic,
        "relativistic_relative" => Mode::RelativisticRelative,
        other => {
            ctx.err(
                "(top level)",
                format!("unknown mode `{other}` (nonrelativistic | relativistic_relative)"),
            );
            Mode::NonRelativistic
        }
    };

    let section = |ctx: &mut Ctx, name: &str| -> toml::value::Table {
        match top.get(name) {
            Some(Value::Table(t)) => t.clone(),
            Some(_) => {
                ctx.err(name, "must be a table");
                toml::value::Table::new()
            }
            None => {
                ctx.err("(top level)", format!("missing required section `[{name}]`"));
                toml::value::Table::new()
            }
        }
    };

    // grid
    let grid_table = section(&mut ctx, "grid");
    ctx.check_keys("grid", &grid_table, &["extents", "points"]);
    let extents = ctx.f64_list("grid", &grid_table, "extents").unwrap_or_default();
    let points: Vec<usize> = match grid_table.get("points") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|v| v.as_integer().map(|i| i as usize))
            .collect(),
        _ => {
            ctx.err("grid", "missing required key `points`");
            vec![]
        }
    };
    if !extents.is_empty() && extents.len() != points.len() {
        ctx.err("grid", "`extents` and `points` must have the same length");
    }
    for (a, n) in points.iter().enumerate() {
        if *n < 8 || !n.is_power_of_two() {
            ctx.err("grid", format!("points[{a}] = {n} must be a power of two >= 8"));
        }
    }
    for (a, l) in extents.iter().enumerate() {
        if !(*l > 0.0) {
            ctx.err("grid", format!("extents[{a}] = {l} must be positive"));
        }
    }

    // units
    let units_table = match top.get("units") {
        Some(Value::Table(t)) => t.clone(),
        _ => toml::value::Table::new(),
    };
    ctx.check_keys("units", &units_table, &["hbar", "mass", "masses", "c"]);
    let hbar = ctx.f64_or("units", &units_table, "hbar", 1.0);
    let masses = if units_table.contains_key("masses") {
        ctx.f64_list("units", &units_table, "masses").unwrap_or(vec![1.0])
    } else {
        vec![ctx.f64_or("units", &units_table, "mass", 1.0)]
    };
    let c = units_table.get("c").and_then(|v| match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    });
    if hbar <= 0.0 {
        ctx.err("units", "hbar must be positive");
    }
    for m in &masses {
        if *m <= 0.0 {
            ctx.err("units", "masses must be positive");
        }
    }
    if masses.len() > 2 {
        ctx.err("units", "at most two masses are supported");
    }
    if masses.len() == 2 && mode == Mode::NonRelativistic && points.len() % 2 != 0 {
        ctx.err(
            "units",
            "two-particle units need an even-dimensional configuration grid",
        );
    }
    if mode == Mode::RelativisticRelative {
        if c.is_none() {
            ctx.err("units", "relativistic mode requires `c`");
        }
        if masses.len() != 2 {
            ctx.err("units", "relativistic mode requires `masses = [m1, m2]`");
        }
    }

    // potential
    let potential_table = section(&mut ctx, "potential");
    let potential = parse_potential(&mut ctx, "potential", &potential_table);
    if matches!(potential, PotentialSpec::TwoBody { .. }) {
        if points.len() != 2 {
            ctx.err("potential", "two_body potentials need a 2-axis configuration grid");
        }
        if masses.len() != 2 {
            ctx.err("potential", "two_body potentials need `units.masses = [m1, m2]`");
        }
    }

    // initial
    let initial_table = section(&mut ctx, "initial");
    let initial = parse_initial(&mut ctx, "initial", &initial_table);
    let dims = points.len();
    validate_initial_dims(&mut ctx, &initial, dims);

    // integrator
    let integ = section(&mut ctx, "integrator");
    ctx.check_keys(
        "integrator",
        &integ,
        &["dt", "t_final", "save_stride", "snapshot_stride", "subtract_rest_energy"],
    );
    let dt = ctx.f64("integrator", &integ, "dt").unwrap_or(1e-3);
    let t_final = ctx.f64("integrator", &integ, "t_final").unwrap_or(1.0);
    if dt <= 0.0 {
        ctx.err("integrator", "dt must be positive");
    }
    if t_final <= 0.0 {
        ctx.err("integrator", "t_final must be positive");
    }
    if dt > t_final {
        ctx.err("integrator", format!("dt = {dt} exceeds t_final = {t_final}"));
    }
    let integrator = IntegratorSpec {
        dt,
        t_final,
        save_stride: ctx.usize_or("integrator", &integ, "save_stride", 1).max(1),
        snapshot_stride: ctx.usize_or("integrator", &integ, "snapshot_stride", 1).max(1),
        subtract_rest_energy: matches!(
            integ.get("subtract_rest_energy"),
            Some(Value::Boolean(true)) | None
        ),
    };

    // output
    let dump_snapshots = match top.get("output") {
        Some(Value::Table(t)) => {
            ctx.check_keys("output", t, &["snapshots"]);
            matches!(t.get("snapshots"), Some(Value::Boolean(true)))
        }
        Some(_) => {
            ctx.err("output", "must be a table");
            false
        }
        None => false,
    };

    // tolerances
    let tolerances = match top.get("tolerances") {
        Some(Value::Table(t)) => {
            ctx.check_keys("tolerances", t, &["dipole", "ehrenfest"]);
            Tolerances {
                dipole: ctx.f64_or("tolerances", t, "dipole", 1e-8),
                ehrenfest: ctx.f64_or("tolerances", t, "ehrenfest", 1e-5),
            }
        }
        Some(_) => {
            ctx.err("tolerances", "must be a table");
            Tolerances {
                dipole: 1e-8,
                ehrenfest: 1e-5,
            }
        }
        None => Tolerances {
            dipole: 1e-8,
            ehrenfest: 1e-5,
        },
    };

    // analyses
    let mut analyses = Vec::new();
    match top.get("analysis") {
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let apath = format!("analysis[{i}]");
                match item {
                    Value::Table(t) => {
                        if let Some(a) = parse_analysis(&mut ctx, &apath, t) {
                            analyses.push(a);
                        }
                    }
                    _ => ctx.err(&apath, "must be a table"),
                }
            }
        }
        Some(_) => ctx.err("analysis", "must be an array of tables (`[[analysis]]`)"),
        None => {}
    }

    // cross-section coherence
    for a in &analyses {
        match a {
            AnalysisSpec::Wigner { .. } if dims > 2 => {
                ctx.err("analysis", "wigner analysis supports at most 2 dimensions");
            }
            AnalysisSpec::Bohm { .. } if dims != 1 => {
                ctx.err("analysis", "bohm analysis needs a 1-dimensional grid");
            }
            AnalysisSpec::Mixture { .. } => {
                if dims != 2 || masses.len() != 2 {
                    ctx.err(
                        "analysis",
                        "mixture analysis needs a two-particle grid (2 axes, 2 masses)",
                    );
                }
            }
            AnalysisSpec::Relativistic if mode != Mode::RelativisticRelative => {
                ctx.err("analysis", "relativistic checks need `mode = \"relativistic_relative\"`");
            }
            AnalysisSpec::Classify | AnalysisSpec::Effective { .. }
                if mode == Mode::RelativisticRelative =>
            {
                ctx.err(
                    "analysis",
                    format!(
                        "{} analysis is defined for nonrelativistic runs only",
                        a.kind_name()
                    ),
                );
            }
            _ => {}
        }
    }
    if mode == Mode::RelativisticRelative {
        if let PotentialSpec::TwoBody { .. } = potential {
            ctx.err("potential", "relativistic mode acts on the relative coordinate; use a plain potential of it");
        }
    }

    if ctx.errors.is_empty() {
        Ok(Scenario {
            name,
            description,
            seed,
            mode,
            grid: GridSpec { extents, points },
            units: UnitsSpec { hbar, masses, c },
            potential,
            initial,
            integrator,
            analyses,
            tolerances,
            dump_snapshots,
            hash,
        })
    } else {
        Err(ctx.errors)
    }
}

fn validate_initial_dims(ctx: &mut Ctx, initial: &InitialSpec, dims: usize) {
    let check_len = |ctx: &mut Ctx, what: &str, len: usize, expect: usize| {
        if len != expect {
            ctx.err(
                "initial",
                format!("{what} has {len} entries, the grid has {expect} axes"),
            );
        }
    };
    match initial {
        InitialSpec::Gaussian {
            center,
            momentum,
            sigma,
        } => {
            check_len(ctx, "center", center.len(), dims);
            check_len(ctx, "momentum", momentum.len(), dims);
            check_len(ctx, "sigma", sigma.len(), dims);
            if sigma.iter().any(|s| *s <= 0.0) {
                ctx.err("initial", "sigma entries must be positive");
            }
        }
        InitialSpec::Coherent {
            center, momentum, omega,
        } => {
            check_len(ctx, "center", center.len(), dims);
            check_len(ctx, "momentum", momentum.len(), dims);
            if *omega <= 0.0 {
                ctx.err("initial", "omega must be positive");
            }
        }
        InitialSpec::Eigenstate { n, omega } => {
            check_len(ctx, "n", n.len(), dims);
            if *omega <= 0.0 {
                ctx.err("initial", "omega must be positive");
            }
        }
        InitialSpec::Superposition { components } => {
            for (_, c) in components {
                validate_initial_dims(ctx, c, dims);
            }
        }
        InitialSpec::Product { particle1, particle2 } => {
            if dims != 2 {
                ctx.err("initial", "product states need a 2-axis configuration grid");
                return;
            }
            for (name, p) in [("particle1", particle1), ("particle2", particle2)] {
                if p.center.len() != 1 || p.momentum.len() != 1 {
                    ctx.err(
                        "initial",
                        format!("{name} center/momentum must have one entry per particle axis"),
                    );
                }
                if p.sigma.is_none() && p.omega.is_none() {
                    ctx.err("initial", format!("{name} needs `sigma` or `omega`"));
                }
            }
        }
        InitialSpec::Entangled { omega, .. } => {
            if dims != 2 {
                ctx.err("initial", "entangled states need a 2-axis configuration grid");
            }
            if *omega <= 0.0 {
                ctx.err("initial", "omega must be positive");
            }
        }
    }
}

/// Materialize the grid, units, potential and initial state.
pub fn build(scenario: &Scenario) -> wavepacket::Result<(Arc<Grid>, Units, Potential, WaveFunction)> {
    let grid = Arc::new(Grid::new(&scenario.grid.extents, &scenario.grid.points)?);
    let units = Units {
        hbar: scenario.units.hbar,
        masses: scenario.units.masses.clone(),
        c: scenario.units.c,
    };
    let potential = build_potential(&scenario.potential, &grid, &units)?;
    let state = build_initial(&scenario.initial, &grid, &units)?;
    Ok((grid, units, potential, state))
}

pub fn build_potential(
    spec: &PotentialSpec,
    grid: &Arc<Grid>,
    units: &Units,
) -> wavepacket::Result<Potential> {
    Ok(match spec {
        PotentialSpec::Free => Potential::Free,
        PotentialSpec::Harmonic { omega } => Potential::Harmonic {
            mass: units.masses[0],
            omega: *omega,
        },
        PotentialSpec::Quartic { lambda } => Potential::Quartic { lambda: *lambda },
        PotentialSpec::GaussianWell { depth, width } => Potential::GaussianWell {
            depth: *depth,
            width: *width,
        },
        PotentialSpec::Tabulated { file } => {
            let text = std::fs::read_to_string(file)?;
            let samples: Vec<f64> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| wavepacket::Error::Other(format!("tabulated potential: {e}")))?;
            if samples.len() != grid.len() {
                return Err(wavepacket::Error::Other(format!(
                    "tabulated potential has {} samples, the grid has {} points",
                    samples.len(),
                    grid.len()
                )));
            }
            Potential::tabulated(
                (**grid).clone(),
                ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(grid.shape()), samples)
                    .expect("length checked"),
            )?
        }
        PotentialSpec::TwoBody {
            v12,
            external1,
            external2,
        } => {
            let sub = |s: &PotentialSpec| -> wavepacket::Result<Potential> {
                build_potential(s, grid, units)
            };
            Potential::two_body(
                sub(v12)?,
                external1.as_deref().map(sub).transpose()?,
                external2.as_deref().map(sub).transpose()?,
            )?
        }
    })
}

fn particle_state(
    p: &ParticleSpec,
    grid1: &Arc<Grid>,
    hbar: f64,
    mass: f64,
) -> wavepacket::Result<WaveFunction> {
    let units = Units::single(hbar, mass);
    match (&p.sigma, p.omega) {
        (Some(sigma), _) => {
            states::gaussian_packet(grid1.clone(), units, &p.center, &p.momentum, sigma)
        }
        (None, Some(omega)) => {
            states::coherent_state(grid1.clone(), units, omega, &p.center, &p.momentum)
        }
        (None, None) => Err(wavepacket::Error::Other(
            "particle needs `sigma` or `omega`".into(),
        )),
    }
}

pub fn build_initial(
    spec: &InitialSpec,
    grid: &Arc<Grid>,
    units: &Units,
) -> wavepacket::Result<WaveFunction> {
    match spec {
        InitialSpec::Gaussian {
            center,
            momentum,
            sigma,
        } => states::gaussian_packet(grid.clone(), units.clone(), center, momentum, sigma),
        InitialSpec::Coherent {
            omega,
            center,
            momentum,
        } => states::coherent_state(grid.clone(), units.clone(), *omega, center, momentum),
        InitialSpec::Eigenstate { omega, n } => {
            states::oscillator_eigenstate(grid.clone(), units.clone(), *omega, n)
        }
        InitialSpec::Superposition { components } => {
            let parts: Vec<(Complex64, WaveFunction)> = components
                .iter()
                .map(|(c, s)| Ok((*c, build_initial(s, grid, units)?)))
                .collect::<wavepacket::Result<_>>()?;
            let refs: Vec<(Complex64, &WaveFunction)> =
                parts.iter().map(|(c, w)| (*c, w)).collect();
            states::superposition(&refs)
        }
        InitialSpec::Product {
            particle1,
            particle2,
        } => {
            let g1 = Arc::new(Grid::new(
                &grid.extents()[..1],
                &grid.shape()[..1],
            )?);
            let g2 = Arc::new(Grid::new(&grid.extents()[1..], &grid.shape()[1..])?);
            let a = particle_state(particle1, &g1, units.hbar, units.masses[0])?;
            let b = particle_state(
                particle2,
                &g2,
                units.hbar,
                units.masses.get(1).copied().unwrap_or(units.masses[0]),
            )?;
            states::two_particle_product(&a, &b)
        }
        InitialSpec::Entangled {
            coeff_a,
            coeff_b,
            omega,
            branch_a,
            branch_b,
        } => {
            let g1 = Arc::new(Grid::new(&grid.extents()[..1], &grid.shape()[..1])?);
            let g2 = Arc::new(Grid::new(&grid.extents()[1..], &grid.shape()[1..])?);
            let mk = |g: &Arc<Grid>, mass: f64, x: f64, p: f64| {
                states::coherent_state(
                    g.clone(),
                    Units::single(units.hbar, mass),
                    *omega,
                    &[x],
                    &[p],
                )
            };
            let m2 = units.masses.get(1).copied().unwrap_or(units.masses[0]);
            let a1 = mk(&g1, units.masses[0], branch_a.0[0], branch_a.1[0])?;
            let a2 = mk(&g2, m2, branch_a.0[1], branch_a.1[1])?;
            let b1 = mk(&g1, units.masses[0], branch_b.0[0], branch_b.1[0])?;
            let b2 = mk(&g2, m2, branch_b.0[1], branch_b.1[1])?;
            states::entangled_pair(*coeff_a, (&a1, &a2), *coeff_b, (&b1, &b2))
        }
    }
}
