//! Command-line front end: argument parsing, presets, trace/metric CSV output
//! and exit-code mapping. `main.rs` only dispatches into [`run`].

use crate::error::Error;
use crate::eval::{evaluate_repeats, synth_scene, ClassGrid, Metrics, SceneSpec};
use crate::io;
use crate::regions::LabelMap;
use crate::segmentation::{pca_first_component, slic_segment, DEFAULT_COMPACTNESS};
use crate::solver::{solve, Decomposition, SolverConfig};
use crate::tensor::{Cube, ShrinkRule};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Hyperparameters shipped for the four benchmark scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub p: f64,
    pub regions: usize,
    pub alpha: f64,
    pub beta: f64,
}

pub const PRESETS: [Preset; 4] = [
    Preset { name: "indian-pines", p: 0.1, regions: 30, alpha: 1e-7, beta: 1e-5 },
    Preset { name: "salinas", p: 0.1, regions: 20, alpha: 1e-6, beta: 1e-2 },
    Preset { name: "pavia", p: 0.1, regions: 10, alpha: 5e-6, beta: 1e-6 },
    Preset { name: "longkou", p: 0.7, regions: 10, alpha: 5e-4, beta: 1e-5 },
];

pub fn preset(name: &str) -> Option<Preset> {
    PRESETS.iter().copied().find(|p| p.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Input,
    Protocol,
    Numeric,
}

/// A failed command: one machine-parsable line plus an exit code.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Io | ErrorKind::Input => 2,
            ErrorKind::Protocol => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub fn code(&self) -> &'static str {
        match self.kind {
            ErrorKind::Io => "E_IO",
            ErrorKind::Input => "E_INPUT",
            ErrorKind::Protocol => "E_PROTOCOL",
            ErrorKind::Numeric => "E_NUMERIC",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let line = self.message.replace('\n', " ");
        write!(f, "{}: {line}", self.code())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Io(_) => ErrorKind::Io,
            Error::EmptyClass { .. } => ErrorKind::Protocol,
            Error::SvdFailure { .. } | Error::Diverged { .. } | Error::SymmetryViolation { .. } => {
                ErrorKind::Numeric
            }
            _ => ErrorKind::Input,
        };
        CliError::new(kind, e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(ErrorKind::Io, format!("{}: {e}", path.display()))
}

fn read_cube(path: &Path) -> Result<Cube, CliError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(io::decode_cube(&bytes)?)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "itlrr", version, about = "Irregular tensor low-rank representation of hyperspectral cubes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// PCA-reduce a cube and cut it into superpixels.
    Segment(SegmentArgs),
    /// Split a cube into low-rank and sparse parts.
    Decompose(DecomposeArgs),
    /// Render a synthetic scene from a key=value spec file.
    Synth(SynthArgs),
    /// 1-NN classification accuracy of a feature cube.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long = "input")]
    pub input: PathBuf,
    #[arg(long)]
    pub regions: usize,
    #[arg(long, default_value_t = DEFAULT_COMPACTNESS)]
    pub compactness: f64,
    /// Label output; `.csv` selects CSV, anything else the binary format.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Precomputed label map; otherwise the cube is segmented.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Superpixel count when segmenting.
    #[arg(long)]
    pub regions: Option<usize>,
    /// Ignore `--labels` and segment into this many regions (1 = whole image).
    #[arg(long = "regions-override")]
    pub regions_override: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_COMPACTNESS)]
    pub compactness: f64,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long = "mu-max")]
    pub mu_max: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    #[arg(long = "fixed-point-shrink")]
    pub fixed_point_shrink: bool,
    /// Append the objective value to every trace row.
    #[arg(long)]
    pub objective: bool,
    #[arg(long)]
    pub low: PathBuf,
    #[arg(long)]
    pub sparse: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the generating region map.
    #[arg(long = "regions-out")]
    pub regions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long = "train-fraction", default_value_t = 0.1)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Segment(a) => cmd_segment(&a),
        Command::Decompose(a) => cmd_decompose(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn segment_cube(cube: &Cube, regions: usize, compactness: f64) -> Result<LabelMap, CliError> {
    if regions == 1 {
        return Ok(LabelMap::single(cube.rows(), cube.cols()));
    }
    let band = pca_first_component(cube)?;
    Ok(slic_segment(&band, regions, compactness)?)
}

pub fn cmd_segment(a: &SegmentArgs) -> Result<(), CliError> {
    let cube = read_cube(&a.input)?;
    let lm = segment_cube(&cube, a.regions, a.compactness)?;
    io::write_labels(&a.output, lm.rows(), lm.cols(), lm.as_slice())
        .map_err(|e| io_error(&a.output, e))
}

/// Solver configuration from defaults, then the preset, then explicit flags.
pub fn decompose_config(a: &DecomposeArgs) -> Result<(SolverConfig, Option<usize>), CliError> {
    let mut cfg = SolverConfig::default();
    let mut regions = None;
    if let Some(name) = &a.preset {
        let p = preset(name)
            .ok_or_else(|| CliError::new(ErrorKind::Input, format!("unknown preset {name:?}")))?;
        cfg.p = p.p;
        cfg.alpha = p.alpha;
        cfg.beta = p.beta;
        regions = Some(p.regions);
    }
    if let Some(v) = a.p {
        cfg.p = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    if let Some(v) = a.rho {
        cfg.rho = v;
    }
    if let Some(v) = a.mu0 {
        cfg.mu0 = v;
    }
    if let Some(v) = a.mu_max {
        cfg.mu_max = v;
    }
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.max_iter {
        cfg.max_iter = v;
    }
    if a.fixed_point_shrink {
        cfg.shrink_rule = ShrinkRule::FixedPoint;
    }
    cfg.track_objective = a.objective;
    if a.regions.is_some() {
        regions = a.regions;
    }
    cfg.validate()?;
    Ok((cfg, regions))
}

pub fn format_trace(d: &Decomposition) -> String {
    let mut out = String::new();
    writeln!(out, "# converged={} iterations={}", d.converged, d.iterations).unwrap();
    match &d.objective_trace {
        Some(_) => out.push_str("iter,residual,mu,objective\n"),
        None => out.push_str("iter,residual,mu\n"),
    }
    for i in 0..d.residual_trace.len() {
        write!(out, "{},{:e},{:e}", i + 1, d.residual_trace[i], d.mu_trace[i]).unwrap();
        if let Some(obj) = &d.objective_trace {
            write!(out, ",{:e}", obj[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn cmd_decompose(a: &DecomposeArgs) -> Result<(), CliError> {
    let cube = read_cube(&a.input)?;
    let (cfg, regions) = decompose_config(a)?;
    let lm = match (a.regions_override, &a.labels) {
        (Some(n), _) => segment_cube(&cube, n, a.compactness)?,
        (None, Some(path)) => {
            let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
            io::load_labelmap(&bytes)?
        }
        (None, None) => segment_cube(&cube, regions.unwrap_or(1), a.compactness)?,
    };
    let d = solve(&cube, &lm, &cfg)?;
    write_file(&a.low, io::encode_cube(&d.low_rank))?;
    write_file(&a.sparse, io::encode_cube(&d.sparse))?;
    write_file(&a.trace, format_trace(&d))
}

/// Parses a flat `key=value` scene description.
///
/// Required keys: `rows`, `cols`, `bands`, `materials`. Optional: `cells`
/// (default `2*materials`), `corruption_rate` (0.05), `corruption_magnitude`
/// (1.0), `seed` (0). Blank lines and `#` comments are ignored.
pub fn parse_scene_spec(text: &str) -> Result<SceneSpec, CliError> {
    let bad = |m: String| CliError::new(ErrorKind::Input, m);
    let mut kv = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("spec line {}: expected key=value", n + 1)))?;
        let k = k.trim();
        const KEYS: [&str; 8] = [
            "rows",
            "cols",
            "bands",
            "materials",
            "cells",
            "corruption_rate",
            "corruption_magnitude",
            "seed",
        ];
        if !KEYS.contains(&k) {
            return Err(bad(format!("spec line {}: unknown key {k:?}", n + 1)));
        }
        if kv.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(bad(format!("spec line {}: duplicate key {k:?}", n + 1)));
        }
    }
    fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str, default: Option<T>) -> Result<T, CliError> {
        match kv.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| CliError::new(ErrorKind::Input, format!("spec key {key}: bad value {v:?}"))),
            None => default.ok_or_else(|| CliError::new(ErrorKind::Input, format!("spec key {key} missing"))),
        }
    }
    let materials: usize = get(&kv, "materials", None)?;
    let spec = SceneSpec::generate(
        get(&kv, "rows", None)?,
        get(&kv, "cols", None)?,
        get(&kv, "bands", None)?,
        materials,
        get(&kv, "cells", Some(2 * materials))?,
        get(&kv, "corruption_rate", Some(0.05))?,
        get(&kv, "corruption_magnitude", Some(1.0))?,
        get(&kv, "seed", Some(0))?,
    )?;
    Ok(spec)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.spec).map_err(|e| io_error(&a.spec, e))?;
    let spec = parse_scene_spec(&text)?;
    let scene = synth_scene(&spec)?;
    write_file(&a.observed, io::encode_cube(&scene.observed))?;
    write_file(&a.clean, io::encode_cube(&scene.clean))?;
    let t = &scene.truth;
    io::write_labels(&a.truth, t.rows, t.cols, &t.classes).map_err(|e| io_error(&a.truth, e))?;
    if let Some(path) = &a.regions_out {
        let r = &scene.regions;
        io::write_labels(path, r.rows(), r.cols(), r.as_slice()).map_err(|e| io_error(path, e))?;
    }
    Ok(())
}

pub fn format_metrics(runs: &[Metrics]) -> String {
    let mut out = String::from("repeat,oa,aa,kappa\n");
    for (i, m) in runs.iter().enumerate() {
        writeln!(out, "{},{},{},{}", i + 1, m.oa, m.aa, m.kappa).unwrap();
    }
    let n = runs.len().max(1) as f64;
    let mean = |f: fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    writeln!(
        out,
        "mean,{},{},{}",
        mean(|m| m.oa),
        mean(|m| m.aa),
        mean(|m| m.kappa)
    )
    .unwrap();
    out
}

pub fn read_truth(path: &Path) -> Result<ClassGrid, CliError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let grid = io::decode_labels(&bytes)?;
    Ok(ClassGrid::new(
        grid.rows,
        grid.cols,
        grid.labels.iter().map(|&l| l as usize).collect(),
    )?)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let features = read_cube(&a.input)?;
    let truth = read_truth(&a.truth)?;
    if !(a.train_fraction > 0.0 && a.train_fraction <= 1.0) {
        return Err(CliError::new(
            ErrorKind::Input,
            format!("train fraction {} outside (0, 1]", a.train_fraction),
        ));
    }
    let runs = evaluate_repeats(&features, &truth, a.train_fraction, a.repeats, a.seed)?;
    write_file(&a.output, format_metrics(&runs))
}
