//! Instance generators, experiment configuration, and trajectory output.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fw_core::{run_with, Algorithm, Budget, NoCleanup, RunOptions, TrajectoryRecord};
use crate::geometry::{parse_spec, FeasibleRegion, RegionKind, SpecParams, Vertex};
use crate::identification::{identification_monitor, IdentificationSummary};
use crate::linalg::DenseMatrix;
use crate::objectives::{LeastSquares, Logistic, Objective, SquaredDistance, StepRule};
use crate::pivot::PivotCleanup;

/// Default distance by which the off-face coordinates of the quadratic's
/// center are pushed below zero.
pub const DEFAULT_FACE_MARGIN: f64 = 0.1;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| r.sample(StandardNormal)).collect();
    DenseMatrix::new(rows, cols, data).expect("shape matches data")
}

/// A sparse recovery problem `min |A x - y|^2` over an l1 ball.
#[derive(Debug, Clone)]
pub struct SignalInstance {
    pub region: FeasibleRegion,
    pub objective: LeastSquares,
    pub x_true: Vec<f64>,
}

/// Gaussian sensing matrix, `floor(sparsity_frac * n)` Gaussian nonzeros at
/// random positions, unit Gaussian noise, radius `|x_true|_1 / tau_f`.
pub fn gen_signal_recovery(m: usize, n: usize, sparsity_frac: f64, tau_f: f64, seed: u64) -> Result<SignalInstance> {
    if m == 0 || n <= m {
        return Err(Error::InvalidInput(format!("need n > m >= 1, got m = {m}, n = {n}")));
    }
    if !(sparsity_frac > 0.0 && sparsity_frac < 1.0) {
        return Err(Error::InvalidInput(format!("sparsity fraction must lie in (0, 1), got {sparsity_frac}")));
    }
    if !(tau_f > 0.0) {
        return Err(Error::InvalidInput(format!("tau_f must be positive, got {tau_f}")));
    }
    let mut r = rng(seed);
    let a = gaussian_matrix(&mut r, m, n);
    let nnz = ((sparsity_frac * n as f64).floor() as usize).max(1);
    let mut x_true = vec![0.0; n];
    for i in sample(&mut r, n, nnz).into_iter() {
        x_true[i] = r.sample(StandardNormal);
    }
    let mut y = a.mul_vec(&x_true);
    for yi in &mut y {
        *yi += r.sample::<f64, _>(StandardNormal);
    }
    let tau = x_true.iter().map(|v| v.abs()).sum::<f64>() / tau_f;
    Ok(SignalInstance {
        region: FeasibleRegion::l1_ball(n, tau)?,
        objective: LeastSquares::new(a, y)?,
        x_true,
    })
}

/// Synthetic classification data for the logistic objective.
#[derive(Debug, Clone)]
pub struct LogisticInstance {
    pub objective: Logistic,
    /// The planted separator.
    pub separator: Vec<f64>,
}

/// Number of nonzeros in the planted separator.
pub const SEPARATOR_NNZ: usize = 5;
/// Fraction of labels flipped after planting.
pub const LABEL_FLIP_RATE: f64 = 0.1;

/// Gaussian features, labels `sign(<a_i, w>)` for a sparse planted `w`, then
/// each label flipped with probability 0.1.
pub fn gen_logistic(m: usize, n: usize, seed: u64) -> Result<LogisticInstance> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("m and n must be positive".into()));
    }
    let mut r = rng(seed);
    let features = gaussian_matrix(&mut r, m, n);
    let mut separator = vec![0.0; n];
    for i in sample(&mut r, n, SEPARATOR_NNZ.min(n)).into_iter() {
        separator[i] = r.sample(StandardNormal);
    }
    let scores = features.mul_vec(&separator);
    let labels = scores
        .iter()
        .map(|&s| {
            let label = if s >= 0.0 { 1.0 } else { -1.0 };
            if r.gen::<f64>() < LABEL_FLIP_RATE {
                -label
            } else {
                label
            }
        })
        .collect();
    Ok(LogisticInstance {
        objective: Logistic::new(features, labels)?,
        separator,
    })
}

/// A quadratic over the simplex whose minimizer lies in the relative interior
/// of a known face.
#[derive(Debug, Clone)]
pub struct FaceInstance {
    pub region: FeasibleRegion,
    pub objective: SquaredDistance,
    /// Coordinates spanning the optimal face, increasing.
    pub face: Vec<usize>,
    pub x_star: Vec<f64>,
}

/// [`gen_face_instance_with_margin`] with the default margin.
pub fn gen_face_instance(n: usize, face_dim: usize, seed: u64) -> Result<FaceInstance> {
    gen_face_instance_with_margin(n, face_dim, seed, DEFAULT_FACE_MARGIN)
}

/// Picks `face_dim + 1` coordinates and a point `p` on them with every entry
/// at least `min(0.05, 0.5 / (face_dim + 1))`. The objective is `|x - q|^2`
/// with `q = p` on the face and `q = -margin` elsewhere, so `x* = p` and the
/// off-face multipliers at `x*` all equal `2 margin`. A zero margin gives
/// `f = |x - p|^2`.
pub fn gen_face_instance_with_margin(n: usize, face_dim: usize, seed: u64, margin: f64) -> Result<FaceInstance> {
    let k = face_dim + 1;
    if k > n {
        return Err(Error::InvalidInput(format!("face dimension {face_dim} needs n > {face_dim}, got n = {n}")));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidInput(format!("margin must be nonnegative, got {margin}")));
    }
    let mut r = rng(seed);
    let mut face: Vec<usize> = sample(&mut r, n, k).into_vec();
    face.sort_unstable();
    let floor = 0.05f64.min(0.5 / k as f64);
    let u: Vec<f64> = (0..k).map(|_| r.gen::<f64>() + 1e-3).collect();
    let total: f64 = u.iter().sum();
    let mut x_star = vec![0.0; n];
    for (&i, ui) in face.iter().zip(&u) {
        x_star[i] = floor + (1.0 - k as f64 * floor) * ui / total;
    }
    let center = (0..n)
        .map(|i| if face.binary_search(&i).is_ok() { x_star[i] } else { -margin })
        .collect();
    Ok(FaceInstance {
        region: FeasibleRegion::simplex(n)?,
        objective: SquaredDistance::new(center),
        face,
        x_star,
    })
}

/// Writes rows `target, features...`.
pub fn write_instance_csv(path: &Path, features: &DenseMatrix, target: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Io(e.to_string()))?;
    for (i, t) in target.iter().enumerate() {
        let mut row = Vec::with_capacity(features.cols() + 1);
        row.push(format!("{t:e}"));
        row.extend(features.row(i).iter().map(|v| format!("{v:e}")));
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows `target, features...`; lines starting with `#` are skipped.
pub fn read_instance_csv(path: &Path) -> Result<(DenseMatrix, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("{}:{}: bad number `{s}`", path.display(), line + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() < 2 {
            return Err(Error::Parse(format!("{}:{}: need a target and at least one feature", path.display(), line + 1)));
        }
        target.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    Ok((DenseMatrix::from_rows(&rows)?, target))
}

/// Objective descriptions accepted on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    LeastSquaresFile(PathBuf),
    LogisticFile(PathBuf),
    QuadraticSimplex {
        n: usize,
        seed: Option<u64>,
        face_dim: usize,
        margin: f64,
    },
}

impl FromStr for ObjectiveSpec {
    type Err = Error;

    /// `lstsq:file=a.csv`, `logistic:file=a.csv`,
    /// `quadratic-simplex:n=50,seed=7,facedim=4[,margin=0.1]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_spec(s)?;
        let p = SpecParams::new(s, params);
        match name.as_str() {
            "lstsq" => {
                p.only(&["file"])?;
                Ok(ObjectiveSpec::LeastSquaresFile(p.require::<String>("file")?.into()))
            }
            "logistic" => {
                p.only(&["file"])?;
                Ok(ObjectiveSpec::LogisticFile(p.require::<String>("file")?.into()))
            }
            "quadratic-simplex" => {
                p.only(&["n", "seed", "facedim", "margin"])?;
                Ok(ObjectiveSpec::QuadraticSimplex {
                    n: p.require("n")?,
                    seed: p.get("seed")?,
                    face_dim: p.require("facedim")?,
                    margin: p.get("margin")?.unwrap_or(DEFAULT_FACE_MARGIN),
                })
            }
            other => Err(Error::Parse(format!("unknown objective kind `{other}`"))),
        }
    }
}

/// An objective ready to run, plus the optimal face when it is known.
pub struct BuiltObjective {
    pub objective: Box<dyn Objective>,
    pub face: Option<Vec<usize>>,
    pub x_star: Option<Vec<f64>>,
}

impl ObjectiveSpec {
    /// Loads or generates the objective; `default_seed` fills a missing seed.
    pub fn build(&self, default_seed: u64) -> Result<BuiltObjective> {
        match self {
            ObjectiveSpec::LeastSquaresFile(path) => {
                let (a, y) = read_instance_csv(path)?;
                Ok(BuiltObjective {
                    objective: Box::new(LeastSquares::new(a, y)?),
                    face: None,
                    x_star: None,
                })
            }
            ObjectiveSpec::LogisticFile(path) => {
                let (a, labels) = read_instance_csv(path)?;
                Ok(BuiltObjective {
                    objective: Box::new(Logistic::new(a, labels)?),
                    face: None,
                    x_star: None,
                })
            }
            ObjectiveSpec::QuadraticSimplex {
                n,
                seed,
                face_dim,
                margin,
            } => {
                let inst = gen_face_instance_with_margin(*n, *face_dim, seed.unwrap_or(default_seed), *margin)?;
                Ok(BuiltObjective {
                    objective: Box::new(inst.objective),
                    face: Some(inst.face),
                    x_star: Some(inst.x_star),
                })
            }
        }
    }
}

/// A base algorithm, optionally wrapped in the pivoting cleanup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Method {
    pub algorithm: Algorithm,
    pub pivoting: bool,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::plain(Algorithm::Fw),
        Method::plain(Algorithm::Afw),
        Method::plain(Algorithm::Bpfw),
        Method::pivoting(Algorithm::Fw),
        Method::pivoting(Algorithm::Afw),
        Method::pivoting(Algorithm::Bpfw),
    ];

    pub const fn plain(algorithm: Algorithm) -> Self {
        Method {
            algorithm,
            pivoting: false,
        }
    }

    pub const fn pivoting(algorithm: Algorithm) -> Self {
        Method {
            algorithm,
            pivoting: true,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pivoting {
            write!(f, "p-{}", self.algorithm)
        } else {
            write!(f, "{}", self.algorithm)
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("p-") {
            Some(base) => Ok(Method::pivoting(base.parse()?)),
            None => Ok(Method::plain(s.parse()?)),
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub region: String,
    pub objective: String,
    pub step: StepRule,
    pub max_iter: usize,
    pub gap_tol: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub debug_checks: bool,
    pub identify: Option<Vec<usize>>,
    pub record_timing: bool,
}

/// Records of a run plus optional identification summary.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<TrajectoryRecord>,
    pub identification: Option<IdentificationSummary>,
}

/// Runs a method and optionally collects the active sets for the monitor.
pub fn run_method(
    method: Method,
    region: &FeasibleRegion,
    objective: &dyn Objective,
    rule: StepRule,
    options: &RunOptions,
    debug_checks: bool,
    face: Option<&[usize]>,
) -> Result<ExperimentOutcome> {
    let mut sets: Vec<Vec<Vertex>> = Vec::new();
    let track = face.is_some();
    let mut observer = |view: &crate::fw_core::IterationView<'_>| {
        if track {
            sets.push(view.active.vertices().cloned().collect());
        }
    };
    let records = if method.pivoting {
        let mut cleanup = PivotCleanup::new(region.ambient_dim(), debug_checks);
        run_with(method.algorithm, region, objective, rule, options, &mut cleanup, &mut observer)?
    } else {
        run_with(method.algorithm, region, objective, rule, options, &mut NoCleanup, &mut observer)?
    };
    let identification = face.map(|f| identification_monitor(&sets, f));
    Ok(ExperimentOutcome { records, identification })
}

/// Runs the configured experiment and writes `out` plus `out.meta`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let region: FeasibleRegion = config.region.parse()?;
    let spec: ObjectiveSpec = config.objective.parse()?;
    let built = spec.build(config.seed)?;
    if built.objective.dim() != region.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: region.ambient_dim(),
            actual: built.objective.dim(),
        });
    }
    if let Some(face) = &config.identify {
        if !matches!(region.kind(), RegionKind::ProbabilitySimplex) {
            return Err(Error::InvalidInput("face identification is defined on the simplex only".into()));
        }
        if face.iter().any(|&i| i >= region.ambient_dim()) {
            return Err(Error::InvalidInput("face index out of range".into()));
        }
    }
    let mut options = RunOptions::new(Budget::new(config.max_iter, config.gap_tol));
    options.record_timing = config.record_timing;
    let outcome = run_method(
        config.method,
        &region,
        built.objective.as_ref(),
        config.step,
        &options,
        config.debug_checks,
        config.identify.as_deref(),
    )?;
    write_trajectory_csv(&config.out, &outcome.records)?;
    write_meta(&meta_path(&config.out), config, &outcome)?;
    Ok(outcome)
}

pub fn write_trajectory_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TrajectoryRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TrajectoryRecord::CSV_HEADER => {}
        _ => return Err(Error::Parse(format!("{}: missing trajectory header", path.display()))),
    }
    lines.filter(|l| !l.is_empty()).map(TrajectoryRecord::from_csv_row).collect()
}

/// `<out>.meta` next to the CSV.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn write_meta(path: &Path, config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let last = outcome.records.last();
    let face = config
        .identify
        .as_ref()
        .map(|f| f.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "))
        .unwrap_or_default();
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let lines = [
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("alg", config.method.to_string()),
        ("region", config.region.clone()),
        ("objective", config.objective.clone()),
        ("step", config.step.to_string()),
        ("max_iter", config.max_iter.to_string()),
        ("gap_tol", format!("{:e}", config.gap_tol)),
        ("seed", config.seed.to_string()),
        ("debug_checks", config.debug_checks.to_string()),
        ("timing", config.record_timing.to_string()),
        ("identify", face),
        ("records", outcome.records.len().to_string()),
        ("final_primal", last.map(|r| format!("{:e}", r.primal)).unwrap_or_default()),
        ("final_gap", last.map(|r| format!("{:e}", r.fw_gap)).unwrap_or_default()),
        (
            "max_active_set_size",
            opt(outcome.records.iter().map(|r| r.active_set_size).max()),
        ),
        ("identification_r", opt(outcome.identification.and_then(|s| s.r))),
        (
            "identification_max_size",
            opt(outcome.identification.and_then(|s| s.max_size_after)),
        ),
    ];
    for (k, v) in lines {
        writeln!(f, "{k}={v}")?;
    }
    Ok(())
}
