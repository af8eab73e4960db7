//! Frank-Wolfe, away-step and blended pairwise steps as convex-combination
//! updates, the iteration driver, and the trajectory record.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{FeasibleRegion, Vertex, VertexKey};
use crate::linalg::dot;
use crate::objectives::{Objective, StepRule, StepSizer, ETA_MAX_CAP};

/// Weights at or below this value are treated as zero.
pub const DROP_THRESHOLD: f64 = 1e-12;

/// Vertices with strictly positive weights summing to one, plus the iterate
/// they represent.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    entries: Vec<(Vertex, f64)>,
    x: Vec<f64>,
}

impl ActiveSet {
    pub fn singleton(v: Vertex) -> Self {
        let x = v.to_dense();
        ActiveSet {
            entries: vec![(v, 1.0)],
            x,
        }
    }

    /// Builds an active set from raw weights: duplicates are merged, weights
    /// at or below [`DROP_THRESHOLD`] are dropped, and the rest renormalized.
    pub fn from_weights(dim: usize, raw: Vec<(Vertex, f64)>) -> Result<Self> {
        let mut index: HashMap<VertexKey, usize> = HashMap::new();
        let mut merged: Vec<(Vertex, f64)> = Vec::with_capacity(raw.len());
        for (v, w) in raw {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            if !w.is_finite() {
                return Err(Error::InvariantViolation(format!("non-finite weight {w}")));
            }
            match index.get(&v.key()) {
                Some(&pos) => merged[pos].1 += w,
                None => {
                    index.insert(v.key(), merged.len());
                    merged.push((v, w));
                }
            }
        }
        if let Some((v, w)) = merged.iter().find(|(_, w)| *w < -DROP_THRESHOLD) {
            return Err(Error::InvariantViolation(format!(
                "negative weight {w:e} on vertex {}",
                v.key()
            )));
        }
        merged.retain(|(_, w)| *w > DROP_THRESHOLD);
        let total: f64 = merged.iter().map(|(_, w)| w).sum();
        if merged.is_empty() || total <= 0.0 {
            return Err(Error::InvariantViolation("active set became empty".into()));
        }
        for e in &mut merged {
            e.1 /= total;
        }
        let x = combine(dim, &merged);
        Ok(ActiveSet { entries: merged, x })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn entries(&self) -> &[(Vertex, f64)] {
        &self.entries
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.entries.iter().map(|(v, _)| v)
    }

    pub fn weight(&self, key: VertexKey) -> Option<f64> {
        self.entries.iter().find(|(v, _)| v.key() == key).map(|(_, w)| *w)
    }

    pub fn contains(&self, key: VertexKey) -> bool {
        self.weight(key).is_some()
    }

    /// The iterate `sum alpha_s s`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Distance between the cached iterate and a fresh recombination.
    pub fn reconstruction_error(&self) -> f64 {
        let fresh = combine(self.dim(), &self.entries);
        crate::linalg::inf_norm_diff(&fresh, &self.x)
    }
}

fn combine(dim: usize, entries: &[(Vertex, f64)]) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for (v, w) in entries {
        v.axpy_into(*w, &mut x);
    }
    x
}

/// Which update produced an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// The starting point; no step taken yet.
    Start,
    Fw,
    Away,
    Pairwise,
    /// An away or pairwise step of maximal length, removing the away vertex.
    Drop,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Start => "start",
            StepKind::Fw => "fw",
            StepKind::Away => "away",
            StepKind::Pairwise => "pairwise",
            StepKind::Drop => "drop",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start" => Ok(StepKind::Start),
            "fw" => Ok(StepKind::Fw),
            "away" => Ok(StepKind::Away),
            "pairwise" => Ok(StepKind::Pairwise),
            "drop" => Ok(StepKind::Drop),
            other => Err(Error::Parse(format!("unknown step kind `{other}`"))),
        }
    }
}

/// Result of one convex-combination update.
#[derive(Debug, Clone)]
pub struct CcuOutcome {
    /// New weights; their support is the new active set `T`.
    pub weights: ActiveSet,
    /// The vertex of `T` absent from the previous active set, if any.
    pub entering: Option<Vertex>,
    pub step_kind: StepKind,
    pub eta: f64,
    pub eta_max: f64,
    /// The vertex losing weight in an away or pairwise step.
    pub away: Option<Vertex>,
}

impl CcuOutcome {
    pub fn x(&self) -> &[f64] {
        self.weights.x()
    }
}

/// The base algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Fw,
    Afw,
    Bpfw,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Fw => "fw",
            Algorithm::Afw => "afw",
            Algorithm::Bpfw => "bpfw",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fw" => Ok(Algorithm::Fw),
            "afw" => Ok(Algorithm::Afw),
            "bpfw" => Ok(Algorithm::Bpfw),
            other => Err(Error::Parse(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// `max_v <g, x - v>` for the gradient `g` at `x`, clamped at zero.
pub fn gap_from_gradient(region: &FeasibleRegion, x: &[f64], grad: &[f64]) -> f64 {
    let v = region.lmo(grad);
    (dot(grad, x) - v.dot(grad)).max(0.0)
}

/// Frank-Wolfe gap at `x`.
pub fn fw_gap(objective: &dyn Objective, region: &FeasibleRegion, x: &[f64]) -> f64 {
    gap_from_gradient(region, x, &objective.gradient(x))
}

pub fn fw_step(
    state: &ActiveSet,
    objective: &dyn Objective,
    region: &FeasibleRegion,
    rule: StepRule,
    t: usize,
) -> Result<CcuOutcome> {
    let grad = objective.gradient(state.x());
    step(Algorithm::Fw, state, objective, region, &grad, &mut StepSizer::new(rule), t)
}

pub fn afw_step(
    state: &ActiveSet,
    objective: &dyn Objective,
    region: &FeasibleRegion,
    rule: StepRule,
    t: usize,
) -> Result<CcuOutcome> {
    let grad = objective.gradient(state.x());
    step(Algorithm::Afw, state, objective, region, &grad, &mut StepSizer::new(rule), t)
}

pub fn bpfw_step(
    state: &ActiveSet,
    objective: &dyn Objective,
    region: &FeasibleRegion,
    rule: StepRule,
    t: usize,
) -> Result<CcuOutcome> {
    let grad = objective.gradient(state.x());
    step(Algorithm::Bpfw, state, objective, region, &grad, &mut StepSizer::new(rule), t)
}

/// One update of `algorithm` from `state`, with `grad` the gradient at the
/// current iterate.
pub fn step(
    algorithm: Algorithm,
    state: &ActiveSet,
    objective: &dyn Objective,
    region: &FeasibleRegion,
    grad: &[f64],
    sizer: &mut StepSizer,
    t: usize,
) -> Result<CcuOutcome> {
    let x = state.x();
    let v = region.lmo(grad);
    let gx = dot(grad, x);
    let fw_slope = v.dot(grad) - gx;
    match algorithm {
        Algorithm::Fw => frank_wolfe(state, objective, grad, sizer, t, v),
        Algorithm::Afw => {
            let (a, ga) = extreme_vertex(state, grad, true);
            let away_slope = if state.len() == 1 { 0.0 } else { gx - ga };
            if fw_slope > away_slope {
                away_step(state, objective, grad, sizer, t, a)
            } else {
                frank_wolfe(state, objective, grad, sizer, t, v)
            }
        }
        Algorithm::Bpfw => {
            let (a, ga) = extreme_vertex(state, grad, true);
            let (w, gw) = extreme_vertex(state, grad, false);
            if fw_slope >= gw - ga {
                pairwise_step(state, objective, grad, sizer, t, a, w)
            } else {
                frank_wolfe(state, objective, grad, sizer, t, v)
            }
        }
    }
}

/// The active vertex maximizing (`away`) or minimizing `<g, s>`, ties broken
/// towards the lowest key.
fn extreme_vertex<'a>(state: &'a ActiveSet, grad: &[f64], away: bool) -> (&'a Vertex, f64) {
    let mut best: Option<(&Vertex, f64)> = None;
    for v in state.vertices() {
        let val = v.dot(grad);
        let better = match best {
            None => true,
            Some((b, bv)) => {
                let strictly = if away { val > bv } else { val < bv };
                strictly || (val == bv && v.key() < b.key())
            }
        };
        if better {
            best = Some((v, val));
        }
    }
    best.expect("active set is nonempty")
}

fn frank_wolfe(
    state: &ActiveSet,
    objective: &dyn Objective,
    grad: &[f64],
    sizer: &mut StepSizer,
    t: usize,
    v: Vertex,
) -> Result<CcuOutcome> {
    let x = state.x();
    let mut d = v.to_dense();
    for (di, xi) in d.iter_mut().zip(x) {
        *di -= xi;
    }
    let eta = sizer.step(objective, x, grad, &d, 1.0, t)?;
    let mut raw: Vec<(Vertex, f64)> = if eta >= 1.0 {
        Vec::new()
    } else {
        state.entries().iter().map(|(s, a)| (s.clone(), (1.0 - eta) * a)).collect()
    };
    raw.push((v.clone(), eta.min(1.0)));
    let weights = ActiveSet::from_weights(state.dim(), raw)?;
    let entering = (!state.contains(v.key()) && weights.contains(v.key())).then_some(v);
    Ok(CcuOutcome {
        weights,
        entering,
        step_kind: StepKind::Fw,
        eta,
        eta_max: 1.0,
        away: None,
    })
}

fn away_step(
    state: &ActiveSet,
    objective: &dyn Objective,
    grad: &[f64],
    sizer: &mut StepSizer,
    t: usize,
    a: &Vertex,
) -> Result<CcuOutcome> {
    let x = state.x();
    let alpha_a = state.weight(a.key()).expect("away vertex is active");
    let eta_max = if alpha_a < 1.0 {
        (alpha_a / (1.0 - alpha_a)).min(ETA_MAX_CAP)
    } else {
        ETA_MAX_CAP
    };
    let mut d = x.to_vec();
    for &(i, val) in a.coords() {
        d[i] -= val;
    }
    let eta = sizer.step(objective, x, grad, &d, eta_max, t)?;
    let dropped = eta >= eta_max;
    let raw = state
        .entries()
        .iter()
        .map(|(s, w)| {
            let nw = if s.key() != a.key() {
                (1.0 + eta) * w
            } else if dropped {
                0.0
            } else {
                (1.0 + eta) * w - eta
            };
            (s.clone(), nw)
        })
        .collect();
    let weights = ActiveSet::from_weights(state.dim(), raw)?;
    let removed = !weights.contains(a.key());
    Ok(CcuOutcome {
        weights,
        entering: None,
        step_kind: if removed { StepKind::Drop } else { StepKind::Away },
        eta,
        eta_max,
        away: Some(a.clone()),
    })
}

fn pairwise_step(
    state: &ActiveSet,
    objective: &dyn Objective,
    grad: &[f64],
    sizer: &mut StepSizer,
    t: usize,
    a: &Vertex,
    w: &Vertex,
) -> Result<CcuOutcome> {
    let x = state.x();
    let alpha_a = state.weight(a.key()).expect("away vertex is active");
    let mut d = vec![0.0; x.len()];
    w.axpy_into(1.0, &mut d);
    a.axpy_into(-1.0, &mut d);
    let eta = sizer.step(objective, x, grad, &d, alpha_a, t)?;
    let dropped = eta >= alpha_a && a.key() != w.key();
    let raw = state
        .entries()
        .iter()
        .map(|(s, wt)| {
            let nw = if s.key() == w.key() && s.key() == a.key() {
                *wt
            } else if s.key() == w.key() {
                if dropped {
                    wt + alpha_a
                } else {
                    wt + eta
                }
            } else if s.key() == a.key() {
                if dropped {
                    0.0
                } else {
                    wt - eta
                }
            } else {
                *wt
            };
            (s.clone(), nw)
        })
        .collect();
    let weights = ActiveSet::from_weights(state.dim(), raw)?;
    let removed = !weights.contains(a.key());
    Ok(CcuOutcome {
        weights,
        entering: None,
        step_kind: if removed { StepKind::Drop } else { StepKind::Pairwise },
        eta,
        eta_max: alpha_a,
        away: Some(a.clone()),
    })
}

/// Stopping rule: at most `max_iter` steps, or earlier once the FW gap is at
/// or below `gap_tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_iter: usize,
    pub gap_tol: f64,
}

impl Budget {
    pub fn new(max_iter: usize, gap_tol: f64) -> Self {
        Budget { max_iter, gap_tol }
    }
}

/// Options of a run beyond the stopping rule.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub budget: Budget,
    /// Starting vertex; defaults to the LMO answer for the gradient at the origin.
    pub x0: Option<Vertex>,
    /// When false, `wall_time_ns` is written as zero so that output is
    /// reproducible byte for byte.
    pub record_timing: bool,
}

impl RunOptions {
    pub fn new(budget: Budget) -> Self {
        RunOptions {
            budget,
            x0: None,
            record_timing: true,
        }
    }

    pub fn with_x0(mut self, x0: Vertex) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn without_timing(mut self) -> Self {
        self.record_timing = false;
        self
    }
}

/// One row of a run log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub primal: f64,
    pub fw_gap: f64,
    pub active_set_size: usize,
    /// `|T|` before cleanup; only pivoting runs fill it.
    pub pre_cleanup_size: Option<usize>,
    pub step_kind: StepKind,
    pub wall_time_ns: u64,
    pub reconstruction_residual: Option<f64>,
}

impl TrajectoryRecord {
    pub const CSV_HEADER: &'static str =
        "iter,primal,fw_gap,active_set_size,pre_cleanup_size,step_kind,wall_time_ns,reconstruction_residual";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{},{},{},{},{}",
            self.iter,
            self.primal,
            self.fw_gap,
            self.active_set_size,
            self.pre_cleanup_size.map(|s| s.to_string()).unwrap_or_default(),
            self.step_kind,
            self.wall_time_ns,
            self.reconstruction_residual.map(|r| format!("{r:e}")).unwrap_or_default(),
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse(format!("expected 8 fields, got {}", fields.len())));
        }
        fn num<T: FromStr>(s: &str, what: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
        }
        fn opt<T: FromStr>(s: &str, what: &str) -> Result<Option<T>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        }
        Ok(TrajectoryRecord {
            iter: num(fields[0], "iter")?,
            primal: num(fields[1], "primal")?,
            fw_gap: num(fields[2], "fw_gap")?,
            active_set_size: num(fields[3], "active_set_size")?,
            pre_cleanup_size: opt(fields[4], "pre_cleanup_size")?,
            step_kind: fields[5].parse()?,
            wall_time_ns: num(fields[6], "wall_time_ns")?,
            reconstruction_residual: opt(fields[7], "reconstruction_residual")?,
        })
    }
}

/// Post-processing of each update, e.g. the pivoting cleanup.
pub trait Cleanup {
    /// Called once with the starting vertex before the first step.
    fn start(&mut self, x0: &Vertex) -> Result<()>;

    /// Maps the update's weights to the weights the next iteration uses.
    fn apply(&mut self, outcome: &CcuOutcome) -> Result<Cleaned>;

    /// Whether records carry `pre_cleanup_size` and a residual.
    fn reports(&self) -> bool;
}

/// Output of [`Cleanup::apply`].
#[derive(Debug, Clone)]
pub struct Cleaned {
    pub active: ActiveSet,
    pub residual: Option<f64>,
}

/// Leaves the weights untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCleanup;

impl Cleanup for NoCleanup {
    fn start(&mut self, _x0: &Vertex) -> Result<()> {
        Ok(())
    }

    fn apply(&mut self, outcome: &CcuOutcome) -> Result<Cleaned> {
        Ok(Cleaned {
            active: outcome.weights.clone(),
            residual: None,
        })
    }

    fn reports(&self) -> bool {
        false
    }
}

/// What an observer sees after each iterate is logged.
#[derive(Debug)]
pub struct IterationView<'a> {
    pub record: &'a TrajectoryRecord,
    pub x: &'a [f64],
    pub gradient: &'a [f64],
    pub active: &'a ActiveSet,
    /// The update that led to this iterate (`None` at the start).
    pub step: Option<&'a CcuOutcome>,
}

/// Runs `algorithm` with the given cleanup, calling `observer` once per
/// logged iterate.
pub fn run_with(
    algorithm: Algorithm,
    region: &FeasibleRegion,
    objective: &dyn Objective,
    rule: StepRule,
    options: &RunOptions,
    cleanup: &mut dyn Cleanup,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<Vec<TrajectoryRecord>> {
    let n = region.ambient_dim();
    if objective.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: objective.dim(),
        });
    }
    let budget = options.budget;
    if !(budget.gap_tol >= 0.0) {
        return Err(Error::InvalidInput(format!("gap tolerance must be nonnegative, got {}", budget.gap_tol)));
    }
    let x0 = match &options.x0 {
        Some(v) => {
            if v.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: v.dim(),
                });
            }
            v.clone()
        }
        None => region.lmo(&objective.gradient(&vec![0.0; n])),
    };
    cleanup.start(&x0)?;
    let reports = cleanup.reports();
    let clock = Instant::now();
    let elapsed = |on: bool| if on { clock.elapsed().as_nanos() as u64 } else { 0 };

    let mut sizer = StepSizer::new(rule);
    let mut active = ActiveSet::singleton(x0);
    let mut last: Option<CcuOutcome> = None;
    let mut residual = reports.then_some(0.0);
    let mut pre_size = reports.then_some(1);
    let mut records = Vec::with_capacity(budget.max_iter.min(100_000) + 1);
    for t in 0.. {
        let grad = objective.gradient(active.x());
        let gap = gap_from_gradient(region, active.x(), &grad);
        let record = TrajectoryRecord {
            iter: t,
            primal: objective.value(active.x()),
            fw_gap: gap,
            active_set_size: active.len(),
            pre_cleanup_size: pre_size,
            step_kind: last.as_ref().map_or(StepKind::Start, |o| o.step_kind),
            wall_time_ns: elapsed(options.record_timing),
            reconstruction_residual: residual,
        };
        observer(&IterationView {
            record: &record,
            x: active.x(),
            gradient: &grad,
            active: &active,
            step: last.as_ref(),
        });
        records.push(record);
        if gap <= budget.gap_tol || t >= budget.max_iter {
            break;
        }
        let at = |e: Error| Error::AtIteration {
            iteration: t + 1,
            source: Box::new(e),
        };
        let outcome = step(algorithm, &active, objective, region, &grad, &mut sizer, t).map_err(at)?;
        let cleaned = cleanup.apply(&outcome).map_err(at)?;
        if reports {
            pre_size = Some(outcome.weights.len());
        }
        residual = cleaned.residual;
        active = cleaned.active;
        last = Some(outcome);
    }
    Ok(records)
}

/// Runs `algorithm` without any cleanup.
pub fn run_plain(
    algorithm: Algorithm,
    region: &FeasibleRegion,
    objective: &dyn Objective,
    rule: StepRule,
    budget: Budget,
) -> Result<Vec<TrajectoryRecord>> {
    run_with(
        algorithm,
        region,
        objective,
        rule,
        &RunOptions::new(budget),
        &mut NoCleanup,
        &mut |_| {},
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::objectives::{LeastSquares, SquaredDistance};

    fn e(n: usize, i: usize) -> Vertex {
        Vertex::unit(n, i, 1.0)
    }

    #[test]
    fn fw_full_jump_and_null_step() {
        let region = FeasibleRegion::simplex(3).unwrap();
        // Minimizer at e2: the exact step from e1 is the whole segment.
        let f = SquaredDistance::new(vec![0.0, 1.0, 0.0]);
        let out = fw_step(&ActiveSet::singleton(e(3, 0)), &f, &region, StepRule::LineSearch, 0).unwrap();
        assert_eq!(out.eta, 1.0);
        assert_eq!(out.weights.len(), 1);
        assert_eq!(out.weights.weight(e(3, 1).key()), Some(1.0));
        assert_eq!(out.entering, Some(e(3, 1)));

        let out = fw_step(&ActiveSet::singleton(e(3, 0)), &f, &region, StepRule::Fixed { eta: 0.0 }, 0).unwrap();
        assert_eq!(out.eta, 0.0);
        assert_eq!(out.weights.len(), 1);
        assert_eq!(out.weights.weight(e(3, 0).key()), Some(1.0));
        assert_eq!(out.entering, None);
    }

    #[test]
    fn fw_half_step_example() {
        let region = FeasibleRegion::simplex(3).unwrap();
        let f = SquaredDistance::new(vec![0.5, 0.5, 0.0]);
        let out = fw_step(&ActiveSet::singleton(e(3, 0)), &f, &region, StepRule::LineSearch, 0).unwrap();
        assert_eq!(out.entering, Some(e(3, 1)));
        assert!((out.eta - 0.5).abs() < 1e-15);
        assert_eq!(out.x(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn afw_maximal_away_step_drops_vertex() {
        let state = ActiveSet::from_weights(2, vec![(e(2, 0), 0.5), (e(2, 1), 0.5)]).unwrap();
        let f = SquaredDistance::new(vec![-1.0, 2.0]);
        let grad = f.gradient(state.x());
        let mut sizer = StepSizer::new(StepRule::Fixed { eta: 5.0 });
        let out = away_step(&state, &f, &grad, &mut sizer, 0, &e(2, 0)).unwrap();
        assert_eq!(out.step_kind, StepKind::Drop);
        assert_eq!(out.eta_max, 1.0);
        assert_eq!(out.eta, 1.0);
        assert_eq!(out.weights.len(), 1);
        assert_eq!(out.weights.weight(e(2, 1).key()), Some(1.0));
        assert_eq!(out.away, Some(e(2, 0)));
    }

    #[test]
    fn afw_prefers_away_when_it_is_steeper() {
        let region = FeasibleRegion::simplex(3).unwrap();
        let state = ActiveSet::from_weights(3, vec![(e(3, 0), 0.2), (e(3, 1), 0.8)]).unwrap();
        // x = (0.2, 0.8, 0); g = 2(x - q) = (2.4, -0.4, 0.0): the FW vertex e2 is
        // already active and the away direction from e1 is steeper.
        let f = SquaredDistance::new(vec![-1.0, 1.0, 0.0]);
        let out = afw_step(&state, &f, &region, StepRule::LineSearch, 0).unwrap();
        assert_eq!(out.away, Some(e(3, 0)));
        assert_eq!(out.step_kind, StepKind::Drop);
    }

    #[test]
    fn afw_singleton_takes_fw_branch() {
        let region = FeasibleRegion::simplex(3).unwrap();
        let f = SquaredDistance::new(vec![0.0, 0.0, 1.0]);
        let out = afw_step(&ActiveSet::singleton(e(3, 0)), &f, &region, StepRule::LineSearch, 0).unwrap();
        assert_eq!(out.step_kind, StepKind::Fw);
    }

    #[test]
    fn afw_two_iterations_reach_optimum() {
        let region = FeasibleRegion::simplex(3).unwrap();
        let f = SquaredDistance::new(vec![0.5, 0.5, 0.0]);
        let options = RunOptions::new(Budget::new(10, 0.0)).with_x0(e(3, 0));
        let recs = run_with(Algorithm::Afw, &region, &f, StepRule::LineSearch, &options, &mut NoCleanup, &mut |_| {}).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].step_kind, StepKind::Fw);
        assert_eq!(recs[1].fw_gap, 0.0);
    }

    #[test]
    fn pairwise_moves_weight_between_two_vertices() {
        let region = FeasibleRegion::simplex(3).unwrap();
        let state = ActiveSet::from_weights(3, vec![(e(3, 0), 0.25), (e(3, 1), 0.25), (e(3, 2), 0.5)]).unwrap();
        // Gradient strongly favours e2 over e3; e1 sits in between.
        let f = SquaredDistance::new(vec![0.25, 1.0, 0.0]);
        let out = bpfw_step(&state, &f, &region, StepRule::LineSearch, 0).unwrap();
        assert!(matches!(out.step_kind, StepKind::Pairwise | StepKind::Drop));
        assert_eq!(out.weights.weight(e(3, 0).key()), Some(0.25));
        let a = out.away.clone().unwrap();
        assert_eq!(a, e(3, 2));
        let total: f64 = out.weights.entries().iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let full = bpfw_step(&state, &f, &region, StepRule::Fixed { eta: 1.0 }, 0).unwrap();
        assert_eq!(full.step_kind, StepKind::Drop);
        assert_eq!(full.weights.weight(e(3, 1).key()), Some(0.75));
        assert!(!full.weights.contains(e(3, 2).key()));
    }

    #[test]
    fn fw_gap_linear_example() {
        let region = FeasibleRegion::simplex(3).unwrap();
        let c = vec![2.0, -1.0, 5.0];
        let x = e(3, 2).to_dense();
        assert_eq!(gap_from_gradient(&region, &x, &c), 6.0);
    }

    #[test]
    fn zero_budget_gives_single_record() {
        let region = FeasibleRegion::l1_ball(2, 1.0).unwrap();
        let f = LeastSquares::new(DenseMatrix::identity(2), vec![0.3, 0.1]).unwrap();
        let recs = run_plain(Algorithm::Fw, &region, &f, StepRule::LineSearch, Budget::new(0, 0.0)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].step_kind, StepKind::Start);
        assert_eq!(recs[0].pre_cleanup_size, None);
    }

    #[test]
    fn from_weights_merges_drops_and_renormalizes() {
        let set = ActiveSet::from_weights(2, vec![(e(2, 0), 0.5), (e(2, 0), 0.25), (e(2, 1), 1e-13)]).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.weight(e(2, 0).key()), Some(1.0));
        assert!(ActiveSet::from_weights(2, vec![(e(2, 0), -0.5), (e(2, 1), 1.5)]).is_err());
        assert!(ActiveSet::from_weights(2, vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rec = TrajectoryRecord {
            iter: 3,
            primal: 0.125,
            fw_gap: 1e-9,
            active_set_size: 2,
            pre_cleanup_size: Some(3),
            step_kind: StepKind::Drop,
            wall_time_ns: 0,
            reconstruction_residual: Some(2.5e-16),
        };
        let row = rec.to_csv_row();
        assert_eq!(row, "3,1.25e-1,1e-9,2,3,drop,0,2.5e-16");
        assert_eq!(TrajectoryRecord::from_csv_row(&row).unwrap(), rec);
        let plain = TrajectoryRecord {
            pre_cleanup_size: None,
            reconstruction_residual: None,
            ..rec
        };
        assert_eq!(plain.to_csv_row(), "3,1.25e-1,1e-9,2,,drop,0,");
    }
}
