//! Smooth convex objectives and step-size rules.

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};

/// Tolerance of the golden-section line search.
pub const GOLDEN_TOLERANCE: f64 = 1e-10;
/// Iteration cap of the golden-section line search.
pub const GOLDEN_MAX_ITER: usize = 200;
/// Replacement for an unbounded away-step interval.
pub const ETA_MAX_CAP: f64 = 1e12;

/// A differentiable convex function on `R^n`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Smoothness constant `L`, when known.
    fn smoothness(&self) -> Option<f64>;

    /// Strong convexity constant `mu`, when known.
    fn strong_convexity(&self) -> Option<f64> {
        None
    }

    /// Unconstrained minimizer of `eta -> f(x + eta d)` for objectives where it
    /// has a closed form. `grad` is the gradient at `x`.
    fn exact_step(&self, _x: &[f64], _grad: &[f64], _d: &[f64]) -> Option<f64> {
        None
    }
}

/// `f(x) = |A x - y|^2`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: DenseMatrix,
    y: Vec<f64>,
    lipschitz: f64,
}

impl LeastSquares {
    pub fn new(a: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        if a.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                actual: y.len(),
            });
        }
        let lipschitz = 2.0 * a.spectral_norm_sq();
        Ok(LeastSquares { a, y, lipschitz })
    }

    pub fn design(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn target(&self) -> &[f64] {
        &self.y
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.a.mul_vec(x);
        for (ri, yi) in r.iter_mut().zip(&self.y) {
            *ri -= yi;
        }
        r
    }
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = self.residual(x);
        dot(&r, &r)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.a.tr_mul_vec(&self.residual(x));
        g.iter_mut().for_each(|v| *v *= 2.0);
        g
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn exact_step(&self, _x: &[f64], grad: &[f64], d: &[f64]) -> Option<f64> {
        let ad = self.a.mul_vec(d);
        let curvature = 2.0 * dot(&ad, &ad);
        Some(quadratic_vertex(-dot(grad, d), curvature))
    }
}

/// `f(x) = |x - c|^2`, the strongly convex quadratic used by the synthetic
/// simplex instances.
#[derive(Debug, Clone)]
pub struct SquaredDistance {
    center: Vec<f64>,
}

impl SquaredDistance {
    pub fn new(center: Vec<f64>) -> Self {
        SquaredDistance { center }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl Objective for SquaredDistance {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, b)| 2.0 * (a - b)).collect()
    }

    fn smoothness(&self) -> Option<f64> {
        Some(2.0)
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(2.0)
    }

    fn exact_step(&self, _x: &[f64], grad: &[f64], d: &[f64]) -> Option<f64> {
        Some(quadratic_vertex(-dot(grad, d), 2.0 * dot(d, d)))
    }
}

/// Minimizer of `eta -> -slope * eta + curvature / 2 * eta^2` on `[0, inf)`.
fn quadratic_vertex(slope: f64, curvature: f64) -> f64 {
    if slope <= 0.0 {
        0.0
    } else if curvature <= 0.0 {
        f64::INFINITY
    } else {
        slope / curvature
    }
}

/// Mean logistic loss `(1/m) sum log(1 + exp(-y_i <a_i, x>))`.
#[derive(Debug, Clone)]
pub struct Logistic {
    features: DenseMatrix,
    labels: Vec<f64>,
    lipschitz: f64,
}

impl Logistic {
    pub fn new(features: DenseMatrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if features.rows() == 0 {
            return Err(Error::InvalidInput("logistic objective needs at least one sample".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::InvalidInput(format!("labels must be -1 or +1, got {bad}")));
        }
        let lipschitz = features.spectral_norm_sq() / (4.0 * features.rows() as f64);
        Ok(Logistic {
            features,
            labels,
            lipschitz,
        })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(-z))` without overflow.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Objective for Logistic {
    fn dim(&self) -> usize {
        self.features.cols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let margins = self.features.mul_vec(x);
        let total: f64 = margins
            .iter()
            .zip(&self.labels)
            .map(|(m, y)| softplus(-y * m))
            .sum();
        total / self.labels.len() as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let m = self.labels.len() as f64;
        let margins = self.features.mul_vec(x);
        let weights: Vec<f64> = margins
            .iter()
            .zip(&self.labels)
            .map(|(mi, y)| -y * sigmoid(-y * mi) / m)
            .collect();
        self.features.tr_mul_vec(&weights)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

/// Step-size rule families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Exact minimization along the direction (closed form when available,
    /// golden section otherwise).
    LineSearch,
    /// `clamp(<-g, d> / (L |d|^2), 0, eta_max)`.
    ShortStep,
    /// `eta = ell / (t + ell)`.
    OpenLoop { ell: f64 },
    Fixed { eta: f64 },
    /// Backtracking on a local smoothness estimate: the estimate shrinks by
    /// `shrink` before each step and grows by `growth` until sufficient
    /// decrease holds.
    Adaptive { shrink: f64, growth: f64 },
}

impl StepRule {
    pub const fn adaptive() -> Self {
        StepRule::Adaptive {
            shrink: 0.9,
            growth: 2.0,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            StepRule::LineSearch => "line-search",
            StepRule::ShortStep => "short-step",
            StepRule::OpenLoop { .. } => "open-loop",
            StepRule::Fixed { .. } => "fixed",
            StepRule::Adaptive { .. } => "adaptive",
        }
    }
}

impl std::fmt::Display for StepRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepRule::OpenLoop { ell } => write!(f, "open-loop:{ell}"),
            StepRule::Fixed { eta } => write!(f, "fixed:{eta}"),
            other => f.write_str(other.name()),
        }
    }
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: Option<f64>| -> Result<f64> {
            match a {
                Some(v) => v.parse().map_err(|_| Error::Parse(format!("bad step parameter `{v}`"))),
                None => default.ok_or_else(|| Error::Parse(format!("step rule `{name}` needs a parameter"))),
            }
        };
        match name {
            "line-search" | "linesearch" => Ok(StepRule::LineSearch),
            "short-step" | "shortstep" => Ok(StepRule::ShortStep),
            "open-loop" | "openloop" => Ok(StepRule::OpenLoop {
                ell: num(arg, Some(2.0))?,
            }),
            "fixed" => Ok(StepRule::Fixed { eta: num(arg, None)? }),
            "adaptive" => Ok(StepRule::adaptive()),
            other => Err(Error::Parse(format!("unknown step rule `{other}`"))),
        }
    }
}

/// Stateful step-size selection. Only the adaptive rule carries state (its
/// running smoothness estimate).
#[derive(Debug, Clone)]
pub struct StepSizer {
    rule: StepRule,
    estimate: Option<f64>,
}

impl StepSizer {
    pub fn new(rule: StepRule) -> Self {
        StepSizer {
            rule,
            estimate: None,
        }
    }

    pub fn rule(&self) -> StepRule {
        self.rule
    }

    /// Picks `eta` in `[0, eta_max]` for the move `x + eta d` at iteration `t`.
    pub fn step(
        &mut self,
        objective: &dyn Objective,
        x: &[f64],
        grad: &[f64],
        d: &[f64],
        eta_max: f64,
        t: usize,
    ) -> Result<f64> {
        let eta_max = if eta_max.is_finite() { eta_max } else { ETA_MAX_CAP };
        if eta_max <= 0.0 {
            return Ok(0.0);
        }
        let dd = dot(d, d);
        if dd == 0.0 {
            return Ok(0.0);
        }
        let slope = -dot(grad, d);
        let eta = match self.rule {
            StepRule::LineSearch => {
                if slope <= 0.0 {
                    0.0
                } else {
                    match objective.exact_step(x, grad, d) {
                        Some(eta) => eta,
                        None => golden_section(|e| objective.value(&along(x, d, e)), 0.0, eta_max),
                    }
                }
            }
            StepRule::ShortStep => {
                let l = objective.smoothness().ok_or(Error::MissingConstant {
                    rule: "short-step",
                    constant: "smoothness",
                })?;
                slope / (l * dd)
            }
            StepRule::OpenLoop { ell } => ell / (t as f64 + ell),
            StepRule::Fixed { eta } => eta,
            StepRule::Adaptive { shrink, growth } => {
                if slope <= 0.0 {
                    0.0
                } else {
                    self.backtrack(objective, x, grad, d, slope, dd, eta_max, shrink, growth)
                }
            }
        };
        Ok(clamp(eta, eta_max))
    }

    #[allow(clippy::too_many_arguments)]
    fn backtrack(
        &mut self,
        objective: &dyn Objective,
        x: &[f64],
        grad: &[f64],
        d: &[f64],
        slope: f64,
        dd: f64,
        eta_max: f64,
        shrink: f64,
        growth: f64,
    ) -> f64 {
        let prev = match self.estimate {
            Some(l) => l,
            None => objective
                .smoothness()
                .unwrap_or_else(|| local_curvature(objective, x, grad, d, dd)),
        };
        let fx = objective.value(x);
        let mut m = (shrink * prev).max(f64::MIN_POSITIVE);
        let mut eta = 0.0;
        for _ in 0..100 {
            eta = (slope / (m * dd)).min(eta_max);
            let bound = fx - eta * slope + 0.5 * eta * eta * m * dd;
            if objective.value(&along(x, d, eta)) <= bound {
                break;
            }
            m *= growth;
        }
        self.estimate = Some(m);
        eta
    }
}

/// Stateless entry point: `eta` for the move `x + eta d`.
pub fn choose_step(
    rule: StepRule,
    objective: &dyn Objective,
    x: &[f64],
    d: &[f64],
    eta_max: f64,
    t: usize,
) -> Result<f64> {
    let grad = objective.gradient(x);
    StepSizer::new(rule).step(objective, x, &grad, d, eta_max, t)
}

fn clamp(eta: f64, eta_max: f64) -> f64 {
    if eta.is_nan() || eta <= 0.0 {
        0.0
    } else if eta >= eta_max {
        eta_max
    } else {
        eta
    }
}

fn along(x: &[f64], d: &[f64], eta: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + eta * b).collect()
}

fn local_curvature(objective: &dyn Objective, x: &[f64], grad: &[f64], d: &[f64], dd: f64) -> f64 {
    let h = 1e-6;
    let g2 = objective.gradient(&along(x, d, h));
    let diff: f64 = g2.iter().zip(grad).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (diff / (h * dd.sqrt())).max(1e-8)
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_MAX_ITER {
        if (b - a).abs() <= GOLDEN_TOLERANCE * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // The endpoints are candidates too: a monotone function has its minimum there.
    [(lo, f(lo)), (mid, f(mid)), (hi, f(hi))]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .map(|p| p.0)
        .unwrap_or(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ident_ls(y: Vec<f64>) -> LeastSquares {
        LeastSquares::new(DenseMatrix::identity(2), y).unwrap()
    }

    #[test]
    fn least_squares_examples() {
        let f = ident_ls(vec![0.0, 0.0]);
        assert_eq!(f.value(&[1.0, 0.0]), 1.0);
        assert_eq!(f.gradient(&[1.0, 0.0]), vec![2.0, 0.0]);
        assert!((f.smoothness().unwrap() - 2.0).abs() < 1e-12);
        let f = ident_ls(vec![1.0, 1.0]);
        assert_eq!(f.value(&[1.0, 1.0]), 0.0);
        assert_eq!(f.gradient(&[1.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn logistic_at_origin_is_log2() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 1.0]]).unwrap();
        let f = Logistic::new(a, vec![1.0, -1.0, 1.0]).unwrap();
        assert!((f.value(&[0.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_single_sample_decreases_to_zero() {
        let f = Logistic::new(DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), vec![1.0]).unwrap();
        let mut prev = f64::INFINITY;
        for t in [0.0, 1.0, 5.0, 20.0, 100.0, 800.0] {
            let v = f.value(&[t, 0.0]);
            assert!(v < prev && v >= 0.0);
            prev = v;
        }
        assert!(prev < 1e-300);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        let a = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(Logistic::new(a, vec![0.0]).is_err());
    }

    #[test]
    fn line_search_quadratic_example() {
        // f = |x - (1,0)|^2, x = 0, d = e1: <-g, d> = 2, 2|d|^2 = 2, eta = 1.
        let f = ident_ls(vec![1.0, 0.0]);
        let eta = choose_step(StepRule::LineSearch, &f, &[0.0, 0.0], &[1.0, 0.0], 1.0, 0).unwrap();
        assert_eq!(eta, 1.0);
        let eta = choose_step(StepRule::LineSearch, &f, &[0.0, 0.0], &[1.0, 0.0], 0.25, 0).unwrap();
        assert_eq!(eta, 0.25);
    }

    #[test]
    fn ascent_direction_gives_zero() {
        let f = ident_ls(vec![1.0, 0.0]);
        for rule in [StepRule::LineSearch, StepRule::ShortStep, StepRule::adaptive()] {
            let eta = choose_step(rule, &f, &[0.0, 0.0], &[-1.0, 0.0], 1.0, 0).unwrap();
            assert_eq!(eta, 0.0, "{rule}");
        }
    }

    #[test]
    fn open_loop_first_step_is_one() {
        let f = ident_ls(vec![1.0, 0.0]);
        let eta = choose_step(StepRule::OpenLoop { ell: 2.0 }, &f, &[0.0, 0.0], &[1.0, 0.0], 1.0, 0).unwrap();
        assert_eq!(eta, 1.0);
        let eta = choose_step(StepRule::OpenLoop { ell: 2.0 }, &f, &[0.0, 0.0], &[1.0, 0.0], 1.0, 2).unwrap();
        assert_eq!(eta, 0.5);
    }

    struct NoConstants;
    impl Objective for NoConstants {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            (x[0] - 0.3).powi(4)
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![4.0 * (x[0] - 0.3).powi(3)]
        }
        fn smoothness(&self) -> Option<f64> {
            None
        }
    }

    #[test]
    fn short_step_needs_smoothness() {
        let err = choose_step(StepRule::ShortStep, &NoConstants, &[0.0], &[1.0], 1.0, 0).unwrap_err();
        assert!(matches!(err, Error::MissingConstant { .. }));
    }

    #[test]
    fn golden_section_on_quartic() {
        let eta = choose_step(StepRule::LineSearch, &NoConstants, &[0.0], &[1.0], 1.0, 0).unwrap();
        assert!((eta - 0.3).abs() < 1e-3, "{eta}");
        let v = NoConstants.value(&[eta]);
        assert!(v < 1e-12);
    }

    #[test]
    fn adaptive_on_generic_objective_decreases() {
        let mut sizer = StepSizer::new(StepRule::adaptive());
        let x = [0.0];
        let g = NoConstants.gradient(&x);
        let eta = sizer.step(&NoConstants, &x, &g, &[1.0], 1.0, 0).unwrap();
        assert!(eta > 0.0 && eta <= 1.0);
        assert!(NoConstants.value(&[eta]) < NoConstants.value(&x));
    }

    #[test]
    fn parse_step_rules() {
        assert_eq!("line-search".parse::<StepRule>().unwrap(), StepRule::LineSearch);
        assert_eq!("open-loop".parse::<StepRule>().unwrap(), StepRule::OpenLoop { ell: 2.0 });
        assert_eq!("open-loop:3".parse::<StepRule>().unwrap(), StepRule::OpenLoop { ell: 3.0 });
        assert_eq!("fixed:0.1".parse::<StepRule>().unwrap(), StepRule::Fixed { eta: 0.1 });
        assert!("fixed".parse::<StepRule>().is_err());
        assert!("newton".parse::<StepRule>().is_err());
    }
}
