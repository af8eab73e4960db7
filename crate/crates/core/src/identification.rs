//! Multipliers, index partitions and identification monitors for problems
//! over the probability simplex.

use crate::error::{Error, Result};
use crate::geometry::Vertex;
use crate::linalg::dot;
use crate::objectives::Objective;

/// Multipliers of `x*` at or above this value are strictly positive.
pub const COMPLEMENTARITY_TOLERANCE: f64 = 1e-9;
/// Smallest band treated as an exact zero multiplier.
pub const ZERO_TOLERANCE: f64 = 1e-12;
/// Largest FW gap accepted for the reference point.
pub const STATIONARITY_TOLERANCE: f64 = 1e-9;

/// `lambda_i(x) = <grad f(x), e_i - x>` for every coordinate.
pub fn multipliers(objective: &dyn Objective, x: &[f64]) -> Vec<f64> {
    multipliers_from_gradient(&objective.gradient(x), x)
}

pub fn multipliers_from_gradient(grad: &[f64], x: &[f64]) -> Vec<f64> {
    let gx = dot(grad, x);
    grad.iter().map(|g| g - gx).collect()
}

/// FW gap on the simplex written through the multipliers: `-min_i lambda_i`.
pub fn gap_from_multipliers(lambdas: &[f64]) -> f64 {
    (-lambdas.iter().copied().fold(f64::INFINITY, f64::min)).max(0.0)
}

/// Partitions at a reference stationary point and an iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierReport {
    /// Multipliers at the reference point.
    pub lambdas: Vec<f64>,
    /// Coordinates with zero multiplier at the reference point.
    pub i_set: Vec<usize>,
    /// Coordinates with strictly positive multiplier at the reference point.
    pub i_complement: Vec<usize>,
    /// Coordinates of the complement where the iterate is exactly zero.
    pub o_set: Vec<usize>,
    /// Coordinates of the complement where the iterate is nonzero.
    pub j_set: Vec<usize>,
    /// Largest reference multiplier outside `o_set`.
    pub delta_t: f64,
    /// Smallest reference multiplier on the complement; `None` when it is empty.
    pub delta_min: Option<f64>,
    /// `delta_min / (3 L + max(delta_t, delta_min))`; `None` when the
    /// complement is empty.
    pub h_star: Option<f64>,
}

impl MultiplierReport {
    /// Whether the iterate already vanishes on every coordinate with a
    /// positive reference multiplier.
    pub fn identified(&self) -> bool {
        self.j_set.is_empty()
    }
}

/// Builds the partitions for reference point `x_star` and iterate `x_t`
/// with smoothness constant `l`.
pub fn partition_report(objective: &dyn Objective, x_star: &[f64], x_t: &[f64], l: f64) -> Result<MultiplierReport> {
    let n = objective.dim();
    for len in [x_star.len(), x_t.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, actual: len });
        }
    }
    if !(l > 0.0) {
        return Err(Error::InvalidInput(format!("smoothness constant must be positive, got {l}")));
    }
    let lambdas = multipliers(objective, x_star);
    let gap = gap_from_multipliers(&lambdas);
    if gap > STATIONARITY_TOLERANCE {
        return Err(Error::NotStationary { gap });
    }
    // A reference point known only to accuracy `gap` has zero multipliers of
    // about that size.
    let zero_tol = ZERO_TOLERANCE.max(10.0 * gap);
    let mut i_set = Vec::new();
    let mut i_complement = Vec::new();
    for (i, &lam) in lambdas.iter().enumerate() {
        if lam >= COMPLEMENTARITY_TOLERANCE {
            i_complement.push(i);
        } else if lam <= zero_tol {
            i_set.push(i);
        } else {
            return Err(Error::DegenerateOptimum { index: i, value: lam });
        }
    }
    let (o_set, j_set): (Vec<usize>, Vec<usize>) = i_complement.iter().partition(|&&i| x_t[i] == 0.0);
    let delta_t = (0..n)
        .filter(|i| o_set.binary_search(i).is_err())
        .map(|i| lambdas[i])
        .fold(0.0, f64::max);
    let delta_min = i_complement.iter().map(|&i| lambdas[i]).reduce(f64::min);
    let h_star = delta_min.map(|d| d / (3.0 * l + delta_t.max(d)));
    Ok(MultiplierReport {
        lambdas,
        i_set,
        i_complement,
        o_set,
        j_set,
        delta_t,
        delta_min,
        h_star,
    })
}

/// Outcome of scanning a run for face identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentificationSummary {
    /// First iteration from which every active set lies in the face.
    pub r: Option<usize>,
    /// Largest active set size from `r` on.
    pub max_size_after: Option<usize>,
}

/// Scans per-iteration active sets (`active_sets[t]` holds the vertices of
/// iteration `t`) against a face given by its coordinate support.
pub fn identification_monitor(active_sets: &[Vec<Vertex>], face: &[usize]) -> IdentificationSummary {
    let inside = |set: &Vec<Vertex>| set.iter().all(|v| v.support().all(|i| face.contains(&i)));
    let r = match active_sets.iter().rposition(|s| !inside(s)) {
        None if active_sets.is_empty() => None,
        None => Some(0),
        Some(last_out) if last_out + 1 < active_sets.len() => Some(last_out + 1),
        Some(_) => None,
    };
    let max_size_after = r.map(|r| active_sets[r..].iter().map(Vec::len).max().unwrap_or(0));
    IdentificationSummary { r, max_size_after }
}

/// Parses `1,4,7` (optionally prefixed with `face=`) into sorted coordinates.
pub fn parse_face(spec: &str) -> Result<Vec<usize>> {
    let body = spec.strip_prefix("face=").unwrap_or(spec);
    let mut face = body
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad face index `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    if face.is_empty() {
        return Err(Error::Parse("face needs at least one coordinate".into()));
    }
    face.sort_unstable();
    face.dedup();
    Ok(face)
}
