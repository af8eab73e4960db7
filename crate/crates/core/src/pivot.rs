//! The pivoting meta-algorithm: a basis matrix `M` of order `n + 2` whose
//! vertex columns carry the active set, and the active set cleanup that
//! re-expresses each new iterate with at most `n + 1` vertices via one
//! simplex-style pivot.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fw_core::{
    run_with, ActiveSet, Algorithm, Budget, CcuOutcome, Cleaned, Cleanup, IterationView, RunOptions,
    TrajectoryRecord,
};
use crate::geometry::{dn_columns, extend, FeasibleRegion, Vertex, VertexKey};
use crate::linalg::{factor, inf_norm_diff, reconstruction_residual, Factorization, SquareMatrix};
use crate::objectives::{Objective, StepRule};

/// Largest accepted `|M lambda - x_ext|_inf` after cleanup.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-7;
/// Barycentric weights at or below this are zeroed after projection.
pub const WEIGHT_FLOOR: f64 = 1e-12;
/// Entries of the pivot direction above `-RATIO_TOLERANCE * max(1, |r|_inf)`
/// are not eligible in the ratio test.
pub const RATIO_TOLERANCE: f64 = 1e-11;

/// Role of a basis column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnTag {
    /// The column is the extended vertex.
    Vertex(Vertex),
    /// A column of the structural block or a merge of it with a vertex.
    Structural,
}

impl ColumnTag {
    pub fn vertex(&self) -> Option<&Vertex> {
        match self {
            ColumnTag::Vertex(v) => Some(v),
            ColumnTag::Structural => None,
        }
    }
}

/// Diagnostics of the pivot taken when a new vertex entered.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotStep {
    /// `-M^{-1} v_ext` for the entering vertex `v`.
    pub r: Vec<f64>,
    /// Barycentric weights before the pivot, with the entering weight last.
    pub mu: Vec<f64>,
    /// Leaving column.
    pub k: usize,
    pub theta: f64,
    /// Whether the first solve found no negative entry and a refactored retry was needed.
    pub retried: bool,
}

/// Output of the cleanup: weights over at most `n + 1` vertices.
#[derive(Debug, Clone)]
pub struct ReducedDecomposition {
    pub active: ActiveSet,
    /// `|M lambda - x_ext|_inf` after projection.
    pub residual: f64,
    pub pivot: Option<PivotStep>,
    /// Number of vertex columns merged into structural ones.
    pub merged: usize,
    /// Whether the weights had to be recomputed from a fresh solve.
    pub recovered: bool,
}

impl ReducedDecomposition {
    pub fn size(&self) -> usize {
        self.active.len()
    }
}

/// Basis matrix, column tags, barycentric weights and the factorization.
#[derive(Debug, Clone)]
pub struct PivotState {
    n: usize,
    matrix: SquareMatrix,
    tags: Vec<ColumnTag>,
    lambda: Vec<f64>,
    factorization: Option<Factorization>,
    columns: HashMap<VertexKey, usize>,
    factorizations: usize,
}

/// `M = [x0_ext | D_n]`, `lambda = e_1`.
pub fn init_pivot(x0: &Vertex, n: usize) -> Result<PivotState> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if x0.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x0.dim(),
        });
    }
    let mut cols = Vec::with_capacity(n + 2);
    cols.push(x0.extended_column());
    cols.extend(dn_columns(n));
    let matrix = SquareMatrix::from_columns(cols)?;
    let mut tags = vec![ColumnTag::Structural; n + 2];
    tags[0] = ColumnTag::Vertex(x0.clone());
    let mut lambda = vec![0.0; n + 2];
    lambda[0] = 1.0;
    let mut state = PivotState {
        n,
        matrix,
        tags,
        lambda,
        factorization: None,
        columns: HashMap::from([(x0.key(), 0)]),
        factorizations: 0,
    };
    state.factorization()?;
    Ok(state)
}

impl PivotState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn tags(&self) -> &[ColumnTag] {
        &self.tags
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Column holding vertex `key`, if any.
    pub fn column_of(&self, key: VertexKey) -> Option<usize> {
        self.columns.get(&key).copied()
    }

    /// Number of factorizations computed so far.
    pub fn factorization_count(&self) -> usize {
        self.factorizations
    }

    /// The current factorization, computed on demand.
    pub fn factorization(&mut self) -> Result<&Factorization> {
        if self.factorization.is_none() {
            self.refactor()?;
        }
        Ok(self.factorization.as_ref().expect("just factored"))
    }

    fn refactor(&mut self) -> Result<()> {
        self.factorizations += 1;
        self.factorization = Some(factor(&self.matrix)?);
        Ok(())
    }

    /// Active set cleanup. `beta` are the weights after an update and
    /// `entering` the vertex of their support that owns no column (if any).
    pub fn asc(&mut self, beta: &ActiveSet, entering: Option<&Vertex>) -> Result<ReducedDecomposition> {
        let n = self.n;
        if beta.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: beta.dim(),
            });
        }
        let missing: Vec<&Vertex> = beta.vertices().filter(|v| !self.columns.contains_key(&v.key())).collect();
        if missing.len() > 1 {
            return Err(Error::InvariantViolation(format!(
                "{} vertices of the new support own no basis column",
                missing.len()
            )));
        }
        if missing.first().map(|v| v.key()) != entering.map(|v| v.key()) {
            return Err(Error::InvariantViolation(
                "entering vertex does not match the vertices without a basis column".into(),
            ));
        }
        let weight_of = |key: VertexKey| beta.weight(key).unwrap_or(0.0);

        let mut pivot = None;
        let mut lambda: Vec<f64> = self
            .tags
            .iter()
            .map(|t| t.vertex().map_or(0.0, |v| weight_of(v.key())))
            .collect();
        if let Some(v) = entering {
            let beta_v = weight_of(v.key());
            let v_ext = v.extended_column().to_dense(n + 2);
            let neg: Vec<f64> = v_ext.iter().map(|e| -e).collect();
            let (r, retried) = match self.pivot_direction(&neg)? {
                Some(r) => (r, false),
                None => {
                    self.refactor()?;
                    match self.pivot_direction(&neg)? {
                        Some(r) => (r, true),
                        None => {
                            let r = self.factorization()?.solve(&neg)?;
                            let min_entry = r.iter().copied().fold(f64::INFINITY, f64::min);
                            return Err(Error::NoNegativeEntry { min_entry });
                        }
                    }
                }
            };
            let cutoff = -RATIO_TOLERANCE * r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut k = usize::MAX;
            let mut best = f64::INFINITY;
            for (i, (&ri, &mi)) in r.iter().zip(&lambda).enumerate() {
                if ri < cutoff {
                    let ratio = -mi / ri;
                    if ratio < best {
                        best = ratio;
                        k = i;
                    }
                }
            }
            let theta = best;
            let mut mu = lambda.clone();
            mu.push(beta_v);
            for (i, (li, ri)) in lambda.iter_mut().zip(&r).enumerate() {
                *li = if i == k { beta_v + theta } else { *li + theta * ri };
            }
            self.set_vertex_column(k, v.clone())?;
            pivot = Some(PivotStep {
                r,
                mu,
                k,
                theta,
                retried,
            });
        }

        self.lambda = self.clean_weights(&lambda, beta);
        let x_ext = extend(beta.x());
        let mut residual = reconstruction_residual(&self.matrix, &self.lambda, &x_ext);
        let mut recovered = false;
        if residual > RECONSTRUCTION_TOLERANCE {
            self.refactor()?;
            let fresh = self.factorization()?.solve(&x_ext)?;
            self.lambda = self.clean_weights(&fresh, beta);
            residual = reconstruction_residual(&self.matrix, &self.lambda, &x_ext);
            recovered = true;
            if residual > RECONSTRUCTION_TOLERANCE {
                return Err(Error::ReconstructionDrift {
                    residual,
                    tolerance: RECONSTRUCTION_TOLERANCE,
                });
            }
        }

        let merged = self.merge_unused_columns()?;

        let mut alpha = Vec::with_capacity(beta.len());
        for v in beta.vertices() {
            if let Some(&col) = self.columns.get(&v.key()) {
                if self.lambda[col] > 0.0 {
                    alpha.push((v.clone(), self.lambda[col]));
                }
            }
        }
        let active = ActiveSet::from_weights(n, alpha)?;
        Ok(ReducedDecomposition {
            active,
            residual,
            pivot,
            merged,
            recovered,
        })
    }

    /// `-M^{-1} v_ext`, or `None` when it has no usable negative entry.
    fn pivot_direction(&mut self, neg_v: &[f64]) -> Result<Option<Vec<f64>>> {
        let r = self.factorization()?.solve(neg_v)?;
        let cutoff = -RATIO_TOLERANCE * r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        Ok(r.iter().any(|&ri| ri < cutoff).then_some(r))
    }

    fn set_vertex_column(&mut self, k: usize, v: Vertex) -> Result<()> {
        if let ColumnTag::Vertex(old) = &self.tags[k] {
            self.columns.remove(&old.key());
        }
        self.matrix.set_column(k, v.extended_column())?;
        self.columns.insert(v.key(), k);
        self.tags[k] = ColumnTag::Vertex(v);
        self.factorization = None;
        Ok(())
    }

    /// Projects onto the simplex, zeroes weights of structural columns, of
    /// vertices outside `beta`'s support and below [`WEIGHT_FLOOR`], then renormalizes.
    fn clean_weights(&self, lambda: &[f64], beta: &ActiveSet) -> Vec<f64> {
        let mut out = project_simplex(lambda);
        for (w, tag) in out.iter_mut().zip(&self.tags) {
            let keep = match tag {
                ColumnTag::Vertex(v) => beta.contains(v.key()),
                ColumnTag::Structural => false,
            };
            if !keep || *w <= WEIGHT_FLOOR {
                *w = 0.0;
            }
        }
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|w| *w /= total);
        }
        out
    }

    /// Adds the lowest structural column to every vertex column of zero weight.
    fn merge_unused_columns(&mut self) -> Result<usize> {
        let n = self.n;
        let ell = (0..n + 2)
            .find(|&i| self.matrix.get(n, i) != 0.0)
            .ok_or_else(|| Error::InvariantViolation("basis has no structural column".into()))?;
        let anchor = self.matrix.column(ell).clone();
        let mut merged = 0;
        for i in 0..n + 2 {
            if self.lambda[i] == 0.0 && self.matrix.get(n, i) == 0.0 {
                let col = self.matrix.column(i).add(&anchor);
                self.matrix.set_column(i, col)?;
                if let ColumnTag::Vertex(v) = &self.tags[i] {
                    self.columns.remove(&v.key());
                }
                self.tags[i] = ColumnTag::Structural;
                merged += 1;
            }
        }
        if merged > 0 {
            self.factorization = None;
        }
        Ok(merged)
    }

    /// Verifies the cleanup postconditions for the update `beta -> reduced`;
    /// returns the first violation found.
    pub fn check_properties(&mut self, beta: &ActiveSet, reduced: &ReducedDecomposition) -> Result<()> {
        let n = self.n;
        let fail = |msg: String| Err(Error::InvariantViolation(msg));
        // Invertibility and sign pattern of the two bottom rows.
        self.factorization()?;
        for i in 0..n + 2 {
            if self.matrix.get(n, i) < 0.0 {
                return fail(format!("row n+1 entry {} of column {i} is negative", self.matrix.get(n, i)));
            }
            if self.matrix.get(n + 1, i) < 1.0 {
                return fail(format!("row n+2 entry {} of column {i} is below 1", self.matrix.get(n + 1, i)));
            }
        }
        // Positive weights sit on vertex columns of S and T.
        for (i, &w) in self.lambda.iter().enumerate() {
            if w > 0.0 {
                let Some(v) = self.tags[i].vertex() else {
                    return fail(format!("positive weight on structural column {i}"));
                };
                if !reduced.active.contains(v.key()) || !beta.contains(v.key()) {
                    return fail(format!("column {i} carries weight but its vertex is not in S and T"));
                }
                if self.matrix.column(i) != &v.extended_column() {
                    return fail(format!("column {i} does not equal its extended vertex"));
                }
            }
        }
        // Same iterate.
        let drift = inf_norm_diff(beta.x(), reduced.active.x());
        if drift > 1e-10 {
            return fail(format!("iterate moved by {drift:e} during cleanup"));
        }
        // Zero in row n+1 exactly on columns holding active vertices.
        for i in 0..n + 2 {
            if self.matrix.get(n, i) == 0.0 {
                match self.tags[i].vertex() {
                    Some(v) if reduced.active.contains(v.key()) && self.matrix.column(i) == &v.extended_column() => {}
                    _ => return fail(format!("column {i} has a zero in row n+1 but holds no active vertex")),
                }
            }
        }
        for v in reduced.active.vertices() {
            match self.columns.get(&v.key()) {
                Some(&i) if self.matrix.column(i) == &v.extended_column() => {}
                _ => return fail(format!("active vertex {} owns no column", v.key())),
            }
        }
        if reduced.active.vertices().any(|v| !beta.contains(v.key())) {
            return fail("S is not a subset of T".into());
        }
        if reduced.size() > n + 1 {
            return fail(format!("|S| = {} exceeds n + 1 = {}", reduced.size(), n + 1));
        }
        Ok(())
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let sum: f64 = v.iter().sum();
    let eps = 4.0 * f64::EPSILON * v.len() as f64;
    if v.iter().all(|&x| x >= 0.0) && (sum - 1.0).abs() <= eps {
        return v.to_vec();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Runs the pivoting cleanup after every update.
#[derive(Debug, Clone)]
pub struct PivotCleanup {
    n: usize,
    debug_checks: bool,
    state: Option<PivotState>,
    /// Most recent cleanup output.
    last: Option<ReducedDecomposition>,
}

impl PivotCleanup {
    pub fn new(n: usize, debug_checks: bool) -> Self {
        PivotCleanup {
            n,
            debug_checks,
            state: None,
            last: None,
        }
    }

    pub fn state(&self) -> Option<&PivotState> {
        self.state.as_ref()
    }

    pub fn last(&self) -> Option<&ReducedDecomposition> {
        self.last.as_ref()
    }
}

impl Cleanup for PivotCleanup {
    fn start(&mut self, x0: &Vertex) -> Result<()> {
        self.state = Some(init_pivot(x0, self.n)?);
        self.last = None;
        Ok(())
    }

    fn apply(&mut self, outcome: &CcuOutcome) -> Result<Cleaned> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::InvariantViolation("pivot state used before start".into()))?;
        let reduced = state.asc(&outcome.weights, outcome.entering.as_ref())?;
        if self.debug_checks {
            state.check_properties(&outcome.weights, &reduced)?;
        }
        let cleaned = Cleaned {
            active: reduced.active.clone(),
            residual: Some(reduced.residual),
        };
        self.last = Some(reduced);
        Ok(cleaned)
    }

    fn reports(&self) -> bool {
        true
    }
}

/// Runs `algorithm` with the pivoting cleanup after each update.
pub fn run_pm(
    algorithm: Algorithm,
    region: &FeasibleRegion,
    objective: &dyn Objective,
    rule: StepRule,
    budget: Budget,
) -> Result<Vec<TrajectoryRecord>> {
    run_pm_with(algorithm, region, objective, rule, &RunOptions::new(budget), false, &mut |_| {})
}

/// [`run_pm`] with explicit options, optional per-iteration postcondition
/// checks, and an observer.
pub fn run_pm_with(
    algorithm: Algorithm,
    region: &FeasibleRegion,
    objective: &dyn Objective,
    rule: StepRule,
    options: &RunOptions,
    debug_checks: bool,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<Vec<TrajectoryRecord>> {
    let mut cleanup = PivotCleanup::new(region.ambient_dim(), debug_checks);
    run_with(algorithm, region, objective, rule, options, &mut cleanup, observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, i: usize) -> Vertex {
        Vertex::unit(n, i, 1.0)
    }

    #[test]
    fn init_example() {
        let mut s = init_pivot(&e(2, 0), 2).unwrap();
        let cols: Vec<Vec<f64>> = (0..4).map(|i| s.matrix().column(i).to_dense(4)).collect();
        assert_eq!(
            cols,
            vec![
                vec![1.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0, 1.0],
                vec![0.0, 1.0, 1.0, 1.0],
                vec![0.0, 0.0, 1.0, 1.0],
            ]
        );
        assert_eq!(s.lambda(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.matrix().row(2), vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(reconstruction_residual(s.matrix(), s.lambda(), &[1.0, 0.0, 0.0, 1.0]), 0.0);
        assert!(s.factorization().is_ok());
    }

    #[test]
    fn two_dimensional_walkthrough() {
        let mut s = init_pivot(&e(2, 0), 2).unwrap();
        let beta = ActiveSet::from_weights(2, vec![(e(2, 0), 0.5), (e(2, 1), 0.5)]).unwrap();
        let red = s.asc(&beta, Some(&e(2, 1))).unwrap();
        let p = red.pivot.clone().unwrap();
        assert_eq!(p.r, vec![-1.0, 1.0, -1.0, 0.0]);
        assert_eq!(p.k, 2);
        assert_eq!(p.theta, 0.0);
        assert_eq!(s.lambda(), &[0.5, 0.0, 0.5, 0.0]);
        assert_eq!(red.size(), 2);
        assert_eq!(red.active.weight(e(2, 0).key()), Some(0.5));
        assert_eq!(red.active.weight(e(2, 1).key()), Some(0.5));
        assert_eq!(red.merged, 0);
        s.check_properties(&beta, &red).unwrap();
    }

    #[test]
    fn relabel_branch_keeps_weights() {
        let mut s = init_pivot(&e(2, 0), 2).unwrap();
        let beta = ActiveSet::from_weights(2, vec![(e(2, 0), 0.5), (e(2, 1), 0.5)]).unwrap();
        s.asc(&beta, Some(&e(2, 1))).unwrap();
        let beta2 = ActiveSet::from_weights(2, vec![(e(2, 0), 0.25), (e(2, 1), 0.75)]).unwrap();
        let before = s.matrix().clone();
        let red = s.asc(&beta2, None).unwrap();
        assert!(red.pivot.is_none());
        assert_eq!(red.active.weight(e(2, 0).key()), Some(0.25));
        assert_eq!(red.active.weight(e(2, 1).key()), Some(0.75));
        assert_eq!(s.matrix(), &before);
        s.check_properties(&beta2, &red).unwrap();
    }

    #[test]
    fn dropped_vertex_is_merged() {
        let mut s = init_pivot(&e(2, 0), 2).unwrap();
        let beta = ActiveSet::from_weights(2, vec![(e(2, 0), 0.5), (e(2, 1), 0.5)]).unwrap();
        s.asc(&beta, Some(&e(2, 1))).unwrap();
        let beta2 = ActiveSet::singleton(e(2, 1));
        let red = s.asc(&beta2, None).unwrap();
        assert_eq!(red.merged, 1);
        assert_eq!(red.size(), 1);
        assert_eq!(s.column_of(e(2, 0).key()), None);
        assert_eq!(s.tags()[0], ColumnTag::Structural);
        s.check_properties(&beta2, &red).unwrap();
    }

    #[test]
    fn mismatched_entering_is_rejected() {
        let mut s = init_pivot(&e(2, 0), 2).unwrap();
        let beta = ActiveSet::from_weights(2, vec![(e(2, 0), 0.5), (e(2, 1), 0.5)]).unwrap();
        assert!(matches!(s.asc(&beta, None), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.6, 0.6, 0.0, 0.0]), vec![0.5, 0.5, 0.0, 0.0]);
        let inside = [0.2, 0.3, 0.5];
        assert_eq!(project_simplex(&inside), inside.to_vec());
        let p = project_simplex(&[1.2, -0.1, 0.3]);
        // Support {0, 2}: theta = (1.2 + 0.3 - 1) / 2 = 0.25.
        let want = [0.95, 0.0, 0.05];
        assert!(inf_norm_diff(&p, &want) < 1e-15, "{p:?}");
    }
}
