//! Feasible regions, their vertices, linear minimization oracles, and the
//! extended embedding `x -> (x, 0, 1)` used by the pivot basis.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::SparseColumn;

/// Canonical identity of a vertex, derived from its nonzero pattern and values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexKey(pub u128);

impl fmt::Display for VertexKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// A vertex of a feasible region, stored sparsely.
#[derive(Debug, Clone)]
pub struct Vertex {
    dim: usize,
    coords: Vec<(usize, f64)>,
    key: VertexKey,
}

impl PartialEq for Vertex {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Vertex {}

impl std::hash::Hash for Vertex {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl Vertex {
    /// Builds a vertex from `(index, value)` pairs; zeros are dropped and
    /// indices sorted so that equal coordinates give equal keys.
    pub fn from_sparse(dim: usize, mut coords: Vec<(usize, f64)>) -> Result<Self> {
        coords.retain(|(_, v)| *v != 0.0);
        coords.sort_by_key(|(i, _)| *i);
        if coords.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate vertex coordinate".into()));
        }
        if let Some(&(i, _)) = coords.last() {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: i + 1,
                });
            }
        }
        if coords.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite vertex coordinate".into()));
        }
        let key = canonical_key(dim, &coords);
        Ok(Vertex { dim, coords, key })
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        let coords = values.iter().copied().enumerate().collect();
        Vertex::from_sparse(values.len(), coords)
    }

    /// The unit vector `scale * e_index`.
    pub fn unit(dim: usize, index: usize, scale: f64) -> Self {
        Vertex::from_sparse(dim, vec![(index, scale)]).expect("index within dimension")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn key(&self) -> VertexKey {
        self.key
    }

    pub fn coords(&self) -> &[(usize, f64)] {
        &self.coords
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coords.iter().map(|(i, _)| *i)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.coords {
            out[i] = v;
        }
        out
    }

    pub fn dot(&self, c: &[f64]) -> f64 {
        self.coords.iter().map(|&(i, v)| v * c[i]).sum()
    }

    /// `out += scale * self`.
    pub fn axpy_into(&self, scale: f64, out: &mut [f64]) {
        for &(i, v) in &self.coords {
            out[i] += scale * v;
        }
    }

    /// The extended column `(v, 0, 1)` in sparse form.
    pub fn extended_column(&self) -> SparseColumn {
        let mut pairs = self.coords.clone();
        pairs.push((self.dim + 1, 1.0));
        SparseColumn::from_pairs(pairs)
    }
}

fn canonical_key(dim: usize, coords: &[(usize, f64)]) -> VertexKey {
    let mut h = Sha256::new();
    h.update((dim as u64).to_le_bytes());
    for &(i, v) in coords {
        h.update((i as u64).to_le_bytes());
        h.update(v.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    VertexKey(u128::from_be_bytes(bytes))
}

/// Vector of length `n + 2` of the form `(x, 0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedVector(Vec<f64>);

impl ExtendedVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for ExtendedVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn extend(x: &[f64]) -> ExtendedVector {
    let mut v = Vec::with_capacity(x.len() + 2);
    v.extend_from_slice(x);
    v.push(0.0);
    v.push(1.0);
    ExtendedVector(v)
}

/// Columns of the structural block `[[I_n, 0], [1^T, 1], [1^T, 1]]`.
pub fn dn_columns(n: usize) -> Vec<SparseColumn> {
    let mut cols: Vec<SparseColumn> = (0..n)
        .map(|i| SparseColumn::from_pairs(vec![(i, 1.0), (n, 1.0), (n + 1, 1.0)]))
        .collect();
    cols.push(SparseColumn::from_pairs(vec![(n, 1.0), (n + 1, 1.0)]));
    cols
}

/// Feasible region families supported by the oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionKind {
    ProbabilitySimplex,
    L1Ball { tau: f64 },
    KSparse { k: usize, tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleRegion {
    n: usize,
    kind: RegionKind,
}

impl FeasibleRegion {
    pub fn simplex(n: usize) -> Result<Self> {
        FeasibleRegion::new(n, RegionKind::ProbabilitySimplex)
    }

    pub fn l1_ball(n: usize, tau: f64) -> Result<Self> {
        FeasibleRegion::new(n, RegionKind::L1Ball { tau })
    }

    pub fn k_sparse(n: usize, k: usize, tau: f64) -> Result<Self> {
        FeasibleRegion::new(n, RegionKind::KSparse { k, tau })
    }

    pub fn new(n: usize, kind: RegionKind) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("ambient dimension must be positive".into()));
        }
        match kind {
            RegionKind::ProbabilitySimplex => {}
            RegionKind::L1Ball { tau } => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
                }
            }
            RegionKind::KSparse { k, tau } => {
                if k == 0 || k > n {
                    return Err(Error::InvalidInput(format!("k must lie in [1, {n}], got {k}")));
                }
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
                }
            }
        }
        Ok(FeasibleRegion { n, kind })
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    /// Dimension of the affine hull.
    pub fn dim(&self) -> usize {
        match self.kind {
            RegionKind::ProbabilitySimplex => self.n - 1,
            RegionKind::L1Ball { .. } | RegionKind::KSparse { .. } => self.n,
        }
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            RegionKind::ProbabilitySimplex => {
                if self.n == 1 {
                    0.0
                } else {
                    std::f64::consts::SQRT_2
                }
            }
            RegionKind::L1Ball { tau } => 2.0 * tau,
            RegionKind::KSparse { k, tau } => 2.0 * tau * (k as f64).sqrt(),
        }
    }

    /// Linear minimization oracle: a vertex minimizing `<c, v>`, ties broken
    /// towards the lowest coordinate index.
    pub fn lmo(&self, c: &[f64]) -> Vertex {
        debug_assert_eq!(c.len(), self.n);
        match self.kind {
            RegionKind::ProbabilitySimplex => {
                let mut best = 0;
                for (i, &ci) in c.iter().enumerate() {
                    if ci < c[best] {
                        best = i;
                    }
                }
                Vertex::unit(self.n, best, 1.0)
            }
            RegionKind::L1Ball { tau } => {
                let mut best = 0;
                for (i, &ci) in c.iter().enumerate() {
                    if ci.abs() > c[best].abs() {
                        best = i;
                    }
                }
                Vertex::unit(self.n, best, signed(tau, c[best]))
            }
            RegionKind::KSparse { k, tau } => {
                let mut idx: Vec<usize> = (0..self.n).collect();
                // Stable sort keeps lower indices first among equal magnitudes.
                idx.sort_by(|&a, &b| c[b].abs().total_cmp(&c[a].abs()));
                let coords = idx[..k].iter().map(|&i| (i, signed(tau, c[i]))).collect();
                Vertex::from_sparse(self.n, coords).expect("valid k-sparse vertex")
            }
        }
    }

    /// Membership test with absolute tolerance `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.n {
            return false;
        }
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        match self.kind {
            RegionKind::ProbabilitySimplex => {
                x.iter().all(|&v| v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            RegionKind::L1Ball { tau } => l1 <= tau + tol,
            RegionKind::KSparse { k, tau } => {
                l1 <= k as f64 * tau + tol && x.iter().all(|v| v.abs() <= tau + tol)
            }
        }
    }
}

/// `-tau * sign(c)` with the convention that zero maps to `+tau`.
fn signed(tau: f64, c: f64) -> f64 {
    if c > 0.0 {
        -tau
    } else {
        tau
    }
}

impl fmt::Display for FeasibleRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RegionKind::ProbabilitySimplex => write!(f, "simplex:n={}", self.n),
            RegionKind::L1Ball { tau } => write!(f, "l1:n={},tau={}", self.n, tau),
            RegionKind::KSparse { k, tau } => write!(f, "ksparse:n={},k={},tau={}", self.n, k, tau),
        }
    }
}

/// Parses `name:key=value,key=value` into the name and its parameters.
pub(crate) fn parse_spec(s: &str) -> Result<(String, Vec<(String, String)>)> {
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n, r),
        None => (s, ""),
    };
    let name = name.trim();
    if name.is_empty() {
        return Err(Error::Parse(format!("missing kind in `{s}`")));
    }
    let mut params = Vec::new();
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value, got `{part}`")))?;
        params.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok((name.to_string(), params))
}

pub(crate) struct SpecParams<'a> {
    spec: &'a str,
    params: Vec<(String, String)>,
}

impl<'a> SpecParams<'a> {
    pub(crate) fn new(spec: &'a str, params: Vec<(String, String)>) -> Self {
        SpecParams { spec, params }
    }

    pub(crate) fn raw(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub(crate) fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}` in `{}`", self.spec))),
        }
    }

    pub(crate) fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Parse(format!("missing `{key}` in `{}`", self.spec)))
    }

    pub(crate) fn only(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.params {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse(format!("unknown key `{k}` in `{}`", self.spec)));
            }
        }
        Ok(())
    }
}

impl FromStr for FeasibleRegion {
    type Err = Error;

    /// Accepts `simplex:n=50`, `l1:n=140,tau=2.5`, `ksparse:n=100,k=10,tau=1.0`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_spec(s)?;
        let p = SpecParams::new(s, params);
        match name.as_str() {
            "simplex" => {
                p.only(&["n"])?;
                FeasibleRegion::simplex(p.require("n")?)
            }
            "l1" => {
                p.only(&["n", "tau"])?;
                FeasibleRegion::l1_ball(p.require("n")?, p.require("tau")?)
            }
            "ksparse" => {
                p.only(&["n", "k", "tau"])?;
                FeasibleRegion::k_sparse(p.require("n")?, p.require("k")?, p.require("tau")?)
            }
            other => Err(Error::Parse(format!("unknown region kind `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lmo_examples() {
        let s = FeasibleRegion::simplex(3).unwrap();
        assert_eq!(s.lmo(&[2.0, -1.0, 5.0]), Vertex::unit(3, 1, 1.0));

        let l1 = FeasibleRegion::l1_ball(3, 1.0).unwrap();
        let v = l1.lmo(&[3.0, -1.0, 2.0]);
        assert_eq!(v.to_dense(), vec![-1.0, 0.0, 0.0]);
        assert_eq!(v.dot(&[3.0, -1.0, 2.0]), -3.0);

        let ks = FeasibleRegion::k_sparse(3, 2, 1.0).unwrap();
        let v = ks.lmo(&[3.0, -1.0, 2.0]);
        assert_eq!(v.to_dense(), vec![-1.0, 0.0, -1.0]);
        assert_eq!(v.dot(&[3.0, -1.0, 2.0]), -5.0);
    }

    #[test]
    fn lmo_ties_go_to_lowest_index() {
        let s = FeasibleRegion::simplex(3).unwrap();
        assert_eq!(s.lmo(&[1.0, 0.0, 0.0]), Vertex::unit(3, 1, 1.0));
        let l1 = FeasibleRegion::l1_ball(3, 2.0).unwrap();
        assert_eq!(l1.lmo(&[1.0, -1.0, 1.0]).to_dense(), vec![-2.0, 0.0, 0.0]);
    }

    #[test]
    fn extend_examples() {
        assert_eq!(extend(&[1.0, 0.0]).as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(extend(&[0.0; 3]).as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(extend(&[0.25, 0.75]).as_slice(), &[0.25, 0.75, 0.0, 1.0]);
    }

    #[test]
    fn dn_blocks() {
        let c = dn_columns(1);
        assert_eq!(c[0].to_dense(3), vec![1.0, 1.0, 1.0]);
        assert_eq!(c[1].to_dense(3), vec![0.0, 1.0, 1.0]);

        let c = dn_columns(2);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].to_dense(4), vec![1.0, 0.0, 1.0, 1.0]);
        assert_eq!(c[1].to_dense(4), vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(c[2].to_dense(4), vec![0.0, 0.0, 1.0, 1.0]);
        for col in dn_columns(5) {
            assert_eq!(col.get(5), 1.0);
            assert_eq!(col.get(6), 1.0);
        }
    }

    #[test]
    fn keys_are_canonical() {
        let a = Vertex::from_sparse(4, vec![(2, 1.5), (0, -1.0), (3, 0.0)]).unwrap();
        let b = Vertex::from_dense(&[-1.0, 0.0, 1.5, 0.0]).unwrap();
        assert_eq!(a.key(), b.key());
        assert_eq!(a.coords(), &[(0, -1.0), (2, 1.5)]);
        let c = Vertex::from_dense(&[-1.0, 0.0, 1.5]).unwrap();
        assert_ne!(a.key(), c.key());
    }

    #[test]
    fn region_metadata() {
        let s = FeasibleRegion::simplex(50).unwrap();
        assert_eq!(s.dim(), 49);
        assert!((s.diameter() - 2f64.sqrt()).abs() < 1e-15);
        let l = FeasibleRegion::l1_ball(7, 2.5).unwrap();
        assert_eq!((l.dim(), l.diameter()), (7, 5.0));
        let k = FeasibleRegion::k_sparse(100, 4, 1.5).unwrap();
        assert_eq!((k.dim(), k.diameter()), (100, 6.0));
    }

    #[test]
    fn parse_region_specs() {
        assert_eq!("simplex:n=50".parse::<FeasibleRegion>().unwrap(), FeasibleRegion::simplex(50).unwrap());
        assert_eq!(
            "l1:n=140,tau=2.5".parse::<FeasibleRegion>().unwrap(),
            FeasibleRegion::l1_ball(140, 2.5).unwrap()
        );
        assert_eq!(
            "ksparse:n=100,k=10,tau=1.0".parse::<FeasibleRegion>().unwrap(),
            FeasibleRegion::k_sparse(100, 10, 1.0).unwrap()
        );
        for bad in ["", "simplex", "simplex:n=x", "cube:n=3", "l1:n=3", "ksparse:n=3,k=4,tau=1", "simplex:n=3,m=2"] {
            assert!(bad.parse::<FeasibleRegion>().is_err(), "{bad}");
        }
    }
}
