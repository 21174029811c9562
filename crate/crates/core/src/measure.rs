//! Concrete distributions: weighted node sets, sparse pair weights, box densities,
//! and the pairings `<T, g>` and `<<S, Theta>>` used by the division check.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{KirError, Result};
use crate::field::{Point, ScalarField};
use crate::quad::{GaussLegendre, NeumaierSum};

/// Pairing `g -> <T, g>` of a distribution on `X` with a function.
pub trait Pairing1: Send + Sync {
    fn pair(&self, g: &dyn Fn(&[f64]) -> f64) -> f64;

    /// `<T, 1>`; infinite when `T` is not a finite measure.
    fn total_mass(&self) -> f64 {
        self.pair(&|_| 1.0)
    }
}

/// Pairing `Theta -> <<S, Theta>>` of a distribution on `X x X` with a two-point function.
pub trait Pairing2: Send + Sync {
    fn pair2(&self, theta: &dyn Fn(&[f64], &[f64]) -> f64) -> f64;
}

/// `T = sum_k a_k delta_{x_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NodeMeasureRaw", into = "NodeMeasureRaw")]
pub struct NodeMeasure {
    nodes: Vec<Point>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeMeasureRaw {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<NodeMeasureRaw> for NodeMeasure {
    type Error = KirError;
    fn try_from(raw: NodeMeasureRaw) -> Result<Self> {
        NodeMeasure::new(raw.nodes.into_iter().map(Point).collect(), raw.weights)
    }
}

impl From<NodeMeasure> for NodeMeasureRaw {
    fn from(m: NodeMeasure) -> Self {
        NodeMeasureRaw {
            nodes: m.nodes.into_iter().map(|p| p.0).collect(),
            weights: m.weights,
        }
    }
}

impl NodeMeasure {
    pub fn new(nodes: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(KirError::invalid(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.is_empty() {
            return Err(KirError::invalid("node measure needs at least one node"));
        }
        let dim = nodes[0].dim();
        if dim == 0 {
            return Err(KirError::invalid("points need at least one coordinate"));
        }
        for (k, (p, w)) in nodes.iter().zip(&weights).enumerate() {
            if p.dim() != dim {
                return Err(KirError::invalid(format!(
                    "node {k} has dimension {}, expected {dim}",
                    p.dim()
                )));
            }
            if !p.is_finite() {
                return Err(KirError::invalid(format!("node {k} has a non-finite coordinate")));
            }
            if !(*w > 0.0 && w.is_finite()) {
                return Err(KirError::invalid(format!("weight a_{k} = {w} must be positive")));
            }
        }
        let mut keys: Vec<Vec<u64>> = nodes
            .iter()
            .map(|p| p.0.iter().map(|c| (c + 0.0).to_bits()).collect())
            .collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(KirError::invalid("nodes must be pairwise distinct"));
        }
        Ok(NodeMeasure { nodes, weights })
    }

    /// Unit weights at the given nodes.
    pub fn uniform(nodes: Vec<Point>) -> Result<Self> {
        let n = nodes.len();
        NodeMeasure::new(nodes, vec![1.0; n])
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        NodeMeasure::new(self.nodes.clone(), self.weights.iter().map(|w| w * c).collect())
    }
}

impl Pairing1 for NodeMeasure {
    fn pair(&self, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        let mut s = NeumaierSum::new();
        for (p, a) in self.nodes.iter().zip(&self.weights) {
            s.add(a * g(&p.0));
        }
        s.value()
    }
}

/// Sparse nonnegative pair weights `w_kj`, stored in ascending `(k, j)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingRaw", into = "CouplingRaw")]
pub struct CouplingWeights {
    entries: BTreeMap<(usize, usize), f64>,
    symmetric: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingRaw {
    entries: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    symmetric: Option<bool>,
}

impl TryFrom<CouplingRaw> for CouplingWeights {
    type Error = KirError;
    fn try_from(raw: CouplingRaw) -> Result<Self> {
        let c = CouplingWeights::new(raw.entries)?;
        if raw.symmetric == Some(true) && !c.symmetric {
            return Err(KirError::invalid("coupling declared symmetric but w_kj != w_jk"));
        }
        Ok(c)
    }
}

impl From<CouplingWeights> for CouplingRaw {
    fn from(c: CouplingWeights) -> Self {
        CouplingRaw {
            symmetric: Some(c.symmetric),
            entries: c.entries.into_iter().map(|((k, j), w)| (k, j, w)).collect(),
        }
    }
}

impl CouplingWeights {
    /// Validates entries; zero weights are dropped and the symmetry flag is detected exactly.
    pub fn new(entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, j, w) in entries {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(KirError::invalid(format!("weight w_({k},{j}) = {w} must be >= 0")));
            }
            if k == j && w != 0.0 {
                return Err(KirError::invalid(format!("diagonal weight w_({k},{k}) must be 0")));
            }
            if map.insert((k, j), w).is_some() {
                return Err(KirError::invalid(format!("duplicate entry ({k},{j})")));
            }
        }
        map.retain(|_, w| *w != 0.0);
        let symmetric = map
            .iter()
            .all(|(&(k, j), w)| map.get(&(j, k)).is_some_and(|v| v == w));
        Ok(CouplingWeights {
            entries: map,
            symmetric,
        })
    }

    /// Symmetric weights from undirected edges: each `(k, j, w)` sets both `w_kj` and `w_jk`.
    pub fn symmetric_from_edges(edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut all = Vec::new();
        for (k, j, w) in edges {
            all.push((k, j, w));
            all.push((j, k, w));
        }
        CouplingWeights::new(all)
    }

    /// Unit nearest-neighbour weights on a path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        CouplingWeights::symmetric_from_edges((1..n).map(|k| (k - 1, k, 1.0)))
            .expect("path weights are valid")
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.entries.get(&(k, j)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(k, j), &w)| (k, j, w))
    }

    /// Outgoing entries `(j, w_kj)` of row `k`.
    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .range((k, 0)..=(k, usize::MAX))
            .map(|(&(_, j), &w)| (j, w))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.keys().map(|&(k, j)| k.max(j)).max()
    }

    /// `S(X x X) = sum w_kj`, compensated.
    pub fn total(&self) -> f64 {
        let mut s = NeumaierSum::new();
        for w in self.entries.values() {
            s.add(*w);
        }
        s.value()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        CouplingWeights::new(self.iter().map(|(k, j, w)| (k, j, w * c)))
    }
}

/// A density `rho` against Lebesgue measure on an axis-aligned box, integrated by
/// tensor Gauss-Legendre panels.
#[derive(Clone)]
pub struct BoxDensity {
    lo: Vec<f64>,
    hi: Vec<f64>,
    density: ScalarField,
    panels: usize,
    rule: Arc<GaussLegendre>,
}

impl std::fmt::Debug for BoxDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoxDensity")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("panels", &self.panels)
            .field("order", &self.rule.len())
            .finish()
    }
}

impl BoxDensity {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, density: ScalarField) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(KirError::invalid("box corners must have equal, positive dimension"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(KirError::invalid("box needs finite lo < hi in every coordinate"));
        }
        let panels = if lo.len() == 1 { 64 } else { 16 };
        Ok(BoxDensity {
            lo,
            hi,
            density,
            panels,
            rule: Arc::new(GaussLegendre::new(8)),
        })
    }

    /// Lebesgue measure restricted to the box.
    pub fn lebesgue(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        BoxDensity::new(lo, hi, ScalarField::constant(1.0))
    }

    /// Sets the number of panels per axis and the Gauss order per panel.
    pub fn with_resolution(mut self, panels: usize, order: usize) -> Self {
        self.panels = panels.max(1);
        self.rule = Arc::new(GaussLegendre::new(order.max(1)));
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn density(&self) -> &ScalarField {
        &self.density
    }

    /// Quadrature points with weights (density included).
    pub fn points(&self) -> Vec<(Vec<f64>, f64)> {
        let axes: Vec<Vec<(f64, f64)>> = (0..self.dim())
            .map(|d| {
                let w = (self.hi[d] - self.lo[d]) / self.panels as f64;
                (0..self.panels)
                    .flat_map(|p| {
                        let a = self.lo[d] + w * p as f64;
                        self.rule.mapped(a, a + w).collect::<Vec<_>>()
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![(Vec::new(), 1.0)];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for (p, w) in &out {
                for (x, wx) in axis {
                    let mut q = p.clone();
                    q.push(*x);
                    next.push((q, w * wx));
                }
            }
            out = next;
        }
        out.into_iter()
            .map(|(p, w)| {
                let d = self.density.eval(&p);
                (p, w * d)
            })
            .collect()
    }
}

impl Pairing1 for BoxDensity {
    fn pair(&self, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        let mut s = NeumaierSum::new();
        for (p, w) in self.points() {
            if w != 0.0 {
                s.add(w * g(&p));
            }
        }
        s.value()
    }
}

/// Either atoms or a box density; the two forms of marginal used by the couplings.
#[derive(Debug, Clone)]
pub enum Marginal {
    Atoms(NodeMeasure),
    Density(BoxDensity),
}

impl Pairing1 for Marginal {
    fn pair(&self, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        match self {
            Marginal::Atoms(m) => m.pair(g),
            Marginal::Density(d) => d.pair(g),
        }
    }
}

/// `<<A x B, Theta>> = int int Theta(x, y) dA(x) dB(y)`.
pub struct ProductPairing<A: Pairing1, B: Pairing1> {
    pub first: A,
    pub second: B,
}

impl<A: Pairing1, B: Pairing1> Pairing2 for ProductPairing<A, B> {
    fn pair2(&self, theta: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
        self.first.pair(&|x| self.second.pair(&|y| theta(x, y)))
    }
}

/// `<<mu o G^{-1}, Theta>> = int Theta(x, F(x)) dmu(x)` for `G(x) = (x, F(x))`.
pub struct PushforwardPairing<A: Pairing1> {
    pub base: A,
    pub map: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub scale: f64,
}

impl<A: Pairing1> Pairing2 for PushforwardPairing<A> {
    fn pair2(&self, theta: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
        let f = &self.map;
        self.base.pair(&|x| theta(x, &f(x))) / self.scale
    }
}

/// Pairing given directly by a closure.
pub struct FnPairing1(pub Box<dyn Fn(&dyn Fn(&[f64]) -> f64) -> f64 + Send + Sync>);

impl Pairing1 for FnPairing1 {
    fn pair(&self, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        (self.0)(g)
    }
}

/// Two-point pairing given directly by a closure.
pub struct FnPairing2(pub Box<dyn Fn(&dyn Fn(&[f64], &[f64]) -> f64) -> f64 + Send + Sync>);

impl Pairing2 for FnPairing2 {
    fn pair2(&self, theta: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
        (self.0)(theta)
    }
}
