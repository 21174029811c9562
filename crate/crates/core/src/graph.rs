//! Kirchhoff divergence and Laplacian on finite weighted node systems
//! `T = sum a_k delta_{x_k}`, `S = sum w_kj delta_{(x_k, x_j)}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KirError, Result};
use crate::field::{grad0, ScalarField, TwoPointField};
use crate::measure::{CouplingWeights, NodeMeasure, Pairing2};
use crate::quad::NeumaierSum;

/// A node measure together with pair weights on its nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRaw", into = "GraphRaw")]
pub struct GraphSystem {
    measure: NodeMeasure,
    coupling: CouplingWeights,
    s_total: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRaw {
    measure: NodeMeasure,
    coupling: CouplingWeights,
}

impl TryFrom<GraphRaw> for GraphSystem {
    type Error = KirError;
    fn try_from(r: GraphRaw) -> Result<Self> {
        GraphSystem::new(r.measure, r.coupling)
    }
}

impl From<GraphSystem> for GraphRaw {
    fn from(g: GraphSystem) -> Self {
        GraphRaw {
            measure: g.measure,
            coupling: g.coupling,
        }
    }
}

impl GraphSystem {
    pub fn new(measure: NodeMeasure, coupling: CouplingWeights) -> Result<Self> {
        if let Some(m) = coupling.max_index() {
            if m >= measure.len() {
                return Err(KirError::invalid(format!(
                    "coupling refers to node {m} but there are only {} nodes",
                    measure.len()
                )));
            }
        }
        let s_total = coupling.total();
        Ok(GraphSystem {
            measure,
            coupling,
            s_total,
        })
    }

    pub fn measure(&self) -> &NodeMeasure {
        &self.measure
    }

    pub fn coupling(&self) -> &CouplingWeights {
        &self.coupling
    }

    /// `S(X x X)`.
    pub fn s_total(&self) -> f64 {
        self.s_total
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    /// Same system with `a_k` and `w_kj` multiplied by a common `c > 0`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        GraphSystem::new(self.measure.scaled(c)?, self.coupling.scaled(c)?)
    }

    fn row_value(&self, k: usize, phi: &TwoPointField) -> Result<f64> {
        let nodes = self.measure.nodes();
        let xk = &nodes[k].0;
        let mut s = NeumaierSum::new();
        for (j, w) in self.coupling.row(k) {
            let v = phi.eval(xk, &nodes[j].0);
            if !v.is_finite() {
                return Err(KirError::NonFinite {
                    context: format!("Phi at coupled pair ({k}, {j})"),
                    value: v,
                });
            }
            s.add(w * v);
        }
        Ok(s.value() / self.measure.weights()[k])
    }
}

impl Pairing2 for GraphSystem {
    fn pair2(&self, theta: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
        let nodes = self.measure.nodes();
        let mut s = NeumaierSum::new();
        for (k, j, w) in self.coupling.iter() {
            s.add(w * theta(&nodes[k].0, &nodes[j].0));
        }
        s.value()
    }
}

/// `Kir Phi(x_k) = (1/a_k) sum_j w_kj Phi(x_k, x_j)` at every node.
pub fn kirchhoff(sys: &GraphSystem, phi: &TwoPointField) -> Result<Vec<f64>> {
    (0..sys.len())
        .into_par_iter()
        .map(|k| sys.row_value(k, phi))
        .collect()
}

/// `Delta f(x_k) = (1/a_k) sum_j w_kj (f(x_j) - f(x_k))`; requires a finite total coupling.
pub fn laplacian(sys: &GraphSystem, f: &ScalarField) -> Result<Vec<f64>> {
    if !sys.s_total.is_finite() {
        return Err(KirError::invalid(
            "total coupling weight is not finite; the Laplacian is undefined",
        ));
    }
    kirchhoff(sys, &grad0(f))
}

/// Outcome of a mean-value test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicReport {
    pub harmonic: bool,
    pub max_deviation: f64,
    /// `|f(x_k) - weighted mean of neighbours|` for each tested node.
    pub deviations: Vec<(usize, f64)>,
}

/// Mean-value test at every node.
pub fn is_harmonic(sys: &GraphSystem, f: &ScalarField, tol: f64) -> Result<HarmonicReport> {
    let all: Vec<usize> = (0..sys.len()).collect();
    is_harmonic_at(sys, f, &all, tol)
}

/// Mean-value test `f(x_k) = sum_j w_kj f(x_j) / sum_j w_kj` at the listed nodes.
pub fn is_harmonic_at(
    sys: &GraphSystem,
    f: &ScalarField,
    nodes: &[usize],
    tol: f64,
) -> Result<HarmonicReport> {
    let pts = sys.measure.nodes();
    let mut deviations = Vec::with_capacity(nodes.len());
    for &k in nodes {
        if k >= sys.len() {
            return Err(KirError::invalid(format!("node {k} out of range")));
        }
        let mut num = NeumaierSum::new();
        let mut den = NeumaierSum::new();
        for (j, w) in sys.coupling.row(k) {
            num.add(w * f.eval(&pts[j].0));
            den.add(w);
        }
        let den = den.value();
        if den <= 0.0 {
            return Err(KirError::invalid(format!(
                "node {k} has no outgoing weight; its mean value is undefined"
            )));
        }
        let dev = (f.eval(&pts[k].0) - num.value() / den).abs();
        deviations.push((k, dev));
    }
    let max_deviation = deviations.iter().fold(0.0f64, |m, (_, d)| m.max(*d));
    Ok(HarmonicReport {
        harmonic: max_deviation <= tol,
        max_deviation,
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Point;

    fn path3() -> GraphSystem {
        let m = NodeMeasure::uniform((0..3).map(|k| Point::scalar(k as f64)).collect()).unwrap();
        GraphSystem::new(m, CouplingWeights::path(3)).unwrap()
    }

    #[test]
    fn two_node_unit() {
        let m = NodeMeasure::uniform(vec![Point::scalar(0.0), Point::scalar(1.0)]).unwrap();
        let sys = GraphSystem::new(m, CouplingWeights::path(2)).unwrap();
        let out = kirchhoff(&sys, &TwoPointField::from_1d(|_, _| 1.0)).unwrap();
        assert_eq!(out, vec![1.0, 1.0]);
        assert_eq!(kirchhoff(&sys, &TwoPointField::zero()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn path_examples() {
        let sys = path3();
        let out = kirchhoff(&sys, &TwoPointField::from_1d(|x, y| y - x)).unwrap();
        assert_eq!(out, vec![1.0, 0.0, -1.0]);
        let lin = laplacian(&sys, &ScalarField::from_1d(|x| x)).unwrap();
        assert_eq!(lin[1], 0.0);
        let f = ScalarField::from_node_values(sys.measure().nodes(), &[0.0, 0.0, 1.0]);
        assert_eq!(laplacian(&sys, &f).unwrap(), vec![0.0, 1.0, -1.0]);
        let c = laplacian(&sys, &ScalarField::constant(4.2)).unwrap();
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn harmonic_examples() {
        let sys = path3();
        let r = is_harmonic(&sys, &ScalarField::constant(1.0), 0.0).unwrap();
        assert!(r.harmonic);
        let f = ScalarField::from_node_values(sys.measure().nodes(), &[0.0, 1.0, 0.0]);
        let r = is_harmonic_at(&sys, &f, &[1], 1e-12).unwrap();
        assert!(!r.harmonic);
        assert_eq!(r.max_deviation, 1.0);

        let n = 10i64;
        let m = NodeMeasure::uniform((-n..=n).map(|k| Point::scalar(k as f64)).collect()).unwrap();
        let sys = GraphSystem::new(m, CouplingWeights::path(2 * n as usize + 1)).unwrap();
        let interior: Vec<usize> = (1..2 * n as usize).collect();
        let r = is_harmonic_at(&sys, &ScalarField::from_1d(|x| x), &interior, 0.0).unwrap();
        assert!(r.harmonic);
    }

    #[test]
    fn zero_row_is_an_error() {
        let m = NodeMeasure::uniform(vec![Point::scalar(0.0), Point::scalar(1.0)]).unwrap();
        let sys = GraphSystem::new(m, CouplingWeights::new([(0, 1, 1.0)]).unwrap()).unwrap();
        let err = is_harmonic(&sys, &ScalarField::constant(0.0), 0.0).unwrap_err();
        assert!(err.to_string().contains("node 1"));
    }

    #[test]
    fn rejects_bad_indices_and_non_finite() {
        let m = NodeMeasure::uniform(vec![Point::scalar(0.0)]).unwrap();
        assert!(GraphSystem::new(m, CouplingWeights::path(2)).is_err());
        let sys = path3();
        let err = kirchhoff(&sys, &TwoPointField::from_1d(|x, y| 1.0 / (x - y + 1.0))).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"));
    }

    #[test]
    fn infinite_total_blocks_laplacian() {
        let m = NodeMeasure::uniform(vec![Point::scalar(0.0), Point::scalar(1.0), Point::scalar(2.0)]).unwrap();
        let c = CouplingWeights::symmetric_from_edges([(0, 1, f64::MAX), (1, 2, f64::MAX)]).unwrap();
        let sys = GraphSystem::new(m, c).unwrap();
        assert!(laplacian(&sys, &ScalarField::constant(0.0)).is_err());
    }
}
