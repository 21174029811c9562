//! Evaluable fields: one-point scalar fields `f: X -> R` and two-point fields
//! `Phi: X x X -> R`, together with the order-zero gradient `f(y) - f(x)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A point of `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn scalar(x: f64) -> Self {
        Point(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point(vec![x])
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Decay of a function at infinity: `|f(y) - limit| <= bound * |y|^(-power)` for `|y| >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    pub limit: f64,
    pub bound: f64,
    pub power: f64,
}

impl Decay {
    pub fn new(limit: f64, bound: f64, power: f64) -> Self {
        Decay {
            limit,
            bound,
            power,
        }
    }

    /// Constant functions: nothing left once the limit is removed.
    pub fn constant(value: f64) -> Self {
        Decay {
            limit: value,
            bound: 0.0,
            power: 1.0,
        }
    }
}

pub(crate) type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub(crate) type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub(crate) type EvalFn2 = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub(crate) type VecFn2 = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub(crate) type MatFn2 = Arc<dyn Fn(&[f64], &[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// A real function on `X` with optional analytic derivatives and size information.
#[derive(Clone)]
pub struct ScalarField {
    eval: EvalFn,
    support_radius: Option<f64>,
    gradient: Option<VecFn>,
    hessian: Option<Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>>,
    sup_bound: Option<f64>,
    lipschitz: Option<f64>,
    decay: Option<Decay>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("support_radius", &self.support_radius)
            .field("has_gradient", &self.gradient.is_some())
            .field("has_hessian", &self.hessian.is_some())
            .field("sup_bound", &self.sup_bound)
            .field("lipschitz", &self.lipschitz)
            .field("decay", &self.decay)
            .finish()
    }
}

impl ScalarField {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            eval: Arc::new(eval),
            support_radius: None,
            gradient: None,
            hessian: None,
            sup_bound: None,
            lipschitz: None,
            decay: None,
        }
    }

    /// A one-dimensional field from a function of a single real variable.
    pub fn from_1d(eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::new(move |x| eval(x[0]))
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(move |_| c)
            .with_sup_bound(c.abs())
            .with_lipschitz(0.0)
            .with_decay(Decay::constant(c))
            .with_gradient_fn(|x| vec![0.0; x.len()])
            .with_hessian_fn(|x| vec![vec![0.0; x.len()]; x.len()])
    }

    /// Field taking the given values at the given nodes and 0 everywhere else.
    /// Nodes are matched by exact coordinates.
    pub fn from_node_values(nodes: &[Point], values: &[f64]) -> Self {
        let table: std::collections::HashMap<Vec<u64>, f64> = nodes
            .iter()
            .zip(values)
            .map(|(p, v)| (p.0.iter().map(|c| c.to_bits()).collect(), *v))
            .collect();
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ScalarField::new(move |x| {
            let key: Vec<u64> = x.iter().map(|c| c.to_bits()).collect();
            table.get(&key).copied().unwrap_or(0.0)
        })
        .with_sup_bound(sup)
    }

    /// Points with `|x| > radius` map to 0; evaluation outside returns 0 without calling `eval`.
    pub fn with_support_radius(mut self, radius: f64) -> Self {
        let inner = self.eval.clone();
        self.eval = Arc::new(move |x| {
            if norm(x) > radius {
                0.0
            } else {
                inner(x)
            }
        });
        self.support_radius = Some(radius);
        self
    }

    pub fn with_gradient_fn(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian_fn(
        mut self,
        h: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn with_sup_bound(mut self, bound: f64) -> Self {
        self.sup_bound = Some(bound);
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_decay(mut self, decay: Decay) -> Self {
        self.decay = Some(decay);
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    #[inline]
    pub fn eval1(&self, x: f64) -> f64 {
        (self.eval)(&[x])
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn decay(&self) -> Option<Decay> {
        self.decay
    }

    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn hessian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        self.hessian.as_ref().map(|h| h(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    /// Pointwise product, used to build `phi * psi` for pairings.
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        let mut out = ScalarField::new(move |x| a(x) * b(x));
        out.support_radius = match (self.support_radius, other.support_radius) {
            (Some(r1), Some(r2)) => Some(r1.min(r2)),
            (r, None) | (None, r) => r,
        };
        out
    }

    /// Adds a constant to the field; derivatives carry over unchanged.
    pub fn add_constant(&self, c: f64) -> ScalarField {
        let inner = self.eval.clone();
        let mut out = self.clone();
        out.eval = Arc::new(move |x| inner(x) + c);
        out.support_radius = None;
        out.sup_bound = self.sup_bound.map(|b| b + c.abs());
        out.decay = self.decay.map(|d| Decay { limit: d.limit + c, ..d });
        out
    }
}

/// A real function `Phi(x, y)` on `X x X`.
#[derive(Clone)]
pub struct TwoPointField {
    eval: EvalFn2,
    y_support: Option<f64>,
    y_gradient: Option<VecFn2>,
    y_hessian: Option<MatFn2>,
    sup_norm: Option<f64>,
    y_gradient_sup: Option<f64>,
    y_hessian_sup: Option<f64>,
    y_decay: Option<Decay>,
}

impl fmt::Debug for TwoPointField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoPointField")
            .field("y_support", &self.y_support)
            .field("has_y_gradient", &self.y_gradient.is_some())
            .field("has_y_hessian", &self.y_hessian.is_some())
            .field("sup_norm", &self.sup_norm)
            .field("y_gradient_sup", &self.y_gradient_sup)
            .finish()
    }
}

impl TwoPointField {
    pub fn new(eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        TwoPointField {
            eval: Arc::new(eval),
            y_support: None,
            y_gradient: None,
            y_hessian: None,
            sup_norm: None,
            y_gradient_sup: None,
            y_hessian_sup: None,
            y_decay: None,
        }
    }

    pub fn from_1d(eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        TwoPointField::new(move |x, y| eval(x[0], y[0]))
    }

    pub fn zero() -> Self {
        TwoPointField::new(|_, _| 0.0)
            .with_sup_norm(0.0)
            .with_y_gradient_sup(0.0)
            .with_y_hessian_sup(0.0)
            .with_y_support(0.0)
            .with_y_gradient_fn(|_, y| vec![0.0; y.len()])
            .with_y_hessian_fn(|_, y| vec![vec![0.0; y.len()]; y.len()])
            .with_y_decay(Decay::constant(0.0))
    }

    /// `Phi(x, y) = 0` whenever `|y| > radius`.
    pub fn with_y_support(mut self, radius: f64) -> Self {
        let inner = self.eval.clone();
        self.eval = Arc::new(move |x, y| if norm(y) > radius { 0.0 } else { inner(x, y) });
        self.y_support = Some(radius);
        self
    }

    pub fn with_y_gradient_fn(
        mut self,
        g: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.y_gradient = Some(Arc::new(g));
        self
    }

    pub fn with_y_hessian_fn(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.y_hessian = Some(Arc::new(h));
        self
    }

    pub fn with_sup_norm(mut self, v: f64) -> Self {
        self.sup_norm = Some(v);
        self
    }

    pub fn with_y_gradient_sup(mut self, v: f64) -> Self {
        self.y_gradient_sup = Some(v);
        self
    }

    pub fn with_y_hessian_sup(mut self, v: f64) -> Self {
        self.y_hessian_sup = Some(v);
        self
    }

    pub fn with_y_decay(mut self, d: Decay) -> Self {
        self.y_decay = Some(d);
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.eval)(x, y)
    }

    #[inline]
    pub fn eval1(&self, x: f64, y: f64) -> f64 {
        (self.eval)(&[x], &[y])
    }

    pub fn y_support(&self) -> Option<f64> {
        self.y_support
    }

    pub fn sup_norm(&self) -> Option<f64> {
        self.sup_norm
    }

    pub fn y_gradient_sup(&self) -> Option<f64> {
        self.y_gradient_sup
    }

    pub fn y_hessian_sup(&self) -> Option<f64> {
        self.y_hessian_sup
    }

    pub fn y_decay(&self) -> Option<Decay> {
        self.y_decay
    }

    pub fn y_gradient(&self, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        self.y_gradient.as_ref().map(|g| g(x, y))
    }

    pub fn y_hessian(&self, x: &[f64], y: &[f64]) -> Option<Vec<Vec<f64>>> {
        self.y_hessian.as_ref().map(|h| h(x, y))
    }

    pub fn has_y_gradient(&self) -> bool {
        self.y_gradient.is_some()
    }

    pub fn has_y_hessian(&self) -> bool {
        self.y_hessian.is_some()
    }

    /// The section `y -> Phi(x, y)` as a scalar field, keeping decay and support data.
    pub fn section(&self, x: &[f64]) -> ScalarField {
        let inner = self.eval.clone();
        let x0 = x.to_vec();
        let mut f = ScalarField::new(move |y| inner(&x0, y));
        if let Some(r) = self.y_support {
            f = f.with_support_radius(r);
        }
        if let Some(d) = self.y_decay {
            f = f.with_decay(d);
        }
        if let Some(s) = self.sup_norm {
            f = f.with_sup_bound(s);
        }
        if let Some(l) = self.y_gradient_sup {
            f = f.with_lipschitz(l);
        }
        if let Some(g) = self.y_gradient.clone() {
            let x1 = x.to_vec();
            f = f.with_gradient_fn(move |y| g(&x1, y));
        }
        if let Some(h) = self.y_hessian.clone() {
            let x1 = x.to_vec();
            f = f.with_hessian_fn(move |y| h(&x1, y));
        }
        f
    }

    /// `(phi Phi)(x, y) = phi(x) Phi(x, y)`.
    pub fn times_x(&self, phi: &ScalarField) -> TwoPointField {
        let inner = self.eval.clone();
        let p = phi.clone();
        TwoPointField::new(move |x, y| p.eval(x) * inner(x, y))
    }

    /// Linear combination `a * self + b * other`; declared derivatives are combined when both exist.
    pub fn linear_combination(&self, a: f64, other: &TwoPointField, b: f64) -> TwoPointField {
        let (e1, e2) = (self.eval.clone(), other.eval.clone());
        let mut out = TwoPointField::new(move |x, y| a * e1(x, y) + b * e2(x, y));
        if let (Some(g1), Some(g2)) = (self.y_gradient.clone(), other.y_gradient.clone()) {
            out = out.with_y_gradient_fn(move |x, y| {
                g1(x, y)
                    .iter()
                    .zip(g2(x, y))
                    .map(|(u, v)| a * u + b * v)
                    .collect()
            });
        }
        if let (Some(s1), Some(s2)) = (self.y_support, other.y_support) {
            out.y_support = Some(s1.max(s2));
        }
        if let (Some(n1), Some(n2)) = (self.sup_norm, other.sup_norm) {
            out.sup_norm = Some(a.abs() * n1 + b.abs() * n2);
        }
        out
    }
}

/// The order-zero gradient `grad f(x, y) = f(y) - f(x)`.
///
/// The y-gradient and y-Hessian are those of `f` at `y` when `f` declares them.
pub fn grad0(f: &ScalarField) -> TwoPointField {
    let e = f.eval.clone();
    let mut out = TwoPointField::new(move |x, y| e(y) - e(x));
    if let Some(g) = f.gradient.clone() {
        out = out.with_y_gradient_fn(move |_, y| g(y));
    }
    if let Some(h) = f.hessian.clone() {
        out = out.with_y_hessian_fn(move |_, y| h(y));
    }
    if let Some(b) = f.sup_bound {
        out = out.with_sup_norm(2.0 * b);
    }
    if let Some(l) = f.lipschitz {
        out = out.with_y_gradient_sup(l);
    }
    if let Some(d) = f.decay {
        out = out.with_y_decay(d);
    }
    out
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
