//! Discrete operators on sampled metric measure spaces, and the fractional divergence on
//! Ahlfors regular spaces with a kernel comparable to `d^{-(gamma + sigma)}`.
//!
//! A net is one level `j` of a dyadic-type partition: centres `x^j_k`, cube masses
//! `mu(Q^j_k)`, a metric and a ball-mass function. The partition itself is caller data.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::continuum::{half_sphere, sphere_area, split_integral, support_breaks};
use crate::dyadic::{annulus, ball_measure, pow2, rho_unchecked};
use crate::error::{finite, KirError, Result};
use crate::field::{dist, norm, Point, ScalarField, TwoPointField};
use crate::graph::GraphSystem;
use crate::measure::{CouplingWeights, NodeMeasure};
use crate::quad::{GaussLegendre, NeumaierSum};

type DistFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type BallFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Metric on the sample points.
#[derive(Clone)]
pub enum Metric {
    Euclidean,
    /// The dyadic metric `rho` on `R^+` (first coordinate).
    Dyadic,
    Custom(DistFn),
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Euclidean => write!(f, "Euclidean"),
            Metric::Dyadic => write!(f, "Dyadic"),
            Metric::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Metric {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "euclidean" => Ok(Metric::Euclidean),
            "dyadic" => Ok(Metric::Dyadic),
            other => Err(KirError::invalid(format!(
                "unknown metric '{other}' (expected euclidean or dyadic)"
            ))),
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => dist(x, y),
            Metric::Dyadic => rho_unchecked(x[0], y[0]),
            Metric::Custom(d) => d(x, y),
        }
    }
}

/// `mu(B(x, r))`.
#[derive(Clone)]
pub enum BallMass {
    /// Sum of the cube masses whose centres lie in the closed ball.
    Counting,
    /// Lebesgue measure of the metric ball: `omega_n r^n`, or the dyadic ball on `R^+`.
    Lebesgue,
    Custom(BallFn),
}

impl fmt::Debug for BallMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BallMass::Counting => write!(f, "Counting"),
            BallMass::Lebesgue => write!(f, "Lebesgue"),
            BallMass::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

/// One level of a dyadic-type family on a metric measure space.
#[derive(Debug, Clone)]
pub struct MetricMeasureNet {
    points: Vec<Point>,
    masses: Vec<f64>,
    metric: Metric,
    ball_mass: BallMass,
    delta: f64,
    j: i32,
    c: f64,
}

/// JSON form: `{"delta", "j", "C", "points", "masses"}` plus optional `metric`
/// (`euclidean` | `dyadic`) and `ball_mass` (`counting` | `lebesgue`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub delta: f64,
    pub j: i32,
    #[serde(rename = "C")]
    pub c: f64,
    pub points: Vec<Point>,
    pub masses: Vec<f64>,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "default_ball")]
    pub ball_mass: String,
}

fn default_metric() -> String {
    "euclidean".into()
}

fn default_ball() -> String {
    "counting".into()
}

impl TryFrom<NetConfig> for MetricMeasureNet {
    type Error = KirError;
    fn try_from(c: NetConfig) -> Result<Self> {
        let ball = match c.ball_mass.as_str() {
            "counting" => BallMass::Counting,
            "lebesgue" => BallMass::Lebesgue,
            other => {
                return Err(KirError::invalid(format!(
                    "unknown ball_mass '{other}' (expected counting or lebesgue)"
                )))
            }
        };
        MetricMeasureNet::new(c.points, c.masses, Metric::from_name(&c.metric)?, c.delta, c.j, c.c)
            .map(|n| n.with_ball_mass(ball))
    }
}

impl MetricMeasureNet {
    pub fn new(
        points: Vec<Point>,
        masses: Vec<f64>,
        metric: Metric,
        delta: f64,
        j: i32,
        c: f64,
    ) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(KirError::invalid(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if points.is_empty() {
            return Err(KirError::invalid("net needs at least one point"));
        }
        if let Some((k, m)) = masses.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(KirError::invalid(format!("mass mu(Q_{k}) = {m} must be positive")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(KirError::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(KirError::invalid(format!("C must be positive, got {c}")));
        }
        let dim = points[0].dim();
        if points.iter().any(|p| p.dim() != dim || !p.is_finite()) {
            return Err(KirError::invalid("points need equal dimension and finite coordinates"));
        }
        if matches!(metric, Metric::Dyadic) && points.iter().any(|p| p.0[0] < 0.0) {
            return Err(KirError::invalid("the dyadic metric lives on R^+"));
        }
        Ok(MetricMeasureNet {
            points,
            masses,
            metric,
            ball_mass: BallMass::Counting,
            delta,
            j,
            c,
        })
    }

    pub fn with_ball_mass(mut self, b: BallMass) -> Self {
        self.ball_mass = b;
        self
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.metric.distance(&self.points[a].0, &self.points[b].0)
    }

    /// Coupling range `C delta^j`.
    pub fn range(&self) -> f64 {
        self.c * self.delta.powi(self.j)
    }

    pub fn ball(&self, x: &[f64], r: f64) -> f64 {
        match &self.ball_mass {
            BallMass::Counting => self
                .points
                .iter()
                .zip(&self.masses)
                .filter(|(p, _)| self.metric.distance(x, &p.0) <= r)
                .map(|(_, m)| m)
                .sum(),
            BallMass::Lebesgue => match self.metric {
                Metric::Dyadic => ball_measure(x[0], r).unwrap_or(0.0),
                _ => unit_ball_volume(x.len()) * r.powi(x.len() as i32),
            },
            BallMass::Custom(f) => f(x, r),
        }
    }

    /// Checks symmetry, identity and the triangle inequality on all triples of at most
    /// `limit` points.
    pub fn verify_metric(&self, limit: usize) -> Result<()> {
        let n = self.len().min(limit);
        let tol = 1e-12;
        for a in 0..n {
            if self.distance(a, a) != 0.0 {
                return Err(KirError::contract(format!("d(x_{a}, x_{a}) is not 0")));
            }
            for b in 0..n {
                let dab = self.distance(a, b);
                if a != b && !(dab > 0.0) {
                    return Err(KirError::contract(format!("d(x_{a}, x_{b}) = {dab} is not positive")));
                }
                if (dab - self.distance(b, a)).abs() > tol * dab {
                    return Err(KirError::contract(format!("d is not symmetric at ({a}, {b})")));
                }
                for c in 0..n {
                    if self.distance(a, c) > (dab + self.distance(b, c)) * (1.0 + tol) {
                        return Err(KirError::contract(format!(
                            "triangle inequality fails at ({a}, {b}, {c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.len() {
            return Err(KirError::invalid(format!("index {k} out of range ({} points)", self.len())));
        }
        Ok(())
    }

    /// Indices `i != k` with `d(x_i, x_k) < C delta^j`.
    fn coupled(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let r = self.range();
        (0..self.len()).filter(move |&i| i != k && self.distance(k, i) < r)
    }
}

/// Symmetric positive matrix `H^j_{ki}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetMatrix(pub Vec<Vec<f64>>);

impl NetMatrix {
    pub fn constant(n: usize, v: f64) -> Self {
        NetMatrix(vec![vec![v; n]; n])
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.0[k][i]
    }

    /// Shape check, exact symmetry, and positivity on the coupled pairs of `net`.
    fn validate(&self, net: &MetricMeasureNet) -> Result<()> {
        let n = net.len();
        if self.0.len() != n || self.0.iter().any(|r| r.len() != n) {
            return Err(KirError::invalid(format!("H must be {n} x {n}")));
        }
        for k in 0..n {
            for i in 0..k {
                if self.0[k][i] != self.0[i][k] {
                    return Err(KirError::invalid(format!(
                        "H is not symmetric: H[{k}][{i}] = {} but H[{i}][{k}] = {}",
                        self.0[k][i], self.0[i][k]
                    )));
                }
            }
            for i in net.coupled(k) {
                if !(self.0[k][i] > 0.0 && self.0[k][i].is_finite()) {
                    return Err(KirError::invalid(format!(
                        "H[{k}][{i}] = {} must be positive on coupled pairs",
                        self.0[k][i]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `Kir Phi(x_k) = (1/mu(Q_k)) sum_{i != k, d < C delta^j} Phi(x_k, x_i) (mu(Q_k) + mu(Q_i)) H_ki`.
pub fn net_kirchhoff(net: &MetricMeasureNet, h: &NetMatrix, phi: &TwoPointField, k: usize) -> Result<f64> {
    net.check_index(k)?;
    h.validate(net)?;
    let xk = &net.points[k].0;
    let mk = net.masses[k];
    let mut s = NeumaierSum::new();
    for i in net.coupled(k) {
        s.add(phi.eval(xk, &net.points[i].0) * (mk + net.masses[i]) * h.get(k, i));
    }
    finite(s.value() / mk, || format!("net Kirchhoff divergence at node {k}"))
}

/// `Delta f(x_k) = sum_{i != k, d < C delta^j} (f(x_i) - f(x_k)) (1 + mu(Q_i)/mu(Q_k)) H_ki`.
pub fn net_laplacian(net: &MetricMeasureNet, h: &NetMatrix, f: &ScalarField, k: usize) -> Result<f64> {
    net.check_index(k)?;
    h.validate(net)?;
    let fk = f.eval(&net.points[k].0);
    let mk = net.masses[k];
    let mut s = NeumaierSum::new();
    for i in net.coupled(k) {
        s.add((f.eval(&net.points[i].0) - fk) * (1.0 + net.masses[i] / mk) * h.get(k, i));
    }
    finite(s.value(), || format!("net Laplacian at node {k}"))
}

/// The node system `T = sum mu(Q_k) delta_{x_k}`, `w_ki = (mu(Q_k) + mu(Q_i)) H_ki` behind
/// [`net_kirchhoff`].
pub fn net_system(net: &MetricMeasureNet, h: &NetMatrix) -> Result<GraphSystem> {
    h.validate(net)?;
    let mut entries = Vec::new();
    for k in 0..net.len() {
        for i in net.coupled(k) {
            entries.push((k, i, (net.masses[k] + net.masses[i]) * h.get(k, i)));
        }
    }
    GraphSystem::new(
        NodeMeasure::new(net.points.clone(), net.masses.clone())?,
        CouplingWeights::new(entries)?,
    )
}

fn frac_weight(net: &MetricMeasureNet, alpha: f64, k: usize, i: usize) -> Result<f64> {
    let d = net.distance(k, i);
    let bk = net.ball(&net.points[k].0, d);
    let bi = net.ball(&net.points[i].0, d);
    if !(bk > 0.0) || !(bi > 0.0) {
        return Err(KirError::invalid(format!(
            "zero ball mass around node {k} or {i} at radius {d}"
        )));
    }
    Ok(1.0 / (d.powf(alpha) * (bk + bi)))
}

/// `sum_{i != k} mu(Q_i) (f(x_i) - f(x_k)) / (d^alpha [mu B(x_k, d) + mu B(x_i, d)])`.
pub fn net_frac_laplacian(net: &MetricMeasureNet, alpha: f64, f: &ScalarField, k: usize) -> Result<f64> {
    net.check_index(k)?;
    if !(alpha > 0.0) {
        return Err(KirError::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let fk = f.eval(&net.points[k].0);
    let mut s = NeumaierSum::new();
    for i in (0..net.len()).filter(|&i| i != k) {
        let w = frac_weight(net, alpha, k, i)?;
        s.add(net.masses[i] * (f.eval(&net.points[i].0) - fk) * w);
    }
    finite(s.value(), || format!("net fractional Laplacian at node {k}"))
}

/// Node system with symmetric weights
/// `w_ki = mu(Q_k) mu(Q_i) / (d^alpha [mu B(x_k, d) + mu B(x_i, d)])` behind [`net_frac_laplacian`].
pub fn net_frac_system(net: &MetricMeasureNet, alpha: f64) -> Result<GraphSystem> {
    let mut entries = Vec::new();
    for k in 0..net.len() {
        for i in (0..net.len()).filter(|&i| i != k) {
            let w = frac_weight(net, alpha, k, i)?;
            entries.push((k, i, net.masses[k] * net.masses[i] * w));
        }
    }
    GraphSystem::new(
        NodeMeasure::new(net.points.clone(), net.masses.clone())?,
        CouplingWeights::new(entries)?,
    )
}

/// A symmetric kernel with `c1 1_{d<1} d^{-(gamma+sigma)} <= K <= c2 d^{-(gamma+sigma)}`.
#[derive(Clone)]
pub struct ComparableKernel {
    k: DistFn,
    /// `Some(c)` when `K = c d^{-(gamma+sigma)}` exactly, so far tails have a closed form.
    power: Option<f64>,
    sigma: f64,
    gamma: f64,
    c1: f64,
    c2: f64,
}

impl fmt::Debug for ComparableKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComparableKernel")
            .field("sigma", &self.sigma)
            .field("gamma", &self.gamma)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .finish()
    }
}

impl ComparableKernel {
    pub fn new(
        k: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        sigma: f64,
        gamma: f64,
        c1: f64,
        c2: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(KirError::invalid(format!("sigma must lie in (0, 1), got {sigma}")));
        }
        if !(gamma > 0.0) {
            return Err(KirError::invalid(format!("gamma must be positive, got {gamma}")));
        }
        if !(c1 > 0.0 && c1 <= c2 && c2.is_finite()) {
            return Err(KirError::invalid(format!("need 0 < c1 <= c2, got {c1}, {c2}")));
        }
        Ok(ComparableKernel {
            k: Arc::new(k),
            power: None,
            sigma,
            gamma,
            c1,
            c2,
        })
    }

    /// `d^{-(gamma + 2s)}` as a comparable kernel with `c1 = c2 = 1`.
    pub fn pure_power(metric: Metric, gamma: f64, s: f64) -> Result<Self> {
        let p = gamma + 2.0 * s;
        let mut k = ComparableKernel::new(move |x, y| metric.distance(x, y).powf(-p), 2.0 * s, gamma, 1.0, 1.0)?;
        k.power = Some(1.0);
        Ok(k)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.k)(x, y)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// Same kernel multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let k = self.k.clone();
        let mut out = ComparableKernel::new(move |x, y| c * k(x, y), self.sigma, self.gamma, c * self.c1, c * self.c2)?;
        out.power = self.power.map(|p| p * c);
        Ok(out)
    }

    /// Checks both comparison bounds at the given pairs.
    pub fn verify(&self, metric: &Metric, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        let p = self.gamma + self.sigma;
        for (x, y) in pairs {
            let d = metric.distance(x, y);
            if d == 0.0 {
                continue;
            }
            let k = self.eval(x, y);
            let base = d.powf(-p);
            let lower = if d < 1.0 { self.c1 * base } else { 0.0 };
            let slack = 1e-12 * base;
            if !(k >= lower - slack && k <= self.c2 * base + slack) {
                return Err(KirError::contract(format!(
                    "kernel bound violated at d = {d}: K = {k}, allowed [{lower}, {}]",
                    self.c2 * base
                )));
            }
        }
        Ok(())
    }
}

/// The space carrying the Ahlfors-regular Lebesgue measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AhlforsSpace {
    /// `(R^+, rho, |.|)`, dimension 1.
    DyadicHalfLine,
    /// `(R^n, |.|, dx)` for `n = 1, 2, 3`.
    Euclidean(usize),
}

impl AhlforsSpace {
    pub fn dimension(&self) -> f64 {
        match self {
            AhlforsSpace::DyadicHalfLine => 1.0,
            AhlforsSpace::Euclidean(n) => *n as f64,
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            AhlforsSpace::DyadicHalfLine => Metric::Dyadic,
            AhlforsSpace::Euclidean(_) => Metric::Euclidean,
        }
    }
}

/// Resolution and Lipschitz data for [`ahlfors_kirchhoff`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AhlforsQuadrature {
    /// Finest scale `2^{-finest}` integrated; finer shells form the near-field bound.
    pub finest: i32,
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Dyadic annuli are cut into panels no longer than `2^{-panel_level}`.
    pub panel_level: i32,
    /// Directions per half circle (2D) or cosine nodes (3D).
    pub angular: usize,
    /// Extra octaves integrated past the support before the kernel bound takes over.
    pub far_octaves: i32,
    /// Lipschitz constant of `y -> Phi(x, y)` for the metric; defaults to the declared
    /// y-gradient bound.
    pub lipschitz: Option<f64>,
}

impl Default for AhlforsQuadrature {
    fn default() -> Self {
        AhlforsQuadrature {
            finest: 40,
            order: 8,
            panel_level: 10,
            angular: 24,
            far_octaves: 24,
            lipschitz: None,
        }
    }
}

/// Value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error_estimate: f64,
}

/// `Kir Phi(x) = int (Phi(x, y) - Phi(x, x)) K(x, y) d mu(y)` on an Ahlfors space.
///
/// The kernel bounds are checked at sample pairs around `x` first. The near-field bound
/// integrates `L c2 d^{1 - sigma - gamma}` over the shells finer than `2^{-finest}`. Past the
/// y-support of `Phi` the integrand is `-Phi(x, x) K`; it is integrated for `far_octaves`
/// more octaves, then summed in closed form for pure powers or bounded through `c2`.
pub fn ahlfors_kirchhoff(
    space: AhlforsSpace,
    kernel: &ComparableKernel,
    phi: &TwoPointField,
    x: &[f64],
    q: AhlforsQuadrature,
) -> Result<Estimate> {
    let metric = space.metric();
    if (kernel.gamma - space.dimension()).abs() > 1e-12 {
        return Err(KirError::invalid(format!(
            "kernel dimension {} does not match the space dimension {}",
            kernel.gamma,
            space.dimension()
        )));
    }
    match space {
        AhlforsSpace::DyadicHalfLine => {
            if x.len() != 1 || !(x[0] >= 0.0) {
                return Err(KirError::invalid("dyadic points are single coordinates in R^+"));
            }
        }
        AhlforsSpace::Euclidean(n) => {
            if x.len() != n || !(1..=3).contains(&n) {
                return Err(KirError::invalid(format!("point must have dimension {n} in 1..=3")));
            }
        }
    }
    kernel.verify(&metric, &sample_pairs(space, x))?;
    let support = phi.y_support().ok_or_else(|| {
        KirError::invalid("the Ahlfors divergence needs Phi with a declared y-support")
    })?;
    let lip = q.lipschitz.or(phi.y_gradient_sup());
    let phi_xx = finite(phi.eval(x, x), || "Phi(x, x)".into())?;
    let rule = GaussLegendre::new(q.order.max(2));
    let (value, far_err) = match space {
        AhlforsSpace::DyadicHalfLine => dyadic_shells(kernel, phi, x[0], support, phi_xx, &rule, q),
        AhlforsSpace::Euclidean(_) => euclidean_shells(kernel, phi, x, support, phi_xx, &rule, q),
    };
    let sigma = kernel.sigma;
    let near = match (lip, space) {
        (Some(l), AhlforsSpace::DyadicHalfLine) => {
            // Annulus m: |.| <= L 2^{-m} c2 2^{m(1+sigma)} 2^{-m-1}.
            let r = pow2(-1).powf(1.0 - sigma);
            0.5 * l * kernel.c2 * pow2(q.finest + 1).powf(sigma - 1.0) / (1.0 - r)
        }
        (Some(l), AhlforsSpace::Euclidean(n)) => {
            sphere_area(n) * l * kernel.c2 * pow2(-q.finest).powf(1.0 - sigma) / (1.0 - sigma)
        }
        (None, _) => f64::INFINITY,
    };
    let value = finite(value, || format!("Ahlfors divergence at {x:?}"))?;
    Ok(Estimate {
        value,
        error_estimate: near + far_err + 1e-13 * value.abs(),
    })
}

fn sample_pairs(space: AhlforsSpace, x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    for e in -12..=12 {
        let r = 2f64.powf(e as f64 * 0.5 + 0.25);
        match space {
            AhlforsSpace::DyadicHalfLine => {
                out.push((x.to_vec(), vec![x[0] + r]));
                if x[0] > r {
                    out.push((x.to_vec(), vec![x[0] - r]));
                }
            }
            AhlforsSpace::Euclidean(n) => {
                let mut y = x.to_vec();
                y[0] += r;
                out.push((x.to_vec(), y));
                let mut z = x.to_vec();
                z[n - 1] -= r / 3.0;
                out.push((x.to_vec(), z));
            }
        }
    }
    out
}

/// Sum over dyadic annuli `A_m = {rho(x, .) = 2^{-m}}`; returns the value and the far bound.
fn dyadic_shells(
    kernel: &ComparableKernel,
    phi: &TwoPointField,
    x: f64,
    support: f64,
    phi_xx: f64,
    rule: &GaussLegendre,
    q: AhlforsQuadrature,
) -> (f64, f64) {
    let xs = [x];
    let k = |y: f64| kernel.eval(&xs, &[y]);
    let integrand = |y: f64| (phi.eval(&xs, &[y]) - phi_xx) * k(y);
    let reach = support.max(x).max(f64::MIN_POSITIVE);
    let mut m_lo = -(reach.log2().ceil() as i32) - 1;
    while pow2(-m_lo) <= reach {
        m_lo -= 1;
    }
    let mut acc = NeumaierSum::new();
    for m in m_lo..=q.finest.max(m_lo) {
        let (a, b) = annulus(x, m);
        let b_eff = b.min(support.max(a));
        if b_eff > a {
            let panel = pow2(-q.panel_level).min(b - a);
            let count = ((b_eff - a) / panel).ceil() as u64;
            for p in 0..count {
                let lo = a + p as f64 * panel;
                let hi = (lo + panel).min(b_eff);
                acc.add(rule.integrate(lo, hi, integrand));
            }
        }
        if b > b_eff && phi_xx != 0.0 {
            acc.add(-phi_xx * rule.integrate_composite(b_eff, b, 16, k));
        }
    }
    let m_far = m_lo - q.far_octaves.max(0);
    if phi_xx != 0.0 {
        for m in m_far..m_lo {
            let (a, b) = annulus(x, m);
            acc.add(-phi_xx * rule.integrate_composite(a, b, 16, k));
        }
    }
    // Annuli m < m_far: |A_m| = 2^{-m-1} at distance 2^{-m}.
    let q_s = pow2(-1).powf(kernel.sigma);
    let geometric = phi_xx * pow2(m_far - 1).powf(kernel.sigma) * 0.5 / (1.0 - q_s);
    if let Some(c) = kernel.power {
        acc.add(-c * geometric);
        (acc.value(), 0.0)
    } else {
        (acc.value(), kernel.c2 * geometric.abs())
    }
}

/// Polar sum around `x` pairing `theta` with `-theta`; returns the value and the far bound.
fn euclidean_shells(
    kernel: &ComparableKernel,
    phi: &TwoPointField,
    x: &[f64],
    support: f64,
    phi_xx: f64,
    rule: &GaussLegendre,
    q: AhlforsQuadrature,
) -> (f64, f64) {
    let n = x.len();
    let dirs = half_sphere(n, q.angular);
    let far_end = (norm(x) + support).max(1.0);
    let outer = far_end * pow2(q.far_octaves.max(0));
    let mut acc = NeumaierSum::new();
    let mut yp = vec![0.0; n];
    let mut ym = vec![0.0; n];
    for (theta, w) in &dirs {
        let breaks = support_breaks(x, theta, support);
        let mut g = |r: f64| {
            for i in 0..n {
                yp[i] = x[i] + r * theta[i];
                ym[i] = x[i] - r * theta[i];
            }
            let a = (phi.eval(x, &yp) - phi_xx) * kernel.eval(x, &yp);
            let b = (phi.eval(x, &ym) - phi_xx) * kernel.eval(x, &ym);
            (a + b) * r.powi(n as i32 - 1)
        };
        for m in 0..q.finest.max(0) {
            let hi = pow2(-m);
            acc.add(w * split_integral(rule, 0.5 * hi, hi, &breaks, 2, &mut g));
        }
        let mut a = 1.0;
        while a < outer {
            let b = (2.0 * a).min(outer);
            let panels = if a < far_end { 8 } else { 2 };
            if b <= far_end || phi_xx != 0.0 {
                acc.add(w * split_integral(rule, a, b, &breaks, panels, &mut g));
            }
            a = b;
        }
    }
    // Beyond `outer` the integrand is -Phi(x, x) K; for d^{-(n+sigma)} the radial integral is
    // outer^{-sigma} / sigma per direction.
    let tail = phi_xx * sphere_area(n) * outer.powf(-kernel.sigma) / kernel.sigma;
    if let Some(c) = kernel.power {
        acc.add(-c * tail);
        (acc.value(), 0.0)
    } else {
        (acc.value(), kernel.c2 * tail.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuum::{frac_kir_regular, FracKernelSpec};
    use crate::dyadic::{delta_s_apply, HaarExpansion, HaarFunction};
    use crate::field::grad0;
    use crate::graph::{kirchhoff, laplacian};
    use crate::lattice::{fd_kirchhoff, LatticeSpec};
    use proptest::prelude::*;

    fn line_net(n: usize, h: f64, masses: Option<Vec<f64>>) -> MetricMeasureNet {
        let pts = (0..n).map(|k| Point::scalar(k as f64 * h)).collect();
        let m = masses.unwrap_or_else(|| vec![h; n]);
        MetricMeasureNet::new(pts, m, Metric::Euclidean, 0.5, 0, 1.5 * h).unwrap()
    }

    #[test]
    fn lattice_net_matches_fd() {
        let h = 0.1;
        let n = 21;
        let pts = (0..n).map(|k| Point::scalar((k as f64 - 10.0) * h)).collect();
        let net = MetricMeasureNet::new(pts, vec![h; n], Metric::Euclidean, 0.5, 0, 1.5 * h).unwrap();
        let hm = NetMatrix::constant(n, 0.5 / (h * h));
        let phi = TwoPointField::from_1d(|x, y| (y - x).powi(2) + x * y.sin());
        let spec = LatticeSpec::new(1, h, 20).unwrap();
        for k in 1..n - 1 {
            let a = net_kirchhoff(&net, &hm, &phi, k).unwrap();
            let b = fd_kirchhoff(&spec, &phi, &[k as i64 - 10]).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert_eq!(net_kirchhoff(&net, &hm, &TwoPointField::zero(), 3).unwrap(), 0.0);
    }

    #[test]
    fn single_point_and_hand_sums() {
        let one = MetricMeasureNet::new(vec![Point::scalar(0.0)], vec![1.0], Metric::Euclidean, 0.5, 0, 1.0).unwrap();
        let phi = TwoPointField::from_1d(|_, _| 1.0);
        assert_eq!(net_kirchhoff(&one, &NetMatrix::constant(1, 1.0), &phi, 0).unwrap(), 0.0);

        let net = MetricMeasureNet::new(
            vec![Point::scalar(0.0), Point::scalar(1.0), Point::scalar(2.0)],
            vec![1.0, 2.0, 1.0],
            Metric::Euclidean,
            0.5,
            0,
            10.0,
        )
        .unwrap();
        let f = ScalarField::from_node_values(net.points(), &[0.0, 1.0, 0.0]);
        assert_eq!(net_laplacian(&net, &NetMatrix::constant(3, 1.0), &f, 0).unwrap(), 3.0);

        let two = MetricMeasureNet::new(
            vec![Point::scalar(0.0), Point::scalar(1.0)],
            vec![1.0, 1.0],
            Metric::Euclidean,
            0.5,
            0,
            2.0,
        )
        .unwrap()
        .with_ball_mass(BallMass::Custom(Arc::new(|_, _| 1.0)));
        let f = ScalarField::from_node_values(two.points(), &[0.0, 1.0]);
        assert_eq!(net_frac_laplacian(&two, 1.0, &f, 0).unwrap(), 0.5);
    }

    #[test]
    fn uniform_mass_doubles() {
        let net = line_net(6, 1.0, Some(vec![0.7; 6]));
        let hm = NetMatrix(
            (0..6).map(|a| (0..6).map(|b| 1.0 + (a + b) as f64).collect()).collect(),
        );
        let f = ScalarField::from_1d(|t| t * t);
        for k in 0..6 {
            let direct: f64 = net
                .coupled(k)
                .map(|i| 2.0 * hm.get(k, i) * (f.eval1(i as f64) - f.eval1(k as f64)))
                .sum();
            let v = net_laplacian(&net, &hm, &f, k).unwrap();
            assert!((v - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let net = line_net(3, 1.0, None);
        let mut hm = NetMatrix::constant(3, 1.0);
        hm.0[0][1] = 2.0;
        let phi = TwoPointField::from_1d(|_, y| y);
        assert!(net_kirchhoff(&net, &hm, &phi, 0).is_err());
        assert!(net_kirchhoff(&net, &NetMatrix::constant(3, 1.0), &phi, 5).is_err());
        let zero = line_net(2, 1.0, None).with_ball_mass(BallMass::Custom(Arc::new(|_, _| 0.0)));
        assert!(net_frac_laplacian(&zero, 1.0, &ScalarField::constant(1.0), 0).is_err());
        assert!(MetricMeasureNet::new(vec![Point::scalar(0.0)], vec![0.0], Metric::Euclidean, 0.5, 0, 1.0).is_err());
        let cfg = r#"{"delta":0.5,"j":1,"C":2.0,"points":[[0.0],[1.0]],"masses":[1,1],"extra":1}"#;
        assert!(serde_json::from_str::<NetConfig>(cfg).is_err());
        let cfg = r#"{"delta":0.5,"j":1,"C":2.0,"points":[[0.0],[1.0]],"masses":[1,1],"metric":"dyadic"}"#;
        let c: NetConfig = serde_json::from_str(cfg).unwrap();
        let net = MetricMeasureNet::try_from(c).unwrap();
        assert_eq!(net.distance(0, 1), 2.0);
        assert_eq!(net.range(), 1.0);
    }

    #[test]
    fn metric_verification() {
        let pts: Vec<Point> = (0..6).map(|k| Point::scalar(0.3 * k as f64)).collect();
        let net = MetricMeasureNet::new(pts.clone(), vec![1.0; 6], Metric::Dyadic, 0.5, 0, 1.0).unwrap();
        net.verify_metric(6).unwrap();
        let bad = MetricMeasureNet::new(
            pts,
            vec![1.0; 6],
            Metric::Custom(Arc::new(|x, y| (x[0] - y[0]).powi(2))),
            0.5,
            0,
            1.0,
        )
        .unwrap();
        assert!(matches!(bad.verify_metric(6), Err(KirError::Contract(_))));
    }

    #[test]
    fn net_systems_match_operators() {
        let net = line_net(7, 0.5, Some(vec![0.2, 0.4, 0.3, 0.5, 0.1, 0.6, 0.2]));
        let hm = NetMatrix((0..7).map(|a| (0..7).map(|b| 1.0 / (1.0 + (a * b) as f64)).collect()).collect());
        let sys = net_system(&net, &hm).unwrap();
        let f = ScalarField::from_1d(|t| t.exp());
        let lap = laplacian(&sys, &f).unwrap();
        for k in 0..7 {
            let v = net_laplacian(&net, &hm, &f, k).unwrap();
            assert!((v - lap[k]).abs() < 1e-12 * v.abs().max(1.0));
        }
        let fs = net_frac_system(&net, 0.8).unwrap();
        let fl = kirchhoff(&fs, &grad0(&f)).unwrap();
        for k in 0..7 {
            let v = net_frac_laplacian(&net, 0.8, &f, k).unwrap();
            assert!((v - fl[k]).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_verification() {
        let k = ComparableKernel::pure_power(Metric::Euclidean, 1.0, 0.2).unwrap();
        k.verify(&Metric::Euclidean, &sample_pairs(AhlforsSpace::Euclidean(1), &[0.3])).unwrap();
        let too_big = ComparableKernel::new(|x, y| 3.0 * dist(x, y).powf(-1.4), 0.4, 1.0, 1.0, 2.0).unwrap();
        let phi = TwoPointField::from_1d(|_, y| (1.0 - y * y).max(0.0)).with_y_support(1.0);
        let err = ahlfors_kirchhoff(AhlforsSpace::Euclidean(1), &too_big, &phi, &[0.0], Default::default());
        assert!(matches!(err, Err(KirError::Contract(_))));
    }

    #[test]
    fn dyadic_space_reproduces_haar_closed_form() {
        for (s, j, kk) in [(0.25, 0, 0u64), (0.1, 2, 3), (0.4, -1, 1)] {
            let h = HaarFunction::new(j, kk);
            let phi = h.to_field();
            let two = TwoPointField::new(move |_, y| phi.eval(y)).with_y_support(h.support().right());
            let kernel = ComparableKernel::pure_power(Metric::Dyadic, 1.0, s).unwrap();
            let lip = 2.0 * h.amplitude() / h.support_length();
            let q = AhlforsQuadrature { lipschitz: Some(lip), ..Default::default() };
            for t in [0.1, 0.3, 0.55, 0.8] {
                let x = h.support().left() + t * h.support_length();
                let e = ahlfors_kirchhoff(AhlforsSpace::DyadicHalfLine, &kernel, &two, &[x], q).unwrap();
                let want = delta_s_apply(s, &HaarExpansion::single(h), x).unwrap();
                assert!((e.value - want).abs() < 1e-6 * want.abs().max(1.0), "{} vs {want}", e.value);
                assert!(e.error_estimate.is_finite());
            }
        }
    }

    #[test]
    fn euclidean_matches_continuum() {
        let phi = TwoPointField::new(|x, y| {
            let r2: f64 = y.iter().map(|c| c * c).sum();
            (1.0 - r2).max(0.0).powi(3) * (1.0 + 0.3 * x[0])
        })
        .with_y_support(1.0)
        .with_y_gradient_sup(6.0);
        for (n, x) in [(1usize, vec![0.2]), (2, vec![0.1, -0.3])] {
            let s = 0.3;
            let kernel = ComparableKernel::pure_power(Metric::Euclidean, n as f64, s).unwrap();
            let e = ahlfors_kirchhoff(AhlforsSpace::Euclidean(n), &kernel, &phi, &x, Default::default()).unwrap();
            let spec = FracKernelSpec::new(n, s).unwrap();
            let c = frac_kir_regular(&spec, &phi, &x).unwrap();
            assert!((e.value - c.value).abs() < 1e-6 * c.value.abs().max(1.0), "{} vs {}", e.value, c.value);
        }
    }

    #[test]
    fn y_independent_and_scaling() {
        let kernel = ComparableKernel::pure_power(Metric::Euclidean, 1.0, 0.2).unwrap();
        let constant = TwoPointField::from_1d(|_, _| 0.0).with_y_support(1.0);
        let e = ahlfors_kirchhoff(AhlforsSpace::Euclidean(1), &kernel, &constant, &[0.5], Default::default()).unwrap();
        assert_eq!(e.value, 0.0);

        let phi = TwoPointField::from_1d(|_, y| (1.0 - y * y).max(0.0).powi(2)).with_y_support(1.0);
        let k3 = kernel.scaled(3.0).unwrap();
        let a = ahlfors_kirchhoff(AhlforsSpace::Euclidean(1), &kernel, &phi, &[0.4], Default::default()).unwrap();
        let b = ahlfors_kirchhoff(AhlforsSpace::Euclidean(1), &k3, &phi, &[0.4], Default::default()).unwrap();
        assert!((b.value - 3.0 * a.value).abs() < 1e-12 * b.value.abs());
    }

    #[test]
    fn monotone_in_kernel() {
        // Phi(x, y) >= Phi(x, x) = 0 everywhere.
        let phi = TwoPointField::from_1d(|x, y| ((y - x) * (y - x)) * (1.0 - y * y).max(0.0)).with_y_support(1.0);
        let base = ComparableKernel::pure_power(Metric::Euclidean, 1.0, 0.3).unwrap();
        let bigger = ComparableKernel::new(
            |x, y| {
                let d = dist(x, y);
                d.powf(-1.6) * (1.0 + 0.5 / (1.0 + d))
            },
            0.6,
            1.0,
            1.0,
            1.5,
        )
        .unwrap();
        let a = ahlfors_kirchhoff(AhlforsSpace::Euclidean(1), &base, &phi, &[0.2], Default::default()).unwrap();
        let b = ahlfors_kirchhoff(AhlforsSpace::Euclidean(1), &bigger, &phi, &[0.2], Default::default()).unwrap();
        assert!(b.value >= a.value && a.value > 0.0);
    }

    proptest! {
        #[test]
        fn net_laplacian_kills_constants_and_conserves_flux(
            masses in proptest::collection::vec(0.1f64..3.0, 6),
            vals in proptest::collection::vec(-5.0f64..5.0, 6),
            c0 in -10.0f64..10.0,
        ) {
            let net = line_net(6, 1.0, Some(masses.clone())).with_ball_mass(BallMass::Counting);
            let hm = NetMatrix((0..6).map(|a| (0..6).map(|b| 1.0 + ((a * b) % 3) as f64).collect()).collect());
            let c = ScalarField::constant(c0);
            let f = ScalarField::from_node_values(net.points(), &vals);
            let mut flux = NeumaierSum::new();
            let mut scale = 0.0f64;
            for k in 0..6 {
                prop_assert_eq!(net_laplacian(&net, &hm, &c, k).unwrap(), 0.0);
                prop_assert_eq!(net_frac_laplacian(&net, 0.7, &c, k).unwrap(), 0.0);
                let v = masses[k] * net_laplacian(&net, &hm, &f, k).unwrap();
                scale = scale.max(v.abs());
                flux.add(v);
            }
            prop_assert!(flux.value().abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn ahlfors_net_comparable_to_lattice() {
        // 1-Ahlfors Euclidean net with Lebesgue balls: mu B(x, d) = 2 d, so each weight is
        // h / (d^alpha 4 d) against the lattice weight h / d^{1+alpha}: ratio 1/4.
        let h = 0.05;
        let n = 81;
        let pts: Vec<Point> = (0..n).map(|k| Point::scalar((k as f64 - 40.0) * h)).collect();
        let net = MetricMeasureNet::new(pts, vec![h; n], Metric::Euclidean, 0.5, 0, 100.0)
            .unwrap()
            .with_ball_mass(BallMass::Lebesgue);
        let f = ScalarField::from_1d(|t| (-t * t).exp());
        let alpha = 0.6;
        for k in [30, 40, 47] {
            let v = net_frac_laplacian(&net, alpha, &f, k).unwrap();
            let xk = (k as f64 - 40.0) * h;
            let lattice: f64 = (0..n)
                .filter(|&i| i != k)
                .map(|i| {
                    let xi = (i as f64 - 40.0) * h;
                    (f.eval1(xi) - f.eval1(xk)) * h / (xi - xk).abs().powf(1.0 + alpha)
                })
                .sum();
            assert!((v - 0.25 * lattice).abs() < 1e-12 * lattice.abs(), "{v} vs {lattice}");
        }
    }
}
