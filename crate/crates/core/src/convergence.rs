//! Limits of quotient operators `Q(Phi, h) = Sigma(Phi, h) / T(h)` as `h -> 0`.
//!
//! A family supplies `Q(Phi, h, x)`; [`estimate_limit`] evaluates it on `h_m = h0 2^{-m}`,
//! fits an order from successive differences and Richardson-extrapolates. The verdict is a
//! finite witness at the sample point, not a statement about convergence in the dual space.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::continuum::{classical_kir, frac_kir, FracKernelSpec};
use crate::deriv::num_y_derivs;
use crate::error::{finite, KirError, Result};
use crate::field::{ScalarField, TwoPointField};
use crate::lattice::{cube_offsets, fd_kirchhoff, frac_lattice_constant, LatticeSpec};
use crate::quad::{GaussLegendre, NeumaierSum};

type QuotientFn = Arc<dyn Fn(&TwoPointField, f64, &[f64]) -> Result<f64> + Send + Sync>;
type LimitFn = Arc<dyn Fn(&TwoPointField, &[f64]) -> Result<f64> + Send + Sync>;
type AdmissibleFn = Arc<dyn Fn(&TwoPointField, &[f64]) -> Result<()> + Send + Sync>;

/// A one-parameter family of quotient operators.
#[derive(Clone)]
pub struct ConvergenceFamily {
    name: String,
    quotient: QuotientFn,
    limit: Option<LimitFn>,
    order: Option<f64>,
    admissible: Option<AdmissibleFn>,
}

impl fmt::Debug for ConvergenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvergenceFamily")
            .field("name", &self.name)
            .field("has_limit", &self.limit.is_some())
            .field("order", &self.order)
            .finish()
    }
}

impl ConvergenceFamily {
    pub fn new(
        name: impl Into<String>,
        quotient: impl Fn(&TwoPointField, f64, &[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        ConvergenceFamily {
            name: name.into(),
            quotient: Arc::new(quotient),
            limit: None,
            order: None,
            admissible: None,
        }
    }

    pub fn with_limit(
        mut self,
        limit: impl Fn(&TwoPointField, &[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        self.limit = Some(Arc::new(limit));
        self
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = Some(order);
        self
    }

    pub fn with_admissibility(
        mut self,
        check: impl Fn(&TwoPointField, &[f64]) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        self.admissible = Some(Arc::new(check));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn quotient(&self, phi: &TwoPointField, h: f64, x: &[f64]) -> Result<f64> {
        (self.quotient)(phi, h, x)
    }

    /// The claimed limit at `x`, when the family has one.
    pub fn claimed_limit(&self, phi: &TwoPointField, x: &[f64]) -> Option<Result<f64>> {
        self.limit.as_ref().map(|l| l(phi, x))
    }

    pub fn claimed_order(&self) -> Option<f64> {
        self.order
    }

    pub fn check_admissible(&self, phi: &TwoPointField, x: &[f64]) -> Result<()> {
        match &self.admissible {
            Some(a) => a(phi, x),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Diverged,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "converged",
            Verdict::Diverged => "diverged",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Outcome of [`estimate_limit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    /// Richardson-extrapolated value (the last value when no order could be fitted).
    pub value: f64,
    /// `|last difference| / (2^p - 1)`.
    pub error_bar: f64,
    /// Observed order `p`; `f64::INFINITY` when the sequence is constant.
    pub order: f64,
    pub hs: Vec<f64>,
    pub values: Vec<f64>,
    /// `values[m+1] - values[m]`.
    pub diffs: Vec<f64>,
    /// `log2(|diffs[m-1]| / |diffs[m]|)`, the order seen at each difference.
    pub orders: Vec<Option<f64>>,
    pub verdict: Verdict,
    /// Level whose evaluation failed, if any; the report then covers the earlier levels.
    pub failure_level: Option<usize>,
    pub failure: Option<String>,
}

/// Divergence: each of the last three levels at least doubles `|Q|`.
const GROWTH: f64 = 2.0;

/// Evaluates `Q(Phi, h0 2^{-m}, x)` for `m = 0..levels` and estimates the limit.
pub fn estimate_limit(
    fam: &ConvergenceFamily,
    phi: &TwoPointField,
    x: &[f64],
    h0: f64,
    levels: usize,
) -> Result<LimitReport> {
    if levels < 3 {
        return Err(KirError::invalid(format!("need at least 3 levels, got {levels}")));
    }
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(KirError::invalid(format!("h0 must be positive, got {h0}")));
    }
    fam.check_admissible(phi, x)?;
    let hs: Vec<f64> = (0..levels).map(|m| h0 * 0.5f64.powi(m as i32)).collect();
    let raw: Vec<Result<f64>> = hs.par_iter().map(|&h| fam.quotient(phi, h, x)).collect();
    let mut values = Vec::with_capacity(levels);
    let mut failure = None;
    for (m, r) in raw.into_iter().enumerate() {
        match r {
            Ok(v) if !v.is_nan() => values.push(v),
            Ok(v) => {
                failure = Some((m, format!("quotient is {v} at h = {}", hs[m])));
                break;
            }
            Err(e) => {
                failure = Some((m, e.to_string()));
                break;
            }
        }
    }
    let used = values.len();
    Ok(analyze(hs[..used].to_vec(), values, failure))
}

/// Verdict, order and extrapolation for a sequence at `h_m = h0 2^{-m}`.
pub fn analyze(hs: Vec<f64>, values: Vec<f64>, failure: Option<(usize, String)>) -> LimitReport {
    let n = values.len();
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let orders: Vec<Option<f64>> = (0..diffs.len())
        .map(|m| {
            if m == 0 {
                return None;
            }
            let (a, b) = (diffs[m - 1].abs(), diffs[m].abs());
            (a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()).then(|| (a / b).log2())
        })
        .collect();
    let (failure_level, failure) = match failure {
        Some((m, msg)) => (Some(m), Some(msg)),
        None => (None, None),
    };
    let mut report = LimitReport {
        value: values.last().copied().unwrap_or(f64::NAN),
        error_bar: f64::INFINITY,
        order: f64::NAN,
        hs,
        values: values.clone(),
        diffs: diffs.clone(),
        orders: orders.clone(),
        verdict: Verdict::Inconclusive,
        failure_level,
        failure,
    };
    if n >= 3 {
        let tail = &values[n - 3..];
        let grows = tail
            .windows(2)
            .all(|w| w[0] != 0.0 && w[1].abs() >= GROWTH * w[0].abs());
        if grows {
            report.verdict = Verdict::Diverged;
            report.value = if tail[2] < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
            return report;
        }
    }
    if n < 3 || values.iter().any(|v| !v.is_finite()) {
        return report;
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise = 1e-13 * scale + f64::MIN_POSITIVE;
    let last = diffs[diffs.len() - 1];
    if last.abs() <= noise {
        // Constant from some level on.
        report.verdict = Verdict::Converged;
        report.order = f64::INFINITY;
        report.error_bar = noise;
        return report;
    }
    let window = diffs.len().min(4);
    let recent = &diffs[diffs.len() - window..];
    let monotone = recent.windows(2).all(|w| w[1].abs() < w[0].abs());
    let p = orders[orders.len() - 1].unwrap_or(f64::NAN);
    if monotone && p > 0.0 {
        let factor = 2f64.powf(p) - 1.0;
        report.value = values[n - 1] + last / factor;
        report.error_bar = last.abs() / factor;
        report.order = p;
        report.verdict = Verdict::Converged;
    } else {
        report.order = p;
    }
    report
}

fn scale_of(x: &[f64]) -> f64 {
    x.iter().fold(1.0f64, |m, c| m.max(c.abs()))
}

/// `Phi(x, x) = 0` at `x` and at a few points around it.
fn vanishes_on_diagonal(phi: &TwoPointField, x: &[f64]) -> Result<()> {
    let mut probes = vec![x.to_vec()];
    for (i, d) in [0.137, -0.291, 0.05].iter().enumerate() {
        let mut p = x.to_vec();
        p[i % x.len()] += d;
        probes.push(p);
    }
    for p in probes {
        let v = phi.eval(&p, &p);
        let scale = phi.sup_norm().unwrap_or(1.0).max(1.0);
        if !(v.abs() <= 1e-12 * scale) {
            return Err(KirError::invalid(format!(
                "not admissible: Phi(x, x) = {v} at x = {p:?}, the family needs Phi to vanish on the diagonal"
            )));
        }
    }
    Ok(())
}

/// Index of the cube `prod [h k_m, h (k_m + 1))` containing `x`.
fn cube_index(x: &[f64], h: f64) -> Vec<i64> {
    x.iter().map(|c| (c / h).floor() as i64).collect()
}

/// Finite differences on `hZ^n`: `Q(Phi, h)(x) = fd_kirchhoff` at the cube containing `x`.
///
/// Limit `(Delta_y Phi)(x, x)`, order 2. The cube corner is `x` itself only for `x` on every
/// lattice, so dyadic sample points give the clean order.
pub fn family_fd() -> ConvergenceFamily {
    ConvergenceFamily::new("fd", |phi, h, x| {
        let k = cube_index(x, h);
        let window = k.iter().fold(0i64, |m, c| m.max(c.abs())) + 2;
        let spec = LatticeSpec::new(x.len(), h, window)?;
        fd_kirchhoff(&spec, phi, &k)
    })
    .with_limit(|phi, x| classical_kir(phi, x))
    .with_order(2.0)
    .with_admissibility(vanishes_on_diagonal)
}

/// `sum_{j != 0} |j|^{-n-alpha}` over `Z^n`.
fn full_lattice_sum(n: usize, alpha: f64) -> Result<f64> {
    if n == 1 {
        return Ok(2.0 * zeta(1.0 + alpha));
    }
    let r = if n == 2 { 400 } else { 40 };
    Ok(frac_lattice_constant(n, alpha, r)?.value)
}

/// Riemann zeta for real `s > 1` by Euler-Maclaurin with 24 leading terms.
pub fn zeta(s: f64) -> f64 {
    let nn = 24.0f64;
    let mut acc = NeumaierSum::new();
    for j in (1..24).rev() {
        acc.add((j as f64).powf(-s));
    }
    acc.add(nn.powf(1.0 - s) / (s - 1.0));
    acc.add(0.5 * nn.powf(-s));
    acc.add(s * nn.powf(-s - 1.0) / 12.0);
    acc.add(-s * (s + 1.0) * (s + 2.0) * nn.powf(-s - 3.0) / 720.0);
    acc.add(s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * nn.powf(-s - 5.0) / 30240.0);
    acc.value()
}

/// Discrete fractional family: `Q(Phi, h)(x) = h^{-alpha} sum_{j != k} Phi(hk, hj) / |k - j|^{n+alpha}`
/// at the cube containing `x`; limit `int (Phi(x, y) - Phi(x, x)) |x - y|^{-n-alpha} dy`.
///
/// The sum is finite when `Phi` declares a y-support. Otherwise `far_radius` must be given:
/// beyond it `y -> Phi(x, y)` is taken constant, and that constant is summed over the whole
/// lattice in closed form.
pub fn family_frac(alpha: f64, far_radius: Option<f64>) -> Result<ConvergenceFamily> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(KirError::invalid(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    let fam = ConvergenceFamily::new(format!("frac(alpha={alpha})"), move |phi, h, x| {
        let n = x.len();
        let k = cube_index(x, h);
        let xk: Vec<f64> = k.iter().map(|c| *c as f64 * h).collect();
        let xnorm = xk.iter().map(|c| c * c).sum::<f64>().sqrt();
        let (reach, far_value) = match (phi.y_support(), far_radius) {
            (Some(rs), _) => (rs, 0.0),
            (None, Some(rf)) => {
                let mut far = xk.clone();
                far[0] += rf + xnorm + 1.0;
                (rf, phi.eval(&xk, &far))
            }
            (None, None) => {
                return Err(KirError::invalid(
                    "the fractional family needs Phi with a y-support or a far radius",
                ))
            }
        };
        // Cover |y| <= reach plus one ring: |hj - hk|_inf <= |x| + reach + h.
        let r = ((xnorm + reach) / h).ceil() as i64 + 1;
        let p = -(n as f64 + alpha) / 2.0;
        let mut s = NeumaierSum::new();
        let mut y = xk.clone();
        for d in cube_offsets(n, r, false) {
            for m in 0..n {
                y[m] = h * (k[m] + d[m]) as f64;
            }
            let sq: i64 = d.iter().map(|c| c * c).sum();
            s.add((phi.eval(&xk, &y) - far_value) * (sq as f64).powf(p));
        }
        if far_value != 0.0 {
            s.add(far_value * full_lattice_sum(n, alpha)?);
        }
        finite(s.value() * h.powf(-alpha), || format!("fractional quotient at h = {h}"))
    })
    .with_limit(move |phi, x| {
        let spec = FracKernelSpec::new(x.len(), alpha / 2.0)?;
        Ok(frac_kir(&spec, phi, x)?.value)
    })
    .with_admissibility(vanishes_on_diagonal);
    Ok(fam)
}

/// Poisson-kernel cut-off: with `h = 1/k`,
/// `Q(Phi, h)(x) = pi h (1 + x^2/h^2) int_{x-h}^{x+h} Phi(x, y) dy`; limit `2 pi x^2 Phi(x, x)`.
pub fn family_poisson_cutoff() -> ConvergenceFamily {
    let rule = Arc::new(GaussLegendre::new(16));
    ConvergenceFamily::new("poisson", move |phi, h, x| {
        let x0 = one_d(x)?;
        let integral = rule.integrate(x0 - h, x0 + h, |y| phi.eval1(x0, y));
        finite(PI * h * (1.0 + x0 * x0 / (h * h)) * integral, || {
            format!("Poisson cut-off quotient at h = {h}")
        })
    })
    .with_limit(|phi, x| {
        let x0 = one_d(x)?;
        Ok(2.0 * PI * x0 * x0 * phi.eval1(x0, x0))
    })
}

fn one_d(x: &[f64]) -> Result<f64> {
    if x.len() != 1 {
        return Err(KirError::invalid(format!("this family lives on R; got a point of dimension {}", x.len())));
    }
    Ok(x[0])
}

type CouplingMap = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Deterministic coupling family `Q(Phi, h)(x) = Phi(x, F(h, x)) / h` with `F(0, x) = x`;
/// limit `dF/dh(0, x) dPhi/dy(x, x)`.
///
/// `dfdh` is the declared `dF/dh(0, x)`; without it a one-sided second-order difference is used.
pub fn family_coupling(
    f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    dfdh: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
) -> ConvergenceFamily {
    let f: CouplingMap = Arc::new(f);
    let fq = f.clone();
    let fl = f.clone();
    let fa = f;
    ConvergenceFamily::new("coupling", move |phi, h, x| {
        let x0 = one_d(x)?;
        finite(phi.eval1(x0, fq(h, x0)) / h, || format!("coupling quotient at h = {h}"))
    })
    .with_limit(move |phi, x| {
        let x0 = one_d(x)?;
        let speed = match &dfdh {
            Some(d) => d(x0),
            None => {
                let d = 1e-5 * scale_of(x);
                (-3.0 * fl(0.0, x0) + 4.0 * fl(d, x0) - fl(2.0 * d, x0)) / (2.0 * d)
            }
        };
        let dphi = match phi.y_gradient(x, x) {
            Some(g) => g[0],
            None => num_y_derivs(phi, x, 1, 1e-5 * scale_of(x))?
                .gradient()
                .map(|g| g[0])
                .unwrap_or(f64::NAN),
        };
        finite(speed * dphi, || "coupling limit".to_string())
    })
    .with_admissibility(move |phi, x| {
        let x0 = one_d(x)?;
        for t in [x0, x0 + 0.25, x0 - 0.5, 2.0 * x0 + 1.0] {
            let back = fa(0.0, t);
            if !((back - t).abs() <= 1e-12 * t.abs().max(1.0)) {
                return Err(KirError::contract(format!("F(0, x) = {back} differs from x = {t}")));
            }
        }
        vanishes_on_diagonal(phi, x)
    })
}

/// `eta(t) = e^{-t^2} / sqrt(pi)`.
pub fn gaussian(t: f64) -> f64 {
    (-t * t).exp() / PI.sqrt()
}

/// `int Phi(x, y) dy` over the declared y-support.
fn section_integral(phi: &TwoPointField, x0: f64) -> Result<f64> {
    let r = phi
        .y_support()
        .ok_or_else(|| KirError::invalid("this family needs Phi with a declared y-support"))?;
    let rule = GaussLegendre::new(12);
    Ok(rule.integrate_composite(-r, r, 64, |y| phi.eval1(x0, y)))
}

/// `zeta(t) / eta(t)` without overflow when `zeta(t) = 0`.
fn ratio_to_gaussian(zeta: f64, t: f64) -> f64 {
    if zeta == 0.0 {
        0.0
    } else {
        zeta * PI.sqrt() * (t * t).exp()
    }
}

/// `T_k = eta_k dx`, `S = dx dy`: `Q(Phi, 1/k)(x) = int Phi(x, y) dy / eta_k(x)`.
///
/// Tends to 0 at `x = 0` and where the section integral vanishes; grows without bound
/// elsewhere.
pub fn family_gaussian_area() -> ConvergenceFamily {
    ConvergenceFamily::new("gaussian-area", |phi, h, x| {
        let x0 = one_d(x)?;
        let k = 1.0 / h;
        let integral = section_integral(phi, x0)?;
        if integral == 0.0 {
            return Ok(0.0);
        }
        Ok(integral * h * ratio_to_gaussian(1.0, k * x0))
    })
}

type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Probability densities `zeta` for [`family_tail_dichotomy`].
#[derive(Clone)]
pub struct TailDensity {
    pub density: Density,
    pub compact_support: bool,
}

impl fmt::Debug for TailDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TailDensity {{ compact_support: {} }}", self.compact_support)
    }
}

impl TailDensity {
    /// `3/4 (1 - t^2)_+`.
    pub fn epanechnikov() -> Self {
        TailDensity {
            density: Arc::new(|t| 0.75 * (1.0 - t * t).max(0.0)),
            compact_support: true,
        }
    }

    /// `1 / (pi (1 + t^2))`.
    pub fn cauchy() -> Self {
        TailDensity {
            density: Arc::new(|t| 1.0 / (PI * (1.0 + t * t))),
            compact_support: false,
        }
    }
}

/// `T_k = eta_k dx`, `S_k = zeta_k(x) dx dy`: `Q(Phi, 1/k)(x) = (zeta(kx)/eta(kx)) int Phi(x, y) dy`.
///
/// For compactly supported `zeta` the limit is `zeta(0)/eta(0) int Phi(0, y) dy` at `x = 0`
/// and `0` elsewhere; heavy tails have no limit off the origin.
pub fn family_tail_dichotomy(zeta: TailDensity) -> ConvergenceFamily {
    let z = zeta.density.clone();
    let zl = zeta.density.clone();
    let compact = zeta.compact_support;
    let name = if compact { "dichotomy(compact)" } else { "dichotomy(heavy)" };
    let fam = ConvergenceFamily::new(name, move |phi, h, x| {
        let x0 = one_d(x)?;
        let t = x0 / h;
        let integral = section_integral(phi, x0)?;
        if integral == 0.0 {
            return Ok(0.0);
        }
        Ok(ratio_to_gaussian(z(t), t) * integral)
    });
    fam.with_limit(move |phi, x| {
        let x0 = one_d(x)?;
        let integral = section_integral(phi, x0)?;
        if x0 == 0.0 {
            Ok(ratio_to_gaussian(zl(0.0), 0.0) * integral)
        } else if compact || integral == 0.0 {
            Ok(0.0)
        } else {
            Err(KirError::Convergence(format!(
                "heavy-tailed density: no limit at x = {x0} where the section integral is {integral}"
            )))
        }
    })
}

/// Weak form: `h -> int Q(Phi, h)(x) test(x) dx` over `[lo, hi]` on the same `h`-sequence.
pub fn estimate_weak_limit(
    fam: &ConvergenceFamily,
    phi: &TwoPointField,
    test: &ScalarField,
    lo: f64,
    hi: f64,
    h0: f64,
    levels: usize,
) -> Result<LimitReport> {
    if levels < 3 || !(lo < hi) {
        return Err(KirError::invalid("need levels >= 3 and lo < hi"));
    }
    let rule = GaussLegendre::new(8);
    let hs: Vec<f64> = (0..levels).map(|m| h0 * 0.5f64.powi(m as i32)).collect();
    let mut values = Vec::new();
    let mut failure = None;
    for (m, &h) in hs.iter().enumerate() {
        let mut err = None;
        let v = rule.integrate_composite(lo, hi, 32, |x| {
            match fam.quotient(phi, h, &[x]) {
                Ok(q) => q * test.eval1(x),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        });
        if let Some(e) = err {
            failure = Some((m, e.to_string()));
            break;
        }
        values.push(v);
    }
    let used = values.len();
    Ok(analyze(hs[..used].to_vec(), values, failure))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::grad0;
    use proptest::prelude::*;

    fn synthetic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ConvergenceFamily {
        ConvergenceFamily::new("synthetic", move |_, h, _| Ok(f(h)))
    }

    #[test]
    fn constant_and_linear_sequences() {
        let phi = TwoPointField::zero();
        let r = estimate_limit(&synthetic(|_| 3.5), &phi, &[0.0], 1.0, 6).unwrap();
        assert_eq!(r.verdict, Verdict::Converged);
        assert_eq!(r.value, 3.5);
        assert!(r.order.is_infinite());

        let r = estimate_limit(&synthetic(|h| 1.25 + 0.7 * h), &phi, &[0.0], 1.0, 6).unwrap();
        assert_eq!(r.verdict, Verdict::Converged);
        assert!((r.value - 1.25).abs() < 1e-12);
        assert!((r.order - 1.0).abs() < 1e-9);

        let r = estimate_limit(&synthetic(|h| 1.0 / h), &phi, &[0.0], 1.0, 5).unwrap();
        assert_eq!(r.verdict, Verdict::Diverged);
        assert!(estimate_limit(&synthetic(|h| h), &phi, &[0.0], 1.0, 2).is_err());
    }

    #[test]
    fn failure_gives_partial_report() {
        let fam = ConvergenceFamily::new("fails", |_, h, _| {
            if h < 0.2 {
                Err(KirError::Convergence("too fine".into()))
            } else {
                Ok(h)
            }
        });
        let r = estimate_limit(&fam, &TwoPointField::zero(), &[0.0], 1.0, 6).unwrap();
        assert_eq!(r.failure_level, Some(3));
        assert_eq!(r.values.len(), 3);
    }

    #[test]
    fn fd_family_examples() {
        let fam = family_fd();
        let phi = TwoPointField::from_1d(|x, y| (y - x) * (y - x));
        let r = estimate_limit(&fam, &phi, &[0.375], 0.5, 8).unwrap();
        assert_eq!(r.verdict, Verdict::Converged);
        assert!((r.value - 2.0).abs() < 1e-9);
        assert!(r.order >= 1.9);

        let f = ScalarField::new(|p| p[0] * p[0] + p[1] * p[1]);
        let r = estimate_limit(&fam, &grad0(&f), &[0.25, -0.5], 0.5, 6).unwrap();
        assert!((r.value - 4.0).abs() < 1e-9);

        let r = estimate_limit(&fam, &TwoPointField::zero(), &[0.3], 0.5, 5).unwrap();
        assert_eq!(r.value, 0.0);

        let bad = TwoPointField::from_1d(|_, y| y);
        assert!(estimate_limit(&fam, &bad, &[0.5], 0.5, 5).is_err());
    }

    #[test]
    fn fd_quartic_order() {
        let f = ScalarField::from_1d(|t| t.powi(4) - 2.0 * t.powi(3));
        let r = estimate_limit(&family_fd(), &grad0(&f), &[0.75], 0.25, 8).unwrap();
        assert!((1.8..=2.2).contains(&r.order), "order {}", r.order);
        let want = 12.0 * 0.75f64.powi(2) - 12.0 * 0.75;
        assert!((r.value - want).abs() < 1e-8);
    }

    #[test]
    fn poisson_examples() {
        let fam = family_poisson_cutoff();
        let one = TwoPointField::from_1d(|_, _| 1.0);
        let r = estimate_limit(&fam, &one, &[1.0], 0.5, 10).unwrap();
        assert!((r.value - 2.0 * PI).abs() < 1e-6);
        let r = estimate_limit(&fam, &one, &[0.0], 0.5, 10).unwrap();
        assert!(r.value.abs() < 1e-6);
        let cos = TwoPointField::from_1d(|_, y| y.cos());
        let r = estimate_limit(&fam, &cos, &[1.0], 0.5, 10).unwrap();
        assert!((r.value - 2.0 * PI * 1f64.cos()).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn coupling_examples() {
        let x = (-1.0f64).exp();
        let fam = family_coupling(|h, x| x.powf(1.0 + h), None);
        let phi = TwoPointField::from_1d(|x, y| x * (y - x));
        let r = estimate_limit(&fam, &phi, &[x], 0.25, 12).unwrap();
        assert!((r.value + (-2.0f64).exp()).abs() < 1e-7, "{}", r.value);
        let claimed = fam.claimed_limit(&phi, &[x]).unwrap().unwrap();
        assert!((claimed + (-2.0f64).exp()).abs() < 1e-8);

        let still = family_coupling(|_, x| x, None);
        let r = estimate_limit(&still, &phi, &[0.4], 0.5, 5).unwrap();
        assert_eq!(r.value, 0.0);

        let v = |t: f64| t.sin() + 2.0;
        let moving = family_coupling(move |h, x| x + h * v(x), None);
        let lin = TwoPointField::from_1d(|x, y| y - x);
        let r = estimate_limit(&moving, &lin, &[0.3], 0.5, 6).unwrap();
        assert!((r.value - v(0.3)).abs() < 1e-10);

        let broken = family_coupling(|h, x| x + 1.0 + h, None);
        assert!(matches!(
            estimate_limit(&broken, &lin, &[0.3], 0.5, 5),
            Err(KirError::Contract(_))
        ));
    }

    fn bump_section() -> TwoPointField {
        TwoPointField::from_1d(|x, y| (1.0 + x * x) * (1.0 - y * y).max(0.0).powi(2)).with_y_support(1.0)
    }

    #[test]
    fn gaussian_area_diverges_off_origin() {
        let fam = family_gaussian_area();
        let r = estimate_limit(&fam, &bump_section(), &[0.5], 1.0, 6).unwrap();
        assert_eq!(r.verdict, Verdict::Diverged);
        let r = estimate_limit(&fam, &bump_section(), &[0.0], 1.0, 6).unwrap();
        assert_eq!(r.verdict, Verdict::Converged);
        assert!(r.value.abs() < 1e-12);
        // Outside the first projection of the support the section integral vanishes.
        let local = TwoPointField::from_1d(|x, y| (1.0 - x * x).max(0.0) * (1.0 - y * y).max(0.0)).with_y_support(1.0);
        let r = estimate_limit(&fam, &local, &[1.5], 1.0, 6).unwrap();
        assert_eq!(r.values, vec![0.0; 6]);
    }

    #[test]
    fn tail_dichotomy() {
        let compact = family_tail_dichotomy(TailDensity::epanechnikov());
        let r = estimate_limit(&compact, &bump_section(), &[0.5], 1.0, 8).unwrap();
        assert_eq!(r.verdict, Verdict::Converged);
        assert_eq!(r.value, 0.0);
        let r = estimate_limit(&compact, &bump_section(), &[0.0], 1.0, 5).unwrap();
        let want = compact.claimed_limit(&bump_section(), &[0.0]).unwrap().unwrap();
        assert!((r.value - want).abs() < 1e-12);
        assert!((want - 0.75 * PI.sqrt() * 16.0 / 15.0).abs() < 1e-10);

        let heavy = family_tail_dichotomy(TailDensity::cauchy());
        let r = estimate_limit(&heavy, &bump_section(), &[0.5], 1.0, 6).unwrap();
        assert_eq!(r.verdict, Verdict::Diverged);
        assert!(heavy.claimed_limit(&bump_section(), &[0.5]).unwrap().is_err());
    }

    #[test]
    fn frac_family_symmetry_and_limit() {
        let fam = family_frac(0.5, None).unwrap();
        // Antisymmetric in y - x: the centred lattice sum cancels pairwise.
        let odd = TwoPointField::from_1d(|x, y| (y - x) * (1.0 - (y - x) * (y - x)).max(0.0)).with_y_support(2.0);
        for h in [0.5, 0.125, 0.03125] {
            assert_eq!(fam.quotient(&odd, h, &[0.0]).unwrap(), 0.0);
        }
        assert!(family_frac(2.0, None).is_err());

        let bump = |t: f64| (1.0 - t * t).max(0.0).powi(4);
        let phi = TwoPointField::from_1d(move |x, y| bump(x) * (bump(y) - bump(x)));
        let fam = family_frac(0.5, Some(1.0)).unwrap();
        let x = [0.25];
        let r = estimate_limit(&fam, &phi, &x, 0.25, 9).unwrap();
        let want = fam.claimed_limit(&phi, &x).unwrap().unwrap();
        assert!((r.value - want).abs() < 0.02 * want.abs(), "{} vs {want}", r.value);
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-13);
        assert!((zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-13);
    }

    #[test]
    fn weak_limit_of_fd() {
        let phi = TwoPointField::from_1d(|x, y| (y - x).powi(2) * (1.0 + x * x));
        let test = ScalarField::from_1d(|t| (1.0 - t * t).max(0.0));
        let r = estimate_weak_limit(&family_fd(), &phi, &test, -1.0, 1.0, 0.25, 5).unwrap();
        // Q is 2(1 + (hk)^2) on each cube; the weak limit is int 2 (1 + x^2)(1 - x^2) dx.
        let want = 2.0 * (2.0 - 2.0 / 5.0);
        assert!((r.value - want).abs() < 1e-3, "{} vs {want}", r.value);
    }

    proptest! {
        #[test]
        fn coupling_quotient_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, h in 0.001f64..0.5, x in 0.1f64..2.0) {
            let fam = family_coupling(|h, x| x * (1.0 + h).sqrt(), None);
            let p = TwoPointField::from_1d(|x, y| (y - x) * x);
            let q = TwoPointField::from_1d(|x, y| (y - x).sin());
            let comb = p.linear_combination(a, &q, b);
            let lhs = fam.quotient(&comb, h, &[x]).unwrap();
            let rhs = a * fam.quotient(&p, h, &[x]).unwrap() + b * fam.quotient(&q, h, &[x]).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn poisson_quotient_identity(x in -2.0f64..2.0, k in 1u32..200) {
            let fam = family_poisson_cutoff();
            let phi = TwoPointField::from_1d(|x, y| (x - y).cos() + x * y);
            let h = 1.0 / k as f64;
            let q = fam.quotient(&phi, h, &[x]).unwrap();
            let rule = GaussLegendre::new(16);
            let integral = rule.integrate(x - h, x + h, |y| phi.eval1(x, y));
            let direct = 2.0 * PI * (h * h + x * x) * (k as f64 / 2.0) * integral;
            prop_assert!((q - direct).abs() <= 1e-12 * direct.abs().max(1e-300) + 1e-15);
        }
    }
}
