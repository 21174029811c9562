//! Operators on `R^n`: the classical identity `Kir Phi(x) = Delta_y Phi(x, x)`, the
//! fractional divergence `int (Phi(x, y) - Phi(x, x)) |x - y|^{-n-2s} dy` in the
//! absolutely convergent (`s < 1/2`) and principal-value (`1/2 <= s < 1`) regimes, and the
//! Hilbert-kernel operators.
//!
//! The fractional integrals are computed in polar form around `x`, pairing each direction
//! `theta` with `-theta`: the integrand becomes
//! `g(r, theta) = Phi(x, x + r theta) + Phi(x, x - r theta) - 2 Phi(x, x)`, which is
//! `O(r^2)` for `C^2` fields. The unit ball is cut into octaves `[2^{-m-1}, 2^{-m}]`; the
//! octave contributions `P_m` are the Cauchy differences `psi_{eps/2} - psi_eps` and are
//! summed geometrically beyond the last octave.

use std::f64::consts::PI;

use serde::Serialize;

use crate::deriv::{num_y_derivs, y_hessian_at};
use crate::error::{KirError, Result};
use crate::field::{ScalarField, TwoPointField};
use crate::quad::{GaussLegendre, NeumaierSum};

/// `|S^{n-1}|`: 2, 2 pi, 4 pi for `n = 1, 2, 3`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            // 2 pi^{n/2} / Gamma(n/2), by the recurrence |S^{n+1}| = 2 pi |S^{n-1}| / n.
            let mut a = if n % 2 == 0 { 2.0 * PI } else { 2.0 };
            let mut k = if n % 2 == 0 { 2 } else { 1 };
            while k < n {
                a *= 2.0 * PI / k as f64;
                k += 2;
            }
            a
        }
    }
}

/// The two regimes of the fractional kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `0 < s < 1/2`: the kernel integral converges absolutely against Lipschitz fields.
    Regular,
    /// `1/2 <= s < 1`: a principal value is needed.
    PrincipalValue,
}

/// Kernel exponent and quadrature resolution for the fractional operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FracKernelSpec {
    dim: usize,
    s: f64,
    /// Octaves integrated inside the unit ball.
    pub near_levels: u32,
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Panels per near-field octave.
    pub near_panels: usize,
    /// Panels per far-field octave.
    pub far_panels: usize,
    /// Angular resolution (directions per half circle in 2D, cosine nodes in 3D).
    pub angular: usize,
    /// Far field cut-off `2^far_octaves` when `Phi` has no declared y-support.
    pub far_octaves: u32,
    /// Octaves used to fit the Cauchy rate.
    pub fit_levels: u32,
}

impl FracKernelSpec {
    pub fn new(dim: usize, s: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(KirError::invalid(format!("dimension {dim} not supported (1..=3)")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(KirError::invalid(format!("s must lie in (0, 1), got {s}")));
        }
        Ok(FracKernelSpec {
            dim,
            s,
            near_levels: 18,
            order: 12,
            near_panels: 2,
            far_panels: 8,
            angular: if dim == 2 { 48 } else { 12 },
            far_octaves: 14,
            fit_levels: 8,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn regime(&self) -> Regime {
        if self.s < 0.5 {
            Regime::Regular
        } else {
            Regime::PrincipalValue
        }
    }

    pub fn with_resolution(mut self, near_levels: u32, order: usize, angular: usize) -> Self {
        self.near_levels = near_levels.max(2);
        self.order = order.max(2);
        self.angular = angular.max(1);
        self
    }
}

/// Result of a fractional evaluation together with its Cauchy differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FracResult {
    pub value: f64,
    pub error_estimate: f64,
    /// Whether the far-field tail is covered by a declared support or decay.
    pub far_tail_bounded: bool,
    /// `eps_m = 2^{-m}` for the integrated octaves.
    pub eps: Vec<f64>,
    /// `psi_{eps_m}`: the integral over `|x - y| >= eps_m`.
    pub psi: Vec<f64>,
    /// `P_m = psi_{eps_{m+1}} - psi_{eps_m}`.
    pub cauchy_diffs: Vec<f64>,
    /// Least-squares exponent `p` in `|P_m| ~ eps_m^p` over the last octaves.
    pub fitted_rate: Option<f64>,
}

/// Directions on a closed half sphere with weights summing to `|S^{n-1}| / 2`.
pub(crate) fn half_sphere(n: usize, angular: usize) -> Vec<(Vec<f64>, f64)> {
    match n {
        1 => vec![(vec![1.0], 1.0)],
        2 => {
            let m = angular.max(1);
            (0..m)
                .map(|i| {
                    let t = PI * (i as f64 + 0.5) / m as f64;
                    (vec![t.cos(), t.sin()], PI / m as f64)
                })
                .collect()
        }
        _ => {
            let rule = GaussLegendre::new(angular.max(1));
            let nphi = 2 * angular.max(1);
            let mut out = Vec::with_capacity(rule.len() * nphi);
            for (mu, wmu) in rule.mapped(0.0, 1.0) {
                let rho = (1.0 - mu * mu).max(0.0).sqrt();
                for k in 0..nphi {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / nphi as f64;
                    out.push((
                        vec![rho * phi.cos(), rho * phi.sin(), mu],
                        wmu * 2.0 * PI / nphi as f64,
                    ));
                }
            }
            out
        }
    }
}

/// Integral over `[a, b]`, split at the given interior breakpoints and into `panels` pieces.
pub(crate) fn split_integral(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    breaks: &[f64],
    panels: usize,
    f: &mut dyn FnMut(f64) -> f64,
) -> f64 {
    let mut cuts = vec![a];
    let w = (b - a) / panels.max(1) as f64;
    for p in 1..panels.max(1) {
        cuts.push(a + w * p as f64);
    }
    cuts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    let mut s = NeumaierSum::new();
    for win in cuts.windows(2) {
        if win[1] > win[0] {
            s.add(rule.integrate(win[0], win[1], &mut *f));
        }
    }
    s.value()
}

/// Radii `r > 0` where `x +- r theta` crosses the sphere `|y| = radius`.
pub(crate) fn support_breaks(x: &[f64], theta: &[f64], radius: f64) -> Vec<f64> {
    let xt: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
    let xx: f64 = x.iter().map(|a| a * a).sum();
    let disc = xt * xt - xx + radius * radius;
    if disc < 0.0 {
        return Vec::new();
    }
    let d = disc.sqrt();
    [-xt - d, -xt + d, xt - d, xt + d]
        .into_iter()
        .filter(|r| *r > 0.0)
        .collect()
}

struct Radial<'a> {
    phi: &'a TwoPointField,
    x: &'a [f64],
    phi_xx: f64,
}

impl Radial<'_> {
    fn g(&self, theta: &[f64], r: f64, yp: &mut [f64], ym: &mut [f64]) -> f64 {
        for i in 0..self.x.len() {
            yp[i] = self.x[i] + r * theta[i];
            ym[i] = self.x[i] - r * theta[i];
        }
        let a = self.phi.eval(self.x, yp);
        let b = self.phi.eval(self.x, ym);
        (a - self.phi_xx) + (b - self.phi_xx)
    }
}

/// Shared radial machinery for both regimes.
fn frac_integral(spec: &FracKernelSpec, phi: &TwoPointField, x: &[f64]) -> Result<FracResult> {
    if x.len() != spec.dim {
        return Err(KirError::invalid(format!(
            "point has dimension {}, kernel has dimension {}",
            x.len(),
            spec.dim
        )));
    }
    let s = spec.s;
    let phi_xx = phi.eval(x, x);
    crate::error::finite(phi_xx, || "Phi(x, x)".to_string())?;
    let rad = Radial { phi, x, phi_xx };
    let rule = GaussLegendre::new(spec.order);
    let dirs = half_sphere(spec.dim, spec.angular);
    let levels = spec.near_levels as usize;
    let kernel = |r: f64| r.powf(-1.0 - 2.0 * s);

    let xnorm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    let support = phi.y_support();
    let far_end = match support {
        Some(rs) => (xnorm + rs).max(1.0),
        None => 2f64.powi(spec.far_octaves as i32),
    };

    let mut near = vec![NeumaierSum::new(); levels];
    let mut far = NeumaierSum::new();
    let mut tail = NeumaierSum::new();
    let mut yp = vec![0.0; spec.dim];
    let mut ym = vec![0.0; spec.dim];
    for (theta, w) in &dirs {
        let breaks = support.map(|rs| support_breaks(x, theta, rs)).unwrap_or_default();
        for (m, acc) in near.iter_mut().enumerate() {
            let hi = 2f64.powi(-(m as i32));
            let lo = 0.5 * hi;
            let v = split_integral(&rule, lo, hi, &breaks, spec.near_panels, &mut |r| {
                rad.g(theta, r, &mut yp, &mut ym) * kernel(r)
            });
            acc.add(w * v);
        }
        let mut a = 1.0;
        while a < far_end {
            let b = (2.0 * a).min(far_end);
            let v = split_integral(&rule, a, b, &breaks, spec.far_panels, &mut |r| {
                rad.g(theta, r, &mut yp, &mut ym) * kernel(r)
            });
            far.add(w * v);
            a = b;
        }
        // Beyond far_end, g is (nearly) constant: -2 Phi(x, x) outside a support, or the
        // limit difference for decaying fields.
        let g_end = rad.g(theta, far_end * 1.000001, &mut yp, &mut ym);
        tail.add(w * g_end * far_end.powf(-2.0 * s) / (2.0 * s));
    }

    let p: Vec<f64> = near.iter().map(|a| a.value()).collect();
    let far_total = far.value() + tail.value();
    let scale = p.iter().fold(far_total.abs(), |m, v| m.max(v.abs())).max(phi_xx.abs());
    let floor = 1e-13 * scale.max(f64::MIN_POSITIVE);

    // psi_eps for eps = 2^{-m}, m = 1..=levels.
    let mut eps = Vec::with_capacity(levels);
    let mut psi = Vec::with_capacity(levels);
    let mut run = NeumaierSum::new();
    run.add(far_total);
    for (m, pm) in p.iter().enumerate() {
        run.add(*pm);
        eps.push(2f64.powi(-(m as i32) - 1));
        psi.push(run.value());
    }

    let fit_from = levels.saturating_sub(spec.fit_levels as usize).max(1);
    let fitted_rate = fit_rate(&p[fit_from..], fit_from, floor);
    let q = 2f64.powf(-(2.0 - 2.0 * s));
    let last = *p.last().unwrap_or(&0.0);
    let geometric_tail = last * q / (1.0 - q);
    let mut error_estimate = 1e-14 * scale * levels as f64;
    if let Some(rate) = fitted_rate {
        let qf = 2f64.powf(-rate);
        if qf < 1.0 {
            error_estimate += (last * qf / (1.0 - qf) - geometric_tail).abs();
        } else {
            error_estimate = f64::INFINITY;
        }
    }
    let mut far_tail_bounded = support.is_some();
    if support.is_none() {
        if let Some(d) = phi.y_decay() {
            if d.power > 0.0 && far_end > 2.0 * xnorm.max(1.0) {
                far_tail_bounded = true;
                error_estimate += sphere_area(spec.dim) * 2.0 * d.bound * 2f64.powf(d.power)
                    * far_end.powf(-d.power - 2.0 * s)
                    / (d.power + 2.0 * s);
            }
        }
    }
    let value = run.value() + geometric_tail;
    crate::error::finite(value, || "fractional divergence".to_string())?;
    Ok(FracResult {
        value,
        error_estimate,
        far_tail_bounded,
        eps,
        psi,
        cauchy_diffs: p,
        fitted_rate,
    })
}

/// Least-squares slope of `-log2 |P_m|` against `m`; `None` when some `|P_m|` is below `floor`.
fn fit_rate(p: &[f64], first: usize, floor: f64) -> Option<f64> {
    if p.len() < 2 || p.iter().any(|v| v.abs() <= floor) {
        return None;
    }
    let pts: Vec<(f64, f64)> = p
        .iter()
        .enumerate()
        .map(|(i, v)| ((first + i) as f64, -v.abs().log2()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|t| t.0).sum::<f64>() / n;
    let my = pts.iter().map(|t| t.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = pts.iter().map(|(a, _)| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

/// `Kir Phi(x) = int (Phi(x, y) - Phi(x, x)) |x - y|^{-n-2s} dy` for `0 < s < 1/2`.
pub fn frac_kir_regular(spec: &FracKernelSpec, phi: &TwoPointField, x: &[f64]) -> Result<FracResult> {
    if spec.regime() != Regime::Regular {
        return Err(KirError::WrongRegime {
            s: spec.s,
            expected: "regular (0 < s < 1/2); use the principal-value variant",
        });
    }
    frac_integral(spec, phi, x)
}

/// Principal value `lim_{eps -> 0} int_{|x-y| >= eps} (Phi(x, y) - Phi(x, x)) |x - y|^{-n-2s} dy`
/// for `1/2 <= s < 1`, extrapolated with the rate `2(1 - s)`.
pub fn frac_kir_pv(spec: &FracKernelSpec, phi: &TwoPointField, x: &[f64]) -> Result<FracResult> {
    if spec.regime() != Regime::PrincipalValue {
        return Err(KirError::WrongRegime {
            s: spec.s,
            expected: "principal-value (1/2 <= s < 1); use the regular variant",
        });
    }
    let r = frac_integral(spec, phi, x)?;
    // Cauchy differences must shrink once they are above the noise floor.
    let scale = r.psi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let floor = 1e-10 * scale;
    let n = r.cauchy_diffs.len();
    let from = n.saturating_sub(spec.fit_levels as usize).max(1);
    for m in from..n {
        let (a, b) = (r.cauchy_diffs[m - 1].abs(), r.cauchy_diffs[m].abs());
        if b > floor && b > a * (1.0 + 1e-6) {
            return Err(KirError::Convergence(format!(
                "Cauchy differences grow between eps = 2^-{m} and 2^-{}: {a:e} -> {b:e}",
                m + 1
            )));
        }
    }
    Ok(r)
}

/// Either regime, chosen from `s`.
pub fn frac_kir(spec: &FracKernelSpec, phi: &TwoPointField, x: &[f64]) -> Result<FracResult> {
    match spec.regime() {
        Regime::Regular => frac_kir_regular(spec, phi, x),
        Regime::PrincipalValue => frac_kir_pv(spec, phi, x),
    }
}

/// `omega_{n-1} (sup |grad_y Phi| / (1 - 2s) + sup |Phi| / s)`; infinite when a norm is not declared.
pub fn frac_bound(spec: &FracKernelSpec, phi: &TwoPointField) -> f64 {
    match (phi.sup_norm(), phi.y_gradient_sup()) {
        (Some(a), Some(b)) => frac_bound_from_norms(spec.dim, spec.s, a, b),
        _ => f64::INFINITY,
    }
}

/// The same bound from explicit norms. Only meaningful for `s < 1/2`; infinite otherwise.
pub fn frac_bound_from_norms(n: usize, s: f64, sup: f64, grad_sup: f64) -> f64 {
    if !(s > 0.0 && s < 0.5) {
        return f64::INFINITY;
    }
    if sup == 0.0 && grad_sup == 0.0 {
        return 0.0;
    }
    sphere_area(n) * (grad_sup / (1.0 - 2.0 * s) + sup / s)
}

/// `(Delta_y Phi)(x, x)`, from the declared y-Hessian or by central differences.
pub fn classical_kir(phi: &TwoPointField, x: &[f64]) -> Result<f64> {
    let h = match phi.y_hessian(x, x) {
        Some(h) => h,
        None => {
            let step = 1e-3 * x.iter().fold(1.0f64, |m, c| m.max(c.abs()));
            num_y_derivs(phi, x, 2, step)?
                .hessian()
                .unwrap_or_else(|| y_hessian_at(phi, x, x, step))
        }
    };
    let tr: f64 = (0..x.len()).map(|i| h[i][i]).sum();
    crate::error::finite(tr, || "Laplacian of Phi(x, .) at x".to_string())
}

/// Classical Laplacian `Delta f(x)` as the divergence of `f(y) - f(x)`.
pub fn classical_laplacian(f: &ScalarField, x: &[f64]) -> Result<f64> {
    classical_kir(&crate::field::grad0(f), x)
}

/// Resolution of the Hilbert-kernel quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PVHilbertSpec {
    /// Excluded half-width `eps > 0` for the truncated operator.
    pub eps: f64,
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Panels per octave.
    pub panels: usize,
    /// Tail tolerance deciding the far cut-off for decaying fields.
    pub tail_tol: f64,
    /// Hard cap on the far cut-off, as a power of two.
    pub max_octaves: u32,
}

impl PVHilbertSpec {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(KirError::invalid(format!("eps must be positive, got {eps}")));
        }
        Ok(PVHilbertSpec {
            eps,
            order: 12,
            panels: 4,
            tail_tol: 1e-11,
            max_octaves: 60,
        })
    }
}

/// `int_{t > lower} (f(x - t) - f(x + t)) / t dt` with a decay- or support-controlled tail.
fn odd_pair_integral(
    f: &ScalarField,
    x: f64,
    lower: f64,
    order: usize,
    panels: usize,
    tail_tol: f64,
    max_octaves: u32,
) -> Result<(f64, f64)> {
    let rule = GaussLegendre::new(order);
    let pair = |t: f64| (f.eval1(x - t) - f.eval1(x + t)) / t;
    let mut breaks = Vec::new();
    let end = if let Some(r) = f.support_radius() {
        // f(x -+ t) vanishes once t > |x| + r.
        breaks.extend([(r - x).abs(), (r + x).abs()]);
        (x.abs() + r).max(lower)
    } else if let Some(d) = f.decay() {
        if !(d.power > 0.0) {
            return Err(KirError::Convergence("decay power must be positive".into()));
        }
        // Tail beyond T > 2 max(|x|, 1) is at most 2 C 2^p T^{-p} / p.
        let mut t = (2.0 * x.abs().max(1.0)).max(lower);
        let cap = 2f64.powi(max_octaves as i32);
        while 2.0 * d.bound * 2f64.powf(d.power) * t.powf(-d.power) / d.power > tail_tol && t < cap {
            t *= 2.0;
        }
        t
    } else {
        return Err(KirError::Convergence(
            "the Hilbert integral needs f with a declared support or decay".into(),
        ));
    };
    let tail_bound = match (f.support_radius(), f.decay()) {
        (Some(_), _) => 0.0,
        (None, Some(d)) => 2.0 * d.bound * 2f64.powf(d.power) * end.powf(-d.power) / d.power,
        _ => f64::INFINITY,
    };
    let mut acc = NeumaierSum::new();
    if lower > 0.0 {
        // Octaves from `lower` upward.
        let mut a = lower;
        while a < end {
            let b = (2.0 * a).min(end);
            acc.add(split_integral(&rule, a, b, &breaks, panels, &mut |t| pair(t)));
            a = b;
        }
    } else {
        // (0, 1]: octaves down to 2^-40, the integrand is bounded near 0.
        let top = end.min(1.0);
        let mut b = top;
        for _ in 0..40 {
            let a = 0.5 * b;
            acc.add(split_integral(&rule, a, b, &breaks, panels, &mut |t| pair(t)));
            b = a;
        }
        acc.add(rule.integrate(0.0, b, pair));
        let mut a = top;
        while a < end {
            let b = (2.0 * a).min(end);
            acc.add(split_integral(&rule, a, b, &breaks, panels, &mut |t| pair(t)));
            a = b;
        }
    }
    let v = crate::error::finite(acc.value(), || format!("Hilbert integral at x = {x}"))?;
    Ok((v, tail_bound))
}

/// Hilbert transform `H f(x) = p.v. int f(y) / (x - y) dy = int_0^inf (f(x-t) - f(x+t)) / t dt`
/// (no `1/pi` factor).
pub fn hilbert_pv(f: &ScalarField, x: f64) -> Result<f64> {
    let spec = PVHilbertSpec::new(1.0)?;
    hilbert_pv_with(&spec, f, x).map(|r| r.0)
}

/// [`hilbert_pv`] with explicit resolution, returning `(value, tail bound)`.
pub fn hilbert_pv_with(spec: &PVHilbertSpec, f: &ScalarField, x: f64) -> Result<(f64, f64)> {
    odd_pair_integral(f, x, 0.0, spec.order, spec.panels, spec.tail_tol, spec.max_octaves)
}

/// `1 / h^eps(x)`: `x` for `|x| > eps`, `eps sign(x)` otherwise (0 at `x = 0`).
pub fn inverse_h_eps(eps: f64, x: f64) -> f64 {
    if x.abs() > eps {
        x
    } else if x == 0.0 {
        0.0
    } else {
        eps * x.signum()
    }
}

/// `Kir_eps Phi(x) = (1 / h^eps(x)) int_{|x - y| > eps} Phi(x, y) / (x - y) dy`.
pub fn hilbert_kir_eps(spec: &PVHilbertSpec, phi: &TwoPointField, x: f64) -> Result<f64> {
    let mult = inverse_h_eps(spec.eps, x);
    if mult == 0.0 {
        return Ok(0.0);
    }
    let section = phi.section(&[x]);
    let (v, _) = odd_pair_integral(
        &section,
        x,
        spec.eps,
        spec.order,
        spec.panels,
        spec.tail_tol,
        spec.max_octaves,
    )?;
    Ok(mult * v)
}

/// `Kir_eps Phi(x)` along `eps_m = eps_start 2^{-m}`, `m = 0..levels`.
pub fn hilbert_kir_eps_sequence(
    eps_start: f64,
    levels: usize,
    phi: &TwoPointField,
    x: f64,
) -> Result<Vec<(f64, f64)>> {
    (0..levels)
        .map(|m| {
            let eps = eps_start * 2f64.powi(-(m as i32));
            let spec = PVHilbertSpec::new(eps)?;
            Ok((eps, hilbert_kir_eps(&spec, phi, x)?))
        })
        .collect()
}

/// `lim_{eps -> 0} Kir_eps Phi(x) = x H_y Phi(x, x)`.
pub fn hilbert_kir_limit(phi: &TwoPointField, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(x * hilbert_pv(&phi.section(&[x]), x)?)
}

/// `Delta f(x) = x H f(x)`; constants are annihilated.
pub fn hilbert_laplacian(f: &ScalarField, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(x * hilbert_pv(f, x)?)
}
