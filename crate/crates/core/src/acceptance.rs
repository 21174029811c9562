//! The ten acceptance checks, runnable from tests and from `kirlab reproduce-all`.
//!
//! Every check compares an operator of this crate against an independent computation:
//! closed forms, hand sums, adaptive Simpson quadrature, or a brute-force pairing.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::continuum::{
    classical_kir, frac_bound, frac_kir_pv, frac_kir_regular, hilbert_kir_eps_sequence, hilbert_kir_limit,
    FracKernelSpec,
};
use crate::convergence::{
    estimate_limit, family_coupling, family_fd, family_frac, family_gaussian_area, family_poisson_cutoff,
    family_tail_dichotomy, TailDensity, Verdict,
};
use crate::division::{bump_family, check_division, tensor_bump, DEFAULT_SEED};
use crate::dyadic::{
    cs_constant, delta_s_apply, delta_s_quadrature, dyadic_frac_laplacian, dyadic_laplacian, dyadic_point,
    kernel_eigenvalue, spectral_with_constant, DyadicQuadrature, HaarExpansion, HaarExpansion2, HaarFunction,
};
use crate::error::{KirError, Result};
use crate::field::{grad0, Decay, Point, ScalarField, TwoPointField};
use crate::graph::{kirchhoff, laplacian, GraphSystem};
use crate::lattice::{fd_is_harmonic, fd_kirchhoff, fd_laplacian, frac_lattice_constant, frac_laplacian, FracSpec, LatticeSpec};
use crate::measure::{BoxDensity, CouplingWeights, NodeMeasure, ProductPairing};
use crate::metric::{net_frac_laplacian, net_frac_system, net_kirchhoff, net_laplacian, net_system, Metric, MetricMeasureNet, NetMatrix};

pub const CRITERIA: [&str; 10] = [
    "Haar eigenrelation",
    "finite-difference exactness",
    "lattice fractional constant",
    "regular fractional regime",
    "principal-value fractional regime",
    "classical identity",
    "Hilbert limit",
    "convergence of quotient families",
    "division contract",
    "conservation and maximum principles",
];

/// Knobs for the acceptance run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptanceOptions {
    pub seed: u64,
    /// Replaces `c_s` in the Haar eigenrelation by this value for every `s`.
    pub cs_override: Option<f64>,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions {
            seed: DEFAULT_SEED,
            cs_override: None,
        }
    }
}

impl AcceptanceOptions {
    fn cs(&self, s: f64) -> f64 {
        self.cs_override.unwrap_or_else(|| cs_constant(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

/// Runs criterion `id` (1-based). Errors count as failures.
pub fn run_criterion(id: usize, opts: &AcceptanceOptions) -> CriterionResult {
    let outcome = match id {
        1 => haar_eigenrelation(opts),
        2 => fd_exactness(),
        3 => lattice_constant(),
        4 => regular_regime(opts),
        5 => pv_regime(opts),
        6 => classical_identity(),
        7 => hilbert_limit(),
        8 => convergence_families(),
        9 => division_contract(opts),
        10 => conservation(opts),
        _ => Err(KirError::invalid(format!("no criterion {id}"))),
    };
    let name = CRITERIA.get(id.wrapping_sub(1)).copied().unwrap_or("unknown");
    match outcome {
        Ok((passed, detail)) => CriterionResult { id, name, passed, detail },
        Err(e) => CriterionResult {
            id,
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// All ten criteria, in order.
pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionResult> {
    (1..=CRITERIA.len()).into_par_iter().map(|id| run_criterion(id, opts)).collect()
}

type Outcome = Result<(bool, String)>;

fn rel(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

fn haar_eigenrelation(opts: &AcceptanceOptions) -> Outcome {
    let mut closed = 0.0f64;
    let mut quad = 0.0f64;
    let mut kernel = 0.0f64;
    for s in [0.1, 0.25, 0.4] {
        let c = opts.cs(s);
        let lam = kernel_eigenvalue(s);
        for j in -2..=4 {
            let h = HaarFunction::new(j, 1);
            let expansion = HaarExpansion::single(h);
            let field = h.to_field();
            let len = h.support_length();
            let left = h.support().left();
            for i in 0..16 {
                let x = left + (2 * i + 1) as f64 / 32.0 * len;
                let scale = len.powf(-2.0 * s) * h.eval(x);
                let a = delta_s_apply(s, &expansion, x)?;
                let (q, _) = delta_s_quadrature(s, &field, x, DyadicQuadrature::default())?;
                closed = closed.max(rel(a, c * scale));
                quad = quad.max(rel(q, c * scale));
                kernel = kernel.max(rel(a, lam * scale));
            }
        }
    }
    let h00 = HaarFunction::new(0, 0);
    let spot_phi = HaarExpansion2::new([(h00, h00, 1.0)])?;
    let spot = spectral_with_constant(0.25, &spot_phi, 0.25, opts.cs(0.25))?;
    let spot_ok = (spot - (2.0 + 2f64.sqrt())).abs() <= 5e-7;
    let passed = closed <= 1e-10 && quad <= 1e-6 && spot_ok;
    Ok((
        passed,
        format!(
            "closed-form rel err {closed:.2e} (tol 1e-10), quadrature {quad:.2e} (tol 1e-6), spot value {spot:.6}; \
             the kernel reproduces -(2^(2s+1)-1)/(2(2^(2s)-1)) to {kernel:.2e}"
        ),
    ))
}

fn fd_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut harmonic_dev = 0.0f64;
    for n in 1..=3 {
        let sq = ScalarField::new(|x| x.iter().map(|c| c * c).sum());
        let lin = ScalarField::new(|x| x.iter().enumerate().map(|(m, c)| (2 * m + 1) as f64 * c - 0.5).sum());
        for h in [1.0, 0.1, 0.01] {
            let spec = LatticeSpec::new(n, h, 3)?;
            let interior: Vec<Vec<i64>> = spec.indices().into_iter().filter(|k| k.iter().all(|c| c.abs() <= 2)).collect();
            for k in &interior {
                worst = worst.max(rel(fd_laplacian(&spec, &sq, k)?, 2.0 * n as f64));
            }
            let (_, dev) = fd_is_harmonic(&spec, &lin, &interior, 0.0)?;
            harmonic_dev = harmonic_dev.max(dev);
        }
    }
    Ok((
        worst <= 1e-12 && harmonic_dev <= 1e-12,
        format!("|x|^2 rel err {worst:.2e}, linear mean-value deviation {harmonic_dev:.2e}"),
    ))
}

fn lattice_constant() -> Outcome {
    let c = frac_lattice_constant(1, 1.0, 10_000)?;
    let target = PI * PI / 3.0;
    Ok((
        c.contains(target) && c.half_width <= 1e-4,
        format!("[{:.9}, {:.9}] contains pi^2/3 = {target:.9}, half-width {:.2e}", c.lower(), c.upper(), c.half_width),
    ))
}

/// `(1 - t^2)^4_+` and its first two derivatives.
fn bump4(t: f64) -> (f64, f64, f64) {
    let u = 1.0 - t * t;
    if u <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (u.powi(4), -8.0 * t * u.powi(3), -8.0 * u.powi(3) + 48.0 * t * t * u * u)
}

/// Largest `|d/dt (1 - t^2)^4|`, attained at `t^2 = 1/7`.
const BUMP4_SLOPE: f64 = 1.904_76;

/// A random smooth field `Phi(x, y) = a(x) b(y)` supported in a box, with
/// `a` a single bump and `b` a sum of three.
#[derive(Debug, Clone)]
pub struct RandomPhi {
    pub a: (f64, f64),
    pub b: Vec<(f64, f64, f64)>,
}

impl RandomPhi {
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        let a = (rng.gen_range(-0.5..0.5), rng.gen_range(0.8..1.6));
        let b = (0..3)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.4..1.2)))
            .collect();
        RandomPhi { a, b }
    }

    pub fn a(&self, x: f64) -> f64 {
        bump4((x - self.a.0) / self.a.1).0
    }

    /// `b`, `b'`, `b''`.
    pub fn b(&self, y: f64) -> (f64, f64, f64) {
        let mut out = (0.0, 0.0, 0.0);
        for &(c, m, r) in &self.b {
            let (v, d, dd) = bump4((y - m) / r);
            out.0 += c * v;
            out.1 += c * d / r;
            out.2 += c * dd / (r * r);
        }
        out
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a(x) * self.b(y).0
    }

    pub fn y_support(&self) -> f64 {
        self.b.iter().fold(0.0f64, |m, &(_, c, r)| m.max(c.abs() + r))
    }

    pub fn field(&self) -> TwoPointField {
        let (p1, p2, p3) = (self.clone(), self.clone(), self.clone());
        let sup: f64 = self.b.iter().map(|t| t.0.abs()).sum();
        let grad: f64 = self.b.iter().map(|t| t.0.abs() * BUMP4_SLOPE / t.2).sum();
        TwoPointField::new(move |x, y| p1.eval(x[0], y[0]))
            .with_y_gradient_fn(move |x, y| vec![p2.a(x[0]) * p2.b(y[0]).1])
            .with_y_hessian_fn(move |x, y| vec![vec![p3.a(x[0]) * p3.b(y[0]).2]])
            .with_y_support(self.y_support())
            .with_sup_norm(sup)
            .with_y_gradient_sup(grad)
    }
}

/// Tanh-sinh rule on `[a, b]` with step `2^-6`; nodes closer than `skip` to `a` are dropped.
fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64, skip: f64) -> f64 {
    let half = 0.5 * (b - a);
    let step = 1.0 / 64.0;
    let mut total = 0.0;
    for k in -230i32..=230 {
        let tau = k as f64 * step;
        let u = 0.5 * PI * tau.sinh();
        let w = 0.5 * PI * tau.cosh() / (u.cosh() * u.cosh());
        // Distances to the ends computed without cancellation.
        let gap = half * 2.0 / (1.0 + (2.0 * u).exp());
        let t = if tau < 0.0 { a + gap } else { b - half * 2.0 / (1.0 + (-2.0 * u).exp()) };
        if !(w > 0.0) || t - a < skip || t <= a || t >= b {
            continue;
        }
        total += w * f(t);
    }
    total * half * step
}

/// `int (Phi(x, y) - Phi(x, x)) |x - y|^{-1-2s} dy` on `R`, as a principal value when `s >= 1/2`.
///
/// Folds `y = x +- t`, subtracts the second-order Taylor term on `t < 1` and integrates each
/// smooth piece with a tanh-sinh rule; `breaks` lists the `y` where `Phi(x, .)` is not smooth.
/// The constant tail beyond the support is exact, and `t < 1e-5` is dropped (its share is
/// `O(t^{4-2s})`).
pub fn frac_oracle_1d(phi: &dyn Fn(f64) -> f64, phi_yy: f64, x: f64, s: f64, support: f64, breaks: &[f64]) -> f64 {
    let p0 = phi(x);
    let g = |t: f64| phi(x + t) + phi(x - t) - 2.0 * p0;
    let near = |t: f64| (g(t) - t * t * phi_yy) * t.powf(-1.0 - 2.0 * s);
    let far = |t: f64| g(t) * t.powf(-1.0 - 2.0 * s);
    let reach = support + x.abs() + 1.0;
    let mut cuts = vec![0.0, 1.0, reach];
    cuts.extend(breaks.iter().map(|b| (b - x).abs()).filter(|t| *t > 0.0 && *t < reach));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = phi_yy / (2.0 - 2.0 * s);
    for w in cuts.windows(2) {
        total += if w[1] <= 1.0 {
            tanh_sinh(&near, w[0], w[1], if w[0] == 0.0 { 1e-5 } else { 0.0 })
        } else {
            tanh_sinh(&far, w[0], w[1], 0.0)
        };
    }
    total - 2.0 * p0 * reach.powf(-2.0 * s) / (2.0 * s)
}

fn frac_oracle_for(p: &RandomPhi, x: f64, s: f64) -> f64 {
    let ax = p.a(x);
    let section = |y: f64| ax * p.b(y).0;
    let breaks: Vec<f64> = p.b.iter().flat_map(|&(_, m, r)| [m - r, m + r]).collect();
    frac_oracle_1d(&section, ax * p.b(x).2, x, s, p.y_support(), &breaks)
}

fn sample_xs(p: &RandomPhi, rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| p.a.0 + p.a.1 * rng.gen_range(-0.8..0.8)).collect()
}

/// Relative error against the oracle, measured on `max(|oracle|, 1e-3 |field scale|)` so
/// sample points where the value crosses zero do not dominate.
fn rel_scaled(got: f64, want: f64, scale: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-3 * scale).max(f64::MIN_POSITIVE)
}

fn regular_regime(opts: &AcceptanceOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 4);
    let phis: Vec<RandomPhi> = (0..10).map(|_| RandomPhi::sample(&mut rng)).collect();
    let xs: Vec<Vec<f64>> = phis.iter().map(|p| sample_xs(p, &mut rng, 4)).collect();
    let mut worst_ratio = 0.0f64;
    let mut worst_rel = 0.0f64;
    for s in [0.1, 0.25, 0.4] {
        let spec = FracKernelSpec::new(1, s)?;
        for (p, xs) in phis.iter().zip(&xs) {
            let field = p.field();
            let bound = frac_bound(&spec, &field);
            for &x in xs {
                let v = frac_kir_regular(&spec, &field, &[x])?.value;
                let o = frac_oracle_for(p, x, s);
                worst_ratio = worst_ratio.max(v.abs() / bound);
                worst_rel = worst_rel.max(rel_scaled(v, o, bound));
            }
        }
    }
    Ok((
        worst_ratio <= 1.0 && worst_rel <= 1e-5,
        format!("max |Kir| / bound {worst_ratio:.3}, max rel err vs oracle {worst_rel:.2e} (tol 1e-5)"),
    ))
}

fn pv_regime(opts: &AcceptanceOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 5);
    let phis: Vec<RandomPhi> = (0..3).map(|_| RandomPhi::sample(&mut rng)).collect();
    // The rate is read off where the second y-derivative on the diagonal is not small.
    let xs: Vec<Vec<f64>> = phis
        .iter()
        .map(|p| {
            let mut out = Vec::new();
            while out.len() < 3 {
                let x = sample_xs(p, &mut rng, 1)[0];
                if (p.a(x) * p.b(x).2).abs() > 0.05 {
                    out.push(x);
                }
            }
            out
        })
        .collect();
    let mut worst_rate = 0.0f64;
    let mut worst_rel = 0.0f64;
    let mut missing = 0usize;
    for s in [0.5, 0.6, 0.75, 0.9] {
        let spec = FracKernelSpec::new(1, s)?;
        for (p, xs) in phis.iter().zip(&xs) {
            let field = p.field();
            let scale = frac_bound_scale(p);
            for &x in xs {
                let r = frac_kir_pv(&spec, &field, &[x])?;
                match r.fitted_rate {
                    Some(rate) => worst_rate = worst_rate.max((rate - 2.0 * (1.0 - s)).abs()),
                    None => missing += 1,
                }
                let o = frac_oracle_for(p, x, s);
                worst_rel = worst_rel.max(rel_scaled(r.value, o, scale));
            }
        }
    }
    Ok((
        worst_rate <= 0.15 && missing == 0 && worst_rel <= 1e-4,
        format!(
            "max |rate - 2(1-s)| {worst_rate:.3} (tol 0.15, {missing} unfitted), max rel err vs oracle {worst_rel:.2e} (tol 1e-4)"
        ),
    ))
}

fn frac_bound_scale(p: &RandomPhi) -> f64 {
    p.b.iter().map(|t| t.0.abs() * (1.0 + 1.0 / (t.2 * t.2))).sum()
}

fn classical_identity() -> Outcome {
    type Case = (&'static str, fn(&[f64]) -> f64, fn(&[f64]) -> f64, fn(&[f64]) -> Vec<Vec<f64>>);
    fn sq(x: &[f64]) -> f64 {
        x[0] * x[0] + x[1] * x[1]
    }
    fn sq_lap(_: &[f64]) -> f64 {
        4.0
    }
    fn sq_hess(_: &[f64]) -> Vec<Vec<f64>> {
        vec![vec![2.0, 0.0], vec![0.0, 2.0]]
    }
    fn cubic(x: &[f64]) -> f64 {
        x[0].powi(3) + x[1] * x[1]
    }
    fn cubic_lap(x: &[f64]) -> f64 {
        6.0 * x[0] + 2.0
    }
    fn cubic_hess(x: &[f64]) -> Vec<Vec<f64>> {
        vec![vec![6.0 * x[0], 0.0], vec![0.0, 2.0]]
    }
    fn gauss(x: &[f64]) -> f64 {
        (-sq(x)).exp()
    }
    fn gauss_lap(x: &[f64]) -> f64 {
        (4.0 * sq(x) - 4.0) * gauss(x)
    }
    fn gauss_hess(x: &[f64]) -> Vec<Vec<f64>> {
        let e = gauss(x);
        vec![
            vec![(4.0 * x[0] * x[0] - 2.0) * e, 4.0 * x[0] * x[1] * e],
            vec![4.0 * x[0] * x[1] * e, (4.0 * x[1] * x[1] - 2.0) * e],
        ]
    }
    let cases: [Case; 3] = [
        ("|x|^2", sq, sq_lap, sq_hess),
        ("x1^3 + x2^2", cubic, cubic_lap, cubic_hess),
        ("gaussian bump", gauss, gauss_lap, gauss_hess),
    ];
    let mut analytic = 0.0f64;
    let mut numeric = 0.0f64;
    for (_, f, lap, hess) in cases {
        let with_hess = ScalarField::new(f).with_hessian_fn(hess);
        let plain = ScalarField::new(f);
        for i in 0..10 {
            let t = i as f64 * 0.61 + 0.2;
            let x = [1.3 * t.cos() * (0.3 + 0.1 * i as f64), 1.1 * t.sin()];
            analytic = analytic.max((classical_kir(&grad0(&with_hess), &x)? - lap(&x)).abs());
            numeric = numeric.max((classical_kir(&grad0(&plain), &x)? - lap(&x)).abs());
        }
    }
    Ok((
        analytic <= 1e-6 && numeric <= 1e-3,
        format!("analytic Hessians err {analytic:.2e} (tol 1e-6), numeric {numeric:.2e} (tol 1e-3)"),
    ))
}

fn hilbert_limit() -> Outcome {
    let phi = TwoPointField::from_1d(|x, y| (-x * x).exp() / (1.0 + y * y)).with_y_decay(Decay::new(0.0, 1.0, 2.0));
    let mut limit_err = 0.0f64;
    let mut seq_err = 0.0f64;
    let mut monotone = true;
    for x in [0.5f64, 1.0, 2.0] {
        let want = x * x * (-x * x).exp() * PI / (1.0 + x * x);
        let got = hilbert_kir_limit(&phi, x)?;
        limit_err = limit_err.max((got - want).abs());
        let seq = hilbert_kir_eps_sequence(0.25, 14, &phi, x)?;
        let errs: Vec<f64> = seq.iter().map(|(_, v)| (v - want).abs()).collect();
        monotone &= errs.windows(2).skip(2).all(|w| w[1] <= w[0] + 1e-12);
        seq_err = seq_err.max(*errs.last().unwrap_or(&f64::INFINITY));
    }
    Ok((
        limit_err <= 1e-4 && seq_err <= 1e-4 && monotone,
        format!("limit err {limit_err:.2e}, last eps-sequence err {seq_err:.2e}, monotone {monotone}"),
    ))
}

fn convergence_families() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let fd = estimate_limit(&family_fd(), &TwoPointField::from_1d(|x, y| (y - x) * (y - x)), &[0.375], 0.5, 8)?;
    let fd_ok = (fd.value - 2.0).abs() <= 1e-3 && fd.order >= 1.9;
    ok &= fd_ok;
    notes.push(format!("fd {:.6} order {}", fd.value, fd.order));

    let bump = |t: f64| bump4(t).0;
    let phi = TwoPointField::from_1d(move |x, y| bump(x) * (bump(y) - bump(x)));
    let frac = family_frac(0.5, Some(1.0))?;
    let r = estimate_limit(&frac, &phi, &[0.25], 0.25, 9)?;
    let want = frac.claimed_limit(&phi, &[0.25]).unwrap_or(Ok(f64::NAN))?;
    let frac_ok = (r.value - want).abs() <= 0.02 * want.abs();
    ok &= frac_ok;
    notes.push(format!("frac {:.5} vs {:.5}", r.value, want));

    let one = TwoPointField::from_1d(|_, _| 1.0);
    let r = estimate_limit(&family_poisson_cutoff(), &one, &[1.0], 0.5, 10)?;
    ok &= (r.value - 2.0 * PI).abs() <= 1e-3;
    notes.push(format!("poisson {:.6}", r.value));

    let coupling = family_coupling(|h, x: f64| x.powf(1.0 + h), None);
    let r = estimate_limit(&coupling, &TwoPointField::from_1d(|x, y| x * (y - x)), &[(-1.0f64).exp()], 0.25, 12)?;
    ok &= (r.value + (-2.0f64).exp()).abs() <= 1e-4;
    notes.push(format!("coupling {:.6}", r.value));

    let section = TwoPointField::from_1d(|x, y| (1.0 + x * x) * (1.0 - y * y).max(0.0).powi(2)).with_y_support(1.0);
    let area = family_gaussian_area();
    let off = estimate_limit(&area, &section, &[0.5], 1.0, 6)?.verdict;
    let at0 = estimate_limit(&area, &section, &[0.0], 1.0, 6)?.verdict;
    let heavy = estimate_limit(&family_tail_dichotomy(TailDensity::cauchy()), &section, &[0.5], 1.0, 6)?.verdict;
    let compact = estimate_limit(&family_tail_dichotomy(TailDensity::epanechnikov()), &section, &[0.5], 1.0, 6)?.verdict;
    ok &= off == Verdict::Diverged
        && heavy == Verdict::Diverged
        && at0 == Verdict::Converged
        && compact == Verdict::Converged;
    notes.push(format!("area(x=0.5) {off}, area(x=0) {at0}, heavy {heavy}, compact {compact}"));
    Ok((ok, notes.join("; ")))
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new((0..dim).map(|_| rng.gen_range(0.0..2.0)).collect()))
        .collect()
}

fn random_phi(rng: &mut ChaCha8Rng) -> TwoPointField {
    let (a, b, c) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0));
    TwoPointField::new(move |x, y| (a * x.iter().sum::<f64>() + b * y.iter().sum::<f64>()).sin() + c)
}

fn random_system(rng: &mut ChaCha8Rng, n: usize, symmetric: bool) -> Result<GraphSystem> {
    let nodes = random_points(rng, n, 2);
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let mut entries = Vec::new();
    for k in 0..n {
        for j in 0..n {
            if j == k || (symmetric && j < k) {
                continue;
            }
            if rng.gen_bool(0.6) {
                let w = rng.gen_range(0.1..1.0);
                entries.push((k, j, w));
                if symmetric {
                    entries.push((j, k, w));
                }
            }
        }
    }
    GraphSystem::new(NodeMeasure::new(nodes, weights)?, CouplingWeights::new(entries)?)
}

fn lattice_system(spec: &LatticeSpec) -> Result<(GraphSystem, Vec<Vec<i64>>)> {
    let idx = spec.indices();
    let pos = |k: &[i64]| idx.iter().position(|i| i == k);
    let inner: Vec<Vec<i64>> = idx.iter().filter(|k| k.iter().all(|c| c.abs() < spec.window())).cloned().collect();
    let n = spec.dim();
    let w = spec.h().powi(n as i32 - 2);
    let mut entries = Vec::new();
    for k in &inner {
        let a = pos(k).unwrap_or(0);
        for m in 0..n {
            for d in [-1, 1] {
                let mut j = k.clone();
                j[m] += d;
                if let Some(b) = pos(&j) {
                    entries.push((a, b, w));
                }
            }
        }
    }
    let nodes: Vec<Point> = idx.iter().map(|k| Point::new(spec.point(k))).collect();
    let mass = spec.h().powi(n as i32);
    let sys = GraphSystem::new(NodeMeasure::new(nodes, vec![mass; idx.len()])?, CouplingWeights::new(entries)?)?;
    Ok((sys, inner))
}

fn dyadic_system(j: i32, blocks: u64) -> Result<GraphSystem> {
    let n = 4 * blocks;
    let nodes: Vec<Point> = (0..n).map(|i| Point::scalar(dyadic_point(j, i))).collect();
    let mut entries = Vec::new();
    for k in 0..n {
        let base = k - k % 4;
        for i in base..base + 4 {
            if i != k {
                entries.push((k as usize, i as usize, 1.0));
            }
        }
    }
    GraphSystem::new(NodeMeasure::uniform(nodes)?, CouplingWeights::new(entries)?)
}

fn random_net(rng: &mut ChaCha8Rng, n: usize) -> Result<MetricMeasureNet> {
    let points = random_points(rng, n, 2);
    let masses = (0..n).map(|_| rng.gen_range(0.2..1.5)).collect();
    MetricMeasureNet::new(points, masses, Metric::Euclidean, 0.5, 0, 1.2)
}

/// Symmetric positive `H` with random entries.
fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> NetMatrix {
    let mut m = vec![vec![0.0; n]; n];
    for k in 0..n {
        for i in k..n {
            let v = rng.gen_range(0.1..2.0);
            m[k][i] = v;
            m[i][k] = v;
        }
    }
    NetMatrix(m)
}

fn division_contract(opts: &AcceptanceOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 9);
    let mut worst = [0.0f64; 4];
    let mut all_pass = true;
    let mut check = |slot: usize, sys: &GraphSystem, values: Vec<f64>, phi: &TwoPointField| -> Result<()> {
        let nodes = sys.measure().nodes();
        let psi = ScalarField::from_node_values(nodes, &values);
        let tests = bump_family(nodes, 0.6, opts.seed);
        let r = check_division(sys.measure(), sys, &psi, phi, &tests)?;
        all_pass &= r.passes(1e-12);
        worst[slot] = worst[slot].max(r.max_relative);
        Ok(())
    };
    for _ in 0..5 {
        // Weighted graphs.
        let sys = random_system(&mut rng, 7, false)?;
        let phi = random_phi(&mut rng);
        let v = kirchhoff(&sys, &phi)?;
        check(0, &sys, v, &phi)?;

        // Lattice finite differences.
        let spec = LatticeSpec::new(2, rng.gen_range(0.2..1.0), 3)?;
        let (sys, inner) = lattice_system(&spec)?;
        let phi = random_phi(&mut rng);
        let mut v = vec![0.0; sys.len()];
        for (i, k) in spec.indices().iter().enumerate() {
            if inner.contains(k) {
                v[i] = fd_kirchhoff(&spec, &phi, k)?;
            }
        }
        check(1, &sys, v, &phi)?;

        // Dyadic blocks.
        let j = rng.gen_range(0..4);
        let sys = dyadic_system(j, 3)?;
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.5..3.0));
        let f = ScalarField::from_1d(move |x| (b * x).sin() + a * x);
        let v = (0..sys.len() as u64).map(|k| dyadic_laplacian(j, &f, k)).collect::<Result<Vec<_>>>()?;
        check(2, &sys, v, &grad0(&f))?;

        // Metric measure nets.
        let net = random_net(&mut rng, 7)?;
        let h = random_matrix(&mut rng, 7);
        let phi = random_phi(&mut rng);
        let v = (0..net.len()).map(|k| net_kirchhoff(&net, &h, &phi, k)).collect::<Result<Vec<_>>>()?;
        check(3, &net_system(&net, &h)?, v, &phi)?;
    }

    // No solution: T = delta_0, S = dx dy on the unit square, Phi = 1.
    let t = NodeMeasure::uniform(vec![Point::scalar(0.0)])?;
    let square = ProductPairing {
        first: BoxDensity::lebesgue(vec![0.0], vec![1.0])?,
        second: BoxDensity::lebesgue(vec![0.0], vec![1.0])?,
    };
    let test = tensor_bump(&[0.5], 0.4);
    let int_test = tanh_sinh(&|x| test.eval1(x), 0.1, 0.9, 0.0);
    let one = TwoPointField::from_1d(|_, _| 1.0);
    let mut no_solution = true;
    for psi in [ScalarField::constant(0.0), ScalarField::constant(3.0), ScalarField::from_1d(|x| 1.0 - 10.0 * x)] {
        let r = check_division(&t, &square, &psi, &one, &[test.clone()])?;
        no_solution &= (r.max_residual - int_test).abs() <= 1e-6 * int_test && r.max_residual > 0.0;
    }

    // Non-uniqueness: T = delta_0, S = delta_0 x delta_0, Phi = 1; psi(0) = 1 is all that matters.
    let point = ProductPairing {
        first: t.clone(),
        second: t.clone(),
    };
    let tests = bump_family(t.nodes(), 0.5, opts.seed);
    let a = check_division(&t, &point, &ScalarField::constant(1.0), &one, &tests)?;
    let b = check_division(&t, &point, &ScalarField::from_1d(|x| 1.0 + x + x * x), &one, &tests)?;
    let non_unique = a.max_residual == 0.0 && b.max_residual == 0.0;

    Ok((
        all_pass && no_solution && non_unique,
        format!(
            "max rel residual graph {:.1e}, lattice {:.1e}, dyadic {:.1e}, metric {:.1e}; \
             no-solution residual = int phi {no_solution}; two valid psi {non_unique}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn flux(weights: &[f64], lap: &[f64]) -> f64 {
    let total: f64 = weights.iter().zip(lap).map(|(a, l)| a * l).sum();
    let scale: f64 = weights.iter().zip(lap).map(|(a, l)| (a * l).abs()).sum();
    if scale == 0.0 {
        0.0
    } else {
        total.abs() / scale
    }
}

/// Random node values with a strict maximum planted at one of `allowed`.
fn planted(rng: &mut ChaCha8Rng, n: usize, allowed: &[usize]) -> (Vec<f64>, usize) {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let k = allowed[rng.gen_range(0..allowed.len())];
    v[k] = 1.0 + rng.gen_range(1e-9..0.5);
    (v, k)
}

fn conservation(opts: &AcceptanceOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 10);
    let mut worst_flux = 0.0f64;
    let mut violations: Vec<&str> = Vec::new();

    let sys = random_system(&mut rng, 9, true)?;
    let net = random_net(&mut rng, 8)?;
    let h = NetMatrix::constant(8, 0.7);
    let dsys = dyadic_system(1, 3)?;
    let lat = LatticeSpec::new(2, 0.5, 3)?;
    let lat_inner: Vec<usize> = lat
        .indices()
        .iter()
        .enumerate()
        .filter(|(_, k)| k.iter().all(|c| c.abs() < 3))
        .map(|(i, _)| i)
        .collect();
    let lat_nodes: Vec<Point> = lat.indices().iter().map(|k| Point::new(lat.point(k))).collect();
    let line = LatticeSpec::new(1, 0.25, 40)?;
    let line_frac = FracSpec::new(0.8, 40)?;
    let line_nodes: Vec<Point> = line.indices().iter().map(|k| Point::new(line.point(k))).collect();
    let line_inner: Vec<usize> = (10..71).collect();
    let dy_nodes: Vec<Point> = (0..16).map(|i| Point::scalar(dyadic_point(1, i))).collect();
    let all = |n: usize| (0..n).collect::<Vec<_>>();

    for _ in 0..100 {
        // Graph.
        let (v, k) = planted(&mut rng, sys.len(), &all(sys.len()));
        let f = ScalarField::from_node_values(sys.measure().nodes(), &v);
        let lap = laplacian(&sys, &f)?;
        worst_flux = worst_flux.max(flux(sys.measure().weights(), &lap));
        if lap[k] > 0.0 {
            violations.push("graph");
        }

        // Dyadic blocks and the dyadic fractional Laplacian.
        let (v, k) = planted(&mut rng, 16, &all(16));
        let f = ScalarField::from_node_values(&dy_nodes, &v);
        let lap = (0..12u64).map(|i| dyadic_laplacian(1, &f, i)).collect::<Result<Vec<_>>>()?;
        worst_flux = worst_flux.max(flux(dsys.measure().weights(), &lap));
        if k < 12 && lap[k] > 0.0 {
            violations.push("dyadic");
        }
        if dyadic_frac_laplacian(1, 0.7, &f, k as u64, 15)?.value > 0.0 {
            violations.push("dyadic fractional");
        }

        // Lattice finite differences and the discrete fractional Laplacian.
        let (v, k) = planted(&mut rng, lat_nodes.len(), &lat_inner);
        let f = ScalarField::from_node_values(&lat_nodes, &v);
        if fd_laplacian(&lat, &f, &lat.indices()[k])? > 0.0 {
            violations.push("lattice");
        }
        let (v, k) = planted(&mut rng, line_nodes.len(), &line_inner);
        let f = ScalarField::from_node_values(&line_nodes, &v);
        if frac_laplacian(&line, &line_frac, &f, &line.indices()[k])?.value > 0.0 {
            violations.push("lattice fractional");
        }

        // Metric nets.
        let (v, k) = planted(&mut rng, net.len(), &all(net.len()));
        let f = ScalarField::from_node_values(net.points(), &v);
        let lap = (0..net.len()).map(|i| net_laplacian(&net, &h, &f, i)).collect::<Result<Vec<_>>>()?;
        worst_flux = worst_flux.max(flux(net.masses(), &lap));
        if lap[k] > 0.0 {
            violations.push("metric");
        }
        let frac = (0..net.len()).map(|i| net_frac_laplacian(&net, 0.6, &f, i)).collect::<Result<Vec<_>>>()?;
        worst_flux = worst_flux.max(flux(net.masses(), &frac));
        if frac[k] > 0.0 {
            violations.push("metric fractional");
        }
    }
    // The fractional net system is symmetric too; its flux is covered above.
    let _ = net_frac_system(&net, 0.6)?;
    violations.sort_unstable();
    violations.dedup();
    Ok((
        worst_flux <= 1e-12 && violations.is_empty(),
        format!(
            "max relative flux {worst_flux:.1e} (tol 1e-12); maximum-principle violations: {}",
            if violations.is_empty() { "none".to_string() } else { violations.join(", ") }
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_matches_closed_form() {
        // Phi(x, y) = e^{-(y - x)^2}, x = 0: int (e^{-t^2} - 1) |t|^{-1-2s} dt = Gamma(-s).
        for s in [0.25, 0.75] {
            let got = frac_oracle_1d(&|y: f64| (-y * y).exp(), -2.0, 0.0, s, 12.0, &[]);
            let gamma_minus_s = if s == 0.25 { -4.901_666_809_860_71 } else { -4.834_146_544_295_878 };
            // The cut at |y| = 12 + 1 leaves e^{-169}, far below the tolerance.
            assert!((got - gamma_minus_s).abs() < 1e-8, "s = {s}: {got}");
        }
    }

    #[test]
    fn display_line() {
        let r = CriterionResult {
            id: 3,
            name: CRITERIA[2],
            passed: true,
            detail: "ok".into(),
        };
        assert_eq!(r.to_string(), "[PASS]  3 lattice fractional constant: ok");
    }

    #[test]
    fn unknown_criterion_fails() {
        assert!(!run_criterion(11, &AcceptanceOptions::default()).passed);
    }
}
