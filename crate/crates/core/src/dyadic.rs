//! Dyadic intervals on `R^+`, the dyadic metric `rho`, discrete dyadic Laplacians, the Haar
//! system and the dyadic fractional Laplacian `Delta_s`.
//!
//! Every finite `f64` is a dyadic rational, so `rho` and all annulus memberships below are
//! computed exactly from the binary expansions of the inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{KirError, Result};
use crate::field::{ScalarField, TwoPointField};
use crate::quad::{GaussLegendre, NeumaierSum};

/// Largest coordinate accepted by [`rho`]; integer parts are handled as `u128`.
const MAX_COORD: f64 = 1.0e30;

/// `I^j_k = [k 2^{-j}, (k+1) 2^{-j})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub j: i32,
    pub k: u64,
}

impl DyadicInterval {
    pub fn new(j: i32, k: u64) -> Self {
        DyadicInterval { j, k }
    }

    pub fn length(&self) -> f64 {
        pow2(-self.j)
    }

    pub fn left(&self) -> f64 {
        self.k as f64 * pow2(-self.j)
    }

    pub fn right(&self) -> f64 {
        (self.k + 1) as f64 * pow2(-self.j)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.left() && x < self.right()
    }

    /// The interval of scale `j` containing `x >= 0`.
    pub fn containing(j: i32, x: f64) -> Self {
        DyadicInterval {
            j,
            k: (x * pow2(j)).floor() as u64,
        }
    }
}

/// `2^e` for integer `e`, exact over the normal range.
#[inline]
pub(crate) fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

fn check_coord(x: f64, name: &str) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(KirError::invalid(format!("{name} = {x} must be a finite nonnegative number")));
    }
    if x > MAX_COORD {
        return Err(KirError::invalid(format!("{name} = {x} exceeds the supported range")));
    }
    Ok(())
}

/// Dyadic distance: length of the smallest dyadic interval containing both points.
pub fn rho(x: f64, y: f64) -> Result<f64> {
    check_coord(x, "x")?;
    check_coord(y, "y")?;
    Ok(rho_unchecked(x, y))
}

pub(crate) fn rho_unchecked(x: f64, y: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    let (ix, iy) = (x.floor(), y.floor());
    if ix != iy {
        let d = (ix as u128) ^ (iy as u128);
        let bits = 128 - d.leading_zeros();
        return pow2(bits as i32);
    }
    // Same integer part: scan binary digits of the fractional parts.
    let (mut fx, mut fy) = (x - ix, y - iy);
    let mut j = 0;
    loop {
        j += 1;
        fx *= 2.0;
        fy *= 2.0;
        let (bx, by) = (fx >= 1.0, fy >= 1.0);
        if bx != by {
            return pow2(-(j - 1));
        }
        if bx {
            fx -= 1.0;
            fy -= 1.0;
        }
    }
}

/// Lebesgue measure of the open ball `B_rho(x, r) = {y : rho(x, y) < r}`.
///
/// The ball is the dyadic interval `I^m(x)` for the smallest `m` with `2^{-m} < r`.
pub fn ball_measure(x: f64, r: f64) -> Result<f64> {
    check_coord(x, "x")?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(KirError::invalid(format!("radius must be positive, got {r}")));
    }
    let mut m = -(r.log2().floor() as i32) - 1;
    while pow2(-m) >= r {
        m += 1;
    }
    while pow2(-(m - 1)) < r {
        m -= 1;
    }
    Ok(pow2(-m))
}

/// Sample points `x^j_i = i 2^{-j}`.
pub fn dyadic_point(j: i32, i: u64) -> f64 {
    i as f64 * pow2(-j)
}

/// Discrete dyadic Laplacian at `x^j_k`: with `k = 4l + m`, the sum of `f` over the other
/// three points of the block `{4l, 4l+1, 4l+2, 4l+3}` minus `3 f(x^j_k)`.
pub fn dyadic_laplacian(j: i32, f: &ScalarField, k: u64) -> Result<f64> {
    let base = k - k % 4;
    let fk = f.eval1(dyadic_point(j, k));
    let mut s = NeumaierSum::new();
    for i in base..base + 4 {
        if i != k {
            s.add(f.eval1(dyadic_point(j, i)) - fk);
        }
    }
    crate::error::finite(s.value(), || format!("dyadic Laplacian at scale {j}, index {k}"))
}

/// Total weight `sum_{i != k} 2^{-j} rho(x_k, x_i)^{-1-alpha} = 2^{j alpha} / (2 (2^alpha - 1))`.
pub fn dyadic_frac_total_weight(j: i32, alpha: f64) -> f64 {
    pow2(j).powf(alpha) / (2.0 * (2f64.powf(alpha) - 1.0))
}

/// A value with a truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounded {
    pub value: f64,
    pub bound: f64,
}

/// Dyadic fractional Laplacian `sum_{i != k} (f(x_i) - f(x_k)) 2^{-j} / rho(x_k, x_i)^{1+alpha}`
/// over `0 <= i <= window`.
///
/// If the declared support of `f` lies in `[0, x^j_window]`, the omitted terms equal
/// `-f(x_k)` times the remaining weight, which is known in closed form; otherwise the
/// bound is `2 sup|f|` times that weight.
pub fn dyadic_frac_laplacian(
    j: i32,
    alpha: f64,
    f: &ScalarField,
    k: u64,
    window: u64,
) -> Result<Bounded> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(KirError::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if window < 1 {
        return Err(KirError::invalid("window must be at least 1"));
    }
    if k > window {
        return Err(KirError::invalid(format!("index {k} lies beyond the window {window}")));
    }
    let covered = f
        .support_radius()
        .is_some_and(|r| r < dyadic_point(j, window + 1));
    let sup = f.sup_bound();
    if !covered && sup.is_none() {
        return Err(KirError::invalid(
            "dyadic fractional Laplacian needs a bounded f: declare a support radius or a sup bound",
        ));
    }
    let fk = f.eval1(dyadic_point(j, k));
    let mut s = NeumaierSum::new();
    let mut w_used = NeumaierSum::new();
    for i in 0..=window {
        if i == k {
            continue;
        }
        let w = frac_weight(j, alpha, k, i);
        w_used.add(w);
        s.add((f.eval1(dyadic_point(j, i)) - fk) * w);
    }
    let tail = (dyadic_frac_total_weight(j, alpha) - w_used.value()).max(0.0);
    let out = if covered {
        Bounded {
            value: s.value() - fk * tail,
            bound: 0.0,
        }
    } else {
        Bounded {
            value: s.value(),
            bound: 2.0 * sup.unwrap_or(0.0) * tail,
        }
    };
    crate::error::finite(out.value, || format!("dyadic fractional Laplacian at index {k}"))?;
    Ok(out)
}

/// `2^{-j} rho(x^j_k, x^j_i)^{-1-alpha}`, with `rho = 2^{bitlen(k xor i) - j}`.
fn frac_weight(j: i32, alpha: f64, k: u64, i: u64) -> f64 {
    let bits = 64 - (k ^ i).leading_zeros() as i32;
    pow2(-j) * pow2(bits - j).powf(-1.0 - alpha)
}

/// Haar function `h^j_k(x) = 2^{j/2} h^0_0(2^j x - k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HaarFunction {
    pub j: i32,
    pub k: u64,
}

impl HaarFunction {
    pub fn new(j: i32, k: u64) -> Self {
        HaarFunction { j, k }
    }

    pub fn support(&self) -> DyadicInterval {
        DyadicInterval::new(self.j, self.k)
    }

    pub fn support_length(&self) -> f64 {
        pow2(-self.j)
    }

    pub fn amplitude(&self) -> f64 {
        pow2(self.j).sqrt()
    }

    pub fn eval(&self, x: f64) -> f64 {
        haar_eval(*self, x)
    }

    /// `int_{[a, b)} h`.
    pub fn integral_over(&self, a: f64, b: f64) -> f64 {
        let left = self.support().left();
        let len = self.support_length();
        let mid = left + 0.5 * len;
        let right = left + len;
        let overlap = |lo: f64, hi: f64| (b.min(hi) - a.max(lo)).max(0.0);
        self.amplitude() * (overlap(left, mid) - overlap(mid, right))
    }

    pub fn to_field(&self) -> ScalarField {
        let h = *self;
        ScalarField::from_1d(move |x| haar_eval(h, x))
            .with_support_radius(self.support().right())
            .with_sup_bound(self.amplitude())
    }
}

/// `+-2^{j/2}` on the two halves of `I^j_k`, 0 elsewhere.
pub fn haar_eval(h: HaarFunction, x: f64) -> f64 {
    let t = x * pow2(h.j) - h.k as f64;
    if (0.0..0.5).contains(&t) {
        h.amplitude()
    } else if (0.5..1.0).contains(&t) {
        -h.amplitude()
    } else {
        0.0
    }
}

/// Finite Haar expansion `sum c_{jk} h^j_k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<HaarTerm>", into = "Vec<HaarTerm>")]
pub struct HaarExpansion {
    coefs: BTreeMap<HaarFunction, f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaarTerm {
    pub j: i32,
    pub k: u64,
    pub coef: f64,
}

impl TryFrom<Vec<HaarTerm>> for HaarExpansion {
    type Error = KirError;
    fn try_from(v: Vec<HaarTerm>) -> Result<Self> {
        HaarExpansion::new(v.into_iter().map(|t| (HaarFunction::new(t.j, t.k), t.coef)))
    }
}

impl From<HaarExpansion> for Vec<HaarTerm> {
    fn from(e: HaarExpansion) -> Self {
        e.coefs
            .into_iter()
            .map(|(h, coef)| HaarTerm { j: h.j, k: h.k, coef })
            .collect()
    }
}

impl HaarExpansion {
    /// Repeated terms are added together.
    pub fn new(terms: impl IntoIterator<Item = (HaarFunction, f64)>) -> Result<Self> {
        let mut coefs = BTreeMap::new();
        for (h, c) in terms {
            if !c.is_finite() {
                return Err(KirError::invalid(format!("non-finite coefficient for {h:?}")));
            }
            if h.j.abs() > 60 {
                return Err(KirError::invalid(format!("scale {} out of range", h.j)));
            }
            *coefs.entry(h).or_insert(0.0) += c;
        }
        Ok(HaarExpansion { coefs })
    }

    pub fn single(h: HaarFunction) -> Self {
        HaarExpansion::new([(h, 1.0)]).expect("finite coefficient")
    }

    pub fn terms(&self) -> impl Iterator<Item = (HaarFunction, f64)> + '_ {
        self.coefs.iter().map(|(h, c)| (*h, *c))
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut s = NeumaierSum::new();
        for (h, c) in self.terms() {
            s.add(c * haar_eval(h, x));
        }
        s.value()
    }

    /// `int_{[a, b)} f`.
    pub fn integral_over(&self, a: f64, b: f64) -> f64 {
        let mut s = NeumaierSum::new();
        for (h, c) in self.terms() {
            s.add(c * h.integral_over(a, b));
        }
        s.value()
    }

    fn scale_range(&self) -> Option<(i32, i32)> {
        let lo = self.coefs.keys().map(|h| h.j).min()?;
        let hi = self.coefs.keys().map(|h| h.j).max()?;
        Some((lo, hi))
    }

    pub fn to_field(&self) -> ScalarField {
        let e = self.clone();
        let right = self
            .coefs
            .keys()
            .map(|h| h.support().right())
            .fold(0.0f64, f64::max);
        let sup: f64 = self.terms().map(|(h, c)| c.abs() * h.amplitude()).sum();
        ScalarField::from_1d(move |x| e.eval(x))
            .with_support_radius(right)
            .with_sup_bound(sup)
    }
}

/// The constant `c_s = 2^{2s} / (2^{2s} - 1)` of the stated Haar eigenrelation.
pub fn cs_constant(s: f64) -> f64 {
    let t = 2f64.powf(2.0 * s);
    t / (t - 1.0)
}

/// The value `lambda_s` with `Delta_s h = lambda_s |supp h|^{-2s} h` produced by the kernel
/// `(f(y) - f(x)) / rho(x, y)^{1+2s}`: `-(2^{2s+1} - 1) / (2 (2^{2s} - 1))`.
pub fn kernel_eigenvalue(s: f64) -> f64 {
    let t = 2f64.powf(2.0 * s);
    -(2.0 * t - 1.0) / (2.0 * (t - 1.0))
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 0.5) {
        return Err(KirError::WrongRegime {
            s,
            expected: "absolutely convergent dyadic (0 < s < 1/2)",
        });
    }
    Ok(())
}

/// The sibling of `I^{m+1}(x)` inside `I^m(x)`, i.e. the annulus `{y : rho(x, y) = 2^{-m}}`.
pub(crate) fn annulus(x: f64, m: i32) -> (f64, f64) {
    let len = pow2(-m);
    let left = (x * pow2(m)).floor() * len;
    let mid = left + 0.5 * len;
    if x < mid {
        (mid, left + len)
    } else {
        (left, mid)
    }
}

/// `Delta_s f(x) = int (f(y) - f(x)) / rho(x, y)^{1+2s} dy` for a finite Haar expansion,
/// in closed form.
///
/// The annulus `A_m = {rho = 2^{-m}}` has length `2^{-m-1}`. Annuli finer than the finest
/// scale see `f` constant and contribute nothing; annuli coarser than the coarsest scale
/// see no mass of `f` and sum to a geometric series.
pub fn delta_s_apply(s: f64, f: &HaarExpansion, x: f64) -> Result<f64> {
    check_s(s)?;
    check_coord(x, "x")?;
    let Some((jmin, jmax)) = f.scale_range() else {
        return Ok(0.0);
    };
    let fx = f.eval(x);
    let mut acc = NeumaierSum::new();
    for m in jmin..=jmax {
        let (a, b) = annulus(x, m);
        let inner = f.integral_over(a, b) - fx * pow2(-m - 1);
        acc.add(pow2(m).powf(1.0 + 2.0 * s) * inner);
    }
    // m <= jmin - 1: each term is -f(x) 2^{2sm - 1}.
    let q = pow2(-1).powf(2.0 * s);
    acc.add(-fx * pow2(jmin - 1).powf(2.0 * s) * 0.5 / (1.0 - q));
    crate::error::finite(acc.value(), || format!("Delta_s at x = {x}"))
}

/// Options for [`delta_s_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicQuadrature {
    /// Annuli are cut into panels no longer than `2^{-panel_level}`.
    pub panel_level: i32,
    /// Finest annulus integrated; finer ones form the tail.
    pub finest: i32,
    /// Gauss-Legendre points per panel.
    pub order: usize,
}

impl Default for DyadicQuadrature {
    fn default() -> Self {
        DyadicQuadrature {
            panel_level: 10,
            finest: 40,
            order: 6,
        }
    }
}

/// `Delta_s f(x)` by quadrature over dyadic annuli for a general bounded, compactly
/// supported `f` on `R^+`.
///
/// Annuli beyond the support are summed in closed form. The reported bound covers the
/// annuli finer than `finest` and needs a Lipschitz constant; it is `None` otherwise.
pub fn delta_s_quadrature(
    s: f64,
    f: &ScalarField,
    x: f64,
    opts: DyadicQuadrature,
) -> Result<(f64, Option<f64>)> {
    check_s(s)?;
    check_coord(x, "x")?;
    let support = f
        .support_radius()
        .ok_or_else(|| KirError::invalid("quadrature path needs f with a declared support"))?;
    let reach = support.max(x).max(f64::MIN_POSITIVE);
    // Coarsest annulus that can meet the support: I^{m_lo}(x) = [0, 2^{-m_lo}) covers [0, reach].
    let mut m_lo = -(reach.log2().ceil() as i32) - 1;
    while pow2(-m_lo) <= reach {
        m_lo -= 1;
    }
    let fx = f.eval1(x);
    let rule = GaussLegendre::new(opts.order.max(1));
    let mut acc = NeumaierSum::new();
    for m in m_lo..=opts.finest.max(m_lo) {
        let (a, b) = annulus(x, m);
        let b_eff = b.min(support.max(a));
        let mut integral = NeumaierSum::new();
        if b_eff > a {
            let panel = pow2(-opts.panel_level).min(b - a);
            let count = ((b_eff - a) / panel).ceil() as u64;
            for p in 0..count {
                let lo = a + p as f64 * panel;
                let hi = (lo + panel).min(b_eff);
                integral.add(rule.integrate(lo, hi, |y| f.eval1(y) - fx));
            }
        }
        // Outside the support f = 0, so the remainder of the annulus contributes -f(x) |.|.
        integral.add(-fx * (b - b_eff));
        acc.add(pow2(m).powf(1.0 + 2.0 * s) * integral.value());
    }
    let q = pow2(-1).powf(2.0 * s);
    acc.add(-fx * pow2(m_lo - 1).powf(2.0 * s) * 0.5 / (1.0 - q));
    let bound = f.lipschitz().map(|l| {
        // |int_{A_m} (f - f(x))| <= L 2^{-m} 2^{-m-1} for Euclidean Lipschitz f.
        let r = pow2(-1).powf(1.0 - 2.0 * s);
        l * pow2(opts.finest + 1).powf(2.0 * s - 1.0) * 0.5 / (1.0 - r)
    });
    let v = crate::error::finite(acc.value(), || format!("Delta_s quadrature at x = {x}"))?;
    Ok((v, bound))
}

/// Two-variable Haar expansion `sum c h (x) h~(y)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<HaarTerm2>", into = "Vec<HaarTerm2>")]
pub struct HaarExpansion2 {
    coefs: BTreeMap<(HaarFunction, HaarFunction), f64>,
}

/// JSON form of a tensor term; `j2`/`k2` default to `j`/`k` (a diagonal term `h (x) h`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaarTerm2 {
    pub j: i32,
    pub k: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j2: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<u64>,
    pub coef: f64,
}

impl TryFrom<Vec<HaarTerm2>> for HaarExpansion2 {
    type Error = KirError;
    fn try_from(v: Vec<HaarTerm2>) -> Result<Self> {
        HaarExpansion2::new(v.into_iter().map(|t| {
            (
                HaarFunction::new(t.j, t.k),
                HaarFunction::new(t.j2.unwrap_or(t.j), t.k2.unwrap_or(t.k)),
                t.coef,
            )
        }))
    }
}

impl From<HaarExpansion2> for Vec<HaarTerm2> {
    fn from(e: HaarExpansion2) -> Self {
        e.coefs
            .into_iter()
            .map(|((h, g), coef)| HaarTerm2 {
                j: h.j,
                k: h.k,
                j2: Some(g.j),
                k2: Some(g.k),
                coef,
            })
            .collect()
    }
}

impl HaarExpansion2 {
    pub fn new(terms: impl IntoIterator<Item = (HaarFunction, HaarFunction, f64)>) -> Result<Self> {
        let mut coefs = BTreeMap::new();
        for (h, g, c) in terms {
            if !c.is_finite() {
                return Err(KirError::invalid("non-finite coefficient"));
            }
            if h.j.abs() > 60 || g.j.abs() > 60 {
                return Err(KirError::invalid("scale out of range"));
            }
            *coefs.entry((h, g)).or_insert(0.0) += c;
        }
        Ok(HaarExpansion2 { coefs })
    }

    pub fn terms(&self) -> impl Iterator<Item = (HaarFunction, HaarFunction, f64)> + '_ {
        self.coefs.iter().map(|((h, g), c)| (*h, *g, *c))
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut s = NeumaierSum::new();
        for (h, g, c) in self.terms() {
            s.add(c * haar_eval(h, x) * haar_eval(g, y));
        }
        s.value()
    }

    /// The section `y -> Phi(x, y)` as a one-variable expansion.
    pub fn section(&self, x: f64) -> HaarExpansion {
        HaarExpansion::new(self.terms().map(|(h, g, c)| (g, c * haar_eval(h, x))))
            .expect("finite coefficients")
    }

    pub fn to_field(&self) -> TwoPointField {
        let e = self.clone();
        let right = self
            .coefs
            .keys()
            .map(|(_, g)| g.support().right())
            .fold(0.0f64, f64::max);
        TwoPointField::from_1d(move |x, y| e.eval(x, y)).with_y_support(right)
    }
}

/// Spectral Kirchhoff divergence
/// `c_s sum c_{h h~} |supp h~|^{-2s} h(x) h~(x)` with the stated constant `c_s`.
pub fn spectral_kirchhoff(s: f64, phi: &HaarExpansion2, x: f64) -> Result<f64> {
    spectral_with_constant(s, phi, x, cs_constant(s))
}

/// The same double sum with the eigenvalue that the kernel actually produces.
pub fn spectral_kirchhoff_kernel(s: f64, phi: &HaarExpansion2, x: f64) -> Result<f64> {
    spectral_with_constant(s, phi, x, kernel_eigenvalue(s))
}

/// The double sum with an arbitrary constant in place of `c_s`.
pub fn spectral_with_constant(s: f64, phi: &HaarExpansion2, x: f64, c: f64) -> Result<f64> {
    check_s(s)?;
    check_coord(x, "x")?;
    let mut acc = NeumaierSum::new();
    for (h, g, coef) in phi.terms() {
        let hx = haar_eval(h, x);
        if hx == 0.0 {
            continue;
        }
        acc.add(coef * g.support_length().powf(-2.0 * s) * hx * haar_eval(g, x));
    }
    Ok(c * acc.value())
}

/// Kernel form `int (Phi(x, y) - Phi(x, x)) / rho(x, y)^{1+2s} dy` on the expansion span,
/// evaluated in closed form.
pub fn kernel_kirchhoff(s: f64, phi: &HaarExpansion2, x: f64) -> Result<f64> {
    delta_s_apply(s, &phi.section(x), x)
}
