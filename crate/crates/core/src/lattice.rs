//! Finite differences and the discrete fractional Laplacian on the scaled lattice `hZ^n`.

use serde::{Deserialize, Serialize};

use crate::error::{KirError, Result};
use crate::field::{ScalarField, TwoPointField};
use crate::quad::NeumaierSum;

/// Lattice `hZ^n` restricted to indices with `|k|_inf <= window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    dim: usize,
    h: f64,
    window: i64,
}

impl LatticeSpec {
    pub fn new(dim: usize, h: f64, window: i64) -> Result<Self> {
        if dim == 0 {
            return Err(KirError::invalid("lattice dimension must be at least 1"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(KirError::invalid(format!("spacing h must be positive, got {h}")));
        }
        if window < 1 {
            return Err(KirError::invalid(format!("window radius must be >= 1, got {window}")));
        }
        Ok(LatticeSpec { dim, h, window })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn window(&self) -> i64 {
        self.window
    }

    /// The point `h k`.
    pub fn point(&self, k: &[i64]) -> Vec<f64> {
        k.iter().map(|&c| self.h * c as f64).collect()
    }

    /// Index of the half-open cube `h(k + [-1/2, 1/2)^n)` containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|c| (c / self.h + 0.5).floor() as i64).collect()
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        k.iter().all(|c| c.abs() <= self.window)
    }

    /// All indices in the window, lexicographic order.
    pub fn indices(&self) -> Vec<Vec<i64>> {
        cube_offsets(self.dim, self.window, true)
    }

    fn check_index(&self, k: &[i64], margin: i64) -> Result<()> {
        if k.len() != self.dim {
            return Err(KirError::invalid(format!(
                "index has {} components, lattice has dimension {}",
                k.len(),
                self.dim
            )));
        }
        if k.iter().any(|c| c.abs() + margin > self.window) {
            return Err(KirError::Boundary {
                index: k.to_vec(),
                window: self.window,
            });
        }
        Ok(())
    }
}

/// Exponent and truncation radius of the discrete fractional Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FracSpec {
    alpha: f64,
    radius: i64,
}

impl FracSpec {
    /// `0 < alpha < 2`, `radius >= 1`.
    pub fn new(alpha: f64, radius: i64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(KirError::invalid(format!("alpha must lie in (0, 2), got {alpha}")));
        }
        FracSpec::relaxed(alpha, radius)
    }

    /// Any `alpha > 0`; the lattice series converge for every positive exponent.
    pub fn relaxed(alpha: f64, radius: i64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(KirError::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if radius < 1 {
            return Err(KirError::invalid(format!("truncation radius must be >= 1, got {radius}")));
        }
        Ok(FracSpec { alpha, radius })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// Upper bound on `sum_{|j|_inf > R} |j|^{-n-alpha}`.
    pub fn tail_bound(&self, n: usize) -> f64 {
        tail_bracket(n, self.alpha, self.radius).1
    }
}

/// `(1/h^2) sum_m [Phi(hk, h(k+e_m)) + Phi(hk, h(k-e_m))]`.
pub fn fd_kirchhoff(spec: &LatticeSpec, phi: &TwoPointField, k: &[i64]) -> Result<f64> {
    spec.check_index(k, 1)?;
    let x = spec.point(k);
    let mut y = x.clone();
    let mut s = NeumaierSum::new();
    for m in 0..spec.dim {
        for sign in [1.0, -1.0] {
            y[m] = spec.h * (k[m] as f64 + sign);
            s.add(phi.eval(&x, &y));
        }
        y[m] = x[m];
    }
    let v = s.value() / (spec.h * spec.h);
    crate::error::finite(v, || format!("finite-difference divergence at {k:?}"))
}

/// `sum_m [f(h(k+e_m)) - 2 f(hk) + f(h(k-e_m))] / h^2`.
pub fn fd_laplacian(spec: &LatticeSpec, f: &ScalarField, k: &[i64]) -> Result<f64> {
    spec.check_index(k, 1)?;
    let x = spec.point(k);
    let f0 = f.eval(&x);
    let mut y = x.clone();
    let mut s = NeumaierSum::new();
    for m in 0..spec.dim {
        for sign in [1.0, -1.0] {
            y[m] = spec.h * (k[m] as f64 + sign);
            s.add(f.eval(&y) - f0);
        }
        y[m] = x[m];
    }
    let v = s.value() / (spec.h * spec.h);
    crate::error::finite(v, || format!("finite-difference Laplacian at {k:?}"))
}

/// Mean-value test `f(hk) = (1/2n) sum_m [f(h(k+e_m)) + f(h(k-e_m))]` at the given indices.
pub fn fd_is_harmonic(
    spec: &LatticeSpec,
    f: &ScalarField,
    indices: &[Vec<i64>],
    tol: f64,
) -> Result<(bool, f64)> {
    let mut dev = 0.0f64;
    for k in indices {
        let lap = fd_laplacian(spec, f, k)?;
        dev = dev.max((lap * spec.h * spec.h / (2.0 * spec.dim as f64)).abs());
    }
    Ok((dev <= tol, dev))
}

/// The lattice constant `c(alpha) = sum_{j != 0} |j|^{-n-alpha}` with a rigorous bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeConstant {
    /// Sum over `0 < |j|_inf <= R`.
    pub partial: f64,
    pub tail_lower: f64,
    pub tail_upper: f64,
    /// Midpoint of `[partial + tail_lower, partial + tail_upper]`.
    pub value: f64,
    pub half_width: f64,
}

impl LatticeConstant {
    pub fn lower(&self) -> f64 {
        self.partial + self.tail_lower
    }

    pub fn upper(&self) -> f64 {
        self.partial + self.tail_upper
    }

    pub fn contains(&self, v: f64) -> bool {
        // A few ulps of slack for the rounding of the partial sum.
        let slack = 4.0 * f64::EPSILON * self.value.abs();
        v >= self.lower() - slack && v <= self.upper() + slack
    }
}

/// Bracket `[lo, hi]` for `sum_{|j|_inf > R} |j|_2^{-n-alpha}`.
///
/// Shell `|j|_inf = m` has `(2m+1)^n - (2m-1)^n` points with `m <= |j|_2 <= sqrt(n) m`;
/// the shell counts are bounded by `2n (2m -+ 1)^{n-1}` and the sums over `m` by integrals.
pub fn tail_bracket(n: usize, alpha: f64, r: i64) -> (f64, f64) {
    let nf = n as f64;
    let r = r as f64;
    let upper = 2.0 * nf * (2.0 + 1.0 / (r + 1.0)).powf(nf - 1.0) * r.powf(-alpha) / alpha;
    let lower = 2.0
        * nf
        * (2.0 - 1.0 / (r + 1.0)).powf(nf - 1.0)
        * nf.powf(-(nf + alpha) / 2.0)
        * (r + 1.0).powf(-alpha)
        / alpha;
    (lower, upper)
}

/// `c(alpha)` by partial summation over `0 < |j|_inf <= R` plus the tail bracket.
pub fn frac_lattice_constant(n: usize, alpha: f64, r: i64) -> Result<LatticeConstant> {
    if n == 0 {
        return Err(KirError::invalid("dimension must be at least 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(KirError::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if r < 1 {
        return Err(KirError::invalid(format!("radius must be >= 1, got {r}")));
    }
    let partial = orthant_partial_sum(n, alpha, r);
    let (tail_lower, tail_upper) = tail_bracket(n, alpha, r);
    Ok(LatticeConstant {
        partial,
        tail_lower,
        tail_upper,
        value: partial + 0.5 * (tail_lower + tail_upper),
        half_width: 0.5 * (tail_upper - tail_lower),
    })
}

/// `sum_{0 < |j|_inf <= R} |j|^{-n-alpha}` over the closed positive orthant with sign multiplicities.
fn orthant_partial_sum(n: usize, alpha: f64, r: i64) -> f64 {
    let p = -(n as f64 + alpha) / 2.0;
    let mut s = NeumaierSum::new();
    // Iterate from the outer shells inwards so small terms are added first.
    let mut idx = vec![r; n];
    loop {
        let sq: i64 = idx.iter().map(|c| c * c).sum();
        if sq > 0 {
            let nonzero = idx.iter().filter(|&&c| c != 0).count();
            s.add((1u64 << nonzero) as f64 * (sq as f64).powf(p));
        }
        // Decrement like an odometer.
        let mut d = 0;
        loop {
            if d == n {
                return s.value();
            }
            if idx[d] > 0 {
                idx[d] -= 1;
                break;
            }
            idx[d] = r;
            d += 1;
        }
    }
}

/// All offsets `d` with `|d|_inf <= r` in lexicographic order, optionally including 0.
pub(crate) fn cube_offsets(n: usize, r: i64, include_zero: bool) -> Vec<Vec<i64>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![-r; n];
    for _ in 0..total {
        if include_zero || idx.iter().any(|&c| c != 0) {
            out.push(idx.clone());
        }
        for d in (0..n).rev() {
            if idx[d] < r {
                idx[d] += 1;
                break;
            }
            idx[d] = -r;
        }
    }
    out
}

/// A value with a rigorous truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounded {
    pub value: f64,
    pub bound: f64,
}

/// Discrete fractional Laplacian
/// `(1/h^alpha) sum_{j != k} (f(hj) - f(hk)) / |k - j|^{n+alpha}`, truncated at `|j - k|_inf <= R`.
///
/// When `f` has a declared support covered by the truncation cube, the omitted terms are
/// `-f(hk)` times the lattice tail, which is added at its midpoint; otherwise the bound is
/// `2 sup|f| tail / h^alpha`.
pub fn frac_laplacian(
    spec: &LatticeSpec,
    fspec: &FracSpec,
    f: &ScalarField,
    k: &[i64],
) -> Result<Bounded> {
    spec.check_index(k, 0)?;
    let n = spec.dim;
    let covered = support_covered(spec, fspec, f, k);
    let sup = f.sup_bound();
    if !covered && sup.is_none() {
        return Err(KirError::invalid(
            "fractional Laplacian needs a bounded f: declare a support radius or a sup bound",
        ));
    }
    let x = spec.point(k);
    let fk = f.eval(&x);
    let p = -(n as f64 + fspec.alpha) / 2.0;
    let mut s = NeumaierSum::new();
    let mut y = x.clone();
    for d in cube_offsets(n, fspec.radius, false) {
        for m in 0..n {
            y[m] = spec.h * (k[m] + d[m]) as f64;
        }
        let sq: i64 = d.iter().map(|c| c * c).sum();
        s.add((f.eval(&y) - fk) * (sq as f64).powf(p));
    }
    let scale = spec.h.powf(-fspec.alpha);
    let (lo, hi) = tail_bracket(n, fspec.alpha, fspec.radius);
    let (value, bound) = if covered {
        (
            (s.value() - fk * 0.5 * (lo + hi)) * scale,
            fk.abs() * 0.5 * (hi - lo) * scale,
        )
    } else {
        (s.value() * scale, 2.0 * sup.unwrap_or(0.0) * hi * scale)
    };
    let value = crate::error::finite(value, || format!("fractional Laplacian at {k:?}"))?;
    Ok(Bounded { value, bound })
}

/// Whether every lattice point in the declared support lies within `R` of `k`.
fn support_covered(spec: &LatticeSpec, fspec: &FracSpec, f: &ScalarField, k: &[i64]) -> bool {
    match f.support_radius() {
        Some(rs) => {
            let reach = (rs / spec.h).floor() as i64;
            k.iter().all(|c| c.abs() + reach <= fspec.radius)
        }
        None => false,
    }
}

/// Result of a fractional mean-value test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FracHarmonicReport {
    pub harmonic: bool,
    pub max_deviation: f64,
    /// Largest truncation bound among tested nodes.
    pub bound: f64,
    pub per_node: Vec<(Vec<i64>, f64, f64)>,
}

/// Mean-value test `f(hk) = (1/c(alpha)) sum_{j != k} f(hj) / |k - j|^{n+alpha}` at every
/// window node.
pub fn frac_is_harmonic(
    spec: &LatticeSpec,
    fspec: &FracSpec,
    f: &ScalarField,
    tol: f64,
) -> Result<FracHarmonicReport> {
    frac_is_harmonic_at(spec, fspec, f, &spec.indices(), tol)
}

/// Mean-value test at the listed nodes.
pub fn frac_is_harmonic_at(
    spec: &LatticeSpec,
    fspec: &FracSpec,
    f: &ScalarField,
    nodes: &[Vec<i64>],
    tol: f64,
) -> Result<FracHarmonicReport> {
    let n = spec.dim;
    let c = frac_lattice_constant(n, fspec.alpha, fspec.radius)?;
    let (c_lo, c_hi) = (c.lower(), c.upper());
    let p = -(n as f64 + fspec.alpha) / 2.0;
    let offsets = cube_offsets(n, fspec.radius, false);
    let mut per_node = Vec::with_capacity(nodes.len());
    let mut harmonic = true;
    for k in nodes {
        spec.check_index(k, 0)?;
        let covered = support_covered(spec, fspec, f, k);
        let sup = f.sup_bound();
        if !covered && sup.is_none() {
            return Err(KirError::invalid(
                "mean-value test needs a bounded f: declare a support radius or a sup bound",
            ));
        }
        let x = spec.point(k);
        let mut y = x.clone();
        let mut s = NeumaierSum::new();
        for d in &offsets {
            for m in 0..n {
                y[m] = spec.h * (k[m] + d[m]) as f64;
            }
            let sq: i64 = d.iter().map(|c| c * c).sum();
            s.add(f.eval(&y) * (sq as f64).powf(p));
        }
        let s = s.value();
        let dev = (f.eval(&x) - s / c.value).abs();
        let mut bound = s.abs() * (1.0 / c_lo - 1.0 / c_hi);
        if !covered {
            bound += sup.unwrap_or(0.0) * c.tail_upper / c_lo;
        }
        if !(dev <= tol + bound) {
            harmonic = false;
        }
        per_node.push((k.clone(), dev, bound));
    }
    let max_deviation = per_node.iter().fold(0.0f64, |m, t| m.max(t.1));
    let bound = per_node.iter().fold(0.0f64, |m, t| m.max(t.2));
    Ok(FracHarmonicReport {
        harmonic,
        max_deviation,
        bound,
        per_node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::grad0;
    use std::f64::consts::PI;

    #[test]
    fn fd_kirchhoff_examples() {
        let s1 = LatticeSpec::new(1, 1.0, 3).unwrap();
        assert_eq!(fd_kirchhoff(&s1, &TwoPointField::zero(), &[0]).unwrap(), 0.0);
        assert_eq!(fd_kirchhoff(&s1, &TwoPointField::from_1d(|_, _| 1.0), &[0]).unwrap(), 2.0);
        let s2 = LatticeSpec::new(2, 0.5, 3).unwrap();
        let phi = TwoPointField::new(|x, y| y[0] - x[0]);
        assert_eq!(fd_kirchhoff(&s2, &phi, &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn boundary_errors() {
        let s = LatticeSpec::new(1, 1.0, 3).unwrap();
        assert!(matches!(
            fd_laplacian(&s, &ScalarField::constant(1.0), &[3]),
            Err(KirError::Boundary { .. })
        ));
        assert!(fd_laplacian(&s, &ScalarField::constant(1.0), &[2]).is_ok());
        assert!(LatticeSpec::new(1, 0.0, 3).is_err());
        assert!(LatticeSpec::new(1, 1.0, 0).is_err());
    }

    #[test]
    fn fd_laplacian_examples() {
        let sq = ScalarField::new(|x| x.iter().map(|c| c * c).sum());
        for n in 1..=3 {
            for h in [1.0, 0.1, 0.01] {
                let s = LatticeSpec::new(n, h, 5).unwrap();
                let k = vec![1; n];
                let v = fd_laplacian(&s, &sq, &k).unwrap();
                assert!((v - 2.0 * n as f64).abs() <= 1e-12 * 2.0 * n as f64, "n={n} h={h} v={v}");
            }
        }
        let s = LatticeSpec::new(1, 0.1, 5).unwrap();
        assert!(fd_laplacian(&s, &ScalarField::from_1d(f64::sin), &[0]).unwrap().abs() < 1e-3);
        assert_eq!(fd_laplacian(&s, &ScalarField::constant(3.0), &[1]).unwrap(), 0.0);
    }

    #[test]
    fn fd_laplacian_is_divergence_of_gradient() {
        let s = LatticeSpec::new(2, 0.25, 4).unwrap();
        let f = ScalarField::new(|x| (x[0] * 1.3).sin() * x[1].exp());
        for k in [[0, 0], [1, -2], [3, 3]] {
            let a = fd_laplacian(&s, &f, &k).unwrap();
            let b = fd_kirchhoff(&s, &grad0(&f), &k).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn lattice_constant_zeta_values() {
        let c = frac_lattice_constant(1, 1.0, 10_000).unwrap();
        assert!(c.contains(PI * PI / 3.0));
        assert!(c.half_width <= 1e-4);
        let c3 = frac_lattice_constant(1, 3.0, 200).unwrap();
        assert!(c3.contains(PI.powi(4) / 45.0));
        assert!((c3.value - 2.164646).abs() < 1e-6);
    }

    #[test]
    fn lattice_constant_bracket_contains_refinement() {
        for n in 1..=3 {
            for alpha in [0.3, 1.0, 1.7] {
                let c = frac_lattice_constant(n, alpha, 6).unwrap();
                let fine = frac_lattice_constant(n, alpha, 12).unwrap();
                assert!(c.lower() <= fine.lower() && fine.upper() <= c.upper(), "n={n} alpha={alpha}");
                assert!(c.contains(fine.value));
            }
        }
    }

    #[test]
    fn orthant_sum_matches_full_enumeration() {
        for n in 1..=3 {
            let p = -(n as f64 + 0.7) / 2.0;
            let full: f64 = cube_offsets(n, 4, false)
                .iter()
                .map(|d| (d.iter().map(|c| c * c).sum::<i64>() as f64).powf(p))
                .sum();
            let fast = orthant_partial_sum(n, 0.7, 4);
            assert!((full - fast).abs() < 1e-12 * full);
        }
    }

    #[test]
    fn frac_laplacian_examples() {
        let spec = LatticeSpec::new(1, 1.0, 4).unwrap();
        let fs = FracSpec::new(1.0, 2000).unwrap();
        let c = ScalarField::constant(2.5);
        assert_eq!(frac_laplacian(&spec, &fs, &c, &[0]).unwrap().value, 0.0);

        let delta = ScalarField::from_1d(|x| if x == 0.0 { 1.0 } else { 0.0 }).with_support_radius(0.0);
        let at1 = frac_laplacian(&spec, &fs, &delta, &[1]).unwrap();
        assert_eq!(at1.value, 1.0);
        assert_eq!(at1.bound, 0.0);
        let at0 = frac_laplacian(&spec, &fs, &delta, &[0]).unwrap();
        assert!((at0.value + PI * PI / 3.0).abs() <= at0.bound + 1e-12);

        let unbounded = ScalarField::from_1d(|x| x);
        assert!(frac_laplacian(&spec, &fs, &unbounded, &[0]).is_err());
        assert!(FracSpec::new(2.0, 10).is_err());
        assert!(FracSpec::relaxed(3.0, 10).is_ok());
    }

    #[test]
    fn frac_harmonic_examples() {
        let spec = LatticeSpec::new(1, 1.0, 3).unwrap();
        let fs = FracSpec::new(1.0, 500).unwrap();
        let r = frac_is_harmonic(&spec, &fs, &ScalarField::constant(1.0), 0.0).unwrap();
        assert!(r.harmonic);
        assert!(r.max_deviation <= r.bound);

        let delta = ScalarField::from_1d(|x| if x == 0.0 { 1.0 } else { 0.0 }).with_support_radius(0.0);
        let r = frac_is_harmonic_at(&spec, &fs, &delta, &[vec![0]], 1e-9).unwrap();
        assert!(!r.harmonic);
        assert_eq!(r.max_deviation, 1.0);

        let odd = ScalarField::from_1d(|x| (x * 0.3).sin()).with_sup_bound(1.0);
        let r = frac_is_harmonic_at(&spec, &fs, &odd, &[vec![0]], 0.0).unwrap();
        assert!(r.max_deviation <= r.bound);
    }
}
