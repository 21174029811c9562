//! Named fields, maps and densities for command-line use and the acceptance runs.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::convergence::TailDensity;
use crate::error::{KirError, Result};
use crate::field::{Decay, ScalarField, TwoPointField};

pub const SCALAR_FIELDS: &[&str] = &["one", "linear", "sq", "cubic", "gauss", "bump"];
pub const TWO_POINT_FIELDS: &[&str] = &[
    "one",
    "sq-diff",
    "lin-diff",
    "scaled-diff",
    "cos",
    "bump",
    "diff-bump",
    "bump-section",
    "cauchy",
];
pub const MAPS: &[&str] = &["identity", "double", "square", "shift", "sqrt"];
pub const FAMILY_MAPS: &[&str] = &["pow1ph", "identity", "shift"];
pub const DENSITIES: &[&str] = &["one", "gauss", "exp"];
pub const TAIL_DENSITIES: &[&str] = &["compact", "cauchy"];

fn unknown(kind: &str, name: &str, known: &[&str]) -> KirError {
    KirError::invalid(format!("unknown {kind} '{name}' (known: {})", known.join(", ")))
}

/// `|x|^2`, `x_1^3 + x_2^2`, `e^{-|x|^2}` and friends, with analytic derivatives where cheap.
pub fn scalar_field(name: &str, dim: usize) -> Result<ScalarField> {
    if dim == 0 {
        return Err(KirError::invalid("dimension must be positive"));
    }
    let f = match name {
        "one" => ScalarField::constant(1.0),
        "linear" => ScalarField::new(|x| x.iter().enumerate().map(|(m, c)| (m + 1) as f64 * c).sum())
            .with_gradient_fn(|x| (0..x.len()).map(|m| (m + 1) as f64).collect())
            .with_hessian_fn(|x| vec![vec![0.0; x.len()]; x.len()]),
        "sq" => ScalarField::new(|x| x.iter().map(|c| c * c).sum())
            .with_gradient_fn(|x| x.iter().map(|c| 2.0 * c).collect())
            .with_hessian_fn(|x| diag(x.len(), |_| 2.0)),
        "cubic" => ScalarField::new(|x| x[0].powi(3) + x.get(1).map_or(0.0, |c| c * c))
            .with_gradient_fn(|x| {
                let mut g = vec![0.0; x.len()];
                g[0] = 3.0 * x[0] * x[0];
                if x.len() > 1 {
                    g[1] = 2.0 * x[1];
                }
                g
            })
            .with_hessian_fn(|x| diag(x.len(), |m| match m {
                0 => 6.0 * x[0],
                1 => 2.0,
                _ => 0.0,
            })),
        "gauss" => ScalarField::new(|x| (-x.iter().map(|c| c * c).sum::<f64>()).exp())
            .with_gradient_fn(|x| {
                let e = (-x.iter().map(|c| c * c).sum::<f64>()).exp();
                x.iter().map(|c| -2.0 * c * e).collect()
            })
            .with_hessian_fn(|x| {
                let e = (-x.iter().map(|c| c * c).sum::<f64>()).exp();
                (0..x.len())
                    .map(|a| {
                        (0..x.len())
                            .map(|b| {
                                let d = if a == b { -2.0 } else { 0.0 };
                                (d + 4.0 * x[a] * x[b]) * e
                            })
                            .collect()
                    })
                    .collect()
            })
            .with_sup_bound(1.0)
            .with_lipschitz((2.0 / std::f64::consts::E).sqrt()),
        "bump" => crate::division::tensor_bump(&vec![0.0; dim], 1.0).with_support_radius((dim as f64).sqrt()),
        other => return Err(unknown("scalar field", other, SCALAR_FIELDS)),
    };
    Ok(f)
}

fn diag(n: usize, d: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|a| (0..n).map(|b| if a == b { d(a) } else { 0.0 }).collect())
        .collect()
}

/// Two-point fields `Phi(x, y)` on `R^dim`; `scaled-diff`, `cos`, `bump-section` and `cauchy`
/// read only the first coordinate.
pub fn two_point_field(name: &str, dim: usize) -> Result<TwoPointField> {
    if dim == 0 {
        return Err(KirError::invalid("dimension must be positive"));
    }
    let reach = (dim as f64).sqrt();
    let phi = match name {
        "one" => TwoPointField::new(|_, _| 1.0)
            .with_y_gradient_fn(|_, y| vec![0.0; y.len()])
            .with_y_hessian_fn(|_, y| diag(y.len(), |_| 0.0))
            .with_sup_norm(1.0)
            .with_y_gradient_sup(0.0)
            .with_y_decay(Decay::constant(1.0)),
        "sq-diff" => TwoPointField::new(|x, y| x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum())
            .with_y_gradient_fn(|x, y| x.iter().zip(y).map(|(a, b)| 2.0 * (b - a)).collect())
            .with_y_hessian_fn(|_, y| diag(y.len(), |_| 2.0)),
        "lin-diff" => TwoPointField::new(|x, y| x.iter().zip(y).map(|(a, b)| b - a).sum())
            .with_y_gradient_fn(|_, y| vec![1.0; y.len()])
            .with_y_hessian_fn(|_, y| diag(y.len(), |_| 0.0)),
        "scaled-diff" => TwoPointField::new(|x, y| x[0] * (y[0] - x[0]))
            .with_y_gradient_fn(|x, y| {
                let mut g = vec![0.0; y.len()];
                g[0] = x[0];
                g
            }),
        "cos" => TwoPointField::new(|_, y| y[0].cos()),
        // (1 - t^2)^3 has slope at most 1.72.
        "bump" => {
            let b = crate::division::tensor_bump(&vec![0.0; dim], 1.0);
            TwoPointField::new(move |_, y| b.eval(y))
                .with_y_support(reach)
                .with_sup_norm(1.0)
                .with_y_gradient_sup(1.72 * reach)
        }
        "diff-bump" => {
            let b = crate::division::tensor_bump(&vec![0.0; dim], 1.0);
            TwoPointField::new(move |x, y| (y[0] - x[0]) * b.eval(y)).with_y_support(reach)
        }
        "bump-section" => TwoPointField::new(|x, y| {
            let u = (1.0 - y[0] * y[0]).max(0.0);
            (1.0 + x[0] * x[0]) * u * u
        })
        .with_y_support(1.0),
        "cauchy" => TwoPointField::new(|x, y| (-x[0] * x[0]).exp() / (1.0 + y[0] * y[0]))
            .with_y_decay(Decay::new(0.0, 1.0, 2.0)),
        other => return Err(unknown("two-point field", other, TWO_POINT_FIELDS)),
    };
    Ok(phi)
}

/// A map `F: R -> R` with its derivative.
#[derive(Clone)]
pub struct Map1 {
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Map1 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Map1")
    }
}

fn map1(f: impl Fn(f64) -> f64 + Send + Sync + 'static, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Map1 {
    Map1 {
        f: Arc::new(f),
        df: Arc::new(df),
    }
}

/// Maps for deterministic couplings.
pub fn map(name: &str) -> Result<Map1> {
    Ok(match name {
        "identity" => map1(|x| x, |_| 1.0),
        "double" => map1(|x| 2.0 * x, |_| 2.0),
        "square" => map1(|x| x * x, |x| 2.0 * x),
        "shift" => map1(|x| x + 1.0, |_| 1.0),
        "sqrt" => map1(|x: f64| x.sqrt(), |x: f64| 0.5 / x.sqrt()),
        other => return Err(unknown("map", other, MAPS)),
    })
}

/// One-parameter maps `F(h, x)` with `F(0, x) = x`, and `dF/dh(0, x)`.
pub type FamilyMap = (
    Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    Arc<dyn Fn(f64) -> f64 + Send + Sync>,
);

/// `pow1ph`: `x^{1+h}`; `identity`; `shift`: `x + h (2 + sin x)`.
pub fn family_map(name: &str) -> Result<FamilyMap> {
    Ok(match name {
        "pow1ph" => (Arc::new(|h, x: f64| x.powf(1.0 + h)), Arc::new(|x: f64| x * x.ln())),
        "identity" => (Arc::new(|_, x| x), Arc::new(|_| 0.0)),
        "shift" => (
            Arc::new(|h, x: f64| x + h * (2.0 + x.sin())),
            Arc::new(|x: f64| 2.0 + x.sin()),
        ),
        other => return Err(unknown("family map", other, FAMILY_MAPS)),
    })
}

/// Densities `g` for couplings.
pub fn density(name: &str) -> Result<ScalarField> {
    Ok(match name {
        "one" => ScalarField::constant(1.0),
        "gauss" => ScalarField::from_1d(|x| (-x * x).exp() / PI.sqrt()),
        "exp" => ScalarField::from_1d(|x: f64| x.exp()),
        other => return Err(unknown("density", other, DENSITIES)),
    })
}

pub fn tail_density(name: &str) -> Result<TailDensity> {
    Ok(match name {
        "compact" => TailDensity::epanechnikov(),
        "cauchy" => TailDensity::cauchy(),
        other => return Err(unknown("tail density", other, TAIL_DENSITIES)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuum::classical_laplacian;

    #[test]
    fn every_name_resolves() {
        for n in SCALAR_FIELDS {
            let f = scalar_field(n, 2).unwrap();
            assert!(f.eval(&[0.3, -0.2]).is_finite());
        }
        for n in TWO_POINT_FIELDS {
            assert!(two_point_field(n, 1).unwrap().eval(&[0.3], &[0.1]).is_finite());
            assert!(two_point_field(n, 2).unwrap().eval(&[0.3, 0.2], &[0.1, -0.4]).is_finite());
        }
        for n in MAPS {
            assert!((map(n).unwrap().f)(0.7).is_finite());
        }
        for n in FAMILY_MAPS {
            let (f, _) = family_map(n).unwrap();
            assert_eq!(f(0.0, 0.7), 0.7);
        }
        for n in DENSITIES {
            assert!(density(n).unwrap().eval1(0.2) > 0.0);
        }
        assert!(scalar_field("nope", 1).unwrap_err().to_string().contains("known:"));
    }

    #[test]
    fn declared_hessians_match_laplacians() {
        let x = [0.4, -0.7];
        let want = [("sq", 4.0), ("cubic", 6.0 * 0.4 + 2.0)];
        for (n, v) in want {
            let f = scalar_field(n, 2).unwrap();
            assert!((classical_laplacian(&f, &x).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn family_map_speeds() {
        for n in FAMILY_MAPS {
            let (f, d) = family_map(n).unwrap();
            let x = 0.8;
            let h = 1e-6;
            let num = (f(h, x) - f(-h, x)) / (2.0 * h);
            assert!((num - d(x)).abs() < 1e-8, "{n}");
        }
    }
}
