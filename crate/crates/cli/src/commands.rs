//! One function per subcommand; each returns an [`Artifact`] and writes nothing itself.

use kirlab::builtins::{density, family_map, map, scalar_field, tail_density, two_point_field};
use kirlab::continuum::{
    frac_bound, frac_kir, frac_kir_pv, frac_kir_regular, hilbert_kir_eps_sequence, hilbert_kir_limit, FracKernelSpec,
};
use kirlab::convergence::{
    estimate_limit, family_coupling, family_fd, family_frac, family_gaussian_area, family_poisson_cutoff,
    family_tail_dichotomy,
};
use kirlab::couplings::{
    deterministic_kir, deterministic_laplacian, independent_kir, independent_laplacian, positive_order_kir_x,
    positive_order_kir_y, positive_order_laplacian_x, positive_order_laplacian_y, DeterministicCoupling,
    IndependentCoupling,
};
use kirlab::dyadic::{
    delta_s_apply, dyadic_frac_laplacian, dyadic_laplacian, dyadic_point, rho, spectral_kirchhoff,
    spectral_kirchhoff_kernel, HaarExpansion, HaarExpansion2,
};
use kirlab::graph::{is_harmonic, kirchhoff, laplacian, GraphSystem};
use kirlab::lattice::{fd_kirchhoff, fd_laplacian, frac_lattice_constant, frac_laplacian, FracSpec, LatticeSpec};
use kirlab::measure::{BoxDensity, Marginal};
use kirlab::metric::{net_frac_laplacian, net_kirchhoff, net_laplacian, MetricMeasureNet, NetConfig, NetMatrix};
use clap::ValueEnum;
use rayon::prelude::*;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::output::{coord_cols, jnum, jopt, num, opt_num, Artifact};

fn label(v: impl ValueEnum) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

fn need<T: Clone>(v: &Option<T>, flag: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn name_or<'a>(v: &'a Option<String>, default: &'a str) -> &'a str {
    v.as_deref().unwrap_or(default)
}

pub fn graph(a: &GraphArgs) -> CliResult<Artifact> {
    let sys: GraphSystem = need(&a.system, "system")?.decode("system")?;
    let nodes = sys.measure().nodes();
    let dim = nodes[0].dim();
    let op = a.op.unwrap_or_default();
    let mut art = Artifact::new("graph");
    let mut cols = vec!["node".to_string()];
    cols.extend(coord_cols("x", dim));
    let (values, col) = match op {
        GraphOp::Kirchhoff => {
            let phi = two_point_field(name_or(&a.phi, "sq-diff"), dim)?;
            (kirchhoff(&sys, &phi)?, "kirchhoff")
        }
        GraphOp::Laplacian => {
            let f = scalar_field(name_or(&a.func, "sq"), dim)?;
            (laplacian(&sys, &f)?, "laplacian")
        }
        GraphOp::Harmonic => {
            let f = scalar_field(name_or(&a.func, "sq"), dim)?;
            let r = is_harmonic(&sys, &f, a.tol.unwrap_or(1e-12))?;
            art.set("harmonic", r.harmonic);
            art.set_num("max_deviation", r.max_deviation);
            (r.deviations.iter().map(|d| d.1).collect(), "deviation")
        }
    };
    cols.push(col.to_string());
    art = Artifact { header: cols, ..art };
    for (k, (p, v)) in nodes.iter().zip(&values).enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(p.coords().iter().map(|c| num(*c)));
        row.push(num(*v));
        art.rows.push(row);
    }
    art.set("op", label(op));
    art.set("nodes", nodes.len());
    art.set("sum", jnum(values.iter().zip(sys.measure().weights()).map(|(v, w)| v * w).sum()));
    Ok(art)
}

/// Default truncation radius of the lattice fractional sum.
fn default_radius(dim: usize) -> i64 {
    match dim {
        1 => 4096,
        2 => 128,
        _ => 24,
    }
}

pub fn lattice(a: &LatticeArgs) -> CliResult<Artifact> {
    let op = a.op.unwrap_or_default();
    let dim = a.dim.unwrap_or(1);
    let alpha = a.alpha.unwrap_or(0.5);
    let mut art = Artifact::new("lattice");
    art.set("op", label(op));
    if op == LatticeOp::Constant {
        let r = a.radius.unwrap_or(64);
        let c = frac_lattice_constant(dim, alpha, r)?;
        art.set_num("value", c.value);
        art.set_num("lower", c.lower());
        art.set_num("upper", c.upper());
        art.set_num("half_width", c.half_width);
        art.headline = Some(format!("{:.6}", c.value));
        return Ok(art);
    }
    let spec = LatticeSpec::new(dim, a.h.unwrap_or(0.1), a.window.unwrap_or(8))?;
    let frac = op == LatticeOp::Frac;
    // The finite-difference stencils need a neighbour inside the window.
    let margin = if frac { 0 } else { 1 };
    let indices: Vec<Vec<i64>> = spec
        .indices()
        .into_iter()
        .filter(|k| k.iter().all(|c| c.abs() + margin <= spec.window()))
        .collect();
    let f = scalar_field(name_or(&a.func, "sq"), dim)?;
    let results: Vec<(f64, f64)> = match op {
        LatticeOp::Fd | LatticeOp::Harmonic => indices
            .par_iter()
            .map(|k| Ok((fd_laplacian(&spec, &f, k)?, 0.0)))
            .collect::<kirlab::Result<_>>()?,
        LatticeOp::Kirchhoff => {
            let phi = two_point_field(name_or(&a.phi, "sq-diff"), dim)?;
            indices
                .par_iter()
                .map(|k| Ok((fd_kirchhoff(&spec, &phi, k)?, 0.0)))
                .collect::<kirlab::Result<_>>()?
        }
        LatticeOp::Frac => {
            let fs = FracSpec::new(alpha, a.radius.unwrap_or(default_radius(dim)))?;
            indices
                .par_iter()
                .map(|k| frac_laplacian(&spec, &fs, &f, k).map(|b| (b.value, b.bound)))
                .collect::<kirlab::Result<_>>()?
        }
        LatticeOp::Constant => unreachable!(),
    };
    let mut cols = coord_cols("index", dim);
    cols.extend(coord_cols("point", dim));
    cols.push("value".into());
    cols.push("bound".into());
    art.header = cols;
    for (k, (v, b)) in indices.iter().zip(&results) {
        let mut row: Vec<String> = k.iter().map(|c| c.to_string()).collect();
        row.extend(spec.point(k).iter().map(|c| num(*c)));
        row.push(num(*v));
        row.push(num(*b));
        art.rows.push(row);
    }
    if op == LatticeOp::Harmonic {
        let h2 = spec.h() * spec.h() / (2.0 * dim as f64);
        let dev = results.iter().map(|r| (r.0 * h2).abs()).fold(0.0, f64::max);
        art.set("harmonic", dev <= a.tol.unwrap_or(1e-10));
        art.set_num("max_deviation", dev);
    }
    art.set("nodes", indices.len());
    art.set_num("max_bound", results.iter().map(|r| r.1).fold(0.0, f64::max));
    Ok(art)
}

pub fn dyadic(a: &DyadicArgs) -> CliResult<Artifact> {
    let op = a.op.unwrap_or_default();
    let mut art = Artifact::new("dyadic");
    art.set("op", label(op));
    let single = |art: &mut Artifact, v: f64| {
        art.set_num("value", v);
        art.headline = Some(format!("{v:.6}"));
    };
    match op {
        DyadicOp::Rho => {
            let x = *a.x.first().ok_or_else(|| CliError::Usage("--x is required".into()))?;
            single(&mut art, rho(x, need(&a.y, "y")?)?);
        }
        DyadicOp::Laplacian | DyadicOp::Frac => {
            let j = a.j.unwrap_or(0);
            let window = a.window.unwrap_or(15);
            let default = if op == DyadicOp::Frac { "bump" } else { "sq" };
            let f = scalar_field(name_or(&a.func, default), 1)?;
            let alpha = a.alpha.unwrap_or(0.5);
            let rows: Vec<(f64, f64)> = (0..=window)
                .into_par_iter()
                .map(|k| match op {
                    DyadicOp::Laplacian => Ok((dyadic_laplacian(j, &f, k)?, 0.0)),
                    _ => dyadic_frac_laplacian(j, alpha, &f, k, window).map(|b| (b.value, b.bound)),
                })
                .collect::<kirlab::Result<_>>()?;
            art.header = ["index", "point", "value", "bound"].map(String::from).to_vec();
            for (k, (v, b)) in rows.iter().enumerate() {
                art.rows
                    .push(vec![k.to_string(), num(dyadic_point(j, k as u64)), num(*v), num(*b)]);
            }
            art.set("j", j);
            art.set("nodes", rows.len());
        }
        DyadicOp::Spectral | DyadicOp::Delta => {
            let s = need(&a.s, "s")?;
            let coef = need(&a.coef, "coef")?;
            if a.x.is_empty() {
                return Err(CliError::Usage("--x is required".into()));
            }
            let values: Vec<f64> = if op == DyadicOp::Spectral {
                let phi: HaarExpansion2 = coef.decode("coef")?;
                let kernel = a.constant.unwrap_or_default() == SpectralConstant::Kernel;
                a.x.iter()
                    .map(|&x| {
                        if kernel {
                            spectral_kirchhoff_kernel(s, &phi, x)
                        } else {
                            spectral_kirchhoff(s, &phi, x)
                        }
                    })
                    .collect::<kirlab::Result<_>>()?
            } else {
                let f: HaarExpansion = coef.decode("coef")?;
                a.x.iter().map(|&x| delta_s_apply(s, &f, x)).collect::<kirlab::Result<_>>()?
            };
            art.set_num("s", s);
            if let [v] = values[..] {
                single(&mut art, v);
            } else {
                art.header = vec!["x".into(), "value".into()];
                for (x, v) in a.x.iter().zip(&values) {
                    art.rows.push(vec![num(*x), num(*v)]);
                }
            }
        }
    }
    Ok(art)
}

pub fn metric(a: &MetricArgs) -> CliResult<Artifact> {
    let cfg: NetConfig = need(&a.net, "net")?.decode("net")?;
    let net = MetricMeasureNet::try_from(cfg)?;
    let n = net.len();
    let dim = net.points()[0].dim();
    let op = a.op.unwrap_or_default();
    let h: NetMatrix = match &a.hmatrix {
        Some(m) => m.decode("hmatrix")?,
        None => NetMatrix::constant(n, 1.0),
    };
    let values: Vec<f64> = match op {
        MetricOp::Kirchhoff => {
            let phi = two_point_field(name_or(&a.phi, "sq-diff"), dim)?;
            (0..n).map(|k| net_kirchhoff(&net, &h, &phi, k)).collect::<kirlab::Result<_>>()?
        }
        MetricOp::Laplacian => {
            let f = scalar_field(name_or(&a.func, "sq"), dim)?;
            (0..n).map(|k| net_laplacian(&net, &h, &f, k)).collect::<kirlab::Result<_>>()?
        }
        MetricOp::Frac => {
            let f = scalar_field(name_or(&a.func, "sq"), dim)?;
            let alpha = a.alpha.unwrap_or(0.5);
            (0..n)
                .map(|k| net_frac_laplacian(&net, alpha, &f, k))
                .collect::<kirlab::Result<_>>()?
        }
    };
    let mut cols = vec!["node".to_string()];
    cols.extend(coord_cols("x", dim));
    cols.push("value".into());
    let mut art = Artifact::new("metric").header(&cols);
    for (k, v) in values.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(net.points()[k].coords().iter().map(|c| num(*c)));
        row.push(num(*v));
        art.rows.push(row);
    }
    art.set("op", label(op));
    art.set("nodes", n);
    art.set_num("sum", values.iter().zip(net.masses()).map(|(v, m)| v * m).sum());
    Ok(art)
}

fn points(xs: &[PointArg], dim: usize, default: f64) -> CliResult<Vec<Vec<f64>>> {
    if xs.is_empty() {
        return Ok(vec![vec![default; dim]]);
    }
    xs.iter()
        .map(|p| {
            if p.0.len() == dim {
                Ok(p.0.clone())
            } else {
                Err(CliError::Usage(format!("point {:?} does not have {dim} coordinates", p.0)))
            }
        })
        .collect()
}

pub fn frac(a: &FracArgs) -> CliResult<Artifact> {
    let dim = a.dim.unwrap_or(1);
    let spec = FracKernelSpec::new(dim, need(&a.s, "s")?)?;
    let phi = two_point_field(name_or(&a.phi, "bump"), dim)?;
    let xs = points(&a.x, dim, 0.0)?;
    let mode = a.mode.unwrap_or_default();
    let results = xs
        .par_iter()
        .map(|x| match mode {
            FracMode::Auto => frac_kir(&spec, &phi, x),
            FracMode::Regular => frac_kir_regular(&spec, &phi, x),
            FracMode::Pv => frac_kir_pv(&spec, &phi, x),
        })
        .collect::<kirlab::Result<Vec<_>>>()?;
    let bound = frac_bound(&spec, &phi);
    for (x, r) in xs.iter().zip(&results) {
        if r.value.abs() > bound * (1.0 + 1e-12) {
            return Err(CliError::Numerical(format!(
                "|Kir| = {} exceeds the kernel bound {bound} at x = {x:?}",
                r.value.abs()
            )));
        }
    }
    let mut cols = coord_cols("x", dim);
    cols.extend(["value", "error_estimate", "rate"].map(String::from));
    let mut art = Artifact::new("frac").header(&cols);
    for (x, r) in xs.iter().zip(&results) {
        let mut row: Vec<String> = x.iter().map(|c| num(*c)).collect();
        row.extend([num(r.value), num(r.error_estimate), opt_num(r.fitted_rate)]);
        art.rows.push(row);
    }
    art.set_num("s", spec.s());
    art.set("mode", label(mode));
    art.set("bound", jnum(bound));
    Ok(art)
}

pub fn hilbert(a: &HilbertArgs) -> CliResult<Artifact> {
    let phi = two_point_field(name_or(&a.phi, "cauchy"), 1)?;
    let xs = if a.x.is_empty() { vec![1.0] } else { a.x.clone() };
    let eps0 = a.eps_start.unwrap_or(0.5);
    let levels = a.levels.unwrap_or(12);
    let runs = xs
        .par_iter()
        .map(|&x| Ok((hilbert_kir_eps_sequence(eps0, levels, &phi, x)?, hilbert_kir_limit(&phi, x)?)))
        .collect::<kirlab::Result<Vec<_>>>()?;
    let mut art = Artifact::new("hilbert").header(&["x", "eps", "value", "error"]);
    let mut limits = Vec::new();
    for (x, (seq, lim)) in xs.iter().zip(&runs) {
        for (eps, v) in seq {
            art.rows.push(vec![num(*x), num(*eps), num(*v), num((v - lim).abs())]);
        }
        limits.push(serde_json::json!({"x": jnum(*x), "limit": jnum(*lim)}));
    }
    art.set("limits", limits);
    Ok(art)
}

pub fn coupling(a: &CouplingArgs) -> CliResult<Artifact> {
    let kind = a.kind.unwrap_or_default();
    let xs = if a.x.is_empty() { vec![0.5] } else { a.x.clone() };
    let g = density(name_or(&a.g, "one"))?;
    let phi = two_point_field(name_or(&a.phi, "sq-diff"), 1)?;
    let func = a.func.as_deref().map(|n| scalar_field(n, 1)).transpose()?;
    let side = a.side.unwrap_or_default();
    let values: Vec<f64> = match kind {
        CouplingKind::Indep => {
            let l = a.half_width.unwrap_or(1.0);
            let c = IndependentCoupling::new(g, Marginal::Density(BoxDensity::lebesgue(vec![-l], vec![l])?));
            xs.iter()
                .map(|&x| match &func {
                    Some(f) => independent_laplacian(&c, f, &[x]),
                    None => independent_kir(&c, &phi, &[x]),
                })
                .collect::<kirlab::Result<_>>()?
        }
        CouplingKind::Det | CouplingKind::PosOrder => {
            let m = map(name_or(&a.map, "identity"))?;
            let (f, df) = (m.f.clone(), m.df.clone());
            let c = DeterministicCoupling::from_1d(move |x| f(x))
                .with_jacobian(move |x| vec![vec![df(x[0])]])
                .with_density(g)
                .with_scale(a.h.unwrap_or(1.0))?;
            xs.iter()
                .map(|&x| {
                    let x = [x];
                    match (kind, side, &func) {
                        (CouplingKind::Det, _, Some(f)) => deterministic_laplacian(&c, f, &x),
                        (CouplingKind::Det, _, None) => deterministic_kir(&c, &phi, &x),
                        (_, Side::X, Some(f)) => positive_order_laplacian_x(&c, 0, f, &x),
                        (_, Side::X, None) => positive_order_kir_x(&c, 0, &phi, &x),
                        (_, Side::Y, Some(f)) => positive_order_laplacian_y(&c, 0, f, &x),
                        (_, Side::Y, None) => positive_order_kir_y(&c, 0, &phi, &x),
                    }
                })
                .collect::<kirlab::Result<_>>()?
        }
    };
    let mut art = Artifact::new("coupling").header(&["x", "value"]);
    for (x, v) in xs.iter().zip(&values) {
        art.rows.push(vec![num(*x), num(*v)]);
    }
    art.set("kind", label(kind));
    art.set("operator", if func.is_some() { "laplacian" } else { "kirchhoff" });
    Ok(art)
}

pub fn converge(a: &ConvergeArgs) -> CliResult<Artifact> {
    let family = a.family.unwrap_or_default();
    let (fam, phi_name, x0) = match family {
        Family::Fd => (family_fd(), "sq-diff", 0.375),
        Family::Frac => (family_frac(a.alpha.unwrap_or(0.5), a.far_radius)?, "diff-bump", 0.25),
        Family::Poisson => (family_poisson_cutoff(), "one", 0.5),
        Family::Coupling => {
            let (f, df) = family_map(name_or(&a.map, "pow1ph"))?;
            (family_coupling(move |h, x| f(h, x), Some(df)), "scaled-diff", 0.5)
        }
        Family::Dichotomy => (
            family_tail_dichotomy(tail_density(name_or(&a.zeta, "compact"))?),
            "bump-section",
            0.0,
        ),
        Family::Area => (family_gaussian_area(), "bump-section", 0.5),
    };
    let phi = two_point_field(name_or(&a.phi, phi_name), 1)?;
    let x = match &a.x {
        Some(p) if p.0.len() == 1 => p.0.clone(),
        Some(p) => return Err(CliError::Usage(format!("point {:?} must have one coordinate", p.0))),
        None => vec![x0],
    };
    let r = estimate_limit(&fam, &phi, &x, a.h0.unwrap_or(0.5), a.levels.unwrap_or(10))?;
    let mut art = Artifact::new("converge").header(&["h", "Q", "diff", "fitted_order"]);
    for (m, (h, q)) in r.hs.iter().zip(&r.values).enumerate() {
        let diff = if m == 0 { String::new() } else { r.diffs.get(m - 1).map(|d| num(*d)).unwrap_or_default() };
        let order = if m == 0 { None } else { r.orders.get(m - 1).copied().flatten() };
        art.rows.push(vec![num(*h), num(*q), diff, opt_num(order)]);
    }
    art.set("family", fam.name());
    art.set_num("x", x[0]);
    art.set_num("limit", r.value);
    art.set_num("error_bar", r.error_bar);
    art.set_num("order", r.order);
    art.set("verdict", r.verdict.to_string());
    art.set("claimed_limit", jopt(fam.claimed_limit(&phi, &x).transpose()?));
    art.set("claimed_order", jopt(fam.claimed_order()));
    art.set("failure_level", r.failure_level);
    art.set("failure", r.failure.clone());
    Ok(art)
}
