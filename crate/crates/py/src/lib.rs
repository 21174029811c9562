//! Python bindings. Fields may be given as builtin names (see `BUILTINS`) or as Python
//! callables: `f(x)` / `phi(x, y)` with floats in one dimension and lists otherwise.

use std::sync::{Arc, Mutex};

use kirlab::builtins;
use kirlab::continuum::{self, FracKernelSpec, PVHilbertSpec};
use kirlab::convergence::{self, ConvergenceFamily, LimitReport};
use kirlab::couplings::{self, DeterministicCoupling, IndependentCoupling};
use kirlab::dyadic::{self, HaarExpansion2, HaarFunction};
use kirlab::graph::{self, GraphSystem};
use kirlab::lattice::{self, FracSpec, LatticeSpec};
use kirlab::measure::{BoxDensity, Marginal};
use kirlab::metric::{self, MetricMeasureNet, NetConfig, NetMatrix};
use kirlab::{CouplingWeights, KirError, NodeMeasure, Point, ScalarField, TwoPointField};
use pyo3::exceptions::{PyArithmeticError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: KirError) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Holds the first exception raised by a Python callback; the callback itself returns NaN.
#[derive(Clone, Default)]
struct Trap(Arc<Mutex<Option<PyErr>>>);

impl Trap {
    fn record(&self, e: PyErr) -> f64 {
        let mut slot = self.0.lock().unwrap_or_else(|p| p.into_inner());
        if slot.is_none() {
            *slot = Some(e);
        }
        f64::NAN
    }

    fn finish<T>(&self, r: kirlab::Result<T>) -> PyResult<T> {
        if let Some(e) = self.0.lock().unwrap_or_else(|p| p.into_inner()).take() {
            return Err(e);
        }
        r.map_err(err)
    }

    fn scalar(&self, obj: &Bound<'_, PyAny>, dim: usize) -> PyResult<ScalarField> {
        if let Ok(name) = obj.extract::<String>() {
            return builtins::scalar_field(&name, dim).map_err(err);
        }
        let f = callable(obj)?;
        let trap = self.clone();
        Ok(ScalarField::new(move |x| {
            Python::attach(|py| {
                let r = if x.len() == 1 { f.call1(py, (x[0],)) } else { f.call1(py, (x.to_vec(),)) };
                r.and_then(|v| v.extract::<f64>(py).map_err(PyErr::from))
                    .unwrap_or_else(|e| trap.record(e))
            })
        }))
    }

    fn two_point(&self, obj: &Bound<'_, PyAny>, dim: usize) -> PyResult<TwoPointField> {
        if let Ok(name) = obj.extract::<String>() {
            return builtins::two_point_field(&name, dim).map_err(err);
        }
        let f = callable(obj)?;
        let trap = self.clone();
        Ok(TwoPointField::new(move |x, y| {
            Python::attach(|py| {
                let r = if x.len() == 1 {
                    f.call1(py, (x[0], y[0]))
                } else {
                    f.call1(py, (x.to_vec(), y.to_vec()))
                };
                r.and_then(|v| v.extract::<f64>(py).map_err(PyErr::from))
                    .unwrap_or_else(|e| trap.record(e))
            })
        }))
    }
}

fn callable(obj: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    if !obj.is_callable() {
        return Err(PyTypeError::new_err("expected a builtin name or a callable"));
    }
    Ok(obj.clone().unbind())
}

/// Finite weighted graph: node measure plus pair weights.
#[pyclass(name = "GraphSystem", frozen)]
struct PyGraph(GraphSystem);

impl PyGraph {
    fn dim(&self) -> usize {
        self.0.measure().nodes()[0].dim()
    }
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>, entries: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let m = NodeMeasure::new(nodes.into_iter().map(Point::new).collect(), weights).map_err(err)?;
        let c = CouplingWeights::new(entries).map_err(err)?;
        GraphSystem::new(m, c).map(PyGraph).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(PyGraph).map_err(json_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(json_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn kirchhoff(&self, py: Python<'_>, phi: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
        let t = Trap::default();
        let phi = t.two_point(phi, self.dim())?;
        t.finish(py.detach(|| graph::kirchhoff(&self.0, &phi)))
    }

    fn laplacian(&self, py: Python<'_>, f: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
        let t = Trap::default();
        let f = t.scalar(f, self.dim())?;
        t.finish(py.detach(|| graph::laplacian(&self.0, &f)))
    }

    /// `(harmonic, max_deviation)`.
    #[pyo3(signature = (f, tol = 1e-12))]
    fn is_harmonic(&self, py: Python<'_>, f: &Bound<'_, PyAny>, tol: f64) -> PyResult<(bool, f64)> {
        let t = Trap::default();
        let f = t.scalar(f, self.dim())?;
        let r = t.finish(py.detach(|| graph::is_harmonic(&self.0, &f, tol)))?;
        Ok((r.harmonic, r.max_deviation))
    }
}

/// The window `{|k|_inf <= window}` of `hZ^dim`.
#[pyclass(name = "Lattice", frozen)]
struct PyLattice(LatticeSpec);

#[pymethods]
impl PyLattice {
    #[new]
    fn new(dim: usize, h: f64, window: i64) -> PyResult<Self> {
        LatticeSpec::new(dim, h, window).map(PyLattice).map_err(err)
    }

    fn point(&self, k: Vec<i64>) -> Vec<f64> {
        self.0.point(&k)
    }

    fn fd_laplacian(&self, py: Python<'_>, f: &Bound<'_, PyAny>, k: Vec<i64>) -> PyResult<f64> {
        let t = Trap::default();
        let f = t.scalar(f, self.0.dim())?;
        t.finish(py.detach(|| lattice::fd_laplacian(&self.0, &f, &k)))
    }

    fn fd_kirchhoff(&self, py: Python<'_>, phi: &Bound<'_, PyAny>, k: Vec<i64>) -> PyResult<f64> {
        let t = Trap::default();
        let phi = t.two_point(phi, self.0.dim())?;
        t.finish(py.detach(|| lattice::fd_kirchhoff(&self.0, &phi, &k)))
    }

    /// `(value, bound)` of the truncated fractional Laplacian.
    fn frac_laplacian(
        &self,
        py: Python<'_>,
        f: &Bound<'_, PyAny>,
        k: Vec<i64>,
        alpha: f64,
        radius: i64,
    ) -> PyResult<(f64, f64)> {
        let t = Trap::default();
        let f = t.scalar(f, self.0.dim())?;
        let fs = FracSpec::new(alpha, radius).map_err(err)?;
        let b = t.finish(py.detach(|| lattice::frac_laplacian(&self.0, &fs, &f, &k)))?;
        Ok((b.value, b.bound))
    }
}

/// One level of a metric measure net, built from its JSON form.
#[pyclass(name = "MetricNet", frozen)]
struct PyNet(MetricMeasureNet);

impl PyNet {
    fn matrix(&self, h: Option<Vec<Vec<f64>>>) -> NetMatrix {
        h.map(NetMatrix).unwrap_or_else(|| NetMatrix::constant(self.0.len(), 1.0))
    }

    fn dim(&self) -> usize {
        self.0.points()[0].dim()
    }
}

#[pymethods]
impl PyNet {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg: NetConfig = serde_json::from_str(text).map_err(json_err)?;
        MetricMeasureNet::try_from(cfg).map(PyNet).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[pyo3(signature = (phi, h = None))]
    fn kirchhoff(&self, py: Python<'_>, phi: &Bound<'_, PyAny>, h: Option<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
        let t = Trap::default();
        let phi = t.two_point(phi, self.dim())?;
        let h = self.matrix(h);
        t.finish(py.detach(|| (0..self.0.len()).map(|k| metric::net_kirchhoff(&self.0, &h, &phi, k)).collect()))
    }

    #[pyo3(signature = (f, h = None))]
    fn laplacian(&self, py: Python<'_>, f: &Bound<'_, PyAny>, h: Option<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
        let t = Trap::default();
        let f = t.scalar(f, self.dim())?;
        let h = self.matrix(h);
        t.finish(py.detach(|| (0..self.0.len()).map(|k| metric::net_laplacian(&self.0, &h, &f, k)).collect()))
    }

    fn frac_laplacian(&self, py: Python<'_>, f: &Bound<'_, PyAny>, alpha: f64) -> PyResult<Vec<f64>> {
        let t = Trap::default();
        let f = t.scalar(f, self.dim())?;
        t.finish(py.detach(|| {
            (0..self.0.len())
                .map(|k| metric::net_frac_laplacian(&self.0, alpha, &f, k))
                .collect()
        }))
    }
}

/// `{"value", "lower", "upper", "half_width"}` for `sum_{j != 0} |j|^{-n-alpha}`.
#[pyfunction]
fn lattice_constant(py: Python<'_>, n: usize, alpha: f64, radius: i64) -> PyResult<Bound<'_, PyDict>> {
    let c = lattice::frac_lattice_constant(n, alpha, radius).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("value", c.value)?;
    d.set_item("lower", c.lower())?;
    d.set_item("upper", c.upper())?;
    d.set_item("half_width", c.half_width)?;
    Ok(d)
}

#[pyfunction]
fn rho(x: f64, y: f64) -> PyResult<f64> {
    dyadic::rho(x, y).map_err(err)
}

#[pyfunction]
fn ball_measure(x: f64, r: f64) -> PyResult<f64> {
    dyadic::ball_measure(x, r).map_err(err)
}

#[pyfunction]
fn dyadic_laplacian(py: Python<'_>, j: i32, f: &Bound<'_, PyAny>, k: u64) -> PyResult<f64> {
    let t = Trap::default();
    let f = t.scalar(f, 1)?;
    t.finish(py.detach(|| dyadic::dyadic_laplacian(j, &f, k)))
}

#[pyfunction]
fn dyadic_frac_laplacian(
    py: Python<'_>,
    j: i32,
    alpha: f64,
    f: &Bound<'_, PyAny>,
    k: u64,
    window: u64,
) -> PyResult<(f64, f64)> {
    let t = Trap::default();
    let f = t.scalar(f, 1)?;
    let b = t.finish(py.detach(|| dyadic::dyadic_frac_laplacian(j, alpha, &f, k, window)))?;
    Ok((b.value, b.bound))
}

#[pyfunction]
fn cs_constant(s: f64) -> f64 {
    dyadic::cs_constant(s)
}

#[pyfunction]
fn kernel_eigenvalue(s: f64) -> f64 {
    dyadic::kernel_eigenvalue(s)
}

/// Terms as a JSON string, `(j, k, coef)` diagonal tuples or `(j, k, j2, k2, coef)` tuples.
fn haar2(terms: &Bound<'_, PyAny>) -> PyResult<HaarExpansion2> {
    if let Ok(text) = terms.extract::<String>() {
        return serde_json::from_str(&text).map_err(json_err);
    }
    let list: Vec<(HaarFunction, HaarFunction, f64)> = if let Ok(v) = terms.extract::<Vec<(i32, u64, f64)>>() {
        v.into_iter()
            .map(|(j, k, c)| (HaarFunction::new(j, k), HaarFunction::new(j, k), c))
            .collect()
    } else {
        let v: Vec<(i32, u64, i32, u64, f64)> = terms.extract()?;
        v.into_iter()
            .map(|(j, k, j2, k2, c)| (HaarFunction::new(j, k), HaarFunction::new(j2, k2), c))
            .collect()
    };
    HaarExpansion2::new(list).map_err(err)
}

/// Haar-diagonal Kirchhoff divergence; `constant` is `"stated"` or `"kernel"`.
#[pyfunction]
#[pyo3(signature = (s, terms, x, constant = "stated"))]
fn spectral_kirchhoff(s: f64, terms: &Bound<'_, PyAny>, x: f64, constant: &str) -> PyResult<f64> {
    let phi = haar2(terms)?;
    match constant {
        "stated" => dyadic::spectral_kirchhoff(s, &phi, x),
        "kernel" => dyadic::spectral_kirchhoff_kernel(s, &phi, x),
        other => return Err(PyValueError::new_err(format!("constant must be stated or kernel, got {other}"))),
    }
    .map_err(err)
}

#[pyfunction]
fn kernel_kirchhoff(py: Python<'_>, s: f64, terms: &Bound<'_, PyAny>, x: f64) -> PyResult<f64> {
    let phi = haar2(terms)?;
    py.detach(|| dyadic::kernel_kirchhoff(s, &phi, x)).map_err(err)
}

/// `{"value", "error_estimate", "fitted_rate", "far_tail_bounded"}`; `mode` is auto, regular or pv.
#[pyfunction]
#[pyo3(signature = (s, phi, x, mode = "auto"))]
fn frac_kir<'py>(
    py: Python<'py>,
    s: f64,
    phi: &Bound<'py, PyAny>,
    x: Vec<f64>,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = FracKernelSpec::new(x.len(), s).map_err(err)?;
    let t = Trap::default();
    let phi = t.two_point(phi, x.len())?;
    let eval = match mode {
        "auto" => continuum::frac_kir,
        "regular" => continuum::frac_kir_regular,
        "pv" => continuum::frac_kir_pv,
        other => return Err(PyValueError::new_err(format!("mode must be auto, regular or pv, got {other}"))),
    };
    let r = t.finish(py.detach(|| eval(&spec, &phi, &x)))?;
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("error_estimate", r.error_estimate)?;
    d.set_item("fitted_rate", r.fitted_rate)?;
    d.set_item("far_tail_bounded", r.far_tail_bounded)?;
    Ok(d)
}

#[pyfunction]
fn frac_bound(s: f64, phi: &str, dim: usize) -> PyResult<f64> {
    let spec = FracKernelSpec::new(dim, s).map_err(err)?;
    Ok(continuum::frac_bound(&spec, &builtins::two_point_field(phi, dim).map_err(err)?))
}

#[pyfunction]
fn classical_kir(py: Python<'_>, phi: &Bound<'_, PyAny>, x: Vec<f64>) -> PyResult<f64> {
    let t = Trap::default();
    let phi = t.two_point(phi, x.len())?;
    t.finish(py.detach(|| continuum::classical_kir(&phi, &x)))
}

#[pyfunction]
fn hilbert_kir_eps(py: Python<'_>, phi: &Bound<'_, PyAny>, x: f64, eps: f64) -> PyResult<f64> {
    let t = Trap::default();
    let phi = t.two_point(phi, 1)?;
    let spec = PVHilbertSpec::new(eps).map_err(err)?;
    t.finish(py.detach(|| continuum::hilbert_kir_eps(&spec, &phi, x)))
}

#[pyfunction]
fn hilbert_kir_limit(py: Python<'_>, phi: &Bound<'_, PyAny>, x: f64) -> PyResult<f64> {
    let t = Trap::default();
    let phi = t.two_point(phi, 1)?;
    t.finish(py.detach(|| continuum::hilbert_kir_limit(&phi, x)))
}

fn det_coupling(map: &Bound<'_, PyAny>, g: &str, h: f64) -> PyResult<DeterministicCoupling> {
    let g = builtins::density(g).map_err(err)?;
    let c = if let Ok(name) = map.extract::<String>() {
        let m = builtins::map(&name).map_err(err)?;
        let df = m.df.clone();
        let f = m.f.clone();
        DeterministicCoupling::from_1d(move |x| f(x)).with_jacobian(move |x| vec![vec![df(x[0])]])
    } else {
        let f = callable(map)?;
        DeterministicCoupling::from_1d(move |x| {
            Python::attach(|py| f.call1(py, (x,)).and_then(|v| v.extract::<f64>(py).map_err(PyErr::from)))
                .unwrap_or(f64::NAN)
        })
    };
    c.with_density(g).with_scale(h).map_err(err)
}

/// `(1/h) Phi(x, F(x))`.
#[pyfunction]
#[pyo3(signature = (map, phi, x, h = 1.0))]
fn deterministic_kir(py: Python<'_>, map: &Bound<'_, PyAny>, phi: &Bound<'_, PyAny>, x: f64, h: f64) -> PyResult<f64> {
    let c = det_coupling(map, "one", h)?;
    let t = Trap::default();
    let phi = t.two_point(phi, 1)?;
    t.finish(py.detach(|| couplings::deterministic_kir(&c, &phi, &[x])))
}

/// Positive-order divergence on side `"x"` or `"y"` for the coupling `y = F(x)` with density `g`.
#[pyfunction]
#[pyo3(signature = (map, phi, x, side = "x", g = "one"))]
fn positive_order_kir(
    py: Python<'_>,
    map: &Bound<'_, PyAny>,
    phi: &Bound<'_, PyAny>,
    x: f64,
    side: &str,
    g: &str,
) -> PyResult<f64> {
    let c = det_coupling(map, g, 1.0)?;
    let t = Trap::default();
    let phi = t.two_point(phi, 1)?;
    let r = match side {
        "x" => py.detach(|| couplings::positive_order_kir_x(&c, 0, &phi, &[x])),
        "y" => py.detach(|| couplings::positive_order_kir_y(&c, 0, &phi, &[x])),
        other => return Err(PyValueError::new_err(format!("side must be x or y, got {other}"))),
    };
    t.finish(r)
}

/// Independent coupling of density `g` with Lebesgue measure on `[-half_width, half_width]`.
#[pyfunction]
#[pyo3(signature = (g, phi, x, half_width = 1.0))]
fn independent_kir(py: Python<'_>, g: &str, phi: &Bound<'_, PyAny>, x: f64, half_width: f64) -> PyResult<f64> {
    let second = BoxDensity::lebesgue(vec![-half_width], vec![half_width]).map_err(err)?;
    let c = IndependentCoupling::new(builtins::density(g).map_err(err)?, Marginal::Density(second));
    let t = Trap::default();
    let phi = t.two_point(phi, 1)?;
    t.finish(py.detach(|| couplings::independent_kir(&c, &phi, &[x])))
}

fn family(name: &str, map: &str, alpha: f64, zeta: &str) -> PyResult<(ConvergenceFamily, &'static str)> {
    Ok(match name {
        "fd" => (convergence::family_fd(), "sq-diff"),
        "frac" => (convergence::family_frac(alpha, None).map_err(err)?, "diff-bump"),
        "poisson" => (convergence::family_poisson_cutoff(), "one"),
        "coupling" => {
            let (f, df) = builtins::family_map(map).map_err(err)?;
            (convergence::family_coupling(move |h, x| f(h, x), Some(df)), "scaled-diff")
        }
        "dichotomy" => (
            convergence::family_tail_dichotomy(builtins::tail_density(zeta).map_err(err)?),
            "bump-section",
        ),
        "area" => (convergence::family_gaussian_area(), "bump-section"),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown family '{other}' (expected fd, frac, poisson, coupling, dichotomy or area)"
            )))
        }
    })
}

fn report_dict<'py>(py: Python<'py>, r: &LimitReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("error_bar", r.error_bar)?;
    d.set_item("order", r.order)?;
    d.set_item("hs", r.hs.clone())?;
    d.set_item("values", r.values.clone())?;
    d.set_item("diffs", r.diffs.clone())?;
    d.set_item("orders", r.orders.clone())?;
    d.set_item("verdict", r.verdict.to_string())?;
    d.set_item("failure_level", r.failure_level)?;
    d.set_item("failure", r.failure.clone())?;
    Ok(d)
}

/// Evaluates a family along `h = h0 2^{-m}` and estimates the limit at `x`.
#[pyfunction]
#[pyo3(signature = (name, x, phi = None, h0 = 0.5, levels = 10, map = "pow1ph", alpha = 0.5, zeta = "compact"))]
#[allow(clippy::too_many_arguments)]
fn estimate_limit<'py>(
    py: Python<'py>,
    name: &str,
    x: f64,
    phi: Option<&Bound<'py, PyAny>>,
    h0: f64,
    levels: usize,
    map: &str,
    alpha: f64,
    zeta: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let (fam, default_phi) = family(name, map, alpha, zeta)?;
    let t = Trap::default();
    let phi = match phi {
        Some(p) => t.two_point(p, 1)?,
        None => builtins::two_point_field(default_phi, 1).map_err(err)?,
    };
    let r = t.finish(py.detach(|| convergence::estimate_limit(&fam, &phi, &[x], h0, levels)))?;
    let d = report_dict(py, &r)?;
    if let Some(c) = fam.claimed_limit(&phi, &[x]) {
        d.set_item("claimed_limit", c.map_err(err)?)?;
    }
    Ok(d)
}

/// Runs acceptance checks; each result is `{"id", "name", "passed", "detail"}`.
#[pyfunction]
#[pyo3(signature = (ids = None, inject_cs = None, seed = None))]
fn run_acceptance<'py>(
    py: Python<'py>,
    ids: Option<Vec<usize>>,
    inject_cs: Option<f64>,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    use kirlab::acceptance::{run_criterion, AcceptanceOptions, CRITERIA};
    let opts = AcceptanceOptions {
        seed: seed.unwrap_or(kirlab::division::DEFAULT_SEED),
        cs_override: inject_cs,
    };
    let ids = ids.unwrap_or_else(|| (1..=CRITERIA.len()).collect());
    let rows = py.detach(|| ids.iter().map(|&id| run_criterion(id, &opts)).collect::<Vec<_>>());
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("id", r.id)?;
            d.set_item("name", r.name)?;
            d.set_item("passed", r.passed)?;
            d.set_item("detail", &r.detail)?;
            Ok(d)
        })
        .collect()
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyLattice>()?;
    m.add_class::<PyNet>()?;
    m.add_function(wrap_pyfunction!(lattice_constant, m)?)?;
    m.add_function(wrap_pyfunction!(rho, m)?)?;
    m.add_function(wrap_pyfunction!(ball_measure, m)?)?;
    m.add_function(wrap_pyfunction!(dyadic_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(dyadic_frac_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(cs_constant, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_kirchhoff, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_kirchhoff, m)?)?;
    m.add_function(wrap_pyfunction!(frac_kir, m)?)?;
    m.add_function(wrap_pyfunction!(frac_bound, m)?)?;
    m.add_function(wrap_pyfunction!(classical_kir, m)?)?;
    m.add_function(wrap_pyfunction!(hilbert_kir_eps, m)?)?;
    m.add_function(wrap_pyfunction!(hilbert_kir_limit, m)?)?;
    m.add_function(wrap_pyfunction!(deterministic_kir, m)?)?;
    m.add_function(wrap_pyfunction!(positive_order_kir, m)?)?;
    m.add_function(wrap_pyfunction!(independent_kir, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_limit, m)?)?;
    m.add_function(wrap_pyfunction!(run_acceptance, m)?)?;
    let b = PyDict::new(m.py());
    b.set_item("scalar_fields", builtins::SCALAR_FIELDS.to_vec())?;
    b.set_item("two_point_fields", builtins::TWO_POINT_FIELDS.to_vec())?;
    b.set_item("maps", builtins::MAPS.to_vec())?;
    b.set_item("family_maps", builtins::FAMILY_MAPS.to_vec())?;
    b.set_item("densities", builtins::DENSITIES.to_vec())?;
    b.set_item("tail_densities", builtins::TAIL_DENSITIES.to_vec())?;
    m.add("BUILTINS", b)?;
    Ok(())
}

#[pymodule]
fn pykirlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
