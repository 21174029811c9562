use pyo3::prelude::*;
use pyo3::types::PyModule;

fn with_module(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = PyModule::new(py, "pykirlab").unwrap();
        pykirlab::register(&m).unwrap();
        let globals = pyo3::types::PyDict::new(py);
        globals.set_item("k", m).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn haar_spot_value() {
    with_module(c"assert abs(k.spectral_kirchhoff(0.25, [(0, 0, 1.0)], 0.25) - 3.414214) < 1e-6");
}

#[test]
fn graph_from_lists_and_json_agree() {
    with_module(c"
g = k.GraphSystem([[0.0], [1.0], [3.0]], [1.0, 2.0, 1.0], [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 0.5), (2, 1, 0.5)])
h = k.GraphSystem.from_json(g.to_json())
assert len(h) == 3
assert g.kirchhoff('sq-diff') == h.kirchhoff(lambda x, y: (y - x) ** 2)
assert g.is_harmonic(lambda x: 1.0)[0]
");
}

#[test]
fn python_exceptions_propagate() {
    with_module(c"
def boom(x, y):
    raise RuntimeError('boom')
try:
    k.frac_kir(0.3, boom, [0.0])
except RuntimeError as e:
    assert 'boom' in str(e)
else:
    raise AssertionError('no error')
try:
    k.frac_kir(0.3, 'nope', [0.0])
except ValueError:
    pass
else:
    raise AssertionError('no error')
try:
    k.deterministic_kir('sqrt', 'sq-diff', -1.0)
except ArithmeticError:
    pass
else:
    raise AssertionError('no error')
");
}

#[test]
fn limits_and_lattice() {
    with_module(c"
r = k.estimate_limit('coupling', 0.367879)
assert r['verdict'] == 'converged' and abs(r['value'] + 0.135335) < 1e-5
lat = k.Lattice(1, 0.5, 4)
assert lat.fd_laplacian('sq', [1]) == 2.0
c = k.lattice_constant(1, 1.0, 64)
assert c['lower'] <= 3.2898681336964524 <= c['upper']
assert 'bump' in k.BUILTINS['scalar_fields']
");
}
