"""Smoke test for the pykirlab extension module.

Build first:  pip install --no-build-isolation -e crates/py
"""

import math

import numpy as np
import pykirlab as k


def main():
    v = k.spectral_kirchhoff(0.25, [(0, 0, 1.0)], 0.25)
    assert abs(v - 3.414214) < 1e-6, v

    g = k.GraphSystem([[0.0], [1.0], [2.0]], [1.0, 1.0, 1.0],
                      [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)])
    # Weighted sum of Kir over the nodes equals the total flux, zero for antisymmetric fields.
    kir = np.array(g.kirchhoff(lambda x, y: y - x))
    assert abs(kir.sum()) < 1e-12

    lat = k.Lattice(1, 0.25, 8)
    assert lat.fd_laplacian("sq", [3]) == 2.0

    # 1D lattice constant at alpha = 1 is 2 zeta(2) = pi^2 / 3.
    c = k.lattice_constant(1, 1.0, 128)
    assert c["lower"] <= math.pi ** 2 / 3 <= c["upper"]

    r = k.frac_kir(0.3, "bump", [0.5])
    assert r["error_estimate"] < 1e-8 and r["value"] < 0

    r = k.estimate_limit("coupling", 0.367879)
    assert r["verdict"] == "converged" and abs(r["value"] + 0.135335) < 1e-5

    rows = k.run_acceptance(ids=[2, 6])
    assert all(row["passed"] for row in rows), rows
    print("pykirlab smoke test passed")


if __name__ == "__main__":
    main()
