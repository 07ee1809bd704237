"""Smoke test for the plaplab Python bindings.

Build first:  pip install --no-build-isolation -e crates/py
Then run:     python python/smoke_test.py
"""

import json
import math
import pathlib
import tempfile

import plaplab_py as pl


def main():
    e = pl.exponents(2, 2.0)
    assert e["p_c"] == 2.0 and e["p_e"] is None

    g = pl.Grid.interval(-1.0, 1.0, 80, 0.5, 25)
    assert g.dim == 1 and g.n_cells == 80 and len(g.centers()) == 80

    omega = pl.SpatialMeasure.dirac(g, [0.0], 0.1)
    assert math.isclose(omega.total_mass, 0.1)

    u = pl.elliptic(omega, 2.0)
    # Green function of -u'' on (-1, 1) with pole at 0: (1 - |x|)/2
    err = max(abs(v - 0.1 * (1 - abs(c[0])) / 2) for v, c in zip(u, g.centers()))
    assert err < 0.1 * g.h, err
    holds, kappa = pl.enca(u, omega, 2.0)
    assert holds and 0.05 < kappa < 0.5, kappa

    w = pl.wolff(omega, 2.0)
    assert len(w) == 80 and min(w) > 0
    assert all(m >= 0 for m in pl.maximal(omega, 2.0, 0.5))

    mu = pl.SpaceTimeMeasure.product(omega, [1.0] * g.steps)
    heat = pl.parabolic(mu, 2.0)
    damped = pl.parabolic(mu, 2.0, absorption=2.0)
    assert all(a <= b + 1e-9 for a, b in zip(damped.step(g.steps - 1), heat.step(g.steps - 1)))
    assert damped.g_mass <= mu.total_variation + 1e-9

    trace = pl.power_source(omega, 2.0, 2.0, 0.025, kappa, 100.0)
    assert trace["status"] == "converged", trace["status"]

    try:
        pl.Grid.interval(1.0, -1.0, 10)
    except ValueError:
        pass
    else:
        raise AssertionError("reversed interval accepted")

    with tempfile.TemporaryDirectory() as tmp:
        out = pathlib.Path(tmp) / "e"
        assert pl.run_cli(["exponents", "--N", "3", "--p", "2", "--out", str(out)]) == 0
        assert json.loads((out / "constants.json").read_text())["exponents"]["p_e"] == 3.0
        assert pl.run_cli(["frobnicate"]) == 1

    print("smoke test passed")


if __name__ == "__main__":
    main()
