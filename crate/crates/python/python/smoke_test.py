"""Smoke test for the pycocycle extension.

Imports an installed `pycocycle`, or loads the library built by
`cargo build -p cocycle-lab-py --release --features extension-module`.
"""

import importlib.machinery
import importlib.util
import os
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parents[3]


def load():
    try:
        import pycocycle

        return pycocycle
    except ImportError:
        pass
    candidates = [os.environ.get("PYCOCYCLE_LIB")] + [
        str(ROOT / "target" / profile / name)
        for profile in ("release", "debug")
        for name in ("libpycocycle.so", "libpycocycle.dylib", "pycocycle.dll")
    ]
    for path in candidates:
        if path and os.path.exists(path):
            loader = importlib.machinery.ExtensionFileLoader("pycocycle", path)
            spec = importlib.util.spec_from_file_location("pycocycle", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            sys.modules["pycocycle"] = module
            return module
    raise SystemExit("pycocycle not found; build it with cargo first")


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    pc = load()

    d = pc.MarkovMatrix.exact("doubling", 8)
    assert len(d) == 8
    assert d.markov_check()[0]
    f = [2.0] + [0.0] * 7
    pf = d.apply(f)
    assert close(sum(pf) / 8, sum(f) / 8)
    g = [float(i) for i in range(8)]
    lhs = sum(a * b for a, b in zip(pf, g)) / 8
    rhs = sum(a * b for a, b in zip(f, d.dual_apply(g))) / 8
    assert close(lhs, rhs)
    assert all(close(v, 1.0) for v in d.power(3).apply([1.0] * 8))

    k = pc.MarkovMatrix.from_rows([[0.0, 1.0], [1.0, 0.0]])
    assert k.to_dense() == [[0.0, 1.0], [1.0, 0.0]]

    doubling = pc.Cocycle([pc.MarkovMatrix.exact("doubling", 16)])
    assert all(doubling.mixing(horizon=20).values())
    ex = doubling.exactness(horizon=20)
    assert ex["exact"] and ex["agreement"]
    assert doubling.periodicity(horizon=20)["r"] == 1

    swap = pc.Cocycle([pc.MarkovMatrix.from_rows([[0, 0, .5, .5], [0, 0, .5, .5], [.5, .5, 0, 0], [.5, .5, 0, 0]])])
    per = swap.periodicity()
    assert per["r"] == 2 and per["rho"][0] == "(0 1)"
    assert not swap.exactness()["exact"]

    alt = pc.Cocycle([pc.MarkovMatrix.exact("doubling", 16), pc.MarkovMatrix.exact("tent", 16)])
    assert len(alt.compose(1, 3)) == 16

    rows = pc.counterexample(8, 16)
    assert len(rows) == 17
    assert all(close(v, 0.5) and overlap == 0.0 for n, v, overlap in rows if n >= 1)

    scen = pc.Scenario.parse('[space]\nn = 16\n[operators.D]\nmap = "doubling"\n[cocycle]\ntable = ["D"]\n', "mini")
    assert scen.name == "mini" and scen.cells == 16
    rep = scen.report()
    assert rep["consistent"] and rep["exact"] and rep["r"] == 1
    assert "fail" not in rep["checks"].values()

    try:
        pc.Scenario.parse('[space]\nn = 4\n[operators.A]\nmap = "identity"\n[cocycle]\ntable = ["P9"]\n')
    except ValueError as e:
        assert "P9" in str(e)
    else:
        raise AssertionError("unresolved reference accepted")

    assert pc.run_cli(["run-counterexample", "--k", "2", "--out", os.devnull]) == 0
    print("pycocycle smoke test passed")


if __name__ == "__main__":
    main()
