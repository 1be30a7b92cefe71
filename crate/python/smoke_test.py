#!/usr/bin/env python3
"""Smoke test for the lsmc_py extension module.

Builds the cdylib if needed, imports it, and exercises each exposed
operation against known values.

Usage: python3 python/smoke_test.py
"""

import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def locate_library() -> pathlib.Path:
    candidates = [
        ROOT / "target" / profile / "liblsmc_py.so" for profile in ("release", "debug")
    ]
    for candidate in candidates:
        if candidate.exists():
            return candidate
    print("building lsmc-exposure-py ...")
    subprocess.run(
        ["cargo", "build", "-p", "lsmc-exposure-py"], cwd=ROOT, check=True
    )
    return candidates[1]


def import_module():
    lib = locate_library()
    staging = tempfile.mkdtemp(prefix="lsmc_py_")
    shutil.copy(lib, pathlib.Path(staging) / "lsmc_py.so")
    sys.path.insert(0, staging)
    import lsmc_py

    return lsmc_py


def main() -> int:
    m = import_module()

    # Analytic pricer against a known at-the-money value.
    atm = m.black_scholes(100.0, 100.0, 0.05, 0.2, 1.0, "call")
    assert abs(atm - 10.450583572185566) < 1e-12, atm
    assert m.black_scholes(120.0, 100.0, 0.05, 0.2, 0.0, "call") == 20.0

    # Keyed streams: reproducible, independent, antithetic pairs cancel.
    a = m.standard_normals(7, "inner", 3, 1, 1000)
    b = m.standard_normals(7, "inner", 3, 1, 1000)
    c = m.standard_normals(7, "inner", 3, 2, 1000)
    assert a == b
    assert a != c
    mean = sum(a) / len(a)
    assert abs(mean) < 0.15, mean
    pairs = m.standard_normals(7, "inner", 0, 0, 10, antithetic=True)
    assert all(pairs[i] + pairs[i + 1] == 0.0 for i in range(0, 10, 2))

    # GBM paths: positive, reproducible, right shape.
    times = [0.25, 0.5, 0.75, 1.0]
    paths = m.outer_paths(100.0, 0.1, 0.2, 0.05, times, 32, 11)
    assert len(paths) == 32 and all(len(p) == 4 for p in paths)
    assert all(v > 0.0 for p in paths for v in p)
    assert paths == m.outer_paths(100.0, 0.1, 0.2, 0.05, times, 32, 11)

    # Payoffs through the shared instrument configuration surface.
    asian = 'kind = "asian"\ndirection = "put"\nstrike = 110.0'
    payoff = m.discounted_payoff(asian, times, [100.0, 100.0, 100.0, 100.0], 0.0, 0.0, 100.0)
    assert abs(payoff - 10.0) < 1e-12, payoff
    barrier = 'kind = "barrier_uo"\ndirection = "call"\nbarrier = 120.0\nrebate = 2.0'
    knocked = m.discounted_payoff(barrier, times, [125.0, 90.0, 90.0, 90.0], 0.0, 0.0, 100.0)
    assert abs(knocked - 2.0) < 1e-12, knocked

    # Regression proxy: exact recovery of a polynomial relationship.
    xs = [i / 10.0 for i in range(30)]
    ys = [1.0 + 2.0 * x - 0.5 * x * x for x in xs]
    fit = m.fit_polynomial(xs, ys, 2)
    assert fit["rank"] == 3
    assert fit["sse"] < 1e-16
    assert all(abs(f - y) < 1e-9 for f, y in zip(fit["fitted"], ys))

    # Homoscedastic trace ratio equals rank / n.
    report = m.trace_ratio(xs, 2, [0.4] * len(xs))
    assert abs(report["ratio"] - 3.0 / 30.0) < 1e-10, report
    assert report["theoretical_ratio"] == 3.0 / 30.0

    # End-to-end exposure run from a config document.
    config = "\n".join(
        [
            "seed = 5",
            "[instrument]",
            'kind = "asian"',
            'direction = "put"',
            "strike = 110.0",
            "[plan]",
            "n_outer = 64",
            "p_inner = 4",
            "p_baseline = 128",
            "steps = [0, 11, 23]",
        ]
    )
    out = m.run_exposure(config, with_baseline=True)
    lsmc, base = out["lsmc"], out["baseline"]
    assert lsmc["method"] == "lsmc" and base["method"] == "baseline"
    assert len(lsmc["times"]) == 3 == len(lsmc["ee"]) == len(lsmc["pfe"])
    assert all(v >= 0.0 for v in lsmc["ee"] + lsmc["pfe"])
    assert len(out["variance"]) == 3
    assert all(r["ratio"] <= 1.0 + 1e-9 for r in out["variance"])
    rel = abs(lsmc["ee"][0] - base["ee"][0]) / base["ee"][0]
    assert rel < 0.25, rel
    # Determinism across calls.
    again = m.run_exposure(config, with_baseline=False)
    assert again["lsmc"]["ee"] == lsmc["ee"]

    # Error surfaces as Python exceptions.
    try:
        m.black_scholes(100.0, 100.0, 0.05, 0.2, -1.0, "call")
    except ValueError:
        pass
    else:
        raise AssertionError("negative maturity must raise")

    print("lsmc_py smoke test: all checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
