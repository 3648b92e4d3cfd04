"""Smoke test for the pymtar extension: simulate, fit, criteria, residuals, forecast, config run."""

import json
import math
import os
import sys
import tempfile

import pymtar


def main():
    assert "gaussian" in pymtar.FAMILIES

    data = pymtar.simulate("m2", 250, family="gaussian", seed=3)
    y, z = data["y"], data["z"]
    assert len(y) == 250 and len(y[0]) == 2 and len(z) == 250
    again = pymtar.simulate("m2", 250, family="gaussian", seed=3)
    assert again == data, "simulation must be reproducible"

    fit = pymtar.fit(y, z, l=3, p=1, h_max=2, iterations=400, burn_in=100, seed=1)
    summary = fit.summary()
    assert summary["draws"] == 300
    assert json.loads(fit.summary_json()) == summary

    crit = fit.criteria()
    for name in ("dic", "waic"):
        assert math.isfinite(crit[name]["value"])
        assert abs(crit[name]["value"] - crit[name]["hat"] - 2 * crit[name]["penalty"]) < 1e-6

    labels, draws = fit.labels(), fit.draws()
    assert len(draws) == 300 and len(draws[0]) == len(labels)
    assert "theta1[1,1]" in labels and "h" in labels

    times, resid = fit.residuals()
    assert len(times) == len(resid) == 248 and times[0] == 3

    fc = fit.forecast([2.0, 3.5], level=0.9, seed=4)
    assert len(fc["mean"]) == 2
    for lo_row, hi_row in zip(fc["lower"], fc["upper"]):
        assert all(lo <= hi for lo, hi in zip(lo_row, hi_row))

    try:
        pymtar.fit(y, z, l=0)
    except ValueError:
        pass
    else:
        raise AssertionError("l = 0 should be rejected")

    with tempfile.TemporaryDirectory() as d:
        cfg = os.path.join(d, "sim.cfg")
        with open(cfg, "w") as f:
            f.write(f"design = m1\nlength = 120\nout_dir = {os.path.join(d, 'out')}\n")
        files = pymtar.run_config(cfg, "simulate")
        assert any(p.endswith("data.csv") for p in files)

    print("pymtar smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
