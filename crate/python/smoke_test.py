"""Smoke test for the Python bindings.

Build and install first:

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import oss_sim


def main():
    frac = oss_sim.sensing_fraction(4.5, 4.0, kernel="simple")
    assert abs(frac - (1 - (4.5**2 / (4.5**2 + 16)) ** 2)) < 1e-9, frac

    rate = oss_sim.pair_relaxation_rate([0, 0, -5], [0, 0, 1], [0, 0, 0])
    assert rate > 0

    sigma = oss_sim.gd_surface_density(204, 4, 0.88)
    assert 0.09 < sigma < 0.1, sigma

    st = oss_sim.ensemble_mean_rate(n_nv=50, seed=1)
    assert len(st["rates"]) == 50 and st["mean"] > 3 / (3 * 1.9e-3)

    taus = [1e-6 * 10 ** (k / 10) for k in range(45)]
    signal = oss_sim.synthesize_decay(88e-6, 0.75, taus)
    fit = oss_sim.fit_decay(taus, signal)
    assert abs(fit["t1"] / 88e-6 - 1) < 1e-6 and abs(fit["n"] - 0.75) < 1e-6, fit

    study = oss_sim.squeeze_study(["square"], n_trajectories=50, n_times=20)
    assert study[0]["label"] == "ideal" and study[0]["min_xi2"] < 1

    det = oss_sim.detection_time(1e-9)
    assert det is not None and det["total_s"] > 0

    with tempfile.TemporaryDirectory() as out:
        cfg = json.dumps({"assay": {"conc_count": 5}})
        manifest = oss_sim.run_experiment("assay-sweep", out, cfg, seed=3)
        names = {o["file"] for o in manifest["outputs"]}
        assert {"assay.csv", "assay_summary.json", "config.json"} <= names, names
        assert os.path.exists(os.path.join(out, "manifest.json"))
        try:
            oss_sim.run_experiment("assay-sweep", out, '{"assay": {"bogus": 1}}')
        except ValueError as e:
            assert "assay.bogus" in str(e)
        else:
            raise AssertionError("unknown key accepted")

    assert math.isfinite(rate)
    print("oss_sim", oss_sim.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
