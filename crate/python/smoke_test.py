"""Smoke test for the dedpy extension module.

Build first:
    cargo build --release -p ded-py --features extension-module
    cp target/release/libdedpy.so python/dedpy.so
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import dedpy  # noqa: E402


def main():
    assert "ose_robust" in dedpy.estimators()

    gamma = dedpy.gating_frequencies([0.5], 1)
    assert abs(gamma[0] - 2.0 / 3.0) < 1e-12

    report = dedpy.bounds()
    reduction = 100.0 * (1.0 - report["bound_dead_time_free"] / report["bound"])
    assert abs(reduction - 75.22) < 1.0, reduction
    assert dedpy.bounds(dead_time=0)["ratio"] == 1.0

    model = dedpy.LidarModel(10.0, 1000)
    assert abs(sum(model.binned_profile(370.4)) - 1.0) < 1e-12
    theta0 = [1.0, 370.4, 0.003]
    stats = model.simulate(theta0, 500, 2_000_000, seed=4)
    assert stats.period == 1000 and stats.horizon == 2_000_000

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "stream.txt")
        stats.write_stream(path)
        again = dedpy.SufficientStats.read_stream(path)
        assert again == stats

    est = model.estimate(stats, "ose_robust")
    assert est["status"] == "converged", est
    err = dedpy.relative_error(est["theta"], theta0, 1000)
    assert err < 0.05, est
    assert math.isfinite(model.log_likelihood(stats, est["theta"]))
    assert len(model.score(stats, theta0)) == 3

    try:
        dedpy.SufficientStats.from_events([3, 5], 10, 5, 100)
    except ValueError as exc:
        assert "bin 5" in str(exc)
    else:
        raise AssertionError("dead-time violation was accepted")

    print("dedpy smoke test passed:", est["theta"])


if __name__ == "__main__":
    main()
