import math

import pytest

import floating_gossip as fg


def test_resolved_defaults():
    cfg = fg.resolve_config()
    assert cfg["model_count"] == 1
    assert cfg["model_size"] == 1e4
    assert cfg["transfer_time"] == pytest.approx(1e-3)


def test_unknown_key_raises():
    with pytest.raises(fg.FgError, match="UnknownKey"):
        fg.resolve_config({"speeed": 1.0})


def test_analytic_defaults():
    out = fg.analytic(staleness_samples=5000)
    sol = out["solution"]
    assert sol["stable"] is True
    assert 0.5 < sol["a"] <= 1.0
    assert len(out["curve"]["tau"]) == len(out["curve"]["o"])
    assert out["staleness"]["F_lower"] >= 10.0


def test_unstable_point_is_reported():
    out = fg.analytic({"obs_rate": 30.0, "model_count": 10}, staleness_samples=1000)
    assert out["solution"]["stable"] is False


def test_contact_model_round_trip():
    cm = fg.exponential_contact_model()
    assert math.isclose(sum(cm["duration_hist"]["mass"]), 1.0, abs_tol=1e-9)
    a = fg.analytic(contact_model=cm, staleness_samples=1000)["solution"]["a"]
    b = fg.analytic(staleness_samples=1000)["solution"]["a"]
    assert a == pytest.approx(b)


def test_simulation_is_reproducible():
    cfg = {"n_total": 60}
    x = fg.simulate(cfg, runs=2, seed=3, slots=400, threads=1)
    y = fg.simulate(cfg, runs=2, seed=3, slots=400, threads=2)
    assert x == y
    assert len(x["runs"]) == 2
    assert 0.0 <= x["aggregate"]["a_hat"] <= 1.0
    assert fg.simulate(cfg, runs=1, seed=3, slots=400)["aggregate"] is None


def test_stability_map_shape():
    cells = fg.stability_map([1, 2], [0.01, 1.0, 100.0])
    assert len(cells) == 6
    assert cells[0]["stable"] is True
    assert cells[-1]["stable"] is False
