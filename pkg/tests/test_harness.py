import json

import numpy as np
import pytest

from dynchecks.code import InvalidParameter
from dynchecks.harness import (
    ExperimentConfig,
    FitFailure,
    Point,
    Rate,
    crossing_estimate,
    eval_rule,
    expand,
    fit_threshold,
    load_configs,
    pairwise_crossings,
    rates_to_csv,
    read_rates_csv,
    run_montecarlo,
    run_point,
    scaling_model,
    sweep_report,
    wilson_interval,
)


def small(**kw):
    base = dict(family="local", L=[3, 4], p=[0.02, 0.04], R="d", shots=600, max_failures=0, seed=5, name="t")
    base.update(kw)
    return ExperimentConfig.from_dict(base)


@pytest.mark.parametrize("rule,d,want", [
    ("d+2", 4, 6), ("20*d", 6, 120), ("d//2+1", 8, 5), ("max(2, d//4)", 4, 2),
    ("full", 4, None), (None, 4, None), (7, 4, 7),
])
def test_eval_rule(rule, d, want):
    assert eval_rule(rule, d) == want


@pytest.mark.parametrize("rule", ["__import__('os')", "d**2", "d +", "x+1"])
def test_eval_rule_rejects(rule):
    with pytest.raises(InvalidParameter):
        eval_rule(rule, 4)


def test_config_validation(tmp_path):
    with pytest.raises(InvalidParameter):
        small(noise="weird")
    with pytest.raises(InvalidParameter):
        small(shots=0)
    with pytest.raises(InvalidParameter):
        ExperimentConfig.from_dict({"family": "local", "L": [3], "p": [0.1], "colour": 1})
    with pytest.raises(ValueError):
        small(family="hexagonal")
    path = tmp_path / "c.json"
    path.write_text(json.dumps([small().to_dict(), small(name="u").to_dict()]))
    assert [c.name for c in load_configs(path)] == ["t", "u"]
    with pytest.raises(OSError):
        load_configs(tmp_path / "missing.json")


def test_expand_skips_indivisible_sizes():
    pts, skipped = expand(small(family="fw", l=2, L=[4, 5, 6], W=[None, "d//2+1"]))
    assert sorted({p.L for p in pts}) == [4, 6]
    assert len(pts) == 2 * 2 * 2
    assert len(skipped) == 1
    assert {p.W for p in pts if p.L == 6} == {None, 4}


def test_point_seeds_are_distinct_and_stable():
    pts, _ = expand(small())
    seeds = [p.seed(5) for p in pts]
    assert len(set(seeds)) == len(seeds)
    assert seeds == [p.seed(5) for p in expand(small())[0]]
    assert seeds != [p.seed(6) for p in pts]


def test_zero_noise_has_zero_rate():
    pt = Point("local", 1, "offset", "phenomenological", "space-first", 3, 3, 0.0, None)
    r = run_point(pt, 500, 0)
    assert r.failures == 0 and r.shots == 500


def test_early_stop_on_failures():
    pt = Point("local", 1, "offset", "phenomenological", "space-first", 3, 3, 0.2, None)
    r = run_point(pt, 100_000, 0, max_failures=50)
    assert r.failures >= 50
    assert r.shots < 100_000
    assert r.shots % 4096 == 0


def test_wilson_interval_coverage():
    rng = np.random.default_rng(0)
    n, p = 1000, 0.05
    ks = rng.binomial(n, p, size=1000)
    hits = sum(lo <= p <= hi for lo, hi in (wilson_interval(int(k), n) for k in ks))
    assert hits / 1000 >= 0.93
    assert wilson_interval(0, 100)[0] == 0.0
    assert wilson_interval(0, 0) == (0.0, 1.0)


def synthetic(p_th=0.03, mu=1.2, shots=10**7, ds=(4, 6, 8)):
    rates = []
    for d in ds:
        for p in np.linspace(0.8 * p_th, 1.2 * p_th, 9):
            y = scaling_model((p, d), 1.5, 4.0, 0.2, p_th, mu)
            pt = Point("local", 1, "offset", "phenomenological", "space-first", d, d, float(p), None)
            rates.append(Rate(pt, shots, int(round(y * shots))))
    return rates


def test_fit_recovers_synthetic_threshold():
    rates = synthetic()
    f = fit_threshold(rates)
    assert f.p_th == pytest.approx(0.03, abs=1e-3)
    assert f.mu == pytest.approx(1.2, abs=0.1)
    assert crossing_estimate(rates) == pytest.approx(0.03, abs=1e-3)
    assert len(pairwise_crossings(rates)) == 3


def test_fit_failures():
    with pytest.raises(FitFailure):
        fit_threshold(synthetic(ds=(4, 6)))
    flat = [Rate(r.point, r.shots, 10) for r in synthetic()]
    with pytest.raises(FitFailure) as exc:
        crossing_estimate(flat)
    assert "distances" in exc.value.diagnostics


def test_csv_roundtrip_and_empty(tmp_path):
    assert rates_to_csv([]).count("\n") == 1
    rates = synthetic(ds=(4,))
    path = tmp_path / "r.csv"
    path.write_text(rates_to_csv([("x", r) for r in rates]))
    back = read_rates_csv(path)["x"]
    assert [(r.point, r.failures) for r in back] == [(r.point, r.failures) for r in rates]
    csv_path, _ = sweep_report([], tmp_path / "empty")
    assert csv_path.read_text().count("\n") == 1


def test_sweep_is_byte_identical(tmp_path):
    cfgs = [small(), small(name="w", W=["d//2+1"], L=[4])]
    a = sweep_report(cfgs, tmp_path / "a")
    b = sweep_report(cfgs, tmp_path / "b", workers=2)
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()
    man = json.loads(a[1].read_text())
    assert man["seeds"] == [5, 5]
    assert len(man["config_hashes"]) == 2


def test_rates_increase_with_noise():
    rates = run_montecarlo(small(L=[4], p=[0.01, 0.05], shots=2000))
    assert rates[0].rate < rates[1].rate
