import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dopfocus.detectors import Detection
from dopfocus.evaluation import (
    RESULT_HEADER, HitCriterion, SuiteConfig, format_table, run_suite, score, snr_gain_experiment,
    theorem_bound_suite, wilson_ci,
)
from dopfocus.scene import RadarParams, Target, random_scene


def _det(tau, nu):
    return Detection(tau, nu, 1.0, 0, 1.0)


@pytest.fixture
def crit(small):
    return HitCriterion.for_params(small)


def test_hit_criterion_defaults(small, crit):
    assert crit.a_time == pytest.approx(3 / small.bandwidth)
    assert crit.b_freq == pytest.approx(3 * 2 * math.pi / (small.pulse_count * small.pri))
    with pytest.raises(ValueError):
        HitCriterion(0.0, 1.0)


def test_score_identity(small, crit):
    tg = random_scene(small, 4, 0)
    r = score(tg, [_det(t.delay, t.doppler) for t in tg], crit)
    assert (r.hits, r.misses, r.false_alarms) == (4, 0, 0)
    assert max(map(abs, r.time_errors + r.freq_errors)) == 0.0


def test_score_boundary_is_miss(small, crit):
    t = Target(0.0, 0.0)  # offset representable exactly
    r = score([t], [_det(3 / small.bandwidth, 0.0)], crit)
    assert (r.hits, r.misses, r.false_alarms) == (0, 1, 1)
    r = score([t], [_det(2.999 / small.bandwidth, 0.0)], crit)
    assert r.hits == 1


def test_score_one_estimate_between_two_truths(small, crit):
    a, b = Target(2e-6, 0.0), Target(2e-6 + 2 / small.bandwidth, 0.0)
    r = score([a, b], [_det(2e-6 + 1 / small.bandwidth, 0.0)], crit)
    assert (r.hits, r.misses, r.false_alarms) == (1, 1, 0)


def test_score_wraps_delay_and_doppler(small, crit):
    t = Target(0.1 / small.bandwidth, -math.pi / small.pri + 0.1 * small.doppler_bin)
    d = _det(small.pri - 0.2 / small.bandwidth, math.pi / small.pri - 0.1 * small.doppler_bin)
    assert score([t], [d], crit).hits == 1


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_score_permutation_symmetric(seed):
    p = RadarParams(16, 10e-6, 20e6)
    c = HitCriterion.for_params(p)
    rng = np.random.default_rng(seed)
    tg = random_scene(p, 5, seed, min_separation=(0.0, 0.0))
    est = [_det((t.delay + rng.normal(0, 2 / p.bandwidth)) % p.pri,
                t.doppler + rng.normal(0, 2 * p.doppler_bin)) for t in tg]
    base = score(tg, est, c)
    pi, pj = rng.permutation(5), rng.permutation(5)
    perm = score([tg[i] for i in pi], [est[j] for j in pj], c)
    assert (perm.hits, perm.misses, perm.false_alarms) == (base.hits, base.misses, base.false_alarms)
    assert sorted(perm.time_errors) == sorted(base.time_errors)
    assert base.hits + base.misses == 5


@pytest.mark.parametrize("k,n", [(0, 10), (7, 10), (10, 10), (523, 1000)])
def test_wilson_closed_form(k, n):
    z = 1.959963984540054
    ph = k / n
    centre = (ph + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n))
    lo, hi = wilson_ci(k, n)
    assert lo == pytest.approx(max(0.0, centre - half), abs=1e-9)
    assert hi == pytest.approx(min(1.0, centre + half), abs=1e-9)


def test_snr_gain_p1():
    r = snr_gain_experiment(RadarParams(1, 10e-6, 20e6), 1e-8, 2000)
    assert r["ratio"] == pytest.approx(1.0, rel=1e-12)


def test_snr_gain_p100(desk):
    s2 = 2e-8
    r = snr_gain_experiment(desk, s2, 2500, n_kappa=4)  # 10^4 noise samples
    assert r["ratio"] == pytest.approx(100, rel=0.05)
    assert r["noise_var_focused"] == pytest.approx(desk.pulse_count * s2 / desk.pri, rel=0.05)


def test_theorem_bounds_small():
    rows = theorem_bound_suite(L_values=(1, 2), modes=(2,), trials=10)
    for r in rows:
        assert r["exact"] == 10, r
        assert r["max_delay_rel_err"] < 1e-9 and r["max_amp_rel_err"] < 1e-7
        assert r["ambiguity_max_diff"] < 1e-10 and r["ambiguity_scene_gap"] > 1e-3
    assert [(r["L"], r["P"], r["n_kappa"]) for r in rows] == [(1, 2, 2), (2, 4, 4)]


def _cfg(**kw):
    base = dict(params=RadarParams(16, 10e-6, 20e6), n_targets=2, n_kappa=20, snr_db=(-10, 0), trials=6,
                detectors=("focusing", "twostage", "classic", "classic-decimated"), workers=1)
    base.update(kw)
    return SuiteConfig(**base)


def test_suite_table_shape_and_determinism():
    a = run_suite(_cfg())
    assert len(a.rows) == 2 * 4 and a.complete
    ta = format_table(a.rows)
    assert ta.splitlines()[0] == ",".join(RESULT_HEADER)
    assert format_table(run_suite(_cfg()).rows) == ta
    assert format_table(run_suite(_cfg(workers=2)).rows) == ta
    assert all(0 <= r["ci_lo"] <= r["hit_rate"] <= r["ci_hi"] <= 1 for r in a.rows)


def test_suite_empty_grid():
    assert run_suite(_cfg(snr_db=())).rows == []


def test_suite_rejects_unknown_detector():
    with pytest.raises(ValueError, match="valid: focusing"):
        _cfg(detectors=("nope",))


def test_half_sample_consistency():
    res = run_suite(_cfg(trials=20, snr_db=(-15,), detectors=("focusing",)))
    L = 2
    hits = [res.per_trial[t][(-15.0, "focusing")].hits for t in range(20)]
    lo, hi = wilson_ci(sum(hits), L * 20)
    # half-sample estimates must be consistent with the full-sample interval widened to half size
    for half in (hits[:10], hits[10:]):
        hl, hh = wilson_ci(sum(half), L * 10)
        assert hl <= hi and hh >= lo
