import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mohan.core import SelectorConfig
from mohan.reliability import ReliabilityState
from mohan.selector import (
    Feedback,
    Policy,
    Reason,
    SelectorState,
    baseline_select,
    composite_score,
    mohan_select,
    step,
)


def test_composite_worked_example():
    s = composite_score((40, 50), (0.9, 1.0), 0.5)
    assert s == pytest.approx((0.45, 0.50), rel=1e-12)


def test_composite_alpha_extremes():
    t, r = (10.0, 30.0, 20.0), (0.2, 0.9, 0.5)
    assert composite_score(t, r, 1.0) == pytest.approx((1 / 3, 1.0, 2 / 3))
    assert composite_score(t, r, 0.0) == pytest.approx((0.8, 0.1, 0.5))


def test_composite_all_zero_predictions():
    assert composite_score((0.0, 0.0), (0.5, 1.0), 0.5) == (0.25, 0.0)


@pytest.mark.parametrize(
    "t, r",
    [((1.0,), (0.5, 0.5)), ((), ()), ((-1.0, 2.0), (1.0, 1.0)), ((1.0, 2.0), (1.0, 1.5))],
)
def test_composite_errors(t, r):
    with pytest.raises(ValueError):
        composite_score(t, r, 0.5)


def test_hysteresis_hold():
    d = mohan_select(SelectorState(previous=0), (0.50, 0.46), theta=0.05)
    assert (d.selected, d.handover, d.reason) == (0, False, Reason.HYSTERESIS_HOLD)


def test_handover_at_threshold():
    # 0.50 - 0.45 evaluates to 0.04999999999999999
    d = mohan_select(SelectorState(previous=0), (0.50, 0.45), theta=0.05)
    assert (d.selected, d.handover, d.reason) == (1, True, Reason.HANDOVER)
    # exact equality with the gap also hands over
    gap = 0.75 - 0.5
    d = mohan_select(SelectorState(previous=0), (0.75, 0.5), theta=gap)
    assert d.handover


def test_first_decision():
    d = mohan_select(SelectorState(), (0.3, 0.2, 0.4), theta=0.05)
    assert (d.selected, d.handover, d.reason) == (1, False, Reason.FIRST_DECISION)


def test_kept_same_and_tie_prefers_previous():
    assert mohan_select(SelectorState(previous=1), (0.3, 0.2), 0.05).reason == Reason.KEPT_SAME
    d = mohan_select(SelectorState(previous=2), (0.2, 0.5, 0.2), 0.0)
    assert (d.selected, d.reason) == (2, Reason.KEPT_SAME)
    assert mohan_select(SelectorState(), (0.2, 0.2), 0.0).selected == 0


def test_previous_out_of_range():
    with pytest.raises(IndexError):
        mohan_select(SelectorState(previous=3), (0.1, 0.2), 0.05)
    with pytest.raises(ValueError):
        mohan_select(SelectorState(), (), 0.05)


def test_nearest_forever():
    s = SelectorState()
    rng = np.random.default_rng(0)
    for _ in range(50):
        d, s = baseline_select(Policy.NEAREST, s, tuple(rng.uniform(1, 100, 3)), nearest=2)
        assert d.selected == 2 and not d.handover


def test_round_robin_wraps():
    d, s = baseline_select(Policy.ROUND_ROBIN, SelectorState(rr_cursor=2), (1.0, 2.0, 3.0), nearest=0)
    assert d.selected == 2 and s.rr_cursor == 0


def test_lowest_latency_argmin():
    d, _ = baseline_select(Policy.LOWEST_LATENCY, SelectorState(), (44, 43.3, 50), nearest=0)
    assert d.selected == 1 and d.reason == Reason.BASELINE_POLICY


def test_baseline_errors():
    with pytest.raises(IndexError):
        baseline_select(Policy.NEAREST, SelectorState(), (1.0, 2.0), nearest=5)
    with pytest.raises(ValueError):
        baseline_select(Policy.MOHAN, SelectorState(), (1.0, 2.0), nearest=0)


def test_policy_parse():
    assert Policy.parse("roundrobin") is Policy.ROUND_ROBIN
    with pytest.raises(ValueError, match="valid names"):
        Policy.parse("random")


def fresh(n=2, cfg=SelectorConfig()):
    return ReliabilityState.initial(cfg.initial_scores(n), cfg.beta, cfg.delta)


def test_step_first_decision():
    d, s, r = step(Policy.MOHAN, SelectorConfig(), SelectorState(), fresh(), (40.0, 50.0))
    assert d.selected == 0 and not d.handover
    # alpha-weighted: 0.5 * 40/50 vs 0.5 * 1
    assert d.scores == pytest.approx((0.4, 0.5))
    assert s.previous == 0


def test_step_applies_feedback_before_scoring():
    cfg = SelectorConfig()
    d, s, r = step(Policy.MOHAN, cfg, SelectorState(previous=0), fresh(), (40.0, 41.0), Feedback(0, 100.0, 40.0))
    assert r.scores == pytest.approx((0.9, 1.0))
    # S0 = 0.5*40/41 + 0.05 = 0.5378, S1 = 0.5; gap 0.0378 < 0.05 holds
    assert d.reason == Reason.HYSTERESIS_HOLD


def test_step_deterministic():
    args = (Policy.MOHAN, SelectorConfig(), SelectorState(previous=1), fresh(3), (3.0, 2.0, 1.0), Feedback(1, 5.0, 2.0))
    assert step(*args) == step(*args)


def test_step_prediction_count_mismatch():
    with pytest.raises(ValueError):
        step(Policy.MOHAN, SelectorConfig(), SelectorState(), fresh(3), (1.0, 2.0))


def run_sequence(policy, cfg, rows):
    sel, rel, fb = SelectorState(), fresh(len(rows[0][0]), cfg), None
    out = []
    for predicted, observed in rows:
        d, sel, rel = step(policy, cfg, sel, rel, predicted, fb)
        fb = Feedback(d.selected, observed[d.selected], predicted[d.selected])
        out.append(d)
    return out


def random_rows(rng, n=200, j=3):
    pred = rng.uniform(10, 100, (n, j))
    obs = pred * rng.lognormal(0, 0.3, (n, j))
    return [(tuple(p), tuple(o)) for p, o in zip(pred, obs)]


@pytest.mark.parametrize("seed", range(5))
def test_theta_zero_is_argmin_of_scores(seed):
    rows = random_rows(np.random.default_rng(seed))
    for d in run_sequence(Policy.MOHAN, SelectorConfig(theta_handover=0.0), rows):
        assert d.scores[d.selected] == min(d.scores)


@pytest.mark.parametrize("seed", range(5))
def test_degenerate_mohan_equals_lowest_latency(seed):
    rows = random_rows(np.random.default_rng(seed))
    cfg = SelectorConfig(alpha=1.0, theta_handover=0.0, delta=math.inf)
    a = [d.selected for d in run_sequence(Policy.MOHAN, cfg, rows)]
    b = [d.selected for d in run_sequence(Policy.LOWEST_LATENCY, cfg, rows)]
    assert a == b


@pytest.mark.parametrize("seed", range(5))
def test_scale_invariance(seed):
    rows = random_rows(np.random.default_rng(seed))
    k = 3.7
    scaled = [(tuple(k * p for p in pr), tuple(k * o for o in ob)) for pr, ob in rows]
    cfg = SelectorConfig()
    a = [d.selected for d in run_sequence(Policy.MOHAN, cfg, rows)]
    b = [d.selected for d in run_sequence(Policy.MOHAN, cfg, scaled)]
    assert a == b


scores_st = st.lists(st.floats(0, 1), min_size=2, max_size=5)


@given(scores=scores_st, prev=st.integers(0, 4), t1=st.floats(0, 1), t2=st.floats(0, 1))
def test_hysteresis_monotone_pointwise(scores, prev, t1, t2):
    prev %= len(scores)
    lo, hi = sorted((t1, t2))
    s = SelectorState(previous=prev)
    if mohan_select(s, scores, hi).handover:
        assert mohan_select(s, scores, lo).handover


@given(
    t=st.lists(st.floats(0, 1e4), min_size=1, max_size=6).flatmap(
        lambda t: st.tuples(st.just(t), st.lists(st.floats(0, 1), min_size=len(t), max_size=len(t)))
    ),
    alpha=st.floats(0, 1),
)
def test_scores_in_unit_interval(t, alpha):
    predicted, rel = t
    for s in composite_score(predicted, rel, alpha):
        assert 0.0 <= s <= 1.0 + 1e-15
