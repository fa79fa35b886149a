"""Predicted bounds, evenness checks, exact bias, aggregation."""

import math

import numpy as np
import pytest

from derandalloc.analysis import (
    ExperimentPlan,
    Report,
    aggregate,
    check_level_evenness,
    check_prefix_evenness,
    chernoff_tail,
    exact_bias,
    predicted_goleft,
    predicted_heavy,
    predicted_uniform,
)
from derandalloc.dist import (
    BudgetExceededError,
    EpsBiasedSource,
    FullRandomSource,
    KWiseSource,
)
from derandalloc.family import UNIFORM_GREEDY, derive_params, make_choice_set
from derandalloc.gf2x import field
from derandalloc.schemes import allocate_uniform_greedy


def test_predicted_uniform():
    assert predicted_uniform(2**16, 4) == pytest.approx(2.0)
    assert predicted_uniform(2**16, 2) == pytest.approx(4.0)
    assert predicted_uniform(2**20, 2) == pytest.approx(math.log2(20))
    with pytest.raises(ValueError):
        predicted_uniform(2, 2)


def test_predicted_goleft():
    golden = (1 + math.sqrt(5)) / 2
    assert predicted_goleft(2**16, 2) == pytest.approx(4 / (2 * math.log2(golden)), abs=1e-9)
    # d = 3 uses phi_3 from the bisection solver
    p3 = predicted_goleft(2**16, 3)
    phi3 = 1.8392867552141612  # root of x^3 = 1 + x + x^2
    assert p3 == pytest.approx(4 / (3 * math.log2(phi3)), abs=1e-9)


def test_goleft_beats_uniform_everywhere():
    for n_log in (4, 5, 8, 16, 20, 30):
        for d in (2, 3, 4, 8):
            assert predicted_goleft(2**n_log, d) < predicted_uniform(2**n_log, d)


def test_predicted_heavy():
    assert predicted_heavy(2**16, 2**24, 4) == pytest.approx(512.0)
    assert predicted_heavy(2**16, 2**24, 0) == pytest.approx(256.0)
    for C in (0, 1, 3.5):
        assert predicted_heavy(2**10, 2**16, C) >= 2**6
    with pytest.raises(ValueError):
        predicted_heavy(2**16, 2**17, 4)  # below the heavy regime


def test_chernoff_tail():
    assert chernoff_tail(10, 1e-9) == pytest.approx(1.0)
    assert chernoff_tail(3, 1.0) == pytest.approx(math.exp(-1))
    assert chernoff_tail(256, 1.0) == pytest.approx(math.exp(-256 / 3))
    # monotone decreasing in both arguments
    assert chernoff_tail(50, 0.5) > chernoff_tail(60, 0.5)
    assert chernoff_tail(50, 0.5) > chernoff_tail(50, 0.6)
    with pytest.raises(ValueError):
        chernoff_tail(10, 0)
    with pytest.raises(ValueError):
        chernoff_tail(10, 1.5)


def test_experiment_plan_derived():
    plan = ExperimentPlan("uniform-greedy", "paper", 2**20, 2**20, 2, 2, 5, 0)
    assert plan.witness_height == 18  # ceil(log2 20 + log2 6 + 5 + 6)
    assert plan.leaf_threshold == 21
    assert plan.beta == pytest.approx(20 ** -0.2)
    heavy = ExperimentPlan("one-choice", "paper", 2**16, 2**24, 1, 2, 5, 0, a=2)
    assert heavy.beta == pytest.approx(4 * 4 * 4 * 0.0625)
    with pytest.raises(ValueError):
        ExperimentPlan("bogus", "paper", 4, 4, 2, 2, 1, 0)
    with pytest.raises(ValueError):
        ExperimentPlan("one-choice", "paper", 4, 4, 2, 2, 0, 0)


def _tiny_run(master=11, m=64):
    p = derive_params(2**6, m, 2, 2, UNIFORM_GREEDY, k_g_override=4)
    cs = make_choice_set(p, master)
    trace = allocate_uniform_greedy(np.arange(m), cs)
    return p, cs, trace


def test_prefix_evenness_empty_and_pure():
    p, cs, _ = _tiny_run()
    import derandalloc.schemes as schemes

    empty = schemes.allocate_uniform_greedy(np.array([], dtype=np.int64), cs)
    rep = check_prefix_evenness(empty, cs, slack=1.5)
    assert rep.passed and rep.observed == 0
    _, _, trace = _tiny_run()
    r1 = check_prefix_evenness(trace, cs, slack=1.5)
    r2 = check_prefix_evenness(trace, cs, slack=1.5)
    assert r1.to_json() == r2.to_json()
    assert set(r1.to_json()) == {"claim", "bound", "observed", "slack", "pass", "details"}


def test_prefix_evenness_degenerate_violation():
    # all balls forced into one prefix bin (zero-entropy hashes) is reported
    p, cs, trace = _tiny_run()

    class Degenerate:
        params = cs.params
        hashes = [type("H", (), {
            "prefix_block": staticmethod(lambda balls: np.zeros(len(balls), dtype=np.int64))
        })()]

    rep = check_prefix_evenness(trace, Degenerate(), slack=1.5)
    assert not rep.passed
    assert rep.details["violations"]


def test_level_evenness_rows():
    p, cs, trace = _tiny_run()
    outs = cs.hashes[0].level_outputs(trace.balls)
    rep = check_level_evenness(outs[: p.k], p)
    assert rep.details["rows"][0] == {
        "level": 0, "bound": 64.0, "observed": 64.0, "pass": True}
    assert len(rep.details["rows"]) == p.k + 1
    # uniform random level outputs pass comfortably at this scale
    rng = np.random.default_rng(0)
    fake = [rng.integers(0, 1 << b, size=4096) for b in p.level_bits[: p.k]]
    rep2 = check_level_evenness(fake, p)
    assert rep2.passed


def test_exact_bias_trivial_cases():
    assert exact_bias(FullRandomSource(3, 4)) == 0.0

    class ConstantSource:
        seed_bits = 4
        out_bits = 2

        def with_seed(self, s):
            return self

        def eval(self, ball):
            return 0b11

    assert exact_bias(ConstantSource(), balls=[0, 1]) == 1.0


def test_exact_bias_kwise_restricted_to_k_is_zero():
    src = KWiseSource(field(4), 2, 2, [0, 0])
    assert exact_bias(src, balls=[2, 9]) == 0.0
    assert exact_bias(src, balls=[5]) == 0.0


def test_exact_bias_aghp_small():
    ctx = field(5)
    src = EpsBiasedSource(ctx, 1, 1, n_positions=6)
    b = exact_bias(src)
    assert 0 < b <= 6 / 32


def test_exact_bias_budget():
    src = EpsBiasedSource(field(16), 1, 1, n_positions=8)
    with pytest.raises(BudgetExceededError):
        exact_bias(src, budget=1000)


def test_aggregate():
    rows = [{"max_load": 4, "collisions_of_max_witness": 0, "witness_ok": True},
            {"max_load": 6, "collisions_of_max_witness": 2, "witness_ok": True},
            {"max_load": 5, "collisions_of_max_witness": 1, "witness_ok": True}]
    st = aggregate(rows)
    assert st.mean == 5.0 and st.min == 4 and st.max == 6
    assert st.p50 == 5 and st.p99 == 6
    assert st.witness["max_collisions"] == 2
    assert st.witness["all_verified"] is True
    # permutation invariance and single-row degeneracy
    st_perm = aggregate(rows[::-1])
    assert (st_perm.mean, st_perm.min, st_perm.max) == (st.mean, st.min, st.max)
    one = aggregate([{"max_load": 2}])
    assert one.mean == one.min == one.max == 2.0
    assert sum(l * c for l, c in {2: 2, 0: 2}.items()) == 4
    with pytest.raises(ValueError):
        aggregate([])


def test_report_json_shape():
    rep = Report("demo", 2.0, 1.0, 1.5, True, {"x": 1})
    js = rep.to_json()
    assert js == {"claim": "demo", "bound": 2.0, "observed": 1.0,
                  "slack": 1.5, "pass": True, "details": {"x": 1}}
