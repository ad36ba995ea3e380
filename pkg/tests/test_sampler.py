import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momrpd import sampler
from momrpd.sampler import (
    SamplerState,
    discounted_dispersion,
    find_new_weight,
    init,
    make_simplex,
    mean_pair_key,
    simplex_volume,
    update,
    write_audit_log,
)
from momrpd.statcosts import CostSampleSet, hypothesis_error
from momrpd.weights import WeightVector, midpoint

from oracles import PiecewiseStub, StepStub, random_piecewise_stub

REMARK = [[0, 5, 2], [5, 0, 2], [10, 10, 1], [6, 6, 1.1]]
E = WeightVector.basis


def const(w, mu, eta=3):
    return CostSampleSet.from_samples(w, np.tile(mu, (eta, 1)))


def stepped():
    """Pieces by first weight: [0,.3) .3-.45 .45-.75 [.75,1]."""
    return StepStub([0.3, 0.45, 0.75], [[10, 0], [6, 2], [3, 6], [0, 8]])


def test_init_two_and_three():
    s2 = init(2, PiecewiseStub([[0, 1], [1, 0]]), 0.1)
    assert s2.omega == [E(2, 0), E(2, 1)] and len(s2.simplexes) == 1 and s2.budget_used == 2
    s3 = init(3, PiecewiseStub(REMARK), 0.1)
    assert len(s3.simplexes[0]) == 3 and s3.budget_used == 3


def test_init_rejects_bad_arguments():
    with pytest.raises(ValueError):
        init(1, PiecewiseStub([[0.0]]), 0.1)
    with pytest.raises(ValueError):
        init(2, PiecewiseStub([[0, 1]]), 0.0)


def test_constant_objective_stops_after_basis():
    res = sampler.run(PiecewiseStub([[1.0, 2.0, 3.0]]), 3, 20, 0.1)
    assert len(res.omega) == 3 and res.budget_used == 3
    assert find_new_weight(res.state) is None


def manual_state(means, ledger=None):
    """Evaluated weights 0, .5 and 1 on the first coordinate with 1-D-like means."""
    ws = [E(2, 1), WeightVector.from_values([0.5, 0.5]), E(2, 0)]
    st_ = SamplerState(n=2, delta=0.1)
    for w, m in zip(ws, means):
        st_.evaluated[w.key] = const(w, [m, 0.0])
    st_.ledger = dict(ledger or {})
    return st_, ws


def test_dispersion_values():
    st_, ws = manual_state([0.0, 0.4, 1.0])
    assert discounted_dispersion(st_, (ws[0], ws[1])) == pytest.approx(0.4)
    key = mean_pair_key(st_.costs(ws[0]).mean, st_.costs(ws[1]).mean)
    st_.ledger[key] = 2
    assert discounted_dispersion(st_, (ws[0], ws[1])) == pytest.approx(0.1)
    same, ws2 = manual_state([0.0, 0.0, 1.0])
    assert discounted_dispersion(same, (ws2[0], ws2[1])) == 0.0


def test_first_candidate_is_centre():
    st_ = init(2, PiecewiseStub([[0, 1], [1, 0]]), 0.1)
    w, edge, d = find_new_weight(st_)
    assert w.as_list() == [0.5, 0.5] and d > 0


def test_stepped_walkthrough():
    res = sampler.run(stepped(), 2, 5, 0.1)
    cands = [(r["candidate"][0], r["accepted"]) for r in res.log[2:]]
    assert cands == [(0.5, True), (0.25, False), (0.375, True)]
    # the rejected candidate still split its segment
    assert any(WeightVector.from_values([0.25, 0.75]) in s for s in res.state.simplexes)


def test_update_splits_segment():
    stub = PiecewiseStub([[0, 1], [1, 0]])
    st_ = init(2, stub, 0.1)
    m = WeightVector.from_values([0.5, 0.5])
    update(st_, m, stub(m))
    assert sorted(st_.simplexes) == sorted([make_simplex([E(2, 0), m]), make_simplex([m, E(2, 1)])])


def test_update_rejects_non_midpoint():
    stub = PiecewiseStub([[0, 1], [1, 0]])
    st_ = init(2, stub, 0.1)
    w = WeightVector.from_values([0.25, 0.75])
    with pytest.raises(ValueError, match="midpoint"):
        update(st_, w, stub(w))


def test_shared_midpoint_splits_both_triangles():
    stub = PiecewiseStub(REMARK)
    st_ = init(3, stub, 1.0)
    m = midpoint(E(3, 0), E(3, 1))
    update(st_, m, stub(m))
    assert len(st_.simplexes) == 2
    shared = midpoint(m, E(3, 2))
    rec = update(st_, shared, stub(shared))
    assert len(rec["splits"]) == 2 and len(st_.simplexes) == 4


def test_run_with_budget_n_is_basis_only():
    res = sampler.run(PiecewiseStub(REMARK), 3, 3, 0.1)
    assert res.omega == [E(3, 0), E(3, 1), E(3, 2)] and len(res.log) == 3


def test_remark_toy_with_discount_finds_all():
    stub = PiecewiseStub(REMARK)
    res = sampler.run(stub, 3, 20, 0.1)
    found = {tuple(s.mean) for s in res.gamma}
    assert found == {tuple(map(float, m)) for m in REMARK}


def total_volume(state):
    return sum(simplex_volume(s) for s in state.simplexes)


@pytest.mark.parametrize("n", [2, 3])
def test_volume_and_budget_invariants(n):
    rng = np.random.default_rng(40 + n)
    stub, _ = random_piecewise_stub(rng, n)
    calls = []

    def ev(w):
        calls.append(w.key)
        return stub(w)

    st_ = init(n, ev, 1.0)
    base = total_volume(st_)
    for _ in range(30):
        found = find_new_weight(st_)
        if found is None:
            break
        w, _, _ = found
        before = st_.budget_used
        costs = st_.evaluated.get(w.key)
        if costs is None:
            costs = ev(w)
            st_.budget_used += 1
        update(st_, w, costs)
        assert st_.budget_used - before in (0, 1)
        assert total_volume(st_) == pytest.approx(base, rel=1e-12)
    assert len(calls) == len(set(calls)) == st_.budget_used == len(st_.evaluated)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_accepted_pairs_distinct_and_dead_edges_skipped(seed, n):
    stub, _ = random_piecewise_stub(np.random.default_rng(seed), n)
    res = sampler.run(stub, n, 24, 1.0)
    for rec in res.log:
        if rec["parent_edge"] is not None:
            a, b = (WeightVector.from_values(v) for v in rec["parent_edge"])
            assert stub.piece(a) != stub.piece(b)
        if rec["accepted"]:
            assert all(t["h"] <= 1.0 for t in rec["h_tests"])
    for i, later in enumerate(res.gamma):
        for earlier in res.gamma[:i]:
            assert hypothesis_error(later, earlier) <= 1.0


def test_audit_log_is_json_lines(tmp_path):
    res = sampler.run(stepped(), 2, 5, 0.1)
    path = tmp_path / "audit.jsonl"
    write_audit_log(path, res.log)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == len(res.log)
    assert {"candidate", "parent_edge", "D", "h_tests", "accepted", "splits"} <= set(rows[-1])


def test_deterministic_runs():
    a = sampler.run(PiecewiseStub(REMARK), 3, 15, 0.1)
    b = sampler.run(PiecewiseStub(REMARK), 3, 15, 0.1)
    assert a.log == b.log
