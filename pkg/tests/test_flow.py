import numpy as np
import pytest

from choquard import Domain, dirichlet_inner_product, make_grid, run_flow, seed_field
from choquard.flow import alarm_threshold, flow_step, level_classification


@pytest.fixture(scope="module")
def state(consts3_fast):
    dom = Domain.ball()
    g = make_grid(dom, 1 / 8)
    return seed_field("single-bubble", dom, g, 1.0, lam=3.0, consts=consts3_fast)


def test_seed_on_sphere(state):
    assert state.u.norm1() == pytest.approx(1.0, abs=1e-12)
    assert np.all(state.u.values >= 0)


def test_step_decreases_J(state):
    nxt = flow_step(state)
    assert nxt.J <= state.J
    assert nxt.steps == 1
    assert abs(dirichlet_inner_product(nxt.u, nxt.u) - 1.0) < 1e-10


def test_run_flow_invariants(state, consts3_fast):
    summ = run_flow(state, max_steps=15, snapshot_every=5, consts=consts3_fast)
    Js = [J for _, J, _ in summ.state.J_history]
    assert all(b <= a for a, b in zip(Js, Js[1:]))
    assert summ.status in ("max-steps", "alarm", "stagnation")
    assert summ.snapshots[0][0] == 0 and summ.snapshots[-1][0] == summ.state.steps


def test_random_seed_reproducible(consts3_fast):
    dom = Domain.ball()
    g = make_grid(dom, 1 / 6)
    a = seed_field("random-bump", dom, g, seed=5, consts=consts3_fast)
    b = seed_field("random-bump", dom, g, seed=5, consts=consts3_fast)
    assert np.array_equal(a.u.values, b.u.values)


def test_level_and_alarm(consts3_fast):
    S = consts3_fast.S_tilde_HL
    assert level_classification(1.1 * S, consts3_fast) == 1
    assert level_classification(16.5 * S, consts3_fast) == 2
    g = make_grid(Domain.ball(), 1 / 16)
    assert alarm_threshold(g) == pytest.approx(0.5 * 16 ** 0.5)
