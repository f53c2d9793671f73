import math

import numpy as np
import pytest

from ratealloc.errors import ContractError
from ratealloc.io import read_trace_csv, write_trace_csv
from ratealloc.markov import AllocationChain, stationary, tv_distance
from ratealloc.optimizer import ProgramSpec, solve_vstar
from ratealloc.sim import (
    ArrivalProcess,
    ControllerConfig,
    SimScenario,
    SimState,
    controller_update,
    integrate_service,
    occupation_measure,
    run,
    step,
    theoretical_params,
)

from conftest import state_of


def mac_scenario(grid, lam, controller=None, q0=None, kind="bernoulli"):
    return SimScenario(
        space=grid.space,
        arrivals=ArrivalProcess(kind, lam),
        controller=controller or ControllerConfig(mode="nonadaptive", v0=(0.0, 0.0)),
        q0=q0,
        sample_every=5.0,
    )


# arrivals ----------------------------------------------------------------


def test_bernoulli_increments():
    proc = ArrivalProcess.bernoulli([0.3, 0.0], K=2.0)
    rngs = [np.random.default_rng(0), np.random.default_rng(1)]
    inc = proc.draw(0, 200000, rngs)
    assert set(np.unique(inc[:, 0])) == {0.0, 2.0}
    assert inc[:, 0].mean() == pytest.approx(0.3, abs=0.01)
    assert np.all(inc[:, 1] == 0)


def test_arrival_validation():
    with pytest.raises(ContractError):
        ArrivalProcess.bernoulli([1.5], K=1.0)
    with pytest.raises(ContractError):
        ArrivalProcess.bernoulli([-0.1])
    with pytest.raises(ContractError):
        ArrivalProcess("poisson", [0.1])


def test_trace_replay_then_zeros():
    proc = ArrivalProcess("trace", [0, 0], trace=[[1, 0], [0, 0.5]])
    np.testing.assert_array_equal(proc.draw(1, 3, None), [[0, 0.5], [0, 0], [0, 0]])


# integration -------------------------------------------------------------


def test_integrate_service_examples():
    served, Q = integrate_service([1.0], [2.0], 0.0, 1.0)
    assert served[0] == 1.0 and Q[0] == 0.0
    served, Q = integrate_service([0.0], [1.0], 0.0, 1.0)
    assert served[0] == 0.0 and Q[0] == 0.0
    with pytest.raises(ContractError):
        integrate_service([1.0], [1.0], 1.0, 0.5)


def test_integrate_service_against_riemann_oracle():
    rng = np.random.default_rng(4)
    Q = rng.uniform(0, 2, 3)
    cuts = np.sort(rng.uniform(0, 3, 4))
    times = np.concatenate([[0.0], cuts, [3.0]])
    rates = rng.uniform(0, 1.5, size=(len(times) - 1, 3))
    q_exact = Q.copy()
    for k in range(len(times) - 1):
        _, q_exact = integrate_service(q_exact, rates[k], times[k], times[k + 1])
    dt = 1e-4
    q_fine = Q.copy()
    for t in np.arange(0, 3, dt):
        k = np.searchsorted(times, t, side="right") - 1
        q_fine = np.maximum(q_fine - rates[k] * dt * (q_fine > 0), 0)
    assert np.abs(q_exact - q_fine).max() <= 1e-3


# controller --------------------------------------------------------------


def test_controller_examples():
    cfg = ControllerConfig(mode="theoretical", alpha=1.0, D=5.0, epsilon=0.0)
    np.testing.assert_array_equal(controller_update([0.0], [0.5], [0.5], [3.0], cfg), [0.0])
    np.testing.assert_array_equal(controller_update([5.0], [0.9], [0.1], [3.0], cfg), [5.0])
    np.testing.assert_array_equal(controller_update([-5.0], [0.1], [0.9], [3.0], cfg), [-5.0])
    heur = ControllerConfig(mode="heuristic", rule="log1pq")
    np.testing.assert_allclose(controller_update([3.0, 3.0], None, None, [0.0, math.e - 1], heur), [0, 1])
    fixed = ControllerConfig(mode="nonadaptive")
    np.testing.assert_array_equal(controller_update([2.0], [9.0], [0.0], [9.0], fixed), [2.0])


def test_epsilon_slack_only_in_theoretical_mode():
    cfg = ControllerConfig(mode="theoretical", alpha=1.0, D=5.0, epsilon=0.4)
    np.testing.assert_allclose(controller_update([0.0], [0.5], [0.5], [0.0], cfg), [0.1])


def test_controller_validation():
    with pytest.raises(ContractError):
        ControllerConfig(T=0)
    with pytest.raises(ContractError):
        ControllerConfig(mode="heuristic", rule="nope")


def test_theoretical_params_values():
    p = theoretical_params(2, 0.4, 1.0, 1.0, 0.4, 1.0)
    assert p.C == 8748
    assert p.alpha == pytest.approx(0.16 / 8748, rel=1e-14)
    assert p.T == pytest.approx(5.0**10, rel=1e-12)
    assert p.D == pytest.approx(16 / 0.4 * 2 / 0.4 * math.log(5) + 1)
    assert p.N == pytest.approx(7 * 243 * 2 * p.D**2 / (p.alpha * 0.16))
    Ds = [theoretical_params(2, e, 1, 1, 0.4, 1).D for e in (0.2, 0.3, 0.4, 0.6)]
    assert all(a > b for a, b in zip(Ds, Ds[1:]))


# single step -------------------------------------------------------------


def test_step_never_reaches_infeasible(mac_grid):
    chain = AllocationChain(mac_grid.space, np.zeros(2))
    assert chain.total_clock_rate() == pytest.approx(6.0)
    rng = np.random.default_rng(0)
    s = SimState(0.0, np.zeros(2), state_of(mac_grid, [0, 0]), np.zeros(2), np.zeros(2), np.zeros(2))
    stays = 0
    for _ in range(3000):
        nxt = step(s, chain, rng)
        stays += nxt.state == s.state
        assert tuple(mac_grid.vectors[nxt.state]) != (1.0, 1.0)
        s = nxt
    # self ticks happen and leave the state unchanged
    assert stays > 0


def test_step_applies_integral_arrivals(mac_grid):
    chain = AllocationChain(mac_grid.space, np.zeros(2))
    rng = np.random.default_rng(1)
    arr = ArrivalProcess("deterministic", [0.5, 0.25])
    s = SimState(0.0, np.zeros(2), 0, np.zeros(2), np.zeros(2), np.zeros(2))
    while s.t < 20:
        s = step(s, chain, rng, arr, None)
    np.testing.assert_allclose(s.arrivals, np.array([0.5, 0.25]) * s.next_slot)
    np.testing.assert_allclose(s.arrivals - s.served, s.Q, atol=1e-12)


# runs --------------------------------------------------------------------


def test_run_rejects_bad_horizon(mac_grid):
    sc = mac_scenario(mac_grid, [0.1, 0.1])
    with pytest.raises(ContractError):
        run(sc, 0.0, 1)
    with pytest.raises(ContractError):
        run(sc, -5.0, 1)


def test_run_is_bit_deterministic(mac_grid):
    sc = mac_scenario(mac_grid, [0.3, 0.3], ControllerConfig(T=10))
    a = run(sc, 2000.0, 99)
    b = run(sc, 2000.0, 99)
    for name in ("t", "Q", "r", "v", "arrivals", "served"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = run(sc, 2000.0, 100)
    assert not np.array_equal(a.Q, c.Q)


def test_zero_arrivals_drain(mac_grid):
    sc = mac_scenario(mac_grid, [0.0, 0.0], q0=np.array([3.0, 1.5]))
    tr = run(sc, 500.0, 5)
    np.testing.assert_array_equal(tr.Q[-1], [0.0, 0.0])
    np.testing.assert_allclose(tr.served[-1], [3.0, 1.5], rtol=0, atol=1e-12)
    assert np.all(tr.arrivals == 0)


def test_conservation_and_feasibility(mac_grid):
    sc = mac_scenario(mac_grid, [0.6, 0.6], ControllerConfig(T=10), q0=np.array([2.0, 0.0]))
    tr = run(sc, 5000.0, 8)
    delta = tr.arrivals - tr.served - (tr.Q - tr.q0)
    assert np.abs(delta).max() <= 1e-9
    assert np.all(tr.Q >= 0)
    keys = {tuple(v) for v in mac_grid.vectors.tolist()}
    assert all(tuple(r) in keys for r in tr.r.tolist())
    # every interval boundary is recorded
    updates = tr.t[np.array(tr.kind) == "update"]
    np.testing.assert_allclose(updates, 10.0 * np.arange(1, len(updates) + 1))


def test_update_happens_before_arrival_at_boundary(mac_grid):
    # one unit arrives at every integer time; the update at t=10 must not see the t=10 unit
    sc = SimScenario(
        mac_grid.space,
        ArrivalProcess("trace", [0, 0], trace=np.ones((100, 2))),
        ControllerConfig(T=10),
        sample_every=1000.0,
    )
    tr = run(sc, 10.5, 0)
    k = tr.kind.index("update")
    assert tr.t[k] == 10.0
    np.testing.assert_allclose(tr.v[k], np.log1p(tr.Q[k]))
    assert tr.arrivals[k, 0] == 10.0  # arrivals at 0..9 only


def test_occupation_matches_stationary(mac_grid):
    chain = AllocationChain(mac_grid.space, np.array([1.0, 1.0]))
    tr = occupation_measure(chain, 10**6, 42)
    assert tr.jumps == 10**6
    assert tv_distance(tr.occupation(), stationary(chain)) <= 0.02


def test_nonadaptive_throughput_matches_lambda(mac_grid):
    lam = np.array([0.6, 0.5])
    vstar = solve_vstar(ProgramSpec(mac_grid, lam)).v_star
    sc = SimScenario(
        mac_grid.space,
        ArrivalProcess.bernoulli(lam),
        ControllerConfig(mode="nonadaptive", v0=tuple(vstar)),
        sample_every=100.0,
    )
    tr = run(sc, math.inf, 1, max_events=10**6)
    thr = np.asarray(tr.summary["throughput"])
    assert np.all(np.abs(thr - lam) <= 0.02 * lam)


def test_adaptive_drift_keeps_up_with_arrivals(mac_grid):
    lam = np.array([0.5, 0.5])
    ctrl = ControllerConfig(mode="theoretical", T=50.0, alpha=0.5, D=20.0, epsilon=0.2)
    tr = run(SimScenario(mac_grid.space, ArrivalProcess.bernoulli(lam), ctrl), 1e5, 3)
    s_hat = np.array([iv[3] for iv in tr.intervals[len(tr.intervals) // 2:]])
    mean = s_hat.mean(axis=0)
    se = s_hat.std(axis=0) / math.sqrt(len(s_hat))
    assert np.all(mean >= lam - 3 * se)


def test_max_events_budget(mac_grid):
    chain = AllocationChain(mac_grid.space, np.zeros(2))
    tr = occupation_measure(chain, 1234, 0)
    assert tr.jumps == 1234 and tr.kind[-1] == "end"


def test_trace_csv_roundtrip(mac_grid, tmp_path):
    tr = run(mac_scenario(mac_grid, [0.3, 0.3], ControllerConfig(T=10)), 100.0, 2)
    rows = read_trace_csv(write_trace_csv(tmp_path / "t.csv", tr))
    assert list(rows[0]) == ["t", "link", "Q", "r", "v", "arrived", "served", "event_kind"]
    assert len(rows) == 2 * len(tr.t)
    assert float(rows[-1]["Q"]) == tr.Q[-1, 1]
