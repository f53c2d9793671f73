import numpy as np
import pytest
from scipy.optimize import linprog

from ratealloc.errors import ContractError
from ratealloc.markov import AllocationChain, offered_service, stationary, stationary_from_generator, tv_distance
from ratealloc.sim import ArrivalProcess, ControllerConfig, SimScenario, occupation_measure, run
from ratealloc.whitespace import (
    WhitespaceNetwork,
    brute_force_generator,
    brute_force_schedules,
    independent_sets,
    is_feasible_schedule,
    link_rate,
    schedule_masks,
    state_space,
    whitespace_chain,
)


def three_link_net(radios=1, bands=2):
    """Links 0-1, 1-2 share node 1; link 2 is disjoint."""
    eff = [[1.0, 0.5], [2.0, 1.0], [1.0, 1.0]]
    interference = ([[0, 1], [1, 2]], [[0, 1]])
    if bands == 1:
        eff = [row[:1] for row in eff]
        interference = interference[:1]
    return WhitespaceNetwork(
        num_nodes=5,
        links=[[0, 1], [1, 2], [3, 4]],
        bandwidths=[1.0, 2.0][:bands],
        efficiency=eff,
        interference=interference,
        radios=[radios] * 5,
    )


def aligned(space, schedules):
    """State ids of ``schedules`` (band bitmask rows) in ``space``."""
    masks = schedule_masks(space)
    index = {tuple(m): k for k, m in enumerate(masks.tolist())}
    return np.array([index[tuple(s)] for s in schedules.tolist()])


def test_link_rate_examples():
    net = WhitespaceNetwork(2, [[0, 1]], [1.0, 3.0], [[1.0, 2.0]], ([], []), [2, 2])
    assert link_rate(net, [[0, 0]], 0) == 0.0
    assert link_rate(net, [[1, 1]], 0) == 7.0
    single = WhitespaceNetwork(2, [[0, 1]], [1.0], [[0.8]], ([],), [1, 1])
    assert link_rate(single, [[1]], 0) == pytest.approx(0.8)


def test_feasibility_examples():
    net = three_link_net(radios=2)
    assert is_feasible_schedule(net, np.zeros((3, 2)))
    # links 0 and 1 interfere on band 0
    assert not is_feasible_schedule(net, [[1, 0], [1, 0], [0, 0]])
    assert is_feasible_schedule(net, [[1, 0], [0, 1], [0, 0]])
    # line network 0-1-2 with one radio at node 1: two link-band pairs there
    line = WhitespaceNetwork(3, [[0, 1], [1, 2]], [1.0, 1.0], [[1, 1], [1, 1]], ([], []), [1, 1, 1])
    assert not is_feasible_schedule(line, [[1, 0], [0, 1]])
    assert is_feasible_schedule(line, [[1, 0], [0, 0]])
    with pytest.raises(ContractError):
        is_feasible_schedule(net, np.zeros((2, 2)))


def test_interference_is_symmetrized():
    a = WhitespaceNetwork(4, [[0, 1], [2, 3]], [1.0], [[1], [1]], ([[0, 1]],), [1] * 4)
    b = WhitespaceNetwork(4, [[0, 1], [2, 3]], [1.0], [[1], [1]], ([[1, 0]],), [1] * 4)
    assert a.interference == b.interference
    assert not is_feasible_schedule(b, [[1], [1]])


def test_network_validation():
    with pytest.raises(ContractError):
        WhitespaceNetwork(2, [[0, 0]], [1.0], [[1]], ([],), [1, 1])
    with pytest.raises(ContractError):
        WhitespaceNetwork(2, [[0, 1]], [0.0], [[1]], ([],), [1, 1])
    with pytest.raises(ContractError):
        WhitespaceNetwork(2, [[0, 1]], [1.0], [[1]], ([],), [0, 1])


def test_candidate_subsets_respect_budget():
    net = three_link_net(radios=1)
    assert net.candidate_subsets(0).tolist() == [0, 1, 2]
    net2 = three_link_net(radios=2)
    assert net2.candidate_subsets(0).tolist() == [0, 1, 2, 3]


@pytest.mark.parametrize("radios", [1, 2])
def test_state_space_equals_brute_force(radios):
    net = three_link_net(radios)
    space = state_space(net)
    brute = brute_force_schedules(net)
    assert sorted(map(tuple, schedule_masks(space).tolist())) == sorted(map(tuple, brute.tolist()))


@pytest.mark.parametrize("radios", [1, 2])
def test_stationary_matches_generator(radios):
    net = three_link_net(radios)
    space = state_space(net)
    v = np.array([0.4, -0.3, 0.8])
    scheds, rates, Q = brute_force_generator(net, v)
    pi_brute = stationary_from_generator(Q)
    pi = stationary(whitespace_chain(net, v, space))
    assert tv_distance(pi[aligned(space, scheds)], pi_brute) <= 1e-10
    # the exponential form, evaluated directly
    w = np.exp(rates @ v)
    assert tv_distance(pi_brute, w / w.sum()) <= 1e-10


def test_two_links_one_shared_band():
    net = WhitespaceNetwork(4, [[0, 1], [2, 3]], [1.0, 1.0], [[1, 2], [2, 1]], ([[0, 1]], []), [1] * 4)
    scheds, rates, Q = brute_force_generator(net, [0.5, 1.0])
    # each link: idle, band 0, band 1; both on band 0 forbidden
    assert len(scheds) == 8
    space = state_space(net)
    pi = stationary(whitespace_chain(net, [0.5, 1.0], space))
    assert tv_distance(pi[aligned(space, scheds)], stationary_from_generator(Q)) <= 1e-10


def test_single_link_moves_and_detailed_balance():
    net = three_link_net(2)
    chain = whitespace_chain(net, [0.2, 0.7, -0.4])
    masks = schedule_masks(chain.space)
    changed = (masks[chain.src] != masks[chain.dst]).sum(axis=1)
    assert np.all(changed == 1)
    pi = stationary(chain)
    Q = chain.generator()
    F = pi[:, None] * Q
    np.fill_diagonal(F, 0)
    assert np.all(np.abs(F - F.T) <= 1e-12 * np.maximum(np.abs(F), np.abs(F.T)) + 1e-300)


def test_single_band_reduces_to_independent_sets():
    net = three_link_net(radios=1, bands=1)
    space = state_space(net)
    ind = independent_sets(3, net.interference[0])
    assert sorted(map(tuple, schedule_masks(space).tolist())) == sorted(map(tuple, ind.tolist()))
    v = np.array([0.3, 0.1, -0.2])
    pi = stationary(whitespace_chain(net, v, space))
    w = np.exp((ind * net.efficiency[:, 0] * net.bandwidths[0]) @ v)
    assert tv_distance(pi[aligned(space, ind)], w / w.sum()) <= 1e-12


def test_simulated_service_matches_offered():
    net = three_link_net(2)
    chain = whitespace_chain(net, [0.5, -0.2, 0.3])
    tr = occupation_measure(chain, 10**6, 7)
    s_emp = tr.offered / tr.end_time
    s = offered_service(chain)
    assert np.all(np.abs(s_emp - s) <= 0.02 * s)


def test_adaptive_stabilizes_at_ninety_percent():
    net = three_link_net(2)
    space = state_space(net)
    V = space.vectors
    K = V.shape[0]
    # largest t with t * (1, 1, 1) in the convex hull of the schedule rates
    res = linprog(
        np.r_[np.zeros(K), -1.0],
        A_ub=np.c_[-V.T, np.ones(3)],
        b_ub=np.zeros(3),
        A_eq=np.r_[np.ones(K), 0.0][None],
        b_eq=[1.0],
        bounds=[(0, None)] * (K + 1),
    )
    t_max = res.x[-1]
    lam = 0.9 * t_max * np.ones(3)
    K_arr = float(np.ceil(lam.max()))
    sc = SimScenario(space, ArrivalProcess.bernoulli(lam, K=K_arr), ControllerConfig(T=10))
    tr = run(sc, 1e5, 11)
    assert max(tr.summary["queue_slope"]) <= 0.05
    assert tr.conservation_error() <= 1e-9
