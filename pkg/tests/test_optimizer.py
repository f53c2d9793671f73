import math

import numpy as np
import pytest

from ratealloc.errors import ContractError, ConvergenceError
from ratealloc.markov import AllocationChain, offered_service
from ratealloc.optimizer import (
    ProgramSpec,
    gradient,
    hessian,
    objective,
    solve_vstar,
    vstar_box,
    vstar_norm_bound,
)
from ratealloc.region import PolytopeRegion, discretize


def one_link(c=2.0):
    return discretize(PolytopeRegion.box([c]), levels_override=[[0, c]])


def test_objective_at_zero(mac_grid):
    assert objective(ProgramSpec(mac_grid, [0.4, 0.4]), [0, 0]) == pytest.approx(-math.log(8))
    assert objective(ProgramSpec(one_link(2.0), [1.0]), [0]) == pytest.approx(-math.log(2))


def test_objective_direct_sum(mac_grid):
    rng = np.random.default_rng(0)
    spec = ProgramSpec(mac_grid, [0.5, 0.3])
    for _ in range(10):
        v = rng.uniform(-5, 5, 2)
        direct = spec.lam @ v - math.log(sum(math.exp(r @ v) for r in mac_grid.vectors))
        assert objective(spec, v) == pytest.approx(direct, abs=1e-12)


def test_gradient_zero_at_origin(mac_grid):
    np.testing.assert_allclose(gradient(ProgramSpec(mac_grid, [0.4, 0.4]), [0, 0]), 0, atol=1e-15)


def test_gradient_matches_service(mac_grid):
    spec = ProgramSpec.shifted(mac_grid, [0.5, 0.2], 0.4)
    v = np.array([0.3, 1.1])
    s = offered_service(AllocationChain(mac_grid.space, v))
    np.testing.assert_allclose(gradient(spec, v), spec.lam + 0.1 - s, atol=1e-15)


def test_gradient_finite_differences(mac_grid):
    rng = np.random.default_rng(1)
    spec = ProgramSpec(mac_grid, [0.6, 0.6])
    h = 1e-5
    for _ in range(20):
        v = rng.uniform(-3, 3, 2)
        fd = np.array([(objective(spec, v + h * e) - objective(spec, v - h * e)) / (2 * h) for e in np.eye(2)])
        g = gradient(spec, v)
        assert np.allclose(fd, g, rtol=1e-6, atol=1e-9)


def test_hessian_negative_definite(mac_grid):
    rng = np.random.default_rng(2)
    spec = ProgramSpec(mac_grid, [0.6, 0.6])
    for _ in range(100):
        H = hessian(spec, rng.uniform(-4, 4, 2))
        eta = rng.normal(size=2)
        assert eta @ H @ eta < 0


def test_solve_at_uniform_point(mac_grid):
    rep = solve_vstar(ProgramSpec(mac_grid, [0.4, 0.4]))
    np.testing.assert_allclose(rep.v_star, 0, atol=1e-12)
    np.testing.assert_allclose(rep.s_at_vstar, [0.4, 0.4], atol=1e-12)


def test_solve_symmetric_point(mac_grid):
    rep = solve_vstar(ProgramSpec(mac_grid, [0.6, 0.6]))
    assert rep.grad_norm <= 1e-8
    np.testing.assert_allclose(rep.s_at_vstar, [0.6, 0.6], atol=1e-6)
    assert rep.v_star[0] == pytest.approx(rep.v_star[1], abs=1e-9)


def test_two_state_logistic_closed_form():
    c = 2.0
    rep = solve_vstar(ProgramSpec(one_link(c), [c / 4]))
    assert rep.v_star[0] == pytest.approx(math.log(1 / 3) / c, abs=1e-9)


def test_permutation_equivariance(mac_grid):
    a = solve_vstar(ProgramSpec(mac_grid, [0.5, 0.3])).v_star
    b = solve_vstar(ProgramSpec(mac_grid, [0.3, 0.5])).v_star
    np.testing.assert_allclose(a, b[::-1], atol=1e-8)


def test_starts_agree_and_gradient_path_converges(mac_grid):
    spec = ProgramSpec(mac_grid, [0.55, 0.35])
    a = solve_vstar(spec).v_star
    b = solve_vstar(spec, v0=[4.0, -3.0]).v_star
    c = solve_vstar(spec, newton=False, max_iter=20000).v_star
    np.testing.assert_allclose(a, b, atol=1e-6)
    np.testing.assert_allclose(a, c, atol=1e-6)


def test_outside_target_fails_loudly(mac_grid):
    with pytest.warns(RuntimeWarning):
        with pytest.raises(ConvergenceError) as info:
            solve_vstar(ProgramSpec(mac_grid, [0.9, 0.9]), max_iter=50)
    assert info.value.v_last is not None and info.value.iterations == 50


def test_boundary_target_flagged(mac_grid):
    # on the hull boundary s_v only approaches the target as v grows
    with pytest.warns(RuntimeWarning, match="not strictly inside"):
        rep = solve_vstar(ProgramSpec(mac_grid, [0.7, 0.7]))
    assert rep.interior_margin <= 1e-9
    assert np.abs(rep.v_star).max() > 10


def test_lambda_must_be_positive(mac_grid):
    with pytest.raises(ContractError):
        ProgramSpec(mac_grid, [0.0, 0.4])


def test_shifted_bound_and_box(mac_grid):
    eps = 0.4
    lam = np.array([0.45, 0.45])
    spec = ProgramSpec.shifted(mac_grid, lam, eps)
    rep = solve_vstar(spec)
    assert rep.bound_check is True
    assert rep.bound_value == pytest.approx(vstar_norm_bound(mac_grid, eps))
    lo, hi = vstar_box(mac_grid, spec.target, eps / (4 * mac_grid.k_hi))
    assert lo <= rep.v_star.min() and rep.v_star.max() <= hi


def test_objective_monotone_along_newton(mac_grid):
    spec = ProgramSpec(mac_grid, [0.62, 0.5])
    vals = [objective(spec, [0, 0])]
    for it in range(1, 8):
        try:
            rep = solve_vstar(spec, max_iter=it, check_interior=False)
            vals.append(rep.objective)
            break
        except ConvergenceError as exc:
            vals.append(objective(spec, exc.v_last))
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
