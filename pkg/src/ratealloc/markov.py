"""The rate-allocation CTMC and its mixing / conductance toolkit.

States are feasible rate vectors ``r``.  A transition changes exactly one
link ``i`` to a new option; its rate is ``exp(r_new_i * v_i)``, i.e. it
depends only on the destination level.  The stationary law is the
product form ``pi_v(r) ~ exp(r . v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.special import logsumexp

from .errors import CapacityError, ContractError, SupportError
from .statespace import StateSpace

DENSE_GATE = 4096
CONDUCTANCE_GATE = 20


class AllocationChain:
    """CTMC over a :class:`StateSpace` with per-link parameter vector ``v``.

    ``grid`` is kept when the space came from :func:`region.discretize`; the
    analytic bounds need its epsilon and level span.
    """

    def __init__(self, space, v, grid=None):
        if not isinstance(space, StateSpace):
            grid, space = space, space.space
        v = np.asarray(v, dtype=float).ravel()
        if v.shape != (space.n,):
            raise ContractError(f"v must have {space.n} entries, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ContractError("v must be finite")
        v = v.copy()
        v.setflags(write=False)
        self.space = space
        self.grid = grid
        self.v = v
        src, dst, link = space.edges
        self.src, self.dst, self.link = src, dst, link
        self.edge_log_rates = space.vectors[dst, link] * v[link]

    @classmethod
    def from_grid(cls, grid, v):
        return cls(grid.space, v, grid=grid)

    def with_v(self, v):
        return AllocationChain(self.space, v, grid=self.grid)

    @property
    def n(self):
        return self.space.n

    @property
    def size(self):
        return self.space.size

    @property
    def vectors(self):
        return self.space.vectors

    @property
    def k_hi(self):
        """Largest rate any single option offers (``K-bar``)."""
        return float(self.space.clock_value.max())

    @property
    def edge_rates(self):
        return np.exp(self.edge_log_rates)

    def exit_rates(self):
        return np.bincount(self.src, weights=self.edge_rates, minlength=self.size)

    def clock_rates(self):
        """Rate of every (link, option) clock: ``exp(option_rate * v_link)``."""
        sp = self.space
        return np.exp(sp.clock_value * self.v[sp.clock_link])

    def total_clock_rate(self):
        """Aggregate tick rate of all clocks; the same from every state."""
        return float(self.clock_rates().sum())

    def log_weights(self):
        return self.vectors @ self.v

    def generator(self):
        """Dense rate matrix ``Q`` (rows sum to zero)."""
        _gate(self.size, DENSE_GATE, "dense generator")
        Q = np.zeros((self.size, self.size))
        np.add.at(Q, (self.src, self.dst), self.edge_rates)
        Q[np.diag_indices_from(Q)] = -Q.sum(axis=1)
        return Q

    def count_term(self):
        """State-count factor used in the analytic bounds."""
        if self.grid is not None:
            return self.grid.partition_size()
        return self.size

    def epsilon(self):
        return None if self.grid is None else self.grid.epsilon


def _gate(size, gate, what):
    if size > gate:
        raise CapacityError(f"{what} needs {size} states, above the gate of {gate}")


def transition_rate(chain, src, dst):
    """``q(src, dst)``; the diagonal is minus the exit rate."""
    N = chain.size
    if not (0 <= src < N and 0 <= dst < N):
        raise ContractError(f"state ids must lie in 0..{N - 1}")
    a, b = chain.space.combos[src], chain.space.combos[dst]
    diff = np.flatnonzero(a != b)
    if diff.size == 0:
        return -float(chain.exit_rates()[src])
    if diff.size > 1:
        return 0.0
    i = diff[0]
    return float(math.exp(chain.vectors[dst, i] * chain.v[i]))


def stationary(chain):
    """Closed-form ``pi_v(r) = exp(r.v) / sum exp(r'.v)`` in log domain."""
    lw = chain.log_weights()
    return np.exp(lw - logsumexp(lw))


def log_partition(chain):
    return float(logsumexp(chain.log_weights()))


def stationary_from_generator(Q):
    """Stationary law of a generator (or ``P - I``) from its left null space."""
    ns = null_space(np.asarray(Q).T)
    if ns.shape[1] != 1:
        raise ContractError(f"null space has dimension {ns.shape[1]}; chain not irreducible")
    p = ns[:, 0]
    p = p / p.sum()
    return np.clip(p, 0.0, None) / np.clip(p, 0.0, None).sum()


def dtmc_stationary(P):
    P = np.asarray(P)
    return stationary_from_generator(P - np.eye(P.shape[0]))


def offered_service(chain, pi=None):
    """``s_v = sum_r pi_v(r) r``."""
    pi = stationary(chain) if pi is None else pi
    return pi @ chain.vectors


def service_covariance(chain, pi=None):
    """Covariance of ``r`` under ``pi_v``."""
    pi = stationary(chain) if pi is None else pi
    mean = pi @ chain.vectors
    centered = chain.vectors - mean
    return (centered * pi[:, None]).T @ centered


def stationary_lower_bound(chain):
    """``exp(-2 K n ||v||) / m``, a floor on every ``pi_v(r)``.

    ``m`` is ``max(ceil(2K/eps)**n, |R|)``.
    """
    vinf = float(np.abs(chain.v).max())
    return math.exp(-2.0 * chain.k_hi * chain.n * vinf) / chain.count_term()


# --------------------------------------------------------------------------
# uniformization


@dataclass(frozen=True, eq=False)
class UniformizedChain:
    """Discrete-time chain ``P = I + Q/A`` for a CTMC."""

    P: np.ndarray
    A: float
    chain: AllocationChain

    @property
    def size(self):
        return self.P.shape[0]


def uniformization_constant(chain):
    """Total clock rate ``sum_i sum_j exp(r_ij v_i)``.

    Every exit rate is bounded by it, so ``P`` is a valid stochastic matrix
    for any number of levels per link.
    """
    return chain.total_clock_rate()


def nominal_uniformization_constant(chain):
    """``n exp(K ||v||_inf)``; a valid constant only for on-off (one level) links."""
    return chain.n * math.exp(chain.k_hi * float(np.abs(chain.v).max()))


def uniformize(chain, A=None):
    """Uniformize ``chain``; defaults to :func:`uniformization_constant`."""
    A = uniformization_constant(chain) if A is None else float(A)
    exits = chain.exit_rates()
    if exits.max() > A * (1 + 1e-12):
        raise ContractError(f"uniformization constant {A:g} below max exit rate {exits.max():g}")
    Q = chain.generator()
    P = Q / A
    P[np.diag_indices_from(P)] += 1.0
    return UniformizedChain(P=P, A=A, chain=chain)


# --------------------------------------------------------------------------
# distances


def _check_pair(mu, pi):
    mu = np.asarray(mu, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if mu.shape != pi.shape or mu.ndim != 1:
        raise ContractError("distributions must be 1-d over the same state space")
    for name, p in (("mu", mu), ("pi", pi)):
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12 * max(1, p.size):
            raise ContractError(f"{name} is not a probability vector")
    return mu, pi


def kl_divergence(mu, pi):
    """``D(mu || pi) = sum mu log(mu/pi)`` with ``0 log 0 = 0``."""
    mu, pi = _check_pair(mu, pi)
    on = mu > 0
    if np.any(pi[on] == 0):
        raise SupportError("support of mu is not contained in support of pi")
    return float(np.sum(mu[on] * np.log(mu[on] / pi[on])))


def tv_distance(mu, pi):
    """``0.5 * sum |mu - pi|``."""
    mu = np.asarray(mu, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if mu.shape != pi.shape:
        raise ContractError("distributions must share a state space")
    return float(0.5 * np.abs(mu - pi).sum())


# --------------------------------------------------------------------------
# spectral and conductance analysis


def _matrix_and_pi(dtmc, pi):
    if isinstance(dtmc, UniformizedChain):
        P = dtmc.P
        if pi is None:
            pi = stationary(dtmc.chain)
    else:
        P = np.asarray(dtmc, dtype=float)
        if pi is None:
            pi = dtmc_stationary(P)
    return P, np.asarray(pi, dtype=float)


def slem(dtmc, pi=None):
    """Second largest eigenvalue modulus of a reversible stochastic matrix."""
    P, pi = _matrix_and_pi(dtmc, pi)
    _gate(P.shape[0], DENSE_GATE, "eigen-decomposition")
    if P.shape[0] == 1:
        return 0.0
    s = np.sqrt(pi)
    S = (s[:, None] * P) / s[None, :]
    S = 0.5 * (S + S.T)
    ev = np.linalg.eigvalsh(S)
    # drop the Perron eigenvalue (closest to 1)
    ev = np.delete(ev, np.argmin(np.abs(ev - 1.0)))
    return float(np.abs(ev).max())


def conductance(dtmc, pi=None, max_states=CONDUCTANCE_GATE):
    """Exact conductance by enumerating every proper subset with mass <= 1/2.

    ``F(S)`` uses off-diagonal flow only.
    """
    P, pi = _matrix_and_pi(dtmc, pi)
    N = P.shape[0]
    if N > max_states:
        raise CapacityError(
            f"exact conductance enumerates 2^{N} subsets; limit is {max_states} states. "
            "Use conductance_lower_bound instead."
        )
    if N < 2:
        raise ContractError("conductance needs at least two states")
    W = pi[:, None] * P
    np.fill_diagonal(W, 0.0)
    bits = 1 << np.arange(N)
    best = np.inf
    total = 1 << N
    for start in range(1, total - 1, 1 << 16):
        masks = np.arange(start, min(start + (1 << 16), total - 1))
        M = (masks[:, None] & bits[None, :]) > 0
        mass = M @ pi
        flow = np.einsum("kx,kx->k", M @ W, ~M)
        ok = mass <= 0.5 + 1e-15
        if ok.any():
            best = min(best, float(np.min(flow[ok] / mass[ok])))
    return best


def conductance_lower_bound(chain):
    """``exp(-2K(n+1)||v||) / (n e m)`` with ``m = max(ceil(2K/eps)**n, |R|)``."""
    vinf = float(np.abs(chain.v).max())
    n = chain.n
    return math.exp(-2.0 * chain.k_hi * (n + 1) * vinf) / (n * math.e * chain.count_term())


def mixing_time_bound(dtmc, rho, pi=None):
    """Steps after which TV to stationarity is at most ``rho``.

    ``(0.5 log(1/alpha_min) + log(1/rho)) / log(1/sigma_max)``, clamped below
    at one step.  Small chains use exact ``alpha_min`` and ``sigma_max``; a
    :class:`UniformizedChain` above the dense gate falls back to the
    stationary floor and ``sigma_max <= 1 - Phi_lb^2 / 2``.
    """
    if not 0 < rho < 1:
        raise ContractError("rho must lie in (0, 1)")
    if isinstance(dtmc, UniformizedChain) and dtmc.size > DENSE_GATE:
        alpha_min = stationary_lower_bound(dtmc.chain)
        phi = conductance_lower_bound(dtmc.chain)
        sigma = 1.0 - phi * phi / 2.0
    else:
        P, pi = _matrix_and_pi(dtmc, pi)
        alpha_min = float(pi.min())
        sigma = slem(P, pi)
    if sigma >= 1.0 - 1e-12:
        raise ContractError("sigma_max is 1: chain is reducible or periodic")
    if sigma <= 0.0:
        return 1.0
    value = (0.5 * math.log(1.0 / alpha_min) + math.log(1.0 / rho)) / math.log(1.0 / sigma)
    return max(1.0, value)


def ctmc_mixing_time(chain, rho1, K1):
    """``exp(K1 (n ||v|| + n log(1/eps))) log(1/rho1)`` for a caller-chosen ``K1``."""
    eps = chain.epsilon()
    if eps is None:
        raise ContractError("chain has no grid epsilon")
    n = chain.n
    vinf = float(np.abs(chain.v).max())
    return math.exp(K1 * (n * vinf + n * math.log(1.0 / eps))) * math.log(1.0 / rho1)


def evolve(P, mu0, steps):
    """Distribution after ``steps`` applications of ``P``."""
    mu = np.asarray(mu0, dtype=float)
    for _ in range(int(steps)):
        mu = mu @ P
    return mu
