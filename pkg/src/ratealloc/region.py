"""Rate regions, feasibility oracles and rate-level discretization.

A rate region is a compact, downward-closed set of simultaneously
sustainable link-rate vectors.  Four concrete kinds are provided:

* :class:`VectorSetRegion` -- the downward closure of a finite list of
  maximal rate vectors.
* :class:`PolytopeRegion` -- ``{c >= 0 : A c <= b}`` with nonnegative ``A, b``.
* :class:`GaussianMacRegion` -- the capacity region of an m-user Gaussian
  multiple-access channel.
* :class:`DistanceThresholdRegion` -- a geometric model where link ``i`` may
  use rate ``r_j`` only if no other active transmitter is within ``d_j``.

Links are indexed from 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import CapacityError, ContractError, DisconnectedGridError
from .statespace import StateSpace

FEASIBILITY_TOL = 1e-9
DEFAULT_CAP = 10**6


def gaussian_capacity(snr):
    """``C(x) = 0.5 * log2(1 + x)`` in bits per channel use."""
    return 0.5 * np.log2(1.0 + np.asarray(snr, dtype=float))


class RateRegion:
    """Base class. Subclasses implement ``contains_many`` and ``max_rate``."""

    kind = "abstract"
    n: int

    def contains_many(self, rates):
        raise NotImplementedError

    def max_rate(self, link):
        raise NotImplementedError

    def contains(self, rates):
        rates = _as_rates(rates, self.n)
        return bool(self.contains_many(rates[None, :])[0])

    def max_rates(self):
        return np.array([self.max_rate(i) for i in range(self.n)])

    def to_dict(self):
        raise NotImplementedError


def _as_rates(rates, n):
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (n,):
        raise ContractError(f"rate vector must have shape ({n},), got {rates.shape}")
    if np.any(rates < 0):
        raise ContractError("rates must be nonnegative")
    return rates


class VectorSetRegion(RateRegion):
    """Downward closure of an explicit list of maximal rate vectors."""

    kind = "vector_set"

    def __init__(self, vectors):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if vectors.size == 0 or np.any(vectors < 0):
            raise ContractError("vector set must be a nonempty list of nonnegative vectors")
        self.vectors = vectors
        self.n = vectors.shape[1]
        for i in range(self.n):
            if self.max_rate(i) <= 0:
                raise ContractError(f"link {i} has zero maximum rate")

    def contains_many(self, rates):
        rates = np.asarray(rates, dtype=float)
        out = np.zeros(rates.shape[0], dtype=bool)
        for chunk in _chunks(rates.shape[0], 65536):
            sub = rates[chunk]
            dom = np.all(sub[:, None, :] <= self.vectors[None, :, :] + FEASIBILITY_TOL, axis=2)
            out[chunk] = dom.any(axis=1) & np.all(sub >= -FEASIBILITY_TOL, axis=1)
        return out

    def max_rate(self, link):
        _check_link(link, self.n)
        return float(self.vectors[:, link].max())

    def to_dict(self):
        return {"kind": self.kind, "vectors": self.vectors.tolist()}


class PolytopeRegion(RateRegion):
    """``{c >= 0 : A c <= b}`` with entrywise nonnegative ``A`` and ``b``."""

    kind = "polytope"

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] != b.shape[0]:
            raise ContractError("A and b row counts differ")
        if np.any(A < 0) or np.any(b < 0):
            raise ContractError("polytope requires nonnegative A and b")
        self.A, self.b = A, b
        self.n = A.shape[1]
        for i in range(self.n):
            if self.max_rate(i) <= 0:
                raise ContractError(f"link {i} has zero maximum rate")

    @classmethod
    def box(cls, upper):
        upper = np.asarray(upper, dtype=float)
        return cls(np.eye(len(upper)), upper)

    def contains_many(self, rates):
        rates = np.asarray(rates, dtype=float)
        ok = np.all(rates @ self.A.T <= self.b + FEASIBILITY_TOL, axis=1)
        return ok & np.all(rates >= -FEASIBILITY_TOL, axis=1)

    def max_rate(self, link):
        _check_link(link, self.n)
        col = self.A[:, link]
        rows = col > 0
        if not rows.any():
            raise ContractError(f"link {link} is unbounded; region is not compact")
        return float(np.min(self.b[rows] / col[rows]))

    def to_dict(self):
        return {"kind": self.kind, "A": self.A.tolist(), "b": self.b.tolist()}


class GaussianMacRegion(RateRegion):
    """Capacity region of a Gaussian MAC with ``links`` transmitters.

    ``sum_{i in S} c_i <= C(sum_{i in S} P_i / N)`` for every nonempty subset
    ``S``.  ``power`` may be a scalar (common power) or a per-link list.
    """

    kind = "gaussian_mac"

    def __init__(self, power, noise, links=2):
        power = np.broadcast_to(np.asarray(power, dtype=float), (links,)).copy()
        if noise <= 0 or np.any(power <= 0):
            raise ContractError("power and noise must be positive")
        if links < 1 or links > 20:
            raise ContractError("gaussian_mac supports 1..20 links")
        self.power = power
        self.noise = float(noise)
        self.n = int(links)
        masks = np.array(list(itertools.product([0, 1], repeat=self.n))[1:], dtype=float)
        self._subsets = masks
        self._bounds = gaussian_capacity(masks @ power / self.noise)

    def contains_many(self, rates):
        rates = np.asarray(rates, dtype=float)
        ok = np.all(rates @ self._subsets.T <= self._bounds + FEASIBILITY_TOL, axis=1)
        return ok & np.all(rates >= -FEASIBILITY_TOL, axis=1)

    def max_rate(self, link):
        _check_link(link, self.n)
        return float(gaussian_capacity(self.power[link] / self.noise))

    def pentagon(self):
        """Corner points of the two-user region, counter-clockwise from the origin."""
        if self.n != 2:
            raise ContractError("pentagon is defined for two links")
        p1, p2 = self.power
        N = self.noise
        b1, b2 = gaussian_capacity(p1 / N), gaussian_capacity(p2 / N)
        a1 = gaussian_capacity(p1 / (p2 + N))
        a2 = gaussian_capacity(p2 / (p1 + N))
        return np.array([[0.0, 0.0], [b1, 0.0], [b1, a2], [a1, b2], [0.0, b2]])

    def to_dict(self):
        power = self.power.tolist()
        if np.all(self.power == self.power[0]):
            power = float(self.power[0])
        return {"kind": self.kind, "power": power, "noise": self.noise, "links": self.n}


class DistanceThresholdRegion(RateRegion):
    """Channel-measuring model with distance thresholds.

    Link ``i`` transmits from ``tx[i]`` to ``rx[i]``; the receiver must lie
    within ``radii[0]``.  The link may run at ``rates[j-1]`` (j = 1..k) only if
    no *other active* transmitter lies within ``radii[j]`` of ``tx[i]``.
    ``rates`` and ``radii`` are nondecreasing.
    """

    kind = "distance_threshold"

    def __init__(self, tx, rx, radii, rates):
        tx = np.atleast_2d(np.asarray(tx, dtype=float))
        rx = np.atleast_2d(np.asarray(rx, dtype=float))
        radii = np.asarray(radii, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if tx.shape != rx.shape:
            raise ContractError("tx and rx positions must have the same shape")
        if radii.shape[0] != rates.shape[0] + 1 or rates.size == 0:
            raise ContractError("need radii d_0..d_k for rates r_1..r_k")
        if np.any(np.diff(radii) < 0) or np.any(np.diff(rates) < 0) or rates[0] <= 0:
            raise ContractError("radii and rates must be nondecreasing, rates positive")
        self.tx, self.rx, self.radii, self.rates = tx, rx, radii, rates
        self.n = tx.shape[0]
        reach = np.linalg.norm(tx - rx, axis=1)
        if np.any(reach > radii[0]):
            bad = np.flatnonzero(reach > radii[0]).tolist()
            raise ContractError(f"receivers of links {bad} are beyond d_0")
        self._dist = np.linalg.norm(tx[:, None, :] - tx[None, :, :], axis=2)
        np.fill_diagonal(self._dist, np.inf)

    def contains_many(self, rates):
        rates = np.asarray(rates, dtype=float)
        out = np.zeros(rates.shape[0], dtype=bool)
        for chunk in _chunks(rates.shape[0], 8192):
            x = rates[chunk]
            active = x > FEASIBILITY_TOL
            # smallest level index j with rates[j] >= x; radius radii[j+1]
            j = np.searchsorted(self.rates, x - FEASIBILITY_TOL, side="left")
            too_fast = j >= len(self.rates)
            need = self.radii[np.minimum(j, len(self.rates) - 1) + 1]
            close = self._dist[None, :, :] <= need[:, :, None]
            clash = close & active[:, :, None] & active[:, None, :]
            ok = ~(clash.any(axis=2) | (too_fast & active)).any(axis=1)
            out[chunk] = ok & np.all(x >= -FEASIBILITY_TOL, axis=1)
        return out

    def max_rate(self, link):
        _check_link(link, self.n)
        return float(self.rates[-1])

    def to_dict(self):
        return {
            "kind": self.kind,
            "tx": self.tx.tolist(),
            "rx": self.rx.tolist(),
            "radii": self.radii.tolist(),
            "rates": self.rates.tolist(),
        }


REGION_KINDS = {
    cls.kind: cls
    for cls in (VectorSetRegion, PolytopeRegion, GaussianMacRegion, DistanceThresholdRegion)
}


def region_from_dict(d):
    """Build a region from its ``to_dict`` form."""
    d = dict(d)
    kind = d.pop("kind")
    if kind not in REGION_KINDS:
        raise ContractError(f"unknown region kind {kind!r}")
    return REGION_KINDS[kind](**d)


def _check_link(link, n):
    if not (0 <= int(link) < n) or int(link) != link:
        raise ContractError(f"link id {link} out of range 0..{n - 1}")


def _chunks(total, size):
    for start in range(0, total, size):
        yield slice(start, min(total, start + size))


def is_feasible(region, rates):
    """True iff ``rates`` lies in ``region`` (absolute slack 1e-9)."""
    return region.contains(rates)


def per_link_max(region, link):
    """``c_i``: the largest rate link ``link`` can get when alone."""
    return region.max_rate(link)


# --------------------------------------------------------------------------
# discretization


@dataclass(frozen=True, eq=False)
class RateLevelGrid:
    """Per-link rate levels plus the enumerated feasible vector set."""

    region: RateRegion
    levels: tuple
    epsilon: float
    space: StateSpace

    @property
    def n(self):
        return self.space.n

    @property
    def vectors(self):
        return self.space.vectors

    @property
    def size(self):
        return self.space.size

    @property
    def max_rates(self):
        return np.array([lv[-1] for lv in self.levels])

    @property
    def k_hi(self):
        return float(self.max_rates.max())

    @property
    def k_lo(self):
        return float(self.max_rates.min())

    def level_span(self):
        """``ceil(2 K_hi / eps)``, the per-link level count used by the bounds."""
        return math.ceil(2.0 * self.k_hi / self.epsilon - 1e-12)

    def cardinality_bound(self):
        """``ceil(2 K_hi / eps) ** n`` as stated for the step-``eps/2`` grid.

        This counts nonzero levels only; a full box grid has one more level
        per link, see :meth:`cardinality_bound_with_zero`.
        """
        return self.level_span() ** self.n

    def cardinality_bound_with_zero(self):
        return (self.level_span() + 1) ** self.n

    def partition_size(self):
        """``max(ceil(2 K_hi/eps)**n, |R|)``: the count term used in the bounds."""
        return max(self.cardinality_bound(), self.size)


def default_levels(c, epsilon):
    """``0, eps/2, eps, ...`` below ``c``, then ``c`` itself."""
    h = epsilon / 2.0
    k = max(1, math.ceil(c / h - 1e-9))
    return np.array([j * h for j in range(k)] + [c])


def discretize(region, epsilon=None, levels_override=None, cap=DEFAULT_CAP):
    """Enumerate the feasible rate-allocation vectors of ``region``.

    With no override every link uses step ``epsilon/2`` levels ending at its
    maximum rate.  ``levels_override`` supplies explicit per-link levels; when
    ``epsilon`` is omitted alongside it, ``epsilon`` is taken as twice the
    largest level gap (the smallest value for which the override is at least
    as fine as the step-``epsilon/2`` partition).

    Enumeration extends partial vectors one link at a time and keeps only
    feasible prefixes, which is exact because regions are downward closed.
    Raises :class:`CapacityError` beyond ``cap`` vectors and
    :class:`DisconnectedGridError` if single-level moves do not connect the set.
    """
    n = region.n
    cmax = region.max_rates()
    if levels_override is None:
        if epsilon is None or not epsilon > 0:
            raise ContractError("epsilon must be positive")
        levels = tuple(default_levels(c, epsilon) for c in cmax)
    else:
        if len(levels_override) != n:
            raise ContractError(f"need {n} level lists, got {len(levels_override)}")
        levels = []
        for i, lv in enumerate(levels_override):
            lv = np.asarray(lv, dtype=float)
            if lv.ndim != 1 or lv.size < 2 or lv[0] != 0 or np.any(np.diff(lv) <= 0):
                raise ContractError(f"levels for link {i} must start at 0 and strictly increase")
            if abs(lv[-1] - cmax[i]) > 1e-6 * max(1.0, cmax[i]):
                raise ContractError(f"levels for link {i} must end at c_{i}={cmax[i]:g}, got {lv[-1]:g}")
            levels.append(lv)
        levels = tuple(levels)
        if epsilon is None:
            epsilon = 2.0 * max(float(np.diff(lv).max()) for lv in levels)
        elif not epsilon > 0:
            raise ContractError("epsilon must be positive")

    combos = np.zeros((1, 0), dtype=np.int64)
    for i in range(n):
        k = len(levels[i])
        cand = np.concatenate(
            [np.repeat(combos, k, axis=0), np.tile(np.arange(k), len(combos))[:, None]], axis=1
        )
        rates = np.zeros((len(cand), n))
        for m in range(i + 1):
            rates[:, m] = levels[m][cand[:, m]]
        combos = cand[region.contains_many(rates)]
        if len(combos) > cap:
            raise CapacityError(
                f"rate grid exceeds {cap} vectors after {i + 1} of {n} links; "
                "raise epsilon or the cap"
            )
    space = StateSpace(levels, combos)
    for i in range(n):
        corner = np.zeros(n, dtype=np.int64)
        corner[i] = len(levels[i]) - 1
        if space.lookup(corner) < 0:
            raise ContractError(f"c_{i} e_{i} is not feasible; region oracle inconsistent")
    if not space.is_connected():
        raise DisconnectedGridError("feasible vectors are not connected by single-link moves")
    return RateLevelGrid(region=region, levels=levels, epsilon=float(epsilon), space=space)


# --------------------------------------------------------------------------
# convex-hull membership


def hull_margin(points, target):
    """Largest ``delta`` with ``target + delta*1`` dominated by a point of conv(points).

    Positive means ``target`` is strictly feasible for the hull of a
    downward-closed point set.  Solved as a linear program.
    """
    points = np.asarray(points, dtype=float)
    target = np.asarray(target, dtype=float)
    K, n = points.shape
    # variables: mu (K), delta
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-points.T, np.ones((n, 1))])
    b_ub = -target
    A_eq = np.hstack([np.ones((1, K)), np.zeros((1, 1))])
    bounds = [(0, None)] * K + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"hull LP failed: {res.message}")
    return float(res.x[-1])


def in_hull(points, target, tol=1e-9):
    """True iff ``target`` is a convex combination of ``points`` (within ``tol``)."""
    points = np.asarray(points, dtype=float)
    target = np.asarray(target, dtype=float)
    K, n = points.shape
    A_eq = np.vstack([points.T, np.ones((1, K))])
    b_eq = np.concatenate([target, [1.0]])
    # minimize total slack on the equality system
    A = np.hstack([A_eq, np.eye(n + 1), -np.eye(n + 1)])
    c = np.concatenate([np.zeros(K), np.ones(2 * (n + 1))])
    res = linprog(c, A_eq=A, b_eq=b_eq, bounds=[(0, None)] * (K + 2 * (n + 1)), method="highs")
    if res.status != 0:
        raise RuntimeError(f"hull LP failed: {res.message}")
    return bool(res.fun <= tol)
