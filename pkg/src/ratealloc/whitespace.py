"""Multi-band, multi-radio scheduling for white-space networks.

Each link holds a subset of bands (a bitmask ``theta_i``).  A schedule is
feasible when no interfering pair shares a band and no node uses more
radios than it owns.  The link's rate is ``sum_b theta_b c_ib B_b``.  Every
link runs one clock per candidate subset, so the chain is the same
single-link-move chain as the rate grid and reuses :class:`StateSpace`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ContractError
from .markov import AllocationChain
from .statespace import StateSpace

MAX_BANDS = 16
DEFAULT_CAP = 10**6


def popcount(x):
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros(x.shape, dtype=np.int64)
    for b in range(MAX_BANDS):
        out += (x >> b) & 1
    return out


@dataclass(frozen=True, eq=False)
class WhitespaceNetwork:
    """Nodes, directed links, bands and per-band link interference.

    ``links`` is a list of ``(source, destination)`` node ids;
    ``efficiency[i, b]`` is ``c_ib``; ``interference[b]`` lists link pairs
    that may not share band ``b`` (pairs are symmetrized).
    """

    num_nodes: int
    links: np.ndarray
    bandwidths: np.ndarray
    efficiency: np.ndarray
    interference: tuple
    radios: np.ndarray

    def __post_init__(self):
        links = np.asarray(self.links, dtype=np.int64).reshape(-1, 2)
        bw = np.asarray(self.bandwidths, dtype=float).ravel()
        eff = np.asarray(self.efficiency, dtype=float)
        radios = np.asarray(self.radios, dtype=np.int64).ravel()
        n, M = links.shape[0], bw.shape[0]
        if n == 0 or M == 0:
            raise ContractError("need at least one link and one band")
        if M > MAX_BANDS:
            raise ContractError(f"at most {MAX_BANDS} bands are supported")
        if np.any(links < 0) or np.any(links >= self.num_nodes):
            raise ContractError("link endpoint outside the node range")
        if np.any(links[:, 0] == links[:, 1]):
            raise ContractError("a link needs two distinct endpoints")
        if np.any(bw <= 0):
            raise ContractError("bandwidths must be positive")
        if eff.shape != (n, M) or np.any(eff < 0):
            raise ContractError("efficiency must be a nonnegative (links x bands) table")
        if radios.shape != (self.num_nodes,) or np.any(radios < 1):
            raise ContractError("every node needs at least one radio")
        if len(self.interference) != M:
            raise ContractError("one interference edge list per band")
        adj = np.zeros((M, n, n), dtype=bool)
        for b, edges in enumerate(self.interference):
            e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
            if np.any(e < 0) or np.any(e >= n) or np.any(e[:, 0] == e[:, 1]):
                raise ContractError(f"band {b}: bad interference edge")
            adj[b, e[:, 0], e[:, 1]] = True
            adj[b, e[:, 1], e[:, 0]] = True
        for name, val in (("links", links), ("bandwidths", bw), ("efficiency", eff),
                          ("radios", radios)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        edge_lists = tuple(
            tuple((int(u), int(w)) for u, w in zip(*np.nonzero(np.triu(adj[b]))))
            for b in range(M)
        )
        object.__setattr__(self, "interference", edge_lists)

    @property
    def n(self):
        return self.links.shape[0]

    @property
    def num_bands(self):
        return self.bandwidths.shape[0]

    def link_budget(self, i):
        s, d = self.links[i]
        return int(min(self.radios[s], self.radios[d], self.num_bands))

    def conflict_mask(self, i, j):
        """Bands on which links ``i`` and ``j`` interfere, as a bitmask."""
        bits = np.flatnonzero(self.adjacency[:, i, j])
        return int(np.sum(1 << bits)) if bits.size else 0

    def candidate_subsets(self, i):
        """Bitmasks ``theta`` with ``|theta| <= min(a_s, a_d)``, ascending."""
        masks = np.arange(1 << self.num_bands, dtype=np.int64)
        return masks[popcount(masks) <= self.link_budget(i)]

    def subset_rate(self, i, masks):
        masks = np.asarray(masks, dtype=np.int64)
        bits = (masks[..., None] >> np.arange(self.num_bands)) & 1
        return bits @ (self.efficiency[i] * self.bandwidths)

    def to_dict(self):
        return {
            "nodes": int(self.num_nodes),
            "links": self.links.tolist(),
            "bandwidths": self.bandwidths.tolist(),
            "efficiency": self.efficiency.tolist(),
            "interference": [[list(e) for e in edges] for edges in self.interference],
            "radios": self.radios.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            num_nodes=int(d["nodes"]),
            links=d["links"],
            bandwidths=d["bandwidths"],
            efficiency=d["efficiency"],
            interference=tuple(d["interference"]),
            radios=d["radios"],
        )


def _sigma(net, schedule):
    sigma = np.asarray(schedule)
    if sigma.shape != (net.n, net.num_bands):
        raise ContractError(f"schedule must be {net.n} x {net.num_bands}")
    return sigma.astype(bool)


def link_rate(net, schedule, link):
    """``sum_b sigma_ib c_ib B_b``."""
    sigma = _sigma(net, schedule)
    return float(np.sum(sigma[link] * net.efficiency[link] * net.bandwidths))


def is_feasible_schedule(net, schedule):
    """Interference, radio and per-link subset-size constraints."""
    sigma = _sigma(net, schedule)
    for b in range(net.num_bands):
        on = sigma[:, b]
        if np.any(net.adjacency[b] & on[:, None] & on[None, :]):
            return False
    per_link = sigma.sum(axis=1)
    used = np.zeros(net.num_nodes, dtype=np.int64)
    np.add.at(used, net.links[:, 0], per_link)
    np.add.at(used, net.links[:, 1], per_link)
    if np.any(used > net.radios):
        return False
    budgets = np.array([net.link_budget(i) for i in range(net.n)])
    return bool(np.all(per_link <= budgets))


def masks_to_sigma(net, masks):
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[..., None] >> np.arange(net.num_bands)) & 1).astype(bool)


def sigma_to_masks(sigma):
    sigma = np.asarray(sigma, dtype=np.int64)
    return sigma @ (1 << np.arange(sigma.shape[-1]))


def state_space(net, cap=DEFAULT_CAP):
    """All feasible schedules, enumerated link by link with pruning."""
    cands = [net.candidate_subsets(i) for i in range(net.n)]
    pops = [popcount(c) for c in cands]
    combos = np.zeros((1, 0), dtype=np.int64)
    used = np.zeros((1, net.num_nodes), dtype=np.int64)
    for i in range(net.n):
        k = len(cands[i])
        rep = np.repeat(combos, k, axis=0)
        opt = np.tile(np.arange(k), combos.shape[0])
        mask = cands[i][opt]
        ok = np.ones(rep.shape[0], dtype=bool)
        for j in range(i):
            cm = net.conflict_mask(i, j)
            if cm:
                ok &= (cands[j][rep[:, j]] & mask & cm) == 0
        new_used = np.repeat(used, k, axis=0)
        s, d = net.links[i]
        new_used[:, s] += pops[i][opt]
        new_used[:, d] += pops[i][opt]
        ok &= np.all(new_used <= net.radios, axis=1)
        combos = np.column_stack([rep[ok], opt[ok]])
        used = new_used[ok]
        if combos.shape[0] > cap:
            raise CapacityError(f"more than {cap} feasible schedules after link {i}")
    options = [net.subset_rate(i, cands[i]) for i in range(net.n)]
    return StateSpace(options, combos, labels=[c.tolist() for c in cands])


def schedule_masks(space):
    """``(N, n)`` band bitmask per state and link."""
    out = np.empty(space.combos.shape, dtype=np.int64)
    for i in range(space.n):
        out[:, i] = np.asarray(space.labels[i])[space.combos[:, i]]
    return out


def whitespace_chain(net, v, space=None):
    return AllocationChain(state_space(net) if space is None else space, v)


def brute_force_schedules(net, limit=1 << 20):
    """Feasible schedules by scanning every binary matrix (small nets only)."""
    bits = net.n * net.num_bands
    if (1 << bits) > limit:
        raise CapacityError("instance too large for brute force")
    found = []
    for flat in itertools.product((0, 1), repeat=bits):
        sigma = np.array(flat).reshape(net.n, net.num_bands)
        if is_feasible_schedule(net, sigma):
            found.append(sigma_to_masks(sigma))
    return np.array(found, dtype=np.int64)


def brute_force_generator(net, v):
    """Generator over brute-force schedules with rate ``exp(r_i(dest) v_i)``.

    Built directly from the schedule list, independent of :class:`StateSpace`.
    """
    v = np.asarray(v, dtype=float)
    scheds = brute_force_schedules(net)
    index = {tuple(s): k for k, s in enumerate(scheds.tolist())}
    rates = np.array([[net.subset_rate(i, s[i]) for i in range(net.n)] for s in scheds])
    N = len(scheds)
    Q = np.zeros((N, N))
    for a, s in enumerate(scheds.tolist()):
        for i in range(net.n):
            for theta in net.candidate_subsets(i).tolist():
                if theta == s[i]:
                    continue
                t = list(s)
                t[i] = theta
                b = index.get(tuple(t))
                if b is not None:
                    Q[a, b] = np.exp(rates[b, i] * v[i])
        Q[a, a] = -Q[a].sum()
    return scheds, rates, Q


def independent_sets(n, edges):
    """All independent sets of a graph on ``n`` vertices as 0/1 rows."""
    edges = [tuple(e) for e in edges]
    rows = []
    for flat in itertools.product((0, 1), repeat=n):
        if all(not (flat[u] and flat[w]) for u, w in edges):
            rows.append(flat)
    return np.array(rows, dtype=np.int64)
