"""Finite state spaces of per-link option combinations.

Both the discretized rate grid and the white-space band-subset chain are
sets of tuples ``(o_1, ..., o_n)`` where ``o_i`` indexes one of link ``i``'s
options (a rate level, or a band subset).  Each option carries the rate the
link gets when it holds that option.  A link runs one exponential clock per
option; a tick on option ``j`` moves the link to ``j`` if the resulting tuple
is in the space.
"""

from __future__ import annotations

from collections import deque
from functools import cached_property

import numpy as np

from .errors import ContractError


class StateSpace:
    """Immutable set of feasible option combinations.

    Parameters
    ----------
    options : sequence of 1-d arrays
        ``options[i][j]`` is the rate of link ``i`` under option ``j``.
    combos : (N, n) int array
        Feasible option-index tuples.  Order is normalized on construction.
    labels : optional sequence
        Per-option labels (e.g. band bitmasks); ``labels[i][j]``.
    """

    def __init__(self, options, combos, labels=None):
        self.options = tuple(np.asarray(o, dtype=float) for o in options)
        self.n = len(self.options)
        combos = np.asarray(combos, dtype=np.int64).reshape(-1, self.n)
        if combos.shape[0] == 0:
            raise ContractError("state space is empty")
        self.radix = np.array([len(o) for o in self.options], dtype=np.int64)
        if np.any(combos < 0) or np.any(combos >= self.radix):
            raise ContractError("option index out of range")
        self._use_int_keys = float(np.prod(self.radix.astype(float))) < 2.0**62
        if self._use_int_keys:
            self.strides = np.concatenate(([1], np.cumprod(self.radix[:-1]))).astype(np.int64)
            keys = combos @ self.strides
            order = np.argsort(keys, kind="stable")
            self.combos = combos[order]
            self.keys = keys[order]
            if np.any(np.diff(self.keys) == 0):
                raise ContractError("duplicate states")
        else:
            tuples = sorted(set(map(tuple, combos.tolist())))
            if len(tuples) != combos.shape[0]:
                raise ContractError("duplicate states")
            self.combos = np.array(tuples, dtype=np.int64)
            self._dict = {t: k for k, t in enumerate(tuples)}
        self.combos.setflags(write=False)
        self.labels = None if labels is None else tuple(tuple(l) for l in labels)
        vec = np.empty(self.combos.shape, dtype=float)
        for i, o in enumerate(self.options):
            vec[:, i] = o[self.combos[:, i]]
        vec.setflags(write=False)
        self.vectors = vec

    def __len__(self):
        return self.combos.shape[0]

    @property
    def size(self):
        return self.combos.shape[0]

    def lookup(self, combos):
        """State ids for option tuples; -1 where the tuple is not a state."""
        combos = np.asarray(combos, dtype=np.int64)
        single = combos.ndim == 1
        combos = combos.reshape(-1, self.n)
        out = np.full(combos.shape[0], -1, dtype=np.int64)
        inrange = np.all((combos >= 0) & (combos < self.radix), axis=1)
        if self._use_int_keys:
            k = combos[inrange] @ self.strides
            pos = np.searchsorted(self.keys, k)
            pos = np.minimum(pos, len(self.keys) - 1)
            hit = self.keys[pos] == k
            res = np.where(hit, pos, -1)
            out[inrange] = res
        else:
            for row in np.flatnonzero(inrange):
                out[row] = self._dict.get(tuple(combos[row].tolist()), -1)
        return int(out[0]) if single else out

    def index_of_vector(self, rates):
        """State id of a rate vector (exact level match), -1 if absent."""
        rates = np.asarray(rates, dtype=float)
        if rates.shape != (self.n,):
            raise ContractError(f"expected {self.n} rates, got shape {rates.shape}")
        hits = np.flatnonzero(np.all(self.vectors == rates, axis=1))
        return int(hits[0]) if hits.size else -1

    # clocks -------------------------------------------------------------

    @cached_property
    def clock_link(self):
        """Link owning each clock; clocks are ordered link-major, option-minor."""
        return np.repeat(np.arange(self.n), self.radix)

    @cached_property
    def clock_option(self):
        return np.concatenate([np.arange(r) for r in self.radix])

    @cached_property
    def clock_value(self):
        """Rate carried by the option each clock proposes."""
        return np.concatenate(self.options)

    @property
    def num_clocks(self):
        return int(self.radix.sum())

    @cached_property
    def clock_table(self):
        """``(N, C)`` destination state per (state, clock); -1 if infeasible.

        A clock for the link's current option maps the state to itself.
        """
        N, C = self.size, self.num_clocks
        table = np.empty((N, C), dtype=np.int64)
        c = 0
        for i in range(self.n):
            for j in range(self.radix[i]):
                moved = self.combos.copy()
                moved[:, i] = j
                table[:, c] = self.lookup(moved)
                c += 1
        table.setflags(write=False)
        return table

    @cached_property
    def edges(self):
        """Directed single-link moves as ``(src, dst, link)`` arrays."""
        table = self.clock_table
        src = np.repeat(np.arange(self.size), self.num_clocks)
        dst = table.ravel()
        link = np.tile(self.clock_link, self.size)
        keep = (dst >= 0) & (dst != src)
        return src[keep], dst[keep], link[keep]

    def is_connected(self):
        """True iff every state is reachable from state 0 by single-link moves."""
        src, dst, _ = self.edges
        order = np.argsort(src, kind="stable")
        src, dst = src[order], dst[order]
        ptr = np.searchsorted(src, np.arange(self.size + 1))
        seen = np.zeros(self.size, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            s = queue.popleft()
            for d in dst[ptr[s]:ptr[s + 1]]:
                if not seen[d]:
                    seen[d] = True
                    queue.append(int(d))
        return bool(seen.all())
