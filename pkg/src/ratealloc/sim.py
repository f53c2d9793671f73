"""Event-driven simulation of the queue-driven rate-allocation algorithm.

Time is continuous.  Arrivals land at integral times, the controller updates
``v`` at fixed instants ``tau_l = l T``, and between events every rate is
constant, so queue evolution is integrated exactly.

Random streams are split from the master seed with
``np.random.SeedSequence(seed).spawn(n + 1)``: child 0 drives the clocks,
child ``1 + i`` drives link ``i``'s arrivals.  Keep this order stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .errors import ContractError, SimulationError
from .markov import AllocationChain, stationary, tv_distance
from .statespace import StateSpace

UNIFORM_CHUNK = 1 << 14


# --------------------------------------------------------------------------
# arrivals


@dataclass(frozen=True, eq=False)
class ArrivalProcess:
    """Per-link arrival increments at integral times.

    ``bernoulli``: increment ``K`` with probability ``lam_i / K``, else 0.
    ``deterministic``: constant increment ``lam_i`` every slot.
    ``trace``: row ``k`` of ``trace`` arrives at time ``k``; zeros after it ends.
    """

    kind: str
    rates: np.ndarray
    K: float = 1.0
    trace: np.ndarray | None = None

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float).ravel()
        object.__setattr__(self, "rates", rates)
        if self.kind not in ("bernoulli", "deterministic", "trace"):
            raise ContractError(f"unknown arrival kind {self.kind!r}")
        if np.any(rates < 0):
            raise ContractError("arrival rates must be nonnegative")
        if self.kind == "bernoulli":
            if not self.K > 0 or np.any(rates > self.K):
                raise ContractError("bernoulli arrivals need 0 <= lam_i <= K")
        if self.kind == "deterministic" and np.any(rates > self.K):
            raise ContractError("deterministic increments must not exceed K")
        if self.kind == "trace":
            tr = np.atleast_2d(np.asarray(self.trace, dtype=float))
            if tr.shape[1] != rates.shape[0]:
                raise ContractError("trace width must equal the link count")
            if np.any(tr < 0) or np.any(tr > self.K):
                raise ContractError("trace increments must lie in [0, K]")
            object.__setattr__(self, "trace", tr)

    @classmethod
    def bernoulli(cls, rates, K=1.0):
        return cls("bernoulli", rates, K)

    @property
    def n(self):
        return self.rates.shape[0]

    def draw(self, first_slot, count, rngs):
        """Increments for slots ``first_slot .. first_slot + count - 1``, shape (count, n)."""
        out = np.zeros((count, self.n))
        if count == 0:
            return out
        if self.kind == "bernoulli":
            for i, rng in enumerate(rngs):
                out[:, i] = (rng.random(count) < self.rates[i] / self.K) * self.K
        elif self.kind == "deterministic":
            out[:] = self.rates
        else:
            stop = min(first_slot + count, self.trace.shape[0])
            if stop > first_slot:
                out[: stop - first_slot] = self.trace[first_slot:stop]
        return out

    def to_dict(self):
        d = {"kind": self.kind, "rates": self.rates.tolist(), "K": self.K}
        if self.trace is not None:
            d["trace"] = self.trace.tolist()
        return d


# --------------------------------------------------------------------------
# controller


HEURISTICS = {}


def register_heuristic(name):
    """Register ``fn(v, lam_hat, s_hat, Q, config) -> new v`` under ``name``."""

    def deco(fn):
        HEURISTICS[name] = fn
        return fn

    return deco


@register_heuristic("log1pq")
def _log1pq(v, lam_hat, s_hat, Q, config):
    return np.log1p(Q)


@register_heuristic("gradient")
def _gradient(v, lam_hat, s_hat, Q, config):
    return project(v + config.alpha * (lam_hat - s_hat), config.D)


@dataclass(frozen=True)
class ControllerConfig:
    """How ``v`` evolves.

    ``mode`` is ``nonadaptive`` (``v`` fixed at ``v0``), ``theoretical``
    (projected gradient step with the ``eps/4`` slack) or ``heuristic``
    (a registered rule, default ``log1pq``).
    """

    mode: str = "heuristic"
    T: float = 10.0
    alpha: float = 1.0
    D: float = math.inf
    epsilon: float = 0.0
    rule: str = "log1pq"
    v0: tuple | None = None

    def __post_init__(self):
        if self.mode not in ("nonadaptive", "theoretical", "heuristic"):
            raise ContractError(f"unknown controller mode {self.mode!r}")
        if not self.T > 0 or not self.alpha > 0 or not self.D > 0:
            raise ContractError("T, alpha and D must be positive")
        if self.epsilon < 0:
            raise ContractError("epsilon must be nonnegative")
        if self.mode == "heuristic" and self.rule not in HEURISTICS:
            raise ContractError(f"unknown heuristic rule {self.rule!r}")

    @property
    def adaptive(self):
        return self.mode != "nonadaptive"

    def to_dict(self):
        d = {"mode": self.mode, "T": self.T}
        if self.mode == "theoretical":
            d.update(alpha=self.alpha, D=self.D, epsilon=self.epsilon)
        if self.mode == "heuristic":
            d["rule"] = self.rule
            if self.rule == "gradient":
                d.update(alpha=self.alpha, D=self.D)
        if self.v0 is not None:
            d["v0"] = list(self.v0)
        return d


def project(theta, D):
    """Componentwise projection onto ``[-D, D]``."""
    return np.clip(theta, -D, D)


def controller_update(v, lam_hat, s_hat, Q, config):
    """New ``v`` at an interval boundary from the interval's empirical rates."""
    v = np.asarray(v, dtype=float)
    if config.mode == "nonadaptive":
        return v.copy()
    if config.mode == "theoretical":
        lam_hat, s_hat = np.asarray(lam_hat, dtype=float), np.asarray(s_hat, dtype=float)
        return project(v + config.alpha * (lam_hat + config.epsilon / 4.0 - s_hat), config.D)
    return np.asarray(HEURISTICS[config.rule](v, lam_hat, s_hat, np.asarray(Q), config), dtype=float)


@dataclass(frozen=True)
class TheoreticalParams:
    alpha: float
    D: float
    T: float
    N: float
    C: float


def theoretical_params(n, epsilon, K, K_hi, K_lo, K_hat):
    """Step size, projection radius and interval length from the stability proof.

    ``C(n) = 3^5 (2 K_hi + K)^2 (K_hi^2 n^2 / 2 + n)``, ``alpha = eps^2 / C(n)``,
    ``D = (16 K_hi / K_lo)(n / eps) log ceil(2 K_hi / eps) + K_hi``,
    ``T = exp(K_hat (n^2 / eps) log(n / eps))`` and the averaging horizon
    ``N = 7 * 3^5 n D^2 / (alpha eps^2)``.  ``T`` overflows to ``inf`` for
    most realistic inputs.
    """
    if min(n, epsilon, K, K_hi, K_lo, K_hat) <= 0:
        raise ContractError("all parameters must be positive")
    C = 3**5 * (2 * K_hi + K) ** 2 * (K_hi**2 * n**2 / 2.0 + n)
    alpha = epsilon**2 / C
    D = 16.0 * K_hi / K_lo * n / epsilon * math.log(math.ceil(2.0 * K_hi / epsilon - 1e-12)) + K_hi
    try:
        T = math.exp(K_hat * (n**2 / epsilon) * math.log(n / epsilon))
    except OverflowError:
        T = math.inf
    N = 7 * 3**5 * n * D**2 / (alpha * epsilon**2)
    return TheoreticalParams(alpha=alpha, D=D, T=T, N=N, C=C)


def error_bound_period(n, vinf, epsilon, rho2, K2):
    """``exp(K2 (n ||v|| + n log(1/eps))) / rho2`` for a caller-chosen ``K2``."""
    return math.exp(K2 * (n * vinf + n * math.log(1.0 / epsilon))) / rho2


# --------------------------------------------------------------------------
# single-tick reference stepper


@dataclass
class SimState:
    """State snapshot advanced by :func:`step`; ``step`` returns a new copy."""

    t: float
    Q: np.ndarray
    state: int
    v: np.ndarray
    arrivals: np.ndarray
    served: np.ndarray
    next_slot: int = 0

    def copy(self):
        return SimState(
            self.t, self.Q.copy(), self.state, self.v.copy(), self.arrivals.copy(),
            self.served.copy(), self.next_slot,
        )


def integrate_service(Q, rates, from_t, to_t):
    """Serve fluid queues at constant ``rates`` over ``[from_t, to_t)``.

    A queue that empties stops receiving service. Returns ``(served, Q_after)``.
    """
    if to_t < from_t:
        raise ContractError("interval must have from_t <= to_t")
    Q = np.asarray(Q, dtype=float)
    served = np.minimum(Q, np.asarray(rates, dtype=float) * (to_t - from_t))
    served = np.where(Q > 0, served, 0.0)
    return served, Q - served


def step(sim_state, chain, rng, arrivals=None, arrival_rngs=None):
    """Apply the next clock tick, with any integral-time arrivals before it.

    All clocks of all links tick at aggregate rate
    ``sum_{i,j} exp(r_ij v_i)``; the ticking clock is chosen in proportion
    to its rate.  The owning link moves to the proposed option if the
    resulting vector is feasible; otherwise nothing changes.
    """
    s = sim_state.copy()
    space = chain.space
    rates = chain.clock_rates()
    total = rates.sum()
    t_tick = s.t + rng.exponential(1.0 / total)
    while arrivals is not None and s.next_slot < t_tick:
        served, s.Q = integrate_service(s.Q, space.vectors[s.state], s.t, s.next_slot)
        s.served = s.served + served
        s.t = float(s.next_slot)
        inc = arrivals.draw(s.next_slot, 1, arrival_rngs)[0]
        s.Q = s.Q + inc
        s.arrivals = s.arrivals + inc
        s.next_slot += 1
    served, s.Q = integrate_service(s.Q, space.vectors[s.state], s.t, t_tick)
    s.served = s.served + served
    s.t = t_tick
    clock = rng.choice(len(rates), p=rates / total)
    dest = space.clock_table[s.state, clock]
    if dest >= 0:
        s.state = int(dest)
    return s


# --------------------------------------------------------------------------
# full runs


@dataclass(frozen=True, eq=False)
class SimScenario:
    """Everything :func:`run` needs besides horizon and seed."""

    space: StateSpace
    arrivals: ArrivalProcess
    controller: ControllerConfig
    q0: np.ndarray | None = None
    r0: int | None = None
    sample_every: float | None = None
    grid: object = None

    def __post_init__(self):
        if self.arrivals.n != self.space.n:
            raise ContractError("arrival process and state space disagree on link count")
        if self.q0 is not None:
            q0 = np.asarray(self.q0, dtype=float)
            if q0.shape != (self.space.n,) or np.any(q0 < 0):
                raise ContractError("q0 must be a nonnegative vector with one entry per link")
        if self.controller.v0 is not None and len(self.controller.v0) != self.space.n:
            raise ContractError("controller v0 has the wrong length")

    @property
    def n(self):
        return self.space.n


@dataclass
class SimTrace:
    """Sampled trajectory plus run-level aggregates."""

    t: np.ndarray
    Q: np.ndarray
    r: np.ndarray
    v: np.ndarray
    state: np.ndarray
    kind: list
    arrivals: np.ndarray
    served: np.ndarray
    q0: np.ndarray
    occupation_time: np.ndarray
    offered: np.ndarray
    jumps: int
    end_time: float
    intervals: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def occupation(self):
        return self.occupation_time / self.occupation_time.sum()

    def conservation_error(self):
        """Max over samples and links of ``|A - served - (Q - Q0)|``."""
        return float(np.abs(self.arrivals - self.served - (self.Q - self.q0)).max())

    def visited_states(self):
        return np.flatnonzero(self.occupation_time > 0)


def _csr(space):
    src, dst, link = space.edges
    order = np.lexsort((dst, src))
    src, dst, link = src[order], dst[order], link[order]
    ptr = np.searchsorted(src, np.arange(space.size + 1)).astype(np.int64)
    return ptr, src.astype(np.int64), dst.astype(np.int64), link.astype(np.int64)


def run(scenario, horizon, seed, max_events=None):
    """Simulate ``scenario`` on ``[0, horizon)``; deterministic in ``seed``.

    With ``max_events`` the run also stops after that many state changes
    (horizon may then be ``inf``).
    """
    if not horizon > 0:
        raise ContractError("horizon must be positive")
    if math.isinf(horizon) and max_events is None:
        raise ContractError("an infinite horizon needs max_events")
    space = scenario.space
    n = space.n
    ctrl = scenario.controller
    vectors = np.ascontiguousarray(space.vectors)
    ptr, src, dst, link = _csr(space)

    children = np.random.SeedSequence(seed).spawn(n + 1)
    clock_rng = np.random.Generator(np.random.PCG64(children[0]))
    arrival_rngs = [np.random.Generator(np.random.PCG64(c)) for c in children[1:]]

    q0 = np.zeros(n) if scenario.q0 is None else np.asarray(scenario.q0, dtype=float)
    q_hi, q_lo = q0.copy(), np.zeros(n)
    served_hi, served_lo = np.zeros(n), np.zeros(n)
    arr_hi, arr_lo = np.zeros(n), np.zeros(n)
    offered = np.zeros(n)
    occupation = np.zeros(space.size)
    if scenario.r0 is None:
        state = space.lookup(np.zeros(n, dtype=np.int64))
        if state < 0:
            raise ContractError("the all-zero allocation is not a state")
    else:
        state = int(scenario.r0)
    v = np.zeros(n) if ctrl.v0 is None else np.asarray(ctrl.v0, dtype=float)

    def rates_for(v):
        er = np.exp(vectors[dst, link] * v[link])
        ex = np.bincount(src, weights=er, minlength=space.size)
        return er, ex

    edge_rates, exit_rates = rates_for(v)
    unif = np.empty(0)
    upos = 0
    jumps = 0
    budget = np.iinfo(np.int64).max if max_events is None else int(max_events)

    T = ctrl.T
    sample_every = scenario.sample_every or (T if ctrl.adaptive else 10.0)
    next_update = T if ctrl.adaptive else math.inf
    next_sample = sample_every
    t = 0.0
    next_slot = 0

    rec_t, rec_q, rec_state, rec_v, rec_kind, rec_a, rec_s = [], [], [], [], [], [], []

    def record(kind):
        rec_t.append(t)
        rec_q.append(q_hi + q_lo)
        rec_state.append(state)
        rec_v.append(v.copy())
        rec_kind.append(kind)
        rec_a.append(arr_hi + arr_lo)
        rec_s.append(served_hi + served_lo)

    record("start")
    intervals = []
    last_tau, last_arr, last_off = 0.0, np.zeros(n), np.zeros(n)

    while t < horizon:
        seg_end = min(horizon, next_update, next_sample)
        if math.isinf(seg_end):
            seg_end = t + 1024.0
        first = next_slot
        last = math.ceil(seg_end) - 1 if seg_end == math.ceil(seg_end) else math.floor(seg_end)
        count = max(0, last - first + 1)
        arr_amounts = scenario.arrivals.draw(first, count, arrival_rngs)
        arr_times = np.arange(first, first + count, dtype=float)
        arr_pos = 0
        while True:
            t, state, arr_pos, upos, jumps, status = _kernel.advance(
                t, seg_end, state, q_hi, q_lo, served_hi, served_lo, arr_hi, arr_lo,
                offered, occupation, vectors, ptr, dst, edge_rates, exit_rates,
                arr_times, arr_amounts, arr_pos, unif, upos, jumps, budget,
            )
            if status == 1:
                unif = np.concatenate([unif[upos:], 1.0 - clock_rng.random(UNIFORM_CHUNK)])
                upos = 0
                continue
            break
        next_slot = first + arr_pos
        if status == 2:
            record("end")
            break
        if not (np.all(np.isfinite(q_hi)) and np.all(np.isfinite(v))):
            raise SimulationError(f"non-finite state at t={t}: Q={q_hi}, v={v}")
        kind = None
        if t >= next_update:
            cum_arr = arr_hi + arr_lo
            lam_hat = (cum_arr - last_arr) / (t - last_tau)
            s_hat = (offered - last_off) / (t - last_tau)
            new_v = controller_update(v, lam_hat, s_hat, q_hi + q_lo, ctrl)
            if not np.all(np.isfinite(new_v)):
                raise SimulationError(f"controller produced non-finite v at t={t}")
            intervals.append((last_tau, t, lam_hat, s_hat, v.copy()))
            last_tau, last_arr, last_off = t, cum_arr, offered.copy()
            v = new_v
            edge_rates, exit_rates = rates_for(v)
            next_update += T
            kind = "update"
        if t >= next_sample:
            next_sample += sample_every
            kind = kind or "sample"
        if t >= horizon:
            record("end")
        elif kind:
            record(kind)

    trace = SimTrace(
        t=np.array(rec_t),
        Q=np.array(rec_q),
        r=vectors[np.array(rec_state)],
        v=np.array(rec_v),
        state=np.array(rec_state),
        kind=rec_kind,
        arrivals=np.array(rec_a),
        served=np.array(rec_s),
        q0=q0,
        occupation_time=occupation,
        offered=offered,
        jumps=jumps,
        end_time=t,
        intervals=intervals,
    )
    trace.summary = summarize(trace, scenario)
    return trace


def summarize(trace, scenario):
    t = trace.end_time
    Q = trace.Q[-1]
    summary = {
        "end_time": t,
        "jumps": int(trace.jumps),
        "queue_slope": (Q / t).tolist(),
        "max_queue_slope": float(np.max(Q / t)),
        "sum_queue_slope": float(np.sum(Q) / t),
        "arrival_rate": (trace.arrivals[-1] / t).tolist(),
        "throughput": (trace.served[-1] / t).tolist(),
        "offered_rate": (trace.offered / t).tolist(),
        "final_queue": Q.tolist(),
        "final_v": trace.v[-1].tolist(),
        "conservation_error": trace.conservation_error(),
    }
    ctrl = scenario.controller
    if not ctrl.adaptive and scenario.space.size <= 4096:
        v = np.zeros(scenario.n) if ctrl.v0 is None else np.asarray(ctrl.v0, dtype=float)
        pi = stationary(AllocationChain(scenario.space, v))
        summary["occupation_tv"] = tv_distance(trace.occupation(), pi)
    return summary


def occupation_measure(chain, n_events, seed, sample_every=10.0):
    """Run ``chain`` (fixed ``v``, no arrivals) for ``n_events`` jumps."""
    scenario = SimScenario(
        space=chain.space,
        arrivals=ArrivalProcess("deterministic", np.zeros(chain.n)),
        controller=ControllerConfig(mode="nonadaptive", v0=tuple(chain.v.tolist())),
        sample_every=sample_every,
    )
    return run(scenario, math.inf, seed, max_events=n_events)
