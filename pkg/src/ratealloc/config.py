"""YAML scenario files.

A scenario names either a rate ``region`` plus a ``grid``, or a white-space
``network``, together with arrivals, a controller and run settings::

    region: {kind: gaussian_mac, power: 3, noise: 1, links: 2}
    grid: {levels: [[0, 0.4, 1], [0, 0.4, 1]]}
    arrivals: {kind: bernoulli, rho: 0.9, base: [0.7, 0.7], K: 1}
    controller: {mode: heuristic, rule: log1pq, T: 10}
    horizon: 100000
    seed: 0

Validation errors carry the line of the offending key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, ContractError
from .region import discretize, region_from_dict
from .sim import HEURISTICS, ArrivalProcess, ControllerConfig, SimScenario
from .whitespace import WhitespaceNetwork, state_space

TOP_KEYS = {
    "name", "region", "grid", "network", "arrivals", "controller", "horizon", "seed",
    "replications", "v", "lam", "epsilon_shift", "rho", "sample_every", "q0", "output",
}


def _line_index(node, path=(), out=None):
    """Map key paths to 1-based source lines."""
    if out is None:
        out = {}
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, message):
        p = tuple(path)
        while p and p not in self.lines:
            p = p[:-1]
        raise ConfigError(message, line=self.lines.get(p), path=".".join(map(str, path)) or None)


@dataclass(eq=False)
class Scenario:
    """Validated scenario; build runtime objects with the ``build_*`` methods."""

    name: str
    region: dict | None
    grid: dict | None
    network: dict | None
    arrivals: dict
    controller: dict
    horizon: float
    seed: int
    replications: int = 1
    v: list | None = None
    lam: list | None = None
    epsilon_shift: float = 0.0
    rho: float = 0.01
    sample_every: float | None = None
    q0: list | None = None
    output: str | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def is_whitespace(self):
        return self.network is not None

    def build_region(self):
        return region_from_dict(self.region)

    def build_grid(self):
        if "grid" not in self._cache:
            g = self.grid or {}
            self._cache["grid"] = discretize(
                self.build_region(),
                epsilon=g.get("epsilon"),
                levels_override=g.get("levels"),
                cap=int(g.get("cap", 10**6)),
            )
        return self._cache["grid"]

    def build_network(self):
        return WhitespaceNetwork.from_dict(self.network)

    def build_space(self):
        if self.is_whitespace:
            if "space" not in self._cache:
                self._cache["space"] = state_space(self.build_network())
            return self._cache["space"]
        return self.build_grid().space

    @property
    def n(self):
        if self.is_whitespace:
            return len(self.network["links"])
        return self.build_region().n

    def arrival_rates(self):
        a = self.arrivals
        if "rates" in a:
            return np.asarray(a["rates"], dtype=float)
        return float(a["rho"]) * np.asarray(a["base"], dtype=float)

    def build_arrivals(self):
        a = self.arrivals
        return ArrivalProcess(a["kind"], self.arrival_rates(), float(a.get("K", 1.0)), a.get("trace"))

    def build_controller(self):
        c = dict(self.controller)
        if "v0" in c:
            c["v0"] = tuple(c["v0"])
        return ControllerConfig(**c)

    def build_sim(self):
        space = self.build_space()
        return SimScenario(
            space=space,
            arrivals=self.build_arrivals(),
            controller=self.build_controller(),
            q0=None if self.q0 is None else np.asarray(self.q0, dtype=float),
            sample_every=self.sample_every,
            grid=None if self.is_whitespace else self.build_grid(),
        )

    def analysis_v(self):
        return np.zeros(self.n) if self.v is None else np.asarray(self.v, dtype=float)

    def to_dict(self):
        d = {"name": self.name}
        for key in ("region", "grid", "network"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        d.update(arrivals=self.arrivals, controller=self.controller,
                 horizon=self.horizon, seed=self.seed, replications=self.replications)
        for key in ("v", "lam", "sample_every", "q0", "output"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.epsilon_shift:
            d["epsilon_shift"] = self.epsilon_shift
        d["rho"] = self.rho
        return d

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def loads(text):
    """Parse and validate a scenario from YAML text."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from None
    if node is None or not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping", line=1)
    ctx = _Ctx(_line_index(node))
    return _validate(data, ctx)


def load(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return loads(text)
    except ConfigError as exc:
        where = f"{path} [{exc.path}]" if exc.path else str(path)
        raise ConfigError(exc.bare_message, line=exc.line, path=where) from None


def from_dict(d):
    """Validate an already-parsed mapping (no line information)."""
    return _validate(dict(d), _Ctx({}))


def _num(ctx, path, value, positive=False, nonneg=False, allow_inf=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        ctx.fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        ctx.fail(path, "must be finite")
    if positive and not value > 0:
        ctx.fail(path, "must be positive")
    if nonneg and value < 0:
        ctx.fail(path, "must be nonnegative")
    return value


def _vec(ctx, path, value, length=None):
    if not isinstance(value, list):
        ctx.fail(path, "expected a list of numbers")
    out = [_num(ctx, path + (i,), x) for i, x in enumerate(value)]
    if length is not None and len(out) != length:
        ctx.fail(path, f"expected {length} entries, got {len(out)}")
    return out


def _mapping(ctx, path, value):
    if not isinstance(value, dict):
        ctx.fail(path, "expected a mapping")
    return value


def _validate(d, ctx):
    for key in d:
        if key not in TOP_KEYS:
            ctx.fail((key,), f"unknown key {key!r}")
    has_region = "region" in d
    if has_region == ("network" in d):
        ctx.fail((), "give exactly one of 'region' or 'network'")

    region = grid = network = None
    if has_region:
        region = dict(_mapping(ctx, ("region",), d["region"]))
        try:
            reg = region_from_dict(region)
        except KeyError as exc:
            ctx.fail(("region",), f"missing key {exc.args[0]!r}")
        except (ContractError, TypeError, ValueError) as exc:
            ctx.fail(("region",), str(exc))
        n = reg.n
        region = reg.to_dict()
        grid = dict(_mapping(ctx, ("grid",), d.get("grid", {})))
        extra = set(grid) - {"epsilon", "levels", "cap"}
        if extra:
            ctx.fail(("grid", sorted(extra)[0]), f"unknown grid key {sorted(extra)[0]!r}")
        if "epsilon" not in grid and "levels" not in grid:
            ctx.fail(("grid",), "grid needs 'epsilon' or 'levels'")
        if "epsilon" in grid:
            grid["epsilon"] = _num(ctx, ("grid", "epsilon"), grid["epsilon"], positive=True)
        if "levels" in grid:
            lv = grid["levels"]
            if not isinstance(lv, list) or len(lv) != n:
                ctx.fail(("grid", "levels"), f"expected {n} level lists")
            grid["levels"] = [_vec(ctx, ("grid", "levels", i), x) for i, x in enumerate(lv)]
        if "cap" in grid:
            grid["cap"] = int(_num(ctx, ("grid", "cap"), grid["cap"], positive=True))
    else:
        network = dict(_mapping(ctx, ("network",), d["network"]))
        try:
            net = WhitespaceNetwork.from_dict(network)
        except KeyError as exc:
            ctx.fail(("network",), f"missing key {exc.args[0]!r}")
        except (ContractError, TypeError, ValueError) as exc:
            ctx.fail(("network",), str(exc))
        n = net.n
        network = net.to_dict()

    arrivals = dict(_mapping(ctx, ("arrivals",), d.get("arrivals", {"kind": "bernoulli", "rates": [0.0] * n})))
    kind = arrivals.setdefault("kind", "bernoulli")
    if kind not in ("bernoulli", "deterministic", "trace"):
        ctx.fail(("arrivals", "kind"), f"unknown arrival kind {kind!r}")
    if "rates" in arrivals:
        arrivals["rates"] = _vec(ctx, ("arrivals", "rates"), arrivals["rates"], n)
    elif "rho" in arrivals and "base" in arrivals:
        arrivals["rho"] = _num(ctx, ("arrivals", "rho"), arrivals["rho"], nonneg=True)
        arrivals["base"] = _vec(ctx, ("arrivals", "base"), arrivals["base"], n)
    else:
        ctx.fail(("arrivals",), "arrivals need 'rates' or both 'rho' and 'base'")
    arrivals["K"] = _num(ctx, ("arrivals", "K"), arrivals.get("K", 1.0), positive=True)

    controller = dict(_mapping(ctx, ("controller",), d.get("controller", {"mode": "nonadaptive"})))
    allowed = {"mode", "T", "alpha", "D", "epsilon", "rule", "v0"}
    for key in controller:
        if key not in allowed:
            ctx.fail(("controller", key), f"unknown controller key {key!r}")
    for key in ("T", "alpha", "D"):
        if key in controller:
            controller[key] = _num(ctx, ("controller", key), controller[key], positive=True, allow_inf=key == "D")
    if "epsilon" in controller:
        controller["epsilon"] = _num(ctx, ("controller", "epsilon"), controller["epsilon"], nonneg=True)
    if "v0" in controller:
        controller["v0"] = _vec(ctx, ("controller", "v0"), controller["v0"], n)
    if controller.get("mode", "heuristic") not in ("nonadaptive", "theoretical", "heuristic"):
        ctx.fail(("controller", "mode"), f"unknown controller mode {controller['mode']!r}")
    if "rule" in controller and controller["rule"] not in HEURISTICS:
        ctx.fail(("controller", "rule"), f"unknown heuristic rule {controller['rule']!r}")
    try:
        ControllerConfig(**{k: tuple(v) if k == "v0" else v for k, v in controller.items()})
    except (ContractError, TypeError) as exc:
        ctx.fail(("controller",), str(exc))

    horizon = _num(ctx, ("horizon",), d.get("horizon", 1000.0), positive=True)
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        ctx.fail(("seed",), "seed must be a nonnegative integer")
    reps = d.get("replications", 1)
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        ctx.fail(("replications",), "replications must be a positive integer")

    sc = Scenario(
        name=str(d.get("name", "scenario")),
        region=region,
        grid=grid,
        network=network,
        arrivals=arrivals,
        controller=controller,
        horizon=horizon,
        seed=seed,
        replications=reps,
        v=_vec(ctx, ("v",), d["v"], n) if "v" in d else None,
        lam=_vec(ctx, ("lam",), d["lam"], n) if "lam" in d else None,
        epsilon_shift=_num(ctx, ("epsilon_shift",), d.get("epsilon_shift", 0.0), nonneg=True),
        rho=_num(ctx, ("rho",), d.get("rho", 0.01), positive=True),
        sample_every=_num(ctx, ("sample_every",), d["sample_every"], positive=True) if "sample_every" in d else None,
        q0=_vec(ctx, ("q0",), d["q0"], n) if "q0" in d else None,
        output=str(d["output"]) if "output" in d else None,
    )
    if not sc.rho < 1:
        ctx.fail(("rho",), "rho must lie in (0, 1)")
    if sc.q0 is not None and min(sc.q0) < 0:
        ctx.fail(("q0",), "initial queues must be nonnegative")
    try:
        sc.build_arrivals()
        if has_region:
            sc.build_grid()
    except (ContractError, ValueError, RuntimeError) as exc:
        path = ("arrivals",) if "arriv" in str(exc) or "lam" in str(exc) else ("grid",)
        ctx.fail(path, str(exc))
    return sc
