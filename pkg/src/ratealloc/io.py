"""CSV and YAML emission for traces, distributions and reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import yaml

TRACE_COLUMNS = ("t", "link", "Q", "r", "v", "arrived", "served", "event_kind")


def write_trace_csv(path, trace, sigma=None):
    """One row per (sample, link).  ``sigma`` adds a band-bitmask column."""
    path = Path(path)
    cols = TRACE_COLUMNS + (("sigma",) if sigma is not None else ())
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k in range(len(trace.t)):
            for i in range(trace.Q.shape[1]):
                row = [
                    repr(float(trace.t[k])), i, repr(float(trace.Q[k, i])), repr(float(trace.r[k, i])),
                    repr(float(trace.v[k, i])), repr(float(trace.arrivals[k, i])),
                    repr(float(trace.served[k, i])), trace.kind[k],
                ]
                if sigma is not None:
                    row.append(int(sigma[trace.state[k], i]))
                w.writerow(row)
    return path


def read_trace_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_distribution_csv(path, vectors, pi, extra=None):
    """Columns ``state, r_0..r_{n-1}, [extra...], pi``; ``path`` may be a file object."""
    vectors = np.asarray(vectors)
    n = vectors.shape[1]
    extra = extra or {}

    def emit(fh):
        w = csv.writer(fh)
        w.writerow(["state"] + [f"r_{i}" for i in range(n)] + list(extra) + ["pi"])
        for k in range(vectors.shape[0]):
            w.writerow(
                [k] + [repr(float(x)) for x in vectors[k]]
                + [extra[c][k] for c in extra] + [repr(float(pi[k]))]
            )

    if hasattr(path, "write"):
        emit(path)
        return None
    path = Path(path)
    with path.open("w", newline="") as fh:
        emit(fh)
    return path


def read_distribution_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = [c for c in rows[0] if c.startswith("r_")]
    vectors = np.array([[float(r[c]) for c in cols] for r in rows])
    pi = np.array([float(r["pi"]) for r in rows])
    return vectors, pi


def dump_chain(chain):
    """Structured-text form of a chain: options, states and ``v``."""
    space = chain.space
    return yaml.safe_dump(
        {
            "options": [o.tolist() for o in space.options],
            "states": space.combos.tolist(),
            "v": chain.v.tolist(),
        },
        sort_keys=False,
    )


def load_chain(text):
    from .markov import AllocationChain
    from .statespace import StateSpace

    d = yaml.safe_load(text)
    return AllocationChain(StateSpace(d["options"], d["states"]), d["v"])


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path
