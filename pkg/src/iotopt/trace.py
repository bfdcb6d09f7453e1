"""Per-slot run records and their CSV form.

Column order in the CSV file is fixed::

    slot, x_0..x_{d-1}, loss, g_0..g_{N-1}, [q_0..q_{N-1}], lam_0..lam_{N-1}, extras...

Extras keep their insertion order (e.g. ``arm``, ``rng_draws``, ``regret``, ``fit``).
Metadata lines precede the header as ``# key=value``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INT_COLUMNS = {"slot", "arm", "rng_draws", "state", "action", "evals"}


@dataclass
class RunTrace:
    algo: str
    env: str
    seed: int
    decision: np.ndarray  # (T, d)
    loss: np.ndarray  # (T,)
    constraint: np.ndarray  # (T, N)
    multiplier: np.ndarray  # (T, N); zero columns when the algorithm has no dual
    queue: np.ndarray | None = None
    extras: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.decision = np.atleast_2d(np.asarray(self.decision, dtype=float))
        self.loss = np.asarray(self.loss, dtype=float).reshape(-1)
        T = self.loss.shape[0]
        self.constraint = np.asarray(self.constraint, dtype=float).reshape(T, -1)
        self.multiplier = np.asarray(self.multiplier, dtype=float).reshape(T, -1)
        if self.queue is not None:
            self.queue = np.asarray(self.queue, dtype=float).reshape(T, -1)
        if self.decision.shape[0] != T:
            raise ValueError("decision rows must match the horizon")
        for k, v in self.extras.items():
            if len(v) != T:
                raise ValueError(f"extra column {k!r} has the wrong length")

    @property
    def horizon(self) -> int:
        return self.loss.shape[0]

    def columns(self) -> list[str]:
        cols = ["slot"]
        cols += [f"x_{i}" for i in range(self.decision.shape[1])]
        cols.append("loss")
        cols += [f"g_{i}" for i in range(self.constraint.shape[1])]
        if self.queue is not None:
            cols += [f"q_{i}" for i in range(self.queue.shape[1])]
        cols += [f"lam_{i}" for i in range(self.multiplier.shape[1])]
        cols += list(self.extras)
        return cols

    def matrix(self) -> list[np.ndarray]:
        blocks = [np.arange(self.horizon)[:, None], self.decision, self.loss[:, None], self.constraint]
        if self.queue is not None:
            blocks.append(self.queue)
        blocks.append(self.multiplier)
        blocks += [np.asarray(v)[:, None] for v in self.extras.values()]
        return blocks

    def equals(self, other: "RunTrace") -> bool:
        same = (self.algo, self.env, self.seed) == (other.algo, other.env, other.seed)
        same &= self.columns() == other.columns()
        if not same:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.matrix(), other.matrix()))


def _fmt(v, integer: bool) -> str:
    return str(int(v)) if integer else repr(float(v))


def to_csv_text(trace: RunTrace) -> str:
    cols = trace.columns()
    ints = [c in INT_COLUMNS for c in cols]
    data = np.hstack([np.asarray(b, dtype=float) for b in trace.matrix()])
    out = io.StringIO()
    meta = {"algo": trace.algo, "env": trace.env, "seed": trace.seed, "horizon": trace.horizon,
            **trace.meta}
    for k, v in meta.items():
        out.write(f"# {k}={v}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(cols)
    for row in data.tolist():
        w.writerow([_fmt(v, i) for v, i in zip(row, ints)])
    return out.getvalue()


def write_trace(trace: RunTrace, path) -> Path:
    path = Path(path)
    path.write_bytes(to_csv_text(trace).encode("utf-8"))
    return path


def _block(cols, data, prefix):
    idx = [i for i, c in enumerate(cols) if c.startswith(prefix) and c[len(prefix):].isdigit()]
    return data[:, idx]


def read_trace(path) -> RunTrace:
    text = Path(path).read_bytes().decode("utf-8")
    lines = text.split("\n")
    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("# "):
        k, _, v = lines[i][2:].partition("=")
        meta[k] = v
        i += 1
    rows = list(csv.reader(lines[i:]))
    cols, body = rows[0], [r for r in rows[1:] if r]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(cols))
    known = {"slot", "loss"}
    extras = {}
    for j, c in enumerate(cols):
        head = c.split("_")[0]
        if c in known or (head in ("x", "g", "q", "lam") and c[len(head) + 1:].isdigit()):
            continue
        extras[c] = data[:, j].astype(np.int64) if c in INT_COLUMNS else data[:, j]
    has_queue = any(c.startswith("q_") for c in cols)
    algo, env, seed = meta.pop("algo"), meta.pop("env"), int(meta.pop("seed"))
    meta.pop("horizon", None)
    return RunTrace(
        algo=algo, env=env, seed=seed,
        decision=_block(cols, data, "x_"),
        loss=data[:, cols.index("loss")],
        constraint=_block(cols, data, "g_"),
        multiplier=_block(cols, data, "lam_"),
        queue=_block(cols, data, "q_") if has_queue else None,
        extras=extras, meta=meta,
    )
