"""Convergence measurements and per-iteration trace records."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TRACE_COLUMNS",
    "IterationRecord",
    "Trace",
    "accuracy",
    "consensus_error",
    "flop_estimate",
    "linear_rate_fit",
]

TRACE_COLUMNS = (
    "k",
    "objective",
    "acc",
    "cserr",
    "feasibility",
    "dual_consensus",
    "inner_iterations",
    "cumulative_flops",
    "wall_time_s",
)


def accuracy(obj_at_mean, obj_star):
    """Relative gap ``(obj - obj*) / obj*``.

    Returns ``(value, absolute)``; when ``obj* == 0`` the plain gap is
    returned with ``absolute=True``.
    """
    if obj_star == 0:
        return obj_at_mean - obj_star, True
    return (obj_at_mean - obj_star) / obj_star, False


def consensus_error(Y):
    """Mean squared distance of the agents' vectors from their average."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    dev = Y - Y.mean(axis=0)
    return float(np.sum(dev * dev) / Y.shape[0])


def flop_estimate(algorithm, M, K, inner_iterations=1):
    """Per-agent multiplication count of one outer round.

    ``K + l (2 M K + 2 K)`` for the exact variants (``l`` inner FISTA
    iterations) and ``K + (2 M K + 2 K)`` for the inexact ones.
    """
    per_grad = 2 * M * K + 2 * K
    if algorithm in ("c-admm", "dc-admm"):
        return K + inner_iterations * per_grad
    if algorithm in ("ic-admm", "idc-admm"):
        return K + per_grad
    if algorithm == "subgrad":
        # mixing is not counted by the ADMM formulas; one gradient plus the step
        return K + per_grad
    raise ValueError(f"unknown algorithm {algorithm!r}")


def linear_rate_fit(errors, tail_fraction=0.5):
    """Least-squares fit of ``log(error)`` against ``k`` over the trailing part.

    Returns ``(rate, r_squared)`` with ``rate = exp(slope)``. A perfectly
    flat tail gives ``rate = 1`` and ``r_squared = 1``.
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or e.size < 2:
        raise ValueError("need at least two errors")
    if np.any(~(e > 0)):
        raise ValueError("errors must all be positive")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    n = max(2, int(math.ceil(tail_fraction * e.size)))
    y = np.log(e[-n:])
    k = np.arange(e.size - n, e.size, dtype=float)
    kc = k - k.mean()
    yc = y - y.mean()
    slope = float(kc @ yc / (kc @ kc))
    ss_tot = float(yc @ yc)
    resid = yc - slope * kc
    ss_res = float(resid @ resid)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return math.exp(slope), r2


@dataclass
class IterationRecord:
    k: int
    objective: float
    acc: float
    cserr: float | None = None
    feasibility: float | None = None
    dual_consensus: float | None = None
    inner_iterations: int | None = None
    cumulative_flops: int = 0
    wall_time: float = 0.0

    def row(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                return str(int(v))
            return repr(float(v))

        return [
            fmt(self.k),
            fmt(self.objective),
            fmt(self.acc),
            fmt(self.cserr),
            fmt(self.feasibility),
            fmt(self.dual_consensus),
            fmt(self.inner_iterations),
            fmt(self.cumulative_flops),
            fmt(self.wall_time),
        ]


@dataclass
class Trace:
    """Ordered iteration records of one run plus what is needed to replay it."""

    algorithm: str
    config: dict = field(default_factory=dict)
    seed: int | None = None
    records: list = field(default_factory=list)
    status: str = "running"
    acc_absolute: bool = False

    def append(self, rec):
        if self.records and rec.k <= self.records[-1].k:
            raise ValueError(f"iteration index must increase: {rec.k} after {self.records[-1].k}")
        self.records.append(rec)

    @property
    def final(self):
        return self.records[-1]

    @property
    def outer_iterations(self):
        return self.records[-1].k

    def column(self, name):
        attr = "wall_time" if name == "wall_time_s" else name
        return np.array([np.nan if getattr(r, attr) is None else getattr(r, attr) for r in self.records], dtype=float)

    def to_csv(self, path=None, include_wall_time=True):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = list(TRACE_COLUMNS) if include_wall_time else list(TRACE_COLUMNS[:-1])
        writer.writerow(cols)
        for rec in self.records:
            writer.writerow(rec.row()[: len(cols)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self):
        f = self.final
        out = {
            "algorithm": self.algorithm,
            "status": self.status,
            "outer_iterations": f.k,
            "final_objective": f.objective,
            "final_acc": f.acc,
            "total_flops": f.cumulative_flops,
            "wall_time_s": f.wall_time,
        }
        if f.cserr is not None:
            out["final_cserr"] = f.cserr
        if f.feasibility is not None:
            out["final_feasibility"] = f.feasibility
            out["final_dual_consensus"] = f.dual_consensus
        return out


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != TRACE_COLUMNS[: len(header)]:
        raise ValueError(f"{path}: unexpected trace header {header}")
    return [{h: (None if v == "" else float(v)) for h, v in zip(header, row)} for row in body]
