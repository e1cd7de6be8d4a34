"""Experiment specs, synthetic data, dispatch and comparison reports.

A spec is a flat ``key = value`` text file. The master seed fans out to
independent graph, data and algorithm streams through
:class:`numpy.random.SeedSequence` spawning, so changing one component never
perturbs another.
"""

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .consensus import BetaConditionWarning, ConsensusConfig, run_consensus
from .dual import DualConsensusConfig, run_dual_consensus
from .graph import compute_spectrum, generate_connected_graph
from .inner import InnerConfig, centralized_reference, centralized_reference_p2
from .problem import (
    beta_min_ic,
    beta_min_idc,
    build_cpd_logistic_p2,
    build_rpd_p1,
    choose_beta,
    partition_columns,
)

__all__ = [
    "ALGORITHMS",
    "PROBLEMS",
    "ExperimentSpec",
    "SpecError",
    "SyntheticDataset",
    "build_instance",
    "compare",
    "generate_dataset",
    "run_experiment",
    "tune_beta",
]

PROBLEMS = ("rpd-logistic", "rpd-lasso", "cpd-logistic")
ALGORITHMS = ("c-admm", "ic-admm", "dc-admm", "idc-admm", "subgrad")
_P1_ALGOS = ("c-admm", "ic-admm", "subgrad")
_P2_ALGOS = ("dc-admm", "idc-admm")


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    """Everything needed to replay one run.

    For the row-partitioned problems `n_samples` is the per-agent row count
    and `n_features` the shared dimension; for ``cpd-logistic``
    `n_samples` is the total row count (the coupling size) and
    `n_features` the per-agent block width.
    """

    problem: str = "rpd-logistic"
    n_agents: int = 10
    n_samples: int = 30
    n_features: int = 200
    l1_weight: float = 0.1
    box_bound: float = 1.0
    feature_scale: float = 0.02
    sparsity: float = 0.1
    label_noise: float = 0.05
    graph_density: float = 0.3
    force_non_bipartite: bool = True
    algorithm: str = "ic-admm"
    c: float = 0.2
    beta: str = "auto"
    beta_margin: float = 1.05
    pgr_tolerance: float = 1e-5
    max_inner: int = 10_000
    warm_start: bool = True
    reference_tolerance: float = 1e-9
    acc_target: float = 1e-4
    cserr_target: float = 1e-5
    feasibility_target: float = 1e-4
    dual_consensus_target: float = 1e-6
    subgrad_step: float = 10.0
    max_outer: int = 50_000
    seed: int = 0
    output: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.problem not in PROBLEMS:
            raise SpecError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.algorithm not in ALGORITHMS:
            raise SpecError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        allowed = _P2_ALGOS if self.problem == "cpd-logistic" else _P1_ALGOS
        if self.algorithm not in allowed:
            raise SpecError(f"algorithm {self.algorithm} does not apply to {self.problem}")
        for name in ("n_agents", "n_samples", "n_features", "max_inner", "max_outer"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be positive")
        if self.l1_weight < 0:
            raise SpecError("l1_weight must be nonnegative")
        if not self.box_bound > 0:
            raise SpecError("box_bound must be positive")
        if self.problem == "cpd-logistic" and math.isinf(self.box_bound):
            raise SpecError("cpd-logistic needs a finite box_bound")
        if not self.feature_scale > 0:
            raise SpecError("feature_scale must be positive")
        if not 0 < self.sparsity <= 1:
            raise SpecError("sparsity must lie in (0, 1]")
        if self.problem == "rpd-lasso":
            if self.label_noise < 0:
                raise SpecError("label_noise is a noise standard deviation, must be nonnegative")
        elif not 0 <= self.label_noise < 1:
            raise SpecError("label_noise is a flip probability in [0, 1)")
        if not self.c > 0:
            raise SpecError("c must be positive")
        if self.beta != "auto":
            vals = self.beta_values()
            if len(vals) not in (1, self.n_agents) or any(not v > 0 for v in vals):
                raise SpecError(f"beta must be 'auto' or 1 or {self.n_agents} positive numbers")
        if not self.beta_margin > 1:
            raise SpecError("beta_margin must exceed 1")
        if self.seed < 0:
            raise SpecError("seed must be a nonnegative integer")

    def beta_values(self):
        try:
            return [float(v) for v in self.beta.replace(",", " ").split()]
        except ValueError:
            raise SpecError(f"cannot parse beta {self.beta!r}") from None

    @classmethod
    def from_text(cls, text, source="<spec>"):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SpecError(f"{source}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise SpecError(f"{source}:{lineno}: unknown key {key!r}")
            if key in values:
                raise SpecError(f"{source}:{lineno}: duplicate key {key!r}")
            values[key] = _parse_value(types[key], val, f"{source}:{lineno}")
        return cls(**values)

    @classmethod
    def from_file(cls, path):
        return cls.from_text(Path(path).read_text(), str(path))

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def problem_key(self):
        """Fields that determine the instance (graph, data, problem)."""
        names = (
            "problem", "n_agents", "n_samples", "n_features", "l1_weight", "box_bound",
            "feature_scale", "sparsity", "label_noise", "graph_density", "force_non_bipartite", "seed",
        )
        return tuple((n, getattr(self, n)) for n in names)


def _parse_value(typ, val, where):
    try:
        if typ in (bool, "bool"):
            low = val.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(val)
        if typ in (int, "int"):
            return int(val)
        if typ in (float, "float"):
            return float(val)
        return val
    except ValueError:
        raise SpecError(f"{where}: bad value {val!r}") from None


# ---------------------------------------------------------------------------
# seeds and data


def sub_seeds(master):
    """``(graph, data, algorithm)`` seeds spawned from the master seed."""
    kids = np.random.SeedSequence(master).spawn(3)
    return tuple(int(k.generate_state(1, dtype=np.uint64)[0]) for k in kids)


@dataclass
class SyntheticDataset:
    """Features, labels (``+-1``) or regression targets, and the planted model."""

    features: np.ndarray
    labels: np.ndarray
    planted: np.ndarray
    seed: int
    row_partitioned: bool = True


def generate_dataset(spec):
    """Gaussian features with a planted sparse model.

    Logistic labels are ``sign(x^T w)`` flipped with probability
    `label_noise`; lasso targets are ``x^T w`` plus Gaussian noise of that
    standard deviation. Features are scaled by `feature_scale`.
    """
    _, data_seed, _ = sub_seeds(spec.seed)
    rng = np.random.default_rng(data_seed)
    if spec.problem == "cpd-logistic":
        rows, dim = spec.n_samples, spec.n_agents * spec.n_features
    else:
        rows, dim = spec.n_agents * spec.n_samples, spec.n_features
    X = rng.standard_normal((rows, dim)) * spec.feature_scale
    w = np.zeros(dim)
    nnz = max(1, int(round(spec.sparsity * dim)))
    support = np.sort(rng.choice(dim, nnz, replace=False))
    w[support] = rng.standard_normal(nnz)
    margin = X @ w
    if spec.problem == "rpd-lasso":
        y = margin + spec.label_noise * rng.standard_normal(rows)
    else:
        y = np.where(margin >= 0, 1.0, -1.0)
        flip = rng.random(rows) < spec.label_noise
        y[flip] = -y[flip]
    return SyntheticDataset(X, y, w, data_seed, spec.problem != "cpd-logistic")


@dataclass
class Instance:
    spec: ExperimentSpec
    graph: object
    dataset: SyntheticDataset
    problem: object
    reference: tuple = field(default=None)


def build_instance(spec, with_reference=True):
    """Graph, dataset, problem and (optionally) the centralized reference."""
    graph_seed, _, _ = sub_seeds(spec.seed)
    g = generate_connected_graph(spec.n_agents, spec.graph_density, graph_seed, spec.force_non_bipartite)
    data = generate_dataset(spec)
    if spec.problem == "cpd-logistic":
        blocks = partition_columns(data.features, spec.n_agents)
        prob = build_cpd_logistic_p2(blocks, data.labels, spec.l1_weight, spec.box_bound)
    else:
        loss = "logistic" if spec.problem == "rpd-logistic" else "quadratic"
        prob = build_rpd_p1(data.features, data.labels, spec.n_agents, loss, spec.l1_weight, spec.box_bound)
    inst = Instance(spec, g, data, prob)
    if with_reference:
        cfg = InnerConfig(pgr_tolerance=spec.reference_tolerance, max_inner_iterations=5_000_000)
        if spec.problem == "cpd-logistic":
            inst.reference = centralized_reference_p2(prob, cfg)
        else:
            inst.reference = centralized_reference(prob, cfg)
    return inst


def tune_beta(spec, inst=None):
    """Per-agent ``(beta_min, beta)`` under the margin rule for the spec's algorithm."""
    inst = inst or build_instance(spec, with_reference=False)
    g, prob = inst.graph, inst.problem
    if spec.problem == "cpd-logistic":
        mins = [beta_min_idc(a, spec.c, int(g.degrees[i])) for i, a in enumerate(prob.agents)]
    else:
        lmin = compute_spectrum(g).lambda_min_d_plus_w
        mins = [beta_min_ic(a, spec.c, lmin) for a in prob.agents]
    return np.array(mins), np.array([choose_beta(m, spec.beta_margin) for m in mins])


# ---------------------------------------------------------------------------
# runs


def _resolve_beta(spec, inst):
    mins, auto = tune_beta(spec, inst)
    if spec.beta == "auto":
        return mins, auto
    vals = spec.beta_values()
    return mins, np.broadcast_to(np.array(vals), (spec.n_agents,)).copy()


def run_experiment(spec, out=None, inst=None, check_identities=False, kernels=None):
    """Build the instance, run the spec's algorithm, optionally write the trace.

    Returns ``(trace, summary)``. The trace CSV goes to `out` (or
    ``spec.output``) and the summary text beside it with a
    ``.summary.txt`` suffix.
    """
    inst = inst or build_instance(spec)
    inner = InnerConfig(pgr_tolerance=spec.pgr_tolerance, max_inner_iterations=spec.max_inner)
    algo = spec.algorithm
    beta_info = None
    with warnings.catch_warnings():
        warnings.simplefilter("always", BetaConditionWarning)
        if algo in _P1_ALGOS:
            beta = None
            if algo == "ic-admm":
                mins, beta = _resolve_beta(spec, inst)
                beta_info = (mins, beta)
            cfg = ConsensusConfig(
                spec.c, beta=beta, inner=inner, max_outer=spec.max_outer,
                acc_target=spec.acc_target, cserr_target=spec.cserr_target, warm_start=spec.warm_start,
            )
            variant = {"c-admm": "exact", "ic-admm": "inexact", "subgrad": "subgradient"}[algo]
            trace = run_consensus(
                variant, inst.problem, inst.graph, cfg, inst.reference, seed=spec.seed,
                kernels=kernels, check_identities=check_identities, step_scale=spec.subgrad_step,
            )
        else:
            beta = None
            if algo == "idc-admm":
                mins, beta = _resolve_beta(spec, inst)
                beta_info = (mins, beta)
            cfg = DualConsensusConfig(
                spec.c, beta=beta, inner=inner, max_outer=spec.max_outer, acc_target=spec.acc_target,
                feasibility_target=spec.feasibility_target,
                dual_consensus_target=spec.dual_consensus_target, warm_start=spec.warm_start,
            )
            variant = "exact" if algo == "dc-admm" else "inexact"
            trace = run_dual_consensus(
                variant, inst.problem, inst.graph, cfg, inst.reference[1], seed=spec.seed,
                kernels=kernels, check_identities=check_identities,
            )
    trace.config["spec"] = spec.to_text()
    if beta_info is not None:
        trace.config["beta_min"] = [float(v) for v in beta_info[0]]
    summary = trace.summary()
    summary["reference_objective"] = float(inst.reference[1])
    if beta_info is not None:
        summary["beta_min_max"] = float(np.max(beta_info[0]))
        summary["beta_max"] = float(np.max(beta_info[1]))
    path = out or spec.output
    if path:
        trace.to_csv(path)
        Path(str(path) + ".summary.txt").write_text(format_summary(summary))
    return trace, summary


def format_summary(summary):
    """``key: value`` lines with stable field names."""
    lines = []
    for k, v in summary.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


SUMMARY_FIELDS = (
    "algorithm", "status", "outer_iterations", "final_objective", "final_acc",
    "final_cserr", "final_feasibility", "final_dual_consensus", "total_flops", "wall_time_s",
)


def compare(specs, inst=None):
    """Run every spec on the shared instance; returns ``(rows, report)``.

    All specs must describe the same instance (same problem fields and
    master seed). `rows` is a list of summary dicts; `report` holds a CSV
    block and an aligned text table, plus which algorithm needed the fewest
    rounds and flops and which ended with the best accuracy.
    """
    if len(specs) < 2:
        raise SpecError("compare needs at least two specs")
    key = specs[0].problem_key()
    for s in specs[1:]:
        if s.problem_key() != key:
            diff = [a[0] for a, b in zip(key, s.problem_key()) if a != b]
            raise SpecError(f"specs describe different instances (differ in {', '.join(diff)})")
    inst = inst or build_instance(specs[0])
    rows = [run_experiment(s, inst=inst)[1] for s in specs]
    cols = [f for f in SUMMARY_FIELDS if any(f in r for r in rows)]

    def cell(r, f):
        v = r.get(f, "")
        return f"{v:.6g}" if isinstance(v, float) else str(v)

    csv_lines = [",".join(cols)] + [",".join(cell(r, f) for f in cols) for r in rows]
    widths = [max(len(f), *(len(cell(r, f)) for r in rows)) for f in cols]
    table = [" ".join(f.ljust(w) for f, w in zip(cols, widths))]
    table += [" ".join(cell(r, f).ljust(w) for f, w in zip(cols, widths)) for r in rows]
    ordering = {
        "fewest_rounds": min(rows, key=lambda r: r["outer_iterations"])["algorithm"],
        "fewest_flops": min(rows, key=lambda r: r["total_flops"])["algorithm"],
        "best_acc": min(rows, key=lambda r: abs(r["final_acc"]))["algorithm"],
    }
    report = {"csv": "\n".join(csv_lines) + "\n", "table": "\n".join(table) + "\n", "ordering": ordering}
    return rows, report
