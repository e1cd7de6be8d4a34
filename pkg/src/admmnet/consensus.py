"""Consensus ADMM for P1: the exact (C-ADMM) and inexact (IC-ADMM) rounds.

Each agent keeps ``(y_i, p_i)`` where ``p_i`` aggregates the edge duals of
its neighborhood. A round first updates every ``p_i`` from the previous
round's neighbor states, then every ``y_i``; all reads come from the frozen
previous-round snapshot, so the agent loop order never matters.
"""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .graph import compute_spectrum, metropolis_weights
from .inner import InnerConfig, InnerSolverError, StructuredSubproblem, fista_solve, subgradient_baseline_step
from .metrics import IterationRecord, Trace, accuracy, consensus_error, flop_estimate
from .problem import beta_min_ic

__all__ = [
    "BetaConditionWarning",
    "ConsensusConfig",
    "ConsensusState",
    "DivergenceError",
    "P1Evaluator",
    "c_admm_round",
    "ic_admm_round",
    "initial_state",
    "run_consensus",
]

DIVERGENCE_FACTOR = 1e6


class BetaConditionWarning(UserWarning):
    """A proximal weight does not satisfy the convergence threshold."""


class DivergenceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class ConsensusState:
    Y: np.ndarray
    P: np.ndarray
    k: int = 0
    inner_iterations: np.ndarray | None = None

    def copy(self):
        return ConsensusState(
            self.Y.copy(),
            self.P.copy(),
            self.k,
            None if self.inner_iterations is None else self.inner_iterations.copy(),
        )


def initial_state(p1, y0=None):
    """``y_i = y0`` (default 0) for every agent and ``p_i = 0``."""
    N, K = p1.n_agents, p1.dim
    Y = np.zeros((N, K))
    if y0 is not None:
        Y[:] = np.asarray(y0, dtype=float)
    return ConsensusState(Y, np.zeros((N, K)), 0)


@dataclass
class ConsensusConfig:
    """Penalty ``c``, proximal weights ``beta`` (IC-ADMM), inner settings (C-ADMM)."""

    c: float
    beta: np.ndarray | None = None
    inner: InnerConfig = field(default_factory=InnerConfig)
    max_outer: int = 10_000
    acc_target: float = 1e-4
    cserr_target: float = 1e-5
    warm_start: bool = True
    y0: np.ndarray | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.beta is not None:
            self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
            if np.any(~(self.beta > 0)):
                raise ValueError("beta must be positive")
        self._beta_checked = False

    def gamma(self, g):
        """``gamma_i = beta_i + 2 c |N_i|``."""
        beta = np.broadcast_to(self.beta, (g.n_agents,))
        return beta + 2.0 * self.c * g.degrees

    def echo(self):
        return {
            "c": self.c,
            "beta": None if self.beta is None else [float(b) for b in self.beta],
            "pgr_tolerance": self.inner.pgr_tolerance,
            "max_inner_iterations": self.inner.max_inner_iterations,
            "max_outer": self.max_outer,
            "acc_target": self.acc_target,
            "cserr_target": self.cserr_target,
            "warm_start": self.warm_start,
        }


def check_beta_ic(p1, g, cfg, spectrum=None):
    """Warn for agents whose ``beta_i`` is at or below the IC-ADMM threshold."""
    spectrum = spectrum or compute_spectrum(g)
    beta = np.broadcast_to(cfg.beta, (p1.n_agents,))
    bad = []
    for i, a in enumerate(p1.agents):
        if a.loss is None:
            continue
        bmin = beta_min_ic(a, cfg.c, spectrum.lambda_min_d_plus_w)
        if beta[i] <= max(0.0, bmin):
            bad.append((i, float(beta[i]), float(bmin)))
    if bad:
        i, b, m = bad[0]
        warnings.warn(
            f"{len(bad)} agent(s) violate the beta threshold (agent {i}: beta={b:.4g} <= {m:.4g}); "
            "convergence is not guaranteed",
            BetaConditionWarning,
            stacklevel=3,
        )
    cfg._beta_checked = True
    return bad


def _neighbor_sums(Y, g):
    # sum over neighbors of y_j, per agent
    return g.adjacency.astype(float) @ Y


def c_admm_round(state, p1, g, cfg, inner=None, kernels=None):
    """One exact C-ADMM round.

    `inner` selects the subproblem solver: ``None`` uses the structured
    FISTA kernel, :func:`~admmnet.inner.fista_solve` (or any callable with
    its signature) runs the oracle-based path.
    """
    Y, P = state.Y, state.P
    c = cfg.c
    deg = g.degrees.astype(float)
    nsum = _neighbor_sums(Y, g)
    P_new = P + c * (deg[:, None] * Y - nsum)
    S = deg[:, None] * Y + nsum
    Y_new = np.empty_like(Y)
    iters = np.zeros(p1.n_agents, dtype=np.int64)
    for i, a in enumerate(p1.agents):
        mu = 2.0 * c * deg[i]
        h = P_new[i] - c * S[i]
        sub = StructuredSubproblem.build(a.dim, loss=a.loss, A=a.A, mu=mu, h=h, reg=a.reg)
        L = a.lipschitz_smooth + mu
        step = cfg.inner.step_size if isinstance(cfg.inner.step_size, float) else 1.0 / L
        start = Y[i] if cfg.warm_start else np.zeros(a.dim)
        try:
            if inner is None:
                res = sub.solve(start, step, cfg.inner, kernels)
            else:
                res = inner(sub.as_composite(lipschitz=L), start, cfg.inner)
        except (FloatingPointError, InnerSolverError) as exc:
            raise InnerSolverError(f"agent {i}: inner solve failed: {exc}", getattr(exc, "iterate", None), agent=i) from exc
        Y_new[i] = res.solution
        iters[i] = res.inner_iterations_used
    return ConsensusState(Y_new, P_new, state.k + 1, iters)


def ic_admm_round(state, p1, g, cfg, kernels=None):
    """One IC-ADMM round: a single proximal-gradient step per agent."""
    if cfg.beta is None:
        raise ValueError("IC-ADMM needs beta")
    if not cfg._beta_checked:
        check_beta_ic(p1, g, cfg)
    k = kernels or backend.kernels
    beta = np.ascontiguousarray(np.broadcast_to(cfg.beta, (p1.n_agents,)), dtype=float)
    stacked = p1.stacked()
    if stacked is not None:
        kind, A3, data, l1w, bound = stacked
        indptr, indices = g.csr()
        Y_new, P_new = k.ic_round(kind, A3, data, state.Y, state.P, indptr, indices, float(cfg.c), beta, l1w, bound)
        return ConsensusState(np.asarray(Y_new), np.asarray(P_new), state.k + 1)

    Y, P, c = state.Y, state.P, cfg.c
    deg = g.degrees.astype(float)
    nsum = _neighbor_sums(Y, g)
    P_new = P + c * (deg[:, None] * Y - nsum)
    Y_new = np.empty_like(Y)
    for i, a in enumerate(p1.agents):
        grad = a.smooth_gradient(Y[i])
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"agent {i}: non-finite gradient")
        gamma = beta[i] + 2.0 * c * deg[i]
        s = (beta[i] * Y[i] - grad - P_new[i] + c * (deg[i] * Y[i] + nsum[i])) / gamma
        Y_new[i] = a.reg.prox(s, gamma)
    return ConsensusState(Y_new, P_new, state.k + 1)


class P1Evaluator:
    """Fast ``sum_i phi_i(y)`` using the pooled data when the agents allow it."""

    def __init__(self, p1):
        self.p1 = p1
        st = p1.stacked()
        self._pooled = None
        if st is not None:
            kind, A3, data, l1w, bound = st
            a0 = p1.agents[0]
            loss = type(a0.loss)(data.ravel())
            self._pooled = (A3.reshape(-1, A3.shape[2]), loss, l1w.sum(axis=0), bound.min(axis=0))

    def __call__(self, y):
        if self._pooled is None:
            return self.p1.objective(y)
        A, loss, w, bound = self._pooled
        if np.any(np.abs(y) > bound):
            return np.inf
        return loss.value(A @ y) + float(w @ np.abs(y))


def _agent_dims(p1):
    return [(a.A.shape[0] if a.A is not None else 0, a.dim) for a in p1.agents]


def run_consensus(
    variant, p1, g, cfg, reference, seed=None, kernels=None, check_identities=False, state=None, step_scale=10.0
):
    """Run rounds until ``|acc|`` and ``cserr`` both meet their targets.

    `variant` is ``"exact"`` (C-ADMM), ``"inexact"`` (IC-ADMM) or
    ``"subgradient"`` (consensus subgradient baseline with step
    ``step_scale / k``). The trace starts with the ``k = 0`` record of the
    initial state.
    """
    algo = {"exact": "c-admm", "inexact": "ic-admm", "subgradient": "subgrad"}.get(variant)
    if algo is None:
        raise ValueError(f"unknown variant {variant!r}")
    y_star, obj_star = reference
    evaluate = P1Evaluator(p1)
    dims = _agent_dims(p1)
    trace = Trace(algo, config=cfg.echo(), seed=seed)
    if variant == "inexact":
        if cfg.beta is None:
            raise ValueError("IC-ADMM needs beta")
        bad = check_beta_ic(p1, g, cfg)
        trace.config["beta_violations"] = len(bad)
    mixing = None
    if variant == "subgradient":
        mixing = metropolis_weights(g)
        trace.config["step_scale"] = step_scale
    diag = {"max_sum_p": 0.0} if check_identities else None

    state = state.copy() if state is not None else initial_state(p1, cfg.y0)
    flops = 0
    t0 = time.perf_counter()
    baseline = None

    def record(st, inner_total):
        ymean = st.Y.mean(axis=0)
        obj = evaluate(ymean)
        acc, absolute = accuracy(obj, obj_star)
        trace.acc_absolute = absolute
        cs = consensus_error(st.Y)
        rec = IterationRecord(
            k=st.k, objective=obj, acc=acc, cserr=cs, inner_iterations=inner_total,
            cumulative_flops=flops, wall_time=time.perf_counter() - t0,
        )
        trace.append(rec)
        return rec

    rec = record(state, 0 if variant == "exact" else None)
    while True:
        if abs(rec.acc) < cfg.acc_target and rec.cserr < cfg.cserr_target:
            trace.status = "converged"
            break
        if state.k >= cfg.max_outer:
            trace.status = "max_outer"
            break
        if variant == "exact":
            state = c_admm_round(state, p1, g, cfg, kernels=kernels)
            inner_total = int(state.inner_iterations.sum())
            flops += sum(flop_estimate(algo, m, k, int(l)) for (m, k), l in zip(dims, state.inner_iterations))
        elif variant == "inexact":
            state = ic_admm_round(state, p1, g, cfg, kernels=kernels)
            inner_total = None
            flops += sum(flop_estimate(algo, m, k) for m, k in dims)
        else:
            Y = subgradient_baseline_step(state.Y, g, p1, state.k + 1, step_scale, mixing)
            state = ConsensusState(Y, state.P, state.k + 1)
            inner_total = None
            flops += sum(flop_estimate(algo, m, k) for m, k in dims)
        if diag is not None and variant != "subgradient":
            s = np.abs(state.P.sum(axis=0)).max() / (np.abs(state.P).sum(axis=1).max() + 1.0)
            diag["max_sum_p"] = max(diag["max_sum_p"], float(s))
        rec = record(state, inner_total)
        if not np.isfinite(rec.cserr) or not np.isfinite(rec.objective):
            trace.status = "diverged"
            raise DivergenceError(f"non-finite iterate at round {state.k}", trace)
        if baseline is None and rec.cserr > 0:
            baseline = rec.cserr
        elif baseline is not None and rec.cserr > DIVERGENCE_FACTOR * baseline:
            trace.status = "diverged"
            raise DivergenceError(
                f"cserr grew from {baseline:.3e} to {rec.cserr:.3e} by round {state.k}", trace
            )
    if diag is not None:
        trace.config["diagnostics"] = diag
    trace.final_state = state
    return trace


def stationary_multipliers(p1, y_star):
    """Multipliers ``p_i`` making ``y_i = y_star`` a fixed point of both rounds.

    Splits the pooled optimality certificate evenly: ``p_i = -grad_i - s/N``
    with ``s = -sum_i grad_i`` (requires identical ``g_i``).
    """
    grads = np.stack([a.smooth_gradient(y_star) for a in p1.agents])
    s = -grads.sum(axis=0)
    return -grads - s / p1.n_agents


def with_beta(cfg, beta):
    return replace(cfg, beta=beta)
