"""Dual consensus ADMM for P2: exact (DC-ADMM) and inexact (IDC-ADMM) rounds.

The agents run consensus ADMM on local copies ``nu_i`` of the multiplier of
``sum_i E_i x_i = q``. Each round every agent updates ``p_i``, then its
primal block ``x_i`` (exactly with FISTA, or by one proximal-gradient step),
then ``nu_i`` in closed form from the new ``x_i``.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .consensus import BetaConditionWarning, DivergenceError, DIVERGENCE_FACTOR
from .inner import InnerConfig, InnerSolverError, StructuredSubproblem
from .metrics import IterationRecord, Trace, accuracy, flop_estimate
from .problem import beta_min_idc, lambda_max_gram

__all__ = [
    "DualConsensusConfig",
    "DualConsensusState",
    "dc_admm_round",
    "feasibility_identity_residual",
    "idc_admm_round",
    "initial_dual_state",
    "kkt_residuals",
    "run_dual_consensus",
]


@dataclass
class DualConsensusState:
    x: list
    nu: np.ndarray
    p: np.ndarray
    k: int = 0
    inner_iterations: np.ndarray | None = None
    inner_pgr: np.ndarray | None = None

    def copy(self):
        return DualConsensusState(
            [xi.copy() for xi in self.x], self.nu.copy(), self.p.copy(), self.k,
            None if self.inner_iterations is None else self.inner_iterations.copy(),
            None if self.inner_pgr is None else self.inner_pgr.copy(),
        )


def initial_dual_state(p2, x0=None, nu0=None):
    """Zero ``p_i``; ``x_i`` and ``nu_i`` default to zero."""
    N, M = p2.n_agents, p2.n_constraints
    xs = [np.zeros(a.dim) for a in p2.agents] if x0 is None else [np.array(x, dtype=float) for x in x0]
    nu = np.zeros((N, M))
    if nu0 is not None:
        nu[:] = np.asarray(nu0, dtype=float)
    return DualConsensusState(xs, nu, np.zeros((N, M)), 0)


@dataclass
class DualConsensusConfig:
    c: float
    beta: np.ndarray | None = None
    inner: InnerConfig = field(default_factory=InnerConfig)
    max_outer: int = 50_000
    acc_target: float = 1e-4
    feasibility_target: float = 1e-4
    dual_consensus_target: float = 1e-6
    warm_start: bool = True

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.beta is not None:
            self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
            if np.any(~(self.beta > 0)):
                raise ValueError("IDC-ADMM needs every beta_i > 0")
        self._beta_checked = False

    def echo(self):
        return {
            "c": self.c,
            "beta": None if self.beta is None else [float(b) for b in self.beta],
            "pgr_tolerance": self.inner.pgr_tolerance,
            "max_inner_iterations": self.inner.max_inner_iterations,
            "max_outer": self.max_outer,
            "acc_target": self.acc_target,
            "feasibility_target": self.feasibility_target,
            "dual_consensus_target": self.dual_consensus_target,
            "warm_start": self.warm_start,
        }


def check_beta_idc(p2, g, cfg):
    beta = np.broadcast_to(cfg.beta, (p2.n_agents,))
    bad = []
    for i, a in enumerate(p2.agents):
        bmin = beta_min_idc(a, cfg.c, int(g.degrees[i]))
        if beta[i] <= bmin:
            bad.append((i, float(beta[i]), float(bmin)))
    if bad:
        i, b, m = bad[0]
        warnings.warn(
            f"{len(bad)} agent(s) violate the IDC beta threshold (agent {i}: beta={b:.4g} <= {m:.4g})",
            BetaConditionWarning,
            stacklevel=3,
        )
    cfg._beta_checked = True
    return bad


def _dual_prelude(state, g, c):
    # p-update and the neighborhood sums S_i = sum_j (nu_i + nu_j), both from round k-1
    deg = g.degrees.astype(float)
    nsum = g.adjacency.astype(float) @ state.nu
    p_new = state.p + c * (deg[:, None] * state.nu - nsum)
    S = deg[:, None] * state.nu + nsum
    return deg, p_new, S


def _nu_step(a, x, q_share, S_i, p_i, c, d):
    return (S_i - p_i / c + (a.E @ x - q_share) / c) / (2.0 * d)


_gram_cache = {}


def _lam_ete(a):
    key = id(a)
    hit = _gram_cache.get(key)
    if hit is None or hit[0] is not a:
        hit = (a, lambda_max_gram(a.E))
        _gram_cache[key] = hit
    return hit[1]


def dc_admm_round(state, p2, g, cfg, inner=None, kernels=None):
    """One DC-ADMM round; the x-subproblem is solved by FISTA.

    `inner` may be :func:`~admmnet.inner.fista_solve` to force the
    oracle-based solver instead of the structured kernel.
    """
    c = cfg.c
    N = p2.n_agents
    q_share = p2.q / N
    deg, p_new, S = _dual_prelude(state, g, c)
    xs, nu = [], np.empty_like(state.nu)
    iters = np.zeros(N, dtype=np.int64)
    pgrs = np.zeros(N)
    for i, a in enumerate(p2.agents):
        d = deg[i]
        w = 1.0 / (2.0 * d * c)
        r = q_share + p_new[i] - c * S[i]
        sub = StructuredSubproblem.build(a.dim, loss=a.loss, A=a.A, E=a.E, r=r, w=w, reg=a.reg)
        # L = 0 only when the block has no smooth part at all; any step then solves it
        L = a.lipschitz_smooth + w * _lam_ete(a) or 1.0
        step = cfg.inner.step_size if isinstance(cfg.inner.step_size, float) else 1.0 / L
        start = state.x[i] if cfg.warm_start else np.zeros(a.dim)
        try:
            if inner is None:
                res = sub.solve(start, step, cfg.inner, kernels)
            else:
                res = inner(sub.as_composite(lipschitz=L), start, cfg.inner)
        except (FloatingPointError, InnerSolverError) as exc:
            raise InnerSolverError(f"agent {i}: inner solve failed: {exc}", getattr(exc, "iterate", None), agent=i) from exc
        xs.append(res.solution)
        iters[i] = res.inner_iterations_used
        pgrs[i] = res.final_pgr
        nu[i] = _nu_step(a, res.solution, q_share, S[i], p_new[i], c, d)
    return DualConsensusState(xs, nu, p_new, state.k + 1, iters, pgrs)


def idc_admm_round(state, p2, g, cfg):
    """One IDC-ADMM round: one linearized proximal step per agent."""
    if cfg.beta is None:
        raise ValueError("IDC-ADMM needs beta")
    if not cfg._beta_checked:
        check_beta_idc(p2, g, cfg)
    c = cfg.c
    N = p2.n_agents
    q_share = p2.q / N
    beta = np.broadcast_to(cfg.beta, (N,))
    deg, p_new, S = _dual_prelude(state, g, c)
    xs, nu = [], np.empty_like(state.nu)
    for i, a in enumerate(p2.agents):
        d, b = deg[i], beta[i]
        x = state.x[i]
        grad = a.smooth_gradient(x)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"agent {i}: non-finite gradient")
        v = (a.E @ x - q_share) / c - p_new[i] / c + S[i]
        x_new = a.reg.prox(x - grad / b - (a.E.T @ v) / (2.0 * b * d), b)
        xs.append(x_new)
        nu[i] = _nu_step(a, x_new, q_share, S[i], p_new[i], c, d)
    return DualConsensusState(xs, nu, p_new, state.k + 1)


def kkt_residuals(state, p2, g):
    """``(stationarity per agent, feasibility, dual consensus)``.

    Stationarity is ``dist(0, d phi_i(x_i) + E_i^T nu_i)`` with the
    minimal-norm choice of l1 subgradient and box normal. Dual consensus
    sums ``||nu_i - nu_j||^2`` over ordered neighbor pairs.
    """
    stat = np.empty(p2.n_agents)
    for i, a in enumerate(p2.agents):
        gsm = a.smooth_gradient(state.x[i]) + a.E.T @ state.nu[i]
        stat[i] = float(np.linalg.norm(a.reg.min_norm_subgradient_residual(state.x[i], gsm)))
    feas = float(np.linalg.norm(p2.constraint_residual(state.x)))
    nu = state.nu
    dc = 0.0
    for i in range(p2.n_agents):
        diff = nu[list(g.neighbor_lists[i])] - nu[i]
        dc += float(np.sum(diff * diff))
    return stat, feas, dc


def feasibility_identity_residual(prev, cur, p2, g, c):
    """Norm of ``(sum_i E_i x_i - q) - c sum_i sum_{j in N_i} (dnu_i + dnu_j)``.

    ``dnu = nu^(k) - nu^(k-1)``; the two sides agree for every DC/IDC-ADMM
    iterate, which ties primal feasibility to dual agreement.
    """
    lhs = p2.constraint_residual(cur.x)
    dnu = cur.nu - prev.nu
    deg = g.degrees.astype(float)
    rhs = c * (deg @ dnu + (g.adjacency.astype(float) @ dnu).sum(axis=0))
    return float(np.linalg.norm(lhs - rhs))


def _agent_dims(p2):
    return [
        (a.E.shape[0] + (a.A.shape[0] if a.A is not None else 0), a.dim) for a in p2.agents
    ]


def run_dual_consensus(variant, p2, g, cfg, reference_obj, seed=None, kernels=None, check_identities=False, state=None):
    """Run DC-ADMM (``"exact"``) or IDC-ADMM (``"inexact"``) to the targets.

    Stops once ``|acc|``, the feasibility residual and the dual consensus
    error are all below target, or at `max_outer`. With `check_identities`
    the trace config gains a ``diagnostics`` block holding the worst
    ``sum_i p_i`` drift, feasibility-identity residual and (DC-ADMM) the
    stationarity-to-pgr ratio seen over all rounds.
    """
    algo = {"exact": "dc-admm", "inexact": "idc-admm"}.get(variant)
    if algo is None:
        raise ValueError(f"unknown variant {variant!r}")
    trace = Trace(algo, config=cfg.echo(), seed=seed)
    if variant == "inexact":
        if cfg.beta is None:
            raise ValueError("IDC-ADMM needs beta")
        trace.config["beta_violations"] = len(check_beta_idc(p2, g, cfg))
    dims = _agent_dims(p2)
    diag = (
        {"max_sum_p": 0.0, "max_identity_residual": 0.0, "max_stationarity": 0.0, "max_stationarity_ratio": 0.0}
        if check_identities
        else None
    )

    state = state.copy() if state is not None else initial_dual_state(p2)
    flops = 0
    t0 = time.perf_counter()
    baseline = None

    def record(st, inner_total):
        obj = p2.objective(st.x)
        acc, absolute = accuracy(obj, reference_obj)
        trace.acc_absolute = absolute
        _, feas, dc = kkt_residuals_light(st, p2, g)
        rec = IterationRecord(
            k=st.k, objective=obj, acc=acc, feasibility=feas, dual_consensus=dc,
            inner_iterations=inner_total, cumulative_flops=flops, wall_time=time.perf_counter() - t0,
        )
        trace.append(rec)
        return rec

    rec = record(state, 0 if variant == "exact" else None)
    while True:
        if (
            abs(rec.acc) < cfg.acc_target
            and rec.feasibility < cfg.feasibility_target
            and rec.dual_consensus < cfg.dual_consensus_target
        ):
            trace.status = "converged"
            break
        if state.k >= cfg.max_outer:
            trace.status = "max_outer"
            break
        prev = state
        if variant == "exact":
            state = dc_admm_round(state, p2, g, cfg, kernels=kernels)
            inner_total = int(state.inner_iterations.sum())
            flops += sum(flop_estimate(algo, m, k, int(l)) for (m, k), l in zip(dims, state.inner_iterations))
        else:
            state = idc_admm_round(state, p2, g, cfg)
            inner_total = None
            flops += sum(flop_estimate(algo, m, k) for m, k in dims)
        if diag is not None:
            s = np.abs(state.p.sum(axis=0)).max() / (np.abs(state.p).sum(axis=1).max() + 1.0)
            diag["max_sum_p"] = max(diag["max_sum_p"], float(s))
            diag["max_identity_residual"] = max(
                diag["max_identity_residual"], feasibility_identity_residual(prev, state, p2, g, cfg.c)
            )
            if variant == "exact":
                stat, _, _ = kkt_residuals(state, p2, g)
                diag["max_stationarity"] = max(diag["max_stationarity"], float(stat.max()))
                bound = np.array(
                    [2.0 * np.sqrt(a.dim) * cfg.inner.pgr_tolerance for a in p2.agents]
                )
                diag["max_stationarity_ratio"] = max(diag["max_stationarity_ratio"], float((stat / bound).max()))
        rec = record(state, inner_total)
        if not np.isfinite(rec.objective) or not np.isfinite(rec.feasibility):
            trace.status = "diverged"
            raise DivergenceError(f"non-finite iterate at round {state.k}", trace)
        if baseline is None and rec.feasibility > 0:
            baseline = rec.feasibility
        elif baseline is not None and rec.feasibility > DIVERGENCE_FACTOR * baseline:
            trace.status = "diverged"
            raise DivergenceError(
                f"feasibility residual grew from {baseline:.3e} to {rec.feasibility:.3e} by round {state.k}",
                trace,
            )
    if diag is not None:
        trace.config["diagnostics"] = diag
    trace.final_state = state
    return trace


def kkt_residuals_light(state, p2, g):
    """Feasibility and dual consensus only (the per-round stopping data)."""
    feas = float(np.linalg.norm(p2.constraint_residual(state.x)))
    nu = state.nu
    W = g.adjacency.astype(float)
    deg = g.degrees.astype(float)
    # sum_i sum_{j in N_i} ||nu_i - nu_j||^2 = 2 tr(nu^T L nu)
    L = np.diag(deg) - W
    dc = float(2.0 * np.sum(nu * (L @ nu)))
    return None, feas, max(dc, 0.0)
