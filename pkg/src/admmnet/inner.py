"""FISTA inner solver, centralized reference solves and the subgradient baseline."""

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .graph import metropolis_weights
from .problem import LOSS_NONE, L1Box, lambda_max_gram

__all__ = [
    "CompositeSubproblem",
    "InnerConfig",
    "InnerResult",
    "InnerSolverError",
    "StructuredSubproblem",
    "centralized_reference",
    "centralized_reference_p2",
    "fista_solve",
    "subgradient_baseline_step",
]


class InnerSolverError(RuntimeError):
    """Inner solve failed; carries the offending iterate when known."""

    def __init__(self, message, iterate=None, agent=None):
        super().__init__(message)
        self.iterate = iterate
        self.agent = agent


@dataclass(frozen=True)
class InnerConfig:
    """FISTA settings.

    ``step_size=None`` means ``1 / L`` from the subproblem's Lipschitz bound
    (falling back to backtracking if it has none); ``"backtracking"`` forces
    the halving line search.
    """

    pgr_tolerance: float = 1e-5
    max_inner_iterations: int = 10_000
    step_size: float | str | None = None
    backtrack_factor: float = 0.5

    def __post_init__(self):
        if not self.pgr_tolerance > 0:
            raise ValueError("pgr_tolerance must be positive")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be at least 1")
        if isinstance(self.step_size, str):
            if self.step_size != "backtracking":
                raise ValueError(f"unknown step rule {self.step_size!r}")
        elif self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")


@dataclass
class InnerResult:
    solution: np.ndarray
    inner_iterations_used: int
    final_pgr: float
    converged: bool
    step: float


@dataclass
class CompositeSubproblem:
    """``min_y s(y) + g(y)`` given by oracles.

    `smooth_gradient` maps a point to the gradient of ``s``; `reg` provides
    ``prox(v, gamma)``. `lipschitz` (of the gradient) enables a constant
    step; `smooth_value` enables backtracking.
    """

    smooth_gradient: object
    reg: object
    dim: int
    smooth_value: object = None
    lipschitz: float | None = None


def fista_solve(sub, start, cfg):
    """Accelerated proximal gradient with momentum ``(l-1)/(l+2)``.

    Stops at the first iteration with ``pgr = ||z_prev - y|| / (rho sqrt(K))``
    below the tolerance. The iterate history is not kept; `pgr` is computed
    from the same vectors that produced the returned solution.
    """
    K = sub.dim
    y_prev = np.array(start, dtype=float)
    if y_prev.shape != (K,):
        raise ValueError(f"start has shape {y_prev.shape}, expected ({K},)")

    rule = cfg.step_size
    if rule is None:
        rule = 1.0 / sub.lipschitz if sub.lipschitz else "backtracking"
    backtrack = rule == "backtracking"
    if backtrack:
        if sub.smooth_value is None:
            raise ValueError("backtracking needs a smooth_value oracle")
        rho = 1.0
    else:
        rho = float(rule)

    z = y_prev.copy()
    y = y_prev
    pgr = math.inf
    for it in range(1, cfg.max_inner_iterations + 1):
        g = np.asarray(sub.smooth_gradient(z), dtype=float)
        if not np.all(np.isfinite(g)):
            raise InnerSolverError(f"non-finite gradient at inner iteration {it}", iterate=z.copy())
        if backtrack:
            sz = sub.smooth_value(z)
            while True:
                y = sub.reg.prox(z - rho * g, 1.0 / rho)
                d = y - z
                if sub.smooth_value(y) <= sz + g @ d + (d @ d) / (2.0 * rho) + 1e-12 * abs(sz):
                    break
                rho *= cfg.backtrack_factor
        else:
            y = sub.reg.prox(z - rho * g, 1.0 / rho)
        d = z - y
        pgr = math.sqrt(float(d @ d)) / (rho * math.sqrt(K))
        if pgr < cfg.pgr_tolerance:
            return InnerResult(y, it, pgr, True, rho)
        z = y + ((it - 1.0) / (it + 2.0)) * (y - y_prev)
        y_prev = y
    return InnerResult(y, cfg.max_inner_iterations, pgr, False, rho)


@dataclass
class StructuredSubproblem:
    """``f(A y) + (w/2)||E y - r||^2 + (mu/2)||y||^2 + h^T y + g(y)``.

    The shape shared by the exact ADMM subproblems and the centralized
    solves; it runs on the compiled kernel when available. `l1w`/`bound`
    describe ``g`` as an :class:`L1Box`.
    """

    kind: int
    A: np.ndarray
    data: np.ndarray
    E: np.ndarray
    r: np.ndarray
    w: float
    mu: float
    h: np.ndarray
    l1w: np.ndarray
    bound: np.ndarray

    @classmethod
    def build(cls, dim, loss=None, A=None, E=None, r=None, w=0.0, mu=0.0, h=None, reg=None):
        kind = LOSS_NONE if loss is None else loss.kind
        A = np.zeros((0, dim)) if A is None else np.ascontiguousarray(A, dtype=float)
        data = np.zeros(0) if loss is None else np.ascontiguousarray(loss.data, dtype=float)
        if E is None or w == 0.0:
            E, r, w = np.zeros((0, dim)), np.zeros(0), 0.0
        reg = reg if reg is not None else L1Box()
        l1w, bound = reg.weights(dim)
        return cls(
            kind,
            A,
            data,
            np.ascontiguousarray(E, dtype=float),
            np.ascontiguousarray(r, dtype=float),
            float(w),
            float(mu),
            np.zeros(dim) if h is None else np.ascontiguousarray(h, dtype=float),
            l1w,
            bound,
        )

    @property
    def dim(self):
        return self.h.size

    def lipschitz(self, loss_lipschitz, lam_ata=None, lam_ete=None):
        L = self.mu
        if self.kind != LOSS_NONE:
            L += loss_lipschitz * (lambda_max_gram(self.A) if lam_ata is None else lam_ata)
        if self.w:
            L += self.w * (lambda_max_gram(self.E) if lam_ete is None else lam_ete)
        return L

    def gradient(self, y):
        return backend._fallback.structured_gradient(
            self.kind, self.A, self.data, self.E, self.r, self.w, self.mu, self.h, y
        )

    def as_composite(self, lipschitz=None):
        reg = L1Box(self.l1w, self.bound)
        return CompositeSubproblem(self.gradient, reg, self.dim, lipschitz=lipschitz)

    def solve(self, start, step, cfg, kernels=None):
        k = kernels or backend.kernels
        y, iters, pgr, ok = k.fista_structured(
            self.kind, self.A, self.data, self.E, self.r, self.w, self.mu, self.h,
            self.l1w, self.bound, np.ascontiguousarray(start, dtype=float),
            float(step), float(cfg.pgr_tolerance), int(cfg.max_inner_iterations),
        )
        return InnerResult(np.asarray(y), int(iters), float(pgr), bool(ok), float(step))


def _pooled_reg(regs, dim):
    ws, bs = zip(*(r.weights(dim) for r in regs))
    return L1Box(np.sum(ws, axis=0), np.min(bs, axis=0))


def centralized_reference(p1, cfg=None):
    """Minimize ``sum_i phi_i`` on pooled data; returns ``(y_star, obj_star)``."""
    cfg = cfg or InnerConfig(pgr_tolerance=1e-9, max_inner_iterations=1_000_000)
    K = p1.dim
    reg = _pooled_reg([a.reg for a in p1.agents], K)
    smooth = [a for a in p1.agents if a.loss is not None]
    kinds = {a.loss.kind for a in smooth}
    start = np.zeros(K)
    if len(kinds) == 1:
        loss0 = smooth[0].loss
        A = np.vstack([a.A for a in smooth])
        pooled = type(loss0)(np.concatenate([a.loss.data for a in smooth]))
        sub = StructuredSubproblem.build(K, loss=pooled, A=A, reg=reg)
        L = sub.lipschitz(loss0.lipschitz_grad)
        res = sub.solve(start, 1.0 / L, cfg) if L > 0 else None
        y = res.solution if res is not None else reg.prox(start, 1.0)
        if res is not None and not res.converged:
            raise InnerSolverError(f"reference solve hit the budget at pgr={res.final_pgr:.3e}", y)
    else:
        L = sum(a.lipschitz_smooth for a in smooth)
        sub = CompositeSubproblem(
            lambda y: sum(a.smooth_gradient(y) for a in smooth),
            reg,
            K,
            smooth_value=lambda y: sum(a.smooth_value(y) for a in smooth),
            lipschitz=L or None,
        )
        res = fista_solve(sub, start, cfg)
        if not res.converged:
            raise InnerSolverError(f"reference solve hit the budget at pgr={res.final_pgr:.3e}", res.solution)
        y = res.solution
    return y, p1.objective(y)


def centralized_reference_p2(p2, cfg=None):
    """Pooled solve of a slack-form P2 (see ``build_cpd_logistic_p2``).

    The slack is eliminated (``z = sum_i E_i x_i``) and FISTA runs on the
    stacked blocks. Returns ``(xs_star, obj_star)`` with ``z`` re-appended
    to the slack agent's block.
    """
    if p2.slack_agent is None:
        raise ValueError("centralized P2 reference needs a slack-form problem")
    cfg = cfg or InnerConfig(pgr_tolerance=1e-9, max_inner_iterations=1_000_000)
    s, M = p2.slack_agent, p2.slack_size
    blocks, regs_w, regs_b = [], [], []
    for i, a in enumerate(p2.agents):
        w, b = a.reg_weights()
        E = a.E
        if i == s:
            E, w, b = E[:, :-M], w[:-M], b[:-M]
        blocks.append(E)
        regs_w.append(w)
        regs_b.append(b)
    E_all = np.hstack(blocks)
    loss = p2.agents[s].loss
    reg = L1Box(np.concatenate(regs_w), np.concatenate(regs_b))
    sub = StructuredSubproblem.build(E_all.shape[1], loss=loss, A=E_all, reg=reg)
    L = sub.lipschitz(loss.lipschitz_grad)
    res = sub.solve(np.zeros(E_all.shape[1]), 1.0 / L, cfg)
    if not res.converged:
        raise InnerSolverError(f"reference solve hit the budget at pgr={res.final_pgr:.3e}", res.solution)
    x = res.solution
    xs, start = [], 0
    for i, E in enumerate(blocks):
        xi = x[start:start + E.shape[1]]
        start += E.shape[1]
        if i == s:
            xi = np.concatenate([xi, E_all @ x])
        xs.append(xi)
    return xs, p2.objective(xs)


def subgradient_baseline_step(Y, g, p1, k, step_scale=10.0, mixing=None):
    """One consensus-subgradient iteration with step ``step_scale / k``.

    Each agent mixes its neighbors' states with Metropolis weights, then
    steps along a subgradient of its own ``phi_i`` at the mixed point
    (``0`` taken at l1 kinks) and projects back onto its box.
    """
    if k < 1:
        raise ValueError("iteration index k must be at least 1")
    Y = np.asarray(Y, dtype=float)
    Wm = metropolis_weights(g) if mixing is None else mixing
    V = Wm @ Y
    alpha = step_scale / k
    out = np.empty_like(V)
    for i, a in enumerate(p1.agents):
        w, bound = a.reg_weights()
        sub = a.smooth_gradient(V[i]) + w * np.sign(V[i])
        out[i] = np.clip(V[i] - alpha * sub, -bound, bound)
    return out
