"""Agent objectives ``phi_i(y) = f_i(A_i y) + g_i(y)`` and problem containers.

Two problem forms are supported:

* :class:`ProblemP1` -- consensus form, every agent holds the shared ``y``.
* :class:`ProblemP2` -- each agent owns a block ``x_i`` and the blocks are
  coupled through ``sum_i E_i x_i = q``.

Smooth losses expose value/gradient oracles plus the constants the step-size
conditions need; the only non-smooth part supported is ``l1 + box`` whose
prox is shrink-then-clip.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eig import jacobi_eigenvalues, power_iteration_max

__all__ = [
    "AgentObjective",
    "L1Box",
    "LogisticLoss",
    "ProblemP1",
    "ProblemP2",
    "QuadraticLoss",
    "beta_min_ic",
    "beta_min_idc",
    "build_cpd_logistic_p2",
    "build_rpd_p1",
    "choose_beta",
    "lambda_max_gram",
    "logistic_loss",
    "partition_columns",
    "partition_rows",
    "prox_l1_box",
    "quadratic_loss",
    "read_matrix_csv",
    "sigmoid",
    "soft_threshold",
    "softplus",
    "write_matrix_csv",
]

LOSS_NONE, LOSS_LOGISTIC, LOSS_QUADRATIC = 0, 1, 2

BETA_MARGIN = 1.05
BETA_FLOOR = 1e-3


# ---------------------------------------------------------------------------
# scalar helpers


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ---------------------------------------------------------------------------
# smooth losses


class LogisticLoss:
    """``f(u) = sum_m log(1 + exp(-b_m u_m))`` for labels ``b_m`` in {-1, +1}.

    The gradient is 1/4-Lipschitz. The loss is only strongly convex on a
    bounded set; `margin_bound` U declares ``|u_m| <= U`` and the modulus is
    the smallest Hessian entry on that box, ``s(U) (1 - s(U))``.
    """

    kind = LOSS_LOGISTIC
    lipschitz_grad = 0.25

    def __init__(self, labels, margin_bound=math.inf):
        b = np.asarray(labels, dtype=float).ravel()
        if not np.all((b == 1.0) | (b == -1.0)):
            bad = b[(b != 1.0) & (b != -1.0)][:3]
            raise ValueError(f"labels must be +1 or -1, found {bad.tolist()}")
        if not margin_bound > 0:
            raise ValueError("margin_bound must be positive")
        b.setflags(write=False)
        self.labels = b
        self.margin_bound = float(margin_bound)
        if math.isinf(self.margin_bound):
            self.strong_convexity = 0.0
        else:
            s = float(sigmoid(self.margin_bound))
            self.strong_convexity = s * (1.0 - s)

    @property
    def data(self):
        return self.labels

    @property
    def dim(self):
        return self.labels.size

    def value(self, u):
        return float(np.sum(softplus(-self.labels * u)))

    def gradient(self, u):
        return -self.labels * sigmoid(-self.labels * u)


class QuadraticLoss:
    """``f(u) = ||b - u||^2``; gradient ``2 (u - b)``, L = sigma^2 = 2."""

    kind = LOSS_QUADRATIC
    lipschitz_grad = 2.0
    strong_convexity = 2.0

    def __init__(self, target):
        b = np.array(target, dtype=float).ravel()
        b.setflags(write=False)
        self.target = b

    @property
    def data(self):
        return self.target

    @property
    def dim(self):
        return self.target.size

    def value(self, u):
        r = u - self.target
        return float(r @ r)

    def gradient(self, u):
        return 2.0 * (u - self.target)


def logistic_loss(labels, margin_bound=math.inf):
    return LogisticLoss(labels, margin_bound)


def quadratic_loss(target):
    return QuadraticLoss(target)


# ---------------------------------------------------------------------------
# l1 + box regularizer


def soft_threshold(s, threshold):
    """Componentwise ``sign(s) * max(|s| - t, 0)``."""
    t = np.asarray(threshold, dtype=float)
    if np.any(t < 0):
        raise ValueError("threshold must be nonnegative")
    s = np.asarray(s, dtype=float)
    return np.maximum(s - t, 0.0) - np.maximum(-s - t, 0.0)


def prox_l1_box(s, l1_weight, box_bound, gamma):
    """Prox of ``w ||y||_1 + indicator(|y_j| <= a)`` at parameter `gamma`.

    Solves ``min_y w ||y||_1 + (gamma/2) ||y - s||^2`` over the box, which
    separates per coordinate into shrink-then-clip. `l1_weight` and
    `box_bound` may be scalars or per-coordinate arrays.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return np.clip(soft_threshold(s, np.asarray(l1_weight, dtype=float) / gamma), -box_bound, box_bound)


class L1Box:
    """``g(y) = sum_j w_j |y_j| + indicator(|y_j| <= a_j)``.

    ``w = 0`` drops the l1 term and ``a = inf`` drops the box, so this also
    covers ``g = 0``, pure l1 and pure box constraints.
    """

    def __init__(self, l1_weight=0.0, bound=math.inf, dim=None):
        w = np.asarray(l1_weight, dtype=float)
        a = np.asarray(bound, dtype=float)
        if np.any(w < 0):
            raise ValueError("l1 weight must be nonnegative")
        if np.any(a <= 0):
            raise ValueError("box bound must be positive")
        if dim is not None:
            w = np.broadcast_to(w, (dim,)).copy()
            a = np.broadcast_to(a, (dim,)).copy()
        w.setflags(write=False)
        a.setflags(write=False)
        self.l1_weight = w
        self.bound = a

    def weights(self, dim):
        """Per-coordinate ``(l1_weight, bound)`` arrays of length `dim`."""
        return (
            np.ascontiguousarray(np.broadcast_to(self.l1_weight, (dim,)), dtype=float),
            np.ascontiguousarray(np.broadcast_to(self.bound, (dim,)), dtype=float),
        )

    @property
    def is_zero(self):
        return not np.any(self.l1_weight) and np.all(np.isinf(self.bound))

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(np.abs(y) > self.bound):
            return math.inf
        return float(np.sum(self.l1_weight * np.abs(y)))

    def prox(self, s, gamma):
        return prox_l1_box(s, self.l1_weight, self.bound, gamma)

    def min_norm_subgradient_residual(self, y, g):
        """Componentwise ``dist(0, g + d|.|_1 + N_box)`` at the point `y`.

        `g` is the smooth part of the gradient; the l1 subgradient and the
        box normal cone are chosen to make ``|g_j + s_j|`` as small as
        possible at kinks and active bounds.
        """
        y = np.asarray(y, dtype=float)
        g = np.asarray(g, dtype=float)
        w, a = self.weights(y.size)
        out = np.abs(g + w * np.sign(y))
        zero = y == 0.0
        out[zero] = np.maximum(np.abs(g[zero]) - w[zero], 0.0)
        upper = (y >= a) & ~zero
        out[upper] = np.maximum(g[upper] + w[upper], 0.0)
        lower = (y <= -a) & ~zero
        out[lower] = np.maximum(w[lower] - g[lower], 0.0)
        return out


# ---------------------------------------------------------------------------
# spectra


def lambda_max_gram(A):
    """Largest eigenvalue of ``A^T A``, via the smaller of the two Grams."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    G = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
    return power_iteration_max(G)


def lambda_max_dense(S):
    return float(jacobi_eigenvalues(S)[-1])


# ---------------------------------------------------------------------------
# agents and problems


@dataclass(eq=False)
class AgentObjective:
    """One agent's ``phi(x) = f(A x) + g(x)``, plus its constraint block.

    `A`/`loss` may both be ``None`` when the agent has no smooth part. `E`
    is the agent's block of the coupling constraint (P2 only).
    """

    A: np.ndarray | None
    loss: LogisticLoss | QuadraticLoss | None
    reg: L1Box = field(default_factory=L1Box)
    E: np.ndarray | None = None
    dim: int | None = None

    def __post_init__(self):
        if (self.A is None) != (self.loss is None):
            raise ValueError("A and loss must be given together")
        if self.A is not None:
            self.A = np.ascontiguousarray(self.A, dtype=float)
            if self.A.shape[0] != self.loss.dim:
                raise ValueError(
                    f"loss acts on {self.loss.dim} rows but A has {self.A.shape[0]}"
                )
        if self.E is not None:
            self.E = np.ascontiguousarray(self.E, dtype=float)
        dims = {m.shape[1] for m in (self.A, self.E) if m is not None}
        if self.dim is not None:
            dims.add(self.dim)
        if len(dims) != 1:
            raise ValueError(f"inconsistent agent dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self._lambda_max_ata = None

    @property
    def lambda_max_ata(self):
        if self._lambda_max_ata is None:
            self._lambda_max_ata = 0.0 if self.A is None else lambda_max_gram(self.A)
        return self._lambda_max_ata

    @property
    def lipschitz_smooth(self):
        """Lipschitz constant of ``grad f(A .)``: ``L_f * lambda_max(A^T A)``."""
        if self.loss is None:
            return 0.0
        return self.loss.lipschitz_grad * self.lambda_max_ata

    def smooth_value(self, x):
        return 0.0 if self.loss is None else self.loss.value(self.A @ x)

    def smooth_gradient(self, x):
        if self.loss is None:
            return np.zeros(self.dim)
        return self.A.T @ self.loss.gradient(self.A @ x)

    def value(self, x):
        return self.smooth_value(x) + self.reg.value(x)

    def reg_weights(self):
        return self.reg.weights(self.dim)


@dataclass(eq=False)
class ProblemP1:
    """``min_y sum_i phi_i(y)``."""

    agents: list

    def __post_init__(self):
        if not self.agents:
            raise ValueError("need at least one agent")
        dims = {a.dim for a in self.agents}
        if len(dims) != 1:
            raise ValueError(f"agents disagree on the dimension: {sorted(dims)}")
        self.dim = dims.pop()

    @property
    def n_agents(self):
        return len(self.agents)

    def objective(self, y):
        return float(sum(a.value(y) for a in self.agents))

    def stacked(self):
        """Batched arrays for the round kernels, or ``None`` if not uniform.

        Requires every agent to carry the same loss kind and an equally
        shaped ``A``. Returns ``(kind, A (N,M,K), data (N,M), l1w (N,K),
        bound (N,K))``.
        """
        a0 = self.agents[0]
        if a0.loss is None:
            return None
        kind, shape = a0.loss.kind, a0.A.shape
        if any(a.loss is None or a.loss.kind != kind or a.A.shape != shape for a in self.agents):
            return None
        A3 = np.ascontiguousarray(np.stack([a.A for a in self.agents]))
        data = np.ascontiguousarray(np.stack([a.loss.data for a in self.agents]))
        w, b = zip(*(a.reg_weights() for a in self.agents))
        return kind, A3, data, np.ascontiguousarray(np.stack(w)), np.ascontiguousarray(np.stack(b))


@dataclass(eq=False)
class ProblemP2:
    """``min sum_i phi_i(x_i)`` s.t. ``sum_i E_i x_i = q``.

    `slack_agent` marks the agent whose block was augmented with the slack
    variable of the CPD logistic reformulation (``None`` otherwise);
    `slack_size` is the slack length (the trailing coordinates of that block).
    """

    agents: list
    q: np.ndarray
    slack_agent: int | None = None
    slack_size: int = 0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        for i, a in enumerate(self.agents):
            if a.E is None:
                raise ValueError(f"agent {i} has no coupling block E")
            if a.E.shape[0] != self.q.size:
                raise ValueError(
                    f"agent {i}: E has {a.E.shape[0]} rows, constraint has {self.q.size}"
                )

    @property
    def n_agents(self):
        return len(self.agents)

    @property
    def n_constraints(self):
        return self.q.size

    def objective(self, xs):
        return float(sum(a.value(x) for a, x in zip(self.agents, xs)))

    def constraint_residual(self, xs):
        return sum(a.E @ x for a, x in zip(self.agents, xs)) - self.q


# ---------------------------------------------------------------------------
# step-size thresholds


def _condition_ratio(agent):
    if agent.loss is None:
        return 0.0
    s2 = agent.loss.strong_convexity
    if not s2 > 0:
        raise ValueError(
            "strong convexity modulus must be positive; declare a finite margin bound"
        )
    return agent.loss.lipschitz_grad**2 / s2


def beta_min_ic(agent, c, lambda_min_dw):
    """Raw IC-ADMM threshold ``(L^2/sigma^2) lambda_max(A^T A) - c lambda_min(D+W)``.

    May be nonpositive; pick ``beta`` strictly above ``max(0, value)``.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    return _condition_ratio(agent) * agent.lambda_max_ata - c * lambda_min_dw


def beta_min_idc(agent, c, degree):
    """IDC-ADMM threshold ``lambda_max((L^2/sigma^2) A^T A + E^T E / (2 d c))``."""
    if not c > 0:
        raise ValueError("c must be positive")
    if degree < 1:
        raise ValueError("degree must be at least 1")
    ratio = _condition_ratio(agent)
    K = agent.dim
    S = np.zeros((K, K))
    if agent.A is not None and ratio > 0:
        S += ratio * (agent.A.T @ agent.A)
    if agent.E is not None:
        S += (agent.E.T @ agent.E) / (2.0 * degree * c)
    return power_iteration_max(0.5 * (S + S.T))


def choose_beta(beta_min, margin=BETA_MARGIN, floor=BETA_FLOOR):
    """Default ``beta = margin * max(0, beta_min) + floor``."""
    return margin * max(0.0, float(beta_min)) + floor


# ---------------------------------------------------------------------------
# data partitioning and problem builders


def partition_rows(A, b, n_agents):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    rows = A.shape[0]
    if rows % n_agents:
        raise ValueError(f"{rows} rows cannot be split evenly over {n_agents} agents")
    if b.size != rows:
        raise ValueError(f"b has {b.size} entries, A has {rows} rows")
    m = rows // n_agents
    return [(A[i * m:(i + 1) * m].copy(), b[i * m:(i + 1) * m].copy()) for i in range(n_agents)]


def partition_columns(E, n_agents):
    E = np.asarray(E, dtype=float)
    cols = E.shape[1]
    if cols % n_agents:
        raise ValueError(f"{cols} columns cannot be split evenly over {n_agents} agents")
    k = cols // n_agents
    return [E[:, i * k:(i + 1) * k].copy() for i in range(n_agents)]


def margin_bound(rows, box_bound):
    """``max_m ||rows_m||_1 * a``: a bound on ``|a_m^T y|`` over the box."""
    if math.isinf(box_bound):
        return math.inf
    r = float(np.abs(rows).sum(axis=1).max(initial=0.0)) * box_bound
    return r if r > 0 else box_bound


def build_rpd_p1(A, b, n_agents, loss="logistic", l1_weight=0.0, box_bound=math.inf):
    """Row-partitioned regression as P1.

    Agent ``i`` gets ``f_i(A_i y)`` on its rows and ``g_i = (l1_weight/N) ||y||_1``
    plus the box ``|y_j| <= box_bound``.
    """
    parts = partition_rows(A, b, n_agents)
    reg = L1Box(l1_weight / n_agents, box_bound)
    agents = []
    for Ai, bi in parts:
        if loss == "logistic":
            f = LogisticLoss(bi, margin_bound(Ai, box_bound))
        elif loss == "quadratic":
            f = QuadraticLoss(bi)
        else:
            raise ValueError(f"unknown loss {loss!r}")
        agents.append(AgentObjective(Ai, f, reg))
    return ProblemP1(agents)


def build_cpd_logistic_p2(E_blocks, labels, l1_weight, box_bound):
    """Column-partitioned sparse logistic regression in slack form.

    Minimizes ``sum_m log(1 + exp(-b_m z_m)) + l1_weight * sum_i ||x_i||_1``
    over boxed ``x_i`` subject to ``sum_i E_i x_i - z = 0``. The slack ``z``
    is appended to agent 0's block: that agent optimizes ``[x_0; z]`` with
    coupling ``[E_0, -I]`` and the logistic loss acting on ``z`` only.

    ``z`` also gets the box ``|z_m| <= a * max_m sum_i ||e_im||_1``, which
    every feasible point satisfies and which makes the loss strongly convex
    on the slack block.
    """
    E_blocks = [np.asarray(E, dtype=float) for E in E_blocks]
    M = E_blocks[0].shape[0]
    if any(E.shape[0] != M for E in E_blocks):
        raise ValueError("all E blocks must have the same number of rows")
    b = np.asarray(labels, dtype=float).ravel()
    if b.size != M:
        raise ValueError(f"{b.size} labels for {M} constraint rows")
    zbound = margin_bound(np.hstack(E_blocks), box_bound)
    if math.isinf(zbound):
        raise ValueError("a finite box bound is needed to bound the slack variable")

    agents = []
    for i, E in enumerate(E_blocks):
        K = E.shape[1]
        if i == 0:
            A_aug = np.hstack([np.zeros((M, K)), np.eye(M)])
            w = np.concatenate([np.full(K, float(l1_weight)), np.zeros(M)])
            a = np.concatenate([np.full(K, float(box_bound)), np.full(M, zbound)])
            agents.append(
                AgentObjective(
                    A_aug, LogisticLoss(b, zbound), L1Box(w, a), E=np.hstack([E, -np.eye(M)])
                )
            )
        else:
            agents.append(AgentObjective(None, None, L1Box(l1_weight, box_bound, dim=K), E=E))
    return ProblemP2(agents, np.zeros(M), slack_agent=0, slack_size=M)


def cpd_objective(E_blocks, labels, l1_weight, box_bound, xs):
    """Direct evaluation of the CPD logistic objective at blocks `xs`."""
    z = sum(E @ x for E, x in zip(E_blocks, xs))
    if any(np.any(np.abs(x) > box_bound) for x in xs):
        return math.inf
    b = np.asarray(labels, dtype=float)
    return float(np.sum(softplus(-b * z)) + l1_weight * sum(np.abs(x).sum() for x in xs))


# ---------------------------------------------------------------------------
# CSV persistence


def write_matrix_csv(path, X):
    """Row-major CSV with a leading ``rows,cols`` line; vectors are n x 1."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lines = [f"{X.shape[0]},{X.shape[1]}"]
    lines += [",".join(repr(float(v)) for v in row) for row in X]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    try:
        rows, cols = (int(v) for v in lines[0].split(","))
    except ValueError as exc:
        raise ValueError(f"{path}: first line must be 'rows,cols'") from exc
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"{path}: header says {rows} rows, found {len(body)}")
    X = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=float).reshape(rows, cols)
    return X


def read_labels_csv(path):
    b = read_matrix_csv(path).ravel()
    if not np.all((b == 1.0) | (b == -1.0)):
        raise ValueError(f"{path}: labels must be +1 or -1")
    return b
