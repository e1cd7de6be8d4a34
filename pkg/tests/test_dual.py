import warnings

import numpy as np
import pytest

from admmnet.consensus import BetaConditionWarning
from admmnet.dual import (
    DualConsensusConfig,
    DualConsensusState,
    check_beta_idc,
    dc_admm_round,
    feasibility_identity_residual,
    idc_admm_round,
    initial_dual_state,
    kkt_residuals,
    kkt_residuals_light,
    run_dual_consensus,
)
from admmnet.graph import Graph
from admmnet.inner import InnerConfig, centralized_reference_p2, fista_solve
from admmnet.problem import (
    AgentObjective,
    ProblemP2,
    QuadraticLoss,
    beta_min_idc,
    build_cpd_logistic_p2,
    choose_beta,
    prox_l1_box,
)

from conftest import complete

TIGHT = InnerConfig(pgr_tolerance=1e-12, max_inner_iterations=500_000)


def small_cpd(rng, N=3, M=8, K=3, scale=0.05):
    blocks = [scale * rng.standard_normal((M, K)) for _ in range(N)]
    labels = np.where(rng.random(M) < 0.5, -1.0, 1.0)
    return build_cpd_logistic_p2(blocks, labels, l1_weight=0.01, box_bound=5.0), blocks, labels


def auto_beta(p2, g, c):
    return np.array([choose_beta(beta_min_idc(a, c, int(g.degrees[i]))) for i, a in enumerate(p2.agents)])


def scalar_pair(t=(1.0, 3.0), q=2.0):
    # phi_i(x) = (x - t_i)^2, constraint x_0 + x_1 = q
    agents = [AgentObjective(np.ones((1, 1)), QuadraticLoss([ti]), E=np.ones((1, 1))) for ti in t]
    return ProblemP2(agents, np.array([q]))


# ---------------------------------------------------------------------------
# hand-computed rounds


def test_dc_admm_scalar_round_by_hand():
    # from zero state, c = 1/2, d = 1: p stays 0, S = 0, r = q/2, w = 1/(2 d c) = 1;
    # x_i minimizes (x - t_i)^2 + (1/2)(x - 1)^2 -> x = (2 t_i + 1) / 3
    # and nu_i = (x_i - q/2) / (2 d c) = x_i - 1
    g = Graph.from_edges(2, [(0, 1)])
    p2 = scalar_pair()
    out = dc_admm_round(initial_dual_state(p2), p2, g, DualConsensusConfig(0.5, inner=TIGHT))
    np.testing.assert_allclose([x[0] for x in out.x], [1.0, 7.0 / 3.0], atol=1e-11)
    np.testing.assert_allclose(out.nu[:, 0], [0.0, 4.0 / 3.0], atol=1e-11)
    np.testing.assert_array_equal(out.p, 0.0)


def test_first_round_nu_is_the_scaled_local_residual(rng):
    # with nu = p = 0 the closed-form nu-step reduces to (E_i x_i - q/N) / (2 d_i c)
    p2, _, _ = small_cpd(rng)
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    c = 0.3
    cfg = DualConsensusConfig(c, beta=auto_beta(p2, g, c), inner=TIGHT)
    for out in (
        dc_admm_round(initial_dual_state(p2), p2, g, cfg),
        idc_admm_round(initial_dual_state(p2), p2, g, cfg),
    ):
        for i, a in enumerate(p2.agents):
            expect = (a.E @ out.x[i] - p2.q / 3) / (2 * g.degrees[i] * c)
            np.testing.assert_allclose(out.nu[i], expect, atol=1e-14)


def _idc_rounds_by_transcription(p2, g, state, c, beta, rounds):
    xs = [x.copy() for x in state.x]
    nu, p = state.nu.copy(), state.p.copy()
    nbrs = g.neighbor_lists
    N = p2.n_agents
    for _ in range(rounds):
        pn = p.copy()
        S = np.zeros_like(nu)
        for i in range(N):
            for j in nbrs[i]:
                pn[i] += c * (nu[i] - nu[j])
                S[i] += nu[i] + nu[j]
        new_x, new_nu = [], np.empty_like(nu)
        for i, a in enumerate(p2.agents):
            d = len(nbrs[i])
            # gradient of the nu-eliminated penalty (1/(4 d c)) ||E x - q/N - p + c S||^2 at x
            pen = a.E.T @ (a.E @ xs[i] - p2.q / N - pn[i] + c * S[i]) / (2 * d * c)
            grad = a.smooth_gradient(xs[i]) + pen
            w, bound = a.reg_weights()
            xn = prox_l1_box(xs[i] - grad / beta[i], w, bound, beta[i])
            new_x.append(xn)
            new_nu[i] = (S[i] - pn[i] / c + (a.E @ xn - p2.q / N) / c) / (2 * d)
        xs, nu, p = new_x, new_nu, pn
    return xs, nu, p


def test_idc_admm_three_rounds_match_transcription(rng):
    p2, _, _ = small_cpd(rng, N=4)
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    c = 0.2
    beta = auto_beta(p2, g, c)
    cfg = DualConsensusConfig(c, beta=beta)
    st0 = initial_dual_state(p2, x0=[0.1 * rng.standard_normal(a.dim) for a in p2.agents],
                             nu0=0.1 * rng.standard_normal((4, p2.n_constraints)))
    st = st0
    for _ in range(3):
        st = idc_admm_round(st, p2, g, cfg)
    xs, nu, p = _idc_rounds_by_transcription(p2, g, st0, c, beta, 3)
    for a, b in zip(st.x, xs):
        np.testing.assert_allclose(a, b, atol=1e-13)
    np.testing.assert_allclose(st.nu, nu, atol=1e-12)
    np.testing.assert_allclose(st.p, p, atol=1e-13)


def test_dc_admm_kernel_and_oracle_paths_agree(rng):
    p2, _, _ = small_cpd(rng)
    g = complete(3)
    cfg = DualConsensusConfig(0.3, inner=TIGHT)
    st = initial_dual_state(p2)
    fast = dc_admm_round(st, p2, g, cfg)
    slow = dc_admm_round(st, p2, g, cfg, inner=fista_solve)
    for a, b in zip(fast.x, slow.x):
        np.testing.assert_allclose(a, b, atol=1e-9)
    np.testing.assert_allclose(fast.nu, slow.nu, atol=1e-8)


# ---------------------------------------------------------------------------
# fixed points, KKT and identities


def _zero_data_saddle(N=3, M=5, K=2):
    # E blocks are zero, so z = 0 and x = 0 are optimal and nu = grad loss(0) = -b/2
    labels = np.where(np.arange(M) % 2 == 0, 1.0, -1.0)
    p2 = build_cpd_logistic_p2([np.zeros((M, K)) for _ in range(N)], labels, 0.1, 1.0)
    nu = np.tile(-labels / 2.0, (N, 1))
    return p2, DualConsensusState([np.zeros(a.dim) for a in p2.agents], nu, np.zeros((N, M)))


@pytest.mark.parametrize("variant", ["exact", "inexact"])
def test_zero_data_saddle_is_a_fixed_point(variant):
    p2, st0 = _zero_data_saddle()
    g = complete(3)
    cfg = DualConsensusConfig(0.4, beta=auto_beta(p2, g, 0.4), inner=TIGHT)
    st = st0
    for _ in range(5):
        st = dc_admm_round(st, p2, g, cfg) if variant == "exact" else idc_admm_round(st, p2, g, cfg)
    for a, b in zip(st.x, st0.x):
        np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(st.nu, st0.nu, atol=1e-12)
    np.testing.assert_allclose(st.p, 0.0, atol=1e-12)


def test_kkt_residuals_vanish_at_the_centralized_saddle(rng):
    p2, _, labels = small_cpd(rng)
    xs, _ = centralized_reference_p2(p2, InnerConfig(pgr_tolerance=1e-12, max_inner_iterations=10**6))
    z = xs[0][-p2.slack_size:]
    # slack stationarity: grad loss(z) - nu = 0
    nu_star = p2.agents[0].loss.gradient(z)
    st = DualConsensusState(xs, np.tile(nu_star, (3, 1)), np.zeros((3, p2.n_constraints)))
    stat, feas, dc = kkt_residuals(st, p2, complete(3))
    assert np.max(stat) < 1e-8
    assert feas < 1e-12
    assert dc == 0.0


def test_kkt_light_matches_full_residuals(rng):
    p2, _, _ = small_cpd(rng, N=4)
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    st = initial_dual_state(p2, x0=[rng.standard_normal(a.dim) for a in p2.agents],
                            nu0=rng.standard_normal((4, p2.n_constraints)))
    _, feas, dc = kkt_residuals(st, p2, g)
    _, feas2, dc2 = kkt_residuals_light(st, p2, g)
    assert feas2 == pytest.approx(feas, rel=1e-14)
    assert dc2 == pytest.approx(dc, rel=1e-12)


@pytest.mark.parametrize("variant", ["exact", "inexact"])
def test_feasibility_identity_and_zero_sum_multipliers(variant, rng):
    p2, _, _ = small_cpd(rng, N=4)
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (1, 3)])
    c = 0.25
    cfg = DualConsensusConfig(c, beta=auto_beta(p2, g, c), inner=InnerConfig(pgr_tolerance=1e-8))
    st = initial_dual_state(p2)
    for _ in range(20):
        nxt = dc_admm_round(st, p2, g, cfg) if variant == "exact" else idc_admm_round(st, p2, g, cfg)
        assert feasibility_identity_residual(st, nxt, p2, g, c) < 1e-10
        assert np.max(np.abs(nxt.p.sum(axis=0))) < 1e-12
        st = nxt


# ---------------------------------------------------------------------------
# full runs


@pytest.mark.parametrize("variant", ["exact", "inexact"])
def test_runs_reach_the_centralized_optimum(variant, rng):
    p2, _, _ = small_cpd(rng)
    g = complete(3)
    _, obj = centralized_reference_p2(p2)
    c = 0.3
    cfg = DualConsensusConfig(c, beta=auto_beta(p2, g, c), inner=InnerConfig(pgr_tolerance=1e-9), max_outer=50_000,
                              acc_target=1e-6, feasibility_target=1e-6, dual_consensus_target=1e-8)
    tr = run_dual_consensus(variant, p2, g, cfg, obj, check_identities=True)
    assert tr.status == "converged"
    d = tr.config["diagnostics"]
    assert d["max_sum_p"] < 1e-9
    assert d["max_identity_residual"] < 1e-8
    if variant == "exact":
        assert d["max_stationarity_ratio"] <= 1.0


def test_beta_violation_warns(rng):
    p2, _, _ = small_cpd(rng)
    g = complete(3)
    cfg = DualConsensusConfig(0.3, beta=np.full(3, 1e-3))
    with pytest.warns(BetaConditionWarning):
        bad = check_beta_idc(p2, g, cfg)
    assert len(bad) == 3


def test_auto_beta_does_not_warn(rng):
    p2, _, _ = small_cpd(rng)
    g = complete(3)
    with warnings.catch_warnings():
        warnings.simplefilter("error", BetaConditionWarning)
        assert check_beta_idc(p2, g, DualConsensusConfig(0.3, beta=auto_beta(p2, g, 0.3))) == []


@pytest.mark.parametrize("kwargs", [{"c": -1.0}, {"c": 1.0, "beta": [0.0]}])
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        DualConsensusConfig(**kwargs)


def test_idc_requires_beta(rng):
    p2, _, _ = small_cpd(rng)
    with pytest.raises(ValueError):
        idc_admm_round(initial_dual_state(p2), p2, complete(3), DualConsensusConfig(0.3))
    with pytest.raises(ValueError):
        run_dual_consensus("inexact", p2, complete(3), DualConsensusConfig(0.3), 1.0)
