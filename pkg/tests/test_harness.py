import math

import numpy as np
import pytest

from admmnet.graph import compute_spectrum
from admmnet.harness import (
    ExperimentSpec,
    SpecError,
    build_instance,
    compare,
    format_summary,
    generate_dataset,
    run_experiment,
    sub_seeds,
    tune_beta,
)
from admmnet.metrics import read_trace_csv

TINY = dict(n_agents=4, n_samples=10, n_features=8, feature_scale=0.3, max_outer=3000, acc_target=1e-3,
            cserr_target=1e-4, graph_density=0.5, seed=11)
TINY_P2 = dict(problem="cpd-logistic", algorithm="idc-admm", n_agents=3, n_samples=12, n_features=4,
               l1_weight=0.01, box_bound=5.0, feature_scale=0.05, c=0.3, max_outer=20_000, acc_target=1e-3,
               feasibility_target=1e-3, dual_consensus_target=1e-5, graph_density=0.8, seed=5)


# ---------------------------------------------------------------------------
# spec parsing


def test_spec_text_round_trip():
    spec = ExperimentSpec(**TINY)
    again = ExperimentSpec.from_text(spec.to_text())
    assert again == spec


def test_spec_parses_comments_booleans_and_numbers():
    spec = ExperimentSpec.from_text(
        "# header\nn_agents = 6   # six\nwarm_start = no\nc = 1e-2\nbox_bound = inf\n\n"
    )
    assert spec.n_agents == 6
    assert spec.warm_start is False
    assert spec.c == 0.01
    assert math.isinf(spec.box_bound)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("colour = red\n", "unknown key"),
        ("c = 0.1\nc = 0.2\n", "duplicate key"),
        ("n_agents = ten\n", "bad value"),
        ("just words\n", "expected key = value"),
        ("problem = svm\n", "problem must be"),
        ("algorithm = dc-admm\n", "does not apply"),
        ("c = 0\n", "c must be positive"),
        ("beta = 1, 2\n", "beta must be"),
        ("beta = fast\n", "cannot parse beta"),
        ("sparsity = 0\n", "sparsity"),
        ("problem = cpd-logistic\nalgorithm = dc-admm\nbox_bound = inf\n", "finite box_bound"),
        ("label_noise = 1.5\n", "flip probability"),
        ("seed = -1\n", "seed"),
        ("beta_margin = 1\n", "beta_margin"),
    ],
)
def test_spec_errors_name_the_problem(text, fragment):
    with pytest.raises(SpecError, match=fragment):
        ExperimentSpec.from_text(text)


def test_spec_error_reports_line_number():
    with pytest.raises(SpecError, match=r"<spec>:3"):
        ExperimentSpec.from_text("c = 0.1\n\nbogus = 1\n")


def test_explicit_beta_list_is_accepted():
    spec = ExperimentSpec(**TINY, beta="1 2 3 4")
    assert spec.beta_values() == [1.0, 2.0, 3.0, 4.0]


def test_shipped_configs_parse():
    from pathlib import Path

    configs = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.cfg"))
    assert configs
    for path in configs:
        ExperimentSpec.from_file(path)


# ---------------------------------------------------------------------------
# seeds and data


def test_sub_seeds_are_distinct_and_stable():
    a = sub_seeds(7)
    assert len(set(a)) == 3
    assert sub_seeds(7) == a
    assert sub_seeds(8) != a


def test_changing_the_graph_density_leaves_the_data_alone():
    spec = ExperimentSpec(**TINY)
    d1 = generate_dataset(spec)
    d2 = generate_dataset(spec.replace(graph_density=0.9))
    np.testing.assert_array_equal(d1.features, d2.features)
    np.testing.assert_array_equal(d1.labels, d2.labels)


def test_dataset_shapes_and_sparsity():
    spec = ExperimentSpec(**TINY)
    d = generate_dataset(spec)
    assert d.features.shape == (40, 8)
    assert set(np.unique(d.labels)) <= {-1.0, 1.0}
    assert np.count_nonzero(d.planted) == max(1, round(0.1 * 8))
    p2 = generate_dataset(ExperimentSpec(**TINY_P2))
    assert p2.features.shape == (12, 12)
    assert not p2.row_partitioned


def test_lasso_targets_follow_the_planted_model():
    spec = ExperimentSpec(**{**TINY, "problem": "rpd-lasso", "label_noise": 0.0})
    d = generate_dataset(spec)
    np.testing.assert_allclose(d.labels, d.features @ d.planted, atol=1e-15)


def test_instance_graph_is_connected_and_non_bipartite():
    inst = build_instance(ExperimentSpec(**TINY), with_reference=False)
    spec = compute_spectrum(inst.graph)
    assert spec.lambda_min_d_plus_w > 1e-9
    assert inst.reference is None


def test_tune_beta_applies_the_margin_rule():
    spec = ExperimentSpec(**TINY)
    mins, betas = tune_beta(spec)
    np.testing.assert_allclose(betas, 1.05 * np.maximum(mins, 0.0) + 1e-3)
    assert np.all(betas > mins)


# ---------------------------------------------------------------------------
# runs


@pytest.mark.parametrize("algo", ["ic-admm", "c-admm"])
def test_run_writes_trace_and_summary(algo, tmp_path):
    spec = ExperimentSpec(**TINY, algorithm=algo)
    out = tmp_path / "trace.csv"
    trace, summary = run_experiment(spec, out=out)
    assert summary["status"] == "converged"
    rows = read_trace_csv(out)
    assert len(rows) == len(trace.records)
    assert rows[-1]["acc"] == trace.final.acc
    text = (tmp_path / "trace.csv.summary.txt").read_text()
    assert "status: converged" in text
    assert "reference_objective" in text
    assert trace.config["spec"] == spec.to_text()


def test_run_p2_reaches_targets():
    _, summary = run_experiment(ExperimentSpec(**TINY_P2))
    assert summary["status"] == "converged"
    assert summary["final_feasibility"] < 1e-3
    assert summary["final_dual_consensus"] < 1e-5
    assert summary["beta_max"] > summary["beta_min_max"]


def test_runs_are_deterministic():
    spec = ExperimentSpec(**TINY)
    a, _ = run_experiment(spec)
    b, _ = run_experiment(spec)
    assert a.to_csv(include_wall_time=False) == b.to_csv(include_wall_time=False)


def test_compare_reports_all_algorithms():
    base = ExperimentSpec(**TINY)
    rows, report = compare([base.replace(algorithm=a) for a in ("ic-admm", "c-admm", "subgrad")])
    assert [r["algorithm"] for r in rows] == ["ic-admm", "c-admm", "subgrad"]
    assert report["csv"].splitlines()[0].startswith("algorithm,status")
    assert len(report["csv"].splitlines()) == 4
    assert set(report["ordering"]) == {"fewest_rounds", "fewest_flops", "best_acc"}
    assert report["ordering"]["fewest_rounds"] == "c-admm"


def test_compare_rejects_mismatched_instances():
    base = ExperimentSpec(**TINY)
    with pytest.raises(SpecError, match="seed"):
        compare([base, base.replace(seed=12, algorithm="c-admm")])
    with pytest.raises(SpecError):
        compare([base])


def test_format_summary_is_key_value_lines():
    text = format_summary({"algorithm": "ic-admm", "final_acc": 0.5, "outer_iterations": 3})
    assert text == "algorithm: ic-admm\nfinal_acc: 0.5\nouter_iterations: 3\n"
