import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from admmnet.metrics import (
    TRACE_COLUMNS,
    IterationRecord,
    Trace,
    accuracy,
    consensus_error,
    flop_estimate,
    linear_rate_fit,
    read_trace_csv,
)


def test_accuracy_relative_gap():
    assert accuracy(2.0, 1.0) == (1.0, False)
    assert accuracy(1.0, 1.0) == (0.0, False)


def test_accuracy_falls_back_to_absolute_gap_at_zero_optimum():
    assert accuracy(0.25, 0.0) == (0.25, True)


def test_consensus_error_hand_values():
    # two scalar agents at 0 and 2: mean 1, squared deviations 1 + 1 over 2 agents
    assert consensus_error([[0.0], [2.0]]) == 1.0
    assert consensus_error(np.ones((4, 3))) == 0.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8), st.floats(-1e3, 1e3))
@settings(max_examples=50, deadline=None)
def test_consensus_error_is_shift_invariant(vals, shift):
    Y = np.array(vals)[:, None]
    assert consensus_error(Y + shift) == pytest.approx(consensus_error(Y), rel=1e-9, abs=1e-6)


def test_flop_estimate_hand_values():
    # M = 10, K = 100: 2 M K + 2 K = 2200
    assert flop_estimate("ic-admm", 10, 100) == 100 + 2200
    assert flop_estimate("idc-admm", 10, 100) == 2300
    assert flop_estimate("c-admm", 10, 100, inner_iterations=5) == 100 + 5 * 2200
    assert flop_estimate("dc-admm", 10, 100, inner_iterations=5) == 11100
    assert flop_estimate("subgrad", 10, 100) == 2300


def test_flop_estimate_rejects_unknown_algorithm():
    with pytest.raises(ValueError):
        flop_estimate("newton", 1, 1)


def test_rate_fit_exact_geometric_sequence():
    rate, r2 = linear_rate_fit(2.0 ** -np.arange(40))
    assert rate == pytest.approx(0.5, rel=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_rate_fit_constant_sequence_is_rate_one():
    assert linear_rate_fit(np.full(10, 3.0)) == (1.0, 1.0)


def test_rate_fit_recovers_rate_under_noise():
    rng = np.random.default_rng(5)
    k = np.arange(200)
    e = 0.9**k * np.exp(0.05 * rng.standard_normal(200))
    rate, r2 = linear_rate_fit(e)
    assert rate == pytest.approx(0.9, rel=0.05)
    assert r2 > 0.95


def test_rate_fit_uses_only_the_tail():
    e = np.concatenate([np.full(50, 1.0), 0.5 ** np.arange(1, 51)])
    rate, _ = linear_rate_fit(e, tail_fraction=0.5)
    assert rate == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("bad", [[1.0], [1.0, 0.0], [1.0, -1.0], [[1.0, 2.0]]])
def test_rate_fit_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        linear_rate_fit(bad)


def _trace():
    tr = Trace("ic-admm", config={"c": 0.1}, seed=3)
    tr.append(IterationRecord(0, 2.0, 1.0, cserr=0.0, cumulative_flops=0, wall_time=0.0))
    tr.append(IterationRecord(1, 1.5, 0.5, cserr=0.25, cumulative_flops=2300, wall_time=0.01))
    return tr


def test_trace_rejects_non_increasing_rounds():
    tr = _trace()
    with pytest.raises(ValueError):
        tr.append(IterationRecord(1, 1.0, 0.0))


def test_trace_csv_schema_and_round_trip(tmp_path):
    tr = _trace()
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    rows = read_trace_csv(path)
    assert [r["k"] for r in rows] == [0.0, 1.0]
    assert rows[1]["cumulative_flops"] == 2300
    assert rows[1]["cserr"] == 0.25
    assert rows[1]["feasibility"] is None
    assert rows[1]["inner_iterations"] is None


def test_trace_csv_without_wall_time_drops_last_column():
    text = _trace().to_csv(include_wall_time=False)
    header = text.splitlines()[0].split(",")
    assert header == list(TRACE_COLUMNS[:-1])
    assert all(len(line.split(",")) == len(header) for line in text.splitlines())


def test_trace_csv_floats_round_trip_exactly(tmp_path):
    tr = Trace("c-admm")
    tr.append(IterationRecord(0, math.pi, 1 / 3, cserr=1e-300))
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    row = read_trace_csv(path)[0]
    assert row["objective"] == math.pi
    assert row["acc"] == 1 / 3
    assert row["cserr"] == 1e-300


def test_read_trace_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trace_csv(path)


def test_trace_summary_fields():
    s = _trace().summary()
    assert s["outer_iterations"] == 1
    assert s["total_flops"] == 2300
    assert s["final_cserr"] == 0.25
    assert "final_feasibility" not in s
