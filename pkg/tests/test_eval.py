import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rashomon_quartet.evaluation import PerfReport, Scores, UndefinedMetricError, evaluate, score
from rashomon_quartet.learners import fit_linear, fit_tree
from rashomon_quartet.synth import Dataset


def test_score_hand_example():
    s = score([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 5.0])
    assert s.mse == 0.25 and s.rmse == 0.5
    assert s.r2 == pytest.approx(1 - 0.25 / 1.25, abs=1e-15)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30).filter(lambda v: np.ptp(v) > 1e-6))
def test_perfect_and_mean_predictors(y):
    y = np.array(y)
    assert score(y, y).r2 == 1.0
    assert score(y, np.full_like(y, y.mean())).r2 == pytest.approx(0.0, abs=1e-9)


def test_undefined_cases():
    with pytest.raises(UndefinedMetricError):
        score([], [])
    with pytest.raises(UndefinedMetricError):
        score([2.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        score([1.0, 2.0], [1.0])


def test_evaluate_and_spread(small_data):
    train, test = small_data
    perf = evaluate([fit_linear(train), fit_tree(train, 3, 50)], test)
    assert perf.labels == ["linear regression", "decision tree"]
    r2 = perf.r2()
    assert perf.spread == pytest.approx(abs(r2["linear regression"] - r2["decision tree"]), abs=0)
    assert perf.n_test == test.n_rows
    with pytest.raises(ValueError):
        evaluate([fit_linear(train), fit_linear(train)], test)
    with pytest.raises(UndefinedMetricError):
        evaluate([fit_linear(train)], test.take([]))


def test_report_json_round_trips_exactly():
    perf = PerfReport({"a": Scores(0.1 + 0.2, np.sqrt(2.0), 2.0 / 3.0), "b": Scores(-1e-300, 1.0, 1.0)}, 7)
    text = perf.to_json()
    back = PerfReport.from_dict(json.loads(text))
    assert back == perf
    assert back.to_json() == text
    assert "R2" in perf.table()
