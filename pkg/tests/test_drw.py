import numpy as np
import pytest

from linescale.drw import DrwConfig, DrwResult, drw_run, drw_step, visitation_report
from linescale.errors import DomainError
from linescale.matrix import distances

CYCLE3 = np.roll(np.eye(3), 1, axis=1)


def fixture5(seed=3):
    rng = np.random.default_rng(seed)
    P = np.roll(np.eye(5), 1, axis=1)
    return (np.eye(5) + P + P.T) * rng.uniform(0.5, 2.0, (5, 5))


def test_step_on_doubly_stochastic_is_fixed_point():
    W = np.array([[0.25, 0.75], [0.75, 0.25]])
    W2, v = drw_step(W, 1, np.random.default_rng(0))
    assert np.array_equal(W2.entries, W) and v in (1, 2)


def test_step_on_cycle():
    W2, v = drw_step(CYCLE3, 1, np.random.default_rng(0))
    assert np.array_equal(W2.entries, CYCLE3) and v == 2


def test_step_normalizes_column_then_row():
    W = np.array([[1.0, 2.0], [2.0, 1.0]]) * np.array([[1.3], [0.7]])
    W2, _ = drw_step(W, 1, np.random.default_rng(0))
    assert abs(W2.entries[0].sum() - 1.0) <= 1e-15
    # column 1 was normalized before row 1 rescaled its first entry
    col_before_row = W[:, 0] / W[:, 0].sum()
    assert W2.entries[1, 0] == col_before_row[1]


def test_run_on_cycle_counts_exact():
    res = drw_run(DrwConfig(CYCLE3, 300, 1))
    assert list(res.visit_counts) == [100, 100, 100]
    assert visitation_report(res, 3)[0] == 0.0


def test_run_is_deterministic():
    W = fixture5()
    a = drw_run(DrwConfig(W, 5000, 99))
    b = drw_run(DrwConfig(W, 5000, 99))
    c = drw_run(DrwConfig(W, 5000, 100))
    assert a.trajectory_hash == b.trajectory_hash
    assert np.array_equal(a.final_matrix.entries, b.final_matrix.entries)
    assert a.trajectory_hash != c.trajectory_hash


def test_kernel_matches_step_loop():
    W = fixture5(4)
    res = drw_run(DrwConfig(W, 2000, 17, start_vertex=2))
    rng = np.random.Generator(np.random.PCG64(17))
    M, v = W, 2
    counts = np.zeros(5, dtype=int)
    for _ in range(2000):
        M, v = drw_step(M, v, rng)
        counts[v - 1] += 1
    assert np.array_equal(counts, res.visit_counts)
    np.testing.assert_array_equal(M.entries, res.final_matrix.entries)


def test_d_b_trace_nonincreasing():
    res = drw_run(DrwConfig(fixture5(), 20_000, 5))
    assert res.d_B_trace[0] == distances(fixture5())[2]
    assert np.all(np.diff(res.d_B_trace) <= 1e-12)


def test_frequencies_on_random_positive_matrix():
    W = np.random.default_rng(1).uniform(0.1, 1.0, (5, 5))
    res = drw_run(DrwConfig(W, 200_000, 2))
    max_dev, freq = visitation_report(res, 5)
    assert max_dev < 0.01 and abs(freq.sum() - 1.0) < 1e-12


def test_visitation_report_arithmetic():
    assert visitation_report(np.array([2, 1, 1]), 3)[0] == pytest.approx(1 / 6, abs=1e-15)


def test_config_validation():
    with pytest.raises(DomainError, match="irreducible"):
        DrwConfig(np.eye(3), 10, 1)
    with pytest.raises(DomainError):
        DrwConfig(fixture5(), 0, 1)
    with pytest.raises(DomainError):
        DrwConfig(fixture5(), 10, 1, start_vertex=6)
    with pytest.raises(DomainError):
        DrwConfig(fixture5(), 10, -1)


def test_result_total_steps():
    res = drw_run(DrwConfig(CYCLE3, 7, 0))
    assert isinstance(res, DrwResult) and res.total_steps == 7
