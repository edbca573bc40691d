"""Losses and gradients vs finite differences; data generation and parsing."""

import math

import numpy as np
import pytest

from sdfl.objectives import (NodeDataset, NodeObjective, compute_sigma_i,
                             estimate_lipschitz, generate_linreg_problem,
                             linreg_grad, linreg_value, load_libsvm, load_problem,
                             logreg_grad, logreg_value, partition,
                             power_lambda_max, save_problem)


def central_diff(f, w, h=1e-5):
    g = np.zeros_like(w)
    for t in range(len(w)):
        e = np.zeros_like(w)
        e[t] = h
        g[t] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def test_linreg_hand_values():
    data = NodeDataset(features=np.array([[2.0]]), labels=np.array([4.0]))
    assert linreg_value(np.array([1.0]), data) == pytest.approx(2.0)
    np.testing.assert_allclose(linreg_grad(np.array([1.0]), data), [-4.0])


def test_linreg_zero_at_truth():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(6)
    A = rng.standard_normal((30, 6))
    data = NodeDataset(features=A, labels=A @ w)
    assert linreg_value(w, data) == pytest.approx(0.0, abs=1e-22)
    np.testing.assert_allclose(linreg_grad(w, data), np.zeros(6), atol=1e-12)


def test_logreg_hand_values():
    data = NodeDataset(features=np.array([[1.0]]), labels=np.array([1.0]))
    assert logreg_value(np.zeros(1), data, 0.0) == pytest.approx(math.log(2))
    np.testing.assert_allclose(logreg_grad(np.zeros(1), data, 0.0), [-0.5])
    rng = np.random.default_rng(1)
    many = NodeDataset(features=rng.standard_normal((40, 5)),
                       labels=(rng.random(40) < 0.5).astype(float))
    assert logreg_value(np.zeros(5), many, 0.0) == pytest.approx(math.log(2))


def test_logreg_rejects_bad_labels():
    data = NodeDataset(features=np.ones((2, 2)), labels=np.array([0.0, 2.0]))
    with pytest.raises(ValueError):
        logreg_value(np.zeros(2), data, 0.0)


def test_logreg_overflow_safe():
    data = NodeDataset(features=np.array([[1.0], [-1.0]]),
                       labels=np.array([1.0, 0.0]))
    w = np.array([1000.0])
    assert math.isfinite(logreg_value(w, data, 0.001))
    assert np.all(np.isfinite(logreg_grad(w, data, 0.001)))


@pytest.mark.parametrize("kind,lam", [("linreg", 0.0), ("logreg", 0.001)])
def test_gradients_match_finite_differences(kind, lam):
    rng = np.random.default_rng(2)
    A = rng.standard_normal((25, 8))
    labels = (rng.random(25) < 0.5).astype(float) if kind == "logreg" \
        else A @ rng.standard_normal(8) + rng.standard_normal(25)
    obj = NodeObjective(kind, NodeDataset(features=A, labels=labels), lam)
    for _ in range(20):
        w = rng.standard_normal(8)
        got = obj.grad(w)
        want = central_diff(obj.value, w)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-7)


def test_objectives_bounded_below():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((20, 4))
    lin = NodeObjective("linreg", NodeDataset(features=A, labels=rng.standard_normal(20)))
    log = NodeObjective("logreg", NodeDataset(
        features=A, labels=(rng.random(20) < 0.5).astype(float)), 0.001)
    for _ in range(50):
        w = rng.standard_normal(4) * 10
        assert lin.value(w) >= 0.0
        assert log.value(w) >= 0.0


def test_generate_linreg_problem_contracts():
    rng = np.random.default_rng(4)
    datasets, w_star = generate_linreg_problem(1000, 10, 4, (250, 750), 0.5, rng)
    assert np.count_nonzero(w_star) == 10
    nz = np.abs(w_star[w_star != 0])
    assert ((nz >= 0.5) & (nz <= 2.0)).all()
    assert len(datasets) == 4
    for d in datasets:
        assert 250 <= d.m_i <= 750
    # noise-free variant is exactly fit by the ground truth
    clean, w2 = generate_linreg_problem(50, 5, 3, (20, 30), 0.0,
                                        np.random.default_rng(5))
    for d in clean:
        assert linreg_value(w2, d) == pytest.approx(0.0, abs=1e-20)


def test_libsvm_parse_basics(tmp_path):
    path = tmp_path / "tiny.libsvm"
    path.write_text("1 1:0.5 3:2.0\n-1 2:1.5\n")
    X, y = load_libsvm(path)
    np.testing.assert_allclose(X, [[0.5, 0.0, 2.0], [0.0, 1.5, 0.0]])
    np.testing.assert_array_equal(y, [1.0, 0.0])  # -1 maps to 0


def test_libsvm_label_conventions(tmp_path):
    path = tmp_path / "labels12.libsvm"
    path.write_text("1 1:1\n2 1:2\n")
    _, y = load_libsvm(path)
    np.testing.assert_array_equal(y, [0.0, 1.0])
    path.write_text("3 1:1\n1 1:2\n")
    with pytest.raises(ValueError):
        load_libsvm(path)


def test_libsvm_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.libsvm"
    path.write_text("1 1:0.5\n1 nonsense\n")
    with pytest.raises(ValueError, match=r"bad\.libsvm:2"):
        load_libsvm(path)
    empty = tmp_path / "empty.libsvm"
    empty.write_text("\n")
    with pytest.raises(ValueError, match="empty"):
        load_libsvm(empty)


def test_partition_sizes_and_coverage():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((10, 3))
    y = np.arange(10.0)
    parts = partition(X, y, 3, rng)
    sizes = sorted(p.m_i for p in parts)
    assert sizes == [3, 3, 4]
    recovered = sorted(float(v) for p in parts for v in p.labels)
    assert recovered == sorted(y.tolist())


def test_power_iteration_vs_dense_eig():
    rng = np.random.default_rng(7)
    data = NodeDataset(features=np.diag([3.0, 1.0]), labels=np.zeros(2))
    lam, ok = power_lambda_max(data.features)
    assert ok and lam == pytest.approx(9.0, rel=1e-6)
    A = rng.standard_normal((40, 50))
    lam, _ = power_lambda_max(A, tol=1e-10, max_iters=5000)
    want = float(np.linalg.eigvalsh(A.T @ A).max())
    assert lam == pytest.approx(want, rel=1e-4)


def test_compute_sigma_identity_features():
    data = NodeDataset(features=np.eye(6), labels=np.zeros(6))
    got = compute_sigma_i(data, m=4, r=0.5, d_i=3)
    assert got == pytest.approx(1.0 / (4 * 1.1 * 3), rel=1e-6)


def test_estimate_lipschitz():
    lin = [NodeDataset(features=np.eye(3), labels=np.zeros(3))]
    assert estimate_lipschitz("linreg", lin) == pytest.approx(1.0 / 3, rel=1e-6)
    log = [NodeDataset(features=np.zeros((4, 3)), labels=np.zeros(4))]
    assert estimate_lipschitz("logreg", log, lam=0.05) == pytest.approx(0.05)


def test_lipschitz_bounds_secant_ratios():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((30, 6))
    data = NodeDataset(features=A, labels=A @ rng.standard_normal(6))
    obj = NodeObjective("linreg", data)
    ell = estimate_lipschitz("linreg", [data])
    for _ in range(50):
        w1, w2 = rng.standard_normal(6), rng.standard_normal(6)
        num = np.linalg.norm(obj.grad(w1) - obj.grad(w2))
        den = np.linalg.norm(w1 - w2)
        assert num <= ell * den * (1 + 1e-3)


def test_problem_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    datasets, w_star = generate_linreg_problem(12, 3, 2, (5, 8), 0.5, rng)
    path = tmp_path / "problem.bin"
    save_problem(path, datasets, w_star, s=3)
    back, w_back, s = load_problem(path)
    assert s == 3
    np.testing.assert_array_equal(w_back, w_star)
    for a, b in zip(datasets, back):
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
