"""Kernel computation and one-vs-rest SVM tests.

The dual solver is checked against a slow projected-gradient oracle
optimizing the same box-constrained objective, so both routes must land
on the same stationary point for strictly convex problems.
"""

import numpy as np
import pytest

from crosspool.errors import ContractError, CorruptionError, ValidationError
from crosspool.postproc import sign_quantize, sign_unpack
from crosspool.svm import (
    GramMatrix,
    gram_matrix,
    gram_matrix_packed,
    kernel_rows,
    load_svm,
    packed_rows,
    save_svm,
    svm_predict,
    svm_train,
)
from crosspool.tensor import FeatureMatrix


def projected_gradient_oracle(q, c, steps=200000, lr=None):
    """Minimize 0.5 a'Qa - sum(a) over the box [0, c]^n by projected gradient."""
    n = q.shape[0]
    if lr is None:
        lr = 1.0 / np.linalg.eigvalsh(q).max()
    alpha = np.zeros(n)
    for _ in range(steps):
        grad = q @ alpha - 1.0
        new = np.clip(alpha - lr * grad, 0.0, c)
        if np.abs(new - alpha).max() < 1e-12:
            alpha = new
            break
        alpha = new
    return alpha


def separable_blobs(rng, n_per=10, dim=4, gap=6.0):
    a = rng.normal(size=(n_per, dim)) + gap
    b = rng.normal(size=(n_per, dim)) - gap
    data = np.vstack([a, b])
    labels = ["pos"] * n_per + ["neg"] * n_per
    return data, labels


def test_gram_matches_matmul():
    rng = np.random.default_rng(90)
    data = rng.normal(size=(12, 5))
    gram = gram_matrix(FeatureMatrix(data))
    np.testing.assert_allclose(gram.values, data @ data.T, rtol=1e-10)


def test_gram_worker_counts_bitwise_identical():
    rng = np.random.default_rng(91)
    data = FeatureMatrix(rng.normal(size=(40, 16)))
    base = gram_matrix(data, workers=1)
    for workers in (2, 3, 8):
        other = gram_matrix(data, workers=workers)
        assert np.array_equal(base.values, other.values)


def test_gram_positive_semidefinite():
    rng = np.random.default_rng(92)
    gram = gram_matrix(FeatureMatrix(rng.normal(size=(25, 7))))
    eigs = np.linalg.eigvalsh(gram.values)
    assert eigs.min() >= -1e-6 * max(eigs.max(), 1.0)


def test_kernel_rows_match_gram():
    rng = np.random.default_rng(93)
    train = FeatureMatrix(rng.normal(size=(10, 6)))
    rows = kernel_rows(train, train, workers=2)
    np.testing.assert_array_equal(rows, gram_matrix(train).values)


def test_packed_gram_matches_unpacked_dot():
    rng = np.random.default_rng(94)
    signs = [sign_quantize(rng.choice([-1.0, 0.0, 1.0], size=19)) for _ in range(15)]
    gram = gram_matrix_packed(signs, workers=3)
    dense = np.array([sign_unpack(s) for s in signs])
    np.testing.assert_array_equal(gram.values, dense @ dense.T)
    rows = packed_rows(signs[:4], signs, workers=2)
    np.testing.assert_array_equal(rows, gram.values[:4])


def test_gram_requires_symmetry():
    bad = np.array([[1.0, 0.5], [0.2, 1.0]])
    with pytest.raises(ValidationError):
        GramMatrix(bad)


def test_train_separable_perfect():
    rng = np.random.default_rng(95)
    data, labels = separable_blobs(rng)
    gram = gram_matrix(FeatureMatrix(data))
    model = svm_train(gram, labels)
    preds = [svm_predict(model, gram.values[i])[0] for i in range(len(labels))]
    assert preds == labels


def test_train_three_class():
    rng = np.random.default_rng(96)
    centers = np.array([[8.0, 0.0], [-8.0, 8.0], [0.0, -8.0]])
    data = np.vstack([rng.normal(size=(8, 2)) + c for c in centers])
    labels = [f"c{i}" for i in range(3) for _ in range(8)]
    gram = gram_matrix(FeatureMatrix(data))
    model = svm_train(gram, labels)
    assert model.classes == ("c0", "c1", "c2")
    preds = [svm_predict(model, gram.values[i])[0] for i in range(24)]
    assert preds == labels


def test_xor_is_not_linearly_separable():
    """A linear kernel cannot beat 75 percent on XOR labels."""
    data = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    labels = ["a", "b", "b", "a"]
    gram = gram_matrix(FeatureMatrix(data))
    model = svm_train(gram, labels, c=100.0)
    preds = [svm_predict(model, gram.values[i])[0] for i in range(4)]
    accuracy = np.mean([p == t for p, t in zip(preds, labels)])
    assert accuracy <= 0.75


def test_dual_coefficients_feasible():
    rng = np.random.default_rng(97)
    data = rng.normal(size=(30, 3))
    labels = list(rng.choice(["u", "v", "w"], size=30))
    c = 0.7
    gram = gram_matrix(FeatureMatrix(data))
    model = svm_train(gram, labels, c=c)
    assert np.abs(model.dual_coeffs).max() <= c + 1e-9


def test_matches_projected_gradient_oracle():
    rng = np.random.default_rng(98)
    data, labels = separable_blobs(rng, n_per=8, dim=3, gap=2.0)
    gram = gram_matrix(FeatureMatrix(data))
    c = 1.0
    model = svm_train(gram, labels, c=c, tol=1e-10)

    n = gram.n
    offset = np.trace(gram.values) / n
    y = np.array([1.0 if lab == "neg" else -1.0 for lab in labels])
    q = np.outer(y, y) * (gram.values + offset)
    alpha = projected_gradient_oracle(q, c)
    # model stores beta = alpha * y for the first class in sorted order ("neg")
    np.testing.assert_allclose(model.dual_coeffs[0], alpha * y, atol=1e-5)
    np.testing.assert_allclose(model.biases[0], offset * np.dot(alpha, y), atol=1e-5)


def test_scale_covariance_power_of_two():
    """Scaling K by s^2 with C/s^2 rescales duals exactly and keeps scores."""
    rng = np.random.default_rng(99)
    data, labels = separable_blobs(rng, n_per=7, dim=4, gap=3.0)
    base = gram_matrix(FeatureMatrix(data))
    for s2 in (4.0, 0.25):
        scaled = GramMatrix(base.values * s2)
        m1 = svm_train(base, labels, c=1.0)
        m2 = svm_train(scaled, labels, c=1.0 / s2)
        np.testing.assert_array_equal(m1.dual_coeffs, m2.dual_coeffs * s2)
        for i in range(base.n):
            s_base = svm_predict(m1, base.values[i])[1]
            s_scaled = svm_predict(m2, scaled.values[i])[1]
            np.testing.assert_array_equal(s_base, s_scaled)


def test_scale_covariance_generic_scale():
    rng = np.random.default_rng(100)
    data, labels = separable_blobs(rng, n_per=7, dim=4, gap=3.0)
    base = gram_matrix(FeatureMatrix(data))
    s2 = 2.37
    scaled = GramMatrix(base.values * s2)
    m1 = svm_train(base, labels, c=1.0)
    m2 = svm_train(scaled, labels, c=1.0 / s2)
    np.testing.assert_allclose(m1.dual_coeffs, m2.dual_coeffs * s2, atol=1e-6)


def test_predict_tie_breaks_to_first_class():
    rng = np.random.default_rng(101)
    data, labels = separable_blobs(rng)
    gram = gram_matrix(FeatureMatrix(data))
    model = svm_train(gram, labels)
    zero_row = np.zeros(gram.n)
    label, scores = svm_predict(model, zero_row)
    # with a zero kernel row the scores reduce to the biases; verify argmax
    expect = model.classes[int(np.argmax(scores))]
    assert label == expect
    ties = np.flatnonzero(scores == scores.max())
    assert label == model.classes[ties[0]]


def test_multilabel_training():
    rng = np.random.default_rng(102)
    data = np.vstack([
        rng.normal(size=(8, 2)) + [6, 6],
        rng.normal(size=(8, 2)) - [6, 6],
        rng.normal(size=(8, 2)) + [6, -6],
    ])
    labels = (
        [frozenset(["red", "big"])] * 8
        + [frozenset(["blue"])] * 8
        + [frozenset(["red"])] * 8
    )
    gram = gram_matrix(FeatureMatrix(data))
    model = svm_train(gram, labels)
    assert set(model.classes) == {"red", "big", "blue"}
    # the "big" classifier must fire on the first blob only
    big = model.classes.index("big")
    scores = np.array([svm_predict(model, gram.values[i])[1][big] for i in range(24)])
    assert scores[:8].min() > 0
    assert scores[8:].max() < 0


def test_train_requires_two_classes():
    gram = GramMatrix(np.eye(4))
    with pytest.raises(ContractError):
        svm_train(gram, ["same"] * 4)


def test_train_label_count_mismatch():
    gram = GramMatrix(np.eye(4))
    with pytest.raises(ContractError):
        svm_train(gram, ["a", "b"])


def test_train_bad_c():
    gram = GramMatrix(np.eye(4))
    with pytest.raises(ValidationError):
        svm_train(gram, ["a", "a", "b", "b"], c=0.0)


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(103)
    data, labels = separable_blobs(rng)
    gram = gram_matrix(FeatureMatrix(data))
    model = svm_train(gram, labels)
    path = tmp_path / "m.svm"
    save_svm(model, path)
    back = load_svm(path)
    assert back.classes == model.classes
    assert back.regularization_c == model.regularization_c
    np.testing.assert_array_equal(back.dual_coeffs, model.dual_coeffs)
    np.testing.assert_array_equal(back.biases, model.biases)
    for i in range(gram.n):
        label_a, scores_a = svm_predict(back, gram.values[i])
        label_b, scores_b = svm_predict(model, gram.values[i])
        assert label_a == label_b
        np.testing.assert_array_equal(scores_a, scores_b)


def test_model_file_truncation(tmp_path):
    rng = np.random.default_rng(104)
    data, labels = separable_blobs(rng, n_per=4)
    model = svm_train(gram_matrix(FeatureMatrix(data)), labels)
    path = tmp_path / "t.svm"
    save_svm(model, path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(CorruptionError):
        load_svm(path)


def test_predict_row_length_checked():
    rng = np.random.default_rng(105)
    data, labels = separable_blobs(rng, n_per=4)
    model = svm_train(gram_matrix(FeatureMatrix(data)), labels)
    with pytest.raises(ContractError):
        svm_predict(model, np.zeros(5))
