"""PCA, power normalization, and 2-bit sign code tests."""

import numpy as np
import pytest

from crosspool.errors import (
    ContractError,
    CorruptionError,
    RankError,
    ValidationError,
)
from crosspool.postproc import (
    PackedSignVector,
    load_pca,
    load_sign_stack,
    load_signs,
    packed_dot,
    pca_fit,
    pca_project,
    power_normalize,
    save_pca,
    save_sign_stack,
    save_signs,
    sign_quantize,
    sign_unpack,
)
from crosspool.tensor import FeatureMatrix


def pca_oracle(data, dim):
    """Independent route: np.cov plus np.linalg.eig, sorted by eigenvalue."""
    cov = np.cov(data, rowvar=False, ddof=1)
    vals, vecs = np.linalg.eig(cov)
    vals = np.real(vals)
    vecs = np.real(vecs)
    order = np.argsort(vals)[::-1]
    return vals[order][:dim], vecs[:, order][:, :dim].T


def test_pca_eigenvalues_match_cov_eig():
    rng = np.random.default_rng(70)
    data = rng.normal(size=(300, 8)) @ rng.normal(size=(8, 8))
    model = pca_fit(FeatureMatrix(data), 8)
    vals, _ = pca_oracle(data, 8)
    np.testing.assert_allclose(model.eigenvalues, vals, rtol=1e-8, atol=1e-10)


def test_pca_basis_spans_oracle_directions():
    rng = np.random.default_rng(71)
    # distinct variances so eigenvectors are unique up to sign
    data = rng.normal(size=(500, 5)) * np.array([5.0, 3.0, 2.0, 1.0, 0.5])
    model = pca_fit(FeatureMatrix(data), 5)
    _, vecs = pca_oracle(data, 5)
    for row, oracle_row in zip(model.basis, vecs):
        dot = abs(np.dot(row, oracle_row))
        assert dot > 1 - 1e-8


def test_pca_sign_convention():
    """The largest-magnitude entry of each basis row is positive."""
    rng = np.random.default_rng(72)
    data = rng.normal(size=(100, 6)) * np.arange(1, 7)
    model = pca_fit(FeatureMatrix(data), 6)
    for row in model.basis:
        assert row[np.argmax(np.abs(row))] > 0


def test_pca_line_data():
    """Points on a line project onto it; the second component would be noise."""
    rng = np.random.default_rng(73)
    ts = rng.normal(size=200)
    direction = np.array([3.0, 4.0]) / 5.0
    data = np.outer(ts, direction) + np.array([10.0, -2.0])
    model = pca_fit(FeatureMatrix(data), 1)
    np.testing.assert_allclose(np.abs(model.basis[0]), direction, atol=1e-7)
    np.testing.assert_allclose(model.mean, data.mean(axis=0), atol=1e-7)
    projected = pca_project(model, FeatureMatrix(data))
    np.testing.assert_allclose(np.abs(projected[:, 0]), np.abs(ts - ts.mean()), atol=1e-6)


def test_pca_rank_error_reports_achievable():
    rng = np.random.default_rng(74)
    ts = rng.normal(size=50)
    data = np.outer(ts, [1.0, 2.0, 3.0])
    with pytest.raises(RankError) as info:
        pca_fit(FeatureMatrix(data), 2)
    assert info.value.achievable_rank == 1


def test_pca_contract_errors():
    with pytest.raises(ContractError):
        pca_fit(FeatureMatrix(np.ones((1, 4))), 1)
    rng = np.random.default_rng(75)
    data = rng.normal(size=(5, 10))
    # only count-1 = 4 components are estimable from 5 samples
    with pytest.raises(ContractError):
        pca_fit(FeatureMatrix(data), 5)


def test_pca_projection_decorrelated():
    rng = np.random.default_rng(76)
    data = rng.normal(size=(400, 6)) @ rng.normal(size=(6, 6))
    model = pca_fit(FeatureMatrix(data), 4)
    projected = pca_project(model, FeatureMatrix(data))
    cov = np.cov(projected, rowvar=False, ddof=1)
    off = cov - np.diag(np.diag(cov))
    assert np.abs(off).max() < 1e-8
    np.testing.assert_allclose(np.diag(cov), model.eigenvalues, rtol=1e-8)


def test_pca_reconstruction_error_nonincreasing():
    rng = np.random.default_rng(77)
    data = rng.normal(size=(200, 20)) @ rng.normal(size=(20, 20))
    errors = []
    for dim in (2, 5, 10, 20):
        model = pca_fit(FeatureMatrix(data), dim)
        projected = pca_project(model, FeatureMatrix(data))
        rebuilt = projected @ model.basis + model.mean
        errors.append(float(np.mean((rebuilt - data) ** 2)))
    assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))


def test_pca_file_round_trip(tmp_path):
    rng = np.random.default_rng(78)
    data = rng.normal(size=(60, 7))
    model = pca_fit(FeatureMatrix(data), 3)
    path = tmp_path / "m.pca"
    save_pca(model, path)
    back = load_pca(path)
    assert back.input_dim == 7 and back.output_dim == 3
    np.testing.assert_allclose(back.mean, model.mean, rtol=1e-6)
    np.testing.assert_allclose(back.basis, model.basis, rtol=1e-5, atol=1e-7)
    # projections through the reloaded model stay close at float32 precision
    a = pca_project(model, FeatureMatrix(data))
    b = pca_project(back, FeatureMatrix(data))
    np.testing.assert_allclose(a, b, rtol=1e-4, atol=1e-4)


def test_pca_file_truncation(tmp_path):
    rng = np.random.default_rng(79)
    model = pca_fit(FeatureMatrix(rng.normal(size=(30, 4))), 2)
    path = tmp_path / "t.pca"
    save_pca(model, path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CorruptionError):
        load_pca(path)


def test_power_normalize():
    v = np.array([4.0, -9.0, 0.0, 0.25])
    np.testing.assert_allclose(power_normalize(v), [2.0, -3.0, 0.0, 0.5])


def test_power_normalize_monotone_and_odd():
    rng = np.random.default_rng(80)
    v = rng.normal(size=100)
    out = power_normalize(v)
    np.testing.assert_allclose(power_normalize(-v), -out)
    np.testing.assert_array_equal(np.sign(out), np.sign(v))


def test_sign_quantize_example():
    q = sign_quantize(np.array([2.5, -0.1, 0.0, 7.0]))
    assert q.dim == 4
    assert len(q.bits) == 1
    np.testing.assert_array_equal(sign_unpack(q), [1.0, -1.0, 0.0, 1.0])


@pytest.mark.parametrize("dim,nbytes", [(1, 1), (4, 1), (5, 2), (8, 2), (9, 3), (160, 40)])
def test_packed_size(dim, nbytes):
    q = sign_quantize(np.zeros(dim))
    assert len(q.bits) == nbytes


def test_sign_round_trip_random():
    rng = np.random.default_rng(81)
    for _ in range(50):
        dim = int(rng.integers(1, 40))
        v = rng.choice([-1.0, 0.0, 1.0], size=dim) * rng.uniform(0.1, 5.0, size=dim)
        v[rng.random(dim) < 0.2] = 0.0
        np.testing.assert_array_equal(sign_unpack(sign_quantize(v)), np.sign(v))


def test_code_three_rejected():
    with pytest.raises(ValidationError):
        PackedSignVector(dim=1, bits=bytes([0b11]))


def test_padding_bits_must_be_zero():
    with pytest.raises(ValidationError):
        PackedSignVector(dim=1, bits=bytes([0b0100]))


def test_packed_dot_matches_unpacked():
    rng = np.random.default_rng(82)
    for _ in range(100):
        dim = int(rng.integers(1, 60))
        a = rng.choice([-1.0, 0.0, 1.0], size=dim)
        b = rng.choice([-1.0, 0.0, 1.0], size=dim)
        qa, qb = sign_quantize(a), sign_quantize(b)
        assert packed_dot(qa, qb) == int(np.dot(np.sign(a), np.sign(b)))


def test_packed_dot_dim_mismatch():
    with pytest.raises(ContractError):
        packed_dot(sign_quantize(np.ones(3)), sign_quantize(np.ones(4)))


def test_signs_file_round_trip(tmp_path):
    rng = np.random.default_rng(83)
    v = rng.normal(size=11)
    q = sign_quantize(v)
    path = tmp_path / "v.signs"
    save_signs(q, path)
    back = load_signs(path)
    assert back.dim == 11
    assert back.bits == q.bits


def test_sign_stack_round_trip(tmp_path):
    rng = np.random.default_rng(84)
    stack = [sign_quantize(rng.normal(size=9)) for _ in range(5)]
    path = tmp_path / "s.sgns"
    save_sign_stack(stack, path)
    back = load_sign_stack(path)
    assert len(back) == 5
    for a, b in zip(stack, back):
        assert a.bits == b.bits and a.dim == b.dim


def test_sign_stack_dim_mismatch(tmp_path):
    stack = [sign_quantize(np.ones(4)), sign_quantize(np.ones(5))]
    with pytest.raises(ContractError):
        save_sign_stack(stack, tmp_path / "bad.sgns")


def test_signs_file_corruption(tmp_path):
    path = tmp_path / "c.signs"
    save_signs(sign_quantize(np.ones(9)), path)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(CorruptionError):
        load_signs(path)
