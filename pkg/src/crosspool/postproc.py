"""PCA projection, power normalization, and 2-bit sign quantization.

Quantization keeps only the sign of each dimension, two bits per dimension,
four dimensions per byte: code 00 for zero, 01 for positive, 10 for
negative; 11 never appears.  Dimension j occupies bits 2*(j % 4) and
2*(j % 4) + 1 of byte j // 4, and padding bits in the last byte are zero.
``packed_dot`` evaluates the inner product of two sign vectors directly on
the packed bytes with bit masks and a popcount table.

File containers (integers unsigned 32-bit little-endian):

    sign vector   magic ``CPSIGN01`` | dim | ceil(dim/4) packed bytes
    sign stack    magic ``CPSIGS01`` | count | dim | count*ceil(dim/4) bytes
    PCA model     magic ``CPPCA001`` | input_dim | output_dim | mean
                  (input_dim float32) | basis (output_dim*input_dim float32,
                  row-major) | eigenvalues (output_dim float32)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractError,
    CorruptionError,
    FormatError,
    RankError,
    ValidationError,
)
from .tensor import FeatureMatrix

SIGN_MAGIC = b"CPSIGN01"
SIGN_STACK_MAGIC = b"CPSIGS01"
PCA_MAGIC = b"CPPCA001"

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)
_LOW_BITS = 0b01010101


@dataclass
class PcaModel:
    """Affine projection onto the leading principal directions.

    ``basis`` rows are orthonormal and ordered by nonincreasing eigenvalue;
    each row's largest-magnitude entry is positive so a fit is reproducible
    up to the eigensolver's tolerance rather than up to sign.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        mean = np.ascontiguousarray(np.asarray(self.mean, dtype=np.float64)).ravel()
        basis = np.ascontiguousarray(np.asarray(self.basis, dtype=np.float64))
        eigenvalues = np.ascontiguousarray(
            np.asarray(self.eigenvalues, dtype=np.float64)
        ).ravel()
        if basis.ndim != 2:
            raise ValidationError(f"basis must be 2-d, got shape {basis.shape}")
        if basis.shape[1] != mean.size:
            raise ValidationError(
                f"basis row dim {basis.shape[1]} does not match mean dim {mean.size}"
            )
        if eigenvalues.size != basis.shape[0]:
            raise ValidationError(
                f"{eigenvalues.size} eigenvalues for {basis.shape[0]} basis rows"
            )
        if eigenvalues.size and eigenvalues.min() < 0:
            raise ValidationError("eigenvalues must be nonnegative")
        # Tolerance absorbs float32 rounding of near-equal eigenvalues on reload.
        slack = 1e-5 * float(eigenvalues[0]) if eigenvalues.size else 0.0
        if np.any(np.diff(eigenvalues) > slack):
            raise ValidationError("eigenvalues must be nonincreasing")
        gram = basis @ basis.T
        if not np.allclose(gram, np.eye(basis.shape[0]), atol=1e-5):
            raise ValidationError("basis rows are not orthonormal within 1e-5")
        self.mean = mean
        self.basis = basis
        self.eigenvalues = eigenvalues

    @property
    def input_dim(self) -> int:
        return self.mean.size

    @property
    def output_dim(self) -> int:
        return self.basis.shape[0]


@dataclass
class PackedSignVector:
    """A sign vector stored two bits per dimension."""

    dim: int
    bits: bytes

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("sign vector dimension must be positive")
        raw = bytes(bytearray(np.asarray(self.bits, dtype=np.uint8).ravel())
                    if isinstance(self.bits, np.ndarray) else self.bits)
        expected = (self.dim + 3) // 4
        if len(raw) != expected:
            raise ValidationError(
                f"{len(raw)} packed bytes for dim {self.dim}, expected {expected}"
            )
        arr = np.frombuffer(raw, dtype=np.uint8)
        if np.any(arr & (arr >> 1) & _LOW_BITS):
            raise ValidationError("packed sign vector contains the invalid code 11")
        # padding codes past dim must be zero or whole-byte dot products
        # would count phantom dimensions
        spare = self.dim % 4
        if spare and raw[-1] >> (2 * spare):
            raise ValidationError("packed sign vector has nonzero padding bits")
        self.bits = raw

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self.bits, dtype=np.uint8)


def pca_fit(sample: FeatureMatrix, output_dim: int) -> PcaModel:
    """Fit by eigendecomposition of the sample covariance (denominator
    count - 1); raises RankError when the sample cannot support output_dim
    components."""
    if sample.count < 2:
        raise ContractError(f"PCA needs at least 2 samples, got {sample.count}")
    if output_dim < 1:
        raise ContractError("PCA output_dim must be positive")
    limit = min(sample.count - 1, sample.dim)
    if output_dim > limit:
        raise ContractError(
            f"output_dim {output_dim} exceeds min(count-1, dim) = {limit}"
        )
    data = sample.data.astype(np.float64, copy=False)
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (sample.count - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    top = eigenvalues[0] if eigenvalues.size else 0.0
    threshold = max(top, 0.0) * 1e-10
    rank = int(np.sum(eigenvalues > threshold))
    if output_dim > rank:
        raise RankError(
            f"sample supports at most {rank} components, requested {output_dim}",
            achievable_rank=rank,
        )
    basis = eigenvectors[:, :output_dim].T.copy()
    for row in basis:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0
    return PcaModel(
        mean=mean,
        basis=basis,
        eigenvalues=np.clip(eigenvalues[:output_dim], 0.0, None),
    )


def pca_project(model: PcaModel, features: FeatureMatrix) -> np.ndarray:
    """Center by the model mean and project onto the basis rows."""
    if features.dim != model.input_dim:
        raise ContractError(
            f"features have dim {features.dim}, model expects {model.input_dim}"
        )
    return (features.data.astype(np.float64, copy=False) - model.mean) @ model.basis.T


def power_normalize(values: np.ndarray) -> np.ndarray:
    """Signed square root, elementwise: sign(v) * sqrt(|v|)."""
    arr = np.asarray(values, dtype=np.float64)
    return np.sign(arr) * np.sqrt(np.abs(arr))


def sign_quantize(values: np.ndarray) -> PackedSignVector:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size < 1:
        raise ValidationError("cannot quantize an empty vector")
    codes = np.zeros(arr.size, dtype=np.uint8)
    codes[arr > 0] = 0b01
    codes[arr < 0] = 0b10
    padded = np.zeros(((arr.size + 3) // 4) * 4, dtype=np.uint8)
    padded[: arr.size] = codes
    quads = padded.reshape(-1, 4)
    packed = quads[:, 0] | (quads[:, 1] << 2) | (quads[:, 2] << 4) | (quads[:, 3] << 6)
    return PackedSignVector(dim=arr.size, bits=packed)


def sign_unpack(packed: PackedSignVector) -> np.ndarray:
    """Recover the sign vector as floats in {-1.0, 0.0, +1.0}."""
    bits = packed.as_array()
    quads = np.empty((bits.size, 4), dtype=np.uint8)
    for j in range(4):
        quads[:, j] = (bits >> (2 * j)) & 0b11
    codes = quads.ravel()[: packed.dim]
    out = np.zeros(packed.dim, dtype=np.float64)
    out[codes == 0b01] = 1.0
    out[codes == 0b10] = -1.0
    return out


def packed_dot(a: PackedSignVector, b: PackedSignVector) -> int:
    """Inner product of two sign vectors, evaluated on the packed bytes."""
    if a.dim != b.dim:
        raise ContractError(f"sign vectors disagree on dim: {a.dim} vs {b.dim}")
    bits_a, bits_b = a.as_array(), b.as_array()
    pos_a = bits_a & _LOW_BITS
    neg_a = (bits_a >> 1) & _LOW_BITS
    pos_b = bits_b & _LOW_BITS
    neg_b = (bits_b >> 1) & _LOW_BITS
    agree = (pos_a & pos_b) | (neg_a & neg_b)
    differ = (pos_a & neg_b) | (neg_a & pos_b)
    return int(_POPCOUNT[agree].sum() - _POPCOUNT[differ].sum())


def save_signs(packed: PackedSignVector, path) -> None:
    with open(path, "wb") as fh:
        fh.write(SIGN_MAGIC)
        fh.write(struct.pack("<I", packed.dim))
        fh.write(packed.bits)


def load_signs(path) -> PackedSignVector:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(SIGN_MAGIC) + 4:
        raise FormatError(f"{path}: file too short for a sign-vector header")
    if blob[: len(SIGN_MAGIC)] != SIGN_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {SIGN_MAGIC!r}")
    (dim,) = struct.unpack_from("<I", blob, len(SIGN_MAGIC))
    if dim < 1:
        raise ValidationError(f"{path}: header declares zero dimension")
    body = blob[len(SIGN_MAGIC) + 4 :]
    expected = (dim + 3) // 4
    if len(body) != expected:
        raise CorruptionError(
            f"{path}: payload holds {len(body)} bytes, header promises {expected}"
        )
    return PackedSignVector(dim=dim, bits=bytes(body))


def save_sign_stack(vectors: list[PackedSignVector], path) -> None:
    if not vectors:
        raise ValidationError("cannot save an empty sign stack")
    dim = vectors[0].dim
    for v in vectors:
        if v.dim != dim:
            raise ContractError("sign stack vectors disagree on dim")
    with open(path, "wb") as fh:
        fh.write(SIGN_STACK_MAGIC)
        fh.write(struct.pack("<II", len(vectors), dim))
        for v in vectors:
            fh.write(v.bits)


def load_sign_stack(path) -> list[PackedSignVector]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(SIGN_STACK_MAGIC) + 8:
        raise FormatError(f"{path}: file too short for a sign-stack header")
    if blob[: len(SIGN_STACK_MAGIC)] != SIGN_STACK_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {SIGN_STACK_MAGIC!r}")
    count, dim = struct.unpack_from("<II", blob, len(SIGN_STACK_MAGIC))
    if dim < 1 or count < 1:
        raise ValidationError(f"{path}: header declares an empty stack")
    stride = (dim + 3) // 4
    body = blob[len(SIGN_STACK_MAGIC) + 8 :]
    if len(body) != count * stride:
        raise CorruptionError(
            f"{path}: payload holds {len(body)} bytes, header promises {count * stride}"
        )
    return [
        PackedSignVector(dim=dim, bits=body[i * stride : (i + 1) * stride])
        for i in range(count)
    ]


def save_pca(model: PcaModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(PCA_MAGIC)
        fh.write(struct.pack("<II", model.input_dim, model.output_dim))
        fh.write(model.mean.astype("<f4").tobytes())
        fh.write(model.basis.astype("<f4").tobytes())
        fh.write(model.eigenvalues.astype("<f4").tobytes())


def load_pca(path) -> PcaModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(PCA_MAGIC) + 8:
        raise FormatError(f"{path}: file too short for a PCA header")
    if blob[: len(PCA_MAGIC)] != PCA_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {PCA_MAGIC!r}")
    input_dim, output_dim = struct.unpack_from("<II", blob, len(PCA_MAGIC))
    if input_dim < 1 or output_dim < 1:
        raise ValidationError(f"{path}: header declares a zero dimension")
    body = blob[len(PCA_MAGIC) + 8 :]
    expected = 4 * (input_dim + output_dim * input_dim + output_dim)
    if len(body) != expected:
        raise CorruptionError(
            f"{path}: payload holds {len(body)} bytes, header promises {expected}"
        )
    floats = np.frombuffer(body, dtype="<f4").astype(np.float64)
    mean = floats[:input_dim]
    basis = floats[input_dim : input_dim + output_dim * input_dim]
    eigenvalues = floats[input_dim + output_dim * input_dim :]
    return PcaModel(
        mean=mean, basis=basis.reshape(output_dim, input_dim), eigenvalues=eigenvalues
    )
