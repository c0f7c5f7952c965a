"""Activation tensors, feature matrices, and their binary containers.

File layout, shared by both containers (integers are unsigned 32-bit
little-endian, floats are IEEE 754 binary32 little-endian):

    tensor file   magic ``CPTENS01`` | height | width | depth |
                  rectified (one byte, 0 or 1) | height*width*depth floats
    matrix file   magic ``CPFMAT01`` | count | dim | count*dim floats

Payloads are row-major: tensors iterate (row, column, channel), matrices
iterate (row, column).  The tensor layout keeps each spatial unit's channel
vector contiguous, which is the access pattern of every consumer here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

TENSOR_MAGIC = b"CPTENS01"
MATRIX_MAGIC = b"CPFMAT01"

_TENSOR_HEADER = struct.Struct("<III B")
_MATRIX_HEADER = struct.Struct("<II")


@dataclass
class ActivationTensor:
    """One layer's activations on an (height, width, depth) float32 grid.

    ``rectified`` marks the tensor as the output of a ReLU stage; setting it
    on data with negative entries is rejected.  The array is made read-only
    so a tensor can be shared across worker threads safely.
    """

    data: np.ndarray
    rectified: bool = False

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if arr.ndim != 3:
            raise ValidationError(
                f"tensor data must have shape (height, width, depth), got {arr.shape}"
            )
        if min(arr.shape) < 1:
            raise ValidationError(f"tensor dimensions must be positive, got {arr.shape}")
        if self.rectified and arr.size and float(arr.min()) < 0.0:
            raise ValidationError("tensor marked rectified but contains negative values")
        arr.flags.writeable = False
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def depth(self) -> int:
        return self.data.shape[2]


@dataclass
class FeatureMatrix:
    """A stack of ``count`` feature vectors of identical dimension ``dim``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        arr = np.ascontiguousarray(arr)
        if arr.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-d, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise ValidationError("feature dimension must be positive")
        self.data = arr

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def save_tensor(tensor: ActivationTensor, path) -> None:
    payload = tensor.data.astype("<f4", copy=False).tobytes()
    header = TENSOR_MAGIC + _TENSOR_HEADER.pack(
        tensor.height, tensor.width, tensor.depth, int(tensor.rectified)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_tensor(path) -> ActivationTensor:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(TENSOR_MAGIC) + _TENSOR_HEADER.size:
        raise FormatError(f"{path}: file too short for a tensor header")
    if blob[: len(TENSOR_MAGIC)] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {TENSOR_MAGIC!r}")
    h, w, d, flag = _TENSOR_HEADER.unpack_from(blob, len(TENSOR_MAGIC))
    if min(h, w, d) < 1:
        raise ValidationError(f"{path}: header declares a zero dimension ({h}, {w}, {d})")
    if flag not in (0, 1):
        raise FormatError(f"{path}: rectified flag must be 0 or 1, got {flag}")
    body = blob[len(TENSOR_MAGIC) + _TENSOR_HEADER.size :]
    expected = 4 * h * w * d
    if len(body) != expected:
        raise CorruptionError(
            f"{path}: payload holds {len(body)} bytes, header promises {expected}"
        )
    values = np.frombuffer(body, dtype="<f4").astype(np.float32, copy=True)
    return ActivationTensor(values.reshape(h, w, d), rectified=bool(flag))


def save_features(matrix: FeatureMatrix, path) -> None:
    payload = matrix.data.astype("<f4", copy=False).tobytes()
    header = MATRIX_MAGIC + _MATRIX_HEADER.pack(matrix.count, matrix.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MATRIX_MAGIC) + _MATRIX_HEADER.size:
        raise FormatError(f"{path}: file too short for a feature-matrix header")
    if blob[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MATRIX_MAGIC!r}")
    count, dim = _MATRIX_HEADER.unpack_from(blob, len(MATRIX_MAGIC))
    if dim < 1:
        raise ValidationError(f"{path}: header declares zero feature dimension")
    body = blob[len(MATRIX_MAGIC) + _MATRIX_HEADER.size :]
    expected = 4 * count * dim
    if len(body) != expected:
        raise CorruptionError(
            f"{path}: payload holds {len(body)} bytes, header promises {expected}"
        )
    values = np.frombuffer(body, dtype="<f4").astype(np.float32, copy=True)
    return FeatureMatrix(values.reshape(count, dim))
