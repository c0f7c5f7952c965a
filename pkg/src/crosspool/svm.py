"""Linear classification from precomputed kernels.

Kernels are plain inner products.  Every Gram entry is produced by the same
per-row ``dot`` call no matter how many workers split the rows, so the
matrix is bitwise identical for any worker count.

Training is one-vs-rest.  Each binary problem is the box-constrained dual

    min over 0 <= alpha <= C of  (1/2) alpha' Q alpha - sum(alpha),
    Q[i, j] = y_i y_j (K[i, j] + c0),      c0 = trace(K) / n,

solved by coordinate ascent in a fixed cyclic sweep until every projected
gradient is within tol.  The c0 offset is the usual augmented-bias trick
(one constant pseudo-feature of squared norm c0), giving bias
c0 * sum(alpha * y); tying c0 to the kernel's own scale keeps decisions
exactly invariant under rescaling representations by s with C / s**2.

Model container (integers unsigned 32-bit LE, floats IEEE binary64 LE):

    magic ``CPSVM001`` | class count | train count | C (float64) | then per
    class: label length | label (UTF-8) | bias (float64) | train-count dual
    coefficients (float64)
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ContractError,
    CorruptionError,
    FormatError,
    ValidationError,
)
from .postproc import PackedSignVector, _LOW_BITS, _POPCOUNT
from .tensor import FeatureMatrix

SVM_MAGIC = b"CPSVM001"

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-4
MAX_SWEEPS = 2000


@dataclass
class GramMatrix:
    """Symmetric matrix of pairwise representation inner products."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValidationError(f"Gram matrix must be square, got {values.shape}")
        if values.shape[0] < 1:
            raise ValidationError("Gram matrix must be nonempty")
        scale = float(np.abs(values).max())
        if not np.allclose(values, values.T, atol=1e-5 * max(scale, 1.0)):
            raise ValidationError("Gram matrix is not symmetric within 1e-5")
        if float(values.diagonal().min()) < 0.0:
            raise ValidationError("Gram diagonal must be nonnegative")
        self.values = values

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class SvmModel:
    """One-vs-rest dual coefficients over the training kernel."""

    classes: tuple[str, ...]
    dual_coeffs: np.ndarray
    biases: np.ndarray
    regularization_c: float

    def __post_init__(self):
        self.classes = tuple(self.classes)
        coeffs = np.ascontiguousarray(np.asarray(self.dual_coeffs, dtype=np.float64))
        biases = np.ascontiguousarray(np.asarray(self.biases, dtype=np.float64)).ravel()
        if coeffs.ndim != 2 or coeffs.shape[0] != len(self.classes):
            raise ValidationError("dual_coeffs must have one row per class")
        if biases.size != len(self.classes):
            raise ValidationError("biases must have one entry per class")
        if len(self.classes) < 2:
            raise ValidationError("a model needs at least two classes")
        if coeffs.size and float(np.abs(coeffs).max()) > self.regularization_c + 1e-9:
            raise ValidationError("dual coefficients exceed the box constraint")
        self.dual_coeffs = coeffs
        self.biases = biases

    @property
    def train_count(self) -> int:
        return self.dual_coeffs.shape[1]


def _rows(task, n: int, workers: int) -> list:
    if workers <= 1:
        return [task(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(n)))


def gram_matrix(reps: FeatureMatrix, workers: int = 1) -> GramMatrix:
    """Pairwise inner products of the representation rows."""
    if reps.count < 1:
        raise ContractError("Gram matrix needs at least one representation")
    data = reps.data.astype(np.float64, copy=False)

    def row(i: int) -> np.ndarray:
        return data @ data[i]

    return GramMatrix(np.stack(_rows(row, reps.count, workers)))


def kernel_rows(queries: FeatureMatrix, train: FeatureMatrix, workers: int = 1) -> np.ndarray:
    """Inner products of each query row against every training row."""
    if queries.dim != train.dim:
        raise ContractError(
            f"query dim {queries.dim} does not match training dim {train.dim}"
        )
    q = queries.data.astype(np.float64, copy=False)
    t = train.data.astype(np.float64, copy=False)

    def row(i: int) -> np.ndarray:
        return t @ q[i]

    return np.stack(_rows(row, queries.count, workers))


def _split_bits(signs: Sequence[PackedSignVector]) -> tuple[np.ndarray, np.ndarray]:
    stack = np.stack([v.as_array() for v in signs])
    return stack & _LOW_BITS, (stack >> 1) & _LOW_BITS


def gram_matrix_packed(signs: Sequence[PackedSignVector], workers: int = 1) -> GramMatrix:
    """Exact integer Gram matrix of packed sign vectors."""
    if len(signs) < 1:
        raise ContractError("Gram matrix needs at least one representation")
    dim = signs[0].dim
    for v in signs:
        if v.dim != dim:
            raise ContractError("packed sign vectors disagree on dim")
    pos, neg = _split_bits(signs)

    def row(i: int) -> np.ndarray:
        agree = (pos & pos[i]) | (neg & neg[i])
        differ = (pos & neg[i]) | (neg & pos[i])
        return (_POPCOUNT[agree].sum(axis=1) - _POPCOUNT[differ].sum(axis=1)).astype(
            np.float64
        )

    return GramMatrix(np.stack(_rows(row, len(signs), workers)))


def packed_rows(
    queries: Sequence[PackedSignVector],
    train: Sequence[PackedSignVector],
    workers: int = 1,
) -> np.ndarray:
    """Sign-vector kernel rows of each query against every training vector."""
    if not queries or not train:
        raise ContractError("packed kernel rows need nonempty inputs")
    if queries[0].dim != train[0].dim:
        raise ContractError("query and training sign vectors disagree on dim")
    qpos, qneg = _split_bits(queries)
    tpos, tneg = _split_bits(train)

    def row(i: int) -> np.ndarray:
        agree = (tpos & qpos[i]) | (tneg & qneg[i])
        differ = (tpos & qneg[i]) | (tneg & qpos[i])
        return (_POPCOUNT[agree].sum(axis=1) - _POPCOUNT[differ].sum(axis=1)).astype(
            np.float64
        )

    return np.stack(_rows(row, len(queries), workers))


def _normalize_labels(labels: Sequence) -> list[frozenset[str]]:
    out = []
    for entry in labels:
        if isinstance(entry, str):
            out.append(frozenset([entry]))
        else:
            names = frozenset(str(x) for x in entry)
            if not names:
                raise ValidationError("every example needs at least one label")
            out.append(names)
    return out


def _solve_binary(
    augmented: np.ndarray,
    diag: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float,
    max_sweeps: int,
) -> np.ndarray:
    """Cyclic coordinate ascent on the box-constrained dual; returns alpha."""
    n = y.size
    alpha = np.zeros(n)
    pooled = np.zeros(n)  # augmented @ (alpha * y)
    for _ in range(max_sweeps):
        worst = 0.0
        for i in range(n):
            grad = y[i] * pooled[i] - 1.0
            a = alpha[i]
            if a <= 0.0:
                projected = min(grad, 0.0)
            elif a >= c:
                projected = max(grad, 0.0)
            else:
                projected = grad
            if projected == 0.0:
                continue
            worst = max(worst, abs(projected))
            if diag[i] <= 0.0:
                continue
            updated = min(max(a - grad / diag[i], 0.0), c)
            delta = updated - a
            if delta != 0.0:
                alpha[i] = updated
                pooled += (delta * y[i]) * augmented[i]
        if worst <= tol:
            break
    return alpha


def svm_train(
    gram: GramMatrix,
    labels: Sequence,
    c: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = MAX_SWEEPS,
    workers: int = 1,
) -> SvmModel:
    """Train one-vs-rest classifiers on a precomputed training kernel.

    ``labels`` holds one label per training row, or an iterable of labels
    for multi-label data; a class's binary problem takes every example that
    carries the class as positive.
    """
    n = gram.n
    if len(labels) != n:
        raise ContractError(f"{len(labels)} labels for {n} kernel rows")
    if c <= 0.0:
        raise ValidationError("regularization C must be positive")
    if tol <= 0.0:
        raise ValidationError("tolerance must be positive")
    label_sets = _normalize_labels(labels)
    classes = sorted(set().union(*label_sets))
    if len(classes) < 2:
        raise ContractError(f"training needs at least 2 classes, got {len(classes)}")
    offset = float(np.trace(gram.values)) / n
    augmented = gram.values + offset
    diag = augmented.diagonal().copy()

    def solve(class_index: int) -> tuple[np.ndarray, float]:
        name = classes[class_index]
        y = np.where([name in s for s in label_sets], 1.0, -1.0)
        alpha = _solve_binary(augmented, diag, y, c, tol, max_sweeps)
        beta = alpha * y
        return beta, offset * float(beta.sum())

    results = _rows(solve, len(classes), workers)
    dual = np.stack([beta for beta, _ in results])
    biases = np.array([bias for _, bias in results])
    return SvmModel(
        classes=classes, dual_coeffs=dual, biases=biases, regularization_c=c
    )


def svm_predict(model: SvmModel, kernel_row: np.ndarray) -> tuple[str, np.ndarray]:
    """Score one example given its kernel row against the training set.

    Returns the argmax class (ties go to the smallest class index) and the
    per-class scores aligned with ``model.classes``.
    """
    row = np.asarray(kernel_row, dtype=np.float64).ravel()
    if row.size != model.train_count:
        raise ContractError(
            f"kernel row has {row.size} entries, model expects {model.train_count}"
        )
    scores = model.dual_coeffs @ row + model.biases
    return model.classes[int(np.argmax(scores))], scores


def save_svm(model: SvmModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(SVM_MAGIC)
        fh.write(
            struct.pack(
                "<IId", len(model.classes), model.train_count, model.regularization_c
            )
        )
        for index, name in enumerate(model.classes):
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<d", float(model.biases[index])))
            fh.write(model.dual_coeffs[index].astype("<f8").tobytes())


def load_svm(path) -> SvmModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    header = struct.Struct("<IId")
    if len(blob) < len(SVM_MAGIC) + header.size:
        raise FormatError(f"{path}: file too short for a model header")
    if blob[: len(SVM_MAGIC)] != SVM_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {SVM_MAGIC!r}")
    n_classes, n_train, c = header.unpack_from(blob, len(SVM_MAGIC))
    if n_classes < 2:
        raise ValidationError(f"{path}: model declares {n_classes} classes")
    cursor = len(SVM_MAGIC) + header.size
    classes = []
    biases = []
    rows = []
    for _ in range(n_classes):
        if cursor + 4 > len(blob):
            raise CorruptionError(f"{path}: truncated class record")
        (name_len,) = struct.unpack_from("<I", blob, cursor)
        cursor += 4
        record = name_len + 8 + 8 * n_train
        if cursor + record > len(blob):
            raise CorruptionError(f"{path}: truncated class record")
        classes.append(blob[cursor : cursor + name_len].decode("utf-8"))
        cursor += name_len
        (bias,) = struct.unpack_from("<d", blob, cursor)
        cursor += 8
        biases.append(bias)
        rows.append(np.frombuffer(blob, dtype="<f8", count=n_train, offset=cursor).copy())
        cursor += 8 * n_train
    if cursor != len(blob):
        raise CorruptionError(f"{path}: {len(blob) - cursor} trailing bytes")
    return SvmModel(
        classes=classes,
        dual_coeffs=np.stack(rows),
        biases=np.array(biases),
        regularization_c=c,
    )
