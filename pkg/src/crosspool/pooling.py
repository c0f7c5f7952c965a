"""Pooling of local features into one image-part vector.

The central scheme weights every local feature of one layer by the
activations of the following layer: with descriptors x_1..x_N and indicator
weights a[i, k], channel k pools to

    P_k = sum_i x_i * a[i, k]

and the final vector concatenates P_1..P_K, so channel k occupies the slice
[k*d, (k+1)*d) of the output.  The sum is deliberately unnormalized; signed
square-rooting later compresses the magnitudes.  Direct max pooling, direct
sum-sqrt pooling, and spatial pyramid pooling over the anchor grid are kept
as reference schemes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, GeometryError, ValidationError
from .features import CorrespondenceMap, LocalFeatureSet, extract_local_features
from .postproc import PcaModel, pca_project
from .tensor import ActivationTensor, FeatureMatrix


@dataclass
class IndicatorWeights:
    """Per-feature pooling weights, one column per indicator channel."""

    weights: FeatureMatrix

    @property
    def count(self) -> int:
        return self.weights.count

    @property
    def channels(self) -> int:
        return self.weights.dim


@dataclass
class PooledVector:
    """Concatenation of per-channel pooled descriptors."""

    values: np.ndarray
    channel_dim: int
    channels: int

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64)).ravel()
        if self.channel_dim < 1 or self.channels < 1:
            raise ValidationError("pooled vector needs positive channel_dim and channels")
        if values.size != self.channel_dim * self.channels:
            raise ValidationError(
                f"pooled vector holds {values.size} values, expected "
                f"{self.channel_dim} * {self.channels}"
            )
        self.values = values

    def channel(self, k: int) -> np.ndarray:
        return self.values[k * self.channel_dim : (k + 1) * self.channel_dim]


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, LocalFeatureSet):
        return features.features.data
    if isinstance(features, FeatureMatrix):
        return features.data
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"features must be 2-d, got shape {arr.shape}")
    return arr


def indicator_pool(features, weights: IndicatorWeights) -> PooledVector:
    """Weighted sum of descriptors per indicator channel, concatenated."""
    matrix = _as_matrix(features)
    if matrix.shape[0] != weights.count:
        raise ContractError(
            f"{matrix.shape[0]} descriptors but {weights.count} weight rows"
        )
    if matrix.shape[0] < 1:
        raise ContractError("cannot pool an empty feature set")
    pooled = weights.weights.data.astype(np.float64).T @ matrix.astype(np.float64)
    return PooledVector(
        values=pooled.ravel(), channel_dim=matrix.shape[1], channels=weights.channels
    )


def gather_indicator_weights(
    next_layer: ActivationTensor, cmap: CorrespondenceMap | np.ndarray
) -> IndicatorWeights:
    """Read each mapped unit's channel vector out of the next layer.

    Accepts a full correspondence map or a bare (N, 2) array of unit
    coordinates."""
    if not next_layer.rectified:
        raise ContractError("indicator weights must come from a rectified layer")
    pairs = cmap.pairs if isinstance(cmap, CorrespondenceMap) else np.asarray(cmap)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ContractError("correspondence pairs must be an (N, 2) array")
    if pairs.size and (
        pairs[:, 0].max() >= next_layer.height or pairs[:, 1].max() >= next_layer.width
    ):
        raise GeometryError(
            f"correspondence exceeds indicator layer {next_layer.height}x{next_layer.width}"
        )
    gathered = next_layer.data[pairs[:, 0], pairs[:, 1], :]
    return IndicatorWeights(weights=FeatureMatrix(np.asarray(gathered, dtype=np.float64)))


def cross_layer_pool(
    layer_t: ActivationTensor,
    layer_t1: ActivationTensor,
    cmap: CorrespondenceMap,
    pca: PcaModel | None = None,
) -> PooledVector:
    """Extract local features of layer t, optionally PCA-project them, and
    pool them weighted by the layer t+1 activations under ``cmap``."""
    feature_set = extract_local_features(
        layer_t, cmap.window_h, cmap.window_w, cmap.stride
    )
    if feature_set.count != cmap.count:
        raise ContractError(
            f"correspondence covers {cmap.count} features, extracted {feature_set.count}"
        )
    matrix = feature_set.features
    if pca is not None:
        if pca.input_dim != matrix.dim:
            raise ContractError(
                f"PCA expects dim {pca.input_dim}, local features have {matrix.dim}"
            )
        matrix = pca_project(pca, matrix)
    weights = gather_indicator_weights(layer_t1, cmap)
    return indicator_pool(matrix, weights)


def direct_max_pool(features) -> np.ndarray:
    matrix = _as_matrix(features)
    if matrix.shape[0] < 1:
        raise ContractError("cannot max-pool an empty feature set")
    return matrix.max(axis=0).astype(np.float64)


def direct_sum_sqrt_pool(features, square_before_sum: bool = False) -> np.ndarray:
    """Column sums compressed by a signed square root.

    With ``square_before_sum`` the entries are squared before summation, so
    the result is the columnwise L2 norm; the default applies the signed
    root to the plain sum.
    """
    matrix = _as_matrix(features).astype(np.float64)
    if matrix.shape[0] < 1:
        raise ContractError("cannot sum-pool an empty feature set")
    if square_before_sum:
        return np.sqrt((matrix**2).sum(axis=0))
    total = matrix.sum(axis=0)
    return np.sign(total) * np.sqrt(np.abs(total))


def spp_pool(
    feature_set: LocalFeatureSet,
    levels: Sequence[int],
    values: np.ndarray | None = None,
    cell_pool: str = "max",
) -> np.ndarray:
    """Spatial pyramid pooling over the anchor grid.

    For each level g the anchor grid is split into g x g cells: the anchor
    with grid index (i, j) in an R x C grid falls into cell
    (i*g // R, j*g // C).  Cells are pooled independently (max by default)
    and concatenated level by level, cells row-major; empty cells contribute
    zeros.  ``values`` substitutes a projected matrix with one row per
    anchor, otherwise the raw descriptors are pooled.
    """
    if not levels:
        raise ContractError("spatial pyramid needs at least one level")
    if any(g < 1 for g in levels):
        raise ValidationError("pyramid levels must be positive")
    if cell_pool not in ("max", "sum"):
        raise ValidationError(f"unknown cell pool {cell_pool!r}")
    matrix = feature_set.features.data if values is None else np.asarray(values)
    if matrix.ndim != 2 or matrix.shape[0] != feature_set.count:
        raise ContractError(
            f"values must have one row per anchor ({feature_set.count}), "
            f"got shape {matrix.shape}"
        )
    if matrix.shape[0] < 1:
        raise ContractError("cannot pool an empty feature set")
    matrix = matrix.astype(np.float64)
    rows = feature_set.anchors[:, 0] // feature_set.stride
    cols = feature_set.anchors[:, 1] // feature_set.stride
    dim = matrix.shape[1]
    chunks = []
    for g in levels:
        cell_r = rows * g // feature_set.grid_h
        cell_c = cols * g // feature_set.grid_w
        for ci in range(g):
            for cj in range(g):
                mask = (cell_r == ci) & (cell_c == cj)
                if not mask.any():
                    chunks.append(np.zeros(dim))
                elif cell_pool == "max":
                    chunks.append(matrix[mask].max(axis=0))
                else:
                    chunks.append(matrix[mask].sum(axis=0))
    return np.concatenate(chunks)
