"""Sliding-window local features and their next-layer correspondence.

A local feature is one window of a layer's activations, flattened in
(window row, window column, channel) order, so entry
``(i*window_w + j)*depth + k`` of a descriptor is the source value at
``(anchor_r + i, anchor_c + j, k)``.  Only windows that lie fully inside
the tensor are extracted; anchors advance in stride steps and are listed
row-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, GeometryError, ValidationError
from .network import ConvLayerSpec, window_stack
from .tensor import ActivationTensor, FeatureMatrix


@dataclass
class LocalFeatureSet:
    """Extracted descriptors plus the anchor grid they came from."""

    features: FeatureMatrix
    anchors: np.ndarray
    window_h: int
    window_w: int
    stride: int
    grid_h: int
    grid_w: int

    def __post_init__(self):
        anchors = np.ascontiguousarray(np.asarray(self.anchors, dtype=np.int64))
        if anchors.ndim != 2 or anchors.shape[1] != 2:
            raise ValidationError(f"anchors must have shape (count, 2), got {anchors.shape}")
        if anchors.shape[0] != self.features.count:
            raise ValidationError(
                f"{anchors.shape[0]} anchors for {self.features.count} descriptors"
            )
        if self.grid_h * self.grid_w != self.features.count:
            raise ValidationError(
                f"grid {self.grid_h}x{self.grid_w} does not cover "
                f"{self.features.count} descriptors"
            )
        self.anchors = anchors

    @property
    def count(self) -> int:
        return self.features.count

    @property
    def dim(self) -> int:
        return self.features.dim


@dataclass
class CorrespondenceMap:
    """Feature index -> next-layer (row, column), with the window geometry
    that produced the features it applies to."""

    pairs: np.ndarray
    window_h: int
    window_w: int
    stride: int

    def __post_init__(self):
        pairs = np.ascontiguousarray(np.asarray(self.pairs, dtype=np.int64))
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValidationError(f"pairs must have shape (count, 2), got {pairs.shape}")
        if pairs.size and pairs.min() < 0:
            raise ValidationError("correspondence pairs must be nonnegative")
        self.pairs = pairs

    @property
    def count(self) -> int:
        return self.pairs.shape[0]


def extract_local_features(
    tensor: ActivationTensor, window_h: int, window_w: int, stride: int = 1
) -> LocalFeatureSet:
    """All fully-interior window_h x window_w patches, stride steps apart."""
    if window_h < 1 or window_w < 1:
        raise ValidationError("window dimensions must be positive")
    if stride < 1:
        raise ValidationError("stride must be positive")
    if window_h > tensor.height or window_w > tensor.width:
        raise GeometryError(
            f"window {window_h}x{window_w} exceeds tensor "
            f"{tensor.height}x{tensor.width}"
        )
    grid_h = (tensor.height - window_h) // stride + 1
    grid_w = (tensor.width - window_w) // stride + 1
    patches = window_stack(tensor.data, window_h, window_w, stride)
    matrix = np.ascontiguousarray(patches).reshape(grid_h * grid_w, -1)
    rows, cols = np.meshgrid(
        np.arange(grid_h) * stride, np.arange(grid_w) * stride, indexing="ij"
    )
    anchors = np.stack([rows.ravel(), cols.ravel()], axis=1)
    return LocalFeatureSet(
        features=FeatureMatrix(matrix),
        anchors=anchors,
        window_h=window_h,
        window_w=window_w,
        stride=stride,
        grid_h=grid_h,
        grid_w=grid_w,
    )


def correspondence_map(
    feature_set: LocalFeatureSet,
    next_layer: ConvLayerSpec,
    next_dims: tuple[int, int],
) -> CorrespondenceMap:
    """Map each feature to the next-layer unit whose receptive field is its
    window.

    A unit (u, v) of a convolution with stride s and padding p covers input
    rows [u*s - p, u*s - p + kernel_h); solving for the anchor gives
    u = (r + p) / s, and likewise for columns.
    """
    if (feature_set.window_h, feature_set.window_w) != (
        next_layer.kernel_h,
        next_layer.kernel_w,
    ):
        raise ContractError(
            f"feature window {feature_set.window_h}x{feature_set.window_w} does not "
            f"match next-layer kernel {next_layer.kernel_h}x{next_layer.kernel_w}"
        )
    if feature_set.stride != next_layer.stride:
        raise ContractError(
            f"feature stride {feature_set.stride} does not match next-layer "
            f"stride {next_layer.stride}"
        )
    shifted = feature_set.anchors + next_layer.pad
    if np.any(shifted % next_layer.stride):
        raise GeometryError(
            f"padding {next_layer.pad} is not aligned with stride {next_layer.stride}"
        )
    pairs = shifted // next_layer.stride
    next_h, next_w = next_dims
    if pairs.size and (pairs[:, 0].max() >= next_h or pairs[:, 1].max() >= next_w):
        raise GeometryError(
            f"correspondence exceeds next-layer dims {next_h}x{next_w}"
        )
    return CorrespondenceMap(
        pairs=pairs,
        window_h=feature_set.window_h,
        window_w=feature_set.window_w,
        stride=feature_set.stride,
    )
