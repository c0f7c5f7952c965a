"""Two-resolution image representations: the whole image plus a block grid.

Blocks tile the image row-major.  Nominal block height is height // M; the
last row of blocks absorbs the remainder, and likewise for columns.  A
positive overlap fraction f extends every block by floor(f * nominal) units
on each side that faces another block, clamped to the image, so outer edges
never grow.  Each part is pushed through the network and encoded on its
own; the final vector is the concatenation, with a part table recording
(label, offset, length).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GeometryError, ValidationError
from .network import NetworkSpec, min_input_extent, run_network
from .tensor import ActivationTensor


@dataclass
class ResolutionConfig:
    """Which resolutions participate and how the block grid is cut.

    ``blocks_m = blocks_n = 0`` disables the block resolution entirely, in
    which case the whole image must be included.
    """

    blocks_m: int = 2
    blocks_n: int = 2
    overlap_fraction: float = 0.0
    include_whole_image: bool = True

    def __post_init__(self):
        if self.blocks_m < 0 or self.blocks_n < 0:
            raise ValidationError("block grid dimensions must be nonnegative")
        if (self.blocks_m == 0) != (self.blocks_n == 0):
            raise ValidationError("block grid dimensions must both be zero or both positive")
        if not self.include_whole_image and self.blocks_m * self.blocks_n < 1:
            raise ValidationError("config selects no parts at all")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValidationError("overlap fraction must lie in [0, 1)")

    @property
    def block_count(self) -> int:
        return self.blocks_m * self.blocks_n


@dataclass
class ImageRepresentation:
    """Concatenated per-part vectors plus the layout that produced them."""

    values: np.ndarray
    parts: list[tuple[str, int, int]]

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64)).ravel()
        offset = 0
        for label, start, length in self.parts:
            if start != offset or length < 1:
                raise ValidationError(
                    f"part {label!r} at ({start}, {length}) breaks the tiling at {offset}"
                )
            offset += length
        if offset != values.size:
            raise ValidationError(
                f"parts cover {offset} values, vector holds {values.size}"
            )
        self.values = values

    def part(self, label: str) -> np.ndarray:
        for name, start, length in self.parts:
            if name == label:
                return self.values[start : start + length]
        raise KeyError(label)


def _edges(extent: int, blocks: int, overlap: float) -> list[tuple[int, int]]:
    if blocks == 0:
        return []
    nominal = extent // blocks
    grow = int(overlap * nominal)
    spans = []
    for i in range(blocks):
        lo = i * nominal
        hi = (i + 1) * nominal if i < blocks - 1 else extent
        if i > 0:
            lo = max(0, lo - grow)
        if i < blocks - 1:
            hi = min(extent, hi + grow)
        spans.append((lo, hi))
    return spans


def partition_blocks(
    image: ActivationTensor,
    config: ResolutionConfig,
    min_h: int = 1,
    min_w: int = 1,
) -> list[tuple[tuple[int, int], ActivationTensor]]:
    """Cut the image into the config's block grid, keyed (i, j) row-major."""
    row_spans = _edges(image.height, config.blocks_m, config.overlap_fraction)
    col_spans = _edges(image.width, config.blocks_n, config.overlap_fraction)
    blocks = []
    for i, (r0, r1) in enumerate(row_spans):
        for j, (c0, c1) in enumerate(col_spans):
            if r1 - r0 < min_h or c1 - c0 < min_w:
                raise GeometryError(
                    f"block {r1 - r0}x{c1 - c0} is smaller than the required "
                    f"{min_h}x{min_w}"
                )
            blocks.append(
                (
                    (i, j),
                    ActivationTensor(image.data[r0:r1, c0:c1], rectified=image.rectified),
                )
            )
    return blocks


def iter_parts(
    image: ActivationTensor,
    config: ResolutionConfig,
    min_h: int = 1,
    min_w: int = 1,
) -> list[tuple[str, str, ActivationTensor]]:
    """(label, resolution, tensor) triples: the whole image first when
    included, then blocks row-major."""
    parts = []
    if config.include_whole_image:
        if image.height < min_h or image.width < min_w:
            raise GeometryError(
                f"image {image.height}x{image.width} is smaller than the required "
                f"{min_h}x{min_w}"
            )
        parts.append(("whole", "whole", image))
    for (i, j), block in partition_blocks(image, config, min_h=min_h, min_w=min_w):
        parts.append((f"block({i},{j})", "block", block))
    return parts


def multires_representation(
    image: ActivationTensor,
    net: NetworkSpec,
    config: ResolutionConfig,
    encode: Callable[[Sequence[ActivationTensor], str], np.ndarray],
) -> ImageRepresentation:
    """Run the network on every part and concatenate the encodings.

    ``encode(stage_outputs, resolution)`` maps one part's activations to a
    1-d vector; ``resolution`` is "whole" or "block" so the caller can apply
    the PCA model fitted for that resolution.
    """
    min_h, min_w = min_input_extent(net)
    chunks = []
    layout = []
    offset = 0
    for label, resolution, part in iter_parts(image, config, min_h, min_w):
        vector = np.asarray(encode(run_network(part, net), resolution), dtype=np.float64)
        vector = vector.ravel()
        chunks.append(vector)
        layout.append((label, offset, vector.size))
        offset += vector.size
    return ImageRepresentation(values=np.concatenate(chunks), parts=layout)


def resize_nearest(tensor: ActivationTensor, out_h: int, out_w: int) -> ActivationTensor:
    """Nearest-neighbor spatial resize, for configs that need a fixed input."""
    if out_h < 1 or out_w < 1:
        raise ValidationError("resize target must be positive")
    rows = (np.arange(out_h) * tensor.height) // out_h
    cols = (np.arange(out_w) * tensor.width) // out_w
    return ActivationTensor(
        tensor.data[np.ix_(rows, cols)], rectified=tensor.rectified
    )
