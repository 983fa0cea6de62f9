"""Dense spatial score maps and the algebra used to compose them.

A GroundingMap holds per-pixel scores in [0, 1] over the top-down view.
Concept maps are combined by pixelwise min (conjunction) and max (union),
moved between resolutions by corner-aligned bilinear resampling, and
produced either from ground-truth attributes (see backends.OracleBackend)
or from per-pixel features dotted against a concept embedding after two
linear projections (ground_embedding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimMismatch(Exception):
    pass


class NonFinite(Exception):
    pass


def _frozen_array(values, dtype=np.float64, ndim=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise DimMismatch(f"expected {ndim}-d values, got {arr.ndim}-d")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GroundingMap:
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, ndim=2)
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimMismatch(f"empty map shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFinite("grounding map has non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("grounding map values outside [0, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Per-pixel feature vectors, shape (H', W', D1)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, ndim=3)
        if min(arr.shape) < 1:
            raise DimMismatch(f"empty feature map shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFinite("feature map has non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class ConceptEmbedding:
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, ndim=1)
        if arr.shape[0] < 1:
            raise DimMismatch("empty embedding")
        if not np.all(np.isfinite(arr)):
            raise NonFinite("embedding has non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class ProjectionWeights:
    """Two 1x1-convolution-style linear maps: cv projects features D1 -> D2,
    cl maps D2 -> D2 within the shared space."""

    cv: np.ndarray
    cl: np.ndarray

    def __post_init__(self):
        cv = _frozen_array(self.cv, ndim=2)
        cl = _frozen_array(self.cl, ndim=2)
        if cl.shape[0] != cl.shape[1]:
            raise DimMismatch(f"cl must be square, got {cl.shape}")
        if cl.shape[1] != cv.shape[0]:
            raise DimMismatch(f"cl {cl.shape} does not compose with cv {cv.shape}")
        if not (np.all(np.isfinite(cv)) and np.all(np.isfinite(cl))):
            raise NonFinite("projection weights have non-finite values")
        object.__setattr__(self, "cv", cv)
        object.__setattr__(self, "cl", cl)

    @classmethod
    def identity(cls, dim: int) -> "ProjectionWeights":
        return cls(np.eye(dim), np.eye(dim))


def normalize(raw) -> GroundingMap:
    """Min-max rescale a raw score grid into [0, 1].

    Degenerate ranges (max - min <= 1e-9) collapse to the all-zero map, so a
    constant grid carries no spatial information rather than a spurious peak.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2:
        raise DimMismatch(f"expected 2-d grid, got {arr.ndim}-d")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("cannot normalize non-finite scores")
    lo = arr.min()
    hi = arr.max()
    if hi - lo <= 1e-9:
        return GroundingMap(np.zeros_like(arr))
    return GroundingMap((arr - lo) / (hi - lo))


def _same_shape(a: GroundingMap, b: GroundingMap) -> None:
    if a.shape != b.shape:
        raise DimMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def intersect(a: GroundingMap, b: GroundingMap) -> GroundingMap:
    """Pixelwise min: keep only regions supported by both maps."""
    _same_shape(a, b)
    return GroundingMap(np.minimum(a.values, b.values))


def union(a: GroundingMap, b: GroundingMap) -> GroundingMap:
    """Pixelwise max."""
    _same_shape(a, b)
    return GroundingMap(np.maximum(a.values, b.values))


def axis_coords(n_out: int, n_in: int) -> np.ndarray:
    """Corner-aligned sample positions: output index i maps to input
    coordinate i * (n_in - 1) / (n_out - 1); a single output sample sits at 0.
    """
    if n_out < 1 or n_in < 1:
        raise DimMismatch("axis sizes must be positive")
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


def resample(mapping: GroundingMap, new_height: int, new_width: int) -> GroundingMap:
    """Corner-aligned bilinear resampling; corner pixels are preserved."""
    if new_height < 1 or new_width < 1:
        raise DimMismatch("target dimensions must be positive")
    src = mapping.values
    h, w = src.shape
    ys = axis_coords(new_height, h)
    xs = axis_coords(new_width, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return GroundingMap(np.clip(out, 0.0, 1.0))


def ground_embedding(
    features: FeatureMap,
    embedding: ConceptEmbedding,
    weights: ProjectionWeights,
) -> GroundingMap:
    """Score each pixel by the embedding dotted with the projected feature.

    raw(i, j) = sum_d embedding_d * (cl @ (cv @ features[i, j]))_d, then
    min-max normalized. Equivalent to tiling the embedding over the grid and
    summing the Hadamard product along the feature dimension.
    """
    if weights.cv.shape[1] != features.dim:
        raise DimMismatch(
            f"cv expects dim {weights.cv.shape[1]}, features have {features.dim}"
        )
    if embedding.dim != weights.cl.shape[0]:
        raise DimMismatch(
            f"embedding dim {embedding.dim} != projected dim {weights.cl.shape[0]}"
        )
    projected = features.values @ weights.cv.T @ weights.cl.T
    raw = projected @ embedding.values
    return normalize(raw)
