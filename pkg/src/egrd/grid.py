"""Discretized GRD functions: axes, grids, sparse samples and membership checks.

A GRD grid stores quality scores on a rectangular (bitrate x resolution)
lattice. Rows index bitrates, columns index resolutions, and the flattened
vector is bitrate-major (resolution varies fastest). That ordering is part of
every file format in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AxisMismatchError, DomainError, StructureError

QUALITY_MIN = 0.0
QUALITY_MAX = 100.0
DEFAULT_TOLERANCE = 1e-6

# Encoding sizes of the reference database, smallest first.
DEFAULT_SIZES = ((320, 240), (384, 288), (512, 384), (720, 480), (1280, 720), (1920, 1080))


def diagonal(width: int, height: int) -> int:
    return int(round(math.hypot(width, height)))


def _strictly_increasing(values: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class AxisSpec:
    """Bitrate (kbps) and resolution (diagonal pixels) labels of a grid.

    ``sizes`` optionally carries the (width, height) pair behind each diagonal.
    A single resolution is allowed so that plain RD curves reuse the same
    machinery.
    """

    bitrates: tuple[float, ...]
    resolutions: tuple[float, ...]
    sizes: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        bitrates = tuple(float(b) for b in self.bitrates)
        resolutions = tuple(float(r) for r in self.resolutions)
        object.__setattr__(self, "bitrates", bitrates)
        object.__setattr__(self, "resolutions", resolutions)
        if len(bitrates) < 2:
            raise StructureError("need at least 2 bitrates")
        if len(resolutions) < 1:
            raise StructureError("need at least 1 resolution")
        for name, labels in (("bitrates", bitrates), ("resolutions", resolutions)):
            if not all(math.isfinite(v) and v > 0 for v in labels):
                raise StructureError(f"{name} must be finite and positive")
            if not _strictly_increasing(labels):
                raise StructureError(f"{name} must be strictly increasing")
        if self.sizes is not None:
            sizes = tuple((int(w), int(h)) for w, h in self.sizes)
            if len(sizes) != len(resolutions):
                raise StructureError("sizes must pair one-to-one with resolutions")
            object.__setattr__(self, "sizes", sizes)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.bitrates), len(self.resolutions)

    @property
    def size(self) -> int:
        return len(self.bitrates) * len(self.resolutions)

    def flat_index(self, bitrate_index: int, resolution_index: int) -> int:
        return bitrate_index * len(self.resolutions) + resolution_index

    def unravel(self, flat_index: int) -> tuple[int, int]:
        return divmod(int(flat_index), len(self.resolutions))

    def bitrate_index(self, bitrate: float) -> int:
        try:
            return self.bitrates.index(float(bitrate))
        except ValueError:
            raise DomainError(f"bitrate {bitrate} is not an axis label") from None

    def resolution_index(self, resolution: float) -> int:
        try:
            return self.resolutions.index(float(resolution))
        except ValueError:
            raise DomainError(f"resolution {resolution} is not an axis label") from None

    def single_resolution(self, resolution_index: int) -> "AxisSpec":
        sizes = None if self.sizes is None else (self.sizes[resolution_index],)
        return AxisSpec(self.bitrates, (self.resolutions[resolution_index],), sizes)

    def to_dict(self) -> dict:
        out = {"bitrates_kbps": list(self.bitrates), "resolutions_diag": list(self.resolutions)}
        if self.sizes is not None:
            out["sizes"] = [list(s) for s in self.sizes]
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "AxisSpec":
        sizes = data.get("sizes")
        return cls(
            tuple(data["bitrates_kbps"]),
            tuple(data["resolutions_diag"]),
            None if sizes is None else tuple(tuple(s) for s in sizes),
        )

    @classmethod
    def from_sizes(cls, bitrates: Iterable[float], sizes: Iterable[tuple[int, int]]) -> "AxisSpec":
        sizes = tuple(sizes)
        return cls(tuple(bitrates), tuple(diagonal(w, h) for w, h in sizes), sizes)


def default_axes() -> AxisSpec:
    """Full-scale lattice: 100..9000 kbps in 100 kbps steps, six resolutions."""
    return AxisSpec.from_sizes(range(100, 9001, 100), DEFAULT_SIZES)


def desk_axes() -> AxisSpec:
    """Small 9 x 6 lattice (K = 54) for fast experiments."""
    return AxisSpec.from_sizes(range(1000, 9001, 1000), DEFAULT_SIZES)


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GrdGrid:
    """Quality values on an :class:`AxisSpec` lattice.

    Values must be finite; the [0, 100] range and the monotonicity rules are
    checked by :func:`validate_membership`, not here, so that unconstrained
    estimates can still be represented and inspected.
    """

    axes: AxisSpec
    values: np.ndarray
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.axes.shape:
            raise StructureError(f"values shape {values.shape} does not match axes {self.axes.shape}")
        if not np.all(np.isfinite(values)):
            raise StructureError("grid contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __eq__(self, other):
        if not isinstance(other, GrdGrid):
            return NotImplemented
        return self.axes == other.axes and np.array_equal(self.values, other.values)

    __hash__ = None

    def with_metadata(self, **tags) -> "GrdGrid":
        return GrdGrid(self.axes, self.values, {**self.metadata, **tags})


def flatten(grid: GrdGrid) -> np.ndarray:
    return grid.values.reshape(-1).copy()


def unflatten(vector, axes: AxisSpec, metadata: Mapping | None = None) -> GrdGrid:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1 or vector.size != axes.size:
        raise StructureError(f"vector of length {vector.size} cannot fill a {axes.shape} grid")
    return GrdGrid(axes, vector.reshape(axes.shape), metadata or {})


def require_same_axes(*grids: GrdGrid) -> AxisSpec:
    axes = grids[0].axes
    for g in grids[1:]:
        if g.axes != axes:
            raise AxisMismatchError("grids do not share axes")
    return axes


@dataclass(frozen=True)
class Violation:
    kind: str  # "bitrate", "resolution" or "range"
    location: tuple[int, int]
    amount: float


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple[Violation, ...]

    def __bool__(self):
        return self.passed

    def count(self, kind: str) -> int:
        return sum(v.kind == kind for v in self.violations)


def validate_membership(grid: GrdGrid, tolerance: float = DEFAULT_TOLERANCE) -> ValidationReport:
    """Check a grid against the discrete GRD space.

    Quality must not drop along bitrate at any resolution, must not drop along
    resolution at the largest bitrate, and must stay inside [0, 100]. Each rule
    is relaxed by ``tolerance``. The boundary equalities of the continuous
    space are deliberately not checked.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    v = grid.values
    found = []
    drops = np.diff(v, axis=0)
    for i, j in zip(*np.nonzero(drops < -tolerance)):
        found.append(Violation("bitrate", (int(i) + 1, int(j)), float(-drops[i, j])))
    top = np.diff(v[-1])
    for j in np.nonzero(top < -tolerance)[0]:
        found.append(Violation("resolution", (v.shape[0] - 1, int(j) + 1), float(-top[j])))
    low = v < QUALITY_MIN - tolerance
    high = v > QUALITY_MAX + tolerance
    for i, j in zip(*np.nonzero(low | high)):
        excess = QUALITY_MIN - v[i, j] if low[i, j] else v[i, j] - QUALITY_MAX
        found.append(Violation("range", (int(i), int(j)), float(excess)))
    return ValidationReport(not found, tuple(found))


def rmse(a: GrdGrid, b: GrdGrid) -> float:
    require_same_axes(a, b)
    return float(np.sqrt(np.mean((a.values - b.values) ** 2)))


def linf_error(a: GrdGrid, b: GrdGrid) -> float:
    require_same_axes(a, b)
    return float(np.max(np.abs(a.values - b.values)))


@dataclass(frozen=True)
class SampleSet:
    """Sparse (bitrate index, resolution index, quality) observations."""

    axes: AxisSpec
    entries: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        nb, nr = self.axes.shape
        entries = tuple((int(i), int(j), float(q)) for i, j, q in self.entries)
        seen = set()
        for i, j, q in entries:
            if not (0 <= i < nb and 0 <= j < nr):
                raise DomainError(f"sample index ({i}, {j}) is off the {nb}x{nr} grid")
            if (i, j) in seen:
                raise StructureError(f"duplicate sample at ({i}, {j})")
            if not (math.isfinite(q) and QUALITY_MIN <= q <= QUALITY_MAX):
                raise StructureError(f"sample quality {q} outside [0, 100]")
            seen.add((i, j))
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    @property
    def flat_indices(self) -> np.ndarray:
        return np.array([self.axes.flat_index(i, j) for i, j, _ in self.entries], dtype=np.intp)

    @property
    def qualities(self) -> np.ndarray:
        return np.array([q for _, _, q in self.entries], dtype=np.float64)

    @classmethod
    def from_grid(cls, grid: GrdGrid, flat_indices: Iterable[int]) -> "SampleSet":
        """Observe ``grid`` at the given flattened cells, in order."""
        flat = grid.values.reshape(-1)
        entries = []
        for k in flat_indices:
            i, j = grid.axes.unravel(k)
            entries.append((i, j, float(np.clip(flat[k], QUALITY_MIN, QUALITY_MAX))))
        return cls(grid.axes, tuple(entries))


def ingest_raw_curves(curves: Sequence[Sequence[tuple[float, float]]], target_axes: AxisSpec) -> GrdGrid:
    """Resample measured RD curves, one per resolution, onto ``target_axes``.

    Each curve is repaired with a running maximum, padded with its highest
    quality up to the largest target bitrate, and resampled by monotone PCHIP.
    Target bitrates below a curve's first measured bitrate are refused.
    """
    from .interp import evaluate, pchip_fit

    if len(curves) != len(target_axes.resolutions):
        raise StructureError(f"expected {len(target_axes.resolutions)} curves, got {len(curves)}")
    targets = np.asarray(target_axes.bitrates)
    columns = []
    for j, curve in enumerate(curves):
        pts = np.asarray(curve, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise StructureError(f"curve {j} needs at least 2 (bitrate, quality) points")
        x, z = pts[:, 0], pts[:, 1]
        if not np.all(np.diff(x) > 0):
            raise StructureError(f"curve {j} bitrates must be strictly increasing")
        if x[-1] < targets[0]:
            raise DomainError(f"curve {j} ends below the smallest target bitrate")
        if x[0] > targets[0]:
            raise DomainError(f"curve {j} starts above {targets[0]} kbps; extrapolation is not supported")
        z = np.maximum.accumulate(z)
        if x[-1] < targets[-1]:
            x = np.append(x, targets[-1])
            z = np.append(z, z[-1])
        curve_fit = pchip_fit(x, z)
        columns.append(evaluate(curve_fit, targets))
    return GrdGrid(target_axes, np.column_stack(columns))
