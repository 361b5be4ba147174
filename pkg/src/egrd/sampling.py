"""Query orders over grid cells.

:func:`uncertainty_order` is a greedy Gaussian design: at each step pick the
cell whose observation leaves the smallest trace (or log-determinant) of the
conditional covariance of the unobserved cells, then condition on it. The
conditional covariance does not depend on observed values, so the order is
the same for every surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AxisMismatchError, DomainError, StructureError
from .grid import AxisSpec, GrdGrid, flatten, require_same_axes

TRACE = "trace"
LOGDET = "logdet"
DIAGONAL_GUARD = 1e-12
LOGDET_MAX_K = 64


@dataclass(frozen=True)
class SamplingOrder:
    axes: AxisSpec | None
    indices: tuple[int, ...]
    scores: tuple[float, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise StructureError("sampling order repeats a cell")
        if self.axes is not None and any(not 0 <= i < self.axes.size for i in idx):
            raise DomainError("sampling order index outside the grid")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))

    def __len__(self):
        return len(self.indices)

    def prefix(self, count: int) -> "SamplingOrder":
        return SamplingOrder(self.axes, self.indices[:count], self.scores[:count])

    def cells(self) -> list[tuple[float, float]]:
        """(bitrate, resolution) label pairs, in query order."""
        if self.axes is None:
            raise StructureError("order has no axes attached")
        out = []
        for k in self.indices:
            i, j = self.axes.unravel(k)
            out.append((self.axes.bitrates[i], self.axes.resolutions[j]))
        return out


def empirical_covariance(dataset: Sequence[GrdGrid]) -> np.ndarray:
    """Covariance of flattened grids with the 1/M normalization."""
    if len(dataset) < 2:
        raise StructureError("covariance needs at least 2 grids")
    require_same_axes(*dataset)
    data = np.stack([flatten(g) for g in dataset])
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / data.shape[0]
    return 0.5 * (cov + cov.T)


def _check_covariance(cov) -> np.ndarray:
    cov = np.array(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise StructureError("covariance must be square")
    if not np.all(np.isfinite(cov)):
        raise StructureError("covariance contains non-finite entries")
    if not np.allclose(cov, cov.T, atol=1e-8, rtol=0):
        raise StructureError("covariance is not symmetric")
    cov = 0.5 * (cov + cov.T)
    if cov.size and np.linalg.eigvalsh(cov)[0] < -1e-8:
        raise StructureError("covariance is not positive semidefinite")
    return cov


def _logdet_scores(cov: np.ndarray, remaining: np.ndarray, eligible: np.ndarray) -> np.ndarray:
    scores = np.full(remaining.size, np.inf)
    for pos in np.nonzero(eligible)[0]:
        i = remaining[pos]
        rest = np.delete(remaining, pos)
        if rest.size == 0:
            scores[pos] = 0.0
            continue
        col = cov[rest, i]
        cond = cov[np.ix_(rest, rest)] - np.outer(col, col) / cov[i, i]
        sign, logdet = np.linalg.slogdet(cond)
        scores[pos] = logdet if sign > 0 else -np.inf
    return scores


def uncertainty_order(
    covariance,
    count: int,
    axes: AxisSpec | None = None,
    criterion: str = TRACE,
) -> SamplingOrder:
    """Greedy conditional-entropy sampling order.

    With the default trace criterion, candidate ``i`` scores
    ``tr(Sigma) - ||Sigma[:, i]||^2 / Sigma[i, i]``, the trace of the
    covariance of the other cells after observing ``i``. Cells with
    ``Sigma[i, i] <= 1e-12 * tr(Sigma_0)`` are skipped; if no cell remains
    eligible the smallest remaining index is taken. Ties go to the smallest
    flattened index. ``criterion="logdet"`` scores the exact log-determinant
    instead (K <= 64 only).
    """
    cov = _check_covariance(covariance)
    k = cov.shape[0]
    if axes is not None and axes.size != k:
        raise AxisMismatchError("covariance size does not match the axes")
    if not 0 <= count <= k:
        raise DomainError(f"count={count} outside [0, {k}]")
    if criterion == LOGDET and k > LOGDET_MAX_K:
        raise StructureError(f"log-determinant criterion is limited to K <= {LOGDET_MAX_K}")
    if criterion not in (TRACE, LOGDET):
        raise ValueError(f"unknown criterion {criterion!r}")

    guard = DIAGONAL_GUARD * max(np.trace(cov), 0.0)
    remaining = np.arange(k)
    picks, scores = [], []
    for _ in range(count):
        diag = cov[remaining, remaining]
        eligible = diag > guard
        if not np.any(eligible):
            pos = 0
            score = float(np.trace(cov[np.ix_(remaining, remaining)]))
        else:
            if criterion == TRACE:
                sub = cov[:, remaining]
                total = np.trace(cov[np.ix_(remaining, remaining)])
                with np.errstate(divide="ignore", invalid="ignore"):
                    s = total - np.sum(sub[remaining] ** 2, axis=0) / diag
                s = np.where(eligible, s, np.inf)
            else:
                s = _logdet_scores(cov, remaining, eligible)
            pos = int(np.argmin(s))  # first minimum = smallest index
            score = float(s[pos])
        i = remaining[pos]
        col = cov[:, i].copy()
        if cov[i, i] > 0:
            cov = cov - np.outer(col, col) / cov[i, i]
            cov = 0.5 * (cov + cov.T)
        picks.append(int(i))
        scores.append(score)
        remaining = np.delete(remaining, pos)
    return SamplingOrder(axes, tuple(picks), tuple(scores))


def uniform_log_bitrate_order(axes: AxisSpec, resolution_index: int, count: int) -> SamplingOrder:
    """Bitrates nearest to ``count`` geometrically spaced targets, ascending.

    Targets are uniform in log bitrate between the smallest and largest axis
    labels; each maps to the grid point at the smallest absolute kbps
    distance (ties to the lower bitrate). A target whose nearest grid point
    is taken moves to the nearest unused one.
    """
    nb = len(axes.bitrates)
    if not 0 <= resolution_index < len(axes.resolutions):
        raise DomainError("resolution index outside the axes")
    if not 1 <= count <= nb:
        raise DomainError(f"count={count} outside [1, {nb}]")
    rates = np.asarray(axes.bitrates)
    logs = np.log10(rates)
    targets = np.array([logs[0]]) if count == 1 else np.linspace(logs[0], logs[-1], count)
    used: set[int] = set()
    chosen = []
    for t in 10.0**targets:
        dist = np.abs(rates - t)
        for i in np.lexsort((np.arange(nb), dist)):
            if int(i) not in used:
                used.add(int(i))
                chosen.append(int(i))
                break
    chosen.sort()
    return SamplingOrder(axes, tuple(axes.flat_index(i, resolution_index) for i in chosen))
