"""Orthonormal bases for GRD grids: learned eigen basis and fixed families.

All bases share one container, :class:`EigenBasis`, holding a mean surface
and a K x N matrix whose columns are orthonormal in the flattened grid space.
"""

from __future__ import annotations

import hashlib
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import AxisMismatchError, StructureError
from .grid import AxisSpec, GrdGrid, flatten, require_same_axes, unflatten

EIGEN = "eigen"
POLYNOMIAL = "polynomial"
TRIGONOMETRIC = "trigonometric"
KINDS = (EIGEN, POLYNOMIAL, TRIGONOMETRIC)


class RankWarning(UserWarning):
    """Fewer components than requested were returned."""


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Mean surface plus orthonormal components on a fixed lattice.

    ``eigenvalues`` are covariance eigenvalues with the 1/M convention and are
    only present for learned bases. ``truncated`` records that training
    returned fewer components than requested because the data ran out of rank.
    """

    axes: AxisSpec
    mean: np.ndarray
    components: np.ndarray
    kind: str = EIGEN
    eigenvalues: np.ndarray | None = None
    total_variance: float = 0.0
    training_count: int = 0
    truncated: bool = False
    _id: str = field(default="", repr=False)

    def __post_init__(self):
        mean = _readonly(self.mean)
        comps = _readonly(self.components)
        if comps.ndim == 1 and comps.size == 0:
            comps = _readonly(np.zeros((mean.size, 0)))
        if mean.shape != (self.axes.size,) or comps.ndim != 2 or comps.shape[0] != self.axes.size:
            raise StructureError("mean/components do not match the axes")
        if self.kind not in KINDS:
            raise StructureError(f"unknown basis kind {self.kind!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)
        if self.eigenvalues is not None:
            eig = _readonly(self.eigenvalues)
            if eig.shape != (comps.shape[1],):
                raise StructureError("one eigenvalue per component is required")
            object.__setattr__(self, "eigenvalues", eig)
        digest = hashlib.sha1()
        digest.update(self.kind.encode())
        digest.update(mean.tobytes())
        digest.update(comps.tobytes())
        object.__setattr__(self, "_id", digest.hexdigest()[:16])

    @property
    def n_max(self) -> int:
        return self.components.shape[1]

    @property
    def basis_id(self) -> str:
        return self._id

    @property
    def mean_grid(self) -> GrdGrid:
        return unflatten(self.mean, self.axes)

    def truncate(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.n_max:
            raise ValueError(f"n={n} outside [0, {self.n_max}]")
        return self.components[:, :n]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "axes": self.axes.to_dict(),
            "mean": self.mean.tolist(),
            "components": self.components.T.tolist(),
            "eigenvalues": None if self.eigenvalues is None else self.eigenvalues.tolist(),
            "total_variance": float(self.total_variance),
            "training_count": int(self.training_count),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EigenBasis":
        axes = AxisSpec.from_dict(data["axes"])
        comps = np.asarray(data["components"], dtype=np.float64).reshape(-1, axes.size).T
        eig = data.get("eigenvalues")
        return cls(
            axes=axes,
            mean=data["mean"],
            components=comps,
            kind=data.get("kind", EIGEN),
            eigenvalues=None if eig is None else eig,
            total_variance=float(data.get("total_variance", 0.0)),
            training_count=int(data.get("training_count", 0)),
        )


@dataclass(frozen=True)
class CoefficientVector:
    coefficients: np.ndarray
    basis_id: str

    def __len__(self):
        return len(self.coefficients)


def _stack(dataset: Sequence[GrdGrid]) -> tuple[AxisSpec, np.ndarray]:
    if len(dataset) < 1:
        raise StructureError("empty dataset")
    axes = require_same_axes(*dataset)
    return axes, np.stack([flatten(g) for g in dataset])


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    if vectors.shape[1] == 0:
        return vectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _spectrum(centered: np.ndarray, method: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Eigenvalues (descending), eigenvectors (columns) and numerical rank."""
    m, k = centered.shape
    eps = np.finfo(np.float64).eps
    if method == "svd":
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        rank = int(np.sum(s > s[0] * max(m, k) * eps)) if s.size and s[0] > 0 else 0
        return s**2 / m, vt.T, rank
    if method == "gram":
        w, u = np.linalg.eigh(centered @ centered.T / m)
        w, u = w[::-1], u[:, ::-1]
        rank = int(np.sum(w > w[0] * max(m, k) * eps)) if w[0] > 0 else 0
        vecs = centered.T @ u[:, :rank] / np.sqrt(m * w[:rank])
        return w[:rank], vecs, rank
    if method == "covariance":
        w, v = np.linalg.eigh(centered.T @ centered / m)
        w, v = w[::-1], v[:, ::-1]
        rank = int(np.sum(w > w[0] * max(m, k) * eps)) if w[0] > 0 else 0
        return w, v, rank
    raise ValueError(f"unknown eigendecomposition method {method!r}")


def pca_train(dataset: Sequence[GrdGrid], n_components: int, method: str = "svd") -> EigenBasis:
    """Learn the mean surface and leading principal components of a corpus.

    ``method`` selects the route: ``"svd"`` (thin SVD of the centered data,
    default), ``"gram"`` (M x M snapshot matrix) or ``"covariance"``
    (K x K matrix). If the centered data has rank below ``n_components``
    only ``rank`` components are returned and a :class:`RankWarning` is
    issued.
    """
    axes, data = _stack(dataset)
    m, k = data.shape
    if m < 2:
        raise StructureError("PCA needs at least 2 grids")
    if not 1 <= n_components <= min(m - 1, k):
        raise ValueError(f"n_components must lie in [1, {min(m - 1, k)}]")
    mean = data.mean(axis=0)
    centered = data - mean
    eigvals, eigvecs, rank = _spectrum(centered, method)
    n = min(n_components, rank)
    truncated = n < n_components
    if truncated:
        warnings.warn(f"requested {n_components} components but data rank is {rank}", RankWarning, stacklevel=2)
    return EigenBasis(
        axes=axes,
        mean=mean,
        components=_fix_signs(eigvecs[:, :n]),
        kind=EIGEN,
        eigenvalues=eigvals[:n],
        total_variance=float(np.sum(centered**2) / m),
        training_count=m,
        truncated=truncated,
    )


def explained_energy(basis: EigenBasis, n: int) -> float:
    if basis.eigenvalues is None:
        raise ValueError("explained energy is only defined for learned bases")
    if not 1 <= n <= basis.n_max:
        raise ValueError(f"n={n} outside [1, {basis.n_max}]")
    return float(np.sum(basis.eigenvalues[:n]) / basis.total_variance)


def _check_axes(basis: EigenBasis, grid: GrdGrid):
    if grid.axes != basis.axes:
        raise AxisMismatchError("grid and basis do not share axes")


def project(basis: EigenBasis, grid: GrdGrid, n: int | None = None) -> CoefficientVector:
    _check_axes(basis, grid)
    n = basis.n_max if n is None else n
    coeffs = basis.truncate(n).T @ (flatten(grid) - basis.mean)
    return CoefficientVector(coeffs, basis.basis_id)


def synthesize(basis: EigenBasis, coeffs) -> GrdGrid:
    """Grid for ``mean + H_n c``; no clipping or validation."""
    c = np.asarray(getattr(coeffs, "coefficients", coeffs), dtype=np.float64).reshape(-1)
    if c.size > basis.n_max:
        raise ValueError(f"{c.size} coefficients for a basis of {basis.n_max} components")
    return unflatten(basis.mean + basis.components[:, : c.size] @ c, basis.axes)


def approximate(basis: EigenBasis, grid: GrdGrid, n: int) -> GrdGrid:
    """Best n-th order approximation (projection then synthesis)."""
    return synthesize(basis, project(basis, grid, n))


# -- fixed bases ---------------------------------------------------------------


def _graded_pairs(start: int) -> Iterator[tuple[int, int]]:
    """(p, q) with p, q >= start, ordered by p + q, then by p."""
    for total in itertools.count(2 * start):
        for p in range(start, total - start + 1):
            yield p, total - p


def _unit_coords(labels: Sequence[float]) -> np.ndarray:
    x = np.asarray(labels, dtype=np.float64)
    span = x[-1] - x[0]
    return (x - x[0]) / span if span > 0 else np.zeros_like(x)


def _open_coords(labels: Sequence[float]) -> np.ndarray:
    # Pad each end by its neighbouring gap so all samples fall inside (0, 1).
    # On a 100..9000 kbps axis the left pad lands exactly on 0 kbps.
    x = np.asarray(labels, dtype=np.float64)
    if x.size == 1:
        return np.array([0.5])
    lo = x[0] - (x[1] - x[0])
    hi = x[-1] + (x[-1] - x[-2])
    return (x - lo) / (hi - lo)


def gram_schmidt(columns: Iterator[np.ndarray], n: int, labels: Iterator | None = None) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalization pass."""
    basis = []
    for index, col in enumerate(itertools.islice(columns, n)):
        v = np.array(col, dtype=np.float64)
        norm0 = np.linalg.norm(v)
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm0 == 0 or norm <= 1e-10 * norm0:
            tag = "" if labels is None else f" {labels[index]}"
            raise StructureError(f"basis vector {index}{tag} is linearly dependent on its predecessors")
        basis.append(v / norm)
    if len(basis) < n:
        raise StructureError(f"only {len(basis)} basis vectors available")
    return np.column_stack(basis) if basis else np.zeros((0, 0))


def _fixed_basis(axes, n, kind, pairs, make, dataset) -> EigenBasis:
    if not 1 <= n <= axes.size:
        raise ValueError(f"n must lie in [1, {axes.size}]")
    pairs = list(itertools.islice(pairs, n))
    columns = (make(p, q).reshape(-1) for p, q in pairs)
    comps = gram_schmidt(columns, n, labels=[f"(p={p}, q={q})" for p, q in pairs])
    if dataset:
        ds_axes, data = _stack(dataset)
        if ds_axes != axes:
            raise AxisMismatchError("dataset and axes differ")
        mean = data.mean(axis=0)
        total = float(np.sum((data - mean) ** 2) / data.shape[0])
        count = data.shape[0]
    else:
        mean, total, count = np.zeros(axes.size), 0.0, 0
    return EigenBasis(axes, mean, comps, kind=kind, total_variance=total, training_count=count)


def polynomial_basis(axes: AxisSpec, n: int, dataset: Sequence[GrdGrid] | None = None) -> EigenBasis:
    """Orthonormalized 2-D monomials u**p * v**q on unit-normalized labels."""
    u = _unit_coords(axes.bitrates)[:, None]
    v = _unit_coords(axes.resolutions)[None, :]
    return _fixed_basis(axes, n, POLYNOMIAL, _graded_pairs(0), lambda p, q: u**p * v**q, dataset)


def trigonometric_basis(axes: AxisSpec, n: int, dataset: Sequence[GrdGrid] | None = None) -> EigenBasis:
    """Orthonormalized half-sine products sin(p pi u) * sin(q pi v)."""
    u = _open_coords(axes.bitrates)[:, None]
    v = _open_coords(axes.resolutions)[None, :]
    make = lambda p, q: np.sin(p * np.pi * u) * np.sin(q * np.pi * v)  # noqa: E731
    return _fixed_basis(axes, n, TRIGONOMETRIC, _graded_pairs(1), make, dataset)


def build_basis(kind: str, n: int, dataset: Sequence[GrdGrid], method: str = "svd") -> EigenBasis:
    if kind == EIGEN:
        return pca_train(dataset, n, method=method)
    axes = require_same_axes(*dataset)
    if kind == POLYNOMIAL:
        return polynomial_basis(axes, n, dataset)
    if kind == TRIGONOMETRIC:
        return trigonometric_basis(axes, n, dataset)
    raise ValueError(f"unknown basis kind {kind!r}")
