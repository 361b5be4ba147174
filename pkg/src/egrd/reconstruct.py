"""Sparse-sample GRD surface estimation and error tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import EigenBasis, approximate
from .errors import DomainError, StructureError
from .grid import GrdGrid, SampleSet, linf_error, rmse, unflatten, validate_membership
from .qp import DifferenceOperators, QpSettings, QpStatus, assemble_qp, build_difference_operators, solve_qp

MATCH_SAMPLES = "match_samples"


@dataclass(frozen=True)
class ReconstructionConfig:
    """How to estimate a surface.

    ``n_components`` is a fixed basis size or ``"match_samples"`` (N = S,
    capped at the basis size). ``basis_kind`` is checked against the basis
    handed to :func:`estimate` when set.
    """

    n_components: int | str = 8
    constrained: bool = True
    basis_kind: str | None = None
    solver: QpSettings = field(default_factory=QpSettings)

    def __post_init__(self):
        n = self.n_components
        if n != MATCH_SAMPLES and not (isinstance(n, (int, np.integer)) and n >= 1):
            raise StructureError(f"n_components must be a positive int or {MATCH_SAMPLES!r}")

    def basis_size(self, n_samples: int, n_max: int) -> int:
        if self.n_components == MATCH_SAMPLES:
            return min(n_samples, n_max)
        if self.n_components > n_max:
            raise StructureError(f"n_components={self.n_components} exceeds the basis size {n_max}")
        return int(self.n_components)


@dataclass(frozen=True)
class Estimate:
    grid: GrdGrid
    coefficients: np.ndarray
    diagnostics: dict


def estimate(
    basis: EigenBasis,
    samples: SampleSet,
    config: ReconstructionConfig | None = None,
    ops: DifferenceOperators | None = None,
) -> Estimate:
    config = config or ReconstructionConfig()
    if config.basis_kind is not None and config.basis_kind != basis.kind:
        raise StructureError(f"config expects a {config.basis_kind} basis, got {basis.kind}")
    if len(samples) == 0:
        raise DomainError("no samples")
    n = config.basis_size(len(samples), basis.n_max)
    idx = samples.flat_indices
    diagnostics = {"n_components": n, "n_samples": len(samples), "constrained": config.constrained}
    if config.constrained:
        problem = assemble_qp(basis, samples, n, ops or build_difference_operators(basis.axes))
        sol = solve_qp(problem, config.solver)
        if sol.status is QpStatus.INFEASIBLE:
            raise StructureError("monotonicity constraints are infeasible; the basis mean is not a valid surface")
        c = sol.coefficients
        diagnostics.update(
            status=sol.status.value,
            iterations=sol.iterations,
            polished=sol.polished,
            primal_residual=sol.primal_residual,
            dual_residual=sol.dual_residual,
        )
    else:
        A = basis.components[idx, :n]
        r = samples.qualities - basis.mean[idx]
        c = np.linalg.lstsq(A, r, rcond=None)[0]
        diagnostics.update(status="least_squares")
    grid = unflatten(basis.mean + basis.components[:, :n] @ c, basis.axes, {"basis": basis.kind})
    err = grid.values.reshape(-1)[idx] - samples.qualities
    diagnostics.update(
        sample_rmse=float(np.sqrt(np.mean(err**2))),
        sample_max_abs=float(np.max(np.abs(err))),
    )
    return Estimate(grid, c, diagnostics)


@dataclass(frozen=True)
class ErrorRow:
    label: int  # S or N
    mean_rmse: float
    worst_rmse: float
    mean_linf: float
    worst_linf: float
    violations: int = 0  # surfaces failing validate_membership

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "rmse_mean": self.mean_rmse,
            "rmse_worst": self.worst_rmse,
            "linf_mean": self.mean_linf,
            "linf_worst": self.worst_linf,
            "violations": self.violations,
        }


def _row(label, truths: Sequence[GrdGrid], estimates: Sequence[GrdGrid]) -> ErrorRow:
    r = np.array([rmse(e, t) for e, t in zip(estimates, truths)])
    l = np.array([linf_error(e, t) for e, t in zip(estimates, truths)])
    bad = sum(not validate_membership(e) for e in estimates)
    return ErrorRow(int(label), float(r.mean()), float(r.max()), float(l.mean()), float(l.max()), bad)


def evaluate_method(
    basis: EigenBasis,
    test_set: Sequence[GrdGrid],
    sampling_order,
    s_values: Sequence[int],
    config: ReconstructionConfig | None = None,
) -> list[ErrorRow]:
    """Error table over ``test_set``: one row per sample count S.

    Samples are the first S cells of ``sampling_order`` read from each test
    grid; errors are measured on the full grid.
    """
    order = np.asarray(getattr(sampling_order, "indices", sampling_order), dtype=np.intp)
    if not test_set:
        raise StructureError("empty test set")
    ops = build_difference_operators(basis.axes)
    rows = []
    for s in s_values:
        if not 1 <= s <= order.size:
            raise DomainError(f"S={s} exceeds the sampling order length {order.size}")
        estimates = [estimate(basis, SampleSet.from_grid(g, order[:s]), config, ops).grid for g in test_set]
        rows.append(_row(s, test_set, estimates))
    return rows


def approximation_table(basis: EigenBasis, grids: Sequence[GrdGrid], n_values: Sequence[int]) -> list[ErrorRow]:
    """Error of the best N-term approximation (all cells observed), per N."""
    return [_row(n, grids, [approximate(basis, g, n) for g in grids]) for n in n_values]


def random_splits(count: int, n_splits: int, train_fraction: float, seed: int):
    """Yield ``(train_indices, test_indices)`` for repeated random splits."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = int(round(train_fraction * count))
    if not 1 <= n_train < count:
        raise ValueError("split leaves an empty train or test set")
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(n_splits):
        perm = rng.permutation(count)
        yield np.sort(perm[:n_train]), np.sort(perm[n_train:])


def summarize_splits(tables: Sequence[Sequence[ErrorRow]]) -> list[dict]:
    """Mean and median of every table cell across repeated splits."""
    out = []
    keys = ("mean_rmse", "worst_rmse", "mean_linf", "worst_linf")
    for rows in zip(*tables):
        entry = {"label": rows[0].label}
        for key in keys:
            vals = np.array([getattr(r, key) for r in rows])
            entry[f"{key}_mean"] = float(vals.mean())
            entry[f"{key}_median"] = float(np.median(vals))
        entry["violations_total"] = int(sum(r.violations for r in rows))
        out.append(entry)
    return out
