"""Seeded generator of valid synthetic GRD surfaces.

Each surface follows a per-resolution saturating curve

    z(x, y) = q_y * (s_y(x) / s_y(x_max)) ** gamma,   s_y(x) = 1 - exp(-lam_y * x)

so the quality at the largest bitrate is exactly ``q_y``. Qualities ``q_y``
are drawn non-decreasing in resolution, and lower resolutions saturate
faster (larger ``lam_y``), which makes the RD curves of neighbouring
resolutions cross the way real content does.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence(seed)``,
with one spawned child stream per surface, so surface ``m`` of a corpus does
not depend on how many surfaces were requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StructureError
from .grid import AxisSpec, GrdGrid, default_axes


@dataclass(frozen=True)
class SynthParams:
    seed: int = 0
    count: int = 10
    axes: AxisSpec = None
    top_quality: tuple[float, float] = (75.0, 100.0)
    # Total quality lost from the largest to the smallest resolution at x_max.
    resolution_drop: tuple[float, float] = (2.0, 25.0)
    # lam for the largest resolution, sampled log-uniformly (per kbps).
    rise_rate: tuple[float, float] = (1.5e-4, 3e-3)
    # lam_y = lam_top * (y_max / y) ** crossover
    crossover: tuple[float, float] = (0.3, 1.6)
    gamma: tuple[float, float] = (0.6, 1.6)

    def __post_init__(self):
        if self.axes is None:
            object.__setattr__(self, "axes", default_axes())
        if self.count < 1:
            raise StructureError("count must be positive")
        lo, hi = self.top_quality
        if not 0 < lo <= hi <= 100:
            raise StructureError("top_quality must lie in (0, 100]")
        for name in ("resolution_drop", "rise_rate", "crossover", "gamma"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise StructureError(f"{name} must be an ordered non-negative range")
        if self.rise_rate[0] <= 0 or self.gamma[0] <= 0:
            raise StructureError("rise_rate and gamma must be positive")


def surface(axes: AxisSpec, saturation, rise, gamma: float) -> np.ndarray:
    """Evaluate the closed form for explicit per-resolution parameters."""
    x = np.asarray(axes.bitrates)[:, None]
    saturation = np.asarray(saturation, dtype=np.float64)[None, :]
    rise = np.asarray(rise, dtype=np.float64)[None, :]
    if np.any(np.diff(saturation[0]) < 0):
        raise StructureError("saturation quality must be non-decreasing in resolution")
    if np.any(saturation <= 0) or np.any(saturation > 100):
        raise StructureError("saturation quality must lie in (0, 100]")
    shape = -np.expm1(-rise * x) / -np.expm1(-rise * x[-1])
    return saturation * shape**gamma


def _draw(rng: np.random.Generator, params: SynthParams):
    axes = params.axes
    nr = len(axes.resolutions)
    top = rng.uniform(*params.top_quality)
    drop = rng.uniform(*params.resolution_drop)
    # Split the total drop unevenly across resolution steps.
    steps = rng.dirichlet(np.ones(max(nr - 1, 1))) * drop if nr > 1 else np.zeros(0)
    saturation = top - np.concatenate([np.cumsum(steps[::-1])[::-1], [0.0]])
    saturation = np.clip(saturation, 1.0, 100.0)
    lam_top = np.exp(rng.uniform(*np.log(params.rise_rate)))
    y = np.asarray(axes.resolutions)
    rise = lam_top * (y[-1] / y) ** rng.uniform(*params.crossover)
    gamma = rng.uniform(*params.gamma)
    return saturation, rise, gamma


def generate(params: SynthParams) -> list[GrdGrid]:
    children = np.random.SeedSequence(params.seed).spawn(params.count)
    out = []
    for m, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        saturation, rise, gamma = _draw(rng, params)
        values = surface(params.axes, saturation, rise, gamma)
        out.append(GrdGrid(params.axes, values, {"content": f"synth-{params.seed}-{m:05d}", "source": "synth"}))
    return out
