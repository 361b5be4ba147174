"""One-dimensional piecewise-linear and monotone cubic Hermite curves.

Both kinds are stored as per-segment cubic coefficients in the local
coordinate ``t = x - x_k``, so evaluation, differentiation and exact
integration share one code path. Nothing here extrapolates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StructureError

PCHIP = "pchip"
LINEAR = "linear"

# Relative slack on the domain check, so that bounds recomputed from the same
# knots (e.g. via log10) are not rejected over a rounding error.
_DOMAIN_SLACK = 1e-12
TILT = 1e-9


@dataclass(frozen=True, eq=False)
class Curve1D:
    knots_x: np.ndarray
    knots_y: np.ndarray
    kind: str
    coef: np.ndarray  # (n_segments, 4): c0 + c1 t + c2 t^2 + c3 t^3

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots_x[0]), float(self.knots_x[-1])

    def __call__(self, x):
        return evaluate(self, x)


def _check_knots(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    xs = np.array(xs, dtype=np.float64)
    ys = np.array(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise StructureError("knots_x and knots_y must be 1-D and of equal length")
    if xs.size < 2:
        raise StructureError("a curve needs at least 2 knots")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise StructureError("knots must be finite")
    if not np.all(np.diff(xs) > 0):
        raise StructureError("knots_x must be strictly increasing")
    xs.setflags(write=False)
    ys.setflags(write=False)
    return xs, ys


def _endpoint_slope(h0, h1, del0, del1):
    # Three-point one-sided estimate, clamped to keep monotone data monotone.
    d = ((2 * h0 + h1) * del0 - h0 * del1) / (h0 + h1)
    if np.sign(d) != np.sign(del0):
        return 0.0
    if np.sign(del0) != np.sign(del1) and abs(d) > abs(3 * del0):
        return 3 * del0
    return d


def pchip_slopes(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson knot derivatives.

    Interior slopes are the weighted harmonic mean of the neighbouring secants
    when those share a sign and zero otherwise.
    """
    h = np.diff(xs)
    delta = np.diff(ys) / h
    n = xs.size
    d = np.zeros(n)
    if n == 2:
        d[:] = delta[0]
        return d
    for k in range(1, n - 1):
        if delta[k - 1] * delta[k] > 0:
            w1 = 2 * h[k] + h[k - 1]
            w2 = h[k] + 2 * h[k - 1]
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k])
    d[0] = _endpoint_slope(h[0], h[1], delta[0], delta[1])
    d[-1] = _endpoint_slope(h[-1], h[-2], delta[-1], delta[-2])
    return d


def _hermite_coef(xs, ys, d) -> np.ndarray:
    h = np.diff(xs)
    delta = np.diff(ys) / h
    c2 = (3 * delta - 2 * d[:-1] - d[1:]) / h
    c3 = (d[:-1] - 2 * delta + d[1:]) / h**2
    return np.column_stack([ys[:-1], d[:-1], c2, c3])


def pchip_fit(xs, ys) -> Curve1D:
    xs, ys = _check_knots(xs, ys)
    coef = _hermite_coef(xs, ys, pchip_slopes(xs, ys))
    coef.setflags(write=False)
    return Curve1D(xs, ys, PCHIP, coef)


def linear_fit(xs, ys) -> Curve1D:
    xs, ys = _check_knots(xs, ys)
    slope = np.diff(ys) / np.diff(xs)
    zeros = np.zeros_like(slope)
    coef = np.column_stack([ys[:-1], slope, zeros, zeros])
    coef.setflags(write=False)
    return Curve1D(xs, ys, LINEAR, coef)


def _locate(curve: Curve1D, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = curve.domain
    slack = _DOMAIN_SLACK * (hi - lo)
    if np.any(x < lo - slack) or np.any(x > hi + slack) or np.any(np.isnan(x)):
        raise DomainError(f"query outside curve domain [{lo}, {hi}]")
    x = np.clip(x, lo, hi)
    seg = np.clip(np.searchsorted(curve.knots_x, x, side="right") - 1, 0, curve.coef.shape[0] - 1)
    return seg, x - curve.knots_x[seg]


def evaluate(curve: Curve1D, x):
    """Evaluate ``curve`` at scalar or array ``x``; exact at the knots."""
    arr = np.asarray(x, dtype=np.float64)
    q = np.atleast_1d(arr)
    seg, t = _locate(curve, q)
    c = curve.coef[seg]
    y = c[:, 0] + t * (c[:, 1] + t * (c[:, 2] + t * c[:, 3]))
    # The last knot sits at the far end of a segment; pin it to the stored value.
    y = np.where(q == curve.knots_x[-1], curve.knots_y[-1], y)
    return float(y[0]) if arr.ndim == 0 else y


def derivative(curve: Curve1D, x):
    arr = np.asarray(x, dtype=np.float64)
    seg, t = _locate(curve, np.atleast_1d(arr))
    c = curve.coef[seg]
    dy = c[:, 1] + t * (2 * c[:, 2] + t * 3 * c[:, 3])
    return float(dy[0]) if arr.ndim == 0 else dy


def _antiderivative(c: np.ndarray, t: np.ndarray) -> np.ndarray:
    return t * (c[..., 0] + t * (c[..., 1] / 2 + t * (c[..., 2] / 3 + t * c[..., 3] / 4)))


def integrate(curve: Curve1D, lo: float, hi: float) -> float:
    """Exact integral of the piecewise polynomial over [lo, hi]."""
    if lo > hi:
        raise DomainError("integration bounds must satisfy lo <= hi")
    (s_lo, s_hi), (t_lo, t_hi) = _locate(curve, np.array([lo, hi], dtype=np.float64))
    h = np.diff(curve.knots_x)
    full = _antiderivative(curve.coef, h)
    total = full[s_lo:s_hi].sum()
    total += _antiderivative(curve.coef[s_hi], t_hi) - _antiderivative(curve.coef[s_lo], t_lo)
    return float(total)


def is_monotone(curve: Curve1D, samples: int = 1001) -> bool:
    """Dense-grid scan: True when evaluated values never decrease."""
    xs = np.linspace(*curve.domain, samples)
    xs = np.union1d(xs, curve.knots_x)
    return bool(np.all(np.diff(evaluate(curve, xs)) >= 0))


def tilted(curve: Curve1D) -> Curve1D:
    """Return a strictly increasing copy of a non-decreasing linear curve.

    Flat runs are tilted by a ramp of total height ``TILT * range`` so the
    curve has a functional inverse; curves that already increase strictly are
    returned unchanged.
    """
    if curve.kind != LINEAR:
        raise StructureError("only linear curves can be tilted")
    ys = curve.knots_y
    steps = np.diff(ys)
    if np.any(steps < 0):
        raise StructureError("curve is decreasing; cannot invert")
    if np.all(steps > 0):
        return curve
    span = ys[-1] - ys[0]
    eps = TILT * (span if span > 0 else 1.0)
    xs = curve.knots_x
    ramp = eps * (xs - xs[0]) / (xs[-1] - xs[0])
    return linear_fit(xs, ys + ramp)


def invert_monotone(curve: Curve1D, y):
    """Solve ``evaluate(curve, x) == y`` for a non-decreasing linear curve."""
    curve = tilted(curve)
    arr = np.asarray(y, dtype=np.float64)
    ys, xs = curve.knots_y, curve.knots_x
    q = np.atleast_1d(arr)
    slack = _DOMAIN_SLACK * (ys[-1] - ys[0])
    if np.any(q < ys[0] - slack) or np.any(q > ys[-1] + slack) or np.any(np.isnan(q)):
        raise DomainError(f"value outside curve range [{ys[0]}, {ys[-1]}]")
    q = np.clip(q, ys[0], ys[-1])
    seg = np.clip(np.searchsorted(ys, q, side="right") - 1, 0, ys.size - 2)
    frac = (q - ys[seg]) / (ys[seg + 1] - ys[seg])
    x = xs[seg] + frac * (xs[seg + 1] - xs[seg])
    x = np.where(q == ys[seg], xs[seg], x)
    return float(x[0]) if arr.ndim == 0 else x
