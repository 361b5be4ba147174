"""Codec comparison from sparse RD samples: quality gain and bitrate saving.

Four RD/DR fitters are available:

``bd``        least-squares cubics in log10 bitrate, RD and DR fitted separately
``pchip``     monotone Hermite interpolation, RD and DR fitted separately
``logistic``  z = a + b / (1 + exp(-c (xhat - d))), DR is its analytic inverse
``egrd``      constrained eigen-basis reconstruction of the RD curve on a
              bitrate lattice, linear interpolation, DR by inversion

Sample bitrates are always given in kbps; ``xhat`` denotes log10(kbps).
Quality gain is averaged over an interval of ``xhat``. Bitrate saving is
averaged over a quality interval, either as ``10**mean(g_B - g_A) - 1`` in
log space (``log_approx``) or as ``mean((g_B - g_A) / g_A)`` in linear space
(``exact``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate as spi
from scipy import optimize

from . import interp
from .basis import EigenBasis, pca_train
from .errors import DomainError, FitError, StructureError
from .grid import AxisSpec, GrdGrid
from .qp import QpSettings, QpStatus, assemble_design, build_difference_operators, solve_qp

BD = "bd"
PCHIP = "pchip"
LOGISTIC = "logistic"
EGRD = "egrd"
FITTERS = (BD, PCHIP, LOGISTIC, EGRD)

LOG_APPROX = "log_approx"
EXACT = "exact"

NO_OVERLAP = "NO_OVERLAP"
EXTRAPOLATED = "EXTRAPOLATED"
FIT_FAILED = "FIT_FAILED"

_SCAN_POINTS = 1001
_QUAD = dict(epsabs=1e-13, epsrel=1e-12, limit=500)


# -- samples ------------------------------------------------------------------


@dataclass(frozen=True)
class RdSamplePair:
    """Per-codec (kbps, quality) samples of one source content."""

    content_id: str
    a: tuple[tuple[float, float], ...]
    b: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for name in ("a", "b"):
            pts = sorted((float(x), float(z)) for x, z in getattr(self, name))
            xs = [x for x, _ in pts]
            if len(pts) < 2:
                raise StructureError(f"{self.content_id}: codec {name.upper()} needs at least 2 samples")
            if any(x <= 0 or not math.isfinite(x) for x in xs) or any(b <= a for a, b in zip(xs, xs[1:])):
                raise StructureError(f"{self.content_id}: codec {name.upper()} bitrates must be positive and distinct")
            if any(not 0 <= z <= 100 for _, z in pts):
                raise StructureError(f"{self.content_id}: qualities must lie in [0, 100]")
            object.__setattr__(self, name, tuple(pts))


def _split(samples) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(sorted((float(x), float(z)) for x, z in samples), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise FitError("at least 2 samples are required")
    return pts[:, 0], pts[:, 1]


# -- fitted curves ------------------------------------------------------------


class RdCurve:
    """Quality as a function of log10 bitrate."""

    fitter: str
    domain: tuple[float, float]  # xhat range the fit is trusted on
    extendable: bool = True  # defined (by its functional form) beyond domain

    def quality(self, xhat):
        raise NotImplementedError

    def integral(self, lo: float, hi: float) -> float:
        raise NotImplementedError

    def slope(self, xhat):
        raise NotImplementedError

    def monotone(self, lo=None, hi=None) -> bool:
        lo = self.domain[0] if lo is None else lo
        hi = self.domain[1] if hi is None else hi
        return bool(np.all(self.slope(np.linspace(lo, hi, _SCAN_POINTS)) >= -1e-12))


class DrCurve:
    """Bitrate as a function of quality."""

    fitter: str
    domain: tuple[float, float]  # quality range
    breakpoints: tuple[float, ...] = ()

    def log_rate(self, z):
        raise NotImplementedError

    def rate(self, z):
        return np.power(10.0, self.log_rate(z))

    def log_integral(self, lo: float, hi: float) -> float:
        val, _ = spi.quad(lambda z: float(self.log_rate(z)), lo, hi, points=_inner(self.breakpoints, lo, hi), **_QUAD)
        return float(val)

    def monotone(self, lo=None, hi=None) -> bool:
        lo = self.domain[0] if lo is None else lo
        hi = self.domain[1] if hi is None else hi
        vals = np.asarray(self.log_rate(np.linspace(lo, hi, _SCAN_POINTS)))
        return bool(np.all(np.diff(vals) >= -1e-12))


def _inner(points, lo, hi):
    pts = [p for p in points if lo < p < hi]
    return pts or None


class PolyRd(RdCurve):
    def __init__(self, poly: np.poly1d, domain, fitter=BD):
        self.poly, self.domain, self.fitter = poly, domain, fitter
        self._anti = np.polyint(poly)
        self._deriv = np.polyder(poly)

    def quality(self, xhat):
        return self.poly(xhat)

    def slope(self, xhat):
        return self._deriv(xhat)

    def integral(self, lo, hi):
        return float(self._anti(hi) - self._anti(lo))


class PolyDr(DrCurve):
    def __init__(self, poly: np.poly1d, domain, fitter=BD):
        self.poly, self.domain, self.fitter = poly, domain, fitter
        self._anti = np.polyint(poly)

    def log_rate(self, z):
        return self.poly(z)

    def log_integral(self, lo, hi):
        return float(self._anti(hi) - self._anti(lo))


def _piece_eval(curve: interp.Curve1D, x, extrapolate: bool):
    """Evaluate a Hermite/linear curve, extending its end pieces if allowed."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = curve.domain
    if not extrapolate or (np.all(x >= lo) and np.all(x <= hi)):
        return interp.evaluate(curve, x)
    q = np.atleast_1d(x)
    seg = np.clip(np.searchsorted(curve.knots_x, q, side="right") - 1, 0, curve.coef.shape[0] - 1)
    t = q - curve.knots_x[seg]
    c = curve.coef[seg]
    y = c[:, 0] + t * (c[:, 1] + t * (c[:, 2] + t * c[:, 3]))
    return float(y[0]) if x.ndim == 0 else y


def _poly_antiderivative(c, t):
    return t * (c[0] + t * (c[1] / 2 + t * (c[2] / 3 + t * c[3] / 4)))


def _piece_integral(curve: interp.Curve1D, lo, hi, extrapolate: bool) -> float:
    a, b = curve.domain
    if lo >= a and hi <= b:
        return interp.integrate(curve, lo, hi)
    if not extrapolate:
        raise DomainError("integration range outside the fitted domain")
    total = interp.integrate(curve, max(lo, a), min(hi, b)) if max(lo, a) < min(hi, b) else 0.0
    for c, x0, l, h in ((curve.coef[0], a, lo, min(hi, a)), (curve.coef[-1], curve.knots_x[-2], max(lo, b), hi)):
        if l < h:
            total += _poly_antiderivative(c, h - x0) - _poly_antiderivative(c, l - x0)
    return float(total)


class PchipRd(RdCurve):
    fitter = PCHIP

    def __init__(self, curve: interp.Curve1D):
        self.curve = curve
        self.domain = curve.domain

    def quality(self, xhat):
        return _piece_eval(self.curve, xhat, True)

    def slope(self, xhat):
        return interp.derivative(self.curve, np.clip(xhat, *self.domain))

    def integral(self, lo, hi):
        return _piece_integral(self.curve, lo, hi, True)


class PchipDr(DrCurve):
    fitter = PCHIP

    def __init__(self, curve: interp.Curve1D):
        self.curve = curve
        self.domain = curve.domain
        self.breakpoints = tuple(curve.knots_x)

    def log_rate(self, z):
        return _piece_eval(self.curve, z, True)

    def log_integral(self, lo, hi):
        return _piece_integral(self.curve, lo, hi, True)


@dataclass(frozen=True)
class LogisticParams:
    a: float
    b: float
    c: float
    d: float

    def __call__(self, xhat):
        return self.a + self.b * _expit(self.c * (np.asarray(xhat, dtype=np.float64) - self.d))


def _expit(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


class LogisticRd(RdCurve):
    fitter = LOGISTIC

    def __init__(self, params: LogisticParams, domain, converged: bool = True):
        self.params, self.domain, self.converged = params, domain, converged

    def quality(self, xhat):
        return self.params(xhat)

    def slope(self, xhat):
        p = self.params
        s = _expit(p.c * (np.asarray(xhat) - p.d))
        return p.b * p.c * s * (1 - s)

    def integral(self, lo, hi):
        p = self.params
        anti = lambda x: p.a * x + p.b / p.c * np.logaddexp(0.0, p.c * (x - p.d))  # noqa: E731
        return float(anti(hi) - anti(lo))


class LogisticDr(DrCurve):
    fitter = LOGISTIC

    def __init__(self, params: LogisticParams, domain):
        if params.b == 0 or params.c == 0:
            raise FitError("logistic fit is flat and has no inverse")
        self.params, self.domain = params, domain

    def log_rate(self, z):
        p = self.params
        u = (np.asarray(z, dtype=np.float64) - p.a) / p.b
        if np.any(u <= 0) or np.any(u >= 1):
            raise DomainError("quality outside the range of the fitted logistic")
        return p.d + (np.log(u) - np.log1p(-u)) / p.c


class LinearRd(RdCurve):
    """Piecewise-linear RD in linear bitrate (eGRD)."""

    fitter = EGRD
    extendable = False

    def __init__(self, curve: interp.Curve1D):
        self.curve = curve
        self.domain = (math.log10(curve.knots_x[0]), math.log10(curve.knots_x[-1]))

    def quality(self, xhat):
        return interp.evaluate(self.curve, np.power(10.0, xhat))

    def slope(self, xhat):
        x = np.power(10.0, np.asarray(xhat, dtype=np.float64))
        return interp.derivative(self.curve, x) * x * math.log(10.0)

    def integral(self, lo, hi):
        """Closed form of the integral over log10 bitrate."""
        if lo > hi:
            raise DomainError("lo must not exceed hi")
        xs = self.curve.knots_x
        a, b = 10.0**lo, 10.0**hi
        interp.evaluate(self.curve, np.array([a, b]))  # domain check
        cuts = np.concatenate([[a], xs[(xs > a) & (xs < b)], [b]])
        total = 0.0
        for x0, x1 in zip(cuts[:-1], cuts[1:]):
            seg = min(np.searchsorted(xs, x0, side="right") - 1, xs.size - 2)
            s = (self.curve.knots_y[seg + 1] - self.curve.knots_y[seg]) / (xs[seg + 1] - xs[seg])
            intercept = self.curve.knots_y[seg] - s * xs[seg]
            total += intercept * (math.log10(x1) - math.log10(x0)) + s * (x1 - x0) / math.log(10.0)
        return float(total)


class LinearDr(DrCurve):
    """Piecewise-linear DR in linear bitrate, the exact inverse of a LinearRd."""

    fitter = EGRD

    def __init__(self, curve: interp.Curve1D):
        self.curve = curve  # knots: quality -> kbps
        self.domain = curve.domain
        self.breakpoints = tuple(curve.knots_x)

    def rate(self, z):
        return interp.evaluate(self.curve, z)

    def log_rate(self, z):
        return np.log10(self.rate(z))

    def log_integral(self, lo, hi):
        """Closed form of the integral of log10(rate) over quality."""
        xs, ys = self.curve.knots_x, self.curve.knots_y
        interp.evaluate(self.curve, np.array([lo, hi]))
        cuts = np.concatenate([[lo], xs[(xs > lo) & (xs < hi)], [hi]])
        total = 0.0
        for z0, z1 in zip(cuts[:-1], cuts[1:]):
            r0, r1 = self.rate(z0), self.rate(z1)
            if r1 == r0:
                total += (z1 - z0) * math.log10(r0)
            else:
                g = lambda r: r * math.log(r) - r  # noqa: E731
                total += (z1 - z0) * (g(r1) - g(r0)) / ((r1 - r0) * math.log(10.0))
        return float(total)


# -- fitters ------------------------------------------------------------------


@dataclass(frozen=True)
class EgrdFitSettings:
    basis: EigenBasis
    n_components: int | str = "match_samples"
    solver: QpSettings = field(default_factory=QpSettings)


def _fit_logistic(xhat: np.ndarray, z: np.ndarray) -> tuple[LogisticParams, bool]:
    """Damped Gauss-Newton (MINPACK Levenberg-Marquardt), five data-quantile starts."""
    if xhat.size < 4:
        raise FitError("logistic fitting needs at least 4 samples")
    span = max(xhat[-1] - xhat[0], 1e-6)
    zlo, zhi = float(np.min(z)), float(np.max(z))
    zr = max(zhi - zlo, 1.0)
    best, best_cost, best_ok = None, np.inf, False
    for qd in (0.1, 0.3, 0.5, 0.7, 0.9):
        d0 = float(np.quantile(xhat, qd))
        p0 = np.array([zlo - 0.1 * zr, 1.2 * zr, 8.0 / span, d0])
        try:
            res = optimize.least_squares(
                lambda p: LogisticParams(*p)(xhat) - z,
                p0,
                method="lm",
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-10,
                max_nfev=500 * (p0.size + 1),
            )
        except (ValueError, FloatingPointError):
            continue
        if not np.all(np.isfinite(res.x)):
            continue
        ok = res.status > 0 and res.x[1] != 0 and res.x[2] != 0
        cost = float(res.cost)
        if (ok and not best_ok) or ((ok == best_ok) and cost < best_cost):
            best, best_cost, best_ok = res.x, cost, ok
    if best is None:
        raise FitError("logistic fit failed from every start")
    return LogisticParams(*map(float, best)), best_ok


def _egrd_curve(x: np.ndarray, z: np.ndarray, settings: EgrdFitSettings) -> interp.Curve1D:
    basis = settings.basis
    grid_x = np.asarray(basis.axes.bitrates)
    if len(basis.axes.resolutions) != 1:
        raise FitError("the eGRD RD fitter needs a single-resolution basis")
    if x[0] < grid_x[0] or x[-1] > grid_x[-1]:
        raise FitError(f"sample bitrates must lie within [{grid_x[0]}, {grid_x[-1]}] kbps")
    # Linear interpolation weights of each sample on the bitrate lattice.
    seg = np.clip(np.searchsorted(grid_x, x, side="right") - 1, 0, grid_x.size - 2)
    t = (x - grid_x[seg]) / (grid_x[seg + 1] - grid_x[seg])
    W = np.zeros((x.size, grid_x.size))
    W[np.arange(x.size), seg] = 1 - t
    W[np.arange(x.size), seg + 1] += t
    n = settings.n_components
    n = min(x.size, basis.n_max) if n == "match_samples" else int(n)
    problem = assemble_design(basis, W, z, n, build_difference_operators(basis.axes))
    sol = solve_qp(problem, settings.solver)
    if sol.status is not QpStatus.SOLVED:
        raise FitError(f"eGRD reconstruction failed: {sol.status.value}")
    values = basis.mean + basis.components[:, :n] @ sol.coefficients
    values = np.maximum.accumulate(values)  # remove solver-tolerance dips
    return interp.tilted(interp.linear_fit(grid_x, values))


@dataclass
class FittedCodec:
    rd: RdCurve
    dr: DrCurve
    samples: tuple[tuple[float, float], ...]
    converged: bool = True

    @property
    def xhat_range(self) -> tuple[float, float]:
        xs = [math.log10(x) for x, _ in self.samples]
        return min(xs), max(xs)

    @property
    def quality_range(self) -> tuple[float, float]:
        """Sample quality range, clipped to where the DR curve is defined.

        Fitters that do not interpolate (eGRD) may not reach the extreme
        sample qualities.
        """
        zs = [z for _, z in self.samples]
        return max(min(zs), self.dr.domain[0]), min(max(zs), self.dr.domain[1])

    def residuals(self) -> dict:
        x = np.array([s[0] for s in self.samples])
        z = np.array([s[1] for s in self.samples])
        out = {}
        try:
            out["rd_rms"] = float(np.sqrt(np.mean((self.rd.quality(np.log10(x)) - z) ** 2)))
        except DomainError:
            out["rd_rms"] = None
        try:
            out["dr_rms"] = float(np.sqrt(np.mean((self.dr.log_rate(z) - np.log10(x)) ** 2)))
        except DomainError:
            out["dr_rms"] = None
        return out


def fit_rd(fitter: str, samples, egrd: EgrdFitSettings | None = None) -> RdCurve:
    """Fit quality versus bitrate. ``samples`` are (kbps, quality) pairs."""
    x, z = _split(samples)
    xhat = np.log10(x)
    domain = (float(xhat[0]), float(xhat[-1]))
    if fitter == BD:
        if x.size < 4:
            raise FitError("BD fitting needs at least 4 samples")
        return PolyRd(np.poly1d(np.polyfit(xhat, z, 3)), domain)
    if fitter == PCHIP:
        return PchipRd(interp.pchip_fit(xhat, z))
    if fitter == LOGISTIC:
        params, ok = _fit_logistic(xhat, z)
        return LogisticRd(params, domain, ok)
    if fitter == EGRD:
        if egrd is None:
            raise FitError("the eGRD fitter needs a trained single-resolution basis")
        return LinearRd(_egrd_curve(x, z, egrd))
    raise ValueError(f"unknown fitter {fitter!r}")


def fit_dr(fitter: str, samples, rd: RdCurve | None = None, egrd: EgrdFitSettings | None = None) -> DrCurve:
    """Fit bitrate versus quality.

    BD and PCHIP fit the swapped samples independently of any RD fit;
    logistic and eGRD invert their RD fit (``rd`` or a fresh one).
    """
    x, z = _split(samples)
    xhat = np.log10(x)
    order = np.argsort(z, kind="stable")
    zs, xs = z[order], xhat[order]
    qrange = (float(zs[0]), float(zs[-1]))
    if fitter == BD:
        if np.any(np.diff(zs) <= 0):
            raise FitError("BD DR fitting needs distinct qualities")
        return PolyDr(np.poly1d(np.polyfit(zs, xs, 3)), qrange)
    if fitter == PCHIP:
        if np.any(np.diff(zs) <= 0):
            raise FitError("PCHIP DR fitting needs distinct qualities")
        return PchipDr(interp.pchip_fit(zs, xs))
    rd = rd or fit_rd(fitter, samples, egrd)
    if fitter == LOGISTIC:
        return LogisticDr(rd.params, qrange)
    if fitter == EGRD:
        c = rd.curve
        return LinearDr(interp.linear_fit(c.knots_y, c.knots_x))
    raise ValueError(f"unknown fitter {fitter!r}")


def fit_codec(fitter: str, samples, egrd: EgrdFitSettings | None = None) -> FittedCodec:
    rd = fit_rd(fitter, samples, egrd)
    dr = fit_dr(fitter, samples, rd=rd, egrd=egrd)
    return FittedCodec(rd, dr, tuple(sorted((float(x), float(q)) for x, q in samples)), bool(getattr(rd, "converged", True)))


# -- metrics ------------------------------------------------------------------


def delta_q(rd_a: RdCurve, rd_b: RdCurve, lo: float, hi: float) -> float:
    """Mean of ``f_B - f_A`` over [lo, hi] in log10 bitrate."""
    if not lo < hi:
        raise DomainError("empty log-bitrate overlap")
    return (rd_b.integral(lo, hi) - rd_a.integral(lo, hi)) / (hi - lo)


def delta_r(dr_a: DrCurve, dr_b: DrCurve, lo: float, hi: float, mode: str = EXACT) -> float:
    """Average relative bitrate change of B against A over qualities [lo, hi]."""
    if not lo < hi:
        raise DomainError("empty quality overlap")
    if mode == LOG_APPROX:
        mean_log = (dr_b.log_integral(lo, hi) - dr_a.log_integral(lo, hi)) / (hi - lo)
        return float(10.0**mean_log - 1.0)
    if mode != EXACT:
        raise ValueError(f"unknown delta_r mode {mode!r}")

    def relative(z):
        ga = float(dr_a.rate(z))
        if ga <= 0:
            raise DomainError("reference bitrate reaches zero")
        return (float(dr_b.rate(z)) - ga) / ga

    points = _inner(sorted(set(dr_a.breakpoints) | set(dr_b.breakpoints)), lo, hi)
    with np.errstate(divide="ignore"):
        ends = np.asarray(dr_a.rate(np.array([lo, *(points or ()), hi])), dtype=float)
    if not np.all(ends > 0):
        raise DomainError("reference bitrate reaches zero")
    val, _ = spi.quad(relative, lo, hi, points=points, **_QUAD)
    return float(val / (hi - lo))


# -- full comparison ----------------------------------------------------------


@dataclass
class ContentResult:
    content_id: str
    delta_q: float | None
    delta_r: float | None
    rate_range: tuple[float, float] | None  # log10 kbps
    quality_range: tuple[float, float] | None
    flags: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "content_id": self.content_id,
            "delta_q": self.delta_q,
            "delta_r": self.delta_r,
            "log10_rate_range": None if self.rate_range is None else list(self.rate_range),
            "quality_range": None if self.quality_range is None else list(self.quality_range),
            "flags": list(self.flags),
            "diagnostics": self.diagnostics,
        }


@dataclass
class CodecComparisonReport:
    fitter: str
    dr_mode: str
    contents: list[ContentResult]
    delta_q: float | None
    delta_r: float | None
    global_range: tuple[float, float] | None = None

    @property
    def excluded(self) -> list[str]:
        return [c.content_id for c in self.contents if c.delta_q is None and c.delta_r is None]

    def as_dict(self) -> dict:
        return {
            "fitter": self.fitter,
            "dr_mode": self.dr_mode,
            "rate_axis": "log10(kbps)",
            "global_range_kbps": None if self.global_range is None else list(self.global_range),
            "delta_q": self.delta_q,
            "delta_r": self.delta_r,
            "excluded": self.excluded,
            "contents": [c.as_dict() for c in self.contents],
        }


def _overlap(ra, rb) -> tuple[float, float] | None:
    lo, hi = max(ra[0], rb[0]), min(ra[1], rb[1])
    return (lo, hi) if lo < hi else None


def compare_content(
    pair: RdSamplePair,
    fitter: str,
    dr_mode: str = EXACT,
    egrd: EgrdFitSettings | None = None,
    global_range: tuple[float, float] | None = None,
) -> ContentResult:
    result = ContentResult(pair.content_id, None, None, None, None)
    try:
        fa = fit_codec(fitter, pair.a, egrd)
        fb = fit_codec(fitter, pair.b, egrd)
    except (FitError, DomainError) as exc:
        result.flags.append(FIT_FAILED)
        result.diagnostics["error"] = str(exc)
        return result
    result.fits = {"A": fa, "B": fb}
    for name, fc in (("A", fa), ("B", fb)):
        diag = {"rd_monotone": fc.rd.monotone(*fc.xhat_range), "converged": fc.converged}
        zlo, zhi = fc.quality_range
        diag["dr_monotone"] = fc.dr.monotone(zlo, zhi) if zlo < zhi else None
        diag.update(fc.residuals())
        result.diagnostics[name] = diag
        if not diag["rd_monotone"]:
            result.flags.append(f"NON_MONOTONE_RD_{name}")
        if diag["dr_monotone"] is False:
            result.flags.append(f"NON_MONOTONE_DR_{name}")
        if not fc.converged:
            result.flags.append(f"NOT_CONVERGED_{name}")

    if global_range is None:
        rate = _overlap(fa.xhat_range, fb.xhat_range)
        quality = _overlap(fa.quality_range, fb.quality_range)
    else:
        lo_kbps, hi_kbps = global_range
        if not 0 < lo_kbps < hi_kbps:
            raise DomainError("global range must satisfy 0 < lo < hi")
        rate = (math.log10(lo_kbps), math.log10(hi_kbps))
        try:
            ends = [(float(f.rd.quality(rate[0])), float(f.rd.quality(rate[1]))) for f in (fa, fb)]
            zlo, zhi = max(e[0] for e in ends), min(e[1] for e in ends)
            quality = (zlo, zhi) if zlo < zhi else None
        except DomainError as exc:
            result.flags.append(FIT_FAILED)
            result.diagnostics["error"] = str(exc)
            return result
        for f in (fa, fb):
            lo, hi = f.xhat_range
            if f.rd.extendable and (rate[0] < lo or rate[1] > hi):
                if EXTRAPOLATED not in result.flags:
                    result.flags.append(EXTRAPOLATED)

    if rate is None or quality is None:
        result.flags.append(NO_OVERLAP)
    result.rate_range, result.quality_range = rate, quality
    try:
        if rate is not None:
            result.delta_q = delta_q(fa.rd, fb.rd, *rate)
        if quality is not None:
            result.delta_r = delta_r(fa.dr, fb.dr, *quality, mode=dr_mode)
    except DomainError as exc:
        result.flags.append(FIT_FAILED)
        result.diagnostics["error"] = str(exc)
    return result


def compare(
    contents: Sequence[RdSamplePair],
    fitter: str,
    dr_mode: str = EXACT,
    egrd: EgrdFitSettings | None = None,
    global_range: tuple[float, float] | None = None,
) -> CodecComparisonReport:
    """Compare codec B against codec A over a set of contents.

    Contents without a usable overlap contribute nothing to the aggregate
    means; a report where no content contributes is an error.
    """
    if fitter not in FITTERS:
        raise ValueError(f"unknown fitter {fitter!r}")
    results = [compare_content(p, fitter, dr_mode, egrd, global_range) for p in contents]
    dq = [r.delta_q for r in results if r.delta_q is not None]
    dr = [r.delta_r for r in results if r.delta_r is not None]
    if not dq and not dr:
        raise DomainError("no content has an overlapping range for both codecs")
    return CodecComparisonReport(
        fitter,
        dr_mode,
        results,
        float(np.mean(dq)) if dq else None,
        float(np.mean(dr)) if dr else None,
        global_range,
    )


def rd_curve_corpus(grids: Sequence[GrdGrid], resolution_index: int | None = None) -> list[GrdGrid]:
    """Split GRD surfaces into single-resolution RD curves."""
    out = []
    for g in grids:
        cols = range(len(g.axes.resolutions)) if resolution_index is None else [resolution_index]
        for j in cols:
            out.append(GrdGrid(g.axes.single_resolution(j), g.values[:, j : j + 1], g.metadata))
    return out


def train_rd_basis(grids: Sequence[GrdGrid], n_components: int, resolution_index: int | None = None) -> EigenBasis:
    """Eigen basis for single-resolution RD curves.

    Curves from different resolutions are pooled onto one bitrate lattice, so
    their resolution labels are dropped.
    """
    curves = rd_curve_corpus(grids, resolution_index)
    axes = AxisSpec(curves[0].axes.bitrates, (1.0,))
    pooled = [GrdGrid(axes, c.values, c.metadata) for c in curves]
    return pca_train(pooled, min(n_components, len(pooled) - 1, axes.size))
