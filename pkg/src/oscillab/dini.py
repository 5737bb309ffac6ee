"""Dini integrals, the weighted functional X(C, r) and the L_a probe.

Scales are handled in the logarithmic variable s = ln(1/t), and for very small
radii in the depth variable w = ln s = ln ln(1/t).  Working in w lets the tail
of X(C, r) be followed down to radii far below the smallest double, which is
what separating X -> 0 from X -> infinity needs when the modulus decays only
logarithmically.  All X values are carried as natural logarithms internally so
that exp(C int w/s) never overflows; an overflowing X is reported as +inf.

Modulus spec strings::

    const:c        w(t) = c
    powlog:kappa   w(t) = kappa / ln(e + 1/t)      (~ kappa / ln(1/t) as t -> 0)
    loglog:beta    w(t) = 1 / (ln(64/t) (ln ln(64/t))^beta)
    pow:alpha      w(t) = t^alpha
    table:<path>   tabulated CSV (radius, value), log-linear in r
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

LN64 = math.log(64.0)
S_FULL = 128.0  # radii with ln(1/r) <= S_FULL use a direct grid in s
S_DEEP_START = 64.0
WINDOW = 60.0  # width in s of the kernel window exp(-(s_r - s)) kept in the deep regime


class ModulusError(ValueError):
    pass


# --------------------------------------------------------------------------
# modulus functions


class ModulusFunction:
    """A non-negative modulus w(t) on (0, 2].

    Subclasses provide ``at_log(s)`` (w at t = e^-s) and ``log_at_depth(w)``
    (ln w at s = e^w, stable for huge depths).
    """

    spec = "custom"
    is_zero = False

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.at_log(-np.log(t))

    def at_log(self, s):
        raise NotImplementedError

    def log_at_depth(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            return np.log(self.at_log(np.exp(w)))

    def __repr__(self):
        return f"ModulusFunction({self.spec!r})"


class ConstModulus(ModulusFunction):
    def __init__(self, c: float):
        if c < 0:
            raise ModulusError("a modulus must be non-negative")
        self.c = float(c)
        self.spec = f"const:{c:g}"
        self.is_zero = self.c == 0.0

    def at_log(self, s):
        return np.full(np.shape(s), self.c)

    def log_at_depth(self, w):
        with np.errstate(divide="ignore"):
            return np.full(np.shape(w), np.log(self.c))


def _log_shifted(s_or_depth, depth: bool):
    """ln(ln(e + e^s)) computed from s, or from w = ln s."""
    if not depth:
        return np.log(np.logaddexp(1.0, s_or_depth))
    w = np.asarray(s_or_depth, dtype=float)
    out = np.empty_like(w)
    big = w > 30.0
    out[big] = w[big]
    s = np.exp(w[~big])
    out[~big] = np.log(np.logaddexp(1.0, s))
    return out


class PowLogModulus(ModulusFunction):
    def __init__(self, kappa: float):
        if kappa < 0:
            raise ModulusError("a modulus must be non-negative")
        self.kappa = float(kappa)
        self.spec = f"powlog:{kappa:g}"
        self.is_zero = self.kappa == 0.0

    def at_log(self, s):
        return self.kappa / np.logaddexp(1.0, np.asarray(s, dtype=float))

    def log_at_depth(self, w):
        with np.errstate(divide="ignore"):
            return np.log(self.kappa) - _log_shifted(w, depth=True)


class LogLogModulus(ModulusFunction):
    def __init__(self, beta: float):
        self.beta = float(beta)
        self.spec = f"loglog:{beta:g}"

    def at_log(self, s):
        L = LN64 + np.asarray(s, dtype=float)
        return 1.0 / (L * np.log(L) ** self.beta)

    def log_at_depth(self, w):
        w = np.asarray(w, dtype=float)
        lnL = np.where(w > 30.0, w + np.log1p(LN64 * np.exp(-np.minimum(w, 700.0))), 0.0)
        small = w <= 30.0
        lnL[small] = np.log(LN64 + np.exp(w[small]))
        return -lnL - self.beta * np.log(lnL)


class PowerModulus(ModulusFunction):
    def __init__(self, alpha: float, scale: float = 1.0):
        self.alpha = float(alpha)
        self.scale = float(scale)
        self.spec = f"pow:{alpha:g}" if scale == 1.0 else f"pow:{alpha:g}:{scale:g}"

    def at_log(self, s):
        return self.scale * np.exp(-self.alpha * np.asarray(s, dtype=float))

    def log_at_depth(self, w):
        with np.errstate(over="ignore"):
            return math.log(self.scale) - self.alpha * np.exp(np.asarray(w, dtype=float))


class TabulatedModulus(ModulusFunction):
    """Piecewise linear in ln r, exact at the knots.

    Below the smallest knot the last two knots are extrapolated linearly in
    ln r (clipped at 0); above the largest knot the value is held constant.
    """

    def __init__(self, radii, values, spec: str = "table"):
        r = np.asarray(radii, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.size < 2 or r.size != v.size:
            raise ModulusError("a tabulated modulus needs at least two (radius, value) pairs")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ModulusError("tabulated modulus values must be finite and non-negative")
        order = np.argsort(r)
        self.radii = r[order]
        self.values = v[order]
        self.spec = spec
        self.is_zero = bool(np.all(self.values == 0))
        self._lnr = np.log(self.radii)
        self._slope = (self.values[1] - self.values[0]) / (self._lnr[1] - self._lnr[0])

    @property
    def extrapolates_below(self) -> float:
        return float(self.radii[0])

    def at_log(self, s):
        lnt = -np.asarray(s, dtype=float)
        inside = np.interp(lnt, self._lnr, self.values)
        below = np.clip(self.values[0] + self._slope * (lnt - self._lnr[0]), 0.0, None)
        return np.where(lnt < self._lnr[0], below, inside)

    def log_at_depth(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            s = np.exp(w)
            direct = np.log(self.at_log(np.where(np.isfinite(s), s, 0.0)))
            s0 = -self._lnr[0]
            if self._slope > 0:
                # decreasing toward 0: hits zero at a finite depth
                far = np.full_like(w, -np.inf)
            elif self._slope == 0:
                far = np.full_like(w, np.log(self.values[0]))
            else:
                far = np.log(-self._slope) + w + np.log1p((self.values[0] / -self._slope - s0) * np.exp(-w))
        return np.where(np.isfinite(s) & (s < 1e15), direct, far)

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header
        if not rows:
            raise ModulusError(f"no numeric rows in {path}")
        r, v = zip(*rows)
        return cls(r, v, spec=f"table:{path}")

    @classmethod
    def from_profile(cls, profile):
        return cls(profile.radii, profile.values, spec=f"profile(p={profile.p:g})")


def parse_modulus(spec: str) -> ModulusFunction:
    kind, _, arg = spec.partition(":")
    try:
        if kind == "const":
            return ConstModulus(float(arg))
        if kind == "powlog":
            return PowLogModulus(float(arg))
        if kind == "loglog":
            return LogLogModulus(float(arg))
        if kind == "pow":
            parts = arg.split(":")
            return PowerModulus(float(parts[0]), float(parts[1]) if len(parts) > 1 else 1.0)
        if kind == "table":
            if not Path(arg).exists():
                raise ModulusError(f"table file not found: {arg}")
            return TabulatedModulus.from_csv(arg)
    except ValueError as exc:
        if isinstance(exc, ModulusError):
            raise
        raise ModulusError(f"bad modulus spec {spec!r}: {exc}") from exc
    raise ModulusError(f"unknown modulus kind {kind!r} in {spec!r}")


# --------------------------------------------------------------------------
# integrals


def _gauss_panels(lo: float, hi: float, width: float, order: int = 8):
    xg, wg = np.polynomial.legendre.leggauss(order)
    k = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, k + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return (mid + half * xg).ravel(), (half * wg).ravel()


def dini_integral(omega: ModulusFunction, a: float, b: float, density: int = 16) -> float:
    """int_a^b w(t)/t dt = int w ds over s = ln(1/t), composite Gauss-Legendre."""
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    s, wts = _gauss_panels(math.log(1.0 / b), math.log(1.0 / a), 1.0 / density)
    vals = omega.at_log(s)
    if not np.all(np.isfinite(vals)):
        raise ModulusError("modulus is not finite on the integration grid")
    return float(np.dot(wts, vals))


def _log_simpson(logf, x):
    """ln of the Simpson integral of exp(logf), scaled to avoid overflow."""
    top = np.max(logf)
    if not np.isfinite(top):
        return top
    val = simpson(np.exp(logf - top), x=x)
    if val <= 0:
        return -np.inf
    return top + math.log(val)


class XFunctional:
    """X(C, r) = r int_r^R w(t)/t^2 exp(C int_t^R w(s)/s ds) dt.

    Shallow radii (ln(1/r) <= 128) integrate on a uniform s grid with the
    inner integral as a running Simpson antiderivative.  Deeper radii use a
    shared depth grid w = ln s for the inner integral (piecewise exponential
    rule, exact for exponential growth) and a window of width 60 in s for the
    outer kernel exp(-(s_r - s)); the discarded part is below e^-60 relative.
    """

    def __init__(self, omega: ModulusFunction, C: float, R: float = 2.0, density: int = 64):
        if C < 0:
            raise ValueError("C must be non-negative")
        if not 0 < R <= 2.0:
            raise ValueError("R must lie in (0, 2]")
        self.omega, self.C, self.R, self.density = omega, float(C), float(R), int(density)
        self.s_R = math.log(1.0 / R)
        self._deep = None

    # shallow -------------------------------------------------------------
    def _shallow_log(self, s_r: float) -> float:
        npts = int(math.ceil((s_r - self.s_R) * self.density))
        npts += npts % 2  # even number of intervals
        npts = max(npts, 2)
        s = np.linspace(self.s_R, s_r, npts + 1)
        om = self.omega.at_log(s)
        if not np.all(np.isfinite(om)):
            raise ModulusError("modulus is not finite on the integration grid")
        inner = cumulative_simpson(om, x=s, initial=0.0)
        with np.errstate(divide="ignore"):
            logf = np.log(om) + self.C * inner - (s_r - s)
        return _log_simpson(logf, s)

    # deep ----------------------------------------------------------------
    def _deep_grid(self, w_max: float):
        if self._deep is not None and self._deep[0][-1] >= w_max:
            return self._deep
        w0 = math.log(S_DEEP_START)
        step = 1.0 / self.density
        lin = np.arange(w0, min(16.0, w_max) + step, step)
        if w_max > lin[-1]:
            q = 1.0 + 1.0 / (4 * self.density)
            k = int(math.ceil(math.log(w_max / lin[-1]) / math.log(q))) + 1
            geo = lin[-1] * q ** np.arange(1, k + 1)
            grid = np.concatenate([lin, geo])
        else:
            grid = lin
        logg = self.omega.log_at_depth(grid) + grid  # ln(w(s) s)
        # int over [w_i, w_i+1] of exp(linear interpolant of logg); zero where
        # either end has w = 0
        dw = np.diff(grid)
        l0, l1 = logg[:-1], logg[1:]
        live = ~(np.isneginf(l0) | np.isneginf(l1))
        piece = np.zeros_like(dw)
        with np.errstate(over="ignore", invalid="ignore"):
            hi = np.maximum(l0[live], l1[live])
            d = np.abs(l1[live] - l0[live])
            d = np.where(np.isnan(d), 0.0, d)
            factor = np.where(d > 1e-8, -np.expm1(-d) / np.maximum(d, 1e-300), 1.0 - d / 2)
            piece[live] = np.exp(hi) * factor * dw[live]
        base = self._shallow_inner(S_DEEP_START)
        inner = base + np.concatenate([[0.0], np.cumsum(piece)])
        self._deep = (grid, inner)
        return self._deep

    def _shallow_inner(self, s_hi: float) -> float:
        npts = int(math.ceil((s_hi - self.s_R) * self.density))
        npts += npts % 2
        s = np.linspace(self.s_R, s_hi, npts + 1)
        return float(simpson(self.omega.at_log(s), x=s))

    def _deep_log(self, w_r: float) -> float:
        grid, inner = self._deep_grid(w_r)
        with np.errstate(over="ignore", invalid="ignore"):
            I_r = float(np.interp(w_r, grid, inner))
        sig = np.linspace(0.0, WINDOW, int(WINDOW * self.density) + 1)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            w = w_r + np.log1p(-sig * np.exp(-w_r))
            log_om = self.omega.log_at_depth(w)
            J = cumulative_simpson(np.exp(log_om), x=sig, initial=0.0)
            if self.C == 0:
                logf = log_om - sig
            elif np.isposinf(I_r):
                return math.inf
            else:
                logf = log_om + self.C * (I_r - J) - sig
        return _log_simpson(logf, sig)

    # public --------------------------------------------------------------
    def log_at_depth(self, w_r: float) -> float:
        """ln X at the radius r with ln ln(1/r) = w_r."""
        if self.omega.is_zero:
            return -math.inf
        s_r = math.exp(w_r) if w_r < 700 else math.inf
        if s_r <= S_FULL:
            if s_r <= self.s_R:
                raise ValueError("need r < R")
            return self._shallow_log(s_r)
        return self._deep_log(w_r)

    def log_value(self, r: float) -> float:
        if not 0 < r < self.R:
            raise ValueError("need 0 < r < R")
        if self.omega.is_zero:
            return -math.inf
        s_r = math.log(1.0 / r)
        if s_r <= S_FULL:
            return self._shallow_log(s_r)
        return self._deep_log(math.log(s_r))

    def __call__(self, r: float) -> float:
        return _safe_exp(self.log_value(r))

    def inner_integral_at_depth(self, w: float) -> float:
        """int_t^R w(s)/s ds at ln ln(1/t) = w (the Dini integral from t to R)."""
        s = math.exp(w) if w < 700 else math.inf
        if s <= S_DEEP_START:
            return self._shallow_inner(s)
        grid, inner = self._deep_grid(w)
        return float(np.interp(w, grid, inner))


def _safe_exp(v: float) -> float:
    if v > 709.0:
        return math.inf
    return math.exp(v)


def x_functional(omega: ModulusFunction, C: float, r: float, R: float = 2.0, density: int = 64) -> float:
    """r int_r^R (w(t)/t^2) exp(C int_t^R w(s)/s ds) dt; +inf on overflow."""
    return XFunctional(omega, C, R, density)(r)


# --------------------------------------------------------------------------
# limsup estimate


CLASSES = ("XZero", "XFinite", "XInfinite", "inconclusive")
TOLERANCE = 0.1
GROWTH = 10.0
TAIL_FRACTION = 0.25


def default_depths(num_deep: int = 48, w_max: float = 1e6) -> np.ndarray:
    """ln ln(1/r) for r = 4^-k, k = 4..24, continued geometrically in depth to w_max."""
    k = np.arange(4, 25)
    shallow = np.log(k * math.log(4.0))
    deep = np.geomspace(shallow[-1], w_max, num_deep + 1)[1:]
    return np.concatenate([shallow, deep])


@dataclass
class DiniReport:
    modulus: str
    c_parameter: float
    R: float
    depths: np.ndarray
    log_x: np.ndarray
    classification: str
    dini_integral: float
    dini_finite: bool
    notes: list = field(default_factory=list)

    @property
    def x_values(self) -> list:
        """(r, X) pairs; r underflows to 0.0 for depths beyond ~6.5."""
        with np.errstate(over="ignore"):
            r = np.exp(-np.exp(np.minimum(self.depths, 700.0)))
        return [(float(a), _safe_exp(float(b))) for a, b in zip(r, self.log_x)]

    def as_dict(self) -> dict:
        return {
            "modulus": self.modulus,
            "C": self.c_parameter,
            "R": self.R,
            "classification": self.classification,
            "diniIntegral": self.dini_integral if self.dini_finite else "inf",
            "diniIntegralLastValue": self.dini_integral,
            "thresholds": {"tolerance": TOLERANCE, "growth": GROWTH, "tailFraction": TAIL_FRACTION},
            "xValues": [
                {"depth": float(w), "lnInvR": _safe_exp(float(w)), "X": x, "lnX": float(lx)}
                for w, (_, x), lx in zip(self.depths, self.x_values, self.log_x)
            ],
            "notes": list(self.notes),
        }


def classify_tail(log_x, tolerance: float = TOLERANCE, growth: float = GROWTH, tail_fraction: float = TAIL_FRACTION) -> str:
    """Trend test on the last ``tail_fraction`` of a sequence of ln X values.

    XZero: tail non-increasing and last < tolerance * first.
    XInfinite: tail non-decreasing and last > growth * first (or +inf).
    XFinite: tail spread below a factor ``growth`` otherwise.
    """
    lx = np.asarray(log_x, dtype=float)
    if lx.size == 0:
        return "inconclusive"
    if np.all(np.isneginf(lx)):
        return "XZero"
    k = max(2, int(math.ceil(lx.size * tail_fraction)))
    tail = lx[-k:]
    if np.any(np.isnan(tail)):
        return "inconclusive"
    fin = np.where(np.isfinite(tail), tail, 0.0)
    slack = 1e-9 * np.maximum(1.0, np.abs(fin))
    with np.errstate(invalid="ignore"):
        d = np.diff(tail)
        change = tail[-1] - tail[0]
    # equal infinities count as no change
    change = 0.0 if np.isnan(change) else change
    d = np.where(np.isnan(d), 0.0, d)
    dec = np.all(d <= slack[1:])
    inc = np.all(d >= -slack[1:])
    if np.all(np.isneginf(tail)) or (dec and change < math.log(tolerance)):
        return "XZero"
    if np.all(np.isposinf(tail)) or (inc and change > math.log(growth)):
        return "XInfinite"
    if np.all(np.isfinite(tail)) and tail.max() - tail.min() < math.log(growth):
        return "XFinite"
    return "inconclusive"


def x_limsup_estimate(
    omega: ModulusFunction, C: float, r_sequence=None, *, depths=None, R: float = 2.0, density: int = 64
) -> DiniReport:
    """Evaluate X(C, .) along a decreasing radius sequence and classify the tail.

    Give either ``r_sequence`` (radii in (0, 1)) or ``depths`` (ln ln(1/r));
    the default is :func:`default_depths`.
    """
    notes = []
    if r_sequence is not None:
        r = np.asarray(r_sequence, dtype=float)
        if np.any(r <= 0) or np.any(r >= 1) or np.any(np.diff(r) >= 0):
            raise ValueError("r_sequence must be decreasing in (0, 1)")
        depths = np.log(np.log(1.0 / r))
    elif depths is None:
        depths = default_depths()
    depths = np.asarray(depths, dtype=float)
    xf = XFunctional(omega, C, R, density)
    if depths.size and depths.max() > math.log(S_FULL) and not omega.is_zero:
        xf._deep_grid(float(depths.max()))
    log_x = np.array([xf.log_at_depth(w) for w in depths])
    if omega.is_zero:
        dini, finite = 0.0, True
    else:
        with np.errstate(over="ignore"):
            I_last = xf.inner_integral_at_depth(float(depths[-1]))
            mid = depths[len(depths) // 2]
            I_mid = xf.inner_integral_at_depth(float(mid))
        dini = I_last
        finite = bool(np.isfinite(I_last) and abs(I_last - I_mid) <= 1e-6 * max(abs(I_last), 1e-300))
    if isinstance(omega, TabulatedModulus) and depths.size and math.exp(-math.exp(min(depths[-1], 700))) < omega.extrapolates_below:
        notes.append(f"tabulated modulus extrapolated below r = {omega.extrapolates_below:.3g}")
    return DiniReport(
        modulus=omega.spec, c_parameter=float(C), R=R, depths=depths, log_x=log_x,
        classification=classify_tail(log_x), dini_integral=float(dini), dini_finite=finite, notes=notes,
    )


# --------------------------------------------------------------------------
# L_a probe


def lemma_ex_probe(a: float, delta: float, r: float, panel: float = 0.25) -> float:
    """r int_r^delta t^-2 (ln 1/t)^(a-1) dt, as int exp(-(s_r - s)) s^(a-1) ds."""
    if not 0 < r < delta < 1:
        raise ValueError("need 0 < r < delta < 1")
    s_d, s_r = math.log(1.0 / delta), math.log(1.0 / r)
    s, w = _gauss_panels(s_d, s_r, panel, order=10)
    return float(np.dot(w, np.exp(-(s_r - s)) * s ** (a - 1.0)))
