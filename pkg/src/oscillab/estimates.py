"""Measured left and right sides of the three mean-oscillation estimates and
of the harmonic-replacement bound, with fitted constants.

The constant in front of each right side is existential, so every report
states the smallest C on a grid (default 1..100) making lhs <= C * rhs(C) at
all scales, together with a stability check under refinement.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dini import ModulusFunction, TabulatedModulus, XFunctional, dini_integral
from .oscillation import CenterStrategy, OscillationProfile, dyadic_radii, modulus_profile
from .quadrature import QuadratureRule, ball_integral, unit_ball_rule

log = logging.getLogger(__name__)

C_CAP = 100.0
DEFAULT_C_GRID = tuple(float(c) for c in np.round(np.geomspace(1.0, C_CAP, 41), 10))
DEFAULT_SCALES = tuple((4.0**-k, 2.0) for k in range(1, 7))
ESTIMATE_RULE = QuadratureRule("productPolar", 4096)
PROFILE_RULE = QuadratureRule("productPolar", 1024)


class UnboundedGradientError(ValueError):
    def __init__(self, message, samples):
        super().__init__(message)
        self.samples = samples


@dataclass
class EstimateReport:
    estimate: str
    scales: list
    lhs: np.ndarray
    rhs_structural: np.ndarray  # rhs(r; C) at the fitted C, without the prefactor
    fitted_c: float
    bounded_flag: bool
    c_grid: tuple = ()
    rhs_grid: np.ndarray | None = None  # (len(c_grid), len(scales)) or None
    required_c: np.ndarray | None = None
    refined_c: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def stability_ratio(self) -> float | None:
        if self.refined_c is None:
            return None
        lo, hi = sorted((self.fitted_c, self.refined_c))
        if hi == 0:
            return 1.0
        return math.inf if lo == 0 else hi / lo

    def ratios(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.rhs_structural > 0, self.lhs / self.rhs_structural, np.where(self.lhs > 0, np.inf, 0.0))

    def rows(self):
        """(r, R, lhs, rhs at each grid C..., ratio at the fitted C)."""
        ratios = self.ratios()
        for j, (r, R) in enumerate(self.scales):
            extra = [] if self.rhs_grid is None else [float(v) for v in self.rhs_grid[:, j]]
            yield (r, R, float(self.lhs[j]), *extra, float(ratios[j]))

    def header(self) -> list:
        extra = [] if self.rhs_grid is None else [f"rhs_C{c:g}" for c in self.c_grid]
        return ["r", "R", "lhs", *extra, "ratio"]

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "scales": [list(s) for s in self.scales],
            "lhs": self.lhs.tolist(),
            "rhsStructural": self.rhs_structural.tolist(),
            "fittedC": self.fitted_c,
            "refinedC": self.refined_c,
            "stabilityRatio": self.stability_ratio,
            "boundedFlag": self.bounded_flag,
            "requiredC": None if self.required_c is None else self.required_c.tolist(),
            "meta": self.meta,
        }


# --------------------------------------------------------------------------
# helpers


def _check_scales(scales):
    scales = [(float(r), float(R)) for r, R in scales]
    for r, R in scales:
        if not 0 < r <= R / 4 or R > 2:
            raise ValueError(f"scale (r={r}, R={R}) violates 0 < r <= R/4 <= 1/2")
    return scales


def _grad_flat(u):
    def g(x):
        return np.asarray(u.gradient(x), dtype=float).reshape(np.shape(x)[0], -1)

    return g


def grad_energy(u, r: float, rule: QuadratureRule = ESTIMATE_RULE, n: int = 2) -> float:
    g = _grad_flat(u)
    return float(ball_integral(lambda x: np.sum(g(x) ** 2, axis=1), np.zeros(n), r, rule))


def grad_oscillation_energy(u, r: float, rule: QuadratureRule = ESTIMATE_RULE, n: int = 2) -> float:
    """int_{B_r} |grad u - (grad u)_r|^2 on the rule's nodes."""
    x, w = rule.nodes(np.zeros(n), r)
    vals = _grad_flat(u)(x)
    vals = vals - vals[:1]  # exact zero for constant gradients
    mean = w @ vals / w.sum()
    return float(w @ np.sum((vals - mean) ** 2, axis=1))


def coefficient_modulus(A, rule: QuadratureRule = PROFILE_RULE, k_max: int = 16, window: float = 4.0) -> TabulatedModulus:
    """Tabulated omega_{A,2} on r = 2^-k, k = 0..k_max, centers near the origin."""
    radii = dyadic_radii(k_max=k_max, k_min=-1)
    prof = modulus_profile(A, radii, 2.0, CenterStrategy(window=window), rule)
    return prof.as_modulus()


def _as_modulus(omega) -> ModulusFunction:
    if isinstance(omega, OscillationProfile):
        return omega.as_modulus()
    if isinstance(omega, ModulusFunction):
        return omega
    if hasattr(omega, "N"):
        return coefficient_modulus(omega)
    raise TypeError("omega must be a ModulusFunction, an OscillationProfile or a CoefficientField")


def _dini(omega, a, b):
    if a >= b or omega.is_zero:
        return 0.0
    return dini_integral(omega, a, b, density=32)


def _brace(omega, C, r, R):
    """int_{2r}^R w(t)/t^2 exp(C int_t^R w/s ds) dt."""
    if omega.is_zero:
        return 0.0
    return XFunctional(omega, C, R, density=64)(2 * r) / (2 * r)


def _fit(lhs, rhs_of_c, c_grid, rel=1e-9):
    """Smallest grid C with lhs <= C rhs(C) (rhs non-decreasing in C); inf if none."""
    for c in c_grid:
        rhs = rhs_of_c(c)
        if np.all(lhs <= c * rhs * (1 + rel) + 1e-300):
            return c, rhs
    return math.inf, rhs_of_c(c_grid[-1])


def _not_growing(required, slack=0.02):
    """True if the smallest-scale requirement does not exceed the largest earlier one."""
    required = np.asarray(required, dtype=float)
    if required.size < 2:
        return bool(np.all(np.isfinite(required)))
    return bool(np.isfinite(required).all() and required[-1] <= (1 + slack) * required[:-1].max())


# --------------------------------------------------------------------------
# the three estimates


def _est1_core(u, omega, scales, c_grid, rule, n):
    lhs = np.array([grad_energy(u, r, rule, n) for r, _ in scales])
    energy_R = {R: grad_energy(u, R, rule, n) for R in {R for _, R in scales}}
    base = np.array([(r / R) ** n * energy_R[R] for r, R in scales])
    integ = np.array([_dini(omega, 2 * r, R) for r, R in scales])

    def rhs(c):
        with np.errstate(over="ignore"):
            return base * np.exp(2 * c * integ)

    required = []
    for L, b, I in zip(lhs, base, integ):
        q = L / b if b > 0 else (0.0 if L == 0 else math.inf)
        required.append(_solve_required(q, 2 * I))
    return lhs, rhs, np.array(required)


def _solve_required(q, k):
    """Smallest C > 0 with C exp(k C) >= q."""
    if q <= 0:
        return 0.0
    if not math.isfinite(q):
        return math.inf
    if k == 0:
        return q
    from scipy.optimize import brentq

    f = lambda c: math.log(c) + k * c - math.log(q)
    hi = max(1.0, q)
    return brentq(f, 1e-300, hi) if f(hi) >= 0 else hi


def est1_report(
    u, omega, scales=DEFAULT_SCALES, c_grid=DEFAULT_C_GRID, rule: QuadratureRule = ESTIMATE_RULE,
    n: int = 2, refine: bool = True, c_cap: float = C_CAP,
) -> EstimateReport:
    """lhs = int_{B_r}|grad u|^2 against C (r/R)^n exp(2C int_{2r}^R w/t) int_{B_R}|grad u|^2.

    The same C multiplies and sits in the exponent.  ``bounded_flag`` also
    requires the per-scale C needed at the smallest r not to exceed the
    largest need at the coarser scales; with w = 0 and an unbounded gradient
    the need keeps growing and the flag drops.
    """
    scales = _check_scales(scales)
    omega = _as_modulus(omega)
    lhs, rhs, required = _est1_core(u, omega, scales, c_grid, rule, n)
    c, rhs_c = _fit(lhs, rhs, c_grid)
    refined = None
    if refine:
        lhs2, rhs2, _ = _est1_core(u, omega, scales, c_grid, rule.refined(2), n)
        refined, _ = _fit(lhs2, rhs2, c_grid)
    ok = bool(c <= c_cap and _not_growing(required))
    if refined is not None:
        ok = ok and _stable(c, refined)
    return EstimateReport(
        estimate="Est1", scales=scales, lhs=lhs, rhs_structural=rhs_c, fitted_c=c, bounded_flag=ok,
        c_grid=tuple(c_grid), rhs_grid=np.array([rhs(cc) for cc in c_grid]), required_c=required,
        refined_c=refined, meta={"modulus": omega.spec, "quadrature": rule.kind, "points": rule.points},
    )


def _stable(a, b, factor=2.0):
    if not (math.isfinite(a) and math.isfinite(b)):
        return False
    lo, hi = sorted((a, b))
    return hi == 0 or (lo > 0 and hi / lo <= factor)


def _est2_core(u, omega, scales, rule, n):
    lhs = np.array([grad_oscillation_energy(u, r, rule, n) for r, _ in scales])
    energy_R = {R: grad_energy(u, R, rule, n) for R in {R for _, R in scales}}
    base = np.array([r ** (n + 2) / R**n * energy_R[R] for r, R in scales])

    def rhs(c):
        br = np.array([_brace(omega, c, r, R) for r, R in scales])
        with np.errstate(over="ignore"):
            return base * br**2

    return lhs, rhs


def est2_report(
    u, omega, scales=DEFAULT_SCALES, c_grid=DEFAULT_C_GRID, rule: QuadratureRule = ESTIMATE_RULE,
    n: int = 2, refine: bool = True, c_cap: float = C_CAP,
) -> EstimateReport:
    """lhs = int_{B_r}|grad u - (grad u)_r|^2 against
    C r^(n+2)/R^n int_{B_R}|grad u|^2 {int_{2r}^R w/t^2 exp(C int_t^R w/s) dt}^2."""
    scales = _check_scales(scales)
    omega = _as_modulus(omega)
    lhs, rhs = _est2_core(u, omega, scales, rule, n)
    c, rhs_c = _fit(lhs, rhs, c_grid)
    refined = None
    if refine:
        lhs2, rhs2 = _est2_core(u, omega, scales, rule.refined(2), n)
        refined, _ = _fit(lhs2, rhs2, c_grid)
    ok = bool(c <= c_cap and (refined is None or _stable(c, refined)))
    with np.errstate(divide="ignore", invalid="ignore"):
        req = np.array([_required_grid(L, rhs, c_grid, j) for j, L in enumerate(lhs)])
    return EstimateReport(
        estimate="Est2", scales=scales, lhs=lhs, rhs_structural=rhs_c, fitted_c=c, bounded_flag=ok,
        c_grid=tuple(c_grid), rhs_grid=np.array([rhs(cc) for cc in c_grid]), required_c=req,
        refined_c=refined, meta={"modulus": omega.spec, "quadrature": rule.kind, "points": rule.points},
    )


def _required_grid(L, rhs, c_grid, j):
    for c in c_grid:
        if L <= c * rhs(c)[j] * (1 + 1e-9):
            return c
    return math.inf


def gradient_probe(u, k_max: int = 300, n: int = 2) -> np.ndarray:
    """|grad u(10^-k e_1)| for k = 3..k_max."""
    x = np.zeros((k_max - 2, n))
    x[:, 0] = 10.0 ** -np.arange(3, k_max + 1, dtype=float)
    return np.linalg.norm(_grad_flat(u)(x), axis=1)


def require_bounded_gradient(u, n: int = 2, growth: float = 1.5) -> np.ndarray:
    """Reject a solution whose gradient grows monotonically toward the origin."""
    probe = gradient_probe(u, n=n)
    if not np.all(np.isfinite(probe)):
        raise UnboundedGradientError("gradient is not finite near the origin", probe)
    rising = np.all(np.diff(probe) >= -1e-12 * np.abs(probe[1:]))
    if rising and probe[-1] > growth * probe[0]:
        raise UnboundedGradientError(
            f"|grad u(10^-k e_1)| rises monotonically from {probe[0]:.4g} (k=3) to {probe[-1]:.4g} (k=300); "
            "the gradient is not bounded, so the sup-norm estimate does not apply",
            probe,
        )
    return probe


def grad_sup(u, R: float, n: int = 2, points: int = 16384) -> float:
    x, _ = unit_ball_rule("lowDiscrepancy", points, 0, n)
    line = np.zeros((400, n))
    line[:, 0] = np.geomspace(1e-12, R, 400)
    pts = np.vstack([R * np.asarray(x), line])
    pts = pts[np.linalg.norm(pts, axis=1) > 0]
    return float(np.max(np.linalg.norm(_grad_flat(u)(pts), axis=1)))


def _est3_core(u, omega, scales, rule, n):
    lhs = np.array([grad_oscillation_energy(u, r, rule, n) for r, _ in scales])
    sup_R = {R: grad_sup(u, R, n) for R in {R for _, R in scales}}
    rhs = np.array([r ** (n + 2) / R**n * _brace(omega, 0.0, r, R) ** 2 * sup_R[R] ** 2 for r, R in scales])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    return lhs, rhs, float(ratio.max()) if ratio.size else 0.0


def est3_report(
    u, omega, scales=DEFAULT_SCALES, rule: QuadratureRule = ESTIMATE_RULE, n: int = 2, refine: bool = True,
    c_cap: float = C_CAP,
) -> EstimateReport:
    """lhs = int_{B_r}|grad u - (grad u)_r|^2 against C r^(n+2)/R^n {int_{2r}^R w/t^2}^2 sup_{B_R}|grad u|^2.

    Raises UnboundedGradientError when the gradient probe grows toward the origin.
    """
    scales = _check_scales(scales)
    require_bounded_gradient(u, n)
    omega = _as_modulus(omega)
    lhs, rhs, c = _est3_core(u, omega, scales, rule, n)
    refined = None
    if refine:
        _, _, refined = _est3_core(u, omega, scales, rule.refined(2), n)
    ok = bool(c <= c_cap and (refined is None or _stable(c, refined)))
    return EstimateReport(
        estimate="Est3", scales=scales, lhs=lhs, rhs_structural=rhs, fitted_c=c, bounded_flag=ok,
        refined_c=refined, meta={"modulus": omega.spec, "quadrature": rule.kind, "points": rule.points},
    )


# --------------------------------------------------------------------------
# harmonic replacement sweeps


def _perturbation(x, R):
    s = x / R
    p11 = np.cos(s[:, 0])
    p22 = np.cos(s[:, 1])
    p12 = 0.5 * np.sin(s[:, 0] + s[:, 1])
    return np.stack([np.stack([p11, p12], -1), np.stack([p12, p22], -1)], -2)


def _forcing(x, R):
    s = x / R
    return np.stack([np.sin(s[:, 0] + 0.3) * np.cos(s[:, 1]), np.cos(2 * s[:, 0] - s[:, 1])], -1)


def _boundary(x):
    return x[:, 0] + 0.5 * x[:, 1] ** 2 - 0.3 * x[:, 0] * x[:, 1] + np.sin(x[:, 0])


HREP_ABAR = np.array([[2.0, 0.3], [0.3, 1.0]])


def hrep_sweep(kind: str = "coefficient", eps=(1e-1, 1e-2, 1e-3), cells=(64, 128), R: float = 1.0, tol: float = 1e-11) -> list:
    """Run the perturbation (A = Abar + eps P) or forcing (f = eps F) sweep.

    Returns dicts with eps, cells, lhs (gradient error on B_{3R/2}) and rhs
    (the structural bracket).
    """
    from .solver import harmonic_replacement, solve_on_ball

    if kind not in ("coefficient", "forcing", "none"):
        raise ValueError("kind must be 'coefficient', 'forcing' or 'none'")
    out = []
    for m in cells:
        for e in eps:
            if kind == "coefficient":
                A = lambda x, e=e: HREP_ABAR + e * _perturbation(x, R)
                f = None
            elif kind == "forcing":
                A = HREP_ABAR
                f = lambda x, e=e: e * _forcing(x, R)
            else:
                A, f = HREP_ABAR, None
            u = solve_on_ball(A, _boundary, R, f=f, cells=m, tol=tol)
            rec = harmonic_replacement(u, A, HREP_ABAR, R, f=f, cells=m, tol=tol)
            out.append({"kind": kind, "eps": e, "cells": m, "lhs": rec.err_grad_l2, "rhs": rec.rhs_bracket})
    return out


def sweep_slope(sweep: list, cells: int | None = None) -> float:
    rows = [s for s in sweep if cells is None or s["cells"] == cells]
    e = np.log([s["eps"] for s in rows])
    v = np.log([s["lhs"] for s in rows])
    return float(np.polyfit(e, v, 1)[0])


def hrep_report(sweep: list, c_cap: float = C_CAP) -> EstimateReport:
    """fittedC = max lhs/rhs on the finest grid; stability compares against the coarsest."""
    if not sweep:
        raise ValueError("empty sweep")
    grids = sorted({s["cells"] for s in sweep})

    def fit(m):
        ratios = [s["lhs"] / s["rhs"] if s["rhs"] > 0 else (0.0 if s["lhs"] == 0 else math.inf)
                  for s in sweep if s["cells"] == m]
        return max(ratios)

    fine = [s for s in sweep if s["cells"] == grids[-1]]
    c_fine, c_coarse = fit(grids[-1]), fit(grids[0])
    stable = len(grids) > 1 and _stable(c_fine, c_coarse)
    slopes = {m: sweep_slope(sweep, m) for m in grids} if all(s["lhs"] > 0 for s in sweep) else {}
    return EstimateReport(
        estimate="HRep", scales=[(s["eps"], s["cells"]) for s in fine], lhs=np.array([s["lhs"] for s in fine]),
        rhs_structural=np.array([s["rhs"] for s in fine]), fitted_c=c_fine,
        bounded_flag=bool(c_fine <= c_cap and (stable or len(grids) == 1)),
        refined_c=c_coarse if len(grids) > 1 else None,
        meta={"kind": fine[0]["kind"], "cells": grids, "slopes": {str(k): v for k, v in slopes.items()}},
    )
