"""Ball averages and mean-oscillation moduli.

The supremum over centers in B_2 is approximated on a finite center grid, so
every profile is a lower bound for the true modulus; the center grid is
recorded with the profile.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .quadrature import ORIGIN_EXCLUSION, QuadratureError, QuadratureRule, evaluate_on_nodes, unit_ball_rule

CHUNK_POINTS = 1 << 20
DEFAULT_RULE = QuadratureRule("productPolar")


def thread_count() -> int:
    raw = os.environ.get("OSCILLAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


@dataclass(frozen=True)
class BallSpec:
    center: tuple
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        if np.linalg.norm(c) + self.radius > 4.0 * (1 + 1e-12):
            raise ValueError("ball must lie inside B_4")

    @property
    def n(self) -> int:
        return len(self.center)


@dataclass(frozen=True)
class CenterStrategy:
    """Centers on a cubic grid of spacing ``spacing * r``.

    ``window`` restricts the grid to B_{window * r}(focus); ``None`` means all
    of B_2.  If the grid would exceed ``max_centers`` the spacing is widened.
    """

    kind: str = "supOverCenters"
    spacing: float = 0.5
    window: float | None = None
    focus: tuple | None = None
    max_centers: int = 4096
    domain: float = 2.0

    def __post_init__(self):
        if self.kind not in ("supOverCenters", "originOnly"):
            raise ValueError(f"unknown center strategy {self.kind!r}")

    def centers(self, n: int, r: float) -> tuple[np.ndarray, float]:
        focus = np.zeros(n) if self.focus is None else np.asarray(self.focus, dtype=float)
        if self.kind == "originOnly":
            return np.zeros((1, n)), 0.0
        reach = self.domain if self.window is None else min(self.domain + np.linalg.norm(focus), self.window * r)
        h = self.spacing * r
        while True:
            m = int(math.floor(reach / h))
            ticks = np.arange(-m, m + 1) * h
            pts = np.array(list(product(ticks, repeat=n))) + focus if m > 0 else focus[None, :]
            keep = (np.linalg.norm(pts - focus, axis=1) <= reach + 1e-12) & (np.linalg.norm(pts, axis=1) <= self.domain + 1e-12)
            pts = pts[keep]
            if pts.shape[0] <= self.max_centers:
                break
            h *= 1.25
        if pts.shape[0] == 0:
            pts = np.zeros((1, n))
        return pts, h / r

    def describe(self) -> dict:
        return {
            "kind": self.kind, "spacing": self.spacing, "window": self.window,
            "focus": None if self.focus is None else list(self.focus), "maxCenters": self.max_centers,
        }


ORIGIN_ONLY = CenterStrategy("originOnly")


# --------------------------------------------------------------------------
# single balls


def _ball_values(field_fn, ball: BallSpec, rule: QuadratureRule):
    x, w = rule.nodes(np.asarray(ball.center), ball.radius)
    if w.size == 0:
        raise QuadratureError("quadrature rule has no points")
    vals = evaluate_on_nodes(field_fn, x, ball.radius)
    return vals, w


def ball_average(field_fn, ball: BallSpec, rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
    """|B_r|^-1 int_{B_r(x)} field, same trailing shape as the field."""
    vals, w = _ball_values(field_fn, ball, rule)
    return np.tensordot(w, vals, axes=(0, 0)) / w.sum()


def mean_oscillation_at(field_fn, ball: BallSpec, p: float = 2.0, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """(|B_r|^-1 int |f - (f)_B|^p)^(1/p) with |.| the Frobenius norm of the value."""
    if p < 1:
        raise ValueError("p must be >= 1")
    vals, w = _ball_values(field_fn, ball, rule)
    flat = vals.reshape(vals.shape[0], -1)
    return float(_oscillation(flat[None], w[None], p)[0])


def _oscillation(vals, w, p):
    """vals (K, M, D), w (K, M) -> (K,) L^p oscillation around the weighted mean."""
    tot = w.sum(axis=1)
    # centring on one node first makes constants oscillate by exactly 0
    vals = vals - vals[:, :1, :]
    mean = np.einsum("km,kmd->kd", w, vals) / tot[:, None]
    dev = np.sqrt(np.sum((vals - mean[:, None, :]) ** 2, axis=-1))
    if p == 2.0:
        return np.sqrt(np.einsum("km,km->k", w, dev * dev) / tot)
    return (np.einsum("km,km->k", w, dev**p) / tot) ** (1.0 / p)


def _center_batches(field_fn, centers, r, rule):
    """Yield (slice, values (K, M, D), weights (K, M)) over chunks of centers."""
    n = centers.shape[1]
    ref_x, ref_w = unit_ball_rule(rule.kind, rule.count_for(r), rule.seed, n)
    M = ref_x.shape[0]
    step = max(1, CHUNK_POINTS // M)
    for lo in range(0, centers.shape[0], step):
        c = centers[lo : lo + step]
        pts = c[:, None, :] + r * ref_x[None, :, :]
        w = np.broadcast_to(ref_w * r**n, (c.shape[0], M)).copy()
        w[np.linalg.norm(pts, axis=-1) < ORIGIN_EXCLUSION] = 0.0
        vals = evaluate_on_nodes(field_fn, pts.reshape(-1, n), r)
        vals = vals.reshape(c.shape[0], M, -1)
        yield slice(lo, lo + c.shape[0]), vals, w


# --------------------------------------------------------------------------
# profiles


@dataclass
class OscillationProfile:
    p: float
    radii: np.ndarray
    values: np.ndarray
    centers_tried: np.ndarray
    estimator: str
    argmax_centers: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.centers_tried = np.asarray(self.centers_tried, dtype=int)

    def doubling_constant(self, two_sided: bool = False) -> float:
        """Smallest C >= 1 with values(t) <= C values(s) for all grid pairs t <= s <= 4t.

        ``two_sided`` also bounds values(s) by C values(t) on the same pairs.
        """
        best = 1.0
        for i, t in enumerate(self.radii):
            for j, s in enumerate(self.radii):
                if not (t <= s <= 4 * t and i != j):
                    continue
                pairs = [(i, j), (j, i)] if two_sided else [(i, j)]
                for a, b in ((self.values[x], self.values[y]) for x, y in pairs):
                    if a > 0:
                        best = max(best, math.inf if b == 0 else a / b)
        return best

    def bmo_seminorm(self) -> float:
        return float(np.max(self.values)) if self.values.size else 0.0

    def vmo_trend(self) -> bool:
        """Tail (smallest half of the radii) non-increasing within 1e-3 and strictly lower at the end."""
        order = np.argsort(-self.radii)
        v = self.values[order]
        if v.size < 2:
            return False
        tail = v[(v.size - 1) // 2 :]
        if np.all(tail == 0):
            return True
        return bool(np.all(np.diff(tail) <= 1e-3 * tail[:-1]) and tail[-1] < tail[0])

    def as_modulus(self):
        from .dini import TabulatedModulus

        return TabulatedModulus.from_profile(self)

    def rows(self):
        for r, v, c in zip(self.radii, self.values, self.centers_tried):
            yield (float(r), float(v), int(c), self.estimator)

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "estimator": self.estimator,
            "radii": [float(r) for r in self.radii],
            "values": [float(v) for v in self.values],
            "centersTried": [int(c) for c in self.centers_tried],
            "argmaxCenters": [[float(c) for c in row] for row in self.argmax_centers],
            "doublingConstant": self.doubling_constant(),
            "bmoEstimate": self.bmo_seminorm(),
            "vmoTrend": self.vmo_trend(),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def dyadic_radii(k_max: int = 16, k_min: int = 0, base: float = 2.0) -> np.ndarray:
    return base ** -np.arange(k_min, k_max + 1, dtype=float)


def _check_radii(radii):
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(radii <= 0) or np.any(radii > 2.0 * (1 + 1e-12)):
        raise ValueError("radii must be a non-empty list in (0, 2]")
    return radii


def _profile_one(field_fn, r, p, strategy, rule, n, mode):
    centers, eff = strategy.centers(n, r)
    best, arg = -1.0, centers[0]
    for sl, vals, w in _center_batches(field_fn, centers, r, rule):
        if mode == "osc":
            osc = _oscillation(vals, w, p)
        else:
            at_center = np.asarray(field_fn(centers[sl]), dtype=float).reshape(vals.shape[0], 1, -1)
            dev = np.sqrt(np.sum((vals - at_center) ** 2, axis=-1))
            if mode == "pointwiseL2":
                osc = np.sqrt(np.einsum("km,km->k", w, dev * dev) / w.sum(axis=1))
            else:
                osc = np.max(np.where(w > 0, dev, 0.0), axis=1)
        k = int(np.argmax(osc))
        if osc[k] > best:
            best, arg = float(osc[k]), centers[sl][k]
    return best, centers.shape[0], arg, eff


def _run_profile(field_fn, radii, p, strategy, rule, n, mode, estimator, meta):
    radii = _check_radii(radii)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        out = list(pool.map(lambda r: _profile_one(field_fn, r, p, strategy, rule, n, mode), radii))
    meta = dict(meta)
    meta.update(
        rule={"kind": rule.kind, "points": rule.points, "seed": rule.seed},
        centers=strategy.describe(),
        effectiveSpacing=[o[3] for o in out],
    )
    return OscillationProfile(
        p=p, radii=radii, values=np.array([o[0] for o in out]), centers_tried=np.array([o[1] for o in out]),
        estimator=estimator, argmax_centers=np.array([o[2] for o in out]), meta=meta,
    )


def _dimension(field_fn, n):
    if n is not None:
        return n
    return getattr(field_fn, "n", 2)


def modulus_profile(
    field_fn, radii, p: float = 2.0, center_strategy: CenterStrategy = CenterStrategy(),
    rule: QuadratureRule = DEFAULT_RULE, n: int | None = None,
) -> OscillationProfile:
    """omega_{f,p}(r) for each radius: sup over tried centers of the L^p mean oscillation."""
    if p < 1:
        raise ValueError("p must be >= 1")
    est = "originOnly" if center_strategy.kind == "originOnly" else "supOverCenters"
    return _run_profile(field_fn, radii, p, center_strategy, rule, _dimension(field_fn, n), "osc", est,
                        {"quantity": "omega_p", "field": getattr(field_fn, "name", "custom")})


def sup_modulus(
    field_fn, radii, kind: str = "uniform", center_strategy: CenterStrategy = CenterStrategy(),
    rule: QuadratureRule = DEFAULT_RULE, n: int | None = None,
) -> OscillationProfile:
    """Uniform modulus (sup |f(x) - f(y)| over sampled pairs |x - y| < r) or the
    pointwise L^2 modulus (sup_x of the L^2 average of |f(y) - f(x)| on B_r(x)).

    Pairs are (center, node) with centers from the strategy and nodes from the
    rule on B_r(center), so both are lower bounds of the true suprema and are
    computed on exactly the nodes used by :func:`modulus_profile`.
    """
    if kind not in ("uniform", "pointwiseL2"):
        raise ValueError("kind must be 'uniform' or 'pointwiseL2'")
    est = "originOnly" if center_strategy.kind == "originOnly" else "supOverCenters"
    return _run_profile(field_fn, radii, 2.0, center_strategy, rule, _dimension(field_fn, n), kind, est,
                        {"quantity": kind, "field": getattr(field_fn, "name", "custom")})


def gradient_oscillation_profile(
    u, radii, p: float = 2.0, center_strategy: CenterStrategy = ORIGIN_ONLY,
    rule: QuadratureRule = DEFAULT_RULE, n: int = 2,
) -> OscillationProfile:
    """Mean-oscillation profile of grad u; see ``bmo_seminorm`` and ``vmo_trend``."""
    prof = modulus_profile(u.gradient, radii, p, center_strategy, rule, n=n)
    prof.meta["quantity"] = "gradient_oscillation"
    prof.meta["field"] = getattr(u, "name", "custom")
    return prof
