"""Quadrature rules on balls B_r(x) in R^n.

Every rule is built once on the unit ball and rescaled, so weights always sum
to |B_r| exactly (up to rounding).  Three kinds are supported:

- ``productPolar``: Gauss-Jacobi in the radius (weight rho^(n-1)) times a
  uniform angular rule.  n = 2 and n = 3 only; other n fall back to
  ``lowDiscrepancy``.
- ``quasiUniformGrid``: cell midpoints of a cubic lattice clipped to the ball,
  equal weights.
- ``lowDiscrepancy``: scrambled Sobol points pushed onto the ball by an
  equal-volume map, equal weights.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.stats import qmc

log = logging.getLogger(__name__)

KINDS = ("productPolar", "quasiUniformGrid", "lowDiscrepancy")
MIN_POINTS = 256
MAX_POINTS = 2**16
ORIGIN_EXCLUSION = 1e-12


class QuadratureError(ValueError):
    pass


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def default_points(radius: float) -> int:
    """max(256, 64/r), capped at 2**16."""
    return int(min(MAX_POINTS, max(MIN_POINTS, math.ceil(64.0 / radius))))


@dataclass(frozen=True)
class QuadratureRule:
    kind: str = "productPolar"
    points: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise QuadratureError(f"unknown quadrature kind {self.kind!r}")
        if self.points is not None and self.points < 1:
            raise QuadratureError("quadrature needs at least one point")

    def count_for(self, radius: float) -> int:
        return self.points if self.points is not None else default_points(radius)

    def refined(self, factor: int = 2) -> "QuadratureRule":
        base = self.points if self.points is not None else MIN_POINTS
        return QuadratureRule(self.kind, min(MAX_POINTS * 4, base * factor), self.seed)

    def nodes(self, center, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes of shape (M, n) and weights of shape (M,) on B_radius(center)."""
        center = np.asarray(center, dtype=float)
        n = center.shape[-1]
        ref_x, ref_w = unit_ball_rule(self.kind, self.count_for(radius), self.seed, n)
        x = center + radius * ref_x
        w = ref_w * radius**n
        return _exclude_origin(x, w)


def _exclude_origin(x, w):
    near = np.linalg.norm(x, axis=-1) < ORIGIN_EXCLUSION
    if not near.any():
        return x, w
    total = w.sum()
    x, w = x[~near], w[~near]
    if w.size == 0:
        raise QuadratureError("every quadrature node fell on the origin")
    return x, w * (total / w.sum())


@lru_cache(maxsize=128)
def unit_ball_rule(kind: str, points: int, seed: int, n: int):
    if points < 1:
        raise QuadratureError("quadrature needs at least one point")
    if kind == "productPolar" and n in (2, 3):
        x, w = _polar(points, n)
    elif kind == "quasiUniformGrid":
        x, w = _grid(points, n)
    else:
        x, w = _sobol(points, seed, n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _radial(nr: int, n: int):
    # int_0^1 f(rho) rho^(n-1) drho = 2^-n sum w_i f((1+x_i)/2)
    xi, wi = special.roots_jacobi(nr, 0.0, n - 1.0)
    return (1.0 + xi) / 2.0, wi / 2.0**n


def _polar(points: int, n: int):
    if n == 2:
        nr = max(2, int(round(math.sqrt(points / 4.0))))
        na = max(4, int(math.ceil(points / nr)))
        rho, wr = _radial(nr, 2)
        theta = 2 * np.pi * (np.arange(na) + 0.5) / na
        R, T = np.meshgrid(rho, theta, indexing="ij")
        W = np.outer(wr, np.full(na, 2 * np.pi / na))
        x = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
        return x, W.ravel()
    nr = max(2, int(round((points / 8.0) ** (1 / 3))))
    npol = max(2, int(round(math.sqrt(points / (2.0 * nr)))))
    naz = max(4, int(math.ceil(points / (nr * npol))))
    rho, wr = _radial(nr, 3)
    ct, wt = np.polynomial.legendre.leggauss(npol)
    phi = 2 * np.pi * (np.arange(naz) + 0.5) / naz
    R, C, P = np.meshgrid(rho, ct, phi, indexing="ij")
    S = np.sqrt(1.0 - C**2)
    x = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C], axis=-1).reshape(-1, 3)
    W = wr[:, None, None] * wt[None, :, None] * np.full(naz, 2 * np.pi / naz)[None, None, :]
    return x, W.ravel()


def _grid(points: int, n: int):
    vol = unit_ball_volume(n)
    h = (vol / points) ** (1.0 / n)
    m = int(math.ceil(1.0 / h))
    ticks = (np.arange(-m, m) + 0.5) * h
    mesh = np.stack(np.meshgrid(*([ticks] * n), indexing="ij"), axis=-1).reshape(-1, n)
    x = mesh[np.linalg.norm(mesh, axis=1) <= 1.0]
    if x.shape[0] == 0:
        x = np.zeros((1, n))
    return x, np.full(x.shape[0], vol / x.shape[0])


def _sobol(points: int, seed: int, n: int):
    d = 2 if n == 2 else n + 1
    m = max(1, int(math.ceil(math.log2(points))))
    u = qmc.Sobol(d=d, scramble=True, seed=seed).random_base2(m)
    u = np.clip(u, 1e-15, 1 - 1e-15)
    if n == 2:
        rho = np.sqrt(u[:, 0])
        th = 2 * np.pi * u[:, 1]
        x = np.stack([rho * np.cos(th), rho * np.sin(th)], axis=-1)
    else:
        g = special.ndtri(u[:, :n])
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        x = g * u[:, n : n + 1] ** (1.0 / n)
    return x, np.full(x.shape[0], unit_ball_volume(n) / x.shape[0])


def evaluate_on_nodes(field, x: np.ndarray, radius: float) -> np.ndarray:
    """Evaluate ``field`` on nodes, nudging any node where it is not finite.

    The nudge is 1e-9 * radius along the first axis, away from the origin;
    it is logged because it means the field is singular on a node.
    """
    vals = np.asarray(field(x), dtype=float)
    flat = vals.reshape(vals.shape[0], -1)
    bad = ~np.isfinite(flat).all(axis=1)
    if bad.any():
        log.warning("field not finite on %d quadrature node(s); perturbing", int(bad.sum()))
        xb = x[bad].copy()
        step = 1e-9 * radius
        xb[:, 0] += np.where(xb[:, 0] >= 0, step, -step)
        fixed = np.asarray(field(xb), dtype=float)
        if not np.isfinite(fixed).all():
            raise QuadratureError("field is not finite near a quadrature node even after perturbation")
        vals = vals.copy()
        vals[bad] = fixed
    return vals


def ball_integral(field, center, radius: float, rule: QuadratureRule) -> np.ndarray:
    x, w = rule.nodes(center, radius)
    vals = evaluate_on_nodes(field, x, radius)
    return np.tensordot(w, vals, axes=(0, 0))
