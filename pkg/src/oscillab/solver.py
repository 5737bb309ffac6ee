"""Bilinear finite elements for div(A grad u) = div f on squares, and the
dyadic harmonic-replacement cascade.

Scope is n = 2, N = 1.  A Dirichlet problem on the ball B_{2R} is posed on the
circumscribed square [-2R, 2R]^2 with the boundary trace of the supplied
field; norms are integrated over the inscribed balls only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .quadrature import QuadratureRule
from .oscillation import BallSpec, ball_average

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, iterations, residual):
        super().__init__(f"CG did not converge: {iterations} iterations, relative residual {residual:.3e}")
        self.iterations = iterations
        self.residual = residual


class EllipticityError(SolverError):
    pass


# --------------------------------------------------------------------------
# grid and reference element

_GP2 = np.array([0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)])
# local node order: (0,0), (1,0), (0,1), (1,1) in (xi, eta)
_LOCAL = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])


def _shape(xi, eta):
    """Q1 shape values (..., 4) and reference gradients (..., 2, 4)."""
    xi, eta = np.asarray(xi), np.asarray(eta)
    N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=-1)
    dxi = np.stack([-(1 - eta), (1 - eta), -eta, eta], axis=-1)
    deta = np.stack([-(1 - xi), -xi, (1 - xi), xi], axis=-1)
    return N, np.stack([dxi, deta], axis=-2)


def _gauss_unit(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1), 0.5 * w


def _reference_stiffness():
    """S[a, b] = int_{[0,1]^2} dphi/dxi_a (x) dphi/dxi_b (4 x 4 blocks)."""
    S = np.zeros((2, 2, 4, 4))
    for xi in _GP2:
        for eta in _GP2:
            _, G = _shape(xi, eta)
            S += 0.25 * np.einsum("ai,bj->abij", G, G)
    return S


_S_REF = _reference_stiffness()


@dataclass(frozen=True)
class Grid:
    """Square [cx - H, cx + H] x [cy - H, cy + H] with ``cells`` per side."""

    cells: int
    half_side: float = 1.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.cells < 2 or self.cells & (self.cells - 1):
            raise ValueError("cells per side must be a power of two >= 2")

    @classmethod
    def for_ball(cls, radius: float, cells: int = 256) -> "Grid":
        return cls(cells=cells, half_side=radius)

    @property
    def h(self) -> float:
        return 2 * self.half_side / self.cells

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.center) - self.half_side

    @property
    def n_nodes(self) -> int:
        return (self.cells + 1) ** 2

    def node_coords(self) -> np.ndarray:
        t = np.arange(self.cells + 1) * self.h
        X, Y = np.meshgrid(self.origin[0] + t, self.origin[1] + t, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def node_index(self, i, j):
        return np.asarray(i) * (self.cells + 1) + np.asarray(j)

    def element_nodes(self) -> np.ndarray:
        m = self.cells
        I, J = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        I, J = I.ravel(), J.ravel()
        return np.stack([self.node_index(I + a, J + b) for a, b in _LOCAL], axis=-1)

    def element_centers(self) -> np.ndarray:
        t = (np.arange(self.cells) + 0.5) * self.h
        X, Y = np.meshgrid(self.origin[0] + t, self.origin[1] + t, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def boundary_mask(self) -> np.ndarray:
        m = self.cells
        I, J = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        return ((I == 0) | (I == m) | (J == 0) | (J == m)).ravel()

    def gauss_points(self, order: int = 4, elements=None):
        """Physical Gauss points (E, q, 2), weights (q,) and reference coords (q, 2)."""
        g, w = _gauss_unit(order)
        XI, ETA = np.meshgrid(g, g, indexing="ij")
        ref = np.stack([XI.ravel(), ETA.ravel()], axis=-1)
        W = np.outer(w, w).ravel() * self.h**2
        lower = self.element_centers() - 0.5 * self.h
        if elements is not None:
            lower = lower[elements]
        pts = lower[:, None, :] + self.h * ref[None, :, :]
        return pts, W, ref

    def elements_near_ball(self, radius: float) -> np.ndarray:
        c = self.element_centers()
        return np.nonzero(np.linalg.norm(c, axis=1) <= radius + self.h)[0]


# --------------------------------------------------------------------------
# problem, solution


def _as_matrix_field(coefficient) -> Callable:
    """Accept a CoefficientField (N = 1, n = 2), a constant 2x2 array, or a callable -> (M, 2, 2)."""
    if callable(coefficient) and hasattr(coefficient, "N"):
        if coefficient.N != 1 or coefficient.n != 2:
            raise SolverError("the solver handles n = 2, N = 1 only")
        return lambda x: coefficient(x)[..., 0, :, 0, :]
    if callable(coefficient):
        return coefficient
    M = np.asarray(coefficient, dtype=float)
    if M.shape != (2, 2):
        M = M.reshape(2, 2)
    return lambda x: np.broadcast_to(M, np.shape(x)[:-1] + (2, 2))


@dataclass
class DiscreteProblem:
    coefficient: object
    boundary: Callable | None = None
    f: Callable | None = None
    boundary_values: np.ndarray | None = None  # nodal values overriding ``boundary``


@dataclass
class DiscreteSolution:
    grid: Grid
    values: np.ndarray
    solve_residual: float
    iterations: int
    converged: bool
    energy: dict = field(default_factory=dict)
    galerkin_residual: float = 0.0

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        m, h = self.grid.cells, self.grid.h
        loc = (x - self.grid.origin) / h
        ij = np.clip(np.floor(loc).astype(int), 0, m - 1)
        ref = loc - ij
        if np.any(ref < -1e-9) or np.any(ref > 1 + 1e-9):
            raise SolverError("point outside the grid")
        idx = self.grid.node_index(ij[..., 0, None] + _LOCAL[:, 0], ij[..., 1, None] + _LOCAL[:, 1])
        return idx, ref[..., 0], ref[..., 1]

    def value_at(self, x) -> np.ndarray:
        idx, xi, eta = self._locate(x)
        N, _ = _shape(xi, eta)
        return np.sum(N * self.values[idx], axis=-1)

    def gradient_at(self, x) -> np.ndarray:
        """Gradient of the bilinear interpolant, shape (..., 2)."""
        idx, xi, eta = self._locate(x)
        _, G = _shape(xi, eta)
        return np.einsum("...ai,...i->...a", G, self.values[idx]) / self.grid.h

    def gradient(self, x) -> np.ndarray:
        """Solution-field style gradient, shape (..., 1, 2)."""
        return self.gradient_at(x)[..., None, :]

    def cell_gradients(self) -> np.ndarray:
        return self.gradient_at(self.grid.element_centers())

    def gradient_at_origin(self) -> np.ndarray:
        """Average of the four one-sided element gradients at the origin node."""
        e = 1e-9 * self.grid.h
        pts = np.array([[e, e], [-e, e], [e, -e], [-e, -e]])
        return self.gradient_at(pts).mean(axis=0)

    def to_rows(self):
        coords = self.grid.node_coords()
        idx, xi, eta = self._locate(coords * (1 - 1e-12))
        grads = self.gradient_at(coords * (1 - 1e-12))
        for (x, y), v, (gx, gy) in zip(coords, self.values, grads):
            yield (float(x), float(y), float(v), float(gx), float(gy))


# --------------------------------------------------------------------------
# linear algebra


def pcg(K, b, x0=None, tol: float = 1e-10, max_iter: int = 20000):
    """Conjugate gradients with Jacobi preconditioning; relative residual ||r||/||b||."""
    diag = K.diagonal()
    if np.any(diag <= 0):
        raise EllipticityError("stiffness matrix has a non-positive diagonal entry")
    Minv = 1.0 / diag
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - K @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0, 0.0
    z = Minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Kp = K @ p
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, it, res
        z = Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(max_iter, res)


def assemble(problem: DiscreteProblem, grid: Grid):
    """Global stiffness (CSR) and load vector; coefficient sampled at cell midpoints."""
    A = _as_matrix_field(problem.coefficient)
    Ae = np.asarray(A(grid.element_centers()), dtype=float)
    sym = 0.5 * (Ae + np.swapaxes(Ae, -1, -2))
    if not np.allclose(Ae, sym, rtol=1e-12, atol=1e-14):
        raise SolverError("coefficient must be symmetric for conjugate gradients")
    lam_min = np.linalg.eigvalsh(sym).min(axis=-1)
    if np.any(lam_min <= 0):
        bad = int(np.argmin(lam_min))
        raise EllipticityError(f"coefficient not elliptic at {grid.element_centers()[bad].tolist()}")
    Ke = np.einsum("eab,abij->eij", Ae, _S_REF)
    conn = grid.element_nodes()
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(grid.n_nodes, grid.n_nodes)).tocsr()
    F = np.zeros(grid.n_nodes)
    if problem.f is not None:
        pts, W, ref = grid.gauss_points(order=2)
        fv = np.asarray(problem.f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[0], pts.shape[1], 2)
        _, G = _shape(ref[:, 0], ref[:, 1])  # (q, 2, 4)
        Fe = np.einsum("q,eqa,qai->ei", W / grid.h, fv, G)
        np.add.at(F, conn, Fe)
    return K, F, (float(lam_min.min()), float(np.linalg.eigvalsh(sym).max()))


def assemble_and_solve(problem: DiscreteProblem, grid: Grid, tol: float = 1e-10, max_iter: int = 20000) -> DiscreteSolution:
    K, F, (lam, Lam) = assemble(problem, grid)
    bmask = grid.boundary_mask()
    u = np.zeros(grid.n_nodes)
    if problem.boundary_values is not None:
        u[bmask] = np.asarray(problem.boundary_values)[bmask]
    elif problem.boundary is not None:
        u[bmask] = np.asarray(problem.boundary(grid.node_coords()[bmask]), dtype=float).reshape(-1)
    inner = ~bmask
    Kii = K[inner][:, inner]
    rhs = F[inner] - K[inner][:, bmask] @ u[bmask]
    try:
        x, its, res = pcg(Kii.tocsr(), rhs, tol=tol, max_iter=max_iter)
    except ConvergenceError:
        raise
    u[inner] = x
    galerkin = float(np.linalg.norm(K[inner] @ u - F[inner]) / max(np.linalg.norm(F[inner] - K[inner][:, bmask] @ u[bmask]), 1e-300))
    form = float(u @ (K @ u))
    grad_sq = _grad_energy(u, grid)
    sol = DiscreteSolution(
        grid=grid, values=u, solve_residual=res, iterations=its, converged=True,
        energy={"form": form, "gradL2sq": grad_sq, "lambdaMin": lam, "LambdaMax": Lam},
        galerkin_residual=galerkin,
    )
    log.debug("solve: %d unknowns, %d iterations, residual %.2e", int(inner.sum()), its, res)
    return sol


def _grad_energy(u, grid: Grid) -> float:
    K, _, _ = assemble(DiscreteProblem(np.eye(2)), grid)
    return float(u @ (K @ u))


# --------------------------------------------------------------------------
# norms over balls


def ball_norm_sq(fn, grid: Grid, radius: float, order: int = 4) -> tuple[float, float]:
    """(int_{B_radius} |fn|^2, quadrature area of B_radius) via cell Gauss points."""
    els = grid.elements_near_ball(radius)
    pts, W, _ = grid.gauss_points(order, els)
    flat = pts.reshape(-1, 2)
    inside = np.linalg.norm(flat, axis=1) < radius
    vals = np.asarray(fn(flat[inside]), dtype=float).reshape(int(inside.sum()), -1)
    w = np.broadcast_to(W, pts.shape[:2]).reshape(-1)[inside]
    return float(np.dot(w, np.sum(vals * vals, axis=1))), float(w.sum())


def l2_error(sol: DiscreteSolution, exact, order: int = 4) -> float:
    """||u_h - exact||_{L^2} over the whole grid with cell Gauss points."""
    pts, W, _ = sol.grid.gauss_points(order)
    flat = pts.reshape(-1, 2)
    diff = sol.value_at(flat) - np.asarray(exact(flat), dtype=float).reshape(-1)
    return math.sqrt(float(np.dot(np.broadcast_to(W, pts.shape[:2]).reshape(-1), diff**2)))


def ball_sup(fn, grid: Grid, radius: float, order: int = 4) -> float:
    """Max of |fn| over cell centers and Gauss points inside B_radius."""
    els = grid.elements_near_ball(radius)
    pts, _, _ = grid.gauss_points(order, els)
    flat = np.vstack([pts.reshape(-1, 2), grid.element_centers()[els]])
    flat = flat[np.linalg.norm(flat, axis=1) < radius]
    vals = np.asarray(fn(flat), dtype=float).reshape(flat.shape[0], -1)
    return float(np.max(np.linalg.norm(vals, axis=1))) if flat.size else 0.0


# --------------------------------------------------------------------------
# harmonic replacement


def _u_parts(u_data, grid: Grid):
    """(nodal boundary values, gradient fn (M, 2) -> (M, 2))."""
    if isinstance(u_data, DiscreteSolution):
        if u_data.grid != grid:
            raise SolverError("a discrete u must live on the replacement grid")
        return u_data.values, u_data.gradient_at
    vals = np.zeros(grid.n_nodes)
    b = grid.boundary_mask()
    vals[b] = np.asarray(u_data(grid.node_coords()[b]), dtype=float).reshape(-1)

    def grad(x):
        return np.asarray(u_data.gradient(x), dtype=float).reshape(np.shape(x)[0], -1)

    return vals, grad


@dataclass
class ReplacementRecord:
    R: float
    err_grad_l2: float  # ||grad(u - h)||_{L^2(B_{3R/2})}
    f_norm: float
    coef_dev: float
    grad_u_norm: float
    rhs_bracket: float
    h: DiscreteSolution = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "R": self.R, "errL2Grad": self.err_grad_l2, "fNorm": self.f_norm, "coefDeviation": self.coef_dev,
            "gradUNorm": self.grad_u_norm, "rhsBracket": self.rhs_bracket,
            "iterations": self.h.iterations, "solveResidual": self.h.solve_residual,
        }


def harmonic_replacement(
    u_data, A, Abar, R: float, f=None, cells: int = 256, tol: float = 1e-10, norm_radius: float | None = None,
) -> ReplacementRecord:
    """Solve div(Abar grad h) = 0 in the box around B_{2R} with h = u on its
    boundary and compare gradients on B_{3R/2}.

    ``rhs_bracket`` is ||f||_{L^2(B_2R)} + R^-1 ||A - Abar||_{L^2(B_2R)} ||grad u||_{L^2(B_2R)},
    the structural right side without its constant.  ``norm_radius``
    overrides the 3R/2 ball on which the gradient error is measured.
    """
    if not 0 < R <= math.sqrt(2.0):
        raise ValueError("R must lie in (0, sqrt 2] so the box stays inside B_4")
    Abar = np.asarray(Abar, dtype=float).reshape(2, 2)
    if np.linalg.eigvalsh(0.5 * (Abar + Abar.T)).min() <= 0:
        raise EllipticityError("Abar is not elliptic")
    grid = Grid.for_ball(2 * R, cells)
    bvals, grad_u = _u_parts(u_data, grid)
    h = assemble_and_solve(DiscreteProblem(Abar, boundary_values=bvals), grid, tol)
    err, _ = ball_norm_sq(lambda x: grad_u(x) - h.gradient_at(x), grid, 1.5 * R if norm_radius is None else norm_radius)
    f_norm = 0.0
    if f is not None:
        f_norm = math.sqrt(ball_norm_sq(f, grid, 2 * R)[0])
    Afn = _as_matrix_field(A)
    dev = math.sqrt(ball_norm_sq(lambda x: (Afn(x) - Abar).reshape(np.shape(x)[0], -1), grid, 2 * R)[0])
    gu = math.sqrt(ball_norm_sq(grad_u, grid, 2 * R)[0])
    return ReplacementRecord(
        R=R, err_grad_l2=math.sqrt(err), f_norm=f_norm, coef_dev=dev, grad_u_norm=gu,
        rhs_bracket=f_norm + dev * gu / R, h=h,
    )


def solve_on_ball(A, boundary, R: float, f=None, cells: int = 256, tol: float = 1e-10) -> DiscreteSolution:
    """Discrete u for div(A grad u) = div f on the box around B_{2R}, u = boundary there."""
    grid = Grid.for_ball(2 * R, cells)
    return assemble_and_solve(DiscreteProblem(A, boundary=boundary, f=f), grid, tol)


# --------------------------------------------------------------------------
# the cascade


@dataclass
class LevelRecord:
    k: int
    R: float
    Abar: np.ndarray
    a: float
    b: float
    grad_u_scaled: float  # R^-1 ||grad u||_{L^2(B_R)}
    ball_area: float
    grad_h_origin: np.ndarray
    increment_sup: float | None  # sup_{B_R} |grad h_k - grad h_{k-1}|
    iterations: int
    solve_residual: float

    def as_dict(self) -> dict:
        return {
            "k": self.k, "R": self.R, "Abar": self.Abar.tolist(), "a": self.a, "b": self.b,
            "gradUScaled": self.grad_u_scaled, "ballArea": self.ball_area,
            "gradHOrigin": self.grad_h_origin.tolist(), "incrementSup": self.increment_sup,
            "iterations": self.iterations, "solveResidual": self.solve_residual,
        }


@dataclass
class ReplacementSequence:
    levels: list
    field: str
    cells: int
    tol: float

    def a(self) -> np.ndarray:
        return np.array([lv.a for lv in self.levels])

    def b(self) -> np.ndarray:
        return np.array([lv.b for lv in self.levels])

    def triangle_check(self, rel_tol: float = 1e-3) -> list:
        """R^-1 ||grad u||_{L^2(B_R)} <= a + sqrt(area / R^2) b per level (with relative slack).

        sqrt(area / R^2) -> sqrt(pi) is the |B_1|^(1/2) constant that the
        triangle inequality needs when b is a sup norm.
        """
        out = []
        for lv in self.levels:
            bound = lv.a + math.sqrt(lv.ball_area) / lv.R * lv.b
            out.append((lv.grad_u_scaled, bound, lv.grad_u_scaled <= bound * (1 + rel_tol)))
        return out

    def recursion_witness(self, omega) -> dict:
        """Smallest C with a_{k+1} <= C w(2R_k)(a_k + b_k) and b_{k+1} <= b_k + C w(2R_k)(a_k + b_k)."""
        ca, cb, cx = [], [], []
        for lv, nxt in zip(self.levels[:-1], self.levels[1:]):
            scale = float(omega(2 * lv.R)) * (lv.a + lv.b)
            if scale <= 0:
                # with w = 0 only solver noise may remain
                noise = max(1e-12, 100 * self.tol * (lv.a + lv.b))
                ca.append(0.0 if nxt.a <= noise else math.inf)
                cb.append(0.0 if nxt.b - lv.b <= noise else math.inf)
                cx.append(0.0 if (nxt.increment_sup or 0) <= noise else math.inf)
                continue
            ca.append(nxt.a / scale)
            cb.append(max(0.0, (nxt.b - lv.b) / scale))
            cx.append((nxt.increment_sup or 0.0) / scale)
        C = max(ca + cb + [0.0])
        return {"C": C, "C_a": ca, "C_b": cb, "C_increment": cx}

    def as_rows(self):
        for lv in self.levels:
            yield (lv.k, lv.R, lv.a, lv.b, lv.grad_u_scaled, float(lv.grad_h_origin[0]), float(lv.grad_h_origin[1]),
                   lv.increment_sup if lv.increment_sup is not None else float("nan"), lv.iterations)


def replacement_cascade(
    u, A, k_max: int = 6, cells: int = 256, tol: float = 1e-10, rule: QuadratureRule = QuadratureRule("productPolar", 4096),
    min_cells_per_level: int = 16,
) -> ReplacementSequence:
    """Levels R_k = 4^-k, k = 0..k_max: Abar_k = (A)_{B_{2R_k}}, h_k the Abar_k-replacement
    of u on the box around B_{2R_k}, a_k = R_k^-1 ||grad(u - h_k)||_{L^2(B_{R_k})}, b_k the
    discrete sup of |grad h_k| on B_{R_k}.

    ``u`` is a closed-form solution field (each level is re-gridded with
    ``cells`` per side) or a DiscreteSolution on the box around B_2, in which
    case levels must keep ``min_cells_per_level`` of its cells per side.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if isinstance(u, DiscreteSolution):
        per_level = u.grid.cells * 4.0**-k_max
        if per_level < min_cells_per_level:
            raise SolverError(f"k_max = {k_max} leaves {per_level:g} cells of the base grid per level")
    levels, prev = [], None
    Afield = A
    for k in range(k_max + 1):
        R = 4.0**-k
        Abar = np.asarray(ball_average(Afield, BallSpec((0.0, 0.0), 2 * R), rule)).reshape(2, 2)
        Abar = 0.5 * (Abar + Abar.T)
        grid = Grid.for_ball(2 * R, cells)
        if isinstance(u, DiscreteSolution):
            bvals = np.zeros(grid.n_nodes)
            bm = grid.boundary_mask()
            bvals[bm] = u.value_at(np.clip(grid.node_coords()[bm], -2 + 1e-12, 2 - 1e-12))

            def grad_u(x, u=u):
                return u.gradient_at(x)
        else:
            bvals, grad_u = _u_parts(u, grid)
        h = assemble_and_solve(DiscreteProblem(Abar, boundary_values=bvals), grid, tol)
        diff_sq, area = ball_norm_sq(lambda x: grad_u(x) - h.gradient_at(x), grid, R)
        gu_sq, _ = ball_norm_sq(grad_u, grid, R)
        b = ball_sup(h.gradient_at, grid, R)
        inc = None
        if prev is not None:
            inc = ball_sup(lambda x: h.gradient_at(x) - prev.gradient_at(x), grid, R)
        levels.append(LevelRecord(
            k=k, R=R, Abar=Abar, a=math.sqrt(diff_sq) / R, b=b, grad_u_scaled=math.sqrt(gu_sq) / R,
            ball_area=area, grad_h_origin=h.gradient_at_origin(), increment_sup=inc,
            iterations=h.iterations, solve_residual=h.solve_residual,
        ))
        prev = h
    return ReplacementSequence(levels=levels, field=getattr(A, "name", "custom"), cells=cells, tol=tol)


@dataclass
class ContinuityReport:
    grad_at_origin: np.ndarray
    increments: np.ndarray
    ratios: np.ndarray
    summable: bool

    def as_dict(self) -> dict:
        return {
            "gradAtOriginPerLevel": self.grad_at_origin.tolist(),
            "increments": self.increments.tolist(),
            "ratios": self.ratios.tolist(),
            "cauchyTrend": self.summable,
        }


def continuity_recovery(seq: ReplacementSequence, ratio_cap: float = 0.75, floor: float = 1e-8) -> ContinuityReport:
    """grad h_k(0) per level and a geometric-decay test on the increments.

    The trend passes when every increment is below ``floor`` or the ratios of
    consecutive increments (from the second one on) stay below ``ratio_cap``.
    """
    g = np.array([lv.grad_h_origin for lv in seq.levels])
    inc = np.linalg.norm(np.diff(g, axis=0), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = inc[1:] / inc[:-1]
    if inc.size == 0 or np.all(inc <= floor):
        ok = True
    else:
        tail = ratios[np.isfinite(ratios)]
        ok = bool(tail.size > 0 and np.all(tail < ratio_cap))
    return ContinuityReport(grad_at_origin=g, increments=inc, ratios=np.nan_to_num(ratios, nan=0.0, posinf=np.inf), summable=ok)
