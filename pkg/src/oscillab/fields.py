"""Coefficient fields, solution fields and the closed-form counterexamples.

Conventions
-----------
Points are arrays of shape ``(..., n)``.  A coefficient field returns an array
of shape ``(..., N, n, N, n)`` holding ``A[i, alpha, j, beta]``.  A solution
field returns ``(..., N)`` and its gradient ``(..., N, n)``.

The pointwise bound |A| <= Lambda uses the Frobenius norm of the
``(N n) x (N n)`` flattening, so ``ConstantIdentity`` has Lambda = sqrt(n N).

All radial expressions are evaluated in float64 by nested ``log`` calls, never
rearranged algebraically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .quadrature import QuadratureRule

FLOAT_MAX = np.finfo(float).max
DOMAIN_RADIUS = 4.0
# smallest radius for which 64/r is still a finite double
MIN_RADIUS = 64.0 / FLOAT_MAX


class FieldDomainError(ValueError):
    """Raised when a radial expression cannot be evaluated in float64."""


class UnknownExampleError(KeyError):
    pass


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class CoefficientField:
    n: int
    N: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    lam: float
    Lam: float
    name: str
    radial: "RadialAnsatz | None" = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.evaluate(x)

    def flat(self, x) -> np.ndarray:
        """Values as ``(..., N n, N n)`` matrices."""
        A = self(x)
        k = self.N * self.n
        return A.reshape(A.shape[:-4] + (k, k))

    def norm(self, x) -> np.ndarray:
        F = self.flat(x)
        return np.sqrt(np.sum(F * F, axis=(-2, -1)))


@dataclass(frozen=True)
class RadialAnsatz:
    """A^{ab} = delta^{ab} + a(r)(delta^{ab} - x^a x^b / r^2), u = x^1 v(r)."""

    a: Callable
    v: Callable
    a_deriv: Callable | None = None
    v_deriv: Callable | None = None
    v_deriv2: Callable | None = None

    def dv(self, r):
        return self.v_deriv(r) if self.v_deriv is not None else fd_derivative(self.v, r, 1)

    def d2v(self, r):
        return self.v_deriv2(r) if self.v_deriv2 is not None else fd_derivative(self.v, r, 2)


@dataclass(frozen=True)
class VectorSolutionField:
    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient_fn: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""
    meta: dict = dc_field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradient_fn is not None:
            return self.gradient_fn(x)
        return fd_gradient(self.evaluate, x)


# --------------------------------------------------------------------------
# finite-difference fallbacks


def fd_step(r):
    return np.maximum(1e-5, 1e-3 * np.abs(r))


def fd_derivative(f, r, order: int):
    """Fourth-order central difference of a radial function."""
    r = np.asarray(r, dtype=float)
    h = fd_step(r)
    fm2, fm1, fp1, fp2 = f(r - 2 * h), f(r - h), f(r + h), f(r + 2 * h)
    if order == 1:
        return (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    if order == 2:
        return (-fm2 + 16 * fm1 - 30 * f(r) + 16 * fp1 - fp2) / (12 * h * h)
    raise ValueError("only first and second derivatives are supported")


def fd_gradient(f, x):
    """Fourth-order central differences, step max(1e-5, 1e-3 |x|)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = fd_step(np.linalg.norm(x, axis=-1))[..., None]
    cols = []
    for beta in range(n):
        e = np.zeros(n)
        e[beta] = 1.0
        d = (f(x - 2 * h * e) - 8 * f(x - h * e) + 8 * f(x + h * e) - f(x + 2 * h * e)) / (12 * h)
        cols.append(d)
    return np.stack(cols, axis=-1)


# --------------------------------------------------------------------------
# the nested logarithms


def _check_radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r < MIN_RADIUS) or np.any(r > DOMAIN_RADIUS * (1 + 1e-12)):
        raise FieldDomainError(
            f"radius outside [{MIN_RADIUS:.3g}, {DOMAIN_RADIUS}] where 64/r and the nested logs are finite"
        )
    return r


def log64(r):
    return np.log(64.0 / r)


def loglog64(r):
    return np.log(np.log(64.0 / r))


def logloglog64(r):
    return np.log(np.log(np.log(64.0 / r)))


# --------------------------------------------------------------------------
# Prop c1: a = -(1 + n L) / ((n-1) L^2 ln L), v = ln L, L = ln(64/r)


def c1_ansatz(n: int) -> RadialAnsatz:
    def a(r):
        L = log64(r)
        return -(1.0 + n * L) / ((n - 1) * L**2 * np.log(L))

    def v(r):
        return loglog64(r)

    def dv(r):
        return -1.0 / (r * log64(r))

    def d2v(r):
        L = log64(r)
        return (L - 1.0) / (r**2 * L**2)

    return RadialAnsatz(a=a, v=v, v_deriv=dv, v_deriv2=d2v)


# --------------------------------------------------------------------------
# Prop c2: v = 2 + sin lnlnln(64/r).  With L = ln(64/r), m = ln L, l = ln m:
#   v'' + (n+1) v'/r = -(sin l + cos l (1 + m + n L m)) / (r L m)^2
# so the vanishing choice is a = -(sin l + cos l (1 + m + n L m)) / ((n-1) L^2 m^2 v).

C2_VARIANTS = ("PropC2_paperDenominator", "PropC2_tripleLogDenominator", "PropC2_printed")


def c2_ansatz(n: int, variant: str = "PropC2_tripleLogDenominator") -> RadialAnsatz:
    if variant not in C2_VARIANTS:
        raise UnknownExampleError(variant)

    def v(r):
        return 2.0 + np.sin(logloglog64(r))

    def dv(r):
        L = log64(r)
        m = np.log(L)
        return -np.cos(np.log(m)) / (r * L * m)

    def d2v(r):
        L = log64(r)
        m = np.log(L)
        ell = np.log(m)
        return (np.cos(ell) * (L * m - m - 1.0) - np.sin(ell)) / (r * L * m) ** 2

    def a(r):
        L = log64(r)
        m = np.log(L)
        ell = np.log(m)
        if variant == "PropC2_printed":
            num = np.sin(ell) + np.cos(ell) * (1.0 + L + n * L * m)
        else:
            num = np.sin(ell) + np.cos(ell) * (1.0 + m + n * L * m)
        if variant == "PropC2_tripleLogDenominator":
            den = 2.0 + np.sin(ell)
        else:
            den = 2.0 + np.sin(m)
        return -num / ((n - 1) * L**2 * m**2 * den)

    return RadialAnsatz(a=a, v=v, v_deriv=dv, v_deriv2=d2v)


def radial_residual(ansatz: RadialAnsatz, r, n: int):
    """v'' + (n+1) v'/r - (n-1) a v / r^2, vectorised over r.

    Zero certifies that A, u built from the ansatz solve the divergence-form
    equation away from the origin.
    """
    r = _check_radius(r)
    with np.errstate(all="raise", under="ignore"):
        try:
            res = ansatz.d2v(r) + (n + 1) * ansatz.dv(r) / r - (n - 1) * ansatz.a(r) * ansatz.v(r) / r**2
        except FloatingPointError as exc:
            raise FieldDomainError(f"residual not representable in float64: {exc}") from exc
    return res


# --------------------------------------------------------------------------
# building fields from a radial ansatz


def _radial_parts(x):
    # rescale first so tiny radii do not underflow when squared
    top = np.max(np.abs(x), axis=-1)
    scale = np.where(top > 0, top, 1.0)
    rho = top * np.linalg.norm(x / scale[..., None], axis=-1)
    safe = np.where(rho > 0, rho, 1.0)
    e = x / safe[..., None]
    return rho, safe, e


def _angular_matrix_field(n: int, N: int, g: Callable) -> Callable:
    """x -> delta_ij (I + g(|x|)(I - x x^T/|x|^2)), identity at the origin."""
    eye_n = np.eye(n)
    eye_N = np.eye(N)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        rho, safe, e = _radial_parts(x)
        P = e[..., :, None] * e[..., None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            gv = np.where(rho > 0, g(safe), 0.0)
        B = eye_n + gv[..., None, None] * (eye_n - P)
        return np.einsum("ij,...ab->...iajb", eye_N, B)

    return evaluate


def _ansatz_solution(ansatz: RadialAnsatz, name: str) -> VectorSolutionField:
    def evaluate(x):
        x = np.asarray(x, dtype=float)
        rho, safe, _ = _radial_parts(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(rho > 0, x[..., 0] * ansatz.v(safe), 0.0)
        return val[..., None]

    def gradient(x):
        x = np.asarray(x, dtype=float)
        rho, safe, e = _radial_parts(x)
        n = x.shape[-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            v = ansatz.v(safe)
            dv = ansatz.dv(safe)
        g = (x[..., 0] * dv)[..., None] * e
        g[..., 0] += v
        g = np.where((rho > 0)[..., None], g, np.nan)
        return g.reshape(x.shape[:-1] + (1, n))

    return VectorSolutionField(evaluate=evaluate, gradient_fn=gradient, name=name)


def radial_bounds(ansatz: RadialAnsatz, n: int, lo: float = 1e-300, hi: float = DOMAIN_RADIUS, num: int = 6000):
    """(lambda, Lambda, min(1 + a)) from a log-grid scan of the closed form.

    The induced matrix has eigenvalues 1 (radial) and 1 + a (n - 1 times).
    """
    r = np.geomspace(lo, hi, num)
    one_plus_a = 1.0 + ansatz.a(r)
    lam = float(min(1.0, one_plus_a.min()))
    Lam = float(np.sqrt(1.0 + (n - 1) * np.max(one_plus_a**2)))
    return lam, Lam, float(one_plus_a.min())


def ansatz_field(ansatz: RadialAnsatz, n: int, name: str) -> CoefficientField:
    lam, Lam, _ = radial_bounds(ansatz, n)
    return CoefficientField(
        n=n, N=1, evaluate=_angular_matrix_field(n, 1, ansatz.a), lam=lam, Lam=Lam, name=name, radial=ansatz
    )


# --------------------------------------------------------------------------
# the other shipped fields


def constant_identity(n: int = 2, N: int = 1) -> CoefficientField:
    eye = np.einsum("ij,ab->iajb", np.eye(N), np.eye(n))

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eye, x.shape[:-1] + eye.shape).copy()

    return CoefficientField(n=n, N=N, evaluate=evaluate, lam=1.0, Lam=math.sqrt(n * N), name="ConstantIdentity")


def constant_field(matrix, name: str = "Constant") -> CoefficientField:
    """Constant scalar-system coefficient from an n x n matrix (N = 1)."""
    M = np.asarray(matrix, dtype=float)
    n = M.shape[0]
    T = M.reshape(1, n, 1, n)
    sym = 0.5 * (M + M.T)
    lam = float(np.linalg.eigvalsh(sym).min())
    Lam = float(np.linalg.norm(M))

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(T, x.shape[:-1] + T.shape).copy()

    return CoefficientField(n=n, N=1, evaluate=evaluate, lam=lam, Lam=Lam, name=name)


def sin_logloglog_coefficient(n: int = 2, N: int = 1) -> CoefficientField:
    """(2 + sin lnlnln(64/|x|)) delta_ij delta^ab; discontinuous at 0, set to 2 there."""
    eye = np.einsum("ij,ab->iajb", np.eye(N), np.eye(n))

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        rho = np.linalg.norm(x, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        s = np.where(rho > 0, 2.0 + np.sin(logloglog64(safe)), 2.0)
        return s[..., None, None, None, None] * eye

    return CoefficientField(n=n, N=N, evaluate=evaluate, lam=1.0, Lam=3.0 * math.sqrt(n * N), name="SinLogLogLogCoefficient")


def ell_field(x) -> np.ndarray:
    """Scalar field l(x) = lnlnln(64/|x|); the origin is a node-free singularity."""
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1)
    with np.errstate(divide="ignore"):
        return logloglog64(rho)


def radial_jump_field(n: int = 2, jump: float = 0.5, radius: float = 1.0) -> CoefficientField:
    """(1 + jump * 1{|x| < radius}) Id: piecewise constant with an interface sphere."""
    eye = np.einsum("ab->ab", np.eye(n)).reshape(1, n, 1, n)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        s = 1.0 + jump * (np.linalg.norm(x, axis=-1) < radius)
        return s[..., None, None, None, None] * eye

    lo, hi = sorted((1.0, 1.0 + jump))
    return CoefficientField(n=n, N=1, evaluate=evaluate, lam=lo, Lam=hi * math.sqrt(n), name=f"jump:{jump}")


def synthetic_field(modulus, n: int = 2, N: int = 1, name: str | None = None) -> CoefficientField:
    """I + w(|x|)(I - x x^T/|x|^2) for a non-negative modulus w.

    Its L^2 mean oscillation at scale t is comparable to w(t) whenever w is
    slowly varying, which is how prescribed moduli are realised as fields.
    """

    def g(r):
        return np.clip(modulus(r), 0.0, None)

    r = np.geomspace(1e-300, DOMAIN_RADIUS, 4000)
    with np.errstate(all="ignore"):
        top = float(np.nanmax(g(np.minimum(r, 2.0))))
    Lam = math.sqrt(N * (1.0 + (n - 1) * (1.0 + top) ** 2))
    return CoefficientField(
        n=n, N=N, evaluate=_angular_matrix_field(n, N, g), lam=1.0, Lam=Lam,
        name=name or f"Synthetic({getattr(modulus, 'spec', 'custom')})",
    )


def radial_ode_ansatz(a: Callable, n: int = 2, s_min: float = -60.0) -> RadialAnsatz:
    """Regular solution of the radial equation for a prescribed a(r), normalised to v(0) = 1.

    In s = ln r the equation reads v_ss + n v_s = (n - 1) a(e^s) v.  Forward
    integration from s_min damps the singular mode, so starting from
    v = 1, v_s = 0 is enough.  Below e^s_min, v is held constant.
    """
    from scipy.integrate import solve_ivp

    def rhs(s, y):
        return [y[1], -n * y[1] + (n - 1) * float(a(math.exp(s))) * y[0]]

    s_max = math.log(DOMAIN_RADIUS) + 1e-9
    sol = solve_ivp(rhs, (s_min, s_max), [1.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    if not sol.success:
        raise FieldDomainError(f"radial ODE failed: {sol.message}")

    def state(r):
        r = np.asarray(r, dtype=float)
        s = np.clip(np.log(np.maximum(r, 1e-300)), s_min, s_max)
        y = sol.sol(s.ravel()).reshape((2,) + s.shape)
        return s, y

    def v(r):
        return state(r)[1][0]

    def dv(r):
        s, y = state(r)
        return np.where(s > s_min, y[1] / np.exp(s), 0.0)

    return RadialAnsatz(a=a, v=v, v_deriv=dv)


def linear_solution(P) -> VectorSolutionField:
    """u(x) = P x for an N x n matrix P."""
    P = np.atleast_2d(np.asarray(P, dtype=float))

    def evaluate(x):
        return np.asarray(x, dtype=float) @ P.T

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(P, x.shape[:-1] + P.shape).copy()

    return VectorSolutionField(evaluate=evaluate, gradient_fn=gradient, name="linear")


EXAMPLES = (
    "PropC1",
    "PropC2_paperDenominator",
    "PropC2_tripleLogDenominator",
    "PropC2_printed",
    "SinLogLogLogCoefficient",
    "ConstantIdentity",
    "Synthetic",
)


def make_example(name: str, n: int = 2, N: int = 1, modulus=None):
    """Return ``(CoefficientField, VectorSolutionField | None)`` for a named example.

    ``Synthetic`` needs ``modulus`` (a spec string or a ModulusFunction); the
    form ``"Synthetic(<spec>)"`` is accepted too.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if name.startswith("Synthetic(") and name.endswith(")"):
        modulus, name = name[len("Synthetic("):-1], "Synthetic"
    if name == "ConstantIdentity":
        return constant_identity(n, N), None
    if name == "SinLogLogLogCoefficient":
        return sin_logloglog_coefficient(n, N), None
    if name == "Synthetic":
        if modulus is None:
            raise UnknownExampleError("Synthetic needs a modulus spec")
        from .dini import parse_modulus

        mod = parse_modulus(modulus) if isinstance(modulus, str) else modulus
        A = synthetic_field(mod, n, N)
        if N != 1:
            return A, None
        ansatz = radial_ode_ansatz(lambda r: np.clip(mod(r), 0.0, None), n)
        return A, _ansatz_solution(ansatz, A.name)
    if name == "PropC1" or name in C2_VARIANTS:
        if N != 1:
            raise ValueError(f"{name} is a scalar example (N = 1)")
        ansatz = c1_ansatz(n) if name == "PropC1" else c2_ansatz(n, name)
        return ansatz_field(ansatz, n, name), _ansatz_solution(ansatz, name)
    raise UnknownExampleError(f"unsupported example {name!r}; choose from {', '.join(EXAMPLES)}")


# --------------------------------------------------------------------------
# boundedness / ellipticity report


@dataclass
class EllipticityReport:
    max_norm: float
    max_norm_witness: np.ndarray
    min_form_ratio: float
    min_form_witness: dict
    min_pointwise_eig: float
    Lam: float
    lam: float
    violations: list = dc_field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "maxNorm": self.max_norm,
            "maxNormWitness": [float(c) for c in self.max_norm_witness],
            "minFormRatio": self.min_form_ratio,
            "minFormWitness": self.min_form_witness,
            "minPointwiseEigenvalue": self.min_pointwise_eig,
            "Lambda": self.Lam,
            "lambda": self.lam,
            "norm": "Frobenius of the (N n) x (N n) flattening",
            "violations": list(self.violations),
        }


def _sample_points(n: int, samples: int, rng) -> np.ndarray:
    # uniform in B_4 plus a log-spaced radial family to reach the origin
    g = rng.standard_normal((samples, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = DOMAIN_RADIUS * rng.random(samples) ** (1.0 / n)
    pts = g * rad[:, None]
    k = max(8, samples // 8)
    d = rng.standard_normal((k, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts_log = d * np.geomspace(1e-12, DOMAIN_RADIUS, k)[:, None]
    return np.vstack([pts, pts_log])


def _bump_ratio(field: CoefficientField, center, rho, freq, phase, coef, rule) -> float:
    x, w = rule.nodes(center, rho)
    y = (x - center) / rho
    q = 1.0 - np.sum(y * y, axis=-1)
    psi = np.clip(q, 0, None) ** 3
    dpsi = (-6.0 / rho) * (np.clip(q, 0, None) ** 2)[:, None] * y
    arg = x @ freq + phase
    s = np.cos(arg)
    ds = -np.sin(arg)[:, None] * freq[None, :]
    grad_scalar = dpsi * s[:, None] + psi[:, None] * ds  # (M, n)
    G = coef[None, :, None] * grad_scalar[:, None, :]  # (M, N, n)
    A = field(x)
    form = np.einsum("m,miajb,mjb,mia->", w, A, G, G)
    energy = np.einsum("m,mia,mia->", w, G, G)
    return float(form / energy)


def check_bounded_elliptic(
    field: CoefficientField, samples: int = 4096, test_functions: int = 32, seed: int = 0, points=None
) -> EllipticityReport:
    """Sampled check of |A| <= Lambda and of integral coercivity with constant lambda.

    Coercivity is tested on a fixed pseudo-random family of smooth bumps
    (1 - |y|^2)^3 cos(k.x + c) supported in B_4.  ``points`` adds caller
    supplied sample points to the norm scan.
    """
    if samples < 1 or test_functions < 1:
        raise ValueError("samples and test_functions must be >= 1")
    rng = np.random.default_rng(seed)
    n, N = field.n, field.N
    pts = _sample_points(n, samples, rng)
    if points is not None:
        pts = np.vstack([pts, np.atleast_2d(np.asarray(points, dtype=float))])
    norms = field.norm(pts)
    i = int(np.argmax(norms))
    F = field.flat(pts)
    eig = np.linalg.eigvalsh(0.5 * (F + np.swapaxes(F, -1, -2))).min()

    rule = QuadratureRule("lowDiscrepancy", 2048, seed)
    best, witness = math.inf, {}
    for _ in range(test_functions):
        rho = rng.uniform(0.2, 1.0)
        c_dir = rng.standard_normal(n)
        c_dir /= np.linalg.norm(c_dir)
        center = c_dir * rng.uniform(0.0, DOMAIN_RADIUS - rho)
        freq = rng.standard_normal(n) * rng.uniform(0.0, 3.0 / rho)
        phase = rng.uniform(0, 2 * np.pi)
        coef = rng.standard_normal(N)
        ratio = _bump_ratio(field, center, rho, freq, phase, coef, rule)
        if ratio < best:
            best = ratio
            witness = {"center": [float(c) for c in center], "radius": float(rho)}

    rep = EllipticityReport(
        max_norm=float(norms[i]), max_norm_witness=pts[i], min_form_ratio=best, min_form_witness=witness,
        min_pointwise_eig=float(eig), Lam=field.Lam, lam=field.lam,
    )
    if rep.max_norm > field.Lam * (1 + 1e-9):
        rep.violations.append(f"|A| = {rep.max_norm:.6g} > Lambda = {field.Lam:.6g} at {pts[i].tolist()}")
    if rep.min_form_ratio < field.lam * (1 - 1e-9):
        rep.violations.append(f"form ratio {rep.min_form_ratio:.6g} < lambda = {field.lam:.6g} for bump {witness}")
    return rep
