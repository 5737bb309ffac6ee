import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscillab.fields import make_example, radial_jump_field
from oscillab.oscillation import (
    BallSpec, CenterStrategy, ORIGIN_ONLY, ball_average, dyadic_radii, gradient_oscillation_profile,
    mean_oscillation_at, modulus_profile, sup_modulus,
)
from oscillab.quadrature import QuadratureRule
from oscillab.fields import linear_solution

POLAR = QuadratureRule("productPolar", 1024)


def random_field(seed):
    """Smooth 2x2-matrix valued trigonometric field with seeded coefficients."""
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(4, 2)) * rng.uniform(0.5, 6.0)
    phase = rng.uniform(0, 2 * np.pi, 4)
    amp = rng.normal(size=(4, 2, 2))

    def f(x):
        s = np.sin(x @ K.T + phase)  # (M, 4)
        return np.einsum("mk,kab->mab", s, amp)

    return f


def test_ball_average_trivial_and_polar():
    ball = BallSpec((0.0, 0.0), 0.3)
    assert ball_average(lambda x: np.full(len(x), 2.5), ball, POLAR) == pytest.approx(2.5)
    assert abs(ball_average(lambda x: x[:, 0], ball, POLAR)) < 1e-14
    assert ball_average(lambda x: np.sum(x * x, 1), ball, POLAR) == pytest.approx(0.045, rel=1e-12)
    off = BallSpec((1.0, -0.5), 0.3)
    assert ball_average(lambda x: np.sum(x * x, 1), off, POLAR) == pytest.approx(1.25 + 0.045, rel=1e-10)


def test_mean_oscillation_of_x1():
    r = 0.4
    ball = BallSpec((0.0, 0.0), r)
    # int_disk |y1| = 4 r^3 / 3
    assert mean_oscillation_at(lambda x: x[:, 0], ball, 1.0, POLAR) == pytest.approx(4 * r / (3 * math.pi), rel=1e-3)
    assert mean_oscillation_at(lambda x: x[:, 0], ball, 2.0, POLAR) == pytest.approx(r / 2, rel=1e-10)
    assert mean_oscillation_at(lambda x: np.ones(len(x)), ball, 3.0, POLAR) == 0.0


def test_ball_must_fit():
    with pytest.raises(ValueError):
        BallSpec((3.5, 0.0), 1.0)
    with pytest.raises(ValueError):
        BallSpec((0.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        mean_oscillation_at(lambda x: x[:, 0], BallSpec((0.0, 0.0), 1.0), 0.5)


@settings(max_examples=20, deadline=None, derandomize=True)
@given(
    seed=st.integers(0, 10**6),
    scale=st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3),
    shift=st.floats(-100, 100),
    radius=st.floats(0.01, 1.0),
)
def test_oscillation_algebra(seed, scale, shift, radius):
    f = random_field(seed)
    ball = BallSpec((0.2, -0.1), radius)
    rule = QuadratureRule("lowDiscrepancy", 512, seed % 7)
    base = mean_oscillation_at(f, ball, 2.0, rule)
    assert mean_oscillation_at(lambda x: scale * f(x), ball, 2.0, rule) == pytest.approx(abs(scale) * base, rel=1e-12)
    assert mean_oscillation_at(lambda x: f(x) + shift, ball, 2.0, rule) == pytest.approx(base, rel=1e-10, abs=1e-13)
    vals = [mean_oscillation_at(f, ball, p, rule) for p in (1.0, 1.5, 2.0, 4.0)]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


def test_constant_field_profile_is_zero():
    prof = modulus_profile(lambda x: np.full((len(x), 2, 2), 3.0), dyadic_radii(6), 2.0, CenterStrategy(spacing=1.0),
                           QuadratureRule("productPolar", 256), n=2)
    assert np.all(prof.values == 0)
    assert prof.bmo_seminorm() == 0 and prof.vmo_trend()


def test_radial_jump_profile():
    A = radial_jump_field(2, jump=0.5, radius=1.0)
    radii = [0.05, 0.025]
    away = modulus_profile(A, radii, 2.0, CenterStrategy(window=4, focus=(0.3, 0.0)), POLAR)
    assert np.all(away.values < 1e-12)
    near = modulus_profile(A, radii, 2.0, CenterStrategy(window=8, focus=(1.0, 0.0)), POLAR)
    assert np.all(near.values > 0.1)
    for c, r in zip(near.argmax_centers, radii):
        assert abs(np.linalg.norm(c) - 1.0) <= r


def test_ordering_of_moduli_on_propc1():
    A, _ = make_example("PropC1")
    radii = dyadic_radii(8, 3)
    strat = CenterStrategy(window=4)
    w2 = modulus_profile(A, radii, 2.0, strat, POLAR).values
    phi = sup_modulus(A, radii, "pointwiseL2", strat, POLAR).values
    bar = sup_modulus(A, radii, "uniform", strat, POLAR).values
    assert np.all(w2 <= phi * (1 + 1e-9))
    assert np.all(phi <= bar * (1 + 1e-9))


def test_uniform_modulus_of_lipschitz_field():
    radii = np.array([0.5, 0.1, 0.01])
    prof = sup_modulus(lambda x: np.linalg.norm(x, axis=1), radii, "uniform", CenterStrategy(window=3),
                       QuadratureRule("productPolar", 2048), n=2)
    assert np.all(prof.values <= radii * (1 + 1e-12))
    assert np.all(prof.values >= 0.95 * radii)


def test_doubling_certificate_holds():
    A, _ = make_example("PropC1")
    prof = modulus_profile(A, dyadic_radii(10, 1), 2.0, CenterStrategy(window=4), QuadratureRule("productPolar", 512))
    C = prof.doubling_constant()
    v, r = prof.values, prof.radii
    for i in range(len(r)):
        for j in range(len(r)):
            if r[i] <= r[j] <= 4 * r[i]:
                assert v[i] <= C * v[j] * (1 + 1e-12)


def test_profile_is_reproducible():
    A, _ = make_example("PropC1")
    args = (A, dyadic_radii(6, 2), 2.0, CenterStrategy(window=4), QuadratureRule("lowDiscrepancy", 512, 3))
    a, b = modulus_profile(*args), modulus_profile(*args)
    assert a.to_json() == b.to_json()
    assert list(a.rows())[0][3] == "supOverCenters"


def test_gradient_profile_linear_is_zero():
    prof = gradient_oscillation_profile(linear_solution([[2.0, -1.0]]), dyadic_radii(5), rule=POLAR)
    assert np.all(prof.values < 1e-13)


def test_gradient_profile_propc1_decays():
    _, u = make_example("PropC1")
    prof = gradient_oscillation_profile(u, [2.0**-4, 2.0**-8, 2.0**-12], 2.0, ORIGIN_ONLY, QuadratureRule("productPolar", 4096))
    assert np.all(np.diff(prof.values) < 0)
    assert prof.values[-1] / prof.values[0] < 0.8


def test_propc2_gradient_has_no_monotone_limit():
    _, u = make_example("PropC2_tripleLogDenominator")
    k = np.arange(1, 500)
    x = np.zeros((k.size, 2))
    x[:, 0] = 4.0 ** -k.astype(float)
    g = np.linalg.norm(u.gradient(x)[:, 0, :], axis=1)
    d = np.diff(g)
    # rises, turns at the crest of sin, then falls
    assert d[:50].max() > 0 and d[-50:].min() < 0
    assert g.max() - g[-1] > 0.02
    prof = gradient_oscillation_profile(u, dyadic_radii(12, 2), 2.0, rule=POLAR)
    assert prof.bmo_seminorm() < 1.0
