import math

import numpy as np
import pytest

from oscillab.dini import parse_modulus
from oscillab.estimates import (
    DEFAULT_C_GRID, UnboundedGradientError, coefficient_modulus, est1_report, est2_report, est3_report,
    grad_energy, grad_sup, gradient_probe, hrep_report, hrep_sweep, require_bounded_gradient, sweep_slope,
)
from oscillab.fields import constant_identity, linear_solution, make_example
from oscillab.oscillation import CenterStrategy, dyadic_radii, modulus_profile
from oscillab.quadrature import QuadratureRule

LINEAR = linear_solution([[0.6, -0.8]])
ZERO = parse_modulus("const:0")
FAST = QuadratureRule("productPolar", 1024)


@pytest.fixture(scope="module")
def propc1():
    A, u = make_example("PropC1")
    return A, u, coefficient_modulus(A)


@pytest.fixture(scope="module")
def propc2():
    A, u = make_example("PropC2_tripleLogDenominator")
    return A, u, coefficient_modulus(A)


def test_c_grid():
    assert DEFAULT_C_GRID[0] == 1.0
    assert DEFAULT_C_GRID[-1] == 100.0
    assert len(DEFAULT_C_GRID) == 41


def test_grad_energy_of_linear_field():
    assert grad_energy(LINEAR, 0.5) == pytest.approx(math.pi * 0.25, rel=1e-12)


def test_est1_linear_needs_c_one():
    rep = est1_report(LINEAR, ZERO, rule=FAST)
    assert rep.fitted_c == 1.0
    assert rep.bounded_flag
    assert np.allclose(rep.required_c, 1.0)


def test_est1_propc1_bounded(propc1):
    _, u, omega = propc1
    rep = est1_report(u, omega, rule=FAST)
    assert rep.fitted_c <= 100
    assert rep.bounded_flag


def test_est1_propc1_without_modulus_is_unbounded(propc1):
    # omega = 0 removes the exponential that absorbs the gradient growth
    _, u, _ = propc1
    rep = est1_report(u, ZERO, rule=FAST)
    assert not rep.bounded_flag
    assert rep.required_c[-1] > rep.required_c[:-1].max()


def test_est2_linear_has_no_oscillation():
    rep = est2_report(LINEAR, ZERO, rule=FAST)
    assert np.all(rep.lhs == 0)
    assert rep.fitted_c == 1.0


def test_est2_propc1(propc1):
    _, u, omega = propc1
    rep = est2_report(u, omega, rule=FAST)
    assert rep.fitted_c <= 100
    assert rep.bounded_flag
    rows = list(rep.rows())
    assert len(rows) == len(rep.scales)
    assert len(rows[0]) == len(rep.header())


def test_est3_propc2_bounded(propc2):
    _, u, omega = propc2
    rep = est3_report(u, omega)
    assert rep.fitted_c <= 100
    assert rep.stability_ratio <= 2
    assert rep.bounded_flag


def test_est3_rejects_propc1(propc1):
    _, u, omega = propc1
    with pytest.raises(UnboundedGradientError) as info:
        est3_report(u, omega, rule=FAST)
    assert "not bounded" in str(info.value)
    assert info.value.samples[-1] > info.value.samples[0]


def test_gradient_probe_constant_for_linear():
    probe = gradient_probe(LINEAR)
    assert probe.shape == (298,)
    assert np.allclose(probe, 1.0)
    require_bounded_gradient(LINEAR)


def test_grad_sup_linear():
    assert grad_sup(LINEAR, 1.0) == pytest.approx(1.0)


def test_est2_est3_share_structure(propc2):
    # at C = 0 the Est2 bracket equals the Est3 one, so the right sides differ
    # only in the energy average versus the squared sup
    _, u, omega = propc2
    r2 = est2_report(u, omega, c_grid=(0.0, 1.0), rule=FAST, refine=False)
    r3 = est3_report(u, omega, rule=FAST, refine=False)
    E = grad_energy(u, 2.0, FAST)
    S = grad_sup(u, 2.0)
    assert np.allclose(r2.rhs_grid[0] / E, r3.rhs_structural / S**2, rtol=1e-10)
    assert np.allclose(r2.lhs, r3.lhs)


def test_invalid_scales():
    with pytest.raises(ValueError):
        est1_report(LINEAR, ZERO, scales=[(0.6, 1.0)])


@pytest.mark.parametrize("report", [est1_report, est2_report])
def test_scale_consistency(propc1, report):
    # halving R leaves the fitted constant within the two-sided doubling
    # constant of the coefficient profile
    A, u, omega = propc1
    scales = [4.0**-k for k in range(2, 7)]
    c2 = report(u, omega, scales=[(r, 2.0) for r in scales], rule=FAST, refine=False)
    c1 = report(u, omega, scales=[(r, 1.0) for r in scales], rule=FAST, refine=False)
    prof = modulus_profile(A, dyadic_radii(k_max=12, k_min=-1), 2.0, CenterStrategy(window=4.0), FAST)
    dbl = prof.doubling_constant(two_sided=True)
    assert max(c1.fitted_c, c2.fitted_c) <= dbl * min(c1.fitted_c, c2.fitted_c)
    need1, need2 = np.max(c1.required_c), np.max(c2.required_c)
    assert max(need1, need2) <= dbl * min(need1, need2)


def test_est3_scale_factor(propc2):
    # the R^-n prefactor makes the Est3 constant move by (R'/R)^n between outer radii
    _, u, omega = propc2
    scales = [4.0**-k for k in range(2, 7)]
    c2 = est3_report(u, omega, scales=[(r, 2.0) for r in scales], rule=FAST, refine=False).fitted_c
    c1 = est3_report(u, omega, scales=[(r, 1.0) for r in scales], rule=FAST, refine=False).fitted_c
    assert c2 / (4 * c1) == pytest.approx(1.0, rel=0.1)


def test_hrep_none_sweep_is_exact():
    sweep = hrep_sweep("none", eps=(0.1,), cells=(32,))
    assert sweep[0]["lhs"] < 1e-9
    assert sweep[0]["rhs"] == 0.0


def test_hrep_forcing_slope():
    sweep = hrep_sweep("forcing", cells=(32,))
    assert 0.9 <= sweep_slope(sweep) <= 1.1
    rep = hrep_report(sweep)
    assert rep.fitted_c <= 100
    assert rep.refined_c is None


def test_hrep_kind_checked():
    with pytest.raises(ValueError):
        hrep_sweep("bogus")
