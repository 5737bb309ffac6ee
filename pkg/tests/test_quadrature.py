import math

import numpy as np
import pytest

from oscillab.quadrature import (
    MAX_POINTS, QuadratureError, QuadratureRule, ball_integral, default_points, evaluate_on_nodes, unit_ball_volume,
)

KINDS = ("productPolar", "quasiUniformGrid", "lowDiscrepancy")


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("radius", [1e-6, 0.03, 0.5, 2.0])
def test_volume_of_ball(kind, n, radius):
    x, w = QuadratureRule(kind, 1024).nodes(np.full(n, 0.1), radius)
    assert w.sum() == pytest.approx(unit_ball_volume(n) * radius**n, rel=1e-3)
    assert np.all(np.linalg.norm(x - 0.1, axis=1) <= radius * (1 + 1e-12))


def test_unit_ball_volume():
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_quadratic_moment_matches_polar_integral():
    # (1/|B_r|) int_{B_r} |x|^2 = r^2 / 2 in the plane
    r = 0.7
    val = ball_integral(lambda x: np.sum(x * x, axis=1), np.zeros(2), r, QuadratureRule("productPolar", 1024))
    assert val / (math.pi * r * r) == pytest.approx(r * r / 2, rel=1e-12)


def test_origin_is_excluded_and_weights_renormalised():
    rule = QuadratureRule("quasiUniformGrid", 4)
    x, w = rule.nodes(np.zeros(2), 1.0)
    assert np.all(np.linalg.norm(x, axis=1) >= 1e-12)
    assert w.sum() == pytest.approx(math.pi, rel=1e-12)


def test_default_point_count():
    assert default_points(1.0) == 256
    assert default_points(0.01) == 6400
    assert default_points(1e-9) == MAX_POINTS
    assert QuadratureRule().count_for(0.125) == 512
    assert QuadratureRule(points=300).refined(2).points == 600


def test_nonfinite_nodes_are_perturbed(caplog):
    x = np.array([[0.0, 0.5], [0.2, 0.1]])

    def f(y):
        return np.where(y[:, 0] == 0.0, np.nan, y[:, 0])

    with caplog.at_level("WARNING"):
        vals = evaluate_on_nodes(f, x, 1.0)
    assert np.all(np.isfinite(vals))
    assert "perturbing" in caplog.text


def test_persistently_singular_field_raises():
    with pytest.raises(QuadratureError):
        evaluate_on_nodes(lambda y: np.full(len(y), np.inf), np.ones((3, 2)), 1.0)


def test_bad_rules_rejected():
    with pytest.raises(QuadratureError):
        QuadratureRule("simpson")
    with pytest.raises(QuadratureError):
        QuadratureRule(points=0)
