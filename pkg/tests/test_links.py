"""Link functions: symmetry, derivatives, log tails."""

import numpy as np
import pytest

from blockhazard.links import LINK_KINDS, LinkFunction

GRID = np.linspace(-6.0, 6.0, 41)


@pytest.mark.parametrize("kind", LINK_KINDS)
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_symmetry(kind, sigma):
    link = LinkFunction(kind, sigma)
    f, fp, fpp = link.evaluate(GRID)
    f_neg, fp_neg, fpp_neg = link.evaluate(-GRID)
    assert np.allclose(f + f_neg, 1.0, atol=1e-12)
    assert np.allclose(fp, fp_neg, atol=1e-12)
    assert np.allclose(fpp, -fpp_neg, atol=1e-12)


@pytest.mark.parametrize("kind", LINK_KINDS)
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_first_derivative_fd(kind, sigma):
    link = LinkFunction(kind, sigma)
    h = 1e-6
    # avoid the laplacian kink at 0
    grid = GRID[np.abs(GRID) > 1e-3]
    fd = (link(grid + h) - link(grid - h)) / (2 * h)
    _, fp, _ = link.evaluate(grid)
    assert np.allclose(fp, fd, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("kind", LINK_KINDS)
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_second_derivative_fd(kind, sigma):
    link = LinkFunction(kind, sigma)
    h = 1e-5
    grid = GRID[np.abs(GRID) > 1e-2]
    _, fp_plus, _ = link.evaluate(grid + h)
    _, fp_minus, _ = link.evaluate(grid - h)
    fd = (fp_plus - fp_minus) / (2 * h)
    _, _, fpp = link.evaluate(grid)
    assert np.allclose(fpp, fd, rtol=1e-4, atol=1e-7)


def test_call_equals_evaluate(rng):
    link = LinkFunction("probit", 1.5)
    theta = rng.standard_normal(10)
    assert np.array_equal(link(theta), link.evaluate(theta)[0])


@pytest.mark.parametrize("kind", LINK_KINDS)
def test_log_f_matches_log(kind):
    link = LinkFunction(kind, 1.0)
    grid = np.linspace(-5, 5, 21)
    assert np.allclose(link.log_f(grid), np.log(link(grid)), atol=1e-10)
    assert np.allclose(link.log_1mf(grid), np.log(1 - link(grid)), atol=1e-10)


def test_logistic_log_f_deep_tail():
    """The closed form must not underflow where naive log(expit) would."""
    link = LinkFunction("logistic", 1.0)
    val = link.log_f(np.array([-800.0]))
    assert np.isfinite(val).all()
    assert np.isclose(val[0], -800.0, rtol=1e-12)


def test_probability_bounds():
    for kind in LINK_KINDS:
        link = LinkFunction(kind, 1.0)
        f = link(GRID)
        assert ((f >= 0) & (f <= 1)).all()
        assert (np.diff(f) >= 0).all()


def test_validation():
    with pytest.raises(ValueError):
        LinkFunction("cauchy", 1.0)
    with pytest.raises(ValueError):
        LinkFunction("logistic", 0.0)
    with pytest.raises(ValueError):
        LinkFunction("logistic", -1.0)
