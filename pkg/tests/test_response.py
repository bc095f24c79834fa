import numpy as np
import pytest

from vamplan.response import LINEAR_IDENTITY, ResponseModel


@pytest.fixture
def defaults():
    return ResponseModel()  # A=0, K=1, B=10, M'=0.5, nu=1


def test_respond_at_inflection(defaults):
    assert defaults.respond(0.5) == pytest.approx(0.5)


def test_respond_right_asymptote(defaults):
    assert defaults.respond(1e6) == pytest.approx(1.0)
    assert defaults.respond(4.0) < 1.0


def test_respond_at_zero_dose(defaults):
    # direct evaluation: 1 / (1 + e^5)
    assert defaults.respond(0.0) == pytest.approx(1.0 / (1.0 + np.exp(5.0)), rel=1e-12)


def test_respond_bounded_and_overflow_safe(defaults):
    f = np.array([-1e6, -100.0, 0.0, 0.5, 100.0, 1e6])
    out = defaults.respond(f)
    # bounds saturate to the asymptotes in floating point, never escape them
    assert np.all(out >= 0.0) and np.all(out <= 1.0)
    assert np.all(np.isfinite(out))
    mid = defaults.respond(np.array([-2.0, 0.0, 1.0, 3.0]))
    assert np.all(mid > 0.0) and np.all(mid < 1.0)


def test_respond_monotone(defaults):
    f = np.linspace(-2.0, 3.0, 400)
    out = defaults.respond(f)
    assert np.all(np.diff(out) > 0)


def test_derivative_at_inflection(defaults):
    # logistic slope maximum: B (K - A) / 4
    assert defaults.derivative(0.5) == pytest.approx(2.5)


def test_derivative_identity():
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    assert np.all(ident.derivative(np.array([-5.0, 0.0, 17.0])) == 1.0)
    assert np.all(ident.respond(np.array([-5.0, 0.0, 17.0])) == [-5.0, 0.0, 17.0])


@pytest.mark.parametrize(
    "model,lo,hi",
    [
        (ResponseModel(), -0.5, 1.5),
        (ResponseModel(B=25.0), 0.0, 1.0),  # steeper curves: stay where the
        # slope is resolvable by central differences
        (ResponseModel(nu=2.5, B=7.0, K=2.0, A=-0.5), -0.5, 1.5),
    ],
)
def test_derivative_matches_finite_difference(model, lo, hi):
    f = np.linspace(lo, hi, 100)
    h = 1e-5
    fd = (model.respond(f + h) - model.respond(f - h)) / (2 * h)
    an = model.derivative(f)
    assert np.max(np.abs(fd - an) / np.abs(an)) <= 1e-6


def test_derivative_positive_everywhere(defaults):
    f = np.linspace(-30.0, 30.0, 100)
    assert np.all(defaults.derivative(f) > 0)


def test_invert_at_inflection(defaults):
    assert defaults.invert(0.5) == pytest.approx(0.5, abs=1e-9)


def test_invert_clamps_out_of_range(defaults):
    # above the right asymptote: clamp to the dose at the upper table bound
    top_dose = defaults.invert(1.2)
    lo, hi = defaults.inverse_bounds
    assert top_dose == pytest.approx(defaults.invert_exact(hi))
    assert defaults.invert(5.0) == top_dose
    bottom_dose = defaults.invert(-3.0)
    assert bottom_dose == pytest.approx(defaults.invert_exact(lo))


def test_invert_roundtrip(defaults):
    doses = np.linspace(0.1, 0.9, 100)
    # responses for these doses lie within [respond(0.1), respond(0.9)]
    back = defaults.invert(defaults.respond(doses))
    assert np.max(np.abs(back - doses)) <= 1e-4


def test_invert_roundtrip_general_curve():
    model = ResponseModel(A=-0.2, K=1.4, B=6.0, M_prime=0.3, nu=1.7)
    doses = np.linspace(0.0, 0.9, 100)
    back = model.invert(model.respond(doses))
    assert np.max(np.abs(back - doses)) <= 1e-4


def test_invert_monotone_non_decreasing(defaults):
    fm = np.linspace(-0.5, 1.5, 500)
    out = defaults.invert(fm)
    assert np.all(np.diff(out) >= 0)


def test_identity_invert_unclamped():
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    assert ident.invert(1e7) == 1e7
    assert ident.invert(-42.0) == -42.0


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        ResponseModel(A=1.0, K=0.5)
    with pytest.raises(ValueError):
        ResponseModel(B=-1.0)
    with pytest.raises(ValueError):
        ResponseModel(nu=0.0)
    with pytest.raises(ValueError):
        ResponseModel(variant="cubic")
