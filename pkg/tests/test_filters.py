import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowpass_cf.errors import FitError, ParameterError
from lowpass_cf.filters import (
    FilterSpec,
    default_grid,
    fit_ideal_lpf,
    fit_response,
    frequency_response,
    predefined_filter,
    read_filter,
    write_filter,
)
from lowpass_cf.oracle import eigendecompose, laplacian
from lowpass_cf.recommend import filter_matrix

from .conftest import random_psd

# Frozen from a 50-digit mpmath normal-equation solve, cross-checked by an SVD
# least-squares solve (agreement 1e-14): tau=0.1, order 3, 1001 uniform points.
GOLDEN_TAU_01 = (1.3637469351668782, -5.8890001929198325, 5.565485052039580)
GOLDEN_TAU_01_RMS = 0.15531521486745867
# A cubic that is not the least-squares fit: zero at lam=1 but gain -20 at lam=0.
NONFIT_TAU_01 = (-29.0, 10.0, -1.0)


def test_linear_response():
    f = predefined_filter("linear")
    assert f.coeffs == (1.0,)
    assert frequency_response(f, [0.0, 1.0]).gains.tolist() == [1.0, 0.0]


def test_second_order_response():
    f = predefined_filter("second_order")
    assert f.coeffs == (2.0, -1.0)
    assert frequency_response(f, [0.5]).gains[0] == pytest.approx(0.75, abs=1e-15)
    lam = default_grid()
    np.testing.assert_allclose(frequency_response(f, lam).gains, 1 - lam**2, atol=1e-15)


def test_nonfit_coefficients_vanish_at_one_and_miss_unit_passband():
    f = FilterSpec(NONFIT_TAU_01)
    assert frequency_response(f, [1.0]).gains[0] == 0.0
    assert frequency_response(f, [0.0]).gains[0] == -20.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=6))
def test_stopband_endpoint(coeffs):
    assert frequency_response(FilterSpec(coeffs), [1.0]).gains[0] == 0.0


def test_passband_endpoint_builtins():
    for kind in ("linear", "second_order"):
        assert frequency_response(predefined_filter(kind), [0.0]).gains[0] == 1.0


def test_kind_invariants():
    with pytest.raises(ParameterError):
        FilterSpec((2.0,), "linear")
    with pytest.raises(ParameterError):
        FilterSpec((), "custom")
    with pytest.raises(ParameterError):
        FilterSpec((float("nan"),))
    with pytest.raises(ParameterError):
        predefined_filter("ideal_approx", tau=1.5)
    with pytest.raises(ParameterError):
        predefined_filter("ideal_approx", beta=-1)
    with pytest.raises(ParameterError):
        predefined_filter("quartic")


def test_blend_response():
    f = predefined_filter("ideal_approx", 0.1, 0.3)
    lam = default_grid()
    expected = (1 - lam) + 0.3 * sum(a * (1 - lam) ** (k + 1) for k, a in enumerate(f.coeffs))
    np.testing.assert_allclose(frequency_response(f, lam).gains, expected, atol=1e-13)
    unblended = FilterSpec(f.coeffs, "ideal_approx", tau=0.1)
    np.testing.assert_allclose(frequency_response(unblended, lam).gains, (expected - (1 - lam)) / 0.3, atol=1e-12)


def test_beta_zero_is_linear():
    f = predefined_filter("ideal_approx", 0.1, 0.0)
    assert f.effective_coeffs == (1.0,)


def test_fit_exact_linear():
    fit = fit_response(lambda lam: 1 - lam, 1)
    assert fit.coeffs[0] == pytest.approx(1.0, abs=1e-12)
    assert fit.rms <= 1e-10


def test_fit_exact_second_order():
    # 1 - lam^2 = 2(1 - lam) - (1 - lam)^2
    lam = default_grid()
    x = 1 - lam
    np.testing.assert_allclose(2 * x - x**2, 1 - lam**2, atol=1e-15)
    fit = fit_response(lambda lam: 1 - lam**2, 2)
    np.testing.assert_allclose(fit.coeffs, [2.0, -1.0], atol=1e-10)
    assert fit.rms <= 1e-10


def test_fit_ideal_golden():
    fit = fit_ideal_lpf(0.1, 3)
    np.testing.assert_allclose(fit.coeffs, GOLDEN_TAU_01, rtol=1e-10)
    assert fit.rms == pytest.approx(GOLDEN_TAU_01_RMS, rel=1e-10)
    assert predefined_filter("ideal_approx", 0.1, 0.5).coeffs == pytest.approx(GOLDEN_TAU_01, rel=1e-10)


def test_fit_matches_independent_lstsq():
    lam = np.linspace(0, 1, 301)
    w = 1 + lam
    X = np.stack([(1 - lam) ** k for k in (1, 2, 3, 4)], axis=1)
    y = (lam <= 0.25).astype(float)
    ref, *_ = np.linalg.lstsq(np.sqrt(w)[:, None] * X, np.sqrt(w) * y, rcond=None)
    fit = fit_ideal_lpf(0.25, 4, grid=lam, weights=w)
    np.testing.assert_allclose(fit.coeffs, ref, rtol=1e-8)


def test_nonlinear_solver_agrees():
    lin = fit_ideal_lpf(0.1, 3)
    nonlin = fit_ideal_lpf(0.1, 3, method="nonlinear")
    np.testing.assert_allclose(nonlin.coeffs, lin.coeffs, rtol=1e-6)


@pytest.mark.parametrize("tau, order", [(0.1, 3), (0.3, 2), (0.05, 1)])
def test_fit_local_optimality(tau, order):
    fit = fit_ideal_lpf(tau, order)
    lam = default_grid()
    target = (lam <= tau).astype(float)

    def objective(coeffs):
        return np.sum((frequency_response(FilterSpec(coeffs), lam).gains - target) ** 2)

    best = objective(fit.coeffs)
    for k in range(order):
        for delta in (1e-3, -1e-3):
            moved = list(fit.coeffs)
            moved[k] += delta
            assert objective(moved) >= best


def test_fit_singular_grid():
    with pytest.raises(FitError):
        fit_response(lambda lam: lam, 3, grid=np.array([0.0, 0.5]))
    with pytest.raises(FitError):
        fit_response(lambda lam: lam, 2, grid=np.array([1.0, 1.0, 1.0]) * 0.3)


def test_response_grid_must_increase():
    with pytest.raises(ParameterError):
        frequency_response(predefined_filter("linear"), [0.5, 0.2])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), coeffs=st.lists(st.floats(-5, 5), min_size=1, max_size=4))
def test_response_is_eigenvalue_map(seed, coeffs):
    rng = np.random.default_rng(seed)
    P = random_psd(rng, int(rng.integers(2, 20)))
    f = FilterSpec(coeffs)
    lam, U = eigendecompose(laplacian(P))
    mapped = np.diag(U.T @ filter_matrix_from(P, f) @ U)
    np.testing.assert_allclose(mapped, polynomial_gain(f, lam), atol=1e-8)


def filter_matrix_from(P, f):
    from lowpass_cf.graph import SimilarityGraph

    return filter_matrix(SimilarityGraph(P, 0.5, 1.0), f)


def polynomial_gain(f, lam):
    # lam from eigh is ascending but may repeat; evaluate pointwise
    return np.array([frequency_response(f, [x]).gains[0] for x in lam])


def test_filter_file_round_trip(tmp_path):
    f = predefined_filter("ideal_approx", 0.1, 0.25)
    write_filter(tmp_path / "f.txt", f)
    assert read_filter(tmp_path / "f.txt") == f
    (tmp_path / "g.txt").write_text("kind = custom\ncoeffs = -29,10,-1\n")
    assert read_filter(tmp_path / "g.txt").coeffs == NONFIT_TAU_01
