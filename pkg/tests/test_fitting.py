"""Tests for the damped least-squares engine and the device fits."""

import numpy as np
import pytest

from dfgnoise.converter import ConverterParams, dip_depth, efficiency_curve
from dfgnoise.errors import InsufficientDataError, ParameterError
from dfgnoise.fitting import (
    PowerSweep,
    fit_alpha_linear,
    fit_alpha_visible,
    fit_efficiency_shared,
    lsq_minimize,
    predict_noise_curves,
)

PARAMS = ConverterParams(4.0, 0.67, 0.46, 0.63, 129e3, 25e9)


def _efficiency_sweeps(noise_rel=0.0, rng=None, n=15):
    p = np.linspace(0.02, 0.44, n)
    data = {}
    for kind, eta in (("efficiency_int", 0.67), ("efficiency_ext", 0.46)):
        y = efficiency_curve(p, eta, 0.63, 4.0)
        sigma = np.maximum(noise_rel * y, 1e-4) if noise_rel else np.full_like(p, 0.01)
        if rng is not None and noise_rel:
            y = y + sigma * rng.standard_normal(n)
        data[kind] = PowerSweep(p, y, sigma, kind)
    return data["efficiency_int"], data["efficiency_ext"]


# ------------------------------------------------------------- lsq engine

def test_linear_model_exact():
    x = np.linspace(0.0, 1.0, 7)
    result = lsq_minimize(lambda a: 3.0 * x - a[0] * x, [0.4])
    assert result.values["p0"] == pytest.approx(3.0, abs=1e-14)
    assert result.converged
    assert result.n_iterations <= 5


def test_bent_valley_converges():
    # classic curved-valley test problem with minimum at (1, 1)
    def residual(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    result = lsq_minimize(residual, [-1.2, 1.0])
    assert result.converged
    assert result.values["p0"] == pytest.approx(1.0, abs=1e-6)
    assert result.values["p1"] == pytest.approx(1.0, abs=1e-6)


def test_nonfinite_initial_residuals_rejected():
    from dfgnoise.errors import FitFailureError

    with pytest.raises(FitFailureError):
        lsq_minimize(lambda x: np.array([np.nan]), [1.0])


def test_iteration_cap_reports_best_point():
    def residual(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    result = lsq_minimize(residual, [-1.2, 1.0], max_iter=2)
    assert not result.converged
    assert "cap" in result.message
    assert np.isfinite(result.as_vector()).all()


def test_rank_deficient_model_flagged():
    # two parameters enter only through their sum: singular normal equations
    x = np.linspace(0, 1, 9)
    y = 2.0 * x

    result = lsq_minimize(lambda a: y - (a[0] + a[1]) * x, [0.3, 0.3])
    assert "rank-deficient" in result.message
    assert result.values["p0"] + result.values["p1"] == pytest.approx(2.0, abs=1e-10)


def test_numeric_jacobian_fallback_matches_analytic():
    x = np.linspace(0.1, 1.0, 12)
    y = 0.5 * np.exp(1.3 * x)

    def residual(a):
        return y - a[0] * np.exp(a[1] * x)

    def jac(a):
        out = np.empty((len(x), 2))
        out[:, 0] = -np.exp(a[1] * x)
        out[:, 1] = -a[0] * x * np.exp(a[1] * x)
        return out

    r_num = lsq_minimize(residual, [1.0, 1.0])
    r_ana = lsq_minimize(residual, [1.0, 1.0], jacobian=jac)
    for name in ("p0", "p1"):
        assert r_num.values[name] == pytest.approx(r_ana.values[name], abs=1e-8)


# ------------------------------------------------- shared efficiency fit

def test_shared_fit_noiseless_recovery():
    sweep_int, sweep_ext = _efficiency_sweeps()
    result = fit_efficiency_shared(sweep_int, sweep_ext, 4.0)
    assert result.values["eta_n"] == pytest.approx(0.63, abs=1e-8)
    assert result.values["eta_max_int"] == pytest.approx(0.67, abs=1e-8)
    assert result.values["eta_max_ext"] == pytest.approx(0.46, abs=1e-8)


@pytest.mark.parametrize(
    "initial",
    [(0.3, 0.3, 0.1), (0.9, 0.9, 0.1), (0.3, 0.3, 2.0), (0.9, 0.9, 2.0), (0.6, 0.6, 1.05)],
)
def test_shared_fit_initial_guess_basin(initial):
    sweep_int, sweep_ext = _efficiency_sweeps()
    result = fit_efficiency_shared(sweep_int, sweep_ext, 4.0, initial=initial)
    assert result.values["eta_n"] == pytest.approx(0.63, abs=1e-8)
    assert result.values["eta_max_int"] == pytest.approx(0.67, abs=1e-8)
    assert result.values["eta_max_ext"] == pytest.approx(0.46, abs=1e-8)


def test_shared_fit_monte_carlo_statistics():
    rng = np.random.default_rng(42)
    etas = []
    for _ in range(50):
        sweep_int, sweep_ext = _efficiency_sweeps(noise_rel=0.02, rng=rng)
        result = fit_efficiency_shared(sweep_int, sweep_ext, 4.0)
        etas.append(result.values["eta_n"])
    # 2% point noise on 15 points leaves a sub-percent replicate spread,
    # at or below the scale of the quoted +/-0.02 uncertainty
    assert np.mean(etas) == pytest.approx(0.63, rel=0.01)
    assert 0.001 < np.std(etas) < 0.03


def test_shared_fit_flags_eta_n_mismatch():
    p = np.linspace(0.02, 0.44, 15)
    y_int = efficiency_curve(p, 0.67, 0.63, 4.0)
    y_ext = efficiency_curve(p, 0.46, 1.26, 4.0)  # doubled eta_n
    sweep_int = PowerSweep(p, y_int, 0.02 * np.abs(y_int) + 1e-4, "efficiency_int")
    sweep_ext = PowerSweep(p, y_ext, 0.02 * np.abs(y_ext) + 1e-4, "efficiency_ext")
    result = fit_efficiency_shared(sweep_int, sweep_ext, 4.0)
    assert result.chi2_reduced > 10.0


def test_shared_fit_insufficient_data():
    p = np.array([0.1, 0.2])
    sweep = PowerSweep(p, efficiency_curve(p, 0.67, 0.63, 4.0), [0.01, 0.01], "efficiency_int")
    full_int, full_ext = _efficiency_sweeps()
    with pytest.raises(InsufficientDataError):
        fit_efficiency_shared(sweep, full_ext, 4.0)
    with pytest.raises(InsufficientDataError):
        fit_efficiency_shared(full_int, sweep, 4.0)


def test_shared_fit_chi2_near_one_when_correctly_specified():
    rng = np.random.default_rng(3)
    chi2 = []
    for _ in range(40):
        sweep_int, sweep_ext = _efficiency_sweeps(noise_rel=0.02, rng=rng)
        chi2.append(fit_efficiency_shared(sweep_int, sweep_ext, 4.0).chi2_reduced)
    dof = 2 * 15 - 3
    assert np.mean(chi2) == pytest.approx(1.0, abs=3.0 / np.sqrt(2.0 * dof))


def test_fit_invariances():
    rng = np.random.default_rng(11)
    sweep_int, sweep_ext = _efficiency_sweeps(noise_rel=0.02, rng=rng)
    base = fit_efficiency_shared(sweep_int, sweep_ext, 4.0)

    # uniform sigma rescaling: same values, covariance scales by k^2
    k = 3.0
    scaled = fit_efficiency_shared(
        PowerSweep(sweep_int.pump_w, sweep_int.value, k * sweep_int.sigma, "efficiency_int"),
        PowerSweep(sweep_ext.pump_w, sweep_ext.value, k * sweep_ext.sigma, "efficiency_ext"),
        4.0,
    )
    for name in base.names:
        assert scaled.values[name] == pytest.approx(base.values[name], rel=1e-8)
    assert np.allclose(scaled.covariance, k * k * base.covariance, rtol=1e-6)


def test_fit_independent_of_point_order():
    # the minimizer must not care how residuals are ordered
    rng = np.random.default_rng(8)
    x = np.linspace(0.1, 1.0, 20)
    y = 0.7 * np.exp(1.1 * x) + 0.01 * rng.standard_normal(20)
    perm = rng.permutation(20)

    def make_residual(xs, ys):
        return lambda a: ys - a[0] * np.exp(a[1] * xs)

    direct = lsq_minimize(make_residual(x, y), [1.0, 1.0])
    shuffled = lsq_minimize(make_residual(x[perm], y[perm]), [1.0, 1.0])
    for name in ("p0", "p1"):
        assert shuffled.values[name] == pytest.approx(direct.values[name], rel=1e-8)


def test_jacobian_matches_central_differences():
    """Analytic Jacobians of the built-in models vs central finite differences."""
    from dfgnoise.fitting import _eta_model_and_grads, _logit, _sigmoid

    p = np.linspace(0.02, 0.44, 9)
    u = np.array([_logit(0.61), np.log(0.8)])

    def model_of_u(u_vec):
        return _eta_model_and_grads(p, _sigmoid(u_vec[0]), np.exp(u_vec[1]), 4.0)[0]

    _, d_logit, d_logeta = _eta_model_and_grads(p, _sigmoid(u[0]), np.exp(u[1]), 4.0)
    for j, analytic in ((0, d_logit), (1, d_logeta)):
        h = 1e-6 * max(1.0, abs(u[j]))
        up, dn = u.copy(), u.copy()
        up[j] += h
        dn[j] -= h
        fd = (model_of_u(up) - model_of_u(dn)) / (2 * h)
        assert np.allclose(analytic, fd, rtol=1e-5, atol=1e-9)


# ------------------------------------------------------------- alpha fits

def test_alpha_linear_exact_recovery():
    p = np.linspace(0.005, 0.44, 12)
    rate = 129e3 * p * 4.0
    sweep = PowerSweep(p, rate, np.sqrt(rate) + 1.0, "noise_tele_detuned")
    result = fit_alpha_linear(sweep, 4.0, n_points=4)
    assert result.values["alpha_n"] == pytest.approx(129e3, rel=1e-12)


def test_alpha_linear_zero_rates():
    p = np.linspace(0.01, 0.1, 6)
    sweep = PowerSweep(p, np.zeros_like(p), np.ones_like(p), "noise_tele_detuned")
    assert fit_alpha_linear(sweep, 4.0).values["alpha_n"] == 0.0


def test_alpha_linear_too_many_points_requested():
    p = np.linspace(0.01, 0.1, 3)
    sweep = PowerSweep(p, p, np.ones_like(p), "noise_tele_detuned")
    with pytest.raises(InsufficientDataError):
        fit_alpha_linear(sweep, 4.0, n_points=4)


def test_alpha_visible_exact_recovery():
    p = np.linspace(0.02, 0.44, 12)
    shape = p * 4.0 * np.asarray(dip_depth(PARAMS, p))
    sweep = PowerSweep(p, 391e3 * shape, np.sqrt(391e3 * shape) + 1.0, "noise_vis")
    result = fit_alpha_visible(sweep, PARAMS)
    assert result.values["alpha_n"] == pytest.approx(391e3, rel=1e-12)


def test_alpha_fits_recover_within_sigma_under_noise():
    rng = np.random.default_rng(314)
    p = np.linspace(0.01, 0.44, 12)

    true_det = 129e3 * p * 4.0
    sig_det = 0.02 * true_det
    det = PowerSweep(p, true_det + sig_det * rng.standard_normal(12), sig_det,
                     "noise_tele_detuned")
    r_det = fit_alpha_linear(det, 4.0, n_points=4)
    assert abs(r_det.values["alpha_n"] - 129e3) < 2.0 * r_det.sigmas["alpha_n"]

    shape = p * 4.0 * np.asarray(dip_depth(PARAMS, p))
    true_vis = 391e3 * shape
    sig_vis = 0.03 * true_vis + 1.0
    vis = PowerSweep(p, true_vis + sig_vis * rng.standard_normal(12), sig_vis, "noise_vis")
    r_vis = fit_alpha_visible(vis, PARAMS)
    assert abs(r_vis.values["alpha_n"] - 391e3) < 2.0 * r_vis.sigmas["alpha_n"]


# ------------------------------------------------------ forward prediction

def test_predicted_curves_close_on_own_parameters():
    curves = predict_noise_curves(PARAMS, alpha_n_visible=391e3)
    p = np.linspace(0.0, 0.44, 23)
    from dfgnoise.converter import telecom_noise_rate, visible_noise_rate

    assert np.allclose(curves.telecom_onpeak(p), telecom_noise_rate(PARAMS, p), rtol=1e-14)
    assert np.allclose(curves.telecom_detuned(p), 129e3 * p * 4.0, rtol=1e-14)
    vis_params = ConverterParams(4.0, 0.67, 0.46, 0.63, 391e3, 25e9)
    assert np.allclose(curves.visible(p), visible_noise_rate(vis_params, p), rtol=1e-14)
    assert curves.peak_pump_w == pytest.approx(0.2447818, abs=1e-6)


def test_predicted_onpeak_to_detuned_ratio_at_full_power():
    curves = predict_noise_curves(PARAMS)
    ratio = curves.telecom_onpeak(0.44) / curves.telecom_detuned(0.44)
    assert ratio == pytest.approx(1.0 - 0.40478302665, abs=5e-4)


def test_quadratic_overestimates_far_outside_validity():
    curves = predict_noise_curves(PARAMS, alpha_n_visible=391e3)
    assert curves.visible_quadratic(0.44) / curves.visible(0.44) > 1.25


# ------------------------------------------------------------- power sweep

def test_power_sweep_validation():
    with pytest.raises(ParameterError):
        PowerSweep([0.2, 0.1], [1.0, 2.0], [0.1, 0.1], "noise_vis")
    with pytest.raises(ParameterError):
        PowerSweep([0.1, 0.2], [1.0, 2.0], [0.1, 0.0], "noise_vis")
    with pytest.raises(ParameterError):
        PowerSweep([0.1, 0.2], [1.0, 2.0], [0.1, 0.1], "mystery")
