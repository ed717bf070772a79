"""Weighted least-squares machinery and the device parameter fits.

A small Levenberg-Marquardt minimizer (:func:`lsq_minimize`) drives all
nonlinear fits.  On top of it sit the three fits used to characterize a
converter:

* :func:`fit_efficiency_shared` -- joint sin^2 fit of the internal and
  external efficiency sweeps with a common conversion parameter,
* :func:`fit_alpha_linear` -- zero-intercept linear fit of the detuned
  telecom noise, giving the noise coefficient directly,
* :func:`fit_alpha_visible` -- visible noise fit with the saturation
  shape fixed and the noise coefficient as the only free parameter.

:func:`predict_noise_curves` then turns a parameter set into the model
curves for overlay plots and residual checks, with no further tuning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from . import converter
from .converter import ConverterParams, peak_pump_power, suppression_depth
from .errors import FitFailureError, InsufficientDataError, ParameterError

__all__ = [
    "PowerSweep",
    "FitResult",
    "NoiseCurves",
    "lsq_minimize",
    "fit_efficiency_shared",
    "fit_alpha_linear",
    "fit_alpha_visible",
    "predict_noise_curves",
]

SWEEP_KINDS = (
    "efficiency_int",
    "efficiency_ext",
    "noise_tele_onpeak",
    "noise_tele_detuned",
    "noise_vis",
)

_MAX_DAMPING = 1e14


@dataclass
class PowerSweep:
    """A rate-or-efficiency-vs-pump-power dataset with per-point uncertainty.

    ``value`` is in Hz for the noise kinds and dimensionless for the
    efficiency kinds; ``sigma`` shares its units.
    """

    pump_w: np.ndarray
    value: np.ndarray
    sigma: np.ndarray
    kind: str

    def __post_init__(self):
        self.pump_w = np.asarray(self.pump_w, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.kind not in SWEEP_KINDS:
            raise ParameterError(f"unknown sweep kind {self.kind!r}")
        if self.pump_w.ndim != 1 or len({len(self.pump_w), len(self.value), len(self.sigma)}) != 1:
            raise ParameterError("pump_w, value and sigma must be 1-d and equally long")
        if np.any(self.pump_w < 0):
            raise ParameterError("pump powers must be non-negative")
        if np.any(np.diff(self.pump_w) <= 0):
            raise ParameterError("pump powers must be strictly increasing")
        if np.any(self.sigma <= 0):
            raise ParameterError("all sigma values must be positive")

    def __len__(self) -> int:
        return len(self.pump_w)


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``values`` and ``sigmas`` are keyed by parameter name; ``covariance``
    follows the ordering of ``names``.  ``chi2_reduced`` is the weighted
    sum of squares per degree of freedom.
    """

    names: list[str]
    values: dict[str, float]
    sigmas: dict[str, float]
    covariance: np.ndarray
    chi2_reduced: float
    n_iterations: int
    converged: bool
    message: str
    n_points: int = 0

    def as_vector(self) -> np.ndarray:
        return np.array([self.values[n] for n in self.names])


def _numeric_jacobian(residual, x, r0):
    jac = np.empty((len(r0), len(x)))
    for j in range(len(x)):
        h = 1e-7 * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += h
        jac[:, j] = (np.asarray(residual(xp), dtype=float) - r0) / h
    return jac


def lsq_minimize(
    residual: Callable[[np.ndarray], np.ndarray],
    initial: Sequence[float],
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
    names: Sequence[str] | None = None,
    max_iter: int = 200,
    ftol: float = 1e-10,
    xtol: float = 1e-12,
) -> FitResult:
    """Minimize the sum of squared residuals with damped least squares.

    ``residual`` maps a parameter vector to the vector of weighted
    residuals; ``jacobian``, if given, returns the (m, n) matrix of its
    partial derivatives (forward differences otherwise).  The damping
    parameter is adapted multiplicatively: large damping makes steps
    gradient-descent-like, small damping Gauss-Newton-like.

    Convergence is declared when the relative cost change drops below
    ``ftol`` or the step norm below ``xtol`` (relative to the parameter
    norm).  After ``max_iter`` iterations the best point found is
    returned with ``converged=False``.  Singular normal equations are
    solved in the least-squares sense and reported in ``message``.
    """
    x = np.asarray(initial, dtype=float).copy()
    if names is None:
        names = [f"p{i}" for i in range(len(x))]
    names = list(names)
    if len(names) != len(x):
        raise ParameterError("names and initial vector disagree in length")

    r = np.asarray(residual(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise FitFailureError("residuals are not finite at the initial point")
    cost = float(r @ r)
    m, n = len(r), len(x)

    lam = 1e-4
    rank_deficient = False
    converged = False
    message = f"iteration cap of {max_iter} reached"
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        jac = jacobian(x) if jacobian is not None else _numeric_jacobian(residual, x, r)
        jac = np.asarray(jac, dtype=float)
        grad = jac.T @ r
        hess = jac.T @ jac

        accepted = False
        step = np.zeros(n)
        while lam <= _MAX_DAMPING:
            damp = lam * np.diag(hess)
            floor = lam * max(np.max(np.diag(hess)), 1e-30)
            damp = np.maximum(damp, floor * 1e-10)
            try:
                step = np.linalg.solve(hess + np.diag(damp), -grad)
            except np.linalg.LinAlgError:
                rank_deficient = True
                step = np.linalg.lstsq(hess + np.diag(damp), -grad, rcond=None)[0]
            x_try = x + step
            r_try = np.asarray(residual(x_try), dtype=float)
            if np.all(np.isfinite(r_try)):
                cost_try = float(r_try @ r_try)
                if cost_try < cost:
                    accepted = True
                    break
            lam *= 10.0
        if not accepted:
            # no downhill direction left: treat as converged at a stationary point
            converged = True
            message = "no further cost reduction possible"
            break

        x = x + step
        prev_cost, cost, r = cost, cost_try, r_try
        lam = max(lam / 9.0, 1e-12)

        if cost == 0.0:
            converged = True
            message = "residuals vanished"
            break
        if (prev_cost - cost) < ftol * max(prev_cost, np.finfo(float).tiny):
            converged = True
            message = "relative cost change below ftol"
            break
        if np.linalg.norm(step) < xtol * max(1.0, np.linalg.norm(x)):
            converged = True
            message = "step norm below xtol"
            break

    jac = jacobian(x) if jacobian is not None else _numeric_jacobian(residual, x, r)
    jac = np.asarray(jac, dtype=float)
    hess = jac.T @ jac
    if np.linalg.matrix_rank(hess) < n:
        rank_deficient = True
        covariance = np.linalg.pinv(hess)
    else:
        try:
            covariance = np.linalg.inv(hess)
        except np.linalg.LinAlgError:
            rank_deficient = True
            covariance = np.linalg.pinv(hess)
    if rank_deficient:
        message += "; normal equations rank-deficient (covariance from pseudo-inverse)"

    with np.errstate(invalid="ignore"):
        sig = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    chi2_red = cost / (m - n) if m > n else float("nan")
    return FitResult(
        names=names,
        values={k: float(v) for k, v in zip(names, x)},
        sigmas={k: float(s) for k, s in zip(names, sig)},
        covariance=covariance,
        chi2_reduced=float(chi2_red),
        n_iterations=n_iter,
        converged=converged,
        message=message,
        n_points=m,
    )


def _logit(p):
    return np.log(p / (1.0 - p))


def _sigmoid(u):
    return expit(u)


def _eta_model_and_grads(p, eta_max, eta_n, length_cm):
    """sin^2 model plus derivatives w.r.t. logit(eta_max) and log(eta_n)."""
    theta = length_cm * np.sqrt(eta_n * p)
    s = np.sin(theta)
    model = eta_max * s * s
    d_logit = s * s * eta_max * (1.0 - eta_max)
    d_logeta = eta_max * np.sin(2.0 * theta) * theta / 2.0
    return model, d_logit, d_logeta


def _initial_efficiency_guess(sweep: PowerSweep, length_cm: float) -> tuple[float, float]:
    """Crude (eta_max, eta_n) start: the largest observed efficiency and the
    conversion parameter implied by the position of the observed maximum."""
    eta_guess = float(np.clip(np.max(sweep.value), 1e-3, 1.0 - 1e-3))
    i_max = int(np.argmax(sweep.value))
    p_star = sweep.pump_w[i_max]
    if p_star <= 0:
        p_star = sweep.pump_w[-1]
    if i_max == len(sweep) - 1:
        # no turnover seen: assume the peak lies just beyond the scan
        p_star = 1.2 * p_star
    eta_n_guess = (np.pi / (2.0 * length_cm)) ** 2 / p_star
    return eta_guess, eta_n_guess


def fit_efficiency_shared(
    sweep_int: PowerSweep,
    sweep_ext: PowerSweep,
    length_cm: float,
    initial: tuple[float, float, float] | None = None,
) -> FitResult:
    """Joint fit of both efficiency sweeps with a shared conversion parameter.

    Fits eta_max * sin^2(L*sqrt(eta_n*P)) to the internal and external
    sweeps simultaneously; ``eta_n`` is common, the saturation values are
    separate.  Internally the fit runs in logit(eta_max) / log(eta_n)
    coordinates so the range constraints need no bounded optimizer;
    results and covariance are reported in natural units.

    ``initial`` optionally overrides the automatic starting point as
    (eta_max_int, eta_max_ext, eta_n).
    """
    if len(sweep_int) < 3 or len(sweep_ext) < 3:
        raise InsufficientDataError("need at least 3 points per efficiency sweep")
    if length_cm <= 0:
        raise ParameterError("length_cm must be positive")

    if initial is None:
        g_int, en_int = _initial_efficiency_guess(sweep_int, length_cm)
        g_ext, en_ext = _initial_efficiency_guess(sweep_ext, length_cm)
        start = (g_int, g_ext, np.sqrt(en_int * en_ext))
    else:
        start = (initial[0], initial[1], initial[2])

    p_i, y_i, s_i = sweep_int.pump_w, sweep_int.value, sweep_int.sigma
    p_e, y_e, s_e = sweep_ext.pump_w, sweep_ext.value, sweep_ext.sigma

    def residual(u):
        a_i, a_e, eta_n = _sigmoid(u[0]), _sigmoid(u[1]), np.exp(u[2])
        m_i, _, _ = _eta_model_and_grads(p_i, a_i, eta_n, length_cm)
        m_e, _, _ = _eta_model_and_grads(p_e, a_e, eta_n, length_cm)
        return np.concatenate([(y_i - m_i) / s_i, (y_e - m_e) / s_e])

    def jac(u):
        a_i, a_e, eta_n = _sigmoid(u[0]), _sigmoid(u[1]), np.exp(u[2])
        _, di_logit, di_log = _eta_model_and_grads(p_i, a_i, eta_n, length_cm)
        _, de_logit, de_log = _eta_model_and_grads(p_e, a_e, eta_n, length_cm)
        out = np.zeros((len(p_i) + len(p_e), 3))
        out[: len(p_i), 0] = -di_logit / s_i
        out[: len(p_i), 2] = -di_log / s_i
        out[len(p_i):, 1] = -de_logit / s_e
        out[len(p_i):, 2] = -de_log / s_e
        return out

    # the sin^2 model has secondary cost basins when eta_n starts far off;
    # restart from a small ladder of eta_n rescalings and keep the best
    raw = None
    for factor in (1.0, 0.25, 4.0):
        u0 = np.array([
            _logit(np.clip(start[0], 1e-3, 1 - 1e-3)),
            _logit(np.clip(start[1], 1e-3, 1 - 1e-3)),
            np.log(max(start[2] * factor, 1e-12)),
        ])
        candidate = lsq_minimize(residual, u0, jacobian=jac,
                                 names=["u_int", "u_ext", "log_eta_n"])
        cand_cost = float(residual(candidate.as_vector()) @ residual(candidate.as_vector()))
        if raw is None or cand_cost < best_cost:
            raw, best_cost = candidate, cand_cost

    u = raw.as_vector()
    theta = np.array([_sigmoid(u[0]), _sigmoid(u[1]), np.exp(u[2])])
    # covariance through the coordinate change, diag Jacobian
    scale = np.array([theta[0] * (1 - theta[0]), theta[1] * (1 - theta[1]), theta[2]])
    cov = raw.covariance * np.outer(scale, scale)
    names = ["eta_max_int", "eta_max_ext", "eta_n"]
    return FitResult(
        names=names,
        values=dict(zip(names, map(float, theta))),
        sigmas=dict(zip(names, map(float, np.sqrt(np.maximum(np.diag(cov), 0.0))))),
        covariance=cov,
        chi2_reduced=raw.chi2_reduced,
        n_iterations=raw.n_iterations,
        converged=raw.converged,
        message=raw.message,
        n_points=raw.n_points,
    )


def _weighted_proportional_fit(basis, y, sigma, name):
    """Exact weighted fit of y = a * basis; returns a 1-parameter FitResult."""
    w = 1.0 / (sigma * sigma)
    denom = float(np.sum(w * basis * basis))
    if denom == 0.0:
        # all basis values zero: only y == 0 is consistent, report a = 0
        a, var = 0.0, float("inf")
    else:
        a = float(np.sum(w * basis * y) / denom)
        var = 1.0 / denom
    res = (y - a * basis) / sigma
    dof = len(y) - 1
    return FitResult(
        names=[name],
        values={name: a},
        sigmas={name: float(np.sqrt(var))},
        covariance=np.array([[var]]),
        chi2_reduced=float(res @ res / dof) if dof > 0 else float("nan"),
        n_iterations=1,
        converged=True,
        message="closed-form weighted linear fit",
        n_points=len(y),
    )


def fit_alpha_linear(sweep: PowerSweep, length_cm: float, n_points: int = 4) -> FitResult:
    """Noise coefficient from the low-power, linear part of a noise sweep.

    Weighted zero-intercept fit of rate = alpha_n * L * P on the first
    ``n_points`` points, appropriate for detuned telecom data where the
    SFG suppression is absent.
    """
    if length_cm <= 0:
        raise ParameterError("length_cm must be positive")
    if n_points < 1 or n_points > len(sweep):
        raise InsufficientDataError(
            f"n_points={n_points} but sweep has {len(sweep)} points"
        )
    sel = slice(0, n_points)
    basis = sweep.pump_w[sel] * length_cm
    return _weighted_proportional_fit(basis, sweep.value[sel], sweep.sigma[sel], "alpha_n")


def fit_alpha_visible(
    sweep: PowerSweep,
    params: ConverterParams,
    shape_covariance: np.ndarray | None = None,
) -> FitResult:
    """Noise coefficient from a visible noise sweep with the shape fixed.

    The saturation shape P*L*(eta_max/2)*(1 - sinc(2L*sqrt(eta_n*P))) is
    fully determined by the efficiency fit; the visible data then only
    set the overall coefficient, which stays a linear parameter.

    When the shape parameters come from a fit, pass that fit's covariance
    (ordered eta_max_int, eta_max_ext, eta_n) as ``shape_covariance``:
    its contribution is propagated into the reported uncertainty, which
    otherwise reflects counting statistics only.
    """
    if len(sweep) < 2:
        raise InsufficientDataError("need at least 2 points for the visible fit")

    def alpha_for(eta_int: float, eta_n: float) -> FitResult:
        shape = sweep.pump_w * params.length_cm * suppression_depth(
            sweep.pump_w, eta_int, eta_n, params.length_cm
        )
        return _weighted_proportional_fit(shape, sweep.value, sweep.sigma, "alpha_n")

    result = alpha_for(params.eta_max_int, params.eta_n)
    if shape_covariance is None:
        return result

    # central-difference sensitivity of alpha to the shape parameters;
    # eta_max_ext never enters the visible shape, so its column is zero
    grad = np.zeros(3)
    for slot, value in ((0, params.eta_max_int), (2, params.eta_n)):
        h = 1e-6 * max(1.0, abs(value))
        if slot == 0:
            up = alpha_for(value + h, params.eta_n).values["alpha_n"]
            dn = alpha_for(value - h, params.eta_n).values["alpha_n"]
        else:
            up = alpha_for(params.eta_max_int, value + h).values["alpha_n"]
            dn = alpha_for(params.eta_max_int, value - h).values["alpha_n"]
        grad[slot] = (up - dn) / (2.0 * h)
    var_shape = float(grad @ np.asarray(shape_covariance, dtype=float) @ grad)
    var_total = result.covariance[0, 0] + max(var_shape, 0.0)
    result.covariance = np.array([[var_total]])
    result.sigmas = {"alpha_n": float(np.sqrt(var_total))}
    return result


@dataclass
class NoiseCurves:
    """Model curves for rate-vs-power overlays, all callables of pump power in W."""

    telecom_onpeak: Callable[[np.ndarray], np.ndarray]
    telecom_detuned: Callable[[np.ndarray], np.ndarray]
    visible: Callable[[np.ndarray], np.ndarray]
    visible_quadratic: Callable[[np.ndarray], np.ndarray]
    peak_pump_w: float = 0.0


def predict_noise_curves(
    params: ConverterParams, alpha_n_visible: float | None = None
) -> NoiseCurves:
    """Forward noise-rate predictions from an already-determined parameter set.

    The telecom curves use ``params.alpha_n``; the visible curves use
    ``alpha_n_visible`` when given (the visible coefficient refers to the
    full dip bandwidth rather than the telecom filter bandwidth), else
    fall back to ``params.alpha_n``.  No parameter is re-tuned here.
    """
    a_vis = params.alpha_n if alpha_n_visible is None else alpha_n_visible
    vis_params = ConverterParams(
        length_cm=params.length_cm,
        eta_max_int=params.eta_max_int,
        eta_max_ext=params.eta_max_ext,
        eta_n=params.eta_n,
        alpha_n=a_vis,
        bandwidth_ref_hz=params.bandwidth_ref_hz,
    )
    return NoiseCurves(
        telecom_onpeak=lambda p: converter.telecom_noise_rate(params, p),
        telecom_detuned=lambda p: _scalar_like(p, params.alpha_n * params.length_cm),
        visible=lambda p: converter.visible_noise_rate(vis_params, p),
        visible_quadratic=lambda p: converter.visible_noise_rate_lowpower(vis_params, p),
        peak_pump_w=peak_pump_power(params),
    )


def _scalar_like(p, slope):
    out = np.asarray(p, dtype=float) * slope
    return float(out) if np.ndim(out) == 0 else out
