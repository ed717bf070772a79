"""End-to-end command pipelines: synthetic data generation, fitting runs
and normalization, shared between the CLI and the test suite.

Every pipeline is deterministic given (config, seed): sub-streams of the
run seed are derived per data product, and per-point seeds within a
sweep are derived from the product stream, so outputs never depend on
evaluation order.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from . import converter, counting, dataio, spectra
from .config import RunConfig
from .errors import DataFormatError, ParameterError
from .fitting import (
    FitResult,
    PowerSweep,
    fit_alpha_linear,
    fit_alpha_visible,
    fit_efficiency_shared,
)

__all__ = [
    "simulate_efficiency",
    "simulate_telecom_spectrum",
    "simulate_visible_spectrum",
    "simulate_power_sweep",
    "visible_in_band_fraction",
    "sweep_from_counts",
    "run_fit_efficiency",
    "run_fit_noise",
    "NOISE_SWEEP_KINDS",
]

# sub-stream indices of the run seed, one per data product
_STREAM_EFF_INT = 0
_STREAM_EFF_EXT = 1
_STREAM_TELE_SPECTRUM = 2
_STREAM_VIS_SPECTRUM = 3
_STREAM_SWEEP = {"noise_tele_onpeak": 4, "noise_tele_detuned": 5, "noise_vis": 6}

NOISE_SWEEP_KINDS = tuple(_STREAM_SWEEP)

# minimum believable efficiency uncertainty, as a fraction of eta_max
_EFF_SIGMA_FLOOR = 0.01


def _vis_params(cfg: RunConfig) -> converter.ConverterParams:
    """Converter parameters with the visible noise coefficient swapped in."""
    dip_bw = spectra.bandwidth_nm_to_hz(cfg.modes[0].fwhm_dip_nm, cfg.modes[0].lambda_tele_nm)
    return replace(cfg.converter, alpha_n=cfg.alpha_n_visible, bandwidth_ref_hz=dip_bw)


def _fine_step(scan_step: float, *widths: float) -> float:
    return min(scan_step, min(widths) / 10.0)


def _counting_noise(scan: spectra.SpectralScan, chain, rng) -> spectra.SpectralScan:
    """Poisson-sample a scan through a chain and normalize back, clipping
    the (rare) negative dark-subtracted values at zero."""
    transmission = counting.chain_transmission(chain)
    t = chain.integration_time_s
    mean = (scan.rate_hz * transmission + chain.dark_rate_hz) * t
    observed = rng.poisson(mean)
    rate = (observed / t - chain.dark_rate_hz) / transmission
    return spectra.SpectralScan(
        wavelength_nm=scan.wavelength_nm,
        rate_hz=np.clip(rate, 0.0, None),
        filter_fwhm_nm=scan.filter_fwhm_nm,
        step_nm=scan.step_nm,
        integration_time_s=t,
    )


def simulate_efficiency(cfg: RunConfig, seed: int, out_dir: Path) -> list[Path]:
    """Synthetic internal/external efficiency sweeps with relative Gaussian
    noise, written as two ``pump_w,value,sigma`` files."""
    grid = cfg.sweep.grid()
    rel = cfg.sweep.efficiency_noise_rel
    paths = []
    for kind, which, stream in (
        ("efficiency_int", "internal", _STREAM_EFF_INT),
        ("efficiency_ext", "external", _STREAM_EFF_EXT),
    ):
        model = np.asarray(converter.dfg_efficiency(cfg.converter, grid, which=which))
        floor = _EFF_SIGMA_FLOOR * rel * cfg.converter.eta_max(which)
        sigma = np.maximum(rel * model, max(floor, 1e-12))
        rng = np.random.default_rng(counting.derive_seed(seed, stream))
        value = model + sigma * rng.standard_normal(len(grid))
        sweep = PowerSweep(pump_w=grid, value=value, sigma=sigma, kind=kind)
        path = dataio.write_sweep_csv(
            sweep, out_dir / f"{kind}.csv",
            metadata={"seed": seed, "units": {"pump_w": "W", "value": "1", "sigma": "1"},
                      "noise_rel": rel},
        )
        paths.append(path)
    return paths


def _simulated_scan(
    intrinsic: spectra.SpectralScan,
    instrument: spectra.FilterProfile,
    out_grid: np.ndarray,
    chain,
    rng,
) -> spectra.SpectralScan:
    # shape-only instrument response: insertion loss already sits in the chain
    response = replace(instrument, peak_transmission=1.0)
    observed = spectra.convolve_with_filter(intrinsic, response)
    sampled = spectra.resample_scan(observed, out_grid)
    return _counting_noise(sampled, chain, rng)


def simulate_telecom_spectrum(
    cfg: RunConfig, seed: int, out_dir: Path, pump_w: float | None = None
) -> Path:
    """Synthetic telecom noise scan: intrinsic dips, grating-filter
    broadening, Poisson counting, normalization back to waveguide rates."""
    p = cfg.sweep.pump_max_w if pump_w is None else pump_w
    scan_cfg = cfg.telecom_scan
    step = _fine_step(scan_cfg.step_nm, cfg.tg_filter.fwhm_nm,
                      *(m.fwhm_dip_nm for m in cfg.modes))
    pad = 6.0 * cfg.tg_filter.fwhm_nm
    fine = np.arange(scan_cfg.start_nm - pad, scan_cfg.stop_nm + pad + step / 2, step)
    intrinsic = spectra.telecom_spectrum(cfg.converter, cfg.modes, p, fine)
    rng = np.random.default_rng(counting.derive_seed(seed, _STREAM_TELE_SPECTRUM))
    out = _simulated_scan(intrinsic, cfg.tg_filter, scan_cfg.grid(),
                          cfg.chains["telecom"], rng)
    return dataio.write_scan_csv(
        out, out_dir / "telecom_spectrum.csv",
        metadata={"seed": seed, "pump_w": p, "kind": "telecom-spectrum",
                  "bandwidth_ref_hz": cfg.converter.bandwidth_ref_hz},
    )


def simulate_visible_spectrum(
    cfg: RunConfig, seed: int, out_dir: Path,
    pump_w: float | None = None, collection: str = "smf",
) -> Path:
    """Synthetic visible noise scan through the spectrometer, for either
    fiber collection preset."""
    if collection not in cfg.collection:
        raise ParameterError(f"unknown collection preset {collection!r}")
    p = cfg.sweep.pump_max_w if pump_w is None else pump_w
    scan_cfg = cfg.visible_scan
    vis_widths = [m.fwhm_dip_nm * (m.lambda_vis_nm / m.lambda_tele_nm) ** 2 for m in cfg.modes]
    step = _fine_step(scan_cfg.step_nm, cfg.spectrometer_fwhm_nm, *vis_widths)
    pad = 6.0 * cfg.spectrometer_fwhm_nm
    fine = np.arange(scan_cfg.start_nm - pad, scan_cfg.stop_nm + pad + step / 2, step)
    intrinsic = spectra.visible_spectrum(
        _vis_params(cfg), cfg.modes, p, fine, collection=cfg.collection[collection]
    )
    instrument = spectra.FilterProfile(
        shape="gaussian", fwhm_nm=cfg.spectrometer_fwhm_nm, peak_transmission=1.0
    )
    rng = np.random.default_rng(counting.derive_seed(seed, _STREAM_VIS_SPECTRUM))
    out = _simulated_scan(intrinsic, instrument, scan_cfg.grid(),
                          cfg.chains["visible"], rng)
    return dataio.write_scan_csv(
        out, out_dir / f"visible_spectrum_{collection}.csv",
        metadata={"seed": seed, "pump_w": p, "kind": "visible-spectrum",
                  "collection": collection},
    )


def visible_in_band_fraction(cfg: RunConfig, collection: str = "smf") -> float:
    """Fraction of bandpass-filtered visible counts that belong to the
    fundamental-mode peak, computed from the synthetic spectra."""
    vis_params = _vis_params(cfg)
    fundamental = [cfg.modes[0]]
    vis_widths = [m.fwhm_dip_nm * (m.lambda_vis_nm / m.lambda_tele_nm) ** 2 for m in cfg.modes]
    step = min(vis_widths) / 20.0
    lo = min(m.lambda_vis_nm for m in cfg.modes) - 2.0
    hi = max(m.lambda_vis_nm for m in cfg.modes) + 2.0
    grid = np.arange(lo, hi, step)
    # the fraction is pump-independent: every dip shares the same depth factor
    p_ref = cfg.sweep.pump_max_w
    total = spectra.visible_spectrum(vis_params, cfg.modes, p_ref, grid,
                                     collection=cfg.collection[collection])
    target = spectra.visible_spectrum(vis_params, fundamental, p_ref, grid,
                                      collection=cfg.collection[collection])
    return spectra.band_fraction(target, total, cfg.bp_filter)


def _true_sweep_rates(cfg: RunConfig, kind: str, grid: np.ndarray) -> np.ndarray:
    if kind == "noise_tele_onpeak":
        return np.asarray(converter.telecom_noise_rate(cfg.converter, grid))
    if kind == "noise_tele_detuned":
        return cfg.converter.alpha_n * grid * cfg.converter.length_cm
    if kind == "noise_vis":
        return np.asarray(converter.visible_noise_rate(_vis_params(cfg), grid))
    raise ParameterError(f"unknown power-sweep kind {kind!r}")


def simulate_power_sweep(cfg: RunConfig, seed: int, out_dir: Path, kind: str) -> Path:
    """Synthetic counting run of one noise sweep, written as raw counts."""
    if kind not in _STREAM_SWEEP:
        raise ParameterError(
            f"power-sweep kind must be one of {sorted(_STREAM_SWEEP)}, got {kind!r}"
        )
    grid = cfg.sweep.grid()
    rates = _true_sweep_rates(cfg, kind, grid)
    chain = cfg.chains["visible" if kind == "noise_vis" else "telecom"]
    fraction = 1.0
    if kind == "noise_vis":
        fraction = visible_in_band_fraction(cfg)
        rates = rates / fraction  # neighbors leak through the bandpass
    base = counting.derive_seed(seed, _STREAM_SWEEP[kind])
    records = counting.simulate_sweep(rates, chain, base)
    return dataio.write_counts_csv(
        grid, records, out_dir / f"sweep_{kind}.csv",
        metadata={"seed": seed, "kind": kind, "in_band_fraction": fraction,
                  "units": {"pump_w": "W", "duration_s": "s"}},
    )


def sweep_from_counts(path: Path, cfg: RunConfig) -> PowerSweep:
    """Normalize a raw counts file back to waveguide-output rates."""
    pump_w, counts, durations, seeds, meta = dataio.read_counts_csv(path)
    kind = meta.get("kind")
    if kind not in _STREAM_SWEEP:
        raise DataFormatError(
            f"{path}: sidecar does not identify a noise sweep kind (got {kind!r})"
        )
    chain = cfg.chains["visible" if kind == "noise_vis" else "telecom"]
    transmission = counting.chain_transmission(chain)
    fraction = float(meta.get("in_band_fraction", 1.0))
    values, sigmas = [], []
    for c, t in zip(counts, durations):
        record = counting.CountRecord(counts=int(c), duration_s=float(t), seed=0)
        normalized = counting.normalize_to_waveguide(record, chain)
        rate, sigma = normalized.rate_hz, normalized.sigma_hz
        if kind == "noise_vis":
            rate = counting.visible_band_fraction_correction(rate, fraction)
            sigma *= fraction
        # one-count floor keeps weights finite when a bin is empty
        sigma = max(sigma, fraction / float(t) / transmission)
        values.append(rate)
        sigmas.append(sigma)
    return PowerSweep(pump_w=pump_w, value=np.array(values), sigma=np.array(sigmas), kind=kind)


def run_fit_efficiency(
    cfg: RunConfig, internal_path: Path, external_path: Path, out_dir: Path
) -> tuple[FitResult, Path]:
    """Shared-parameter efficiency fit from two sweep files."""
    sweep_int = dataio.read_sweep_csv(internal_path, kind="efficiency_int")
    sweep_ext = dataio.read_sweep_csv(external_path, kind="efficiency_ext")
    result = fit_efficiency_shared(sweep_int, sweep_ext, cfg.converter.length_cm)
    digests = {
        str(internal_path): dataio.sha256_digest(internal_path),
        str(external_path): dataio.sha256_digest(external_path),
    }
    out = dataio.write_fit_json(
        result, out_dir / "fit_efficiency.json", "efficiency_shared",
        input_digests=digests, extras={"length_cm": cfg.converter.length_cm},
    )
    for sweep, tag in ((sweep_int, "int"), (sweep_ext, "ext")):
        model = converter.efficiency_curve(
            sweep.pump_w, result.values[f"eta_max_{tag}"],
            result.values["eta_n"], cfg.converter.length_cm,
        )
        dataio.write_residual_csv(
            out_dir / f"residuals_efficiency_{tag}.csv",
            sweep.pump_w, sweep.value, model, sweep.sigma,
        )
    return result, out


def run_fit_noise(
    cfg: RunConfig,
    out_dir: Path,
    detuned_path: Path | None = None,
    visible_path: Path | None = None,
    n_points: int = 4,
    efficiency_fit: dict | None = None,
) -> tuple[FitResult, Path]:
    """Noise-coefficient fits: linear on detuned telecom data, fixed-shape
    on visible data.  At least one input file is required."""
    if detuned_path is None and visible_path is None:
        raise ParameterError("fit noise needs a detuned and/or a visible counts file")

    params = cfg.converter
    shape_covariance = None
    if efficiency_fit is not None:
        p = efficiency_fit["parameters"]
        params = replace(params, eta_max_int=p["eta_max_int"],
                         eta_max_ext=p["eta_max_ext"], eta_n=p["eta_n"])
        if efficiency_fit.get("parameter_order") == ["eta_max_int", "eta_max_ext", "eta_n"]:
            shape_covariance = np.asarray(efficiency_fit.get("covariance"), dtype=float)

    names, values, sigmas, variances = [], {}, {}, []
    digests = {}
    extras: dict = {"length_cm": params.length_cm}
    converged = True
    messages = []
    iterations = 0
    points = 0

    if detuned_path is not None:
        sweep = sweep_from_counts(Path(detuned_path), cfg)
        if sweep.kind != "noise_tele_detuned":
            # on-peak data carries SFG suppression: a linear fit would
            # silently underestimate the coefficient
            raise DataFormatError(
                f"{detuned_path}: expected a noise_tele_detuned sweep for the "
                f"linear fit, got {sweep.kind!r}"
            )
        fit = fit_alpha_linear(sweep, params.length_cm, n_points=n_points)
        names.append("alpha_n_tele")
        values["alpha_n_tele"] = fit.values["alpha_n"]
        sigmas["alpha_n_tele"] = fit.sigmas["alpha_n"]
        variances.append(fit.covariance[0, 0])
        digests[str(detuned_path)] = dataio.sha256_digest(detuned_path)
        extras["chi2_reduced_tele"] = fit.chi2_reduced
        extras["n_points_tele"] = n_points
        converged &= fit.converged
        messages.append(f"telecom: {fit.message}")
        iterations += fit.n_iterations
        points += len(sweep)
        model = values["alpha_n_tele"] * sweep.pump_w * params.length_cm
        dataio.write_residual_csv(out_dir / "residuals_noise_detuned.csv",
                                  sweep.pump_w, sweep.value, model, sweep.sigma)

    if visible_path is not None:
        sweep = sweep_from_counts(Path(visible_path), cfg)
        if sweep.kind != "noise_vis":
            raise DataFormatError(
                f"{visible_path}: expected a noise_vis sweep, got {sweep.kind!r}"
            )
        fit = fit_alpha_visible(sweep, params, shape_covariance=shape_covariance)
        names.append("alpha_n_vis")
        values["alpha_n_vis"] = fit.values["alpha_n"]
        sigmas["alpha_n_vis"] = fit.sigmas["alpha_n"]
        variances.append(fit.covariance[0, 0])
        digests[str(visible_path)] = dataio.sha256_digest(visible_path)
        extras["chi2_reduced_vis"] = fit.chi2_reduced
        converged &= fit.converged
        messages.append(f"visible: {fit.message}")
        iterations += fit.n_iterations
        points += len(sweep)
        shape = sweep.pump_w * params.length_cm * np.asarray(
            converter.dip_depth(params, sweep.pump_w)
        )
        dataio.write_residual_csv(out_dir / "residuals_noise_visible.csv",
                                  sweep.pump_w, sweep.value,
                                  values["alpha_n_vis"] * shape, sweep.sigma)

    result = FitResult(
        names=names,
        values=values,
        sigmas=sigmas,
        covariance=np.diag(variances),
        chi2_reduced=float("nan"),
        n_iterations=iterations,
        converged=converged,
        message="; ".join(messages),
        n_points=points,
    )
    out = dataio.write_fit_json(result, out_dir / "fit_noise.json", "noise_coefficients",
                                input_digests=digests, extras=extras)
    return result, out
