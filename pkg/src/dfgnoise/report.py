"""Plain-text summary report of a characterized converter.

Collects the fitted (or configured) device parameters and derives the
headline figures: peak pump power, noise-dip depth at full power, noise
probability per spectro-temporal mode, and the bandwidth reconciliation
between the telecom and visible noise coefficients.
"""

from __future__ import annotations

from dataclasses import replace

from . import converter
from .config import RunConfig

__all__ = ["build_report"]


def _param_line(name: str, value: float, sigma: float | None, unit: str) -> str:
    if sigma is None:
        return f"  {name:<14} {value:.4g} {unit}  (configured)"
    return f"  {name:<14} {value:.4g} +/- {sigma:.2g} {unit}  (fitted)"


def build_report(
    cfg: RunConfig,
    efficiency_fit: dict | None = None,
    noise_fit: dict | None = None,
    mode_bandwidth_hz: float = 1e6,
) -> str:
    """Assemble the summary report.

    ``efficiency_fit`` and ``noise_fit`` are parsed fit-result payloads
    (see :func:`dfgnoise.dataio.read_fit_json`); configured values are
    used for anything not fitted.  ``mode_bandwidth_hz`` selects the
    bandwidth for the rescaled noise-rate figure.
    """
    params = cfg.converter
    alpha_vis = cfg.alpha_n_visible
    eff_sig = {}
    noise_sig = {}
    if efficiency_fit is not None:
        p = efficiency_fit["parameters"]
        eff_sig = efficiency_fit.get("sigmas", {})
        params = replace(
            params,
            eta_max_int=p["eta_max_int"],
            eta_max_ext=p["eta_max_ext"],
            eta_n=p["eta_n"],
        )
    if noise_fit is not None:
        if "alpha_n_tele" in noise_fit.get("parameters", {}):
            params = replace(params, alpha_n=noise_fit["parameters"]["alpha_n_tele"])
        if "alpha_n_vis" in noise_fit.get("parameters", {}):
            alpha_vis = noise_fit["parameters"]["alpha_n_vis"]
        noise_sig = noise_fit.get("sigmas", {})

    p_peak = converter.peak_pump_power(params)
    p_max = cfg.sweep.pump_max_w
    depth = converter.dip_depth(params, p_max)
    per_mode = converter.photons_per_mode(params.alpha_n, params.bandwidth_ref_hz)
    rescaled = converter.rescale_alpha_to_bandwidth(
        params.alpha_n, params.bandwidth_ref_hz, mode_bandwidth_hz
    )

    # telecom coefficient extrapolated from the filter bandwidth to the
    # full dip bandwidth, to compare against the visible coefficient
    tg_fwhm = cfg.tg_filter.fwhm_nm
    dip_fwhm = cfg.modes[0].fwhm_dip_nm
    bw_ratio = dip_fwhm / tg_fwhm
    alpha_tele_full = converter.rescale_alpha_to_bandwidth(params.alpha_n, 1.0, bw_ratio)
    ratio = alpha_tele_full / alpha_vis if alpha_vis > 0 else float("nan")

    lines = [
        "converter characterization report",
        "=================================",
        "",
        "device parameters",
        _param_line("eta_max_int", params.eta_max_int, eff_sig.get("eta_max_int"), ""),
        _param_line("eta_max_ext", params.eta_max_ext, eff_sig.get("eta_max_ext"), ""),
        _param_line("eta_n", params.eta_n, eff_sig.get("eta_n"), "/(W cm^2)"),
        _param_line("alpha_n_tele", params.alpha_n / 1e3, _scaled(noise_sig.get("alpha_n_tele")), "kHz/(W cm)"),
        _param_line("alpha_n_vis", alpha_vis / 1e3, _scaled(noise_sig.get("alpha_n_vis")), "kHz/(W cm)"),
        f"  length         {params.length_cm:.4g} cm",
        f"  alpha_n bandwidth {params.bandwidth_ref_hz:.4g} Hz",
        "",
        "derived figures",
        f"  peak pump power: {p_peak:.4f} W",
        f"  dip depth at {p_max:.2f} W: {depth:.3f}",
        f"  noise per spectro-temporal mode at {params.bandwidth_ref_hz:.3g} Hz: "
        f"{per_mode:.3g} /(W cm)",
        f"  noise rate in a {mode_bandwidth_hz:.3g} Hz bandwidth: {rescaled:.3g} Hz/(W cm)",
        "",
        "telecom vs visible bandwidth reconciliation",
        f"  telecom coefficient {params.alpha_n / 1e3:.1f} kHz/(W cm) in the "
        f"{tg_fwhm * 1e3:.0f} pm filter bandwidth",
        f"  dip bandwidth {dip_fwhm * 1e3:.0f} pm -> ratio {bw_ratio:.2f}",
        f"  extrapolated to the full dip: {params.alpha_n / 1e3:.1f} x {bw_ratio:.2f} "
        f"= {alpha_tele_full / 1e3:.1f} kHz/(W cm)",
        f"  visible coefficient: {alpha_vis / 1e3:.1f} kHz/(W cm)",
        f"  extrapolated/visible ratio: {ratio:.2f}"
        + ("  (consistent within the flat-noise picture)" if 0.7 <= ratio <= 1.3 else "  (check model assumptions)"),
        "",
    ]
    return "\n".join(lines)


def _scaled(sigma: float | None) -> float | None:
    return None if sigma is None else sigma / 1e3
