"""File formats: CSV datasets with JSON metadata sidecars, fit reports.

Floats are written with ``repr`` so every emitted file re-parses to
bit-identical values, and nothing carries a timestamp: re-running a
command with the same config and seed reproduces the files byte for
byte.  Units are part of the header names (nm, W, Hz, s).
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .fitting import FitResult, PowerSweep
from .spectra import SpectralScan

__all__ = [
    "write_scan_csv",
    "read_scan_csv",
    "write_sweep_csv",
    "read_sweep_csv",
    "write_counts_csv",
    "read_counts_csv",
    "write_fit_json",
    "read_fit_json",
    "write_residual_csv",
    "sha256_digest",
    "sidecar_path",
]


def _fmt(x) -> str:
    return repr(float(x))


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".meta.json")


def sha256_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _parse_float(row_value: str, path: Path, line_no: int, column: str) -> float:
    try:
        return float(row_value)
    except (TypeError, ValueError):
        raise DataFormatError(
            f"{path}:{line_no}: column '{column}' is not a number: {row_value!r}"
        ) from None


def _read_rows(path: Path, expected_header: list[str]):
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(text.splitlines())
    rows = list(reader)
    if not rows:
        raise DataFormatError(f"{path}:1: file is empty")
    if rows[0] != expected_header:
        raise DataFormatError(
            f"{path}:1: expected header {','.join(expected_header)!r}, "
            f"got {','.join(rows[0])!r}"
        )
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected_header):
            raise DataFormatError(
                f"{path}:{line_no}: expected {len(expected_header)} columns, got {len(row)}"
            )
        yield line_no, row


# ---------------------------------------------------------------- scans

def write_scan_csv(scan: SpectralScan, path: str | Path, metadata: dict | None = None) -> Path:
    """Write a spectral scan as CSV plus a JSON metadata sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["wavelength_nm,rate_hz"]
    for wl, rate in zip(scan.wavelength_nm, scan.rate_hz):
        lines.append(f"{_fmt(wl)},{_fmt(rate)}")
    path.write_text("\n".join(lines) + "\n")
    payload = {
        "filter_fwhm_nm": scan.filter_fwhm_nm,
        "step_nm": scan.step_nm,
        "integration_time_s": scan.integration_time_s,
    }
    if metadata:
        payload.update(metadata)
    _write_json(sidecar_path(path), payload)
    return path


def read_scan_csv(path: str | Path) -> tuple[SpectralScan, dict]:
    """Read a scan CSV and its sidecar (empty dict when absent)."""
    path = Path(path)
    wl, rate = [], []
    for line_no, row in _read_rows(path, ["wavelength_nm", "rate_hz"]):
        wl.append(_parse_float(row[0], path, line_no, "wavelength_nm"))
        rate.append(_parse_float(row[1], path, line_no, "rate_hz"))
    meta_file = sidecar_path(path)
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    scan = SpectralScan(
        wavelength_nm=np.array(wl),
        rate_hz=np.array(rate),
        filter_fwhm_nm=float(meta.get("filter_fwhm_nm", 0.0)),
        step_nm=float(meta.get("step_nm", 0.0)),
        integration_time_s=float(meta.get("integration_time_s", 0.0)),
    )
    return scan, meta


# ---------------------------------------------------------------- sweeps

def write_sweep_csv(sweep: PowerSweep, path: str | Path, metadata: dict | None = None) -> Path:
    """Write a value-vs-power dataset (``pump_w,value,sigma``) plus sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["pump_w,value,sigma"]
    for p, y, s in zip(sweep.pump_w, sweep.value, sweep.sigma):
        lines.append(f"{_fmt(p)},{_fmt(y)},{_fmt(s)}")
    path.write_text("\n".join(lines) + "\n")
    payload = {"kind": sweep.kind}
    if metadata:
        payload.update(metadata)
    _write_json(sidecar_path(path), payload)
    return path


def read_sweep_csv(path: str | Path, kind: str | None = None) -> PowerSweep:
    """Read a ``pump_w,value,sigma`` dataset; ``kind`` falls back to the
    sidecar when not given."""
    path = Path(path)
    p, y, s = [], [], []
    for line_no, row in _read_rows(path, ["pump_w", "value", "sigma"]):
        p.append(_parse_float(row[0], path, line_no, "pump_w"))
        y.append(_parse_float(row[1], path, line_no, "value"))
        s.append(_parse_float(row[2], path, line_no, "sigma"))
    if kind is None:
        meta_file = sidecar_path(path)
        meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
        kind = meta.get("kind")
        if kind is None:
            raise DataFormatError(
                f"{path}: sweep kind not given and no sidecar {meta_file.name} found"
            )
    return PowerSweep(pump_w=np.array(p), value=np.array(y), sigma=np.array(s), kind=kind)


# ---------------------------------------------------------------- counts

def write_counts_csv(
    pump_w, records, path: str | Path, metadata: dict | None = None
) -> Path:
    """Write raw counting data (``pump_w,counts,duration_s,seed``) plus sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["pump_w,counts,duration_s,seed"]
    for p, rec in zip(pump_w, records):
        lines.append(f"{_fmt(p)},{rec.counts},{_fmt(rec.duration_s)},{rec.seed}")
    path.write_text("\n".join(lines) + "\n")
    if metadata is None:
        metadata = {}
    _write_json(sidecar_path(path), metadata)
    return path


def read_counts_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[int], dict]:
    """Read counting data; returns (pump_w, counts, duration_s, seeds, metadata)."""
    path = Path(path)
    p, c, d, seeds = [], [], [], []
    for line_no, row in _read_rows(path, ["pump_w", "counts", "duration_s", "seed"]):
        p.append(_parse_float(row[0], path, line_no, "pump_w"))
        try:
            c.append(int(row[1]))
            seeds.append(int(row[3]))
        except ValueError:
            raise DataFormatError(
                f"{path}:{line_no}: counts and seed must be integers"
            ) from None
        d.append(_parse_float(row[2], path, line_no, "duration_s"))
    meta_file = sidecar_path(path)
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return np.array(p), np.array(c), np.array(d), seeds, meta


# ---------------------------------------------------------------- fits

def write_fit_json(
    result: FitResult,
    path: str | Path,
    fit_name: str,
    input_digests: dict[str, str] | None = None,
    extras: dict | None = None,
) -> Path:
    """Serialize a fit result; deterministic (sorted keys, no timestamps)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "fit": fit_name,
        "parameter_order": result.names,
        "parameters": result.values,
        "sigmas": result.sigmas,
        "covariance": [[float(v) for v in row] for row in np.atleast_2d(result.covariance)],
        "chi2_reduced": result.chi2_reduced,
        "n_iterations": result.n_iterations,
        "n_points": result.n_points,
        "converged": result.converged,
        "message": result.message,
        "inputs": input_digests or {},
    }
    if extras:
        payload.update(extras)
    _write_json(path, payload)
    return path


def read_fit_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path} is not valid JSON: {exc}") from exc


def write_residual_csv(path: str | Path, pump_w, value, model, sigma) -> Path:
    """Residual table accompanying a fit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["pump_w,value,model,residual,sigma"]
    for p, y, m, s in zip(pump_w, value, model, sigma):
        lines.append(f"{_fmt(p)},{_fmt(y)},{_fmt(m)},{_fmt(y - m)},{_fmt(s)}")
    path.write_text("\n".join(lines) + "\n")
    return path
