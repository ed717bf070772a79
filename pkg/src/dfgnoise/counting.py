"""Monte Carlo model of the photon detection chain.

The chain applies a stack of transmission factors and a detector
efficiency to the rate at the waveguide output, adds dark counts, and
draws Poisson counts over the integration time.  The inverse direction
(:func:`normalize_to_waveguide`) undoes the same bookkeeping on measured
counts.  Dead time and afterpulsing are deliberately not modeled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError

__all__ = [
    "MeasurementChain",
    "CountRecord",
    "NormalizedRate",
    "chain_transmission",
    "simulate_counts",
    "simulate_sweep",
    "normalize_to_waveguide",
    "visible_band_fraction_correction",
    "derive_seed",
]


@dataclass(frozen=True)
class MeasurementChain:
    """Detection chain: labelled transmission factors, detector efficiency,
    dark count rate and default integration time."""

    transmissions: tuple[tuple[str, float], ...]
    detector_efficiency: float
    dark_rate_hz: float
    integration_time_s: float

    def __post_init__(self):
        object.__setattr__(
            self, "transmissions", tuple((str(k), float(v)) for k, v in self.transmissions)
        )
        for label, factor in self.transmissions:
            if not 0.0 < factor <= 1.0:
                raise ParameterError(
                    f"transmission {label!r} must be in (0, 1], got {factor}"
                )
        if not 0.0 < self.detector_efficiency <= 1.0:
            raise ParameterError(
                f"detector_efficiency must be in (0, 1], got {self.detector_efficiency}"
            )
        if self.dark_rate_hz < 0:
            raise ParameterError(f"dark_rate_hz must be non-negative, got {self.dark_rate_hz}")
        if not self.integration_time_s > 0:
            raise ParameterError(
                f"integration_time_s must be positive, got {self.integration_time_s}"
            )


@dataclass(frozen=True)
class CountRecord:
    """One Poisson counting result, with the seed that produced it."""

    counts: int
    duration_s: float
    seed: int

    def __post_init__(self):
        if self.counts < 0:
            raise ParameterError("counts must be non-negative")
        if not self.duration_s > 0:
            raise ParameterError("duration must be positive")


class NormalizedRate(NamedTuple):
    """Rate at the waveguide output inferred from counts, with 1-sigma
    Poisson uncertainty.  Negative central values are possible when the
    signal is below the dark rate; check :attr:`is_negative`."""

    rate_hz: float
    sigma_hz: float

    @property
    def is_negative(self) -> bool:
        return self.rate_hz < 0


def chain_transmission(chain: MeasurementChain) -> float:
    """Total photon survival probability: product of all transmissions times
    the detector efficiency."""
    total = chain.detector_efficiency
    for _, factor in chain.transmissions:
        total *= factor
    return total


def derive_seed(base_seed: int, index: int) -> int:
    """Deterministic per-point seed for sweeps, independent across indices.

    The derived value is an ordinary integer, so it can be stored in a
    CSV column and replayed through :func:`simulate_counts`.
    """
    return int(np.random.SeedSequence((int(base_seed), int(index))).generate_state(1)[0])


def simulate_counts(
    true_rate_hz: float,
    chain: MeasurementChain,
    seed: int,
    duration_s: float | None = None,
) -> CountRecord:
    """Draw detected counts for a given waveguide-output rate.

    The Poisson mean is (rate * chain transmission + dark rate) * time.
    Identical seeds give identical counts.
    """
    if true_rate_hz < 0:
        raise ParameterError("true rate must be non-negative")
    t = chain.integration_time_s if duration_s is None else duration_s
    mean = (true_rate_hz * chain_transmission(chain) + chain.dark_rate_hz) * t
    rng = np.random.default_rng(seed)
    return CountRecord(counts=int(rng.poisson(mean)), duration_s=t, seed=int(seed))


def simulate_sweep(
    true_rates_hz,
    chain: MeasurementChain,
    base_seed: int,
    duration_s: float | None = None,
) -> list[CountRecord]:
    """Counting results for a list of rates, one derived seed per point, so
    the outcome is independent of evaluation order."""
    return [
        simulate_counts(rate, chain, derive_seed(base_seed, i), duration_s=duration_s)
        for i, rate in enumerate(np.asarray(true_rates_hz, dtype=float))
    ]


def normalize_to_waveguide(record: CountRecord, chain: MeasurementChain) -> NormalizedRate:
    """Invert the detection chain: rate at the waveguide output and its
    Poisson uncertainty.

    rate = (counts/duration - dark) / transmission,
    sigma = sqrt(counts) / duration / transmission.
    """
    transmission = chain_transmission(chain)
    if transmission <= 0:
        raise ParameterError("chain transmission must be positive")
    raw = record.counts / record.duration_s
    rate = (raw - chain.dark_rate_hz) / transmission
    sigma = np.sqrt(record.counts) / record.duration_s / transmission
    return NormalizedRate(rate_hz=float(rate), sigma_hz=float(sigma))


def visible_band_fraction_correction(raw_rate_hz: float, in_band_fraction: float) -> float:
    """Keep only the part of a measured rate that belongs to the target
    spectral peak, given the fraction of detected counts it contributes."""
    if not 0.0 < in_band_fraction <= 1.0:
        raise ParameterError(
            f"in_band_fraction must be in (0, 1], got {in_band_fraction}"
        )
    return raw_rate_hz * in_band_fraction
