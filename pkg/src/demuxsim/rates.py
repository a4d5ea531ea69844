"""Closed-form rate laws for active temporal-to-spatial demultiplexing.

An actively switched 1-to-n network routes successive pulses of a triggered
single-photon stream to n spatial outputs.  The functions here predict n-fold
coincidence rates for that scheme and for the passive (probabilistic) baseline
in which each photon picks an output at random.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

from .errors import DomainError

__all__ = [
    "EmitterParams",
    "LossBudget",
    "ScalingResult",
    "RatePrediction",
    "PredictionConfig",
    "s_active",
    "s_active_enumerated",
    "s_probabilistic",
    "scaling_comparison",
    "n_fold_rate",
    "compose_transmission",
    "saturation_brightness",
    "predict_rates",
    "crossover_n",
]


def _check_unit_interval(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class EmitterParams:
    """Triggered single-photon source feeding the demultiplexer.

    max_brightness is the per-pulse photon probability at full saturation,
    before polarization filtering and source-to-device coupling.  The product
    max_brightness * polarized_fraction * fiber_coupling is the saturated
    per-pulse probability of a photon arriving at the network input.
    """

    pump_rate_hz: float
    saturation_power_uw: float
    max_brightness: float
    g2_zero: float = 0.0
    polarized_fraction: float = 1.0
    fiber_coupling: float = 1.0

    def __post_init__(self) -> None:
        if self.pump_rate_hz <= 0:
            raise DomainError(f"pump_rate_hz must be positive, got {self.pump_rate_hz!r}")
        if self.saturation_power_uw <= 0:
            raise DomainError(
                f"saturation_power_uw must be positive, got {self.saturation_power_uw!r}"
            )
        _check_unit_interval("max_brightness", self.max_brightness)
        _check_unit_interval("polarized_fraction", self.polarized_fraction)
        _check_unit_interval("fiber_coupling", self.fiber_coupling)
        if not 0.0 <= self.g2_zero < 1.0:
            raise DomainError(f"g2_zero must lie in [0, 1), got {self.g2_zero!r}")

    @property
    def saturated_brightness(self) -> float:
        """Per-pulse photon probability at the network input, fully saturated."""
        return self.max_brightness * self.polarized_fraction * self.fiber_coupling

    def input_brightness(self, pump_power_uw: float) -> float:
        """Per-pulse photon probability at the network input at a given pump power."""
        factor = saturation_brightness(pump_power_uw, self.saturation_power_uw, 1.0)
        return self.saturated_brightness * factor


@dataclass(frozen=True)
class LossBudget:
    """Multiplicative transmission budget of the switching chip.

    Total transmission is
    mode_overlap * (1 - fresnel_in) * (1 - fresnel_out) * 10**(-alpha*L/10).
    """

    mode_overlap: float = 1.0
    fresnel_in: float = 0.0
    fresnel_out: float = 0.0
    propagation_db_per_cm: float = 0.0
    device_length_cm: float = 0.0

    def __post_init__(self) -> None:
        _check_unit_interval("mode_overlap", self.mode_overlap)
        _check_unit_interval("fresnel_in", self.fresnel_in)
        _check_unit_interval("fresnel_out", self.fresnel_out)
        if self.propagation_db_per_cm < 0:
            raise DomainError("propagation_db_per_cm must be non-negative")
        if self.device_length_cm < 0:
            raise DomainError("device_length_cm must be non-negative")

    @classmethod
    def from_transmission(cls, transmission: float) -> "LossBudget":
        """Budget with a single lumped transmission factor."""
        _check_unit_interval("transmission", transmission)
        return cls(mode_overlap=transmission)


@dataclass(frozen=True)
class ScalingResult:
    """Active and probabilistic scaling factors for one channel count."""

    n: int
    s_active: float
    s_probabilistic: float
    eta_dm: float


@dataclass(frozen=True)
class RatePrediction:
    """Predicted n-fold coincidence rate for one scheme."""

    n: int
    scheme: str  # "active" or "probabilistic"
    rate_hz: float
    eta_sd: float
    eta_det: float
    include_detectors: bool


@dataclass(frozen=True)
class PredictionConfig:
    """Inputs for rate prediction.

    transmission may be a LossBudget (composed internally) or a bare float
    when the lumped device transmission is known directly.
    """

    source: EmitterParams
    transmission: "LossBudget | float"
    eta_dm: float
    eta_det: float = 1.0
    include_detectors: bool = False

    def __post_init__(self) -> None:
        _check_unit_interval("eta_dm", self.eta_dm)
        _check_unit_interval("eta_det", self.eta_det)
        if isinstance(self.transmission, (int, float)):
            _check_unit_interval("transmission", float(self.transmission))

    @property
    def transmission_value(self) -> float:
        if isinstance(self.transmission, LossBudget):
            return compose_transmission(self.transmission)
        return float(self.transmission)


# ---------------------------------------------------------------------------
# scaling laws
# ---------------------------------------------------------------------------

def s_active(n: int, eta_dm: float) -> float:
    """Cycle-rate scaling factor of the actively switched scheme.

    (1/n) * [eta^n + (n-1)*((1-eta)/(n-1))^n]; the n = 1 limit is 1.  The
    second term is the all-misrouted contribution of a uniform misrouting
    model and matches exhaustive enumeration only for n <= 3 (see
    s_active_enumerated).
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    _check_unit_interval("eta_dm", eta_dm)
    if n == 1:
        return 1.0
    return (eta_dm**n + (n - 1) * ((1.0 - eta_dm) / (n - 1)) ** n) / n


def s_active_enumerated(n: int, eta_dm: float) -> float:
    """Same quantity by brute-force enumeration of the uniform-misroute model.

    Counts the all-correct assignment plus every derangement (each photon on a
    wrong output, all n outputs covered), with per-photon probabilities eta to
    the scheduled output and (1-eta)/(n-1) to each other output.  Agrees with
    s_active exactly for n in {2, 3}; for n >= 4 there are more derangements
    than the closed form's n-1 copies, so the enumerated value is larger.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    if n > 8:
        raise DomainError("enumeration is factorial in n; use n <= 8")
    _check_unit_interval("eta_dm", eta_dm)
    if n == 1:
        return 1.0
    miss = (1.0 - eta_dm) / (n - 1)
    total = 0.0
    for perm in permutations(range(n)):
        fixed = sum(1 for i, p in enumerate(perm) if i == p)
        if fixed == n or fixed == 0:  # all correct, or a derangement
            total += eta_dm**fixed * miss ** (n - fixed)
    return total / n


def s_probabilistic(n: int) -> float:
    """Scaling factor of the passive baseline: (1/n)^n."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    return (1.0 / n) ** n


def scaling_comparison(n: int, eta_dm: float) -> ScalingResult:
    return ScalingResult(
        n=n,
        s_active=s_active(n, eta_dm),
        s_probabilistic=s_probabilistic(n),
        eta_dm=eta_dm,
    )


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

def n_fold_rate(
    n: int,
    pump_rate_hz: float,
    eta_sd: float,
    eta_det: float,
    s_dm: float,
) -> float:
    """n-fold coincidence rate R * (eta_sd * eta_det)^n * s_dm."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    if pump_rate_hz <= 0:
        raise DomainError(f"pump_rate_hz must be positive, got {pump_rate_hz!r}")
    _check_unit_interval("eta_sd", eta_sd)
    _check_unit_interval("eta_det", eta_det)
    _check_unit_interval("s_dm", s_dm)
    return pump_rate_hz * (eta_sd * eta_det) ** n * s_dm


def compose_transmission(budget: LossBudget) -> float:
    """Total device transmission from a LossBudget."""
    attenuation = 10.0 ** (-budget.propagation_db_per_cm * budget.device_length_cm / 10.0)
    return (
        budget.mode_overlap
        * (1.0 - budget.fresnel_in)
        * (1.0 - budget.fresnel_out)
        * attenuation
    )


def saturation_brightness(pump_power_uw: float, p0_uw: float, max_value: float) -> float:
    """Saturating brightness max_value * (1 - exp(-P/P0))."""
    if pump_power_uw < 0:
        raise DomainError(f"pump_power_uw must be non-negative, got {pump_power_uw!r}")
    if p0_uw <= 0:
        raise DomainError(f"p0_uw must be positive, got {p0_uw!r}")
    return max_value * (1.0 - math.exp(-pump_power_uw / p0_uw))


def _active_rate(config: PredictionConfig, n: int) -> float:
    eta_sd = config.source.saturated_brightness * config.transmission_value
    eta_det = config.eta_det if config.include_detectors else 1.0
    return n_fold_rate(n, config.source.pump_rate_hz, eta_sd, eta_det, s_active(n, config.eta_dm))


def _probabilistic_rate(config: PredictionConfig, n: int) -> float:
    # Lossless-passive baseline: source brightness only, no device transmission.
    eta_sd = config.source.saturated_brightness
    eta_det = config.eta_det if config.include_detectors else 1.0
    return n_fold_rate(n, config.source.pump_rate_hz, eta_sd, eta_det, s_probabilistic(n))


def predict_rates(config: PredictionConfig, n_values) -> list[RatePrediction]:
    """Predicted n-fold rates for both schemes over the requested channel counts.

    Returns an (n, scheme)-ordered list; an empty n_values yields an empty list.
    With include_detectors False the detector term is dropped from both schemes
    (rates at the device outputs rather than after detection).
    """
    eta_det = config.eta_det
    predictions: list[RatePrediction] = []
    for n in n_values:
        eta_sd_active = config.source.saturated_brightness * config.transmission_value
        predictions.append(
            RatePrediction(
                n=n,
                scheme="active",
                rate_hz=_active_rate(config, n),
                eta_sd=eta_sd_active,
                eta_det=eta_det,
                include_detectors=config.include_detectors,
            )
        )
        predictions.append(
            RatePrediction(
                n=n,
                scheme="probabilistic",
                rate_hz=_probabilistic_rate(config, n),
                eta_sd=config.source.saturated_brightness,
                eta_det=eta_det,
                include_detectors=config.include_detectors,
            )
        )
    return predictions


def crossover_n(
    config: PredictionConfig,
    n_max: int = 10,
    baseline: PredictionConfig | None = None,
) -> int | None:
    """Smallest n in [1, n_max] where the active scheme strictly beats the baseline.

    The baseline defaults to the passive scheme of the same configuration.
    Returns None when the active scheme never wins within n_max.
    """
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max!r}")
    baseline = baseline if baseline is not None else config
    for n in range(1, n_max + 1):
        if _active_rate(config, n) > _probabilistic_rate(baseline, n):
            return n
    return None
