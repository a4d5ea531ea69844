"""Time-tag analysis: coincidence histograms, n-fold rates, and model fits.

All counting statistics are Poisson; quoted standard errors are sqrt(counts)
scaled to rates by the acquisition time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .couplers import (
    DemuxNetwork,
    SwitchSchedule,
    routing_by_bin,
    switching_efficiency,
)
from .errors import ConfigError, DataError, DomainError, EstimationError
from .fitting import FitResult, damped_least_squares, finite_difference_jacobian
from .rates import s_active
from .tags import TimeTagStream

__all__ = [
    "CoincidenceHistogram",
    "NFoldCounts",
    "histogram",
    "count_nfold",
    "eta_sd_from_singles",
    "g2_ratio",
    "RatioEstimate",
    "RatioEstimationResult",
    "estimate_splitting_ratios",
    "eta_dm_from_ratios",
    "saturation_model",
    "fit_saturation",
    "fit_switching_efficiency",
]


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoincidenceHistogram:
    """Signed-delay coincidence histogram between two channels.

    counts[i] is the number of record pairs with t_b - t_a in delay bin
    delays[i]; the bin width defaults to one pump pulse period.
    """

    channel_a: int
    channel_b: int
    bin_width_s: float
    delays: np.ndarray  # signed delay in bins
    counts: np.ndarray

    def total(self) -> int:
        return int(self.counts.sum())


def histogram(
    stream: TimeTagStream,
    channel_a: int,
    channel_b: int,
    max_delay_bins: int,
    bin_width_s: float | None = None,
) -> CoincidenceHistogram:
    """Histogram of t_b - t_a over +-max_delay_bins.

    Swapping the channels mirrors the delay axis.  The two channels must
    differ; a same-channel request needs an autocorrelator, not a pair
    histogram.
    """
    if channel_a == channel_b:
        raise DomainError("channel_a and channel_b must differ")
    if max_delay_bins < 0:
        raise DomainError(f"max_delay_bins must be >= 0, got {max_delay_bins!r}")
    period_s = stream.meta.pulse_period_ps * 1e-12
    if bin_width_s is None:
        bin_width_s = period_s
    if not math.isclose(bin_width_s, period_s, rel_tol=1e-9):
        raise ConfigError(
            "bin widths other than the pulse period are not supported; "
            "tags are clocked so fractional bins would alias"
        )
    pulses = stream.pulse_indices
    a = np.sort(pulses[stream.channels == channel_a])
    b = np.sort(pulses[stream.channels == channel_b])
    delays = np.arange(-max_delay_bins, max_delay_bins + 1, dtype=np.int64)
    counts = np.zeros(delays.size, dtype=np.int64)
    if len(a) and len(b):
        for i, d in enumerate(delays):
            # one record per (pulse, channel), so matching is set intersection
            counts[i] = np.isin(a + d, b, assume_unique=True).sum()
    return CoincidenceHistogram(
        channel_a=channel_a,
        channel_b=channel_b,
        bin_width_s=bin_width_s,
        delays=delays,
        counts=counts,
    )


def g2_ratio(hist: CoincidenceHistogram, period_bins: int, n_peaks: int = 3):
    """Zero-delay bin over the mean of whole-cycle peaks, with Poisson error.

    Peaks at delays of +-period_bins, +-2*period_bins, ... share the routing
    configuration of the zero-delay bin, so this ratio estimates the source's
    zero-delay correlation independently of the switching pattern.
    """
    if period_bins < 1:
        raise DomainError(f"period_bins must be >= 1, got {period_bins!r}")
    index = {int(d): i for i, d in enumerate(hist.delays)}
    if 0 not in index:
        raise DataError("histogram does not include the zero-delay bin")
    peak_delays = []
    for k in range(1, n_peaks + 1):
        for d in (k * period_bins, -k * period_bins):
            if d in index:
                peak_delays.append(d)
    if not peak_delays:
        raise DataError("histogram range does not reach the first cycle peak")
    zero = float(hist.counts[index[0]])
    peaks = np.array([hist.counts[index[d]] for d in peak_delays], dtype=float)
    peak_sum = float(peaks.sum())
    if peak_sum == 0:
        raise DataError("cycle peaks are empty; cannot normalize")
    mean_peak = peak_sum / len(peaks)
    value = zero / mean_peak
    # independent Poisson bins: relative variance 1/N0 + 1/sum(peaks)
    sigma = value * math.sqrt((1.0 / zero if zero > 0 else 1.0) + 1.0 / peak_sum)
    return value, sigma


# ---------------------------------------------------------------------------
# n-fold coincidences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NFoldCounts:
    """n-fold coincidence count and rate between scheduled channels."""

    n: int
    channels: tuple[int, ...]
    window_s: float
    count: int
    acquisition_s: float

    @property
    def rate_hz(self) -> float:
        return self.count / self.acquisition_s

    @property
    def sigma_hz(self) -> float:
        return math.sqrt(self.count) / self.acquisition_s


def count_nfold(
    stream: TimeTagStream,
    channels: Sequence[int],
    window_s: float | None = None,
) -> NFoldCounts:
    """Count events where all channels fire at their scheduled pulse offsets.

    Each channel's records are shifted back by its schedule delay (the bin in
    which the schedule targets it); a coincidence is a pulse slot where every
    channel has a record, i.e. simultaneity within half a pulse period after
    alignment.  The window must span the alignment range.
    """
    channels = tuple(int(c) for c in channels)
    if len(channels) < 2 or len(set(channels)) != len(channels):
        raise DomainError(f"need >= 2 distinct channels, got {channels!r}")
    period_s = stream.meta.pulse_period_ps * 1e-12
    schedule_delays = _meta_delays(stream, channels)
    span = max(schedule_delays) - min(schedule_delays)
    if window_s is None:
        window_s = (span + 1) * period_s
    if window_s < span * period_s:
        raise ConfigError(
            f"window {window_s:.3e}s is smaller than the schedule span "
            f"{span * period_s:.3e}s; aligned channels can never coincide"
        )
    pulses = stream.pulse_indices
    aligned = None
    for ch, d in zip(channels, schedule_delays):
        slots = np.sort(pulses[stream.channels == ch]) - d
        aligned = slots if aligned is None else np.intersect1d(aligned, slots, assume_unique=True)
        if aligned.size == 0:
            break
    count = int(aligned.size) if aligned is not None else 0
    return NFoldCounts(
        n=len(channels),
        channels=channels,
        window_s=float(window_s),
        count=count,
        acquisition_s=stream.acquisition_s,
    )


def _meta_delays(stream: TimeTagStream, channels: Sequence[int]) -> tuple[int, ...]:
    targets = stream.meta.schedule_targets
    delays = []
    for ch in channels:
        if ch not in targets:
            raise ConfigError(
                f"channel {ch} is never targeted by the stream's schedule {targets!r}"
            )
        delays.append(targets.index(ch))
    return tuple(delays)


def eta_sd_from_singles(
    singles_rates_hz: Sequence[float], pump_rate_hz: float, eta_det: float
) -> float:
    """Source-to-device efficiency from summed singles: sum(rates)/(R*eta_det)."""
    if pump_rate_hz <= 0:
        raise DomainError(f"pump_rate_hz must be positive, got {pump_rate_hz!r}")
    if eta_det <= 0 or eta_det > 1:
        raise DomainError(f"eta_det must lie in (0, 1], got {eta_det!r}")
    total = float(np.sum(singles_rates_hz))
    if total < 0:
        raise DomainError("singles rates must be non-negative")
    eta_sd = total / (pump_rate_hz * eta_det)
    if eta_sd > 1.0:
        raise DataError(
            f"singles imply eta_sd={eta_sd:.4f} > 1; rates inconsistent with the pump rate"
        )
    return eta_sd


# ---------------------------------------------------------------------------
# splitting-ratio estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatioEstimate:
    """One coupler state's estimated through fraction."""

    coupler_id: str
    state: str
    ratio: float
    sigma: float


@dataclass(frozen=True)
class RatioEstimationResult:
    estimates: tuple[RatioEstimate, ...]
    param_names: tuple[str, ...]
    covariance: np.ndarray
    fit: FitResult

    def table(self) -> dict[str, dict[str, float]]:
        """Estimates in ratio-table form, usable by the routing functions."""
        table: dict[str, dict[str, float]] = {}
        for est in self.estimates:
            table.setdefault(est.coupler_id, {})[est.state] = est.ratio
        return table

    def get(self, coupler_id: str, state: str) -> RatioEstimate:
        for est in self.estimates:
            if est.coupler_id == coupler_id and est.state == state:
                return est
        raise KeyError((coupler_id, state))


def _class_areas(hist: CoincidenceHistogram, period: int):
    """Sum histogram bins into delay-mod-period classes, excluding delay 0.

    Uses the widest symmetric range that gives every class the same number of
    contributing delay bins, so class areas share one normalization.
    """
    max_delay = int(hist.delays.max())
    usable = (max_delay // period) * period
    if usable < period:
        raise EstimationError(
            f"histogram range +-{max_delay} bins is narrower than one schedule "
            f"period ({period} bins)"
        )
    areas = np.zeros(period)
    index = {int(d): i for i, d in enumerate(hist.delays)}
    for d in range(-usable, usable + 1):
        if d == 0:
            continue
        areas[d % period] += hist.counts[index[d]]
    # dropping delay 0 removes exactly the surplus member of class 0, so every
    # class is left with the same term count and shares one normalization
    n_terms = np.full(period, 2 * usable // period, dtype=float)
    return areas, n_terms


def _model_class_areas(rows: np.ndarray, a: int, b: int, period: int) -> np.ndarray:
    """Expected relative class areas: sum_b pi_b(a) * pi_(b+m)(b_ch)."""
    out = np.zeros(period)
    for m in range(period):
        out[m] = sum(
            rows[k, a - 1] * rows[(k + m) % period, b - 1] for k in range(period)
        )
    return out


def estimate_splitting_ratios(
    histograms: Sequence[CoincidenceHistogram],
    network: DemuxNetwork,
    schedule: SwitchSchedule,
    states: Sequence[str] = ("on", "off"),
) -> RatioEstimationResult:
    """Estimate per-coupler, per-state through fractions from pair histograms.

    Peak areas, folded to delay classes modulo the schedule period, are fit
    against the tree path-product routing model by weighted least squares;
    one free scale per histogram absorbs flux and detector efficiencies.
    Histograms must cover enough distinct pairs to make all requested ratios
    identifiable (all pairs sharing channel 1 suffice for a balanced 1x4).
    """
    if not histograms:
        raise EstimationError("no histograms given")
    period = schedule.period
    data = []
    for hist in histograms:
        areas, n_terms = _class_areas(hist, period)
        if areas.sum() == 0:
            raise EstimationError(
                f"histogram ({hist.channel_a},{hist.channel_b}) has no counts"
            )
        data.append((hist.channel_a, hist.channel_b, areas, n_terms))

    coupler_ids = list(network.coupler_ids)
    states = tuple(states)
    ratio_names = [f"{cid}:{st}" for cid in coupler_ids for st in states]
    scale_names = [f"scale:{a}-{b}" for a, b, _, _ in data]
    n_ratio = len(ratio_names)

    y = np.concatenate([areas for _, _, areas, _ in data])
    sigma = np.sqrt(np.clip(y, 1.0, None))  # Poisson, floored for empty classes

    def build_table(x: np.ndarray) -> dict[str, dict[str, float]]:
        table: dict[str, dict[str, float]] = {cid: {} for cid in coupler_ids}
        k = 0
        for cid in coupler_ids:
            for st in states:
                table[cid][st] = float(np.clip(x[k], 0.0, 1.0))
                k += 1
        return table

    def model(x: np.ndarray) -> np.ndarray:
        rows = routing_by_bin(network, schedule, build_table(x))
        out = []
        for i, (a, b, _, n_terms) in enumerate(data):
            rel = _model_class_areas(rows, a, b, period)
            out.append(x[n_ratio + i] * rel * n_terms)
        return np.concatenate(out)

    def residuals(x: np.ndarray) -> np.ndarray:
        return (model(x) - y) / sigma

    x0 = np.empty(n_ratio + len(data))
    for k, name in enumerate(ratio_names):
        x0[k] = 0.9 if name.endswith(":on") else 0.1
    for i, (_, _, areas, n_terms) in enumerate(data):
        x0[n_ratio + i] = areas.sum() / max(n_terms.sum() / period, 1.0)

    bounds = [(0.0, 1.0)] * n_ratio + [(0.0, np.inf)] * len(data)
    fit = damped_least_squares(
        residuals,
        x0,
        names=tuple(ratio_names + scale_names),
        bounds=bounds,
    )
    # reweight by the fitted model: data-derived Poisson weights bias counts
    # low because downward fluctuations get larger weights
    for _ in range(2):
        sigma = np.sqrt(np.clip(model(np.asarray(fit.values)), 1.0, None))
        fit = damped_least_squares(
            residuals,
            np.asarray(fit.values),
            names=tuple(ratio_names + scale_names),
            bounds=bounds,
        )

    # identifiability check at the solution
    jac = finite_difference_jacobian(residuals, np.asarray(fit.values))
    rank = np.linalg.matrix_rank(jac[:, :n_ratio], tol=1e-8)
    if rank < n_ratio:
        pairs = [(a, b) for a, b, _, _ in data]
        raise EstimationError(
            f"ratios not identifiable from pairs {pairs!r}: rank {rank} < {n_ratio}; "
            "provide histograms for more channel pairs"
        )

    estimates = []
    for k, name in enumerate(ratio_names):
        cid, st = name.split(":")
        estimates.append(
            RatioEstimate(coupler_id=cid, state=st, ratio=fit.values[k], sigma=fit.sigmas[k])
        )
    return RatioEstimationResult(
        estimates=tuple(estimates),
        param_names=tuple(ratio_names),
        covariance=fit.covariance[:n_ratio, :n_ratio],
        fit=fit,
    )


def eta_dm_from_ratios(
    result: RatioEstimationResult,
    network: DemuxNetwork,
    schedule: SwitchSchedule,
):
    """Switching efficiency from estimated ratios, with a delta-method sigma."""
    table = result.table()
    value = switching_efficiency(network, schedule, table)
    # numeric gradient wrt each estimated ratio
    grad = np.zeros(len(result.param_names))
    h = 1e-6
    for k, name in enumerate(result.param_names):
        cid, st = name.split(":")
        bumped = {c: dict(s) for c, s in table.items()}
        bumped[cid][st] = min(bumped[cid][st] + h, 1.0)
        step = bumped[cid][st] - table[cid][st]
        if step == 0.0:
            bumped[cid][st] = table[cid][st] - h
            step = -h
        grad[k] = (switching_efficiency(network, schedule, bumped) - value) / step
    variance = float(grad @ result.covariance @ grad)
    return value, math.sqrt(max(variance, 0.0))


# ---------------------------------------------------------------------------
# model fits
# ---------------------------------------------------------------------------

def saturation_model(power_uw, c_max: float, p0_uw: float):
    """Two-fold saturation curve c_max * (1 - exp(-P/P0))**2."""
    power_uw = np.asarray(power_uw, dtype=float)
    return c_max * (1.0 - np.exp(-power_uw / p0_uw)) ** 2


def fit_saturation(
    power_uw: Sequence[float],
    rate_hz: Sequence[float],
    sigma_hz: Sequence[float] | None = None,
    initial: tuple[float, float] | None = None,
) -> FitResult:
    """Fit the two-fold saturation curve; returns c_max and p0 with errors.

    Parameters
    ----------
    power_uw, rate_hz : array_like
        Pump powers and measured two-fold rates (>= 3 points).
    sigma_hz : array_like, optional
        Per-point standard errors; unweighted fit when omitted.
    initial : (c_max, p0), optional
        Starting point; a data-driven default is used when omitted.
    """
    p = np.asarray(power_uw, dtype=float)
    y = np.asarray(rate_hz, dtype=float)
    if p.size != y.size or p.size < 3:
        raise DataError("need >= 3 (power, rate) points with matching shapes")
    if np.any(p < 0):
        raise DomainError("pump powers must be non-negative")
    if sigma_hz is not None:
        s = np.asarray(sigma_hz, dtype=float)
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise DataError("sigma_hz must be positive and finite")
        w = 1.0 / s
    else:
        w = np.ones_like(y)

    if initial is None:
        c0 = max(float(y.max()), 1e-12)
        p00 = float(np.median(p[p > 0])) if np.any(p > 0) else 1.0
    else:
        c0, p00 = initial

    def residuals(x):
        return (saturation_model(p, x[0], x[1]) - y) * w

    def jacobian(x):
        c_max, p0 = x
        e = np.exp(-p / p0)
        base = 1.0 - e
        jac = np.empty((p.size, 2))
        jac[:, 0] = base**2 * w
        jac[:, 1] = -2.0 * c_max * base * e * p / p0**2 * w
        return jac

    return damped_least_squares(
        residuals,
        np.array([c0, p00]),
        jacobian_fn=jacobian,
        names=("c_max_hz", "p0_uw"),
        bounds=[(0.0, np.inf), (1e-12, np.inf)],
    )


def fit_switching_efficiency(
    nfold: Sequence[NFoldCounts],
    pump_rate_hz: float,
    eta_det: float,
    eta_sd: float,
) -> FitResult:
    """Single-parameter fit of the switching efficiency to n-fold rates.

    Model: rate(n) = R * (eta_sd * eta_det)**n * s_active(n, eta_dm), fit to
    the measured rates (n >= 2, at least two distinct n) by weighted least
    squares.  All-zero rates carry no efficiency information and are reported
    as a boundary solution at zero.
    """
    points = sorted(nfold, key=lambda m: m.n)
    if len(points) < 2 or len({m.n for m in points}) < 2:
        raise DataError("need measured rates for at least two distinct n")
    if any(m.n < 2 for m in points):
        raise DomainError("switching efficiency is only constrained by n >= 2 rates")
    ns = np.array([m.n for m in points])
    rates = np.array([m.rate_hz for m in points])
    sigmas = np.array([m.sigma_hz if m.count > 0 else 1.0 / m.acquisition_s for m in points])

    if np.all(rates == 0.0):
        # degenerate data: flag rather than report a meaningless interior optimum
        return FitResult(
            names=("eta_dm",),
            values=(0.0,),
            sigmas=(float("inf"),),
            covariance=np.array([[float("inf")]]),
            residual_norm=float(np.linalg.norm(rates / sigmas)),
            iterations=0,
            converged=True,
            at_boundary=True,
        )

    amp = pump_rate_hz * (eta_sd * eta_det) ** ns.astype(float)

    def residuals(x):
        eta = x[0]
        model = amp * np.array([s_active(int(n), eta) for n in ns])
        return (model - rates) / sigmas

    def jacobian(x):
        eta = x[0]
        # d s_active / d eta = (eta^(n-1) - ((1-eta)/(n-1))^(n-1)) for n >= 2
        ds = np.array(
            [eta ** (n - 1) - ((1.0 - eta) / (n - 1)) ** (n - 1) for n in ns]
        )
        return (amp * ds / sigmas)[:, None]

    return damped_least_squares(
        residuals,
        np.array([0.75]),
        jacobian_fn=jacobian,
        names=("eta_dm",),
        bounds=[(0.0, 1.0)],
    )
