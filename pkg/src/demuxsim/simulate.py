"""Monte Carlo time-tag simulation of the switched single-photon stream.

Per pump pulse the source emits a primary photon with the power-dependent
brightness and, independently, a rare second photon sized so the stream's
zero-delay correlation matches the configured g2(0).  Each photon routes
through the switch tree with the coupler states of the pulse's schedule bin,
then survives device transmission and detector efficiency as one Bernoulli
trial.  Surviving photons become (channel, pulse_index * period) records; two
photons landing on the same channel in the same pulse yield one record, since
a click detector cannot resolve them.

Randomness is counter-based: pulses are laid out on a fixed grid of
2**16-pulse blocks, and the uniforms for a block depend only on
(seed, block_index).  Sharding a run therefore cannot change its draws, and
shard_and_merge reproduces single-shot output exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .couplers import DemuxNetwork, RatioTable, SwitchSchedule, routing_by_bin
from .errors import ConfigError, DomainError
from .rates import EmitterParams, LossBudget, compose_transmission
from .tags import StreamMeta, TimeTagStream, merge_streams

__all__ = [
    "SimConfig",
    "second_photon_probability",
    "simulate",
    "shard_and_merge",
    "BLOCK_PULSES",
]

BLOCK_PULSES = 1 << 16  # fixed draw-grid block; independent of shard layout
_DRAWS_PER_PULSE = 6  # emit/route/survive for the primary and second photon


def second_photon_probability(p1: float, g2_zero: float) -> float:
    """Independent second-photon probability that reproduces a target g2(0).

    With two-photon probability p1*p2 and mean photon number p1 + p2 the
    pulsed zero-delay correlation is 2*p1*p2 / (p1 + p2)**2; solving for p2
    needs g2 < 0.5, the ceiling of this two-photon emission model.
    """
    if not 0.0 <= g2_zero < 1.0:
        raise DomainError(f"g2_zero must lie in [0, 1), got {g2_zero!r}")
    if g2_zero == 0.0 or p1 == 0.0:
        return 0.0
    if g2_zero >= 0.5:
        raise ConfigError(
            f"g2_zero={g2_zero!r} is unreachable with a two-photon emission model (max 0.5)"
        )
    return p1 * ((1.0 - g2_zero) - math.sqrt(1.0 - 2.0 * g2_zero)) / g2_zero


@dataclass(frozen=True)
class SimConfig:
    """Fully resolved simulation inputs.

    Exactly one of pulse_count / duration_s must be given; rng_seed is
    mandatory so no run is silently irreproducible.
    """

    emitter: EmitterParams
    network: DemuxNetwork
    schedule: SwitchSchedule
    couplers: RatioTable
    budget: LossBudget
    eta_det: float
    pump_power_uw: float
    rng_seed: int
    pulse_count: int | None = None
    duration_s: float | None = None

    def __post_init__(self) -> None:
        if (self.pulse_count is None) == (self.duration_s is None):
            raise ConfigError("exactly one of pulse_count / duration_s must be set")
        if self.pulse_count is not None and self.pulse_count < 0:
            raise ConfigError(f"pulse_count must be >= 0, got {self.pulse_count!r}")
        if self.duration_s is not None and self.duration_s < 0:
            raise ConfigError(f"duration_s must be >= 0, got {self.duration_s!r}")
        if not 0.0 <= self.eta_det <= 1.0:
            raise DomainError(f"eta_det must lie in [0, 1], got {self.eta_det!r}")
        if self.pump_power_uw < 0:
            raise DomainError(f"pump_power_uw must be >= 0, got {self.pump_power_uw!r}")
        if self.rng_seed is None:
            raise ConfigError("rng_seed is mandatory")
        if self.schedule.bin_duration_s is not None:
            period_s = 1.0 / self.emitter.pump_rate_hz
            if not math.isclose(self.schedule.bin_duration_s, period_s, rel_tol=1e-9):
                raise ConfigError(
                    "schedule bin_duration_s must equal the pump pulse period"
                )

    def resolved_pulse_count(self) -> int:
        if self.pulse_count is not None:
            return int(self.pulse_count)
        return int(round(self.duration_s * self.emitter.pump_rate_hz))

    def pulse_period_ps(self) -> int:
        return int(round(1e12 / self.emitter.pump_rate_hz))

    def emission_probability(self) -> float:
        return self.emitter.input_brightness(self.pump_power_uw)

    def transmission(self) -> float:
        return compose_transmission(self.budget)

    def device_digest(self) -> str:
        """Digest of the device-defining sections (not the per-run schedule)."""
        doc = {
            "emitter": {
                "pump_rate_hz": self.emitter.pump_rate_hz,
                "saturation_power_uw": self.emitter.saturation_power_uw,
                "max_brightness": self.emitter.max_brightness,
                "g2_zero": self.emitter.g2_zero,
                "polarized_fraction": self.emitter.polarized_fraction,
                "fiber_coupling": self.emitter.fiber_coupling,
            },
            "network": self.network.to_dict(),
            "couplers": {
                cid: {state: float(v) for state, v in sorted(states.items())}
                for cid, states in sorted(self.couplers.items())
            },
            "budget": {
                "mode_overlap": self.budget.mode_overlap,
                "fresnel_in": self.budget.fresnel_in,
                "fresnel_out": self.budget.fresnel_out,
                "propagation_db_per_cm": self.budget.propagation_db_per_cm,
                "device_length_cm": self.budget.device_length_cm,
            },
            "eta_det": self.eta_det,
            "pump_power_uw": self.pump_power_uw,
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def stream_meta(self) -> StreamMeta:
        return StreamMeta(
            config_digest=self.device_digest(),
            pump_rate_hz=self.emitter.pump_rate_hz,
            pulse_period_ps=self.pulse_period_ps(),
            pulse_count=self.resolved_pulse_count(),
            n_channels=self.network.n_outputs,
            schedule_period=self.schedule.period,
            schedule_targets=self.schedule.targets,
        )


def _block_uniforms(seed: int, block_index: int, lo: int, hi: int) -> np.ndarray:
    """Uniforms for pulses [lo, hi) within one grid block, shard-independent."""
    bitgen = np.random.Philox(seed=np.random.SeedSequence((seed, block_index)))
    u = np.random.Generator(bitgen).random((BLOCK_PULSES, _DRAWS_PER_PULSE))
    return u[lo:hi]


def _simulate_range(config: SimConfig, start: int, stop: int):
    """Simulate pulses [start, stop); returns (pulse_indices, channels)."""
    p1 = config.emission_probability()
    p2 = second_photon_probability(p1, config.emitter.g2_zero)
    p_survive = config.transmission() * config.eta_det
    period = config.schedule.period
    cum = np.cumsum(routing_by_bin(config.network, config.schedule, config.couplers), axis=1)
    cum[:, -1] = 1.0  # guard the last inverse-CDF edge against rounding

    pulses_out = []
    channels_out = []
    pos = start
    while pos < stop:
        block = pos // BLOCK_PULSES
        block_start = block * BLOCK_PULSES
        lo = pos - block_start
        hi = min(stop - block_start, BLOCK_PULSES)
        u = _block_uniforms(config.rng_seed, block, lo, hi)
        idx = np.arange(block_start + lo, block_start + hi, dtype=np.int64)
        bins = (idx % period).astype(np.intp)

        chunk_pulses = []
        chunk_channels = []
        for emit_col, route_col, survive_col, prob in ((0, 1, 2, p1), (3, 4, 5, p2)):
            detected = (u[:, emit_col] < prob) & (u[:, survive_col] < p_survive)
            if not np.any(detected):
                chunk_pulses.append(np.empty(0, np.int64))
                chunk_channels.append(np.empty(0, np.int64))
                continue
            rows = cum[bins[detected]]
            channel = (u[detected, route_col][:, None] >= rows).sum(axis=1) + 1
            chunk_pulses.append(idx[detected])
            chunk_channels.append(channel.astype(np.int64))

        p_a, p_b = chunk_pulses
        c_a, c_b = chunk_channels
        if len(p_a) and len(p_b):
            # collapse same-pulse same-channel double hits into one click
            hit = np.clip(np.searchsorted(p_a, p_b), 0, len(p_a) - 1)
            dup = (p_a[hit] == p_b) & (c_a[hit] == c_b)
            p_b = p_b[~dup]
            c_b = c_b[~dup]
        pulses = np.concatenate([p_a, p_b])
        channels = np.concatenate([c_a, c_b])
        order = np.lexsort((channels, pulses))
        pulses_out.append(pulses[order])
        channels_out.append(channels[order])
        pos = block_start + hi

    if pulses_out:
        return np.concatenate(pulses_out), np.concatenate(channels_out)
    return np.empty(0, np.int64), np.empty(0, np.int64)


def _to_stream(config: SimConfig, pulses: np.ndarray, channels: np.ndarray) -> TimeTagStream:
    period_ps = np.uint64(config.pulse_period_ps())
    timestamps = pulses.astype(np.uint64) * period_ps
    return TimeTagStream(channels.astype(np.uint32), timestamps, config.stream_meta())


def simulate(config: SimConfig) -> TimeTagStream:
    """Run the full simulation and return the sorted time-tag stream."""
    n = config.resolved_pulse_count()
    pulses, channels = _simulate_range(config, 0, n)
    return _to_stream(config, pulses, channels)


def shard_and_merge(config: SimConfig, n_shards: int) -> TimeTagStream:
    """Simulate in contiguous pulse shards and merge; identical to simulate()."""
    if n_shards < 1:
        raise ConfigError(f"n_shards must be >= 1, got {n_shards!r}")
    n = config.resolved_pulse_count()
    edges = np.linspace(0, n, n_shards + 1).astype(np.int64)
    parts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        pulses, channels = _simulate_range(config, int(lo), int(hi))
        parts.append(_to_stream(config, pulses, channels))
    return merge_streams(parts, config.stream_meta())
