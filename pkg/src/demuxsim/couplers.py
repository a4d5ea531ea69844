"""Electro-optic directional couplers, the 1-to-n switch tree, and schedules.

Each switch is a two-mode directional coupler.  Detuning the propagation
constants of the two waveguides with a drive voltage moves light between the
cross port (fully coupled at zero detuning when the interaction length is an
odd multiple of the coupling length) and the through port.  A rooted binary
tree of such switches routes one input to n outputs; a cyclic schedule
reconfigures the tree once per pump pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DomainError

__all__ = [
    "cross_fraction",
    "delta_beta_for_cross",
    "CouplerParams",
    "CouplerState",
    "CouplerNode",
    "DemuxNetwork",
    "balanced_network",
    "cascade_network",
    "SwitchSchedule",
    "schedule_for_cycle",
    "routing_matrix",
    "routing_by_bin",
    "switching_efficiency",
    "physical_nfold_scaling",
    "channel_delay_bins",
]

RatioTable = Mapping[str, Mapping[str, float]]


# ---------------------------------------------------------------------------
# single coupler
# ---------------------------------------------------------------------------

def cross_fraction(kappa_per_mm: float, length_mm: float, delta_beta_per_mm: float) -> float:
    """Power fraction leaving the cross port of a detuned directional coupler.

    [kappa^2 / g^2] * sin^2(g L) with g = sqrt(kappa^2 + (delta_beta/2)^2).
    Even in delta_beta; equals sin^2(kappa L) at zero detuning.
    """
    if kappa_per_mm <= 0:
        raise DomainError(f"kappa_per_mm must be positive, got {kappa_per_mm!r}")
    if length_mm <= 0:
        raise DomainError(f"length_mm must be positive, got {length_mm!r}")
    g = math.hypot(kappa_per_mm, delta_beta_per_mm / 2.0)
    return (kappa_per_mm / g) ** 2 * math.sin(g * length_mm) ** 2


def delta_beta_for_cross(kappa_per_mm: float, length_mm: float, target: float) -> float:
    """Detuning that yields a given cross fraction.

    Searches the first monotone branch, from zero detuning down to the first
    zero of the transfer function, so the full (0, max] range at this length
    is reachable.
    """
    if not 0.0 <= target <= 1.0:
        raise DomainError(f"target must lie in [0, 1], got {target!r}")
    peak = cross_fraction(kappa_per_mm, length_mm, 0.0)
    if target > peak:
        raise DomainError(
            f"target {target!r} exceeds the zero-detuning cross fraction {peak:.6f}"
        )
    if target == peak:
        return 0.0
    # first zero of sin(gL): gL = pi * ceil(kappa L / pi)
    g_zero = math.pi * math.ceil(kappa_per_mm * length_mm / math.pi) / length_mm
    db_zero = 2.0 * math.sqrt(max(g_zero**2 - kappa_per_mm**2, 0.0))
    # rounding leaves a ~1e-33 residue at the zero; targets at or below it
    # cannot bracket a root
    if target <= cross_fraction(kappa_per_mm, length_mm, db_zero):
        return db_zero
    return brentq(
        lambda db: cross_fraction(kappa_per_mm, length_mm, db) - target,
        0.0,
        db_zero,
        xtol=1e-14,
    )


@dataclass(frozen=True)
class CouplerParams:
    """Physical description of one switch and its drive states.

    state_voltages maps state names (e.g. "on"/"off") to drive voltages; the
    detuning is delta_beta_per_volt_per_mm * voltage.
    """

    kappa_per_mm: float
    length_mm: float
    delta_beta_per_volt_per_mm: float
    state_voltages: Mapping[str, float]

    def through_fraction(self, state: str) -> float:
        """Power fraction on the through port in a named drive state."""
        if state not in self.state_voltages:
            raise ConfigError(f"unknown coupler state {state!r}")
        db = self.delta_beta_per_volt_per_mm * self.state_voltages[state]
        return 1.0 - cross_fraction(self.kappa_per_mm, self.length_mm, db)

    def ratios(self) -> dict[str, float]:
        return {state: self.through_fraction(state) for state in self.state_voltages}


@dataclass(frozen=True)
class CouplerState:
    """A coupler resolved to a single branching probability."""

    coupler_id: str
    splitting_ratio: float  # probability of the through branch

    def __post_init__(self) -> None:
        if not 0.0 <= self.splitting_ratio <= 1.0:
            raise DomainError(
                f"splitting_ratio must lie in [0, 1], got {self.splitting_ratio!r}"
            )


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplerNode:
    """Internal tree node: a switch with a through child and a cross child.

    Children are either nested nodes or integer output labels.
    """

    coupler_id: str
    through: Union["CouplerNode", int]
    cross: Union["CouplerNode", int]


class DemuxNetwork:
    """Rooted binary switch tree with output labels 1..n.

    Output labels must be exactly 1..n with no repeats and coupler ids unique.
    """

    def __init__(self, root: CouplerNode):
        self.root = root
        self._paths: dict[int, tuple[tuple[str, str], ...]] = {}
        self.coupler_ids: list[str] = []
        self._walk(root, ())
        labels = sorted(self._paths)
        if labels != list(range(1, len(labels) + 1)):
            raise ConfigError(
                f"output labels must be exactly 1..n, got {labels!r}"
            )
        if len(set(self.coupler_ids)) != len(self.coupler_ids):
            raise ConfigError(f"duplicate coupler ids in {self.coupler_ids!r}")

    def _walk(self, node: CouplerNode, prefix) -> None:
        if not isinstance(node, CouplerNode):
            raise ConfigError(f"malformed network node {node!r}")
        self.coupler_ids.append(node.coupler_id)
        for branch in ("through", "cross"):
            child = getattr(node, branch)
            path = prefix + ((node.coupler_id, branch),)
            if isinstance(child, CouplerNode):
                self._walk(child, path)
            elif isinstance(child, int) and not isinstance(child, bool):
                if child in self._paths:
                    raise ConfigError(f"output label {child} appears twice")
                self._paths[child] = path
            else:
                raise ConfigError(f"leaf must be an integer output label, got {child!r}")

    @property
    def n_outputs(self) -> int:
        return len(self._paths)

    def path_to(self, output: int) -> tuple[tuple[str, str], ...]:
        """(coupler_id, branch) hops from the root to an output."""
        try:
            return self._paths[output]
        except KeyError:
            raise ConfigError(f"no output labelled {output!r}") from None

    def to_dict(self) -> dict:
        """Canonical nested-dict form (used for config digests)."""

        def conv(node):
            if isinstance(node, CouplerNode):
                return {
                    "coupler_id": node.coupler_id,
                    "through": conv(node.through),
                    "cross": conv(node.cross),
                }
            return node

        return conv(self.root)


def balanced_network(n_outputs: int, prefix: str = "sw") -> DemuxNetwork:
    """Balanced tree over a power-of-two output count, ids in breadth-first order.

    The root's through subtree holds the lower half of the outputs; leaf
    switches put the odd output on the through port.
    """
    if n_outputs < 2 or n_outputs & (n_outputs - 1):
        raise ConfigError(f"balanced topology needs a power-of-two n >= 2, got {n_outputs!r}")
    # number switches breadth-first so the root is sw1
    ids: dict[tuple[int, int], str] = {}
    queue = [(1, n_outputs + 1)]
    k = 0
    while queue:
        lo, hi = queue.pop(0)
        if hi - lo == 1:
            continue
        k += 1
        ids[(lo, hi)] = f"{prefix}{k}"
        mid = (lo + hi) // 2
        queue.append((lo, mid))
        queue.append((mid, hi))

    def assemble(lo: int, hi: int):
        if hi - lo == 1:
            return lo
        mid = (lo + hi) // 2
        return CouplerNode(
            coupler_id=ids[(lo, hi)],
            through=assemble(lo, mid),
            cross=assemble(mid, hi),
        )

    return DemuxNetwork(assemble(1, n_outputs + 1))


def cascade_network(n_outputs: int, prefix: str = "sw") -> DemuxNetwork:
    """Chain layout: switch k taps output k off its through port."""
    if n_outputs < 2:
        raise ConfigError(f"cascade topology needs n >= 2, got {n_outputs!r}")

    def build(k: int):
        if k == n_outputs - 1:
            return CouplerNode(coupler_id=f"{prefix}{k}", through=k, cross=k + 1)
        return CouplerNode(coupler_id=f"{prefix}{k}", through=k, cross=build(k + 1))

    return DemuxNetwork(build(1))


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchSchedule:
    """Cyclic drive pattern: one state per coupler per time bin.

    targets[k] is the output scheduled for bin k.  bin_duration_s, when set,
    must equal the pump pulse period.
    """

    period: int
    bins: tuple[Mapping[str, str], ...]
    targets: tuple[int, ...]
    bin_duration_s: float | None = None

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ConfigError(f"schedule period must be >= 1, got {self.period!r}")
        if len(self.bins) != self.period or len(self.targets) != self.period:
            raise ConfigError("schedule bins/targets must match the period")
        ids = set(self.bins[0])
        for assignment in self.bins:
            if set(assignment) != ids:
                raise ConfigError("every coupler must be assigned a state in every bin")


def schedule_for_cycle(
    network: DemuxNetwork,
    targets: Sequence[int] | None = None,
    n_outputs: int | None = None,
    bin_duration_s: float | None = None,
) -> SwitchSchedule:
    """Canonical cyclic schedule: bin k routes to targets[k] (default 1..n).

    Couplers on the root-to-target path are driven "on" when the next hop is
    their through branch and "off" otherwise; couplers off the path rest in
    "off" (the undriven, cross-favoring state).
    """
    if n_outputs is not None and n_outputs != network.n_outputs:
        raise ConfigError(
            f"n_outputs {n_outputs} does not match the network's {network.n_outputs}"
        )
    if targets is None:
        targets = tuple(range(1, network.n_outputs + 1))
    else:
        targets = tuple(int(t) for t in targets)
        for t in targets:
            network.path_to(t)  # raises on unknown outputs
    bins = []
    for target in targets:
        assignment = {cid: "off" for cid in network.coupler_ids}
        for cid, branch in network.path_to(target):
            assignment[cid] = "on" if branch == "through" else "off"
        bins.append(assignment)
    return SwitchSchedule(
        period=len(targets),
        bins=tuple(bins),
        targets=targets,
        bin_duration_s=bin_duration_s,
    )


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------

def _through_fraction(states: Mapping, coupler_id: str) -> float:
    value = states[coupler_id]
    if isinstance(value, CouplerState):
        value = value.splitting_ratio
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"through fraction for {coupler_id!r} outside [0, 1]: {value!r}")
    return value


def routing_matrix(network: DemuxNetwork, states: Mapping) -> np.ndarray:
    """Output probability vector (index 0 is output 1) for fixed coupler states.

    states maps coupler_id to a through-branch probability or a CouplerState.
    The vector sums to 1: the tree redistributes but does not lose photons.
    """
    probs = np.zeros(network.n_outputs)
    for output in range(1, network.n_outputs + 1):
        p = 1.0
        for cid, branch in network.path_to(output):
            if cid not in states:
                raise ConfigError(f"no state given for coupler {cid!r}")
            f = _through_fraction(states, cid)
            p *= f if branch == "through" else 1.0 - f
        probs[output - 1] = p
    return probs


def _resolve_bin(schedule: SwitchSchedule, table: RatioTable, bin_index: int) -> dict[str, float]:
    assignment = schedule.bins[bin_index % schedule.period]
    resolved = {}
    for cid, state in assignment.items():
        try:
            resolved[cid] = float(table[cid][state])
        except KeyError:
            raise ConfigError(f"no splitting ratio for coupler {cid!r} state {state!r}") from None
    return resolved


def routing_by_bin(network: DemuxNetwork, schedule: SwitchSchedule, table: RatioTable) -> np.ndarray:
    """(period, n_outputs) matrix of routing probabilities, one row per bin."""
    rows = [
        routing_matrix(network, _resolve_bin(schedule, table, b))
        for b in range(schedule.period)
    ]
    return np.vstack(rows)


def switching_efficiency(
    network: DemuxNetwork, schedule: SwitchSchedule, table: RatioTable
) -> float:
    """Cycle-averaged probability of routing each bin's photon to its target."""
    rows = routing_by_bin(network, schedule, table)
    return float(np.mean([rows[b, schedule.targets[b] - 1] for b in range(schedule.period)]))


def channel_delay_bins(schedule: SwitchSchedule, channels: Sequence[int]) -> tuple[int, ...]:
    """Per-channel alignment delay: the first bin in which the channel is targeted."""
    delays = []
    for ch in channels:
        try:
            delays.append(schedule.targets.index(ch))
        except ValueError:
            raise ConfigError(
                f"channel {ch} is never targeted by the schedule {schedule.targets!r}"
            ) from None
    return tuple(delays)


def physical_nfold_scaling(
    network: DemuxNetwork,
    schedule: SwitchSchedule,
    table: RatioTable,
    channels: Sequence[int],
) -> float:
    """Cycle-rate n-fold scaling factor of the physical routing model.

    Probability, per pump pulse, that pulses offset by each channel's schedule
    delay all route to their respective channels, averaged over the cycle.
    Replaces the uniform-misroute closed form when the actual tree matters.
    """
    rows = routing_by_bin(network, schedule, table)
    delays = channel_delay_bins(schedule, channels)
    total = 0.0
    for b in range(schedule.period):
        p = 1.0
        for ch, d in zip(channels, delays):
            p *= rows[(b + d) % schedule.period, ch - 1]
        total += p
    return total / schedule.period
