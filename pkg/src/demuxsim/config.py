"""Strict YAML run-configuration schema.

Unknown keys are rejected rather than ignored, every physical quantity carries
its unit in the key name, and the schema is versioned via config_version.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import yaml

from .couplers import (
    CouplerNode,
    CouplerParams,
    DemuxNetwork,
    SwitchSchedule,
    balanced_network,
    cascade_network,
    schedule_for_cycle,
    switching_efficiency,
)
from .errors import ConfigError
from .rates import EmitterParams, LossBudget, PredictionConfig
from .simulate import SimConfig

__all__ = ["CONFIG_VERSION", "load_config", "RunConfig"]

CONFIG_VERSION = 1

_EMITTER_KEYS = {
    "pump_rate_mhz": True,
    "saturation_power_uw": True,
    "max_brightness": True,
    "g2_zero": False,
    "polarized_fraction": False,
    "fiber_coupling": False,
}
_LOSSES_KEYS = {
    "mode_overlap": False,
    "fresnel_in": False,
    "fresnel_out": False,
    "propagation_db_per_cm": False,
    "device_length_cm": False,
    "transmission": False,
}
_NETWORK_KEYS = {"topology": True, "outputs": False, "root": False}
_SCHEDULE_KEYS = {"kind": False, "targets": False, "bins": False}
_DETECTOR_KEYS = {"efficiency": True}
_SIMULATION_KEYS = {
    "pump_power_uw": True,
    "pulses": False,
    "duration_s": False,
    "seed": True,
}
_PREDICTION_KEYS = {"eta_dm": False, "n_max": False, "include_detectors": False}
_COUPLER_RATIO_KEYS = {"on": True, "off": True}
_COUPLER_PHYSICAL_KEYS = {
    "kappa_per_mm": True,
    "length_mm": True,
    "delta_beta_per_volt_per_mm": True,
    "voltages_v": True,
}
_TOP_KEYS = {
    "config_version": True,
    "emitter": True,
    "network": True,
    "couplers": True,
    "schedule": False,
    "losses": False,
    "detectors": False,
    "simulation": False,
    "prediction": False,
}


def _require_mapping(doc: Any, where: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(doc).__name__}")
    return doc


def _check_keys(doc: dict, allowed: dict, where: str) -> None:
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)!r}")
    missing = [k for k, required in allowed.items() if required and k not in doc]
    if missing:
        raise ConfigError(f"missing required key(s) in {where}: {missing!r}")


def _state_name(key: Any) -> str:
    # YAML 1.1 reads bare on/off as booleans; map them back to state names
    if key is True:
        return "on"
    if key is False:
        return "off"
    return str(key)


def _number(doc: dict, key: str, where: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ConfigError(f"missing {where}.{key}")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    return float(value)


class RunConfig:
    """Validated configuration document, resolvable into toolkit objects."""

    def __init__(self, doc: dict, source: str = "<config>"):
        doc = _require_mapping(doc, source)
        _check_keys(doc, _TOP_KEYS, source)
        if doc.get("config_version") != CONFIG_VERSION:
            raise ConfigError(
                f"config_version must be {CONFIG_VERSION}, got {doc.get('config_version')!r}"
            )
        self.doc = doc
        self.source = source
        self.emitter = self._build_emitter()
        self.network = self._build_network()
        self.couplers = self._build_couplers()
        self.schedule = self._build_schedule()
        self.budget = self._build_budget()
        self.eta_det = self._build_detector()
        self._validate_couplers_cover_network()
        self._validate_lazy_sections()

    # -- sections -----------------------------------------------------------

    def _build_emitter(self) -> EmitterParams:
        sec = _require_mapping(self.doc["emitter"], "emitter")
        _check_keys(sec, _EMITTER_KEYS, "emitter")
        return EmitterParams(
            pump_rate_hz=_number(sec, "pump_rate_mhz", "emitter") * 1e6,
            saturation_power_uw=_number(sec, "saturation_power_uw", "emitter"),
            max_brightness=_number(sec, "max_brightness", "emitter"),
            g2_zero=_number(sec, "g2_zero", "emitter", default=0.0),
            polarized_fraction=_number(sec, "polarized_fraction", "emitter", default=1.0),
            fiber_coupling=_number(sec, "fiber_coupling", "emitter", default=1.0),
        )

    def _build_network(self) -> DemuxNetwork:
        sec = _require_mapping(self.doc["network"], "network")
        _check_keys(sec, _NETWORK_KEYS, "network")
        topology = sec["topology"]
        if topology == "balanced":
            return balanced_network(int(_number(sec, "outputs", "network")))
        if topology == "cascade":
            return cascade_network(int(_number(sec, "outputs", "network")))
        if topology == "custom":
            if "root" not in sec:
                raise ConfigError("network.topology=custom requires network.root")
            return DemuxNetwork(self._parse_node(sec["root"], "network.root"))
        raise ConfigError(f"unknown network.topology {topology!r}")

    def _parse_node(self, doc: Any, where: str):
        if isinstance(doc, int) and not isinstance(doc, bool):
            return doc
        doc = _require_mapping(doc, where)
        _check_keys(doc, {"coupler_id": True, "through": True, "cross": True}, where)
        return CouplerNode(
            coupler_id=str(doc["coupler_id"]),
            through=self._parse_node(doc["through"], f"{where}.through"),
            cross=self._parse_node(doc["cross"], f"{where}.cross"),
        )

    def _build_couplers(self) -> dict[str, dict[str, float]]:
        sec = _require_mapping(self.doc["couplers"], "couplers")
        table: dict[str, dict[str, float]] = {}
        for cid, spec in sec.items():
            spec = _require_mapping(spec, f"couplers.{cid}")
            spec = {_state_name(k): v for k, v in spec.items()}
            if "voltages_v" in spec:
                _check_keys(spec, _COUPLER_PHYSICAL_KEYS, f"couplers.{cid}")
                voltages = _require_mapping(spec["voltages_v"], f"couplers.{cid}.voltages_v")
                params = CouplerParams(
                    kappa_per_mm=_number(spec, "kappa_per_mm", f"couplers.{cid}"),
                    length_mm=_number(spec, "length_mm", f"couplers.{cid}"),
                    delta_beta_per_volt_per_mm=_number(
                        spec, "delta_beta_per_volt_per_mm", f"couplers.{cid}"
                    ),
                    state_voltages={_state_name(k): float(v) for k, v in voltages.items()},
                )
                table[str(cid)] = params.ratios()
            else:
                _check_keys(spec, _COUPLER_RATIO_KEYS, f"couplers.{cid}")
                ratios = {}
                for state in ("on", "off"):
                    value = _number(spec, state, f"couplers.{cid}")
                    if not 0.0 <= value <= 1.0:
                        raise ConfigError(
                            f"couplers.{cid}.{state} must lie in [0, 1], got {value!r}"
                        )
                    ratios[state] = value
                table[str(cid)] = ratios
        if not table:
            raise ConfigError("couplers section is empty")
        return table

    def _build_schedule(self) -> SwitchSchedule:
        sec = self.doc.get("schedule")
        bin_s = 1.0 / self.emitter.pump_rate_hz
        if sec is None:
            return schedule_for_cycle(self.network, bin_duration_s=bin_s)
        sec = _require_mapping(sec, "schedule")
        _check_keys(sec, _SCHEDULE_KEYS, "schedule")
        kind = sec.get("kind", "cyclic")
        if kind == "cyclic":
            targets = sec.get("targets")
            if "bins" in sec:
                raise ConfigError("schedule.bins is only valid with kind=custom")
            return schedule_for_cycle(self.network, targets=targets, bin_duration_s=bin_s)
        if kind == "custom":
            if "targets" not in sec or "bins" not in sec:
                raise ConfigError("schedule.kind=custom requires targets and bins")
            bins = []
            for i, assignment in enumerate(sec["bins"]):
                assignment = _require_mapping(assignment, f"schedule.bins[{i}]")
                bins.append({str(k): _state_name(v) for k, v in assignment.items()})
            return SwitchSchedule(
                period=len(bins),
                bins=tuple(bins),
                targets=tuple(int(t) for t in sec["targets"]),
                bin_duration_s=bin_s,
            )
        raise ConfigError(f"unknown schedule.kind {kind!r}")

    def _build_budget(self) -> LossBudget:
        sec = self.doc.get("losses")
        if sec is None:
            return LossBudget()
        sec = _require_mapping(sec, "losses")
        _check_keys(sec, _LOSSES_KEYS, "losses")
        if "transmission" in sec:
            extra = set(sec) - {"transmission"}
            if extra:
                raise ConfigError(
                    f"losses.transmission excludes itemized keys: {sorted(extra)!r}"
                )
            return LossBudget.from_transmission(_number(sec, "transmission", "losses"))
        return LossBudget(
            mode_overlap=_number(sec, "mode_overlap", "losses", default=1.0),
            fresnel_in=_number(sec, "fresnel_in", "losses", default=0.0),
            fresnel_out=_number(sec, "fresnel_out", "losses", default=0.0),
            propagation_db_per_cm=_number(sec, "propagation_db_per_cm", "losses", default=0.0),
            device_length_cm=_number(sec, "device_length_cm", "losses", default=0.0),
        )

    def _build_detector(self) -> float:
        sec = self.doc.get("detectors")
        if sec is None:
            return 1.0
        sec = _require_mapping(sec, "detectors")
        _check_keys(sec, _DETECTOR_KEYS, "detectors")
        eta = _number(sec, "efficiency", "detectors")
        if not 0.0 <= eta <= 1.0:
            raise ConfigError(f"detectors.efficiency must lie in [0, 1], got {eta!r}")
        return eta

    def _validate_couplers_cover_network(self) -> None:
        missing = [cid for cid in self.network.coupler_ids if cid not in self.couplers]
        if missing:
            raise ConfigError(f"couplers section lacks ratios for {missing!r}")

    def _validate_lazy_sections(self) -> None:
        # simulation/prediction are resolved on demand, but a document with a
        # typo must not load cleanly
        if "simulation" in self.doc:
            sec = _require_mapping(self.doc["simulation"], "simulation")
            _check_keys(sec, _SIMULATION_KEYS, "simulation")
            if ("pulses" in sec) == ("duration_s" in sec):
                raise ConfigError("simulation needs exactly one of pulses / duration_s")
            seed = sec.get("seed")
            if isinstance(seed, bool) or not isinstance(seed, int):
                raise ConfigError("simulation.seed must be an integer")
        if "prediction" in self.doc:
            sec = _require_mapping(self.doc["prediction"], "prediction")
            _check_keys(sec, _PREDICTION_KEYS, "prediction")

    # -- resolved objects ----------------------------------------------------

    def sim_config(self, pulses: int | None = None, seed: int | None = None) -> SimConfig:
        sec = self.doc.get("simulation")
        if sec is None:
            raise ConfigError("simulation section is required to simulate")
        sec = _require_mapping(sec, "simulation")
        _check_keys(sec, _SIMULATION_KEYS, "simulation")
        if ("pulses" in sec) == ("duration_s" in sec):
            raise ConfigError("simulation needs exactly one of pulses / duration_s")
        count = pulses
        duration = None
        if count is None:
            if "pulses" in sec:
                count = int(_number(sec, "pulses", "simulation"))
            else:
                duration = _number(sec, "duration_s", "simulation")
        the_seed = seed if seed is not None else sec.get("seed")
        if the_seed is None or isinstance(the_seed, bool) or not isinstance(the_seed, int):
            raise ConfigError("simulation.seed must be an integer")
        return SimConfig(
            emitter=self.emitter,
            network=self.network,
            schedule=self.schedule,
            couplers=self.couplers,
            budget=self.budget,
            eta_det=self.eta_det,
            pump_power_uw=_number(sec, "pump_power_uw", "simulation"),
            rng_seed=int(the_seed),
            pulse_count=count,
            duration_s=duration,
        )

    def prediction_config(self, include_detectors: bool | None = None) -> PredictionConfig:
        sec = self.doc.get("prediction")
        eta_dm = None
        include = False
        if sec is not None:
            sec = _require_mapping(sec, "prediction")
            _check_keys(sec, _PREDICTION_KEYS, "prediction")
            if "eta_dm" in sec:
                eta_dm = _number(sec, "eta_dm", "prediction")
            include = bool(sec.get("include_detectors", False))
        if include_detectors is not None:
            include = include_detectors
        if eta_dm is None:
            eta_dm = switching_efficiency(self.network, self.schedule, self.couplers)
        return PredictionConfig(
            source=self.emitter,
            transmission=self.budget,
            eta_dm=eta_dm,
            eta_det=self.eta_det,
            include_detectors=include,
        )

    def prediction_n_max(self, default: int = 10) -> int:
        sec = self.doc.get("prediction")
        if sec is None or "n_max" not in sec:
            return default
        return int(_number(sec, "n_max", "prediction"))


def load_config(path) -> RunConfig:
    """Load and validate a YAML configuration file.

    Unreadable paths raise OSError (an I/O failure); malformed or invalid
    content raises ConfigError.
    """
    path = Path(path)
    text = path.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if doc is None:
        raise ConfigError(f"config {path} is empty")
    return RunConfig(doc, source=str(path))
