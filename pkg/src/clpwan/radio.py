"""Link models for the radio technologies available to a device.

Coverage, data rate, bandwidth, payload and daily-message caps come from the
published LPWA comparison table plus the short-range/cellular figures quoted
alongside it.  Transmit power and the two per-message overheads have no
published values; they are read from the ``technologies`` section of the
shipped default configuration (``data/default_config.json``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from typing import Iterable, Iterator, Mapping

from .errors import ConfigError

TECHNOLOGY_IDS = ("SIGFOX", "LORA", "NB_IOT", "LTE_M", "EC_GSM", "BLE", "WIFI", "LTE")

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class TechnologyProfile:
    id: str
    coverage_m: float
    data_rate_bps: float
    bandwidth_hz: float
    spectrum: str
    max_payload_bytes: int | None = None
    max_messages_per_day: int | None = None
    fixed_overhead_s: float = 0.0
    tx_power_w: float = 1.0
    per_message_overhead_j: float = 0.0
    # reporting only; never enters delay or energy
    battery_life: str = "unspecified"

    def __post_init__(self) -> None:
        problems = profile_violations(asdict(self))
        if problems:
            key, msg = problems[0]
            raise ConfigError(f"technology {self.id}: {key} {msg}", key=key)

    def to_dict(self) -> dict:
        d = asdict(self)
        del d["id"]
        return d


def profile_violations(d: Mapping) -> list[tuple[str, str]]:
    """Return (field, message) pairs for every invariant a profile dict breaks."""
    out = []
    for key in ("coverage_m", "data_rate_bps", "tx_power_w"):
        if not d.get(key, 0) > 0:
            out.append((key, "must be > 0"))
    for key in ("fixed_overhead_s", "per_message_overhead_j", "bandwidth_hz"):
        if d.get(key, 0) < 0:
            out.append((key, "must be >= 0"))
    if d.get("spectrum") not in ("licensed", "unlicensed"):
        out.append(("spectrum", "must be 'licensed' or 'unlicensed'"))
    cap = d.get("max_payload_bytes")
    if cap is not None and cap <= 0:
        out.append(("max_payload_bytes", "must be > 0 when present"))
    daily = d.get("max_messages_per_day")
    if daily is not None and daily < 1:
        out.append(("max_messages_per_day", "must be >= 1 when present"))
    return out


PROFILE_FIELDS = tuple(f.name for f in fields(TechnologyProfile) if f.name != "id")


class TechnologyRegistry:
    """Ordered, fixed set of profiles; index i of a probability vector is profiles[i]."""

    def __init__(self, profiles: Iterable[TechnologyProfile]):
        self.profiles: tuple[TechnologyProfile, ...] = tuple(profiles)
        self._index = {}
        for i, p in enumerate(self.profiles):
            if p.id in self._index:
                raise ConfigError(f"duplicate technology id {p.id}", key=p.id)
            self._index[p.id] = i
        if not self.profiles:
            raise ConfigError("registry needs at least one technology", key="technologies")

    def __len__(self) -> int:
        return len(self.profiles)

    def __iter__(self) -> Iterator[TechnologyProfile]:
        return iter(self.profiles)

    def __contains__(self, tech_id: str) -> bool:
        return tech_id in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TechnologyRegistry) and self.profiles == other.profiles

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.profiles)

    def index(self, tech_id: str) -> int:
        try:
            return self._index[tech_id]
        except KeyError:
            raise ConfigError(f"unknown technology id {tech_id!r}", key=tech_id) from None

    def profile(self, tech_id: str) -> TechnologyProfile:
        return self.profiles[self.index(tech_id)]

    def to_overrides(self) -> dict:
        """Full registry in the ``technologies`` config-section shape."""
        return {p.id: p.to_dict() for p in self.profiles}

    def with_overrides(self, overrides: Mapping[str, Mapping]) -> "TechnologyRegistry":
        """Apply per-id field overrides; ids not yet present must give every field."""
        profiles = list(self.profiles)
        for tech_id, values in overrides.items():
            if tech_id in self._index:
                i = self._index[tech_id]
                profiles[i] = replace(profiles[i], **values)
            else:
                missing = [k for k in ("coverage_m", "data_rate_bps", "bandwidth_hz", "spectrum") if k not in values]
                if missing:
                    raise ConfigError(
                        f"new technology {tech_id} lacks {', '.join(missing)}", key=tech_id
                    )
                profiles.append(TechnologyProfile(id=tech_id, **values))
        return TechnologyRegistry(profiles)


# Coverage/rate/bandwidth as published; BLE, WIFI and LTE are not in the LPWA
# table and use the short-range and cellular comparison figures instead.
_PUBLISHED = {
    "SIGFOX": dict(coverage_m=13_000.0, data_rate_bps=100.0, bandwidth_hz=100e3, spectrum="unlicensed",
                   max_payload_bytes=12, max_messages_per_day=150, battery_life="> 10 years"),
    "LORA": dict(coverage_m=20_000.0, data_rate_bps=50e3, bandwidth_hz=125e3, spectrum="unlicensed",
                 battery_life="< 10 years"),
    "NB_IOT": dict(coverage_m=15_000.0, data_rate_bps=150e3, bandwidth_hz=200e3, spectrum="licensed",
                   battery_life="> 10 years"),
    "LTE_M": dict(coverage_m=11_000.0, data_rate_bps=1e6, bandwidth_hz=1.4e6, spectrum="licensed",
                  battery_life="> 10 years"),
    "EC_GSM": dict(coverage_m=15_000.0, data_rate_bps=10e3, bandwidth_hz=2.4e6, spectrum="licensed",
                   battery_life="> 10 years"),
    "BLE": dict(coverage_m=10.0, data_rate_bps=100e3, bandwidth_hz=2e6, spectrum="unlicensed"),
    "WIFI": dict(coverage_m=100.0, data_rate_bps=100e6, bandwidth_hz=20e6, spectrum="unlicensed"),
    "LTE": dict(coverage_m=11_000.0, data_rate_bps=100e6, bandwidth_hz=20e6, spectrum="licensed"),
}


def default_config() -> dict:
    text = resources.files("clpwan").joinpath("data/default_config.json").read_text("utf-8")
    return json.loads(text)


def builtin_registry() -> TechnologyRegistry:
    constants = default_config()["technologies"]
    return TechnologyRegistry(
        TechnologyProfile(id=tech_id, **_PUBLISHED[tech_id], **constants[tech_id])
        for tech_id in TECHNOLOGY_IDS
    )


@dataclass
class DeviceRadioState:
    device_id: str
    distance_m: dict[str, float]
    messages_sent_today: dict[str, int] = field(default_factory=dict)
    current_technology: str | None = None
    day: int = 0

    def roll_day(self, t_s: float) -> None:
        """Reset daily counters when ``t_s`` falls in a later simulated day."""
        day = int(t_s // SECONDS_PER_DAY)
        if day != self.day:
            self.day = day
            self.messages_sent_today.clear()

    def record_send(self, profile: TechnologyProfile) -> None:
        n = self.messages_sent_today.get(profile.id, 0) + 1
        cap = profile.max_messages_per_day
        if cap is not None and n > cap:
            raise RuntimeError(f"{self.device_id}: {profile.id} daily cap {cap} exceeded")
        self.messages_sent_today[profile.id] = n


OK = "ok"


def feasible(profile: TechnologyProfile, state: DeviceRadioState, payload_bytes: int) -> str:
    """Return ``"ok"`` or the first violated constraint: coverage, payload, daily_cap."""
    if payload_bytes < 1:
        raise ValueError("payload_bytes must be >= 1")
    try:
        distance = state.distance_m[profile.id]
    except KeyError:
        raise ConfigError(
            f"device {state.device_id} has no distance for technology {profile.id}", key=profile.id
        ) from None
    if not distance < profile.coverage_m:
        return "coverage"
    if profile.max_payload_bytes is not None and payload_bytes > profile.max_payload_bytes:
        return "payload"
    cap = profile.max_messages_per_day
    if cap is not None and state.messages_sent_today.get(profile.id, 0) >= cap:
        return "daily_cap"
    return OK


def feasibility_mask(registry: TechnologyRegistry, state: DeviceRadioState, payload_bytes: int) -> list[bool]:
    return [feasible(p, state, payload_bytes) == OK for p in registry]


def transmission_delay(profile: TechnologyProfile, payload_bytes: int) -> float:
    return payload_bytes * 8 / profile.data_rate_bps + profile.fixed_overhead_s


def transmission_energy(profile: TechnologyProfile, payload_bytes: int) -> float:
    return profile.tx_power_w * transmission_delay(profile, payload_bytes) + profile.per_message_overhead_j
