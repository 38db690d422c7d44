"""Flat key=value run configuration with layered precedence.

A run is configured by defaults, overridden by an optional config file,
overridden again by repeated ``--set key=value`` flags. Files are plain
lines of ``key = value``; blank lines and ``#`` comments are ignored.
Unknown keys are rejected so typos fail loudly instead of silently using
defaults. The one open-ended namespace is ``condition.<name>``, which
reassigns a weather-condition string to a group; spaces in the condition
are written as underscores (``condition.heavy_rain = Rainy``).
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .core import DaytimeSpec, DaytimeWindow, SignConvention
from .errors import ConfigurationError, InputFileError
from .similarity import SelectionRule
from .synthgen import SynthConfig, SynthWeatherParams
from .weather import WeatherGroup, WeatherTable

log = logging.getLogger(__name__)

CONDITION_PREFIX = "condition."

DEFAULTS: dict[str, object] = {
    "weights.rainy": 1.0,
    "weights.cloudy": 0.1,
    "weights.fair": 0.001,
    "selection.sigma_kind": "sample",
    "selection.fallback_k": 10,
    "daytime.window": "06:00-20:00",
    "gap.day_fraction": 0.5,
    "sign_convention": "consumption_negative",
    "unknown_condition_group": "",
    "capacity_norm": False,
    "scenario.target": 0.3,
    "scenario.tolerance": 0.01,
    "scenario.seed": 0,
    "scenario.with_replacement": False,
    "scenario.max_members": 0,
    "synth.seed": 42,
    "synth.n_nonsolar": 200,
    "synth.n_solar": 40,
    "synth.days": 365,
    "synth.interval_minutes": 60,
    "synth.start": "2021-01-01T00:00:00",
    "synth.spo_fraction": 0.2,
    "synth.prob_rainy": 0.25,
    "synth.prob_cloudy": 0.35,
    "synth.prob_fair": 0.40,
    "synth.persistence": 0.7,
    "synth.within_day_jitter": 0.15,
    "synth.start_group": "",
    "synth.clearness_rainy": 0.2,
    "synth.clearness_cloudy": 0.5,
    "synth.clearness_fair": 0.95,
    "synth.capacity_min_kw": 1.5,
    "synth.capacity_max_kw": 4.0,
    "synth.pv_noise_sigma": 0.05,
    "synth.seasonal_amplitude": 0.15,
}


def _parse_value(key: str, raw: str, default: object) -> object:
    raw = raw.strip()
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{key}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{key}: expected a number, got {raw!r}") from exc
    return raw


def _unescape_condition(escaped: str) -> str:
    return escaped.replace("_", " ").strip()


def parse_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise InputFileError(f"config file not found: {path}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def parse_set_flags(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"--set needs key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


@dataclass
class RunConfig:
    """Fully resolved configuration for one CLI run."""

    values: dict[str, object]
    condition_overrides: dict[str, WeatherGroup] = field(default_factory=dict)

    @classmethod
    def resolve(
        cls,
        file_path: str | Path | None = None,
        set_flags: list[str] | None = None,
    ) -> "RunConfig":
        raw_layers: list[dict[str, str]] = []
        if file_path:
            raw_layers.append(parse_config_file(file_path))
        if set_flags:
            raw_layers.append(parse_set_flags(set_flags))

        values = dict(DEFAULTS)
        conditions: dict[str, WeatherGroup] = {}
        for layer in raw_layers:
            for key, raw in layer.items():
                if key.startswith(CONDITION_PREFIX):
                    name = _unescape_condition(key[len(CONDITION_PREFIX):])
                    if not name:
                        raise ConfigurationError(f"empty condition name in {key!r}")
                    try:
                        conditions[name] = WeatherGroup(raw.strip().capitalize())
                    except ValueError as exc:
                        raise ConfigurationError(
                            f"{key}: group must be Rainy, Cloudy, or Fair, got {raw!r}"
                        ) from exc
                    continue
                if key not in DEFAULTS:
                    raise ConfigurationError(f"unknown configuration key {key!r}")
                values[key] = _parse_value(key, raw, DEFAULTS[key])
        return cls(values=values, condition_overrides=conditions)

    def __getitem__(self, key: str) -> object:
        return self.values[key]

    def content_hash(self) -> str:
        """Stable digest of the resolved configuration."""
        lines = [f"{k} = {self.values[k]}" for k in sorted(self.values)]
        lines += [
            f"condition.{name} = {group.value}"
            for name, group in sorted(self.condition_overrides.items())
        ]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    # Assembled pipeline objects -------------------------------------

    def weather_table(self) -> WeatherTable:
        fallback = str(self.values["unknown_condition_group"]).strip()
        return WeatherTable(
            mapping=dict(self.condition_overrides),
            weights={
                WeatherGroup.RAINY: float(self.values["weights.rainy"]),
                WeatherGroup.CLOUDY: float(self.values["weights.cloudy"]),
                WeatherGroup.FAIR: float(self.values["weights.fair"]),
            },
            unknown_fallback=WeatherGroup(fallback.capitalize()) if fallback else None,
        )

    def daytime_spec(self) -> DaytimeSpec:
        return DaytimeSpec(default=_parse_window(str(self.values["daytime.window"])))

    def sign_convention(self) -> SignConvention:
        raw = str(self.values["sign_convention"])
        try:
            return SignConvention(raw)
        except ValueError as exc:
            raise ConfigurationError(
                f"sign_convention must be consumption_positive or consumption_negative, got {raw!r}"
            ) from exc

    def selection_rule(self) -> SelectionRule:
        return SelectionRule(
            sigma_kind=str(self.values["selection.sigma_kind"]),
            fallback_k=int(self.values["selection.fallback_k"]),
        )

    def synth_config(self) -> SynthConfig:
        v = self.values
        start_group = str(v["synth.start_group"]).strip()
        weather = SynthWeatherParams(
            prob_rainy=float(v["synth.prob_rainy"]),
            prob_cloudy=float(v["synth.prob_cloudy"]),
            prob_fair=float(v["synth.prob_fair"]),
            persistence=float(v["synth.persistence"]),
            within_day_jitter=float(v["synth.within_day_jitter"]),
            start_group=WeatherGroup(start_group.capitalize()) if start_group else None,
        )
        return SynthConfig(
            seed=int(v["synth.seed"]),
            n_nonsolar=int(v["synth.n_nonsolar"]),
            n_solar=int(v["synth.n_solar"]),
            days=int(v["synth.days"]),
            interval_minutes=int(v["synth.interval_minutes"]),
            start=str(v["synth.start"]),
            spo_fraction=float(v["synth.spo_fraction"]),
            weather=weather,
            clearness=(
                float(v["synth.clearness_rainy"]),
                float(v["synth.clearness_cloudy"]),
                float(v["synth.clearness_fair"]),
            ),
            capacity_min_kw=float(v["synth.capacity_min_kw"]),
            capacity_max_kw=float(v["synth.capacity_max_kw"]),
            pv_noise_sigma=float(v["synth.pv_noise_sigma"]),
            seasonal_amplitude=float(v["synth.seasonal_amplitude"]),
            daytime=_parse_window(str(self.values["daytime.window"])),
        )


def _parse_window(raw: str) -> DaytimeWindow:
    """Parse 'HH:MM-HH:MM' into a daytime window."""
    try:
        start_s, end_s = raw.split("-")
        sh, sm = (int(x) for x in start_s.strip().split(":"))
        eh, em = (int(x) for x in end_s.strip().split(":"))
    except ValueError as exc:
        raise ConfigurationError(
            f"daytime.window must look like 06:00-20:00, got {raw!r}"
        ) from exc
    return DaytimeWindow(start_minute=sh * 60 + sm, end_minute=eh * 60 + em)
