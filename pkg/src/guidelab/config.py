"""Experiment configuration: strict INI-style parsing and serialization.

The file format is sectioned key-value text.  Unknown sections or keys are
errors (reported with their line number); every key has a default, so an
empty file is a valid self-guided sampling configuration.  ``serialize``
followed by ``parse`` reproduces the configuration exactly, and the same
text is embedded as comments in every CSV the harness writes.

Sections and keys::

    [experiment]        kind frames channels height width grid_steps
                        sample_count master_seed out condition workers
                        ablate_param ablate_values baseline_iterations
                        distill_target_component plot
    [sampler_schedule]  beta_start beta_end total_steps
    [guide_schedule]    beta_start beta_end total_steps
    [sampler_prior]     component_count c{i}.weight c{i}.sigma c{i}.rho
                        c{i}.mean.null c{i}.mean.{id}
    [guide_prior]       same keys; the whole section is optional and its
                        absence means self-guided runs
    [guidance]          interpolation_steps interpolation_scale
                        rollout_steps cutoff filter_order interp_guidance
                        main_guidance filter_enabled self_renoise

Guidance modes are written ``cfg:7.5`` or ``cfg++:0.8``.  Means are
scalars or comma-separated lists of channels*height*width values.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field, replace

from .guidance import GuidanceConfig
from .prior import GaussianVideoComponent, MixtureVideoPrior
from .sampler import GuidanceMode, cfg, cfg_plus_plus
from .schedule import NoiseSchedule, build_linear_schedule

__all__ = [
    "ConfigError",
    "ScheduleSpec",
    "ComponentSpec",
    "PriorSpec",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "serialize_config",
]

KINDS = ("sample", "guide", "ablate", "distill", "baseline", "nfe", "cfg-compare")

ABLATABLE = ("interpolation_scale", "interpolation_steps", "rollout_steps")


class ConfigError(ValueError):
    """Invalid configuration file or option."""


@dataclass(frozen=True)
class ScheduleSpec:
    beta_start: float
    beta_end: float
    total_steps: int

    def build(self) -> NoiseSchedule:
        return build_linear_schedule(self.beta_start, self.beta_end, self.total_steps)


@dataclass(frozen=True)
class ComponentSpec:
    weight: float
    sigma: float
    rho: float
    means: tuple[tuple[int | None, tuple[float, ...]], ...]

    def build(self, channels: int, height: int, width: int) -> GaussianVideoComponent:
        resolved = {}
        for cond, values in self.means:
            if len(values) == 1:
                resolved[cond] = values[0]
            elif len(values) == channels * height * width:
                import numpy as np

                resolved[cond] = np.array(values).reshape(channels, height, width)
            else:
                raise ConfigError(
                    f"mean for condition {cond!r} must be a scalar or "
                    f"{channels * height * width} values, got {len(values)}"
                )
        return GaussianVideoComponent(means=resolved, sigma=self.sigma, rho=self.rho)


@dataclass(frozen=True)
class PriorSpec:
    components: tuple[ComponentSpec, ...]

    def build(self, channels: int, height: int, width: int) -> MixtureVideoPrior:
        return MixtureVideoPrior(
            components=tuple(
                (c.weight, c.build(channels, height, width)) for c in self.components
            )
        )


_DEFAULT_SAMPLER_SCHEDULE = ScheduleSpec(1e-4, 8e-3, 1000)
_DEFAULT_GUIDE_SCHEDULE = ScheduleSpec(8.5e-4, 1.2e-2, 1000)
_DEFAULT_SAMPLER_PRIOR = PriorSpec(
    components=(ComponentSpec(weight=1.0, sigma=1.0, rho=0.5, means=((None, (0.0,)),)),)
)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "guide"
    frames: int = 8
    channels: int = 1
    height: int = 4
    width: int = 4
    grid_steps: int = 50
    sample_count: int = 100
    master_seed: int = 0
    out: str = "results.csv"
    condition: int | None = None
    # execution detail: never serialized, excluded from equality so outputs
    # are identical for any worker count
    workers: int = field(default=1, compare=False)
    ablate_param: str = "interpolation_scale"
    ablate_values: tuple[float, ...] = (0.9, 0.8, 0.7, 0.6, 0.5)
    baseline_iterations: int = 5
    distill_target_component: int = 1
    plot: str | None = None
    sampler_schedule: ScheduleSpec = _DEFAULT_SAMPLER_SCHEDULE
    guide_schedule: ScheduleSpec = _DEFAULT_GUIDE_SCHEDULE
    sampler_prior: PriorSpec = _DEFAULT_SAMPLER_PRIOR
    guide_prior: PriorSpec | None = None
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {','.join(KINDS)}, got {self.kind!r}")
        if min(self.frames, self.channels, self.height, self.width) < 1:
            raise ConfigError("latent dimensions must be >= 1")
        if self.frames < 2:
            raise ConfigError("frames must be >= 2")
        if self.grid_steps < 1:
            raise ConfigError("grid_steps must be >= 1")
        if self.sample_count < 1:
            raise ConfigError("sample_count must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.ablate_param not in ABLATABLE:
            raise ConfigError(f"ablate_param must be one of {','.join(ABLATABLE)}")
        if len(self.ablate_values) < 1:
            raise ConfigError("ablate_values must be non-empty")
        if self.baseline_iterations < 1:
            raise ConfigError("baseline_iterations must be >= 1")
        if self.distill_target_component < 0:
            raise ConfigError("distill_target_component must be >= 0")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.frames, self.channels, self.height, self.width)


def _mode_to_text(mode: GuidanceMode) -> str:
    name = "cfg++" if mode.kind == "cfg_plus_plus" else "cfg"
    return f"{name}:{mode.scale!r}"


def _mode_from_text(text: str) -> GuidanceMode:
    try:
        name, _, value = text.partition(":")
        scale = float(value)
    except ValueError as exc:
        raise ConfigError(f"cannot parse guidance mode {text!r}") from exc
    if name == "cfg":
        return cfg(scale)
    if name == "cfg++":
        return cfg_plus_plus(scale)
    raise ConfigError(f"unknown guidance mode {name!r} (use cfg or cfg++)")


def _condition_to_text(condition: int | None) -> str:
    return "null" if condition is None else str(condition)


def _condition_from_text(text: str) -> int | None:
    if text == "null":
        return None
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"condition must be 'null' or an integer, got {text!r}") from exc


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical text form; parsing it reproduces ``config`` exactly."""
    out = io.StringIO()
    g = config.guidance

    def line(s=""):
        out.write(s + "\n")

    line("[experiment]")
    line(f"kind = {config.kind}")
    line(f"frames = {config.frames}")
    line(f"channels = {config.channels}")
    line(f"height = {config.height}")
    line(f"width = {config.width}")
    line(f"grid_steps = {config.grid_steps}")
    line(f"sample_count = {config.sample_count}")
    line(f"master_seed = {config.master_seed}")
    line(f"out = {config.out}")
    line(f"condition = {_condition_to_text(config.condition)}")
    line(f"ablate_param = {config.ablate_param}")
    line(f"ablate_values = {','.join(repr(v) for v in config.ablate_values)}")
    line(f"baseline_iterations = {config.baseline_iterations}")
    line(f"distill_target_component = {config.distill_target_component}")
    if config.plot is not None:
        line(f"plot = {config.plot}")
    for section, spec in (
        ("sampler_schedule", config.sampler_schedule),
        ("guide_schedule", config.guide_schedule),
    ):
        line()
        line(f"[{section}]")
        line(f"beta_start = {spec.beta_start!r}")
        line(f"beta_end = {spec.beta_end!r}")
        line(f"total_steps = {spec.total_steps}")
    for section, prior in (
        ("sampler_prior", config.sampler_prior),
        ("guide_prior", config.guide_prior),
    ):
        if prior is None:
            continue
        line()
        line(f"[{section}]")
        line(f"component_count = {len(prior.components)}")
        for i, comp in enumerate(prior.components):
            line(f"c{i}.weight = {comp.weight!r}")
            line(f"c{i}.sigma = {comp.sigma!r}")
            line(f"c{i}.rho = {comp.rho!r}")
            for cond, values in comp.means:
                key = "null" if cond is None else str(cond)
                line(f"c{i}.mean.{key} = {','.join(repr(v) for v in values)}")
    line()
    line("[guidance]")
    line(f"interpolation_steps = {g.interpolation_steps}")
    line(f"interpolation_scale = {g.interpolation_scale!r}")
    line(f"rollout_steps = {g.rollout_steps}")
    line(f"cutoff = {g.cutoff!r}")
    line(f"filter_order = {g.filter_order}")
    line(f"interp_guidance = {_mode_to_text(g.interp_guidance)}")
    line(f"main_guidance = {_mode_to_text(g.main_guidance)}")
    line(f"filter_enabled = {str(g.filter_enabled).lower()}")
    line(f"self_renoise = {str(g.self_renoise).lower()}")
    return out.getvalue()


_KNOWN_KEYS = {
    "experiment": {
        "kind",
        "frames",
        "channels",
        "height",
        "width",
        "grid_steps",
        "sample_count",
        "master_seed",
        "out",
        "condition",
        "workers",
        "ablate_param",
        "ablate_values",
        "baseline_iterations",
        "distill_target_component",
        "plot",
    },
    "sampler_schedule": {"beta_start", "beta_end", "total_steps"},
    "guide_schedule": {"beta_start", "beta_end", "total_steps"},
    "guidance": {
        "interpolation_steps",
        "interpolation_scale",
        "rollout_steps",
        "cutoff",
        "filter_order",
        "interp_guidance",
        "main_guidance",
        "filter_enabled",
        "self_renoise",
    },
}

_PRIOR_KEY_RE = re.compile(r"^c(\d+)\.(weight|sigma|rho|mean\.(null|\d+))$")


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to its 1-based line number, for error context."""
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        m = re.match(r"^\[(.+)\]$", stripped)
        if m:
            section = m.group(1).strip()
            lines[(section, "")] = lineno
            continue
        m = re.match(r"^([^=:\s][^=:]*)[=:]", stripped)
        if m and section is not None:
            lines[(section, m.group(1).strip())] = lineno
    return lines


class _SectionReader:
    def __init__(self, name, mapping, lines):
        self.name = name
        self.mapping = dict(mapping)
        self.lines = lines
        self.seen = set()

    def _where(self, key) -> str:
        lineno = self.lines.get((self.name, key))
        return f" (line {lineno})" if lineno is not None else ""

    def get(self, key, parse, default):
        if key not in self.mapping:
            return default
        self.seen.add(key)
        raw = self.mapping[key].strip()
        try:
            return parse(raw)
        except ConfigError as exc:
            raise ConfigError(f"[{self.name}] {key}{self._where(key)}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key}{self._where(key)}: {exc}") from None

    def reject_unknown(self, known):
        for key in self.mapping:
            if key not in known and key not in self.seen:
                raise ConfigError(
                    f"unknown key {key!r} in section [{self.name}]{self._where(key)}"
                )


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("expected at least one value")
    return tuple(float(p) for p in parts)


def _parse_prior_section(reader: _SectionReader) -> PriorSpec:
    count = reader.get("component_count", int, None)
    if count is None:
        raise ConfigError(f"section [{reader.name}] requires component_count")
    if count < 1:
        raise ConfigError(f"[{reader.name}] component_count must be >= 1")
    comps = []
    for i in range(count):
        weight = reader.get(f"c{i}.weight", float, None)
        sigma = reader.get(f"c{i}.sigma", float, None)
        rho = reader.get(f"c{i}.rho", float, None)
        if weight is None or sigma is None or rho is None:
            raise ConfigError(
                f"[{reader.name}] component {i} needs weight, sigma, and rho"
            )
        means = []
        for key in reader.mapping:
            m = _PRIOR_KEY_RE.match(key)
            if m and int(m.group(1)) == i and m.group(2).startswith("mean."):
                cond = None if m.group(3) == "null" else int(m.group(3))
                means.append((cond, reader.get(key, _parse_float_list, None)))
        if not any(cond is None for cond, _ in means):
            raise ConfigError(f"[{reader.name}] component {i} needs a mean.null entry")
        means.sort(key=lambda item: (item[0] is not None, item[0] if item[0] is not None else 0))
        comps.append(
            ComponentSpec(weight=weight, sigma=sigma, rho=rho, means=tuple(means))
        )
    for key in reader.mapping:
        if key == "component_count":
            continue
        m = _PRIOR_KEY_RE.match(key)
        if not m or int(m.group(1)) >= count:
            raise ConfigError(
                f"unknown key {key!r} in section [{reader.name}]{reader._where(key)}"
            )
    return PriorSpec(components=tuple(comps))


def parse_config_text(text: str, path: str = "<config>") -> ExperimentConfig:
    """Parse configuration text; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    lines = _key_lines(text)

    for section in parser.sections():
        if section not in _KNOWN_KEYS and section not in ("sampler_prior", "guide_prior"):
            lineno = lines.get((section, ""))
            where = f" (line {lineno})" if lineno is not None else ""
            raise ConfigError(f"unknown section [{section}]{where}")

    def reader(name):
        mapping = parser[name] if parser.has_section(name) else {}
        return _SectionReader(name, mapping, lines)

    exp = reader("experiment")
    kind = exp.get("kind", str, "guide")
    if kind not in KINDS:
        raise ConfigError(f"[experiment] kind must be one of {','.join(KINDS)}, got {kind!r}")
    config_kwargs = dict(
        kind=kind,
        frames=exp.get("frames", int, 8),
        channels=exp.get("channels", int, 1),
        height=exp.get("height", int, 4),
        width=exp.get("width", int, 4),
        grid_steps=exp.get("grid_steps", int, 50),
        sample_count=exp.get("sample_count", int, 100),
        master_seed=exp.get("master_seed", int, 0),
        out=exp.get("out", str, "results.csv"),
        condition=exp.get("condition", _condition_from_text, None),
        workers=exp.get("workers", int, 1),
        ablate_param=exp.get("ablate_param", str, "interpolation_scale"),
        ablate_values=exp.get("ablate_values", _parse_float_list, (0.9, 0.8, 0.7, 0.6, 0.5)),
        baseline_iterations=exp.get("baseline_iterations", int, 5),
        distill_target_component=exp.get("distill_target_component", int, 1),
        plot=exp.get("plot", str, None),
    )
    exp.reject_unknown(_KNOWN_KEYS["experiment"])

    schedules = {}
    for name, default in (
        ("sampler_schedule", _DEFAULT_SAMPLER_SCHEDULE),
        ("guide_schedule", _DEFAULT_GUIDE_SCHEDULE),
    ):
        sec = reader(name)
        spec = ScheduleSpec(
            beta_start=sec.get("beta_start", float, default.beta_start),
            beta_end=sec.get("beta_end", float, default.beta_end),
            total_steps=sec.get("total_steps", int, default.total_steps),
        )
        sec.reject_unknown(_KNOWN_KEYS[name])
        try:
            spec.build()
        except ValueError as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
        schedules[name] = spec

    sampler_prior = _DEFAULT_SAMPLER_PRIOR
    if parser.has_section("sampler_prior"):
        sampler_prior = _parse_prior_section(reader("sampler_prior"))
    guide_prior = None
    if parser.has_section("guide_prior"):
        guide_prior = _parse_prior_section(reader("guide_prior"))

    gd = reader("guidance")
    defaults = GuidanceConfig()
    try:
        guidance = GuidanceConfig(
            interpolation_steps=gd.get("interpolation_steps", int, defaults.interpolation_steps),
            interpolation_scale=gd.get(
                "interpolation_scale", float, defaults.interpolation_scale
            ),
            rollout_steps=gd.get("rollout_steps", int, defaults.rollout_steps),
            cutoff=gd.get("cutoff", float, defaults.cutoff),
            filter_order=gd.get("filter_order", int, defaults.filter_order),
            interp_guidance=gd.get("interp_guidance", _mode_from_text, defaults.interp_guidance),
            main_guidance=gd.get("main_guidance", _mode_from_text, defaults.main_guidance),
            filter_enabled=gd.get("filter_enabled", _parse_bool, defaults.filter_enabled),
            self_renoise=gd.get("self_renoise", _parse_bool, defaults.self_renoise),
        )
    except ValueError as exc:
        raise ConfigError(f"[guidance]: {exc}") from None
    gd.reject_unknown(_KNOWN_KEYS["guidance"])

    try:
        config = ExperimentConfig(
            sampler_schedule=schedules["sampler_schedule"],
            guide_schedule=schedules["guide_schedule"],
            sampler_prior=sampler_prior,
            guide_prior=guide_prior,
            guidance=guidance,
            **config_kwargs,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _validate_conditions(config)
    return config


def _validate_conditions(config: ExperimentConfig) -> None:
    if config.condition is None:
        return
    known = set()
    for prior in (config.sampler_prior, config.guide_prior):
        if prior is None:
            continue
        for comp in prior.components:
            known.update(cond for cond, _ in comp.means if cond is not None)
    if config.condition not in known:
        raise ConfigError(
            f"condition {config.condition} is not referenced by any prior component"
        )


def parse_config(path: str) -> ExperimentConfig:
    """Parse a configuration file (see module docstring for the format)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
    return parse_config_text(text, path=path)


def apply_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Replace config or guidance fields by keyword, validating the result."""
    guidance_fields = {
        k: v
        for k, v in overrides.items()
        if k in GuidanceConfig.__dataclass_fields__ and v is not None
    }
    config_fields = {
        k: v
        for k, v in overrides.items()
        if k in ExperimentConfig.__dataclass_fields__ and v is not None
    }
    try:
        if guidance_fields:
            config = replace(config, guidance=replace(config.guidance, **guidance_fields))
        if config_fields:
            config = replace(config, **config_fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config
