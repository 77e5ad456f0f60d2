"""Run configuration: INI-style ``[section]`` files or a named harmonization preset."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .cohort import DEFAULT_SCHEMA, CohortSchema, LabColumn
from .errors import ConfigError
from .harmonize import HarmonizationConfig, Mode
from .report import FORMATS

DEFAULT_MAPPINGS = {"LDH": ("kit_PL", "kit_LP")}
PRESETS = tuple(m.value for m in Mode)

_RUN_KEYS = {"rule", "cohort", "registry", "required", "output_dir", "formats", "seed"}
_SCHEMA_KEYS = {"id", "outcome", "age", "sex", "severity"}


@dataclass
class RunConfig:
    harmonization: HarmonizationConfig = field(
        default_factory=lambda: HarmonizationConfig(Mode.AFFINE_INTERVAL, DEFAULT_MAPPINGS)
    )
    rule: Path | None = None
    cohort: Path | None = None
    registry: Path | None = None
    required: tuple[str, ...] | None = None  # None: every feature the rule splits on
    output_dir: Path | None = None
    formats: tuple[str, ...] = ("json",)
    seed: int | None = None
    schema: CohortSchema = DEFAULT_SCHEMA
    source: str = "<defaults>"


def preset(name: str) -> RunConfig:
    """Built-in config: the named harmonization mode with the default LDH kit mapping."""
    return RunConfig(HarmonizationConfig(Mode(name), DEFAULT_MAPPINGS), source=f"preset:{name}")


def _split_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def parse_formats(text: str) -> tuple[str, ...]:
    formats = _split_list(text)
    bad = [f for f in formats if f not in FORMATS]
    if bad or not formats:
        raise ConfigError(f"unknown report format(s) {', '.join(bad) or '(none)'}; choose from {', '.join(FORMATS)}")
    return formats


def _resolve(base: Path, value: str, what: str, must_exist: bool = True) -> Path:
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if must_exist and not p.exists():
        raise ConfigError(f"{what} path does not exist: {p}")
    return p


def parse_run_config(text: str, base: Path, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    cfg = RunConfig(source=source)
    for sect in cp.sections():
        if sect not in ("run", "harmonization", "schema", "schema.labs"):
            raise ConfigError(f"{source}: unknown section [{sect}]")

    if cp.has_section("run"):
        run = dict(cp.items("run"))
        unknown = set(run) - _RUN_KEYS
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) in [run]: {', '.join(sorted(unknown))}")
        for key in ("rule", "cohort", "registry"):
            if key in run:
                setattr(cfg, key, _resolve(base, run[key], key))
        if "output_dir" in run:
            cfg.output_dir = _resolve(base, run["output_dir"], "output_dir", must_exist=False)
        if "required" in run:
            cfg.required = _split_list(run["required"])
        if "formats" in run:
            cfg.formats = parse_formats(run["formats"])
        if "seed" in run:
            try:
                cfg.seed = int(run["seed"])
            except ValueError:
                raise ConfigError(f"{source}: seed must be an integer") from None

    if cp.has_section("harmonization"):
        items = dict(cp.items("harmonization"))
        try:
            mode = Mode(items.pop("mode", Mode.AFFINE_INTERVAL.value))
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        mappings = {}
        for feature, value in items.items():
            parts = [p.strip() for p in value.split("->")]
            if len(parts) != 2 or not all(parts):
                raise ConfigError(f"{source}: mapping for {feature} must look like 'src_assay -> dst_assay'")
            mappings[feature] = (parts[0], parts[1])
        cfg.harmonization = HarmonizationConfig(mode, mappings or DEFAULT_MAPPINGS)

    if cp.has_section("schema") or cp.has_section("schema.labs"):
        cols = dict(cp.items("schema")) if cp.has_section("schema") else {}
        unknown = set(cols) - _SCHEMA_KEYS
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) in [schema]: {', '.join(sorted(unknown))}")
        labs = dict(DEFAULT_SCHEMA.labs)
        if cp.has_section("schema.labs"):
            labs = {}
            for feature, value in cp.items("schema.labs"):
                parts = [p.strip() for p in value.split(",")]
                if not parts[0] or len(parts) > 3:
                    raise ConfigError(f"{source}: [schema.labs] {feature} = value_col[, assay_col[, default_assay]]")
                parts += [""] * (3 - len(parts))
                labs[feature] = LabColumn(parts[0], parts[1] or None, parts[2] or None)
        cfg.schema = CohortSchema(labs=labs, **cols)
    return cfg


def load_run_config(spec: str) -> RunConfig:
    """Load ``spec`` as a preset name or a config file path."""
    if spec in PRESETS and not Path(spec).is_file():
        return preset(spec)
    path = Path(spec)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_run_config(text, path.parent, str(path))
