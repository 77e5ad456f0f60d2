"""Mapping lab values between assay methods with different reference intervals.

Two LDH kit chemistries (lactate->pyruvate and pyruvate->lactate) report on
different scales. Values measured on one kit are mapped into the frame of
the kit a rule was derived on before thresholds are applied.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Collection, Mapping

from .errors import (
    AnalyteMismatch,
    DegenerateInterval,
    FileUnreadable,
    HarmonizationError,
    HarmonizationWarning,
    MissingMapping,
    UnitMismatch,
    UnknownAssay,
)
from .numfmt import format_number, parse_decimal


class Direction(str, Enum):
    LACTATE_TO_PYRUVATE = "lactate_to_pyruvate"
    PYRUVATE_TO_LACTATE = "pyruvate_to_lactate"
    UNSPECIFIED = "unspecified"


class Mode(str, Enum):
    AFFINE_INTERVAL = "affine_interval"
    ULN_RATIO = "uln_ratio"
    IDENTITY = "identity"


@dataclass(frozen=True)
class ReferenceInterval:
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise DegenerateInterval(f"interval [{self.lower}, {self.upper}] is not finite")
        if not self.lower < self.upper:
            raise DegenerateInterval(f"interval [{self.lower}, {self.upper}] has lower >= upper")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class AssayMethod:
    id: str
    analyte: str
    direction: Direction
    unit: str
    interval: ReferenceInterval

    def __post_init__(self) -> None:
        if not self.id:
            raise HarmonizationError("assay id must not be empty")
        if not self.unit:
            raise HarmonizationError(f"assay {self.id!r} has an empty unit")
        object.__setattr__(self, "direction", Direction(self.direction))


@dataclass(frozen=True)
class HarmonizationConfig:
    """Harmonization mode plus, per feature, the (source, target) assay ids."""

    mode: Mode = Mode.AFFINE_INTERVAL
    mappings: Mapping[str, tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "mappings", dict(self.mappings))

    def check(self, registry: Mapping[str, AssayMethod]) -> None:
        """Validate every mapping against ``registry``."""
        for feature, (src_id, dst_id) in self.mappings.items():
            src, dst = _lookup(registry, src_id), _lookup(registry, dst_id)
            _check_compatible(src, dst)


def _lookup(registry: Mapping[str, AssayMethod], assay_id: str) -> AssayMethod:
    try:
        return registry[assay_id]
    except KeyError:
        raise UnknownAssay(f"assay {assay_id!r} is not in the registry") from None


def _check_compatible(src: AssayMethod, dst: AssayMethod) -> None:
    if src.analyte != dst.analyte:
        raise AnalyteMismatch(f"cannot map {src.analyte} ({src.id}) onto {dst.analyte} ({dst.id})")
    if src.unit != dst.unit:
        raise UnitMismatch(f"{src.id} reports {src.unit!r} but {dst.id} reports {dst.unit!r}")


def harmonize_value(x: float, src: AssayMethod, dst: AssayMethod, mode: Mode | str) -> float:
    """Map measurement ``x`` from ``src`` kit units into ``dst`` kit units.

    ``affine_interval`` sends the source reference interval onto the target
    one (lower to lower, upper to upper) and extrapolates linearly outside it.
    ``uln_ratio`` rescales by the ratio of upper reference limits.

    >>> pl = AssayMethod("kit_PL", "LDH", "pyruvate_to_lactate", "U/L", ReferenceInterval(240, 480))
    >>> lp = AssayMethod("kit_LP", "LDH", "lactate_to_pyruvate", "U/L", ReferenceInterval(135, 250))
    >>> harmonize_value(360, pl, lp, "affine_interval")
    192.5
    """
    mode = Mode(mode)
    _check_compatible(src, dst)
    if not math.isfinite(x):
        raise HarmonizationError(f"cannot harmonize non-finite value {x!r}")
    if mode is Mode.IDENTITY:
        return x
    if mode is Mode.ULN_RATIO:
        return x * (dst.interval.upper / src.interval.upper)
    s, d = src.interval, dst.interval
    # pin endpoints: (x - lo) * w / w is not exact in general
    if x == s.lower:
        return d.lower
    if x == s.upper:
        return d.upper
    out = d.lower + (x - s.lower) * d.width / s.width
    if out < 0:
        warnings.warn(
            f"{src.id}->{dst.id}: {x} extrapolates to negative {out}", HarmonizationWarning, stacklevel=2
        )
    return out


def harmonize_panel(
    labs: Mapping[str, tuple[float, str]],
    cfg: HarmonizationConfig,
    registry: Mapping[str, AssayMethod],
    assay_sensitive: Collection[str] = (),
) -> dict[str, float]:
    """Harmonize a ``feature -> (value, assay id)`` panel into plain values.

    Features with a configured mapping are converted from the mapping's
    source assay; a value already on the target assay passes through.
    Features in ``assay_sensitive`` without a mapping raise MissingMapping
    (except in identity mode). Everything else passes through unchanged.
    """
    out = {}
    for feature, (value, assay_id) in labs.items():
        _lookup(registry, assay_id)
        if cfg.mode is Mode.IDENTITY:
            out[feature] = value
            continue
        mapping = cfg.mappings.get(feature)
        if mapping is None:
            if feature in assay_sensitive:
                raise MissingMapping(f"assay-sensitive feature {feature!r} has no harmonization mapping")
            out[feature] = value
            continue
        src_id, dst_id = mapping
        if assay_id == dst_id:
            out[feature] = value
        elif assay_id == src_id:
            out[feature] = harmonize_value(value, _lookup(registry, src_id), _lookup(registry, dst_id), cfg.mode)
        else:
            raise MissingMapping(f"no mapping for {feature!r} from assay {assay_id!r} (configured {src_id}->{dst_id})")
    return out


# -- registry file --------------------------------------------------------------------

REGISTRY_COLUMNS = ("id", "analyte", "direction", "unit", "lower", "upper")


def _build_default_registry() -> dict[str, AssayMethod]:
    methods = [
        AssayMethod("kit_PL", "LDH", Direction.PYRUVATE_TO_LACTATE, "U/L", ReferenceInterval(240, 480)),
        AssayMethod("kit_LP", "LDH", Direction.LACTATE_TO_PYRUVATE, "U/L", ReferenceInterval(135, 250)),
        AssayMethod("crp_std", "hs_CRP", Direction.UNSPECIFIED, "mg/L", ReferenceInterval(0, 3)),
        AssayMethod("lymph_std", "lymph_pct", Direction.UNSPECIFIED, "%", ReferenceInterval(20, 40)),
    ]
    return {m.id: m for m in methods}


DEFAULT_REGISTRY: Mapping[str, AssayMethod] = _build_default_registry()


def parse_registry(text: str, source: str = "<registry>") -> dict[str, AssayMethod]:
    """Parse a tab-separated registry with header ``id analyte direction unit lower upper``.

    Lines starting with ``#`` and blank lines are ignored.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise HarmonizationError(f"{source}: empty assay registry")
    reader = csv.reader(lines, delimiter="\t")
    header = [h.strip() for h in next(reader)]
    if tuple(header) != REGISTRY_COLUMNS:
        raise HarmonizationError(f"{source}: registry header must be {' '.join(REGISTRY_COLUMNS)!r}")
    registry: dict[str, AssayMethod] = {}
    for n, row in enumerate(reader, start=2):
        if len(row) != len(REGISTRY_COLUMNS):
            raise HarmonizationError(f"{source}: entry {n} has {len(row)} fields, expected 6")
        assay_id, analyte, direction, unit, lower, upper = (c.strip() for c in row)
        try:
            method = AssayMethod(
                assay_id, analyte, Direction(direction), unit,
                ReferenceInterval(parse_decimal(lower), parse_decimal(upper)),
            )
        except ValueError as exc:
            raise HarmonizationError(f"{source}: entry {n}: {exc}") from None
        if assay_id in registry:
            raise HarmonizationError(f"{source}: duplicate assay id {assay_id!r}")
        registry[assay_id] = method
    return registry


def load_registry(path: str | Path) -> dict[str, AssayMethod]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read assay registry {path}: {exc}") from None
    return parse_registry(text, str(path))


def dump_registry(registry: Mapping[str, AssayMethod]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(REGISTRY_COLUMNS)
    for m in registry.values():
        writer.writerow(
            [m.id, m.analyte, m.direction.value, m.unit, format_number(m.interval.lower), format_number(m.interval.upper)]
        )
    return buf.getvalue()
