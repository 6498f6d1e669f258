"""Device configuration: resonance frequencies, exchange couplings, gate
timing and the noise model, loaded from JSON and validated."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .noise import MECHANISMS, NoiseModel, NoiseModelError, ShuttleFidelities

log = logging.getLogger(__name__)

ZZ_RATIO_LIMIT = 0.05
ADDRESSABILITY_FRACTION = 10.0


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class OperationState(str, Enum):
    SPARSE = "sparse"
    COUPLED = "coupled"


@dataclass(frozen=True)
class RbDefaults:
    sequences_1q: int = 24
    shots_1q: int = 1000
    sequences_2q: int = 50
    shots_2q: int = 2000
    shots: int = 1000


@dataclass(frozen=True)
class JTableRow:
    """One user-supplied calibration point of the coupled state."""

    v_tilt: float
    J: float
    t2_dcz: float


@dataclass(frozen=True)
class DeviceConfig:
    f_res_L: float = 16.3366e9
    f_res_center: float = 16.7399e9
    f_res_M: float = 17.0700e9
    f_rabi: float = 2.5e6
    delta_Ez_LC: float = 403e6
    J_on: float = 1.25e6
    J_off: float = 0.9e3
    t_evol_cz: float = 0.4e-6
    phi_uncond_L: float = 0.065 * math.pi
    phi_uncond_M: float = 0.04 * math.pi
    shuttle_phase: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    defaults: RbDefaults = field(default_factory=RbDefaults)
    # Documentation-only; these do not enter the dynamics.
    b_ext: float = 0.45
    t_R: float = 20.2e9
    j_table: tuple[JTableRow, ...] = ()

    def __post_init__(self) -> None:
        for key in ("f_res_L", "f_res_center", "f_res_M", "f_rabi", "delta_Ez_LC", "t_evol_cz"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(key, f"must be a positive finite number, got {v!r}")
        if not self.J_off >= 0:
            raise ConfigError("J_off", f"must be >= 0, got {self.J_off!r}")
        if not self.J_on > self.J_off:
            raise ConfigError("J_on", f"must exceed J_off ({self.J_on!r} <= {self.J_off!r})")
        for key in ("phi_uncond_L", "phi_uncond_M", "shuttle_phase", "b_ext", "t_R"):
            if not math.isfinite(getattr(self, key)):
                raise ConfigError(key, "must be finite")

    def state_J(self, state: OperationState | str) -> float:
        return self.J_on if OperationState(state) is OperationState.COUPLED else self.J_off

    @property
    def on_off_ratio(self) -> float:
        return math.inf if self.J_off == 0 else self.J_on / self.J_off

    @property
    def resonance_splitting(self) -> float:
        return abs(self.f_res_L - self.f_res_M)

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_TOP_FLOATS = (
    "f_res_L",
    "f_res_center",
    "f_res_M",
    "f_rabi",
    "delta_Ez_LC",
    "J_on",
    "J_off",
    "t_evol_cz",
    "phi_uncond_L",
    "phi_uncond_M",
    "shuttle_phase",
)
_NOISE_PAIRS = ("t2_star", "t2_echo", "n_echo", "t2_rabi", "t2_dcz", "eps_up", "eps_down")


def _data_text(name: str) -> str:
    return resources.files("qshuttle").joinpath("data", name).read_text("utf-8")


def schema() -> dict:
    return json.loads(_data_text("device_config.schema.json"))


def reference_document() -> dict:
    return json.loads(_data_text("reference_profile.json"))


def _merge(base: Mapping, over: Mapping) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _required_paths(sch: Mapping, prefix: str = "") -> list[str]:
    paths = []
    for name, sub in sch.get("properties", {}).items():
        if name in sch.get("optional", ()) or name == "base":
            continue
        path = f"{prefix}{name}"
        if sub.get("type") == "object" and "properties" in sub:
            paths.extend(_required_paths(sub, path + "."))
        else:
            paths.append(path)
    return paths


def _lookup(doc: Mapping, path: str):
    cur: Any = doc
    for part in path.split("."):
        if not isinstance(cur, Mapping) or part not in cur:
            raise KeyError(path)
        cur = cur[part]
    return cur


def _schema_error_key(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        if extra:
            return f"{path}.{extra[0]}" if path else extra[0]
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            return f"{path}.{missing[0]}" if path else missing[0]
    return path or "<document>"


def load_config(document: Mapping | str | Path | None = None) -> DeviceConfig:
    """Build a validated :class:`DeviceConfig`.

    ``document`` is a mapping, a JSON string or a path to a JSON file. Keys
    left out are taken from the shipped reference profile unless the
    document sets ``"base": "none"``, in which case every key is required.

    Raises:
        ConfigError: on unknown or missing keys, wrong types or violated
            invariants; the exception names the key.
    """
    if document is None:
        doc: dict = {}
    elif isinstance(document, Mapping):
        doc = dict(document)
    else:
        text = str(document)
        if isinstance(document, Path) or not text.lstrip().startswith("{"):
            try:
                text = Path(text).read_text("utf-8")
            except OSError as exc:
                raise ConfigError("<file>", f"cannot read {document}: {exc}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("<document>", "top level must be an object")

    sch = schema()
    try:
        jsonschema.validate(doc, sch)
    except jsonschema.ValidationError as err:
        raise ConfigError(_schema_error_key(err), err.message) from err

    base = doc.pop("base", "reference")
    if base == "none":
        for path in _required_paths(sch):
            try:
                _lookup(doc, path)
            except KeyError:
                raise ConfigError(path, "missing required key") from None
        full = doc
    else:
        full = _merge(reference_document(), doc)
    return _from_document(full)


def _from_document(doc: Mapping) -> DeviceConfig:
    n = doc["noise"]
    try:
        noise = NoiseModel(
            **{k: tuple(float(v) for v in n[k]) for k in _NOISE_PAIRS},
            shuttle=ShuttleFidelities(**{k: float(v) for k, v in n["shuttle"].items()}),
            enabled={k: bool(v) for k, v in n["enabled"].items()},
            quasistatic_resample=n["quasistatic_resample"],
        )
    except NoiseModelError as exc:
        key = str(exc).split(":")[0].split(" ")[0]
        raise ConfigError(f"noise.{key}", str(exc)) from exc
    meta = doc["metadata"]
    table = tuple(JTableRow(**{k: float(v) for k, v in row.items()}) for row in doc.get("j_table", []))
    return DeviceConfig(
        **{k: float(doc[k]) for k in _TOP_FLOATS},
        noise=noise,
        defaults=RbDefaults(**{k: int(v) for k, v in doc["defaults"].items()}),
        b_ext=float(meta["b_ext"]),
        t_R=float(meta["t_R"]),
        j_table=table,
    )


def to_document(cfg: DeviceConfig) -> dict:
    n = cfg.noise
    doc: dict = {k: getattr(cfg, k) for k in _TOP_FLOATS}
    doc["noise"] = {k: list(getattr(n, k)) for k in _NOISE_PAIRS}
    doc["noise"]["shuttle"] = dataclasses.asdict(n.shuttle)
    doc["noise"]["enabled"] = {m: n.enabled[m] for m in MECHANISMS}
    doc["noise"]["quasistatic_resample"] = n.quasistatic_resample
    doc["defaults"] = dataclasses.asdict(cfg.defaults)
    doc["metadata"] = {"b_ext": cfg.b_ext, "t_R": cfg.t_R}
    if cfg.j_table:
        doc["j_table"] = [dataclasses.asdict(r) for r in cfg.j_table]
    return doc


def serialize(cfg: DeviceConfig) -> str:
    """Canonical JSON text (sorted keys, full float precision)."""
    return json.dumps(to_document(cfg), sort_keys=True, indent=2) + "\n"


def load_j_table(path: str | Path) -> tuple[JTableRow, ...]:
    """Read a ``v_tilt,J,t2_dcz`` CSV of user calibration data."""
    import csv

    rows = []
    with open(path, newline="") as fh:
        for i, rec in enumerate(csv.DictReader(fh)):
            try:
                rows.append(JTableRow(float(rec["v_tilt"]), float(rec["J"]), float(rec["t2_dcz"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"j_table[{i}]", f"bad row {rec!r}") from exc
    return tuple(rows)


# ---------------------------------------------------------------------------
# Regime checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeReport:
    zz_ratio: float
    addressability_ratio: float
    on_off_ratio: float
    warnings: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.warnings


def validate_regime(cfg: DeviceConfig, *, emit: bool = True) -> RegimeReport:
    """Check that the ZZ approximation and qubit addressability hold."""
    msgs = []
    zz = cfg.J_on / cfg.delta_Ez_LC
    if zz > ZZ_RATIO_LIMIT:
        msgs.append(f"J_on / delta_Ez_LC = {zz:.4f} exceeds {ZZ_RATIO_LIMIT}; the Ising (ZZ) form is strained")
    addr = cfg.f_rabi / cfg.resonance_splitting
    if cfg.f_rabi >= cfg.resonance_splitting / ADDRESSABILITY_FRACTION:
        msgs.append(
            f"f_rabi = {cfg.f_rabi:.4g} Hz is not below 1/{ADDRESSABILITY_FRACTION:g} of the "
            f"resonance splitting {cfg.resonance_splitting:.4g} Hz; crosstalk is likely"
        )
    if emit:
        for m in msgs:
            warnings.warn(m, RuntimeWarning, stacklevel=2)
    log.info("on/off exchange ratio %.4g", cfg.on_off_ratio)
    return RegimeReport(zz, addr, cfg.on_off_ratio, tuple(msgs))
