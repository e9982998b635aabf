"""Flat ``key = value`` run configuration with ``[section]`` headers.

Every key is typed and validated against ``SCHEMA`` before anything runs;
unknown sections or keys are errors. Command-line flags use the same keys,
either bare (``--K 10``) when the key lives in one section only, or dotted
(``--grid.M 512``).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Any, Optional

from .contract import ContractSpec, IntensitySpec
from .fdm import FdmGrid
from .levy import JUMP_PARAMS, LevyModel, ModelKind, TABLE3_MODELS
from .oracles import McSpec
from .risk import DEFAULT_MU, RiskQuery
from .spectral import GridSpec


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple:
    return tuple(float(t) for t in str(v).replace(";", ",").split(",") if t.strip())


def _words(v: str) -> tuple:
    return tuple(t.strip() for t in str(v).replace(";", ",").split(",") if t.strip())


def _table_id(v: str):
    s = str(v).strip().lower()
    return int(s) if s.isdigit() else s


SCHEMA: dict[str, dict[str, Any]] = {
    "run": {"command": str, "method": str, "output": str, "boundary_output": str, "scheme": str,
            "american": _bool, "n_inner": int, "store": int, "x_lo": float, "x_hi": float},
    "model": {"kind": str, "sigma": float, "alpha": float, "mu_tilde": float, "sigma_tilde": float,
              "p": float, "eta_plus": float, "eta_minus": float, "kappa": float,
              "C": float, "G": float, "M": float, "Y": float},
    "contract": {"S0": float, "K": float, "r": float, "q": float, "T": float, "t_v": float},
    "intensity": {"variant": str, "lambda": float, "lambda_pre": float,
                  "a": float, "b": float, "a_pre": float, "b_pre": float},
    "grid": {"x_max": float, "N": int, "M": int},
    "fdm": {"A": float, "N_fd": int, "M_fd": int, "eps": float, "jump_split": str, "drift_scheme": str},
    "barrier": {"L0": float, "a_bar": float, "clock": str, "monitoring": str},
    "risk": {"t": float, "T_tilde": float, "level": float, "level_multiple": float, "mu": float,
             "damping": float, "prob_method": str, "event": str, "x_lo": float, "x_hi": float},
    "perpetual": {"t": float, "s_values": _floats, "drift_convention": str},
    "mc": {"n_paths": int, "n_steps": int, "seed": int, "antithetic": _bool},
    "tables": {"table": _table_id, "figure": _table_id, "models": _words, "t_v_list": _floats,
               "methods": _words},
}

COMMANDS = ("price", "boundary", "perpetual", "prob-exceed", "prob-term", "compare", "tables")


def _owners() -> dict[str, list[str]]:
    own: dict[str, list[str]] = {}
    for sec, keys in SCHEMA.items():
        for k in keys:
            own.setdefault(k, []).append(sec)
    return own


OWNERS = _owners()


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def section(self, name: str) -> dict:
        return dict(self.values.get(name, {}))

    def has(self, section: str) -> bool:
        return bool(self.values.get(section))


def _coerce(section: str, key: str, raw: str):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    try:
        return SCHEMA[section][key](raw)
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: {e}") from None


def parse_text(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from None
    if cp.defaults():
        raise ConfigError("keys outside a section are not allowed")
    out: dict = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            out.setdefault(sec, {})[k] = _coerce(sec, k, v)
    return out


def parse_file(path) -> dict:
    try:
        with open(path) as fh:
            return parse_text(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None


def resolve_flag(name: str) -> tuple[str, str]:
    if "." in name:
        sec, key = name.split(".", 1)
        return sec, key
    owners = OWNERS.get(name)
    if not owners:
        raise ConfigError(f"unknown option --{name}")
    if len(owners) > 1:
        raise ConfigError(f"--{name} is ambiguous; use one of " + ", ".join(f"--{s}.{name}" for s in owners))
    return owners[0], name


def apply_overrides(values: dict, overrides: list[tuple[str, str]]) -> dict:
    out = {s: dict(v) for s, v in values.items()}
    for name, raw in overrides:
        sec, key = resolve_flag(name)
        out.setdefault(sec, {})[key] = _coerce(sec, key, raw)
    return out


def make_config(command: str, values: dict) -> RunConfig:
    cmd = values.get("run", {}).get("command", command)
    if command and cmd != command:
        raise ConfigError(f"config is for command {cmd!r}, invoked as {command!r}")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}")
    cfg = RunConfig(cmd, values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    kind = cfg.get("model", "kind")
    if kind is not None:
        try:
            k = ModelKind(kind.lower())
        except ValueError:
            raise ConfigError(f"unknown model kind {kind!r}") from None
        extra = set(cfg.section("model")) - {"kind", "sigma"} - set(JUMP_PARAMS[k])
        if extra:
            raise ConfigError(f"keys {sorted(extra)} do not belong to model {k.value}")
    variant = cfg.get("intensity", "variant", "constant")
    if variant not in ("constant", "affine"):
        raise ConfigError(f"intensity variant must be constant or affine in a config, got {variant!r}")
    r = cfg.section("risk")
    if "level" in r and "level_multiple" in r:
        raise ConfigError("give either level or level_multiple in [risk]")
    method = cfg.get("run", "method", "fst")
    if method not in ("fst", "fdm"):
        raise ConfigError(f"[run] method must be fst or fdm, got {method!r}")


# -- builders -----------------------------------------------------------------------------

def build_model(cfg: RunConfig) -> LevyModel:
    sec = cfg.section("model")
    kind = sec.pop("kind", "gbm").lower()
    base = TABLE3_MODELS[kind]
    sigma = sec.pop("sigma", base.sigma)
    jp = dict(base.jump_params)
    jp.update(sec)
    try:
        return LevyModel(kind, sigma, jp)
    except ValueError as e:
        raise ConfigError(f"[model] {e}") from None


def build_intensity(cfg: RunConfig) -> IntensitySpec:
    sec = cfg.section("intensity")
    variant = sec.get("variant", "constant")
    try:
        if variant == "constant":
            return IntensitySpec.constant(sec.get("lambda", 0.2), sec.get("lambda_pre", 0.1))
        return IntensitySpec.affine(sec.get("a", 0.0), sec.get("b", 0.2), sec.get("a_pre", sec.get("a", 0.0)),
                                    sec.get("b_pre", sec.get("b", 0.2)))
    except ValueError as e:
        raise ConfigError(f"[intensity] {e}") from None


def build_contract(cfg: RunConfig) -> ContractSpec:
    sec = cfg.section("contract")
    try:
        return ContractSpec(sec.get("S0", 10.0), sec.get("K", 10.0), sec.get("r", 0.05), sec.get("q", 0.04),
                            sec.get("T", 8.0), sec.get("t_v", 0.0), build_intensity(cfg))
    except ValueError as e:
        raise ConfigError(f"[contract] {e}") from None


def build_grid(cfg: RunConfig) -> GridSpec:
    sec = cfg.section("grid")
    try:
        return GridSpec(sec.get("x_max", 6.0), sec.get("N", 16384), sec.get("M", 1024))
    except ValueError as e:
        raise ConfigError(f"[grid] {e}") from None


def build_fdm_grid(cfg: RunConfig) -> FdmGrid:
    try:
        return FdmGrid(**cfg.section("fdm"))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[fdm] {e}") from None


def build_mc(cfg: RunConfig) -> McSpec:
    try:
        return McSpec(**cfg.section("mc"))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[mc] {e}") from None


def build_query(cfg: RunConfig, contract: ContractSpec) -> RiskQuery:
    sec = cfg.section("risk")
    if "T_tilde" not in sec:
        raise ConfigError("[risk] T_tilde is required")
    level, mult = sec.get("level"), sec.get("level_multiple")
    if level is None and mult is None:
        mult = 1.1
    try:
        return RiskQuery(sec.get("t", 0.0), sec["T_tilde"], level=level, level_multiple=mult,
                         mu=sec.get("mu", DEFAULT_MU), damping=sec.get("damping", 1.75))
    except ValueError as e:
        raise ConfigError(f"[risk] {e}") from None


def output_path(cfg: RunConfig, default: Optional[str]) -> Optional[str]:
    return cfg.get("run", "output", default)
