"""Run configuration: one TOML file holding the model, reservoir states and run options.

Complex numbers are always explicit ``[re, im]`` pairs (plain reals are
accepted too).  Lead vectors are sparse tables ``{"site" = [re, im]}``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .model import ReservoirState, SystemModel, validate_model
from .quadrature import TOL_QUAD
from .scattering import COND_MAX, TOL_POLE, TOL_SCATTER

log = logging.getLogger(__name__)

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "parse_grid", "DEFAULTS"]

DEFAULTS: dict[str, Any] = {
    "tol_quad": TOL_QUAD,
    "tol_scatter": TOL_SCATTER,
    "tol_pole": TOL_POLE,
    "cond_max": COND_MAX,
    "lead_length": 600,
    "grid": None,  # filled from the model bands
    "grid_points": 201,
    "window": None,  # filled from the echo bound
    "samples": 201,
    "scatterer_occupation": 0.0,
}

_POSITIVE = ("tol_quad", "tol_scatter", "tol_pole", "cond_max")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    path: Path | None
    model: SystemModel
    states: list[ReservoirState]
    options: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def energies(self) -> np.ndarray:
        a, b, n = self.options["grid"]
        return np.linspace(a, b, n)


def parse_grid(text: Any) -> tuple[float, float, int]:
    """``"a:b:n"`` or ``[a, b, n]`` -> ``(a, b, n)`` with ``a < b`` and ``n >= 1``."""
    parts = text.split(":") if isinstance(text, str) else list(text)
    if len(parts) != 3:
        raise ConfigError(f"grid must be a:b:n, got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (TypeError, ValueError):
        raise ConfigError(f"grid must be a:b:n, got {text!r}") from None
    if not a < b:
        raise ConfigError(f"grid bounds must be ordered, got {a} >= {b}")
    if n < 1:
        raise ConfigError("grid needs at least one point")
    return a, b, n


def _default_grid(model: SystemModel, n: int) -> tuple[float, float, int]:
    lo = min(ld.onsite - 2 * ld.hopping for ld in model.leads)
    hi = max(ld.onsite + 2 * ld.hopping for ld in model.leads)
    pad = 1e-3 * (hi - lo)
    return lo + pad, hi - pad, n


def parse_config(data: dict, path: Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Validate a parsed config mapping; ``overrides`` (e.g. CLI flags) win over the file."""
    model = validate_model(data)  # raises ModelValidationError
    ids = set(model.lead_ids)

    raw_states = data.get("reservoirs", [])
    by_lead: dict[int, ReservoirState] = {}
    for i, raw in enumerate(raw_states):
        where = f"reservoirs[{i}]"
        try:
            lid = int(raw["lead"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{where}.lead: missing or not an integer") from None
        if lid not in ids:
            raise ConfigError(f"{where}.lead: unknown lead {lid}")
        if lid in by_lead:
            raise ConfigError(f"{where}.lead: duplicate state for lead {lid}")
        try:
            beta = float(raw["beta"])
            mu = float(raw.get("mu", 0.0))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{where}: beta and mu must be numbers") from None
        if not beta > 0:
            raise ConfigError(f"{where}.beta: beta must be positive")
        by_lead[lid] = ReservoirState(beta, mu)
    if by_lead and set(by_lead) != ids:
        missing = sorted(ids - set(by_lead))
        raise ConfigError(f"reservoirs: no state for leads {missing}")
    states = [by_lead[l] for l in model.lead_ids] if by_lead else []

    run = dict(data.get("run", {}))
    unknown = set(run) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"run: unknown keys {sorted(unknown)}")
    run.update({k: v for k, v in (overrides or {}).items() if v is not None})
    options = {}
    for key, default in DEFAULTS.items():
        source = "file" if key in run else "default"
        options[key] = run.get(key, default)
        if source == "default" and default is not None:
            log.info("config key=%s value=%r source=default", key, default)

    for key in _POSITIVE:
        try:
            options[key] = float(options[key])
        except (TypeError, ValueError):
            raise ConfigError(f"run.{key}: must be a number") from None
        if not (options[key] > 0 and math.isfinite(options[key])):
            raise ConfigError(f"run.{key}: must be positive")
    for key in ("lead_length", "samples", "grid_points"):
        try:
            options[key] = int(options[key])
        except (TypeError, ValueError):
            raise ConfigError(f"run.{key}: must be an integer") from None
        if options[key] < 1:
            raise ConfigError(f"run.{key}: must be positive")
    occ = float(options["scatterer_occupation"])
    if not 0.0 <= occ <= 1.0:
        raise ConfigError("run.scatterer_occupation: must lie in [0, 1]")
    options["scatterer_occupation"] = occ

    if options["grid"] is None:
        options["grid"] = _default_grid(model, options["grid_points"])
        log.info("config key=grid value=%r source=default", options["grid"])
    else:
        options["grid"] = parse_grid(options["grid"])
    if options["window"] is not None:
        w = options["window"]
        w = w.split(":") if isinstance(w, str) else w
        try:
            t1, t2 = (float(x) for x in w)
        except (TypeError, ValueError):
            raise ConfigError(f"run.window: expected [T1, T2], got {options['window']!r}") from None
        if not 0 <= t1 < t2:
            raise ConfigError("run.window: need 0 <= T1 < T2")
        options["window"] = (t1, t2)
    return RunConfig(path, model, states, options)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, path, overrides)
