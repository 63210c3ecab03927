"""Strict JSON experiment configuration and the run manifest.

Configs are single JSON documents with a fixed schema; unknown fields are errors so
a config can never silently drift from what actually ran.  All randomness flows from
the seeds recorded here, never from the wall clock.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import IntegratorConfig, SCHEMES
from .exceptions import ConfigError, CoupledPcaError
from .linmodel import (
    SpectralModel,
    make_loglinear_model,
    model_from_dict,
    model_from_spectrum,
)

RULES = ("principal", "deflation", "arbitrary")
STABILITY_SELECTORS = ("principal", "arbitrary", "exact-cross", "bordered")


def _expect_object(doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    return doc


def _check_keys(doc, path, required, optional=()):
    unknown = set(doc) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{path}: unknown field '{sorted(unknown)[0]}'")
    for key in required:
        if key not in doc:
            raise ConfigError(f"{path}: missing field '{key}'")


def _get_number(doc, key, path, *, integer=False, minimum=None, maximum=None):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{path}.{key}: expected an integer")
        value = int(value)
    value = int(value) if integer else float(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{path}.{key}: must be <= {maximum}, got {value}")
    return value


def _get_choice(doc, key, path, choices):
    value = doc[key]
    if value not in choices:
        raise ConfigError(f"{path}.{key}: must be one of {list(choices)}, got {value!r}")
    return value


def _get_bool(doc, key, path):
    value = doc[key]
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected true or false")
    return value


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    seed: int | None = None
    n: int | None = None
    values: tuple | None = None
    path: str | None = None

    def build(self) -> SpectralModel:
        if self.kind == "loglinear":
            return make_loglinear_model(self.n, self.seed)
        if self.kind == "explicit":
            return model_from_spectrum(list(self.values), self.seed)
        try:
            return model_from_dict(load_json(self.path))
        except CoupledPcaError as exc:
            raise ConfigError(f"model.path: {self.path}: {exc}") from exc

    def dimension(self) -> int:
        if self.kind == "loglinear":
            return self.n
        if self.kind == "explicit":
            return len(self.values)
        return self.build().n

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "loglinear":
            out.update(n=self.n, seed=self.seed)
        elif self.kind == "explicit":
            out.update(values=list(self.values), seed=self.seed)
        else:
            out["path"] = self.path
        return out


def parse_model_spec(doc, path="model") -> ModelSpec:
    _expect_object(doc, path)
    if "kind" not in doc:
        raise ConfigError(f"{path}: missing field 'kind'")
    kind = _get_choice(doc, "kind", path, ("loglinear", "explicit", "file"))
    if kind == "loglinear":
        _check_keys(doc, path, required=("kind", "n", "seed"))
        n = _get_number(doc, "n", path, integer=True, minimum=2)
        return ModelSpec(kind=kind, seed=_get_number(doc, "seed", path, integer=True), n=n)
    if kind == "file":
        _check_keys(doc, path, required=("kind", "path"))
        file_path = doc["path"]
        if not isinstance(file_path, str) or not file_path:
            raise ConfigError(f"{path}.path: expected a non-empty string")
        return ModelSpec(kind=kind, path=file_path)
    _check_keys(doc, path, required=("kind", "values", "seed"))
    values = doc["values"]
    if not isinstance(values, list) or len(values) < 2:
        raise ConfigError(f"{path}.values: expected a list of at least 2 numbers")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.values: expected numbers")
    return ModelSpec(kind=kind, seed=_get_number(doc, "seed", path, integer=True),
                     values=tuple(float(v) for v in values))


@dataclass(frozen=True)
class InitSpec:
    """Initial state policy: seeded uniform unit direction plus a multiplier draw."""

    l_mode: str  # "fixed" | "uniform"
    l_fixed: float | None = None
    l_range: tuple | None = None

    def draw_l(self, rng: np.random.Generator) -> float:
        if self.l_mode == "fixed":
            return float(self.l_fixed)
        lo, hi = self.l_range
        return float(rng.uniform(lo, hi))

    def to_dict(self) -> dict:
        if self.l_mode == "fixed":
            return {"w": "random_unit", "l": {"fixed": self.l_fixed}}
        return {"w": "random_unit", "l": {"uniform": list(self.l_range)}}


def parse_init_spec(doc, path="init") -> InitSpec:
    _expect_object(doc, path)
    _check_keys(doc, path, required=("w", "l"))
    _get_choice(doc, "w", path, ("random_unit",))
    l_doc = _expect_object(doc["l"], f"{path}.l")
    if set(l_doc) == {"fixed"}:
        return InitSpec(l_mode="fixed", l_fixed=_get_number(l_doc, "fixed", f"{path}.l"))
    if set(l_doc) == {"uniform"}:
        rng_doc = l_doc["uniform"]
        if (not isinstance(rng_doc, list) or len(rng_doc) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in rng_doc)):
            raise ConfigError(f"{path}.l.uniform: expected [lo, hi]")
        lo, hi = float(rng_doc[0]), float(rng_doc[1])
        if hi < lo:
            raise ConfigError(f"{path}.l.uniform: lo must not exceed hi")
        return InitSpec(l_mode="uniform", l_range=(lo, hi))
    raise ConfigError(f"{path}.l: expected exactly one of 'fixed' or 'uniform'")


def parse_integrator(doc, path="integrator") -> IntegratorConfig:
    _expect_object(doc, path)
    _check_keys(doc, path,
                required=("gamma", "steps", "normalize_each_step",
                          "convergence_tol", "divergence_cap"),
                optional=("sample_stride",))
    kwargs = dict(
        gamma=_get_number(doc, "gamma", path),
        steps=_get_number(doc, "steps", path, integer=True, minimum=1),
        normalize_each_step=_get_bool(doc, "normalize_each_step", path),
        convergence_tol=_get_number(doc, "convergence_tol", path),
        divergence_cap=_get_number(doc, "divergence_cap", path),
    )
    if "sample_stride" in doc:
        kwargs["sample_stride"] = _get_number(doc, "sample_stride", path,
                                              integer=True, minimum=1)
    if kwargs["gamma"] <= 0 or kwargs["convergence_tol"] <= 0 or kwargs["divergence_cap"] <= 0:
        raise ConfigError(f"{path}: gamma and tolerances must be positive")
    return IntegratorConfig(**kwargs)


def integrator_to_dict(cfg: IntegratorConfig) -> dict:
    return {
        "gamma": cfg.gamma,
        "steps": cfg.steps,
        "normalize_each_step": cfg.normalize_each_step,
        "convergence_tol": cfg.convergence_tol,
        "divergence_cap": cfg.divergence_cap,
        "sample_stride": cfg.sample_stride,
    }


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one simulation run depends on, seeds included."""

    model: ModelSpec
    rule: str
    m: int
    scheme: str
    integrator: IntegratorConfig
    init: InitSpec
    trials: int
    base_seed: int
    output_dir: str
    p: int | None = None
    pin_previous: bool = False

    def to_dict(self) -> dict:
        out = {
            "model": self.model.to_dict(),
            "rule": self.rule,
            "m": self.m,
            "scheme": self.scheme,
            "integrator": integrator_to_dict(self.integrator),
            "init": self.init.to_dict(),
            "trials": self.trials,
            "base_seed": self.base_seed,
            "output_dir": self.output_dir,
        }
        if self.p is not None:
            out["p"] = self.p
        if self.pin_previous:
            out["pin_previous"] = True
        return out


def parse_experiment_config(doc) -> ExperimentConfig:
    _expect_object(doc, "$")
    _check_keys(doc, "$",
                required=("model", "rule", "m", "scheme", "integrator", "init",
                          "trials", "base_seed", "output_dir"),
                optional=("p", "pin_previous"))
    model = parse_model_spec(doc["model"])
    rule = _get_choice(doc, "rule", "$", RULES)
    n = model.dimension()
    m = _get_number(doc, "m", "$", integer=True, minimum=1)
    if m > n:
        raise ConfigError(f"m: must not exceed the model dimension {n}, got {m}")
    scheme = _get_choice(doc, "scheme", "$", SCHEMES)
    integrator = parse_integrator(doc["integrator"])
    init = parse_init_spec(doc["init"])
    trials = _get_number(doc, "trials", "$", integer=True, minimum=1)
    base_seed = _get_number(doc, "base_seed", "$", integer=True)
    output_dir = doc["output_dir"]
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir: expected a non-empty string")

    pin_previous = _get_bool(doc, "pin_previous", "$") if "pin_previous" in doc else False
    p = None
    if "p" in doc:
        p = _get_number(doc, "p", "$", integer=True, minimum=1)
        if p > m:
            raise ConfigError(f"p: must not exceed m = {m}, got {p}")
    if rule == "principal":
        if m != 1:
            raise ConfigError("m: principal rule estimates a single pair, set m = 1")
        if pin_previous:
            raise ConfigError("pin_previous: not applicable to the principal rule")
    if pin_previous and p is None:
        raise ConfigError("p: required when pin_previous is set")
    if p is not None and not pin_previous and rule != "principal":
        raise ConfigError("p: only used for pinned single-stage runs; set pin_previous")
    return ExperimentConfig(model=model, rule=rule, m=m, scheme=scheme,
                            integrator=integrator, init=init, trials=trials,
                            base_seed=base_seed, output_dir=output_dir,
                            p=p, pin_previous=pin_previous)


@dataclass(frozen=True)
class StabilityRequest:
    selector: str
    spectrum: tuple
    output_dir: str
    q: int | None = None
    p: int | None = None
    i: int | None = None
    j: int | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        out = {"selector": self.selector, "spectrum": list(self.spectrum),
               "output_dir": self.output_dir, "seed": self.seed}
        for name in ("q", "p", "i", "j"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


def parse_stability_request(doc) -> StabilityRequest:
    _expect_object(doc, "$")
    if "selector" not in doc:
        raise ConfigError("$: missing field 'selector'")
    selector = _get_choice(doc, "selector", "$", STABILITY_SELECTORS)
    needed = {"principal": ("q",), "arbitrary": ("p", "q"),
              "exact-cross": ("i", "j"), "bordered": ("p",)}[selector]
    _check_keys(doc, "$", required=("selector", "spectrum", "output_dir") + needed,
                optional=("seed",))
    spectrum = doc["spectrum"]
    if not isinstance(spectrum, list) or len(spectrum) < 2:
        raise ConfigError("spectrum: expected a list of at least 2 numbers")
    n = len(spectrum)
    indices = {}
    for name in needed:
        indices[name] = _get_number(doc, name, "$", integer=True, minimum=1, maximum=n)
    output_dir = doc["output_dir"]
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir: expected a non-empty string")
    seed = _get_number(doc, "seed", "$", integer=True) if "seed" in doc else 0
    return StabilityRequest(selector=selector,
                            spectrum=tuple(float(v) for v in spectrum),
                            output_dir=output_dir, seed=seed, **indices)


@dataclass(frozen=True)
class PerturbRequest:
    model: ModelSpec
    rule: str
    p: int
    q: int
    trials: int
    eps_scale: float
    base_seed: int
    output_dir: str

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "rule": self.rule, "p": self.p,
                "q": self.q, "trials": self.trials, "eps_scale": self.eps_scale,
                "base_seed": self.base_seed, "output_dir": self.output_dir}


def parse_perturb_request(doc) -> PerturbRequest:
    _expect_object(doc, "$")
    _check_keys(doc, "$", required=("model", "rule", "p", "q", "trials",
                                    "eps_scale", "base_seed", "output_dir"))
    model = parse_model_spec(doc["model"])
    n = model.dimension()
    rule = _get_choice(doc, "rule", "$", RULES)
    p = _get_number(doc, "p", "$", integer=True, minimum=1, maximum=n)
    q = _get_number(doc, "q", "$", integer=True, minimum=1, maximum=n)
    trials = _get_number(doc, "trials", "$", integer=True, minimum=1)
    eps_scale = _get_number(doc, "eps_scale", "$")
    if eps_scale <= 0:
        raise ConfigError("eps_scale: must be positive")
    output_dir = doc["output_dir"]
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir: expected a non-empty string")
    return PerturbRequest(model=model, rule=rule, p=p, q=q, trials=trials,
                          eps_scale=eps_scale,
                          base_seed=_get_number(doc, "base_seed", "$", integer=True),
                          output_dir=output_dir)


class ManifestWriter:
    """Collects run metadata and writes manifest.json exactly once."""

    def __init__(self, output_dir: Path, config_echo: dict):
        self.output_dir = Path(output_dir)
        self.config_echo = config_echo
        self.artifacts: list[str] = []
        self.statuses: list = []
        self.error: str | None = None
        self._start = time.perf_counter()
        self._written = False

    def add_artifact(self, name: str):
        self.artifacts.append(name)

    def write(self) -> Path:
        if self._written:
            raise ConfigError("manifest already written for this run")
        self._written = True
        manifest = {
            "config": self.config_echo,
            "artifacts": self.artifacts,
            "statuses": self.statuses,
            "error": self.error,
            "wall_time_s": time.perf_counter() - self._start,
        }
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
