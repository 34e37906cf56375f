"""Experiment configuration: parsing, validation and canonical text.

A config is a YAML (or JSON) mapping::

    experiment: IsingSample          # one of EXPERIMENT_KINDS
    name: ising5                     # optional, defaults to the experiment kind
    model: {kind: ising, rows: 5, cols: 5, a: 0.1, b: 0.2, encoding: binary}
    samplers:
      - {kind: dmala, alpha: 0.4}
      - {kind: dula, alpha: [0.1, 0.2]}   # a list of alphas expands to one run each
      - {kind: gibbs1, order: random, label: gibbs-random}
    seeds: [0, 1, 2]
    n_steps: 10000
    burn_in: 1000                    # optional, 10% of n_steps when absent
    n_chains: 1
    thin: 1
    state_cap: 16777216
    output_dir: runs/ising5
    options: {...}                   # experiment-specific, see OPTION_DEFAULTS

:func:`validate_config` reports every problem it finds at once, each prefixed
by the field path (or line number for syntax errors).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import yaml

from .core import DEFAULT_STATE_CAP
from .samplers import SAMPLER_KINDS

EXPERIMENT_KINDS = (
    "Theorem1Sweep",
    "Theorem2Sweep",
    "IsingSample",
    "PreconditionerDemo",
    "RbmSample",
    "StochasticProbe",
    "StepsizeAblation",
)

# required and optional keys per model kind
MODEL_KEYS: dict[str, tuple[set[str], set[str]]] = {
    "ising": ({"rows", "cols", "a", "b"}, {"periodic", "encoding"}),
    "log_quadratic": (set(), {"W", "W_file", "b", "b_file", "domain"}),
    "perturbed_1d": ({"a", "b"}, {"eps"}),
    "rbm": (set(), {"n_visible", "n_hidden", "weight_scale", "bias_scale", "visible_bias",
                    "hidden_bias", "seed", "path"}),
    "noisy_gradient": ({"base"}, {"noise_scale"}),
}

MODEL_DEFAULTS: dict[str, dict[str, Any]] = {
    "ising": {"periodic": False, "encoding": "spin"},
    "log_quadratic": {"domain": "spin"},
    "perturbed_1d": {"eps": 0.0},
    "rbm": {"weight_scale": 0.1, "bias_scale": 0.0, "visible_bias": 0.0, "hidden_bias": 0.0, "seed": 0},
    "noisy_gradient": {"noise_scale": 0.0},
}

SAMPLER_DEFAULTS: dict[str, dict[str, Any]] = {
    "dula": {"stochastic": False, "stepsize_term": True},
    "dmala": {"stepsize_term": True},
    "gibbs1": {"order": "systematic"},
}

# sampler parameters beyond kind/alpha/label
SAMPLER_KEYS: dict[str, set[str]] = {
    "dula": {"precond", "stochastic", "batch_size", "stepsize_term"},
    "dmala": {"precond", "stepsize_term"},
    "gibbs1": {"order"},
    "lb1": set(),
    "gradflip1": set(),
    "rbm_block_gibbs": set(),
}

OPTION_DEFAULTS: dict[str, dict[str, Any]] = {
    "Theorem1Sweep": {},
    "Theorem2Sweep": {"eps": [0.0, 0.25, 0.5, 1.0]},
    "IsingSample": {"truth": "auto", "reference_chains": 100, "reference_steps": 10000, "init": "random"},
    "PreconditionerDemo": {"init": "zeros"},
    "RbmSample": {"mmd_samples": 1000, "n_perm": 200, "level": 0.05, "init": "random"},
    "StochasticProbe": {"noise_scales": [0.0, 0.1, 0.5, 1.0], "n_draws": 2000, "state_seed": 0},
    "StepsizeAblation": {"init": "reference", "warmup_steps": 300},
}

# which sampler kinds make sense for each experiment
ALLOWED_SAMPLERS: dict[str, set[str]] = {
    "Theorem1Sweep": {"dula"},
    "Theorem2Sweep": {"dula"},
    "IsingSample": {"dula", "dmala", "gibbs1", "lb1", "gradflip1"},
    "PreconditionerDemo": {"dula", "dmala"},
    "RbmSample": set(SAMPLER_KINDS),
    "StochasticProbe": {"dula"},
    "StepsizeAblation": {"dmala"},
}

ALLOWED_MODELS: dict[str, set[str]] = {
    "Theorem1Sweep": {"ising", "log_quadratic"},
    "Theorem2Sweep": {"perturbed_1d"},
    "IsingSample": {"ising", "log_quadratic"},
    "PreconditionerDemo": {"log_quadratic", "ising"},
    "RbmSample": {"rbm"},
    "StochasticProbe": {"noisy_gradient"},
    "StepsizeAblation": {"rbm"},
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class SamplerSpec:
    kind: str
    alpha: float | tuple[float, ...] | None = None
    params: dict = field(default_factory=dict)
    label: str | None = None

    @property
    def alphas(self) -> list[float | None]:
        if isinstance(self.alpha, tuple):
            return list(self.alpha)
        return [self.alpha]

    @property
    def display(self) -> str:
        if self.label:
            return self.label
        name = self.kind
        if self.params.get("precond") is not None:
            name += "-precond"
        if self.params.get("stepsize_term") is False:
            name += "-noterm"
        if self.params.get("stochastic"):
            name += "-stoch"
        return name

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.alpha is not None:
            out["alpha"] = list(self.alpha) if isinstance(self.alpha, tuple) else self.alpha
        if self.label is not None:
            out["label"] = self.label
        out.update(self.params)
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: ModelSpec
    samplers: tuple[SamplerSpec, ...]
    seeds: tuple[int, ...]
    n_steps: int
    name: str = ""
    burn_in: int | None = None
    n_chains: int = 1
    thin: int = 1
    state_cap: int = DEFAULT_STATE_CAP
    output_dir: str = ""
    options: dict = field(default_factory=dict)

    @property
    def effective_burn_in(self) -> int:
        return self.n_steps // 10 if self.burn_in is None else self.burn_in

    def option(self, key: str):
        return self.options.get(key, OPTION_DEFAULTS[self.experiment].get(key))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "experiment": self.experiment,
            "name": self.name,
            "model": self.model.to_dict(),
            "samplers": [s.to_dict() for s in self.samplers],
            "seeds": list(self.seeds),
            "n_steps": self.n_steps,
            "n_chains": self.n_chains,
            "thin": self.thin,
            "state_cap": self.state_cap,
            "output_dir": self.output_dir,
            "options": dict(self.options),
        }
        if self.burn_in is not None:
            out["burn_in"] = self.burn_in
        return out

    def canonical_text(self) -> str:
        return yaml.safe_dump(_plain(self.to_dict()), sort_keys=True, default_flow_style=False)

    def semantic_hash(self) -> str:
        """sha256 over every field that can change results.

        ``name`` and ``output_dir`` are excluded, defaults are filled in and
        numbers compared as floats, so spelling out a default or writing
        ``1`` for ``1.0`` leaves the hash unchanged.
        """
        d = self.to_dict()
        d.pop("name")
        d.pop("output_dir")
        d["burn_in"] = self.effective_burn_in
        d["options"] = {**OPTION_DEFAULTS[self.experiment], **self.options}
        d["model"] = _with_model_defaults(d["model"])
        d["samplers"] = [{**SAMPLER_DEFAULTS.get(s["kind"], {}), **s} for s in d["samplers"]]
        text = json.dumps(_numbers_as_float(_plain(d)), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        d = {**self.__dict__, **changes}
        return ExperimentConfig(**d)


def _with_model_defaults(m: dict) -> dict:
    out = {**MODEL_DEFAULTS.get(m["kind"], {}), **m}
    if m["kind"] == "noisy_gradient" and isinstance(m.get("base"), dict):
        out["base"] = _with_model_defaults(m["base"])
    return out


def _numbers_as_float(obj):
    if isinstance(obj, dict):
        return {k: _numbers_as_float(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_numbers_as_float(v) for v in obj]
    if isinstance(obj, int) and not isinstance(obj, bool):
        return float(obj)
    return obj


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def load_text(text: str) -> Any:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"line {exc.lineno}: {exc.msg}"]) from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "config"
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError([f"{where}: {problem}"]) from None


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_alpha(v, path: str, errors: list[str]) -> None:
    if not _is_real(v):
        errors.append(f"{path}: stepsize must be a finite number, got {v!r}")
    elif v <= 0:
        errors.append(f"{path}: stepsize must be positive, got {v}")


def parse_model_spec(raw, path: str, errors: list[str]) -> ModelSpec | None:
    if not isinstance(raw, dict):
        errors.append(f"{path}: expected a mapping")
        return None
    kind = raw.get("kind")
    if kind not in MODEL_KEYS:
        errors.append(f"{path}.kind: unknown model {kind!r}; valid kinds: {', '.join(MODEL_KEYS)}")
        return None
    required, optional = MODEL_KEYS[kind]
    params = {k: v for k, v in raw.items() if k != "kind"}
    for k in sorted(required - params.keys()):
        errors.append(f"{path}.{k}: required for model {kind!r}")
    for k in sorted(params.keys() - required - optional):
        errors.append(f"{path}.{k}: unknown key for model {kind!r}")
    for k in ("a", "b", "eps", "noise_scale", "weight_scale", "bias_scale", "visible_bias", "hidden_bias"):
        if k in params and not (kind == "log_quadratic" and k == "b") and not _is_real(params[k]):
            errors.append(f"{path}.{k}: expected a number, got {params[k]!r}")
    for k in ("rows", "cols", "n_visible", "n_hidden"):
        if k in params and not (_is_int(params[k]) and params[k] >= 1):
            errors.append(f"{path}.{k}: expected a positive integer, got {params[k]!r}")
    if kind == "ising" and params.get("encoding", "spin") not in ("spin", "binary"):
        errors.append(f"{path}.encoding: expected 'spin' or 'binary'")
    if kind == "log_quadratic":
        if ("W" in params) == ("W_file" in params):
            errors.append(f"{path}: give exactly one of W or W_file")
        if params.get("domain", "spin") not in ("spin", "binary"):
            errors.append(f"{path}.domain: expected 'spin' or 'binary'")
    if kind == "rbm" and "path" not in params:
        for k in ("n_visible", "n_hidden"):
            if k not in params:
                errors.append(f"{path}.{k}: required unless 'path' is given")
    if kind == "noisy_gradient":
        if "noise_scale" in params and _is_real(params["noise_scale"]) and params["noise_scale"] < 0:
            errors.append(f"{path}.noise_scale: must be >= 0")
        base = parse_model_spec(params.get("base"), f"{path}.base", errors) if "base" in params else None
        if base is not None:
            params["base"] = base.to_dict()
    return ModelSpec(kind, params)


def parse_sampler_spec(raw, path: str, errors: list[str]) -> SamplerSpec | None:
    if not isinstance(raw, dict):
        errors.append(f"{path}: expected a mapping")
        return None
    kind = raw.get("kind")
    if kind not in SAMPLER_KINDS:
        errors.append(f"{path}.kind: unknown sampler {kind!r}; valid kinds: {', '.join(SAMPLER_KINDS)}")
        return None
    alpha = raw.get("alpha")
    if isinstance(alpha, list):
        if not alpha:
            errors.append(f"{path}.alpha: empty stepsize list")
        for i, a in enumerate(alpha):
            _check_alpha(a, f"{path}.alpha[{i}]", errors)
        alpha = tuple(float(a) for a in alpha if _is_real(a))
    elif alpha is not None:
        _check_alpha(alpha, f"{path}.alpha", errors)
        alpha = float(alpha) if _is_real(alpha) else None
    elif kind in ("dula", "dmala"):
        errors.append(f"{path}.alpha: required for {kind}")
    if kind in ("gibbs1", "gradflip1", "rbm_block_gibbs") and raw.get("alpha") is not None:
        errors.append(f"{path}.alpha: {kind} takes no stepsize")
    label = raw.get("label")
    if label is not None and not isinstance(label, str):
        errors.append(f"{path}.label: expected a string")
    params = {k: v for k, v in raw.items() if k not in ("kind", "alpha", "label")}
    for k in sorted(params.keys() - SAMPLER_KEYS[kind]):
        errors.append(f"{path}.{k}: unknown parameter for sampler {kind!r}")
    if "precond" in params:
        pc = params["precond"]
        if not (isinstance(pc, list) and pc and all(_is_real(v) and v > 0 for v in pc)):
            errors.append(f"{path}.precond: expected a list of positive numbers")
        else:
            params["precond"] = [float(v) for v in pc]
    if "stepsize_term" in params and not isinstance(params["stepsize_term"], bool):
        errors.append(f"{path}.stepsize_term: expected true or false")
    if "order" in params and params["order"] not in ("systematic", "random"):
        errors.append(f"{path}.order: expected 'systematic' or 'random'")
    return SamplerSpec(kind, alpha, params, label)


def parse_config(data: Any) -> ExperimentConfig:
    """Validate an already-loaded mapping.  Raises :class:`ConfigError`."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["config: expected a mapping at the top level"])
    known = {"experiment", "name", "model", "samplers", "seeds", "n_steps", "burn_in", "n_chains",
             "thin", "state_cap", "output_dir", "options"}
    for k in sorted(data.keys() - known):
        errors.append(f"{k}: unknown top-level key")
    exp = data.get("experiment")
    if exp not in EXPERIMENT_KINDS:
        errors.append(f"experiment: unknown kind {exp!r}; valid kinds: {', '.join(EXPERIMENT_KINDS)}")
    model = parse_model_spec(data["model"], "model", errors) if "model" in data else None
    if "model" not in data:
        errors.append("model: required")

    samplers: list[SamplerSpec] = []
    raw_samplers = data.get("samplers")
    if not isinstance(raw_samplers, list) or not raw_samplers:
        errors.append("samplers: need a non-empty list of samplers")
    else:
        for i, rs in enumerate(raw_samplers):
            s = parse_sampler_spec(rs, f"samplers[{i}]", errors)
            if s is not None:
                samplers.append(s)

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        errors.append("seeds: need a non-empty list of integers")
        seeds = []
    elif not all(_is_int(s) and s >= 0 for s in seeds):
        errors.append("seeds: every seed must be a non-negative integer")

    def positive_int(key, default, minimum=1):
        v = data.get(key, default)
        if not (_is_int(v) and v >= minimum):
            errors.append(f"{key}: expected an integer >= {minimum}, got {v!r}")
            return default
        return v

    n_steps = positive_int("n_steps", None) if "n_steps" in data else None
    if n_steps is None and "n_steps" not in data:
        errors.append("n_steps: required")
    n_chains = positive_int("n_chains", 1)
    thin = positive_int("thin", 1)
    state_cap = positive_int("state_cap", DEFAULT_STATE_CAP)
    burn_in = data.get("burn_in")
    if burn_in is not None:
        if not (_is_int(burn_in) and burn_in >= 0):
            errors.append(f"burn_in: expected a non-negative integer, got {burn_in!r}")
            burn_in = None
        elif n_steps is not None and burn_in >= n_steps:
            errors.append("burn_in: must be smaller than n_steps")

    options = data.get("options", {}) or {}
    if not isinstance(options, dict):
        errors.append("options: expected a mapping")
        options = {}
    name = data.get("name", exp if isinstance(exp, str) else "")
    if not isinstance(name, str):
        errors.append("name: expected a string")
        name = str(name)
    output_dir = data.get("output_dir", f"runs/{name}")
    if not isinstance(output_dir, str):
        errors.append("output_dir: expected a string")
        output_dir = str(output_dir)

    if exp in EXPERIMENT_KINDS:
        for k in sorted(options.keys() - OPTION_DEFAULTS[exp].keys()):
            errors.append(f"options.{k}: unknown option for {exp}")
        _check_options(exp, options, errors)
        if model is not None and model.kind not in ALLOWED_MODELS[exp]:
            errors.append(f"model.kind: {exp} needs one of {', '.join(sorted(ALLOWED_MODELS[exp]))}")
        for i, s in enumerate(samplers):
            if s.kind not in ALLOWED_SAMPLERS[exp]:
                errors.append(f"samplers[{i}].kind: {s.kind!r} is not usable in {exp}; "
                              f"use one of {', '.join(sorted(ALLOWED_SAMPLERS[exp]))}")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        experiment=exp,
        name=name,
        model=model,
        samplers=tuple(samplers),
        seeds=tuple(int(s) for s in seeds),
        n_steps=n_steps,
        burn_in=burn_in,
        n_chains=n_chains,
        thin=thin,
        state_cap=state_cap,
        output_dir=output_dir,
        options=dict(options),
    )


def _check_options(exp: str, options: dict, errors: list[str]) -> None:
    def real_list(key, lo=None):
        if key in options:
            v = options[key]
            if not (isinstance(v, list) and v and all(_is_real(x) for x in v)):
                errors.append(f"options.{key}: expected a non-empty list of numbers")
            elif lo is not None and any(x < lo for x in v):
                errors.append(f"options.{key}: values must be >= {lo}")

    def pos_int(key):
        if key in options and not (_is_int(options[key]) and options[key] >= 1):
            errors.append(f"options.{key}: expected a positive integer")

    def choice(key, allowed):
        if key in options and options[key] not in allowed:
            errors.append(f"options.{key}: expected one of {', '.join(allowed)}")

    real_list("eps", 0.0)
    real_list("noise_scales", 0.0)
    for k in ("reference_chains", "reference_steps", "mmd_samples", "n_perm", "n_draws", "warmup_steps"):
        pos_int(k)
    if "state_seed" in options and not (_is_int(options["state_seed"]) and options["state_seed"] >= 0):
        errors.append("options.state_seed: expected a non-negative integer")
    if "level" in options and not (_is_real(options["level"]) and 0 < options["level"] < 1):
        errors.append("options.level: expected a number in (0, 1)")
    choice("truth", ("auto", "exact", "reference"))
    choice("init", ("random", "zeros", "reference") if exp == "StepsizeAblation" else ("random", "zeros"))


def validate_config(text: str) -> ExperimentConfig:
    """Parse and validate config text.  Raises :class:`ConfigError` listing every problem."""
    return parse_config(load_text(text))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return validate_config(fh.read())
