"""Experiment configuration: strict JSON with a versioned schema."""
import copy
import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigError
from .kernel import Kernel
from .marks import MarkDistribution
from .stats import TAGS

SCHEMA_VERSION = 1

DISTANCES = ("wasserstein", "smooth-surrogate")

# per-check defaults: small enough for a quick run
VERIFY_DEFAULTS = {
    "ibp": {"T": 10.0, "reps": 20_000, "n_strata": 64},
    "derivative_positivity": {"T": 20.0, "reps": 2_000, "grid_points": 256},
    "offspring_bound": {"T": 40.0, "reps": 8_000, "n_strata": 8},
    "martingale": {"T": 10.0, "checkpoints": [2.0, 5.0, 10.0], "reps": 5_000, "n_strata": 8},
    "remainder_R": {"horizons": [50.0, 100.0, 200.0, 400.0, 800.0], "reps": 4_000},
    "R_third_moment": {"horizons": [25.0, 100.0, 400.0], "reps": 48_000, "n_strata": 4},
}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "kernel": {"family": "exponential", "alpha": 1.0, "beta": 2.0},
    "mu": 1.0,
    "marks": {"family": "dirac", "c": 1.0},
    "horizons": [50.0, 100.0, 200.0, 400.0, 800.0],
    "replications": 20_000,
    "debias_replicates": 64,
    "seed": 0,
    "functional": "F",
    "distance": "wasserstein",
    "output_dir": "results",
    "bootstrap": 200,
    "mark_integration": True,
    "psi": {"step": None, "tol": 1e-8},
    "verify": VERIFY_DEFAULTS,
}


@dataclass(frozen=True)
class Model:
    kernel: Kernel
    mu: float
    marks: MarkDistribution


def _merge(defaults, given, where):
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(defaults[key], dict) and key not in ("kernel", "marks"):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}.{key} must be an object")
            out[key] = _merge(defaults[key], value, f"{where}.{key}")
        else:
            out[key] = copy.deepcopy(value)
    return out


class ExperimentConfig:
    """Resolved configuration.  ``data`` holds the full JSON document."""

    def __init__(self, data=None):
        data = {} if data is None else data
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        self.data = _merge(DEFAULTS, data, "config")
        self._validate()

    def _validate(self):
        d = self.data
        if d["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d['schema_version']!r}")
        self.kernel = Kernel.from_dict(d["kernel"])
        self.marks = MarkDistribution.from_dict(d["marks"])
        try:
            mu = float(d["mu"])
        except (TypeError, ValueError):
            raise ConfigError("mu must be a number") from None
        if not mu > 0:
            raise ConfigError(f"mu must be positive, got {mu}")
        self.mu = mu
        hs = d["horizons"]
        if not isinstance(hs, list) or len(hs) < 1:
            raise ConfigError("horizons must be a non-empty list")
        try:
            hs = [float(h) for h in hs]
        except (TypeError, ValueError):
            raise ConfigError("horizons must be numbers") from None
        if hs[0] <= 0 or any(b <= a for a, b in zip(hs, hs[1:])):
            raise ConfigError("horizons must be positive and strictly increasing")
        for key, lo in (("replications", 100), ("debias_replicates", 2), ("bootstrap", 0)):
            v = d[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < lo:
                raise ConfigError(f"{key} must be an integer >= {lo}, got {v!r}")
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool) or d["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        if d["functional"] not in TAGS:
            raise ConfigError(f"functional must be one of {TAGS}, got {d['functional']!r}")
        if d["distance"] not in DISTANCES:
            raise ConfigError(f"distance must be one of {DISTANCES}, got {d['distance']!r}")
        if not isinstance(d["mark_integration"], bool):
            raise ConfigError("mark_integration must be true or false")
        step = d["psi"]["step"]
        if step is not None and not (isinstance(step, (int, float)) and step > 0):
            raise ConfigError("psi.step must be positive or null")
        if not d["psi"]["tol"] > 0:
            raise ConfigError("psi.tol must be positive")
        for name, opts in d["verify"].items():
            if "reps" in opts and (not isinstance(opts["reps"], int) or opts["reps"] < 2):
                raise ConfigError(f"verify.{name}.reps must be an integer >= 2")

    @property
    def horizons(self):
        return [float(h) for h in self.data["horizons"]]

    @property
    def model(self):
        return Model(self.kernel, self.mu, self.marks)

    def __getattr__(self, name):
        data = self.__dict__.get("data")
        if data is not None and name in data:
            return data[name]
        raise AttributeError(name)

    def replace(self, **changes):
        d = copy.deepcopy(self.data)
        d.update(changes)
        return ExperimentConfig(d)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True)

    def hash(self):
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls(data)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.data == other.data

    def __repr__(self):
        return f"ExperimentConfig({self.data!r})"
