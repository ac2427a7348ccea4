"""
Declarative experiment configuration (JSON).

Example::

    {
      "dataset": {"generate": {"preset": "two_group", "num_samples": 2000}},
      "policy": {"mode": ["skip", "sim_weighted", "sim_weighted_confidence"],
                 "confidence_threshold": 0.6, "max_epochs": 30},
      "metric": "cohen_kappa",
      "removal_ratio": null,
      "seeds": [0, 1, 2],
      "test_fraction": 0.2,
      "output_dir": "runs/demo"
    }

``dataset.generate`` is a path to a generator-spec JSON file, an inline spec
object, or ``{"preset": name, ...keyword arguments}``. ``dataset.load`` is a
path to a CSV or JSON dataset (optionally with ``num_classes``). Relative paths
are resolved against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .agreement import resolve_metric
from .refinement import MODES, PolicyError, TrainingPolicy
from .synth import GeneratorSpec, amer2_profile_spec, two_group_spec

PRESETS = {"two_group": two_group_spec, "amer2": amer2_profile_spec}

TOP_LEVEL_KEYS = {"dataset", "policy", "metric", "removal_ratio", "seeds", "test_fraction", "output_dir"}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path
    modes: list
    policy: TrainingPolicy
    metric: str
    seeds: list
    output_dir: Path
    removal_ratio: float | None = None
    test_fraction: float = 0.2
    generate: object = None
    load: Path | None = None
    num_classes: int | None = None
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such config file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc, path.parent)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentConfig":
        base_dir = Path(base_dir)
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(doc) - TOP_LEVEL_KEYS)
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(unknown)}")

        ds = doc.get("dataset")
        if not isinstance(ds, dict):
            raise ConfigError("dataset: required object with 'generate' or 'load'")
        sources = [k for k in ("generate", "load") if k in ds]
        if len(sources) != 1:
            raise ConfigError("dataset: exactly one of 'generate' or 'load' must be given")
        extra = sorted(set(ds) - {"generate", "load", "num_classes"})
        if extra:
            raise ConfigError(f"dataset: unknown field(s): {', '.join(extra)}")
        generate = load = None
        if "generate" in ds:
            generate = ds["generate"]
            if isinstance(generate, str):
                generate = base_dir / generate
            elif not isinstance(generate, dict):
                raise ConfigError("dataset.generate: expected a path or an object")
        else:
            if not isinstance(ds["load"], str):
                raise ConfigError("dataset.load: expected a file path")
            load = base_dir / ds["load"]
        num_classes = ds.get("num_classes")
        if num_classes is not None and (not isinstance(num_classes, int) or num_classes < 2):
            raise ConfigError("dataset.num_classes: expected an integer >= 2")

        pol = dict(doc.get("policy") or {})
        modes = pol.pop("mode", list(MODES))
        if isinstance(modes, str):
            modes = [modes]
        if not modes or any(m not in MODES for m in modes):
            raise ConfigError(f"policy.mode: expected one or more of {list(MODES)}")
        pol.pop("seed", None)
        try:
            policy = TrainingPolicy.from_dict({**pol, "mode": modes[0]})
        except (PolicyError, TypeError) as exc:
            raise ConfigError(f"policy.{exc}") from None

        try:
            metric = resolve_metric(doc.get("metric", "cohen_kappa"))
        except ValueError as exc:
            raise ConfigError(f"metric: {exc}") from None

        seeds = doc.get("seeds", [0])
        if isinstance(seeds, int):
            seeds = [seeds]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("seeds: expected a non-empty list of integers")

        ratio = doc.get("removal_ratio")
        if ratio is not None and not (isinstance(ratio, (int, float)) and 0 <= ratio <= 1):
            raise ConfigError("removal_ratio: expected a number in [0, 1] or null")
        tf = doc.get("test_fraction", 0.2)
        if not isinstance(tf, (int, float)) or not 0 < tf < 1:
            raise ConfigError("test_fraction: expected a number in (0, 1)")
        out = doc.get("output_dir", "runs")
        if not isinstance(out, str):
            raise ConfigError("output_dir: expected a path string")

        return cls(
            raw=doc, base_dir=base_dir, modes=list(modes), policy=policy, metric=metric,
            seeds=list(seeds), output_dir=base_dir / out,
            removal_ratio=float(ratio) if ratio is not None else None,
            test_fraction=float(tf), generate=generate, load=load, num_classes=num_classes,
        )

    def with_overrides(self, output_dir=None, seed=None) -> "ExperimentConfig":
        cfg = ExperimentConfig(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        cfg.overrides = dict(self.overrides)
        if output_dir is not None:
            cfg.output_dir = Path(output_dir)
            cfg.overrides["output_dir"] = str(output_dir)
        if seed is not None:
            cfg.seeds = [int(seed)]
            cfg.overrides["seeds"] = [int(seed)]
        return cfg

    def effective_dict(self) -> dict:
        doc = json.loads(json.dumps(self.raw))
        for key, value in self.overrides.items():
            doc[key] = value
        return doc

    def config_hash(self) -> str:
        canonical = json.dumps(self.effective_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def generator_spec(self) -> GeneratorSpec:
        gen = self.generate
        try:
            if isinstance(gen, Path):
                return GeneratorSpec.load(gen)
            if "preset" in gen:
                kwargs = dict(gen)
                name = kwargs.pop("preset")
                if name not in PRESETS:
                    raise ConfigError(f"dataset.generate.preset: unknown preset {name!r}")
                return PRESETS[name](**kwargs)
            return GeneratorSpec.from_dict(gen)
        except FileNotFoundError:
            raise ConfigError(f"dataset.generate: {gen}: no such file") from None
        except TypeError as exc:
            raise ConfigError(f"dataset.generate: {exc}") from None

    def dataset_name(self) -> str:
        if self.load is not None:
            return self.load.stem
        if isinstance(self.generate, Path):
            return self.generate.stem
        return str(self.generate.get("preset", "generated"))
