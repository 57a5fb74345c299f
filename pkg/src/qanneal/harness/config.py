"""Flat sectioned key-value experiment specs (INI syntax, one level of nesting)."""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


class SpecError(ValueError):
    """Invalid experiment spec; the message names the offending field path."""


@dataclass(frozen=True)
class ExperimentSpec:
    """``experiment`` id, ``output`` directory, master ``seed`` and free-form sections of strings."""

    experiment: str
    output: str = "results"
    seed: int = 0
    sections: dict[str, dict[str, str]] = field(default_factory=dict)

    def get(self, section: str, key: str, default: str | None = None) -> str:
        try:
            return self.sections[section][key]
        except KeyError:
            if default is None:
                raise SpecError(f"missing field {section}.{key}") from None
            return default

    def get_float(self, section: str, key: str, default: float | None = None) -> float:
        raw = self.get(section, key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError:
            raise SpecError(f"{section}.{key}: expected a number, got {raw!r}") from None

    def get_int(self, section: str, key: str, default: int | None = None) -> int:
        raw = self.get(section, key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError:
            raise SpecError(f"{section}.{key}: expected an integer, got {raw!r}") from None

    def get_list(self, section: str, key: str, default: str | None = None) -> list[str]:
        return [v.strip() for v in self.get(section, key, default).split(",") if v.strip()]

    def get_grid(self, section: str, key: str, default: str | None = None) -> np.ndarray:
        return parse_grid(self.get(section, key, default), f"{section}.{key}")

    def with_values(self, section: str, **values) -> "ExperimentSpec":
        secs = {k: dict(v) for k, v in self.sections.items()}
        secs.setdefault(section, {}).update({k: str(v) for k, v in values.items()})
        return ExperimentSpec(self.experiment, self.output, self.seed, secs)


def parse_grid(text: str, where: str = "grid") -> np.ndarray:
    """``lo:hi:n`` is a geometric grid of n points; otherwise a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return np.geomspace(float(lo), float(hi), int(n))
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise SpecError(f"{where}: cannot parse grid {text!r}") from None


def dumps(spec: ExperimentSpec) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {"id": spec.experiment, "output": spec.output, "seed": str(spec.seed),
                        "schema": str(SCHEMA_VERSION)}
    for name in sorted(spec.sections):
        if name == "experiment":
            raise SpecError("section name 'experiment' is reserved")
        cp[name] = dict(sorted(spec.sections[name].items()))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads(text: str) -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed spec: {exc}") from None
    if "experiment" not in cp:
        raise SpecError("missing section [experiment]")
    head = cp["experiment"]
    if "id" not in head:
        raise SpecError("missing field experiment.id")
    schema = int(head.get("schema", SCHEMA_VERSION))
    if schema != SCHEMA_VERSION:
        raise SpecError(f"experiment.schema: unsupported version {schema}")
    try:
        seed = int(head.get("seed", "0"))
    except ValueError:
        raise SpecError(f"experiment.seed: expected an integer, got {head['seed']!r}") from None
    sections = {s: dict(cp[s]) for s in cp.sections() if s != "experiment"}
    return ExperimentSpec(head["id"], head.get("output", "results"), seed, sections)


def load(path) -> ExperimentSpec:
    return loads(Path(path).read_text())


def save(spec: ExperimentSpec, path) -> Path:
    path = Path(path)
    path.write_text(dumps(spec))
    return path
