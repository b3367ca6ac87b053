"""YAML run configuration: strict schema validation and conversion to model objects.

Validation errors carry the line of the offending node so typos can be found
quickly. Nothing is computed before the whole document validates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .dynamics import ControlSchedule, InputState
from .model import ProfileSpec, SubEnsembleConfig

DEFAULT_SCHEDULE = {"direction": "roundtrip", "T": 200.0, "peak": 20.0, "shape": "raised-cosine", "hold": 0.0}
DEFAULT_NUMERICS = {"steps": 64, "samples": 100, "tol": 1e-9}


class ConfigError(ValueError):
    """Schema or semantic error in a config document, with its source line when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = source or "<config>"
        prefix = f"{where}:{line}: " if line is not None else f"{where}: "
        super().__init__(prefix + message)
        self.line = line


def load_schema() -> dict:
    text = resources.files("eitmemory").joinpath("data/config.schema.json").read_text()
    return json.loads(text)


def _node_line(root, path) -> int | None:
    """1-based line of the YAML node at ``path`` (deepest existing ancestor)."""
    node = root
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            match = [v for k, v in node.value if k.value == key]
            if not match:
                break
            node = match[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def _key_line(root, path, key) -> int | None:
    """Line of a mapping key (used for rejected unknown keys)."""
    node = root
    for part in path:
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == part), None)
        elif isinstance(node, yaml.SequenceNode):
            node = node.value[part]
        if node is None:
            return None
    if isinstance(node, yaml.MappingNode):
        for k, _ in node.value:
            if k.value == key:
                return k.start_mark.line + 1
    return None


def _format_error(err: jsonschema.ValidationError, root, source) -> ConfigError:
    path = list(err.absolute_path)
    dotted = ".".join(str(p) for p in path) or "<root>"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        if extra:
            return ConfigError(f"unknown key {extra[0]!r} in {dotted}", _key_line(root, path, extra[0]), source)
    return ConfigError(f"{dotted}: {err.message}", _node_line(root, path), source)


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    raw: dict
    system: SubEnsembleConfig | None
    profile: ProfileSpec | None
    schedule: ControlSchedule
    input: InputState
    launch: str = "polariton"
    numerics: dict = field(default_factory=lambda: dict(DEFAULT_NUMERICS))
    sweep: dict = field(default_factory=dict)
    oracle: dict | None = None
    seed: int = 0

    @property
    def numerics_kwargs(self) -> dict:
        n = self.numerics
        return {"steps": n["steps"], "samples": n["samples"], "tol": n["tol"]}

    def template(self):
        """Sweep template: the profile when one was given, else the system."""
        return self.profile if self.profile is not None else self.system


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def _build_system(doc: dict) -> tuple[SubEnsembleConfig | None, ProfileSpec | None]:
    if "profile" in doc:
        p = doc["profile"]
        spec = ProfileSpec(
            tuple(tuple(float(x) for x in row) for row in p["g_samples"]),
            tuple(tuple(float(x) for x in row) for row in p["w_samples"]),
            int(p["total_atoms"]),
        )
        return spec.discretize(int(p["m"])).normalized(), spec
    weights = doc.get("control_weights")
    if "collective_couplings" in doc:
        config = SubEnsembleConfig.from_collective(
            doc["collective_couplings"], weights, doc.get("atom_counts"), normalize=False
        )
    else:
        g = doc["probe_couplings"]
        counts = doc.get("atom_counts")
        if counts is None:
            raise ValueError("atom_counts is required with probe_couplings")
        config = SubEnsembleConfig(
            tuple(counts),
            tuple(g),
            tuple(weights if weights is not None else [1.0] * len(g)),
            doc.get("g0"),
            doc.get("omega0_weight"),
        )
    if doc.get("normalize", False):
        config = config.normalized()
    return config, None


def _build_schedule(doc: dict | None) -> ControlSchedule:
    s = {**DEFAULT_SCHEDULE, **(doc or {})}
    return ControlSchedule(s["direction"], float(s["T"]), float(s["peak"]), s["shape"], float(s["hold"]))


def _build_input(doc: dict | None) -> InputState:
    if not doc:
        return InputState.fock(1)
    if doc["kind"] == "coherent":
        if "alpha" not in doc:
            raise ValueError("coherent input needs alpha")
        return InputState.coherent(_complex(doc["alpha"]))
    if "fock_coefficients" in doc:
        return InputState.superposition([_complex(c) for c in doc["fock_coefficients"]])
    return InputState.fock(int(doc.get("photons", 1)))


def parse_config(doc: Any, root_node=None, source: str | None = None) -> RunConfig:
    """Validate a decoded document and build the run objects."""
    if doc is None:
        doc = {}
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = list(validator.iter_errors(doc))
    if errors:
        # the deepest error is the most specific one
        err = max(errors, key=lambda e: len(list(e.absolute_path)))
        raise _format_error(err, root_node, source)
    section = None
    try:
        section = "system"
        system, profile = _build_system(doc["system"]) if "system" in doc else (None, None)
        section = "schedule"
        schedule = _build_schedule(doc.get("schedule"))
        section = "input"
        state = _build_input(doc.get("input"))
        section = "oracle"
        oracle = doc.get("oracle")
        if oracle is not None and "schedule" in oracle:
            _build_schedule(oracle["schedule"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}: {exc}", _node_line(root_node, [section]), source) from None
    return RunConfig(
        raw=doc,
        system=system,
        profile=profile,
        schedule=schedule,
        input=state,
        launch=doc.get("launch", "polariton"),
        numerics={**DEFAULT_NUMERICS, **doc.get("numerics", {})},
        sweep=dict(doc.get("sweep", {})),
        oracle=oracle,
        seed=int(doc.get("seed", 0)),
    )


def loads(text: str, source: str | None = None) -> RunConfig:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {exc}", mark.line + 1 if mark else None, source) from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", 1, source)
    return parse_config(doc, root, source)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return loads(text, str(path))


def oracle_schedule(run: RunConfig) -> ControlSchedule:
    doc = (run.oracle or {}).get("schedule")
    if doc is None:
        return ControlSchedule("roundtrip", 50.0, 5.0)
    return _build_schedule({"direction": "roundtrip", **doc})
