"""Run configuration: INI-style file parsing, validation, defaults.

The config file is a plain sectioned key-value file::

    [model]
    kind = tight_binding   ; or custom_h
    L = 2
    V = 1.0
    J = 1.0
    ; h_file = my_matrix.csv   (custom_h only)

    [baths]
    gamma1 = 0.1
    gammaL = 0.1
    f1 = 1.0
    fL = 0.0

    [state]
    initial = steady       ; or vacuum

    [grid]
    points = 400
    ; t_max = 200.0        (omit for the automatic horizon)

    [tolerances]
    quadrature = 1e-8
    oracle = 1e-8

    [output]
    dir = .

Every section and key is optional; omitted values fall back to the
defaults above (the shipped default is the two-site tight-binding chain
driven by a full bath on the left and an empty one on the right).  A
custom Hamiltonian is a CSV file with 2L numbers per row: the real and
imaginary part of each entry, interleaved.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .model import ChainSpec, GaussianState, build_tight_binding, steady_state, vacuum_state


class ConfigError(Exception):
    """Invalid run configuration; message names the offending field."""


@dataclass
class RunConfig:
    model_kind: str = "tight_binding"
    L: int = 2
    V: float = 1.0
    J: float = 1.0
    h_file: str = ""
    gamma1: float = 0.1
    gammaL: float = 0.1
    f1: float = 1.0
    fL: float = 0.0
    initial_state: str = "steady"
    t_max: float | None = None
    points: int = 400
    tol_quadrature: float = 1e-8
    tol_oracle: float = 1e-8
    out_dir: str = "."
    source: str = field(default="<defaults>", compare=False)

    def validate(self):
        if self.model_kind not in ("tight_binding", "custom_h"):
            raise ConfigError(
                f"model.kind: expected 'tight_binding' or 'custom_h', got {self.model_kind!r}"
            )
        if self.model_kind == "custom_h" and not self.h_file:
            raise ConfigError("model.h_file: required when model.kind = custom_h")
        if self.L < 2:
            raise ConfigError(f"model.L: chain needs at least 2 sites, got {self.L}")
        for name, v in (("baths.gamma1", self.gamma1), ("baths.gammaL", self.gammaL)):
            if v < 0:
                raise ConfigError(f"{name}: must be >= 0, got {v}")
        for name, v in (("baths.f1", self.f1), ("baths.fL", self.fL)):
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}: must lie in [0, 1], got {v}")
        if self.initial_state not in ("steady", "vacuum"):
            raise ConfigError(
                f"state.initial: expected 'steady' or 'vacuum', got {self.initial_state!r}"
            )
        if self.t_max is not None and self.t_max <= 0:
            raise ConfigError(f"grid.t_max: must be positive, got {self.t_max}")
        if self.points < 2:
            raise ConfigError(f"grid.points: must be >= 2, got {self.points}")
        for name, v in (
            ("tolerances.quadrature", self.tol_quadrature),
            ("tolerances.oracle", self.tol_oracle),
        ):
            if not 0 < v <= 1e-2:
                raise ConfigError(f"{name}: must lie in (0, 1e-2], got {v}")
        return self

    # -- construction -------------------------------------------------

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.optionxform = str  # keys are case-sensitive ("L" stays "L")
        try:
            parser.read_string(path.read_text(encoding="utf-8"))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cfg = cls(source=str(path))

        def fetch(section, key, convert, attr):
            if parser.has_option(section, key):
                raw = parser.get(section, key).strip()
                if raw == "":
                    return
                try:
                    setattr(cfg, attr, convert(raw))
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: bad value {raw!r} ({exc})") from exc

        fetch("model", "kind", str, "model_kind")
        fetch("model", "L", int, "L")
        fetch("model", "V", float, "V")
        fetch("model", "J", float, "J")
        fetch("model", "h_file", str, "h_file")
        fetch("baths", "gamma1", float, "gamma1")
        fetch("baths", "gammaL", float, "gammaL")
        fetch("baths", "f1", float, "f1")
        fetch("baths", "fL", float, "fL")
        fetch("state", "initial", str, "initial_state")
        fetch("grid", "t_max", float, "t_max")
        fetch("grid", "points", int, "points")
        fetch("tolerances", "quadrature", float, "tol_quadrature")
        fetch("tolerances", "oracle", float, "tol_oracle")
        fetch("output", "dir", str, "out_dir")

        known = {
            "model": {"kind", "L", "V", "J", "h_file"},
            "baths": {"gamma1", "gammaL", "f1", "fL"},
            "state": {"initial"},
            "grid": {"t_max", "points"},
            "tolerances": {"quadrature", "oracle"},
            "output": {"dir"},
        }
        for section in parser.sections():
            if section not in known:
                raise ConfigError(f"unknown config section [{section}]")
            for key in parser.options(section):
                if key not in known[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
        return cfg.validate()

    # -- realization ---------------------------------------------------

    def hamiltonian(self) -> np.ndarray:
        if self.model_kind == "tight_binding":
            return build_tight_binding(self.L, self.V, self.J)
        base = Path(self.source).parent if self.source not in ("", "<defaults>") else Path(".")
        path = Path(self.h_file)
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"model.h_file: file not found: {path}")
        raw = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
        if raw.shape[1] != 2 * raw.shape[0]:
            raise ConfigError(
                f"model.h_file: expected {raw.shape[0]} rows of {2 * raw.shape[0]} "
                f"values (real,imag pairs), got shape {raw.shape}"
            )
        return raw[:, 0::2] + 1j * raw[:, 1::2]

    def chain_spec(self) -> ChainSpec:
        h = self.hamiltonian()
        if self.model_kind == "custom_h" and h.shape[0] != self.L:
            raise ConfigError(
                f"model.L = {self.L} does not match h_file dimension {h.shape[0]}"
            )
        try:
            return ChainSpec(h=h, gamma1=self.gamma1, gammaL=self.gammaL, f1=self.f1, fL=self.fL)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def initial(self, spec: ChainSpec) -> GaussianState:
        if self.initial_state == "vacuum":
            return vacuum_state(spec.L)
        try:
            return steady_state(spec)
        except ValueError as exc:
            # e.g. a decoupled bath: a config-level problem, not a numerical one
            raise ConfigError(f"state.initial = steady: {exc}") from exc

    def resolved_items(self) -> list[tuple[str, str]]:
        """Flat (key, value) pairs of the fully-resolved config, for provenance.

        The output directory is omitted: it does not affect the computed
        data, and embedding it would break byte-identity across runs that
        only differ in where results land.
        """
        d = asdict(self)
        d.pop("source")
        d.pop("out_dir")
        return [(k, repr(v) if v is None else str(v)) for k, v in sorted(d.items())]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        parser["model"] = {
            "kind": self.model_kind,
            "L": str(self.L),
            "V": str(self.V),
            "J": str(self.J),
        }
        if self.h_file:
            parser["model"]["h_file"] = self.h_file
        parser["baths"] = {
            "gamma1": str(self.gamma1),
            "gammaL": str(self.gammaL),
            "f1": str(self.f1),
            "fL": str(self.fL),
        }
        parser["state"] = {"initial": self.initial_state}
        parser["grid"] = {"points": str(self.points)}
        if self.t_max is not None:
            parser["grid"]["t_max"] = str(self.t_max)
        parser["tolerances"] = {
            "quadrature": str(self.tol_quadrature),
            "oracle": str(self.tol_oracle),
        }
        parser["output"] = {"dir": self.out_dir}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()
