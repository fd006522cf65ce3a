"""Run configuration and design files (JSON).

Floats in design files are written with 17 significant digits, which
round-trips every IEEE-754 double exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .lqr import LqrResult
from .model import LinearSystem, Polytope
from .offline import (
    DEFAULT_CHECK_TOL,
    DEFAULT_ETA,
    Certificate,
    DesignArtifacts,
    design,
)

DESIGN_FORMAT = "mssmpc-design/1"


class ConfigError(ValueError):
    """Configuration that fails schema or dimension checks."""


_matrix = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_vector = {"type": "array", "minItems": 1, "items": {"type": "number"}}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["system", "constraints", "weights", "design"],
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "required": ["A", "B", "Gamma_w"],
            "additionalProperties": False,
            "properties": {"A": _matrix, "B": _matrix, "Gamma_w": _matrix},
        },
        "constraints": {
            "type": "object",
            "required": ["Hx", "hx", "Hu", "hu"],
            "additionalProperties": False,
            "properties": {"Hx": _matrix, "hx": _vector, "Hu": _matrix, "hu": _vector},
        },
        "weights": {
            "type": "object",
            "required": ["Q", "R"],
            "additionalProperties": False,
            "properties": {"Q": _matrix, "R": _matrix},
        },
        "design": {
            "type": "object",
            "required": ["eps", "N"],
            "additionalProperties": False,
            "properties": {
                "lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "N": {"type": "integer", "minimum": 1},
                "family": {"enum": ["generic", "gaussian"]},
                "W_x": _matrix,
                "W_u": _matrix,
                "check_tol": {"type": "number", "minimum": 0},
                "grid_size": {"type": "integer", "minimum": 10},
                "strategy": {"enum": ["A", "B", "C"]},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "episodes": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "x0": {"type": "array", "items": _vector},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
    },
}


def _rect(M, name):
    rows = {len(r) for r in M}
    if len(rows) != 1:
        raise ConfigError(f"{name} is not rectangular")
    return np.array(M, dtype=float)


@dataclass(frozen=True)
class SimSettings:
    horizon: int = 10
    episodes: int = 100
    seed: int = 0
    x0: tuple = ()
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    sys: LinearSystem
    X: Polytope
    U: Polytope
    Q: np.ndarray
    R: np.ndarray
    eps: float
    N: int
    eta: float = DEFAULT_ETA
    family: str = "gaussian"
    lam: float | None = None
    W_x: np.ndarray | None = None
    W_u: np.ndarray | None = None
    check_tol: float = DEFAULT_CHECK_TOL
    grid_size: int = 200
    strategy: str = "A"
    sim: SimSettings = field(default_factory=SimSettings)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        s, c, w, d = raw["system"], raw["constraints"], raw["weights"], raw["design"]
        try:
            sys = LinearSystem(_rect(s["A"], "A"), _rect(s["B"], "B"),
                               _rect(s["Gamma_w"], "Gamma_w"))
            X = Polytope(_rect(c["Hx"], "Hx"), np.array(c["hx"], dtype=float))
            U = Polytope(_rect(c["Hu"], "Hu"), np.array(c["hu"], dtype=float))
            Q = _rect(w["Q"], "Q")
            R = _rect(w["R"], "R")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if X.dim != sys.n or U.dim != sys.m:
            raise ConfigError(f"constraint dimensions ({X.dim}, {U.dim}) do not match "
                              f"plant ({sys.n}, {sys.m})")
        if Q.shape != (sys.n, sys.n) or R.shape != (sys.m, sys.m):
            raise ConfigError(f"weights Q{Q.shape} R{R.shape} do not match plant")
        W_x = _rect(d["W_x"], "W_x") if "W_x" in d else None
        W_u = _rect(d["W_u"], "W_u") if "W_u" in d else None
        if W_x is not None and W_x.shape != (sys.n, sys.n):
            raise ConfigError(f"W_x has shape {W_x.shape}, expected {(sys.n, sys.n)}")
        if W_u is not None and W_u.shape != (sys.m, sys.m):
            raise ConfigError(f"W_u has shape {W_u.shape}, expected {(sys.m, sys.m)}")
        if W_x is not None and "lambda" not in d:
            raise ConfigError("design.W_x requires design.lambda")
        sm = raw.get("sim", {})
        x0 = tuple(tuple(float(v) for v in p) for p in sm.get("x0", []))
        if any(len(p) != sys.n for p in x0):
            raise ConfigError(f"every sim.x0 entry needs {sys.n} components")
        sim = SimSettings(horizon=sm.get("horizon", 10), episodes=sm.get("episodes", 100),
                          seed=sm.get("seed", 0), x0=x0, workers=sm.get("workers", 1))
        return cls(sys=sys, X=X, U=U, Q=Q, R=R, eps=float(d["eps"]), N=int(d["N"]),
                   eta=float(d.get("eta", DEFAULT_ETA)), family=d.get("family", "gaussian"),
                   lam=d.get("lambda"), W_x=W_x, W_u=W_u,
                   check_tol=float(d.get("check_tol", DEFAULT_CHECK_TOL)),
                   grid_size=int(d.get("grid_size", 200)), strategy=d.get("strategy", "A"),
                   sim=sim)

    def build_design(self) -> DesignArtifacts:
        return design(self.sys, self.X, self.U, self.Q, self.R, eps=self.eps, N=self.N,
                      eta=self.eta, family=self.family, lam=self.lam, W_x=self.W_x,
                      W_u=self.W_u, check_tol=self.check_tol, grid_size=self.grid_size)


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return RunConfig.from_dict(raw)


def benchmark_config_dict() -> dict:
    """Raw benchmark configuration bundled with the package (double integrator)."""
    return json.loads(resources.files("mssmpc").joinpath("data/benchmark.json").read_text())


def benchmark_config() -> RunConfig:
    return RunConfig.from_dict(benchmark_config_dict())


def benchmark_design() -> DesignArtifacts:
    return benchmark_config().build_design()


# design files -------------------------------------------------------------


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return json.dumps(bool(obj) if isinstance(obj, np.bool_) else obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    x = float(obj)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x} cannot be stored")
    text = "%.17g" % x
    if "e" not in text and "." not in text:
        text += ".0"
    return text


def _m(M) -> list:
    return np.asarray(M, dtype=float).tolist()


def design_to_dict(art: DesignArtifacts) -> dict:
    cert = None
    if art.certificate is not None:
        cert = {"mu": art.certificate.mu, "beta": art.certificate.beta}
    return {
        "format": DESIGN_FORMAT,
        "system": {"A": _m(art.sys.A), "B": _m(art.sys.B), "Gamma_w": _m(art.sys.Gamma_w)},
        "constraints": {"Hx": _m(art.X.H), "hx": _m(art.X.h), "Hu": _m(art.U.H),
                        "hu": _m(art.U.h)},
        "weights": {"Q": _m(art.Q), "R": _m(art.R)},
        "lqr": {"K": _m(art.lqr.K), "P": _m(art.lqr.P), "A_K": _m(art.lqr.A_K),
                "iterations": art.lqr.iterations},
        "W_x": _m(art.W_x),
        "W_u": _m(art.W_u),
        "lambda": art.lam,
        "rho": art.rho,
        "r_x": art.r_x,
        "r_u": art.r_u,
        "r_xu": art.r_xu,
        "eps": art.eps,
        "eta": art.eta,
        "N": art.N,
        "family": art.family,
        "check_tol": art.check_tol,
        "certificate": cert,
        "validation": [{"check": c.name, "margin": c.margin, "passed": c.passed,
                        "applicable": c.applicable} for c in art.report.checks],
    }


def design_from_dict(d: dict) -> DesignArtifacts:
    if d.get("format") != DESIGN_FORMAT:
        raise ConfigError(f"not a design file (format {d.get('format')!r})")
    try:
        sys = LinearSystem(np.array(d["system"]["A"]), np.array(d["system"]["B"]),
                           np.array(d["system"]["Gamma_w"]))
        c = d["constraints"]
        lq = d["lqr"]
        cert = d.get("certificate")
        return DesignArtifacts(
            sys=sys,
            X=Polytope(np.array(c["Hx"]), np.array(c["hx"])),
            U=Polytope(np.array(c["Hu"]), np.array(c["hu"])),
            Q=np.array(d["weights"]["Q"], dtype=float),
            R=np.array(d["weights"]["R"], dtype=float),
            lqr=LqrResult(K=np.array(lq["K"], dtype=float), P=np.array(lq["P"], dtype=float),
                          A_K=np.array(lq["A_K"], dtype=float), iterations=int(lq["iterations"])),
            W_x=np.array(d["W_x"], dtype=float),
            W_u=np.array(d["W_u"], dtype=float),
            lam=float(d["lambda"]),
            rho=float(d["rho"]),
            r_x=float(d["r_x"]),
            r_u=float(d["r_u"]),
            eps=float(d["eps"]),
            N=int(d["N"]),
            eta=float(d["eta"]),
            family=d["family"],
            certificate=None if cert is None else Certificate(float(cert["mu"]),
                                                              float(cert["beta"])),
            check_tol=float(d["check_tol"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed design file: {exc}") from None


def save_design(art: DesignArtifacts, path) -> Path:
    path = Path(path)
    path.write_text(dumps(design_to_dict(art)) + "\n")
    return path


def load_design(path) -> DesignArtifacts:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read design {path}: {exc}") from None
    return design_from_dict(raw)


def designs_equal(a: DesignArtifacts, b: DesignArtifacts) -> bool:
    """Bitwise equality of every stored field."""
    da, db = design_to_dict(a), design_to_dict(b)
    return dumps(da) == dumps(db) and all(
        np.array_equal(x, y) for x, y in [
            (a.W_x, b.W_x), (a.W_u, b.W_u), (a.lqr.K, b.lqr.K), (a.lqr.P, b.lqr.P),
            (a.sys.A, b.sys.A), (a.sys.B, b.sys.B), (a.sys.Gamma_w, b.sys.Gamma_w),
        ]
    )
