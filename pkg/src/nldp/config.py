"""Experiment configuration: JSON schema, overrides, object construction.

The schema (all floats IEEE doubles):

{
  "schema_version": 1,
  "seed": 0,
  "problem": {
    "n": 1, "s": 0.6, "t": 0.5, "p": 2.0, "q": 2.2,
    "Lambda": 1.0, "c_hat": 1.0,
    "kernel": {"type": "gagliardo"},            # | scaled | custom-table
    "coefficient": {"type": "constant", "M": 1.0},
        # | indicator-of-halfspace | checkerboard | holder | custom-table
    "f": {"type": "constant", "value": 0.0}     # | gaussian
  },
  "quadrature": {"rho_near": null, "R_far": null, "tol": 1e-8,
                 "max_depth": 48},
  "solve": {"R": 2.0, "N": 257,
            "exterior": {"tag": "constant", "value": 0.0},
            "tau0": 0.5, "residual_tol": 1e-8, "max_iters": 50000,
            "precondition": "auto", "continuation": null},
  "constants": {"epsilon": null},
  "reglab": {"center": 0.0, "levels": 5},
  "eval": {"points": [0.0]},
  "output_dir": "out"
}

Seen keys are validated; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

import numpy as np

from .errors import ConfigError
from .grid import Exterior, constant_exterior, growth_exterior
from .params import (CoefficientField, Exponents, ProblemParams, SourceTerm,
                     checkerboard_coefficient, constant_coefficient,
                     constant_source, gagliardo_kernel, gaussian_source,
                     halfspace_coefficient, holder_coefficient, scaled_kernel,
                     table_kernel)
from .quadrature import PanelRule, QuadratureSpec
from .solver import SolveConfig

SCHEMA_VERSION = 1

_DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "problem": {
        "n": 1, "s": 0.6, "t": 0.5, "p": 2.0, "q": 2.2,
        "Lambda": 1.0, "c_hat": 1.0,
        "kernel": {"type": "gagliardo"},
        "coefficient": {"type": "constant", "M": 1.0},
        "f": {"type": "constant", "value": 0.0},
    },
    "quadrature": {"rho_near": None, "R_far": None, "tol": 1e-8,
                   "max_depth": 48},
    "solve": {"R": 2.0, "N": 257,
              "exterior": {"tag": "constant", "value": 0.0},
              "tau0": 0.5, "residual_tol": 1e-8, "max_iters": 50_000,
              "precondition": "auto", "continuation": None},
    "constants": {"epsilon": None},
    "reglab": {"center": 0.0, "levels": 5},
    "eval": {"points": [0.0]},
    "output_dir": "out",
}


# Polymorphic sub-objects validated by their builders, not the schema walk.
_FREE_FORM = {"problem.kernel", "problem.coefficient", "problem.f",
              "solve.exterior"}


def _merge(base: dict, extra: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if (path + k) in _FREE_FORM and isinstance(v, dict):
            merged = copy.deepcopy(base[k])
            merged.update(v)
            out[k] = merged
        elif isinstance(v, dict) and isinstance(base[k], dict):
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def load_config(path: str | None, overrides: list[str] | None = None) -> dict:
    """Read a config file, apply --set overrides, fill defaults."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as ex:
            raise ConfigError(f"config file not found: {path}") from ex
        except json.JSONDecodeError as ex:
            raise ConfigError(f"config is not valid JSON: {ex}") from ex
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {raw.get('schema_version')!r}")
    cfg = _merge(_DEFAULTS, raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = val
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config path {key!r}")
            node = node[part]
        if parts[-1] not in node and ".".join(parts[:-1]) not in _FREE_FORM:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = parsed
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def build_problem(cfg: dict) -> ProblemParams:
    pc = cfg["problem"]
    n = int(pc["n"])
    e = Exponents(n=n, s=float(pc["s"]), t=float(pc["t"]),
                  p=float(pc["p"]), q=float(pc["q"]))
    lam = float(pc["Lambda"])
    kspec = pc["kernel"]
    ktype = kspec.get("type", "gagliardo")
    if ktype == "gagliardo":
        if lam != 1.0:
            raise ConfigError("gagliardo kernel has Lambda = 1")
        ksp = gagliardo_kernel(n, e.s, e.p)
        ktq = gagliardo_kernel(n, e.t, e.q)
    elif ktype == "scaled":
        ksp = scaled_kernel(n, e.s, e.p, lam)
        ktq = scaled_kernel(n, e.t, e.q, lam)
    elif ktype == "custom-table":
        radii = np.asarray(kspec["radii"], dtype=float)
        factors = np.asarray(kspec["factors"], dtype=float)
        ksp = table_kernel(n, e.s, e.p, lam, radii, factors)
        ktq = table_kernel(n, e.t, e.q, lam, radii, factors)
    else:
        raise ConfigError(f"unknown kernel type {ktype!r}")

    cc = pc["coefficient"]
    M = float(cc.get("M", 1.0))
    ctype = cc.get("type", "constant")
    if ctype == "constant":
        coeff = constant_coefficient(n, M)
    elif ctype == "indicator-of-halfspace":
        coeff = halfspace_coefficient(n, M)
    elif ctype == "checkerboard":
        coeff = checkerboard_coefficient(n, M, cell=float(cc.get("cell", 0.5)))
    elif ctype == "holder":
        coeff = holder_coefficient(n, M, alpha=float(cc.get("alpha", 0.5)))
    elif ctype == "custom-table":
        xs = np.asarray(cc["xs"], dtype=float)
        vals = np.clip(np.asarray(cc["values"], dtype=float), 0.0, M)

        def ev(x, y, _xs=xs, _vals=vals):
            x1 = np.asarray(x, dtype=float)
            if n == 2:
                x1 = x1[..., 0]
            out = np.interp(x1, _xs, _vals)
            yr = np.abs(np.asarray(y, dtype=float)) if n == 1 \
                else np.sqrt(np.sum(np.asarray(y, dtype=float) ** 2, axis=-1))
            return np.broadcast_to(out, np.broadcast_shapes(out.shape, yr.shape)).copy()

        coeff = CoefficientField(n=n, bound=M, eval=ev, tag="custom-table",
                                 depends_on_offset=False)
    else:
        raise ConfigError(f"unknown coefficient type {ctype!r}")

    fc = pc["f"]
    ftype = fc.get("type", "constant")
    if ftype == "constant":
        f = constant_source(float(fc.get("value", 0.0)))
    elif ftype == "gaussian":
        f = gaussian_source(float(fc.get("amplitude", 1.0)),
                            width=float(fc.get("width", 1.0)))
    else:
        raise ConfigError(f"unknown source type {ftype!r}")
    if "sup" in fc and fc["sup"] is not None:
        f = SourceTerm(eval=f.eval, sup=float(fc["sup"]), tag=f.tag)

    return ProblemParams(exponents=e, Ksp=ksp, Ktq=ktq, a=coeff,
                         c_hat=float(pc["c_hat"]), f=f)


def build_quadrature(cfg: dict) -> QuadratureSpec:
    qc = cfg["quadrature"]
    return QuadratureSpec(
        rho_near=None if qc["rho_near"] is None else float(qc["rho_near"]),
        R_far=None if qc["R_far"] is None else float(qc["R_far"]),
        tol=float(qc["tol"]),
        rule=PanelRule(max_depth=int(qc["max_depth"])))


def build_exterior(spec: dict) -> Exterior:
    tag = spec.get("tag", "constant")
    if tag == "constant":
        return constant_exterior(float(spec.get("value", 0.0)))
    if tag == "growth":
        return growth_exterior(eta=float(spec["eta"]),
                               amp=float(spec.get("amp", 2.0)),
                               scale=float(spec.get("scale", 2.0)),
                               offset=float(spec.get("offset", -1.0)))
    raise ConfigError(f"unknown exterior tag {tag!r} in config")


def build_solve_config(cfg: dict) -> SolveConfig:
    sc = cfg["solve"]
    cont = sc["continuation"]
    if cont is not None:
        cont = tuple((float(p), float(q)) for p, q in cont)
    return SolveConfig(
        R=float(sc["R"]), N=int(sc["N"]),
        exterior=build_exterior(sc["exterior"]),
        tau0=float(sc["tau0"]), residual_tol=float(sc["residual_tol"]),
        max_iters=int(sc["max_iters"]), continuation=cont,
        precondition=str(sc["precondition"]),
        quadrature=build_quadrature(cfg))
