"""JSON experiment configuration.

A configuration is one JSON document validated against the bundled
schema (unknown keys are rejected) and then checked for dimensional
consistency. Matrices are nested row-major arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .controller import ControllerConfig
from .errors import ConfigurationError
from .model import (ChanceConstraintSpec, Polytope, StageCost, SystemModel,
                    distribution_from_dict)

DEFAULT_CONTROLLER_SEED = 0
DEFAULT_PLANT_SEED = 1
DEFAULT_T = 10_000


def schema() -> dict:
    return json.loads(resources.files("scmpc").joinpath("config_schema.json").read_text())


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    model: SystemModel
    horizon: int
    constraints: tuple
    U: Polytope
    cost: StageCost
    removal: str
    greedy_metric: str
    slack_penalty: float | None
    x0: np.ndarray
    T: int
    controller_seed: int
    plant_seed: int
    output_dir: str | None
    raw: dict

    def controller(self, force: bool = False, seed: int | None = None) -> ControllerConfig:
        return ControllerConfig(
            model=self.model, N=self.horizon, constraints=self.constraints, U=self.U,
            cost=self.cost, removal_algorithm=self.removal, slack_penalty=self.slack_penalty,
            seed=self.controller_seed if seed is None else seed,
            greedy_metric=self.greedy_metric, force=force)


def _matrix(value, name):
    a = np.asarray(value, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigurationError(f"{name} must be a rectangular matrix")
    return a


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate ``doc`` and build the experiment objects."""
    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config invalid at {where}: {exc.message}") from None
    try:
        sysd = doc["system"]
        A = _matrix(sysd["A"], "system.A")
        B = _matrix(sysd["B"], "system.B")
        params = tuple(distribution_from_dict(d) for d in sysd.get("parameters", []))
        noise = tuple(distribution_from_dict(d) for d in sysd.get("noise", []))
        model = SystemModel(A, B, sysd.get("A_terms"), sysd.get("B_terms"), params, noise)
        n, m = model.n, model.m
        specs = []
        for j, c in enumerate(doc["constraints"]):
            poly = Polytope(_matrix(c["H"], f"constraints[{j}].H"), c["h"])
            if poly.dim != n:
                raise ConfigurationError(f"constraints[{j}] has dimension {poly.dim}, expected {n}")
            specs.append(ChanceConstraintSpec(poly, float(c["epsilon"]), c.get("rho1"),
                                              c.get("samples"), int(c.get("removals", 0))))
        U = Polytope(_matrix(doc["inputs"]["H"], "inputs.H"), doc["inputs"]["h"])
        if U.dim != m:
            raise ConfigurationError(f"inputs has dimension {U.dim}, expected {m}")
        cost = StageCost(_matrix(doc["cost"]["Q"], "cost.Q"), _matrix(doc["cost"]["R"], "cost.R"))
        if cost.Q.shape[1] != n or cost.R.shape[1] != m:
            raise ConfigurationError("cost weights do not match the system dimensions")
        x0 = np.asarray(doc["x0"], dtype=np.float64)
        if x0.shape != (n,):
            raise ConfigurationError(f"x0 has length {x0.size}, expected {n}")
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None
    seeds = doc.get("seeds", {})
    return ExperimentConfig(
        model=model, horizon=int(doc["horizon"]), constraints=tuple(specs), U=U, cost=cost,
        removal=doc.get("removal", "greedy"), greedy_metric=doc.get("greedy_metric", "total_cost"),
        slack_penalty=doc.get("slack_penalty"), x0=x0, T=int(doc.get("T", DEFAULT_T)),
        controller_seed=int(seeds.get("controller", DEFAULT_CONTROLLER_SEED)),
        plant_seed=int(seeds.get("plant", DEFAULT_PLANT_SEED)),
        output_dir=doc.get("output_dir"), raw=doc)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON: {exc}") from None
    return parse_config(doc)
