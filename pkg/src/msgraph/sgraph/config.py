"""Default information matrices and solver settings."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError
from .graph import RESIDUAL_DIM, FactorKind

# diagonal entries; rot components come first for the pose factors
DEFAULT_INFORMATION = {
    FactorKind.ODOMETRY: (100.0,) * 6,
    FactorKind.MARKER_OBS: (400.0,) * 6,
    FactorKind.WALL_MARKER: (100.0, 100.0, 400.0),
    FactorKind.CORRIDOR: (25.0,) * 3,
    FactorKind.ROOM: (25.0,) * 3,
    FactorKind.DOORWAY_ROOM: (25.0,) * 3,
}


@dataclass(frozen=True)
class InformationConfig:
    diagonals: dict = field(default_factory=lambda: dict(DEFAULT_INFORMATION))

    def matrix(self, kind: FactorKind) -> np.ndarray:
        return np.diag(np.asarray(self.diagonals[FactorKind(kind)], dtype=np.float64))

    def with_override(self, kind, values) -> InformationConfig:
        kind = FactorKind(kind)
        dim = RESIDUAL_DIM[kind]
        vals = tuple(float(v) for v in np.atleast_1d(values))
        if len(vals) == 1:
            vals = vals * dim
        if len(vals) != dim or not all(v > 0 for v in vals):
            raise ConfigError(f"{kind.value} information needs 1 or {dim} positive values, got {vals}")
        d = dict(self.diagonals)
        d[kind] = vals
        return replace(self, diagonals=d)

    def scaled(self, factor: float) -> InformationConfig:
        return replace(self, diagonals={k: tuple(factor * x for x in v) for k, v in self.diagonals.items()})

    def to_dict(self) -> dict:
        return {k.value: list(v) for k, v in sorted(self.diagonals.items(), key=lambda kv: kv[0].value)}


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 100
    g_tol: float = 1e-8
    f_tol: float = 1e-10
    lambda_init: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 0.5
    lambda_max: float = 1e12
    jacobian: str = "analytic"

    def __post_init__(self):
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.jacobian not in ("analytic", "numeric"):
            raise ConfigError(f"jacobian must be 'analytic' or 'numeric', got {self.jacobian!r}")
