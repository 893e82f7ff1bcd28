from dataclasses import dataclass
from typing import Optional

import numpy as np

from psgheat.errors import ConfigurationError
from psgheat.models.mesh import GridFunction, Mesh
from psgheat.models.random_field import SampleDraw, TruncatedNormalSpec


@dataclass(frozen=True)
class BoxConstraint:
    """Pointwise bounds u_a <= u <= u_b"""

    u_a: GridFunction
    u_b: GridFunction

    def __post_init__(self):
        if self.u_a.mesh_tag != self.u_b.mesh_tag:
            raise ConfigurationError("box bounds live on different meshes")
        if np.any(self.u_a.values > self.u_b.values):
            raise ConfigurationError("box lower bound exceeds upper bound at some node")

    @classmethod
    def constant(cls, mesh, lower=-1.0, upper=1.0):
        return cls(mesh.constant(lower), mesh.constant(upper))

    def contains(self, u, atol=0.0):
        return bool(
            np.all(u.values >= self.u_a.values - atol) and np.all(u.values <= self.u_b.values + atol)
        )

    def to_dict(self):
        return {
            'lower_min': float(self.u_a.values.min()),
            'upper_max': float(self.u_b.values.max()),
        }


@dataclass(frozen=True)
class HeatModelConfig:
    """Data of the random stationary heat control problem"""

    lam: float
    y_d: GridFunction
    box: BoxConstraint
    field_spec: TruncatedNormalSpec
    mesh: Mesh
    e_d: Optional[GridFunction] = None
    kind: str = 'custom'

    def __post_init__(self):
        issues = []
        if self.lam < 0:
            issues.append(f"lambda must be nonnegative, got {self.lam}")
        for name, fn in (('y_D', self.y_d), ('e_D', self.e_d), ('u_a', self.box.u_a), ('u_b', self.box.u_b)):
            if fn is not None and (fn.mesh_tag != self.mesh.tag or len(fn) != self.mesh.node_count):
                issues.append(f"{name} is not defined on {self.mesh.tag}")
        if issues:
            raise ConfigurationError("invalid heat model config", issues=issues)

    def to_dict(self):
        return {
            'kind': self.kind,
            'lambda': self.lam,
            'has_e_d': self.e_d is not None,
            'box': self.box.to_dict(),
            'field': self.field_spec.to_dict(),
            'mesh': self.mesh.to_dict(),
        }


@dataclass(frozen=True)
class GradientSample:
    """G(u_n, omega_n) = lambda*u_n - p_n together with the solves behind it"""

    g: GridFunction
    state: GridFunction
    adjoint: GridFunction
    draw: SampleDraw
    per_sample_objective: float

    def with_gradient(self, g):
        return GradientSample(g, self.state, self.adjoint, self.draw, self.per_sample_objective)
