"""Optimal control of a stationary heat source with random conductivity.

    min  1/2 E||y(omega) - y_D||^2 + lambda/2 ||u||^2,   u_a <= u <= u_b
    s.t. -div(a(omega) grad y) = u + e_D,  y = 0 on the boundary

Gradients are M-Riesz representatives (nodal vectors G with
dJ[h] = G^T M h), so G = lambda*u - p holds exactly at the discrete level.
"""
import logging
import math

import numpy as np

from psgheat.core.fem import P1Space
from psgheat.core.sampling import field_from_draw, inverse_moments
from psgheat.errors import ConfigurationError
from psgheat.models.heat import BoxConstraint, GradientSample, HeatModelConfig
from psgheat.models.mesh import ElementField
from psgheat.models.random_field import TruncatedNormalSpec

logger = logging.getLogger(__name__)

SIGN_TOLERANCE = 1e-12


def project_box(u, box):
    """Nodewise clamp onto [u_a, u_b]"""
    if u.mesh_tag != box.u_a.mesh_tag or len(u) != len(box.u_a):
        raise ConfigurationError(f"{u!r} does not match the box bounds on {box.u_a.mesh_tag}")
    return u.with_values(np.clip(u.values, box.u_a.values, box.u_b.values))


def tolerant_sign(values):
    values = np.asarray(values, dtype=float)
    return np.where(np.abs(values) < SIGN_TOLERANCE, 0.0, np.sign(values))


class HeatModel:
    def __init__(self, config, space=None):
        self.config = config
        self.space = space or P1Space(config.mesh)
        self.mesh = config.mesh
        self.lam = config.lam
        self._y_d_load = self.space.load(config.y_d)
        self._y_d_sq = self.space.l2_inner(config.y_d, config.y_d)
        self._e_d_load = self.space.load(config.e_d) if config.e_d is not None else None
        self._unit_adjoint_target = None
        self._moments = None

    def __repr__(self):
        return f"<HeatModel {self.config.kind} lambda={self.lam} on {self.mesh.tag}>"

    @property
    def moments(self):
        if self._moments is None:
            self._moments = inverse_moments(self.config.field_spec)
        return self._moments

    def _source_load(self, u):
        u.check_mesh(self.mesh)
        load = self.space.load(u)
        if self._e_d_load is not None:
            load = load + self._e_d_load
        return load

    def _conductivity(self, a):
        if isinstance(a, ElementField):
            return a.validate_positive()
        return ElementField.constant(self.mesh, float(a)).validate_positive()

    def solve_state(self, u, a):
        """y with a grad y . grad v = (u + e_D) v for all v"""
        K = self.space.stiffness_for(self._conductivity(a))
        return self.space.solve(K, self._source_load(u))

    def solve_adjoint(self, y, a):
        """p with a grad v . grad p = (y_D - y) v for all v"""
        y.check_mesh(self.mesh)
        K = self.space.stiffness_for(self._conductivity(a))
        return self.space.solve(K, self._y_d_load - self.space.load(y))

    def tracking(self, y, u):
        misfit = y - self.config.y_d
        return 0.5 * self.space.l2_inner(misfit, misfit) + 0.5 * self.lam * self.space.l2_inner(u, u)

    def objective(self, u, a, state=None):
        """J(u, omega) = 1/2 ||y - y_D||^2 + lambda/2 ||u||^2"""
        y = state if state is not None else self.solve_state(u, a)
        return self.tracking(y, u)

    def stochastic_gradient(self, u, draw, conductivity=None):
        """G(u, omega) = lambda*u - p(omega) together with the state and adjoint"""
        a = conductivity if conductivity is not None else field_from_draw(draw, self.mesh)
        y = self.solve_state(u, a)
        p = self.solve_adjoint(y, a)
        g = self.lam * u - p
        return GradientSample(g, y, p, draw, self.tracking(y, u))

    # Spatially constant conductivity: y(a) = w / a with w the unit-conductivity state
    def unit_state(self, u):
        return self.space.solve(self.space.stiffness, self._source_load(u))

    def objective_from_unit_state(self, u, w, a_value):
        return self.tracking(w / a_value, u)

    def _unit_adjoint(self, load):
        return self.space.solve(self.space.stiffness, load)

    def expected_objective(self, u, moments=None, unit_state=None):
        """j(u) = E[J(u, omega)] in closed form through E[1/a] and E[1/a^2]"""
        e1, e2 = moments or self.moments
        w = unit_state if unit_state is not None else self.unit_state(u)
        w_sq = self.space.l2_inner(w, w)
        cross = float(w.values @ self._y_d_load)
        return 0.5 * (e2 * w_sq - 2.0 * e1 * cross + self._y_d_sq) + 0.5 * self.lam * self.space.l2_inner(u, u)

    def expected_gradient(self, u, moments=None):
        e1, e2 = moments or self.moments
        if self._unit_adjoint_target is None:
            self._unit_adjoint_target = self._unit_adjoint(self._y_d_load)
        w = self.unit_state(u)
        p_w = self._unit_adjoint(self.space.load(w))
        p = e1 * self._unit_adjoint_target - e2 * p_w
        return self.lam * u - p

    def expected_lipschitz(self, moments=None, iterations=50):
        """Largest eigenvalue of h -> lambda*h + E[1/a^2] K^-1 M K^-1 M h (power iteration)"""
        _, e2 = moments or self.moments
        h = self.mesh.constant(1.0)
        h = h.with_values(np.where(self.mesh.boundary_mask, 0.0, 1.0))
        estimate = 0.0
        for _ in range(iterations):
            h = h / self.space.l2_norm(h)
            w = self.space.solve(self.space.stiffness, self.space.load(h))
            hh = self.space.solve(self.space.stiffness, self.space.load(w))
            estimate = self.space.l2_inner(h, hh)
            h = hh
        return self.lam + e2 * estimate

    def expected_optimum(self, u0=None, moments=None, max_iter=2000, tol=1e-12):
        """Minimizer of the discrete expected problem by projected gradient with step 1/L"""
        moments = moments or self.moments
        L = 1.05 * self.expected_lipschitz(moments)
        step = 1.0 / L
        u = project_box(u0 if u0 is not None else self.mesh.zeros(), self.config.box)
        for k in range(1, max_iter + 1):
            u_next = project_box(u - step * self.expected_gradient(u, moments), self.config.box)
            change = self.space.l2_norm(u_next - u)
            u = u_next
            if change <= tol * max(1.0, self.space.l2_norm(u)):
                logger.debug(f"expected optimum converged after {k} iterations (L={L:.4g})")
                return u, {'iterations': k, 'converged': True, 'L': L, 'last_change': change}
        logger.warning(f"expected optimum stopped at the cap of {max_iter} iterations, last change {change:.3e}")
        return u, {'iterations': max_iter, 'converged': False, 'L': L, 'last_change': change}


def initial_control(name, mesh):
    if name == 'zero':
        return mesh.zeros()
    if name == 'sine_bump':
        return mesh.interpolate(lambda x, y: 1.5 * np.sin(math.pi * x) * np.sin(math.pi * y))
    if isinstance(name, str) and name.startswith('constant:'):
        return mesh.constant(float(name.split(':', 1)[1]))
    raise ConfigurationError(f"unknown initial control {name!r}")


def _s1(x, y):
    return np.sin(math.pi * x) * np.sin(math.pi * y)


def _s2(x, y):
    return np.sin(2 * math.pi * x) * np.sin(2 * math.pi * y)


def analytic_case(kind, mesh, lam=None, a_bar=2.0, box=(-1.0, 1.0), field_spec=None):
    """Model problems whose deterministic optimum u_bar is known in closed form.

    strongly_convex: p_bar = -s2, u_bar = proj(p_bar / lambda).
    convex (lambda = 0): y_bar = s1, p_bar = s2 / (4 pi^2 a_bar), u_bar = sign(p_bar).
    Here s1 = sin(pi x1) sin(pi x2) and s2 = sin(2 pi x1) sin(2 pi x2).
    """
    field_spec = field_spec or TruncatedNormalSpec()
    bounds = BoxConstraint.constant(mesh, *box)
    pi2 = math.pi ** 2

    if kind == 'strongly_convex':
        lam = 2.0 if lam is None else lam
        if lam <= 0:
            raise ConfigurationError(f"the strongly convex case needs lambda > 0, got {lam}")
        target = 8 * pi2 * a_bar + 1.0 / (8 * pi2 * a_bar * lam)
        y_d = mesh.interpolate(lambda x, y: -target * _s2(x, y))
        u_bar = project_box(mesh.interpolate(lambda x, y: -_s2(x, y) / lam), bounds)
        config = HeatModelConfig(lam, y_d, bounds, field_spec, mesh, kind=kind)
    elif kind == 'convex':
        lam = 0.0 if lam is None else lam
        y_d = mesh.interpolate(lambda x, y: _s1(x, y) + 2 * _s2(x, y))
        e_d = mesh.interpolate(lambda x, y: 2 * pi2 * a_bar * _s1(x, y) - tolerant_sign(_s2(x, y)))
        u_bar = project_box(mesh.interpolate(lambda x, y: tolerant_sign(_s2(x, y))), bounds)
        config = HeatModelConfig(lam, y_d, bounds, field_spec, mesh, e_d=e_d, kind=kind)
    else:
        raise ConfigurationError(f"unknown analytic case {kind!r}")

    logger.debug(f"built {kind} case on {mesh.tag} (lambda={lam}, a_bar={a_bar})")
    return config, u_bar


def exact_state(kind, a_bar=2.0, lam=2.0):
    """Continuum optimal state y_bar as a function of (x1, x2)"""
    if kind == 'strongly_convex':
        return lambda x, y: -_s2(x, y) / (8 * math.pi ** 2 * a_bar * lam)
    if kind == 'convex':
        return _s1
    raise ConfigurationError(f"unknown analytic case {kind!r}")


def exact_adjoint(kind, a_bar=2.0):
    if kind == 'strongly_convex':
        return lambda x, y: -_s2(x, y)
    if kind == 'convex':
        return lambda x, y: _s2(x, y) / (4 * math.pi ** 2 * a_bar)
    raise ConfigurationError(f"unknown analytic case {kind!r}")
