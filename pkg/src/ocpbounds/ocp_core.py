"""
Cost bounds for the Dirichlet problem with distributed control.

State equation ``-Laplace(y) = f + v`` in the unit square, ``y = 0`` on the
boundary, cost ``J(v) = ||grad(y(v) - y_d)||^2 + alpha ||v - u_d||^2``.
Everything here is evaluated by quadrature against the closed-form data held
in :class:`ProblemData`; no quantity depends on the exact state ``y(v)``.

Notation used throughout:

* ``E(z) = ||grad z||^2 - 2 (f + v, z)`` -- energy of the state equation
* ``J_lower(v, q) = E(y_d) - E(q) + alpha ||v - u_d||^2 <= J(v)``
* ``J_upper(v, tau, beta) = (1 + beta) ||tau - grad y_d||^2
  + (1 + beta) / beta * c^2 ||div tau + f + v||^2 + alpha ||v - u_d||^2 >= J(v)``
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import FeFunction, QpField

FRIEDRICHS_UNIT_SQUARE = 1.0 / (np.sqrt(2.0) * np.pi)

BETA_MIN = 1e-8
BETA_MAX = 1e8
BALL_RTOL = 4 * np.finfo(float).eps


class InvalidControlError(ValueError):
    pass


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------

def _as_callable(value):
    if callable(value):
        return value
    c = float(value)
    return lambda x, y: np.full(np.shape(x), c)


@dataclass(frozen=True)
class AdmissibleSet:
    """
    Control constraints: ``unconstrained``, ``box`` or ``l2_ball``.

    For discrete (DG1) controls the projection is taken in the nodal
    quadrature inner product ``sum_T |T|/3 sum_i v_i w_i``. Box constraints are
    then the nodal clamp and the ball is a radial scaling; both are exact
    projections in that inner product, and the discrete sets are contained
    in their continuous counterparts.
    """

    kind: str = "unconstrained"
    psi_minus: object = None
    psi_plus: object = None
    radius: float = None

    def __post_init__(self):
        if self.kind not in ("unconstrained", "box", "l2_ball"):
            raise ValueError("unknown admissible set kind {!r}".format(self.kind))
        if self.kind == "box" and (self.psi_minus is None or self.psi_plus is None):
            raise ValueError("box constraints need psi_minus and psi_plus")
        if self.kind == "l2_ball" and not (self.radius is not None and self.radius > 0):
            raise ValueError("l2_ball needs a positive radius")

    @classmethod
    def box(cls, psi_minus, psi_plus):
        return cls("box", psi_minus=psi_minus, psi_plus=psi_plus)

    @classmethod
    def l2_ball(cls, radius):
        return cls("l2_ball", radius=float(radius))

    def bounds_at(self, x, y):
        lo = _as_callable(self.psi_minus)(x, y)
        hi = _as_callable(self.psi_plus)(x, y)
        if np.any(lo > hi):
            raise ValueError("psi_minus exceeds psi_plus")
        return lo, hi


def control_nodes(space):
    """Coordinates (n_dofs, 2) of the DG1 nodes, triangle-major."""
    m = space.mesh
    return m.vertices[m.triangles].reshape(-1, 2)


def nodal_norm(v):
    """Norm of a DG1 function in the nodal quadrature inner product."""
    c = v.coefficients.reshape(-1, 3)
    return float(np.sqrt(np.sum(v.mesh.areas[:, None] / 3.0 * c * c)))


def project(x, admissible):
    """Projection of a DG1 control onto the discrete admissible set."""
    if admissible.kind == "unconstrained":
        return x.copy()
    if admissible.kind == "box":
        nodes = control_nodes(x.space)
        lo, hi = admissible.bounds_at(nodes[:, 0], nodes[:, 1])
        return FeFunction(x.space, np.minimum(hi, np.maximum(lo, x.coefficients)))
    nrm = nodal_norm(x)
    # the relative slack keeps the projection idempotent under rounding
    if nrm > admissible.radius * (1.0 + BALL_RTOL):
        return FeFunction(x.space, x.coefficients * (admissible.radius / nrm))
    return x.copy()


def project_field(vals, mesh, degree, admissible):
    """Exact L2 projection of pointwise values at the quadrature points."""
    if admissible.kind == "unconstrained":
        return vals
    if admissible.kind == "box":
        x, _ = mesh.quadrature_points(degree)
        lo, hi = admissible.bounds_at(x[..., 0], x[..., 1])
        return np.minimum(hi, np.maximum(lo, vals))
    _, w = mesh.quadrature_points(degree)
    nrm = np.sqrt(np.sum(w * vals * vals))
    if nrm > admissible.radius:
        return vals * (admissible.radius / nrm)
    return vals


def is_admissible(v, admissible, tol=1e-10):
    if admissible.kind == "unconstrained":
        return True
    if admissible.kind == "box":
        nodes = control_nodes(v.space)
        lo, hi = admissible.bounds_at(nodes[:, 0], nodes[:, 1])
        c = v.coefficients
        return bool(np.all(c >= lo - tol) and np.all(c <= hi + tol))
    return nodal_norm(v) <= admissible.radius * (1.0 + max(tol, BALL_RTOL))


@dataclass
class ProblemData:
    """
    Data of the optimal control problem.

    ``f`` and ``u_d`` are callables ``(x, y) -> values``; ``y_d`` is an
    :class:`~ocpbounds.fem.AnalyticField` (its gradient is needed). ``c_omega``
    is the Friedrichs constant of the unit square unless a larger value is
    given.
    """

    f: object
    y_d: fem.AnalyticField
    u_d: object
    alpha: float
    c_omega: float = FRIEDRICHS_UNIT_SQUARE
    admissible: AdmissibleSet = field(default_factory=AdmissibleSet)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.c_omega > 0:
            raise ValueError("c_omega must be positive")
        if self.c_omega < FRIEDRICHS_UNIT_SQUARE * (1.0 - 1e-14):
            raise ValueError(
                "c_omega={} is below the Friedrichs constant of the unit square "
                "({}); the upper bound would not be guaranteed".format(
                    self.c_omega, FRIEDRICHS_UNIT_SQUARE))
        self.f = _as_callable(self.f)
        self.u_d = _as_callable(self.u_d)


@dataclass
class CostBounds:
    j_lower_v: float
    j_upper_v: float
    j_lower_u: float
    beta_final: float
    iterations_used: int
    upper_history: list = field(default_factory=list, repr=False)
    state: FeFunction = field(default=None, repr=False)
    flux: FeFunction = field(default=None, repr=False)


@dataclass
class ErrBounds:
    err_sq_lower: float
    err_sq_upper: float


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

class Discretization:
    """
    Spaces, operators and data integrals for one problem on one mesh.

    Controls live in DG1, states in Lagrange ``p_state`` with zero boundary
    values, fluxes in Raviart-Thomas ``p_flux``. Data integrals use the rule
    of degree ``degree`` on every triangle.
    """

    def __init__(self, problem, mesh, p_state=1, p_flux=1, degree=12):
        self.problem = problem
        self.mesh = mesh
        self.degree = degree
        self.control_space = fem.build_space(mesh, fem.DISCONTINUOUS, 1)
        self.state_space = fem.build_space(mesh, fem.LAGRANGE, p_state)
        self.flux_space = fem.build_space(mesh, fem.RAVIART_THOMAS, p_flux)

    @property
    def weights(self):
        return self.mesh.quadrature_points(self.degree)[1]

    @property
    def points(self):
        return self.mesh.quadrature_points(self.degree)[0]

    def inner(self, a, b):
        """L2 inner product of two value arrays at the quadrature points."""
        if a.ndim == 3:
            return float(np.sum(self.weights[..., None] * a * b))
        return float(np.sum(self.weights * a * b))

    def sq(self, a):
        return self.inner(a, a)

    # -- data at quadrature points ------------------------------------------

    @cached_property
    def f_values(self):
        x = self.points
        return np.asarray(self.problem.f(x[..., 0], x[..., 1]), dtype=float)

    @cached_property
    def u_d_values(self):
        x = self.points
        return np.asarray(self.problem.u_d(x[..., 0], x[..., 1]), dtype=float) \
            + np.zeros(x.shape[:2])

    @cached_property
    def y_d_values(self):
        x = self.points
        return np.asarray(self.problem.y_d(x[..., 0], x[..., 1]), dtype=float)

    @cached_property
    def y_d_grads(self):
        return fem.field_grads(self.problem.y_d, self.mesh, self.degree)

    # -- operators ------------------------------------------------------------

    @cached_property
    def stiffness(self):
        return fem.assemble_stiffness(self.state_space)

    @cached_property
    def state_solver(self):
        K = fem.apply_dirichlet(self.stiffness, self.state_space.dirichlet_mask)
        return fem.SpdSolver(K)

    @cached_property
    def state_control_mass(self):
        return fem.assemble_mixed_mass(self.state_space, self.control_space)

    @cached_property
    def control_mass(self):
        return fem.assemble_mass(self.control_space)

    @cached_property
    def rt_forms(self):
        return fem.assemble_rt_forms(self.flux_space, self.control_space)

    @cached_property
    def f_load(self):
        return fem.assemble_load(self.state_space, self.f_values_field, self.degree)

    @cached_property
    def f_values_field(self):
        return QpField(self.mesh, self.degree, self.f_values)

    @cached_property
    def flux_rhs_y_d(self):
        return fem.assemble_vector_load(self.flux_space, self.y_d_grads, self.degree)

    @cached_property
    def flux_rhs_f(self):
        return fem.assemble_div_load(self.flux_space, self.f_values_field, self.degree)

    @cached_property
    def y_d_energy(self):
        return self.sq(self.y_d_grads)

    @cached_property
    def f_y_d(self):
        return self.inner(self.f_values, self.y_d_values)

    @cached_property
    def y_d_moments(self):
        return fem.assemble_load(self.control_space, QpField(self.mesh, self.degree, self.y_d_values), self.degree)

    @cached_property
    def u_d_moments(self):
        return fem.assemble_load(self.control_space, QpField(self.mesh, self.degree, self.u_d_values), self.degree)

    @cached_property
    def u_d_sq(self):
        return self.sq(self.u_d_values)

    # -- control helpers --------------------------------------------------------

    def control_values(self, v):
        if isinstance(v, QpField):
            if v.mesh is not self.mesh or v.degree != self.degree:
                raise ValueError("control field lives on a different rule")
            return v.values
        W = v.space
        if W.mesh is not self.mesh or (W.family, W.order) != (fem.DISCONTINUOUS, 1):
            raise ValueError("control is not in the control space of this discretization")
        return v.values(self.mesh, self.degree)

    def state_values(self, z):
        """Values and gradients of a state-like function at the quadrature points."""
        if isinstance(z, FeFunction):
            return z.values(self.mesh, self.degree), z.grads(self.mesh, self.degree)
        if z is self.problem.y_d:
            return self.y_d_values, self.y_d_grads
        return (fem.field_values(z, self.mesh, self.degree),
                fem.field_grads(z, self.mesh, self.degree))

    def state_load(self, v):
        """Vector (f + v, phi_i) over the state basis."""
        if isinstance(v, FeFunction):
            return self.f_load + self.state_control_mass @ v.coefficients
        return self.f_load + fem.assemble_load(self.state_space, v, self.degree)

    def div_load(self, v):
        """Vector (f + v, div xi_i) over the flux basis."""
        if isinstance(v, FeFunction):
            return self.flux_rhs_f + self.rt_forms["div_to_scalar"] @ v.coefficients
        return self.flux_rhs_f + fem.assemble_div_load(self.flux_space, v, self.degree)

    def l2_project_control(self, vals):
        """L2 projection onto DG1 of a field given at the quadrature points."""
        tab = self.control_space.tabulate(self.degree)["values"][0]
        rhs = (self.weights * vals) @ tab  # (nt, 3)
        areas = self.mesh.areas[:, None]
        coef = 3.0 / areas * (4.0 * rhs - rhs.sum(axis=1, keepdims=True))
        return FeFunction(self.control_space, coef.ravel())

    def control_misfit_sq(self, v):
        d = self.control_values(v) - self.u_d_values
        return self.sq(d)


# ---------------------------------------------------------------------------
# state equation and energy
# ---------------------------------------------------------------------------

def solve_state(disc, v):
    """Galerkin state y_h(v) in the state space."""
    V = disc.state_space
    b = disc.state_load(v)
    b[V.dirichlet_mask] = 0.0
    y = disc.state_solver(b)
    y[V.dirichlet_mask] = 0.0
    return FeFunction(V, y)


def energy(disc, z, v):
    """E(z) = ||grad z||^2 - 2 (f + v, z)."""
    zv, zg = disc.state_values(z)
    load = disc.f_values + disc.control_values(v)
    return disc.sq(zg) - 2.0 * disc.inner(load, zv)


def minorant_sq(disc, z, q, v):
    """E(z) - E(q); a lower bound of ||grad(y(v) - z)||^2 for any q in H^1_0."""
    return energy(disc, z, v) - energy(disc, q, v)


def _check_beta(beta):
    if not beta > 0:
        raise ValueError("beta must be positive, got {!r}".format(beta))


def _residual(disc, tau, v):
    return tau.div(disc.degree) + disc.f_values + disc.control_values(v)


def majorant_sq(disc, z, tau, beta, v):
    """(1 + beta)||tau - grad z||^2 + (1 + beta)/beta c^2 ||div tau + f + v||^2."""
    _check_beta(beta)
    _, zg = disc.state_values(z)
    flux = disc.sq(tau.values(degree=disc.degree) - zg)
    res = disc.sq(_residual(disc, tau, v))
    c2 = disc.problem.c_omega ** 2
    return (1.0 + beta) * flux + (1.0 + beta) / beta * c2 * res


def cost_lower(disc, v, q):
    return minorant_sq(disc, disc.problem.y_d, q, v) + disc.problem.alpha * disc.control_misfit_sq(v)


def cost_upper(disc, v, tau, beta):
    return majorant_sq(disc, disc.problem.y_d, tau, beta, v) \
        + disc.problem.alpha * disc.control_misfit_sq(v)


def discrete_cost(disc, v, state=None):
    """
    J_h(v) = J_lower(v, y_h(v)), the maximum of the lower bound over the state space.

    Uses ``E(y_h) = -(f + v, y_h)`` and precomputed data moments, so that only
    one solve with the factorized stiffness matrix is needed.
    """
    if state is None:
        state = solve_state(disc, v)
    c = v.coefficients
    load = disc.state_load(v)
    e_q = -float(load @ state.coefficients)
    e_yd = disc.y_d_energy - 2.0 * disc.f_y_d - 2.0 * float(disc.y_d_moments @ c)
    misfit = float(c @ (disc.control_mass @ c)) - 2.0 * float(disc.u_d_moments @ c) \
        + disc.u_d_sq
    return e_yd - e_q + disc.problem.alpha * misfit


# ---------------------------------------------------------------------------
# explicit minimizers
# ---------------------------------------------------------------------------

def v_hat_lower_field(disc, q):
    """Exact minimizer of J_lower(., q) over the continuous admissible set."""
    p = disc.problem
    qv, _ = disc.state_values(q)
    vals = disc.u_d_values + (disc.y_d_values - qv) / p.alpha
    vals = project_field(vals, disc.mesh, disc.degree, p.admissible)
    return QpField(disc.mesh, disc.degree, vals)


def v_hat_lower(disc, q):
    """DG1 version of the minimizer: nodal interpolation, then projection."""
    p = disc.problem
    W = disc.control_space
    nodes = control_nodes(W)
    m = disc.mesh
    if isinstance(q, FeFunction):
        qn = q.coefficients[m.triangles].ravel()  # vertex dofs come first
    else:
        qn = q(nodes[:, 0], nodes[:, 1])
    raw = p.u_d(nodes[:, 0], nodes[:, 1]) + (p.y_d(nodes[:, 0], nodes[:, 1]) - qn) / p.alpha
    return project(FeFunction(W, raw), p.admissible)


def _upper_weight(disc, beta):
    _check_beta(beta)
    return (1.0 + beta) / beta * disc.problem.c_omega ** 2


def v_hat_upper_field(disc, tau, beta):
    """
    Exact minimizer of J_upper(., tau, beta) over the continuous admissible set.

    With ``w = (1 + beta) c^2 / beta`` the objective in ``v`` is
    ``w ||v + div tau + f||^2 + alpha ||v - u_d||^2``, minimized by projecting
    ``(alpha u_d - w (div tau + f)) / (w + alpha)``.
    """
    p = disc.problem
    w = _upper_weight(disc, beta)
    g = tau.div(disc.degree) + disc.f_values
    vals = (p.alpha * disc.u_d_values - w * g) / (w + p.alpha)
    vals = project_field(vals, disc.mesh, disc.degree, p.admissible)
    return QpField(disc.mesh, disc.degree, vals)


def _div_at_vertices(tau):
    Q = tau.space
    m = Q.mesh
    nt = m.n_triangles
    tri = np.arange(nt)[:, None]
    bary = np.broadcast_to(np.eye(3), (nt, 3, 3))
    divs = Q.basis_at(tri, bary)["divs"]
    return np.einsum("tkj,tj->tk", divs, tau.coefficients[Q.dof_map]).ravel()


def v_hat_upper(disc, tau, beta):
    """DG1 version of the J_upper minimizer (nodal interpolation, then projection)."""
    p = disc.problem
    W = disc.control_space
    w = _upper_weight(disc, beta)
    nodes = control_nodes(W)
    g = _div_at_vertices(tau) + p.f(nodes[:, 0], nodes[:, 1])
    raw = (p.alpha * p.u_d(nodes[:, 0], nodes[:, 1]) - w * g) / (w + p.alpha)
    return project(FeFunction(W, raw), p.admissible)


def tau_hat(disc, v, beta):
    """
    Minimizer of J_upper(v, ., beta) over the flux space.

    Solves ``beta (tau, xi) + c^2 (div tau, div xi)
    = beta (grad y_d, xi) - c^2 (f + v, div xi)``.
    """
    _check_beta(beta)
    c2 = disc.problem.c_omega ** 2
    forms = disc.rt_forms
    A = beta * forms["mass_rt"] + c2 * forms["divdiv"]
    b = beta * disc.flux_rhs_y_d - c2 * disc.div_load(v)
    return FeFunction(disc.flux_space, fem.solve_spd(A, b))


def beta_hat(disc, v, tau):
    """Minimizer c ||div tau + f + v|| / ||tau - grad y_d|| of J_upper over beta > 0."""
    num = disc.problem.c_omega * np.sqrt(disc.sq(_residual(disc, tau, v)))
    den = np.sqrt(disc.sq(tau.values(degree=disc.degree) - disc.y_d_grads))
    if num == 0.0 and den == 0.0:
        return 1.0
    if den == 0.0:
        return BETA_MAX
    return float(np.clip(num / den, BETA_MIN, BETA_MAX))


def lower_bound_optimal_cost(disc, q):
    """min over the admissible set of J_lower(., q); a guaranteed lower bound of J(u)."""
    return cost_lower(disc, v_hat_lower_field(disc, q), q)


# ---------------------------------------------------------------------------
# derivative and error bounds
# ---------------------------------------------------------------------------

def gradient_direction(disc, v, y_h, metric="l2"):
    """
    Negative gradient of J_h at v, with y_h = y_h(v).

    With ``metric="l2"`` this is ``2 (P(y_d - y_h) + alpha (P u_d - v))``, P the L2
    projection onto DG1, i.e. the representative in the L2 inner product.
    ``metric="lumped"`` gives the representative in the nodal quadrature inner
    product in which the discrete projections are exact; the projected path
    ``P(v + lambda d)`` is then a descent path.
    """
    yv, _ = disc.state_values(y_h)
    p = disc.problem
    vals = disc.y_d_values - yv + p.alpha * disc.u_d_values
    if metric == "l2":
        g = disc.l2_project_control(vals)
        return FeFunction(disc.control_space, 2.0 * (g.coefficients - p.alpha * v.coefficients))
    if metric != "lumped":
        raise ValueError("metric must be 'l2' or 'lumped'")
    r = fem.assemble_load(disc.control_space, QpField(disc.mesh, disc.degree, vals), disc.degree)
    r -= p.alpha * (disc.control_mass @ v.coefficients)
    lumped = np.repeat(disc.mesh.areas / 3.0, 3)
    return FeFunction(disc.control_space, 2.0 * r / lumped)


def control_inner(disc, a, b):
    """L2 inner product of two DG1 controls."""
    return float(a.coefficients @ (disc.control_mass @ b.coefficients))


def err_bounds(j_lower_v, j_upper_v, j_upper_last, j_lower_u_last):
    """
    Two-sided bounds of err^2(v) = J(v) - J(u).

    ``j_upper_last`` bounds J(u) from above and ``j_lower_u_last`` from below.
    """
    return ErrBounds(err_sq_lower=j_lower_v - j_upper_last,
                     err_sq_upper=j_upper_v - j_lower_u_last)
