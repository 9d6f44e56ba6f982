"""
Manufactured optimal control problems with known solutions, the unconstrained
optimality system, and reference values used as test oracles.

The manufactured family on the unit square, with ``s_k = sin(k1 pi x) sin(k2 pi y)``
and ``s_m = sin(m1 pi x) sin(m2 pi y)``::

    y_opt = s_k
    y_d   = y_opt + beta * s_m
    u_d   = 0
    u_opt = clamp(beta / alpha * s_m, psi_minus, psi_plus)
    f     = pi^2 (k1^2 + k2^2) s_k - u_opt

so that ``-Laplace(y_opt) = f + u_opt`` and ``u_opt`` satisfies the projection
condition ``u = P(u_d + (y_d - y(u)) / alpha)``.
"""

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import AnalyticField, FeFunction
from .mesh import refine_uniform
from .ocp_core import (AdmissibleSet, ProblemData, _check_beta,
                       FRIEDRICHS_UNIT_SQUARE)


class PrecisionError(RuntimeError):
    pass


def _sines(k1, k2):
    def value(x, y):
        return np.sin(k1 * np.pi * x) * np.sin(k2 * np.pi * y)

    def grad(x, y):
        return (k1 * np.pi * np.cos(k1 * np.pi * x) * np.sin(k2 * np.pi * y),
                k2 * np.pi * np.sin(k1 * np.pi * x) * np.cos(k2 * np.pi * y))

    return value, grad


@dataclass(frozen=True)
class ManufacturedCase:
    """
    Closed-form optimum of a Dirichlet distributed control problem.

    ``psi_minus``/``psi_plus`` may be infinite (unconstrained case).
    """

    k1: int = 1
    k2: int = 1
    m1: int = 2
    m2: int = 1
    beta: float = 0.5
    alpha: float = 0.05
    psi_minus: float = -3.0
    psi_plus: float = 3.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.psi_minus < self.psi_plus:
            raise ValueError("psi_minus must be smaller than psi_plus")
        for name in ("k1", "k2", "m1", "m2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError("{} must be a positive integer".format(name))

    @property
    def unconstrained(self):
        return np.isinf(self.psi_minus) and np.isinf(self.psi_plus)

    def s_k(self, x, y):
        return _sines(self.k1, self.k2)[0](x, y)

    def s_m(self, x, y):
        return _sines(self.m1, self.m2)[0](x, y)

    def y_opt(self, x, y):
        return self.s_k(x, y)

    def u_opt(self, x, y):
        return np.clip(self.beta / self.alpha * self.s_m(x, y),
                       self.psi_minus, self.psi_plus)

    def u_d(self, x, y):
        return np.zeros(np.shape(x))

    def f(self, x, y):
        lam = np.pi ** 2 * (self.k1 ** 2 + self.k2 ** 2)
        return lam * self.s_k(x, y) - self.u_opt(x, y)

    @property
    def y_d(self):
        vk, gk = _sines(self.k1, self.k2)
        vm, gm = _sines(self.m1, self.m2)
        b = self.beta

        def grad(x, y):
            (ax, ay), (bx, by) = gk(x, y), gm(x, y)
            return ax + b * bx, ay + b * by

        return AnalyticField(lambda x, y: vk(x, y) + b * vm(x, y), grad)

    def admissible(self):
        if self.unconstrained:
            return AdmissibleSet()
        return AdmissibleSet.box(self.psi_minus, self.psi_plus)

    def problem(self, c_omega=FRIEDRICHS_UNIT_SQUARE):
        return ProblemData(f=self.f, y_d=self.y_d, u_d=0.0, alpha=self.alpha,
                           c_omega=c_omega, admissible=self.admissible())


def build_case(k1=1, k2=1, m1=2, m2=1, beta=0.5, alpha=0.05,
               psi_minus=-3.0, psi_plus=3.0, unconstrained=False):
    """Manufactured case; ``unconstrained=True`` drops the box."""
    if unconstrained:
        psi_minus, psi_plus = -np.inf, np.inf
    return ManufacturedCase(int(k1), int(k2), int(m1), int(m2), float(beta),
                            float(alpha), float(psi_minus), float(psi_plus))


# ---------------------------------------------------------------------------
# optimal cost
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceValues:
    j_opt: float
    grad_term: float
    control_term: float
    resolution: int


def _midpoint_sq(func, resolution, chunk=250):
    h = 1.0 / resolution
    s = (np.arange(resolution) + 0.5) * h
    total = 0.0
    for start in range(0, resolution, chunk):
        X, Y = np.meshgrid(s, s[start:start + chunk], indexing="xy")
        total += np.sum(func(X, Y) ** 2)
    return total * h * h


def reference_cost(case, resolution=2000, rtol=1e-6):
    """
    J(u) of a manufactured case.

    The state misfit ``||grad(beta s_m)||^2 = beta^2 pi^2 (m1^2 + m2^2) / 4`` is
    exact; ``alpha ||u_opt||^2`` uses the tensor midpoint rule, checked against
    twice the resolution.
    """
    grad_term = case.beta ** 2 * np.pi ** 2 * (case.m1 ** 2 + case.m2 ** 2) / 4.0
    c1 = _midpoint_sq(case.u_opt, resolution)
    c2 = _midpoint_sq(case.u_opt, 2 * resolution)
    if abs(c2 - c1) > rtol * max(abs(c2), 1e-300):
        raise PrecisionError(
            "midpoint control integral not converged: {} vs {}".format(c1, c2))
    control_term = case.alpha * c2
    return ReferenceValues(grad_term + control_term, grad_term, control_term, 2 * resolution)


# ---------------------------------------------------------------------------
# fine-mesh reference cost J(v)
# ---------------------------------------------------------------------------

class ReferenceSolver:
    """
    Fine-mesh evaluation of J(v) for controls given on a coarse mesh.

    The state is computed in P2 on ``levels`` uniform refinements of the coarse
    mesh. The returned value ``J_lower(v, y_ref)`` is the exact cost minus
    ``||grad(y(v) - y_ref)||^2``, so it approaches J(v) from below.
    """

    def __init__(self, problem, coarse_mesh, levels=1, order=2, degree=12):
        self.problem = problem
        self.coarse = coarse_mesh
        mesh = coarse_mesh
        for _ in range(levels):
            mesh = refine_uniform(mesh)
        self.mesh = mesh
        self.degree = degree
        self.V = fem.build_space(mesh, fem.LAGRANGE, order)
        self.W = fem.build_space(mesh, fem.DISCONTINUOUS, 1)
        x, self.w = mesh.quadrature_points(degree)
        self.f = problem.f(x[..., 0], x[..., 1])
        self.y_d = problem.y_d(x[..., 0], x[..., 1])
        self.u_d = problem.u_d(x[..., 0], x[..., 1]) + np.zeros_like(self.w)
        gd = fem.field_grads(problem.y_d, mesh, degree)
        self.y_d_energy = float(np.sum(self.w[..., None] * gd * gd))
        K = fem.assemble_stiffness(self.V)
        self.solver = fem.SpdSolver(fem.apply_dirichlet(K, self.V.dirichlet_mask))
        self.mixed = fem.assemble_mixed_mass(self.V, self.W)
        self.f_load = fem.assemble_load(self.V, fem.QpField(mesh, degree, self.f), degree)
        self._anc = mesh.ancestor_of(coarse_mesh)
        p = mesh.vertices[mesh.triangles]
        self._bary = coarse_mesh.barycentric(self._anc[:, None], p)  # (nt, 3, 3)

    def transfer(self, v):
        """Coarse DG1 control as a DG1 function on the fine mesh (exact)."""
        c = v.coefficients.reshape(-1, 3)[self._anc]
        return FeFunction(self.W, np.einsum("tkj,tj->tk", self._bary, c).ravel())

    def state(self, v_fine, with_f=True):
        b = self.mixed @ v_fine.coefficients
        if with_f:
            b = b + self.f_load
        b[self.V.dirichlet_mask] = 0.0
        y = self.solver(b)
        y[self.V.dirichlet_mask] = 0.0
        return FeFunction(self.V, y), b

    def cost(self, v):
        """Reference value of J(v) for a coarse DG1 control v."""
        vf = self.transfer(v)
        y, b = self.state(vf)
        vv = vf.values(degree=self.degree)
        energy_y = float(b @ y.coefficients)
        cross = float(np.sum(self.w * (self.f + vv) * self.y_d))
        misfit = float(np.sum(self.w * (vv - self.u_d) ** 2))
        return self.y_d_energy - 2.0 * cross + energy_y + self.problem.alpha * misfit


def reference_cost_of_control(problem, v, levels=(1, 2), degree=12):
    """Fine-mesh J(v) and a Richardson-type error estimate ``|J_2 - J_1| * 4/3``."""
    vals = [ReferenceSolver(problem, v.mesh, lv, degree=degree).cost(v) for lv in levels]
    return vals[-1], abs(vals[-1] - vals[-2]) * 4.0 / 3.0


def err_sq_reference(case, v, solver):
    """
    err^2(v) = ||grad(y(v) - y(u))||^2 + alpha ||v - u||^2 + <J'(u), v - u>.

    ``solver`` is a :class:`ReferenceSolver`; the first term uses its fine
    state for the load ``v - u`` and the rest are fine-mesh quadratures against
    the closed-form optimum.
    """
    m = solver.mesh
    x, w = m.quadrature_points(solver.degree)
    vf = solver.transfer(v)
    vv = vf.values(degree=solver.degree)
    u = case.u_opt(x[..., 0], x[..., 1])
    diff = vv - u
    b = solver.mixed @ vf.coefficients - fem.assemble_load(
        solver.V, fem.QpField(m, solver.degree, u), solver.degree)
    b[solver.V.dirichlet_mask] = 0.0
    e = solver.solver(b)
    e[solver.V.dirichlet_mask] = 0.0
    state_term = float(b @ e)
    adjoint = -case.beta * case.s_m(x[..., 0], x[..., 1]) + case.alpha * u
    return state_term + case.alpha * float(np.sum(w * diff * diff)) \
        + 2.0 * float(np.sum(w * adjoint * diff))


# ---------------------------------------------------------------------------
# unconstrained optimality system
# ---------------------------------------------------------------------------

def solve_unconstrained_system(disc):
    """
    Optimal state and control of the problem without control constraints.

    Solves ``(grad y, grad z) + (y, z) / alpha = (f + y_d / alpha + u_d, z)`` on the
    state space and recovers ``u = u_d + (y_d - y) / alpha`` by L2 projection
    onto the control space. Returns ``(y, u)``.
    """
    p = disc.problem
    if p.admissible.kind != "unconstrained":
        raise ValueError("the linear optimality system needs an unconstrained problem")
    V = disc.state_space
    A = disc.stiffness + fem.assemble_mass(V) / p.alpha
    rhs_vals = disc.f_values + disc.y_d_values / p.alpha + disc.u_d_values
    b = fem.assemble_load(V, fem.QpField(disc.mesh, disc.degree, rhs_vals), disc.degree)
    b[V.dirichlet_mask] = 0.0
    y = fem.solve_spd(fem.apply_dirichlet(A, V.dirichlet_mask), b)
    y[V.dirichlet_mask] = 0.0
    y = FeFunction(V, y)
    yv = y.values(disc.mesh, disc.degree)
    u = disc.l2_project_control(disc.u_d_values + (disc.y_d_values - yv) / p.alpha)
    return y, u


def nu_star(problem, beta):
    """Weight minimizing the split residual terms for a given beta."""
    _check_beta(beta)
    w = (1.0 + beta) / beta * problem.c_omega ** 2
    return problem.alpha / (problem.alpha + w)


def majorant_unconstrained(disc, z, tau, beta, nu=None):
    """
    Upper bound of ``||grad(y - z)||^2 + ||y - z||^2 / alpha`` for the optimal
    state y of the unconstrained problem.

    ``nu`` in [0, 1] splits the residual between the Friedrichs term and the
    reaction term; ``None`` selects the minimizing constant.
    """
    p = disc.problem
    _check_beta(beta)
    if nu is None:
        nu = nu_star(p, beta)
    if not 0.0 <= nu <= 1.0:
        raise ValueError("nu must lie in [0, 1], got {!r}".format(nu))
    zv, zg = disc.state_values(z)
    R = tau.div(disc.degree) - zv / p.alpha + disc.f_values \
        + disc.y_d_values / p.alpha + disc.u_d_values
    flux = disc.sq(zg - tau.values(degree=disc.degree))
    r2 = disc.sq(R)
    c2 = p.c_omega ** 2
    return (1.0 + beta) * flux + (1.0 + beta) / beta * c2 * nu * nu * r2 \
        + p.alpha * (1.0 - nu) ** 2 * r2
