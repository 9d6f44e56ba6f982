"""
Bound generation for a fixed control and a projected gradient method that
reports guaranteed cost bounds at every iterate.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ocp_core as core
from .fem import FeFunction


@dataclass(frozen=True)
class AlgOneParams:
    """Sweep limit and relative decrease threshold for the majorant minimization."""

    i_max: int = 20
    eps: float = 1e-4

    def __post_init__(self):
        if int(self.i_max) != self.i_max or self.i_max < 1:
            raise ValueError("i_max must be a positive integer")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class PgParams:
    i_max_pg: int = 10
    eps_pg: float = 1e-6
    lambda_max: float = 1.0
    golden_tol: float = 1e-4
    max_doublings: int = 10
    metric: str = "lumped"
    alg1: AlgOneParams = field(default_factory=AlgOneParams)

    def __post_init__(self):
        if int(self.i_max_pg) != self.i_max_pg or self.i_max_pg < 1:
            raise ValueError("i_max_pg must be a positive integer")
        for name in ("eps_pg", "lambda_max", "golden_tol"):
            if not getattr(self, name) > 0:
                raise ValueError("{} must be positive".format(name))
        if self.metric not in ("l2", "lumped"):
            raise ValueError("metric must be 'l2' or 'lumped'")
        if self.max_doublings < 0:
            raise ValueError("max_doublings must be nonnegative")


class AlgorithmError(RuntimeError):
    """A sub-step failed; ``trace`` holds the records completed so far."""

    def __init__(self, cause, trace):
        super().__init__("projected gradient aborted at iteration {}: {}".format(
            len(trace.records), cause))
        self.cause = cause
        self.trace = trace


def generate_cost_estimates(disc, v, params=AlgOneParams()):
    """
    Guaranteed bounds ``J_lower_h(v) <= J(v) <= J_upper_h(v)`` and ``J_lower_h(u) <= J(u)``.

    The state y_h(v) gives the lower bound of J(v) and, through the pointwise
    minimizer of ``J_lower(., y_h)`` over the admissible set, the lower bound of
    the optimal cost. The upper bound alternates flux and beta minimization,
    starting from beta = 1, until the relative decrease of the upper bound
    drops below ``params.eps``.

    Raises
    ------
    InvalidControlError
        If v lies outside the admissible set by more than 1e-10.
    """
    p = disc.problem
    if not core.is_admissible(v, p.admissible, tol=1e-10):
        raise core.InvalidControlError("control violates the admissible set")

    y_h = core.solve_state(disc, v)
    j_lower_v = core.cost_lower(disc, v, y_h)
    j_lower_u = core.lower_bound_optimal_cost(disc, y_h)

    beta = 1.0
    history = []
    tau = core.tau_hat(disc, v, beta)
    previous = core.cost_upper(disc, v, tau, beta)
    history.append(previous)
    sweeps = 0
    while True:
        sweeps += 1
        beta = core.beta_hat(disc, v, tau)
        current = core.cost_upper(disc, v, tau, beta)
        history.append(current)
        if sweeps >= params.i_max or (previous - current) / current < params.eps:
            break
        previous = current
        tau = core.tau_hat(disc, v, beta)
        history.append(core.cost_upper(disc, v, tau, beta))

    return core.CostBounds(j_lower_v=j_lower_v, j_upper_v=current, j_lower_u=j_lower_u,
                           beta_final=beta, iterations_used=sweeps,
                           upper_history=history, state=y_h, flux=tau)


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(phi, lambda_max, tol=1e-4):
    """
    Minimizer of a unimodal function on [0, lambda_max].

    The final bracket is narrower than ``tol * lambda_max``; its midpoint is
    returned.
    """
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    a, b = 0.0, float(lambda_max)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol * lambda_max:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = phi(d)
    return 0.5 * (a + b)


def update_rule(v, d, s, admissible):
    """v + s d projected back onto the admissible set."""
    return core.project(FeFunction(v.space, v.coefficients + s * d.coefficients), admissible)


@dataclass
class PgRecord:
    k: int
    j_lower_v: float
    j_upper_v: float
    j_lower_u: float
    step: float = None
    change: float = None
    err_sq_lower: float = None
    err_sq_upper: float = None

    @property
    def j_h(self):
        """Discrete cost J_h(v^k); it coincides with the lower bound."""
        return self.j_lower_v


@dataclass
class PgTrace:
    records: list = field(default_factory=list)
    controls: list = field(default_factory=list, repr=False)
    bounds: list = field(default_factory=list, repr=False)

    @property
    def j_lower_u(self):
        return self.records[-1].j_lower_u if self.records else None

    @property
    def final_control(self):
        return self.controls[-1] if self.controls else None

    def attach_err_bounds(self):
        """Bounds of J(v^k) - J(u) from the last iterate's upper bound and lower bound of J(u)."""
        if not self.records:
            return
        last = self.records[-1]
        for r in self.records:
            e = core.err_bounds(r.j_lower_v, r.j_upper_v, last.j_upper_v, last.j_lower_u)
            r.err_sq_lower, r.err_sq_upper = e.err_sq_lower, e.err_sq_upper


def _line_search(disc, v, d, params):
    adm = disc.problem.admissible
    cache = {}

    def phi(lam):
        if lam not in cache:
            cache[lam] = core.discrete_cost(disc, update_rule(v, d, lam, adm))
        return cache[lam]

    lam_max = params.lambda_max
    for i in range(params.max_doublings + 1):
        s = golden_section(phi, lam_max, params.golden_tol)
        if s < lam_max * (1.0 - 2.0 * params.golden_tol) or i == params.max_doublings:
            break
        lam_max *= 2.0
    if phi(s) > phi(0.0):
        s = 0.0
    return s


def projected_gradient(disc, v0=None, params=PgParams(), callback=None):
    """
    Projected gradient descent on J_h with cost bounds at every iterate.

    Each iteration k computes the bounds of :func:`generate_cost_estimates` at
    v^k, the descent direction d^k, a golden-section step s^k on
    ``lambda -> J_h(P(v^k + lambda d^k))`` and ``v^{k+1} = P(v^k + s^k d^k)``.
    The run stops after ``i_max_pg`` records or once the relative change of the
    control falls below ``eps_pg``. Afterwards every record gets bounds of
    ``J(v^k) - J(u)`` built from the last record.

    Raises
    ------
    AlgorithmError
        Wraps any failure; its ``trace`` holds the completed records.
    """
    p = disc.problem
    W = disc.control_space
    v = FeFunction(W) if v0 is None else v0
    trace = PgTrace()
    change = None
    try:
        for k in range(params.i_max_pg):
            b = generate_cost_estimates(disc, v, params.alg1)
            rec = PgRecord(k, b.j_lower_v, b.j_upper_v, b.j_lower_u, change=change)
            trace.records.append(rec)
            trace.controls.append(v)
            trace.bounds.append(b)
            if callback is not None:
                callback(rec)
            if change is not None and change < params.eps_pg:
                break
            if k == params.i_max_pg - 1:
                break
            d = core.gradient_direction(disc, v, b.state, params.metric)
            rec.step = _line_search(disc, v, d, params)
            v_new = update_rule(v, d, rec.step, p.admissible)
            nrm = np.sqrt(core.control_inner(disc, v, v))
            diff = FeFunction(W, v_new.coefficients - v.coefficients)
            change = np.sqrt(core.control_inner(disc, diff, diff)) / nrm if nrm > 0 else None
            v = v_new
    except Exception as exc:
        trace.attach_err_bounds()
        raise AlgorithmError(exc, trace) from exc
    trace.attach_err_bounds()
    return trace
