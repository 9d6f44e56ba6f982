"""
Cross-module invariants evaluated on small meshes.

Each check returns ``(ok, detail)``; :func:`run_checks` runs them all and is
what ``ocpbounds verify`` reports.
"""

import numpy as np

from . import algorithms as alg
from . import ocp_core as core
from .fem import FeFunction
from .mesh import unit_square_mesh
from .ocp_core import AdmissibleSet, Discretization
from .problems import ReferenceSolver


def random_state(space, rng):
    c = rng.standard_normal(space.n_dofs)
    c[space.dirichlet_mask] = 0.0
    return FeFunction(space, c)


def random_control(disc, rng, scale=3.0):
    """Random DG1 control inside the admissible set of ``disc.problem``."""
    v = FeFunction(disc.control_space, scale * rng.standard_normal(disc.control_space.n_dofs))
    return core.project(v, disc.problem.admissible)


def random_flux(space, rng):
    return FeFunction(space, rng.standard_normal(space.n_dofs))


def check_mikhlin(problem, sizes=(4, 8, 16), samples=20, seed=0):
    """E(z) - E(y_h) = ||grad(z - y_h)||^2 for z in the discrete state space."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in sizes:
        for p_state in (1, 2):
            disc = Discretization(problem, unit_square_mesh(n), p_state, 1)
            v = random_control(disc, rng)
            y = core.solve_state(disc, v)
            K = disc.stiffness
            for _ in range(samples):
                z = random_state(disc.state_space, rng)
                e = z.coefficients - y.coefficients
                lhs = core.energy(disc, z, v) - core.energy(disc, y, v)
                zk = float(z.coefficients @ (K @ z.coefficients))
                dev = abs(lhs - float(e @ (K @ e))) / (1.0 + zk)
                worst = max(worst, dev)
    return worst <= 1e-9, "max scaled deviation {:.3e}".format(worst)


def check_bracket(problem, n=4, seed=1):
    """J_lower(v, y_h) <= J_ref(v) <= J_upper(v, tau, beta) for a few controls."""
    rng = np.random.default_rng(seed)
    mesh = unit_square_mesh(n)
    ref = ReferenceSolver(problem, mesh, levels=2)
    failures = []
    for p in (1, 2):
        disc = Discretization(problem, mesh, p, p)
        controls = [FeFunction(disc.control_space)] + [random_control(disc, rng) for _ in range(3)]
        for i, v in enumerate(controls):
            y = core.solve_state(disc, v)
            lower = core.cost_lower(disc, v, y)
            tau = core.tau_hat(disc, v, 1.0)
            beta = core.beta_hat(disc, v, tau)
            upper = core.cost_upper(disc, v, tau, beta)
            j = ref.cost(v)
            slack = 1e-9 * (1.0 + abs(j))
            if not (lower <= j + slack and j <= upper + slack):
                failures.append("p={} control {}: {:.6g} <= {:.6g} <= {:.6g}".format(
                    p, i, lower, j, upper))
    return not failures, "; ".join(failures) or "all brackets ordered"


def check_minimizers(problem, n=8, competitors=100, seed=2):
    """Closed-form minimizers beat random competitors on their objectives."""
    rng = np.random.default_rng(seed)
    disc = Discretization(problem, unit_square_mesh(n), 1, 1)
    v = random_control(disc, rng)
    q = random_state(disc.state_space, rng)
    tau = random_flux(disc.flux_space, rng)
    beta = 0.7
    bad = {"v_hat_lower": 0, "v_hat_upper": 0, "tau_hat": 0, "beta_hat": 0}

    best = core.cost_lower(disc, core.v_hat_lower_field(disc, q), q)
    best_u = core.cost_upper(disc, core.v_hat_upper_field(disc, tau, beta), tau, beta)
    t_hat = core.tau_hat(disc, v, beta)
    best_t = core.cost_upper(disc, v, t_hat, beta)
    b_hat = core.beta_hat(disc, v, tau)
    best_b = core.cost_upper(disc, v, tau, b_hat)
    for _ in range(competitors):
        w = random_control(disc, rng)
        if core.cost_lower(disc, w, q) < best - 1e-12 * abs(best):
            bad["v_hat_lower"] += 1
        if core.cost_upper(disc, w, tau, beta) < best_u - 1e-12 * abs(best_u):
            bad["v_hat_upper"] += 1
        s = FeFunction(disc.flux_space, t_hat.coefficients
                       + 10.0 ** rng.uniform(-4, 1) * rng.standard_normal(disc.flux_space.n_dofs))
        if core.cost_upper(disc, v, s, beta) < best_t - 1e-12 * abs(best_t):
            bad["tau_hat"] += 1
        b = b_hat * 10.0 ** rng.uniform(-2, 2)
        if core.cost_upper(disc, v, tau, b) < best_b - 1e-12 * abs(best_b):
            bad["beta_hat"] += 1
    return not any(bad.values()), ", ".join("{}={}".format(k, c) for k, c in bad.items())


def fd_errors(disc, v, w, steps=(1e-2, 1e-3, 1e-4)):
    """|FD quotient of J_h + (d, w)| for each step."""
    y = core.solve_state(disc, v)
    d = core.gradient_direction(disc, v, y)
    slope = -core.control_inner(disc, d, w)
    j0 = core.discrete_cost(disc, v)
    out = []
    for t in steps:
        jt = core.discrete_cost(disc, FeFunction(w.space, v.coefficients + t * w.coefficients))
        out.append(abs((jt - j0) / t - slope))
    return np.array(out)


def check_gradient(problem, n=8, directions=5, seed=3):
    """Finite differences of J_h converge to -(d, w) at first order."""
    rng = np.random.default_rng(seed)
    disc = Discretization(problem, unit_square_mesh(n), 1, 1)
    v = random_control(disc, rng)
    worst = np.inf
    for _ in range(directions):
        w = FeFunction(disc.control_space, rng.standard_normal(disc.control_space.n_dofs))
        err = fd_errors(disc, v, w)
        worst = min(worst, np.min(np.log10(err[:-1] / err[1:])))
    return worst >= 0.9, "smallest observed order {:.3f}".format(worst)


def _lumped_norm(disc, c):
    m = np.repeat(disc.mesh.areas / 3.0, 3)
    return np.sqrt(disc.problem.alpha * np.sum(m * c * c))


def check_projection(problem, n=4, pairs=1000, seed=4):
    """Idempotence and non-expansiveness of all projections."""
    rng = np.random.default_rng(seed)
    mesh = unit_square_mesh(n)
    disc = Discretization(problem, mesh, 1, 1)
    W = disc.control_space
    sets = [AdmissibleSet(), AdmissibleSet.box(-3.0, 3.0),
            AdmissibleSet.box(lambda x, y: -1.0 - x, lambda x, y: 0.5 + y),
            AdmissibleSet.l2_ball(1.0)]
    violations = 0
    for s in sets:
        for _ in range(pairs // len(sets)):
            a = FeFunction(W, 5.0 * rng.standard_normal(W.n_dofs))
            b = FeFunction(W, 5.0 * rng.standard_normal(W.n_dofs))
            pa, pb = core.project(a, s), core.project(b, s)
            if not np.array_equal(core.project(pa, s).coefficients, pa.coefficients):
                violations += 1
            lhs = _lumped_norm(disc, pa.coefficients - pb.coefficients)
            rhs = _lumped_norm(disc, a.coefficients - b.coefficients)
            if lhs > rhs + 1e-12:
                violations += 1
    return violations == 0, "{} violations".format(violations)


def check_monotone(problem, n=8, seed=5):
    """Upper bound sweeps and projected-gradient costs never increase."""
    rng = np.random.default_rng(seed)
    disc = Discretization(problem, unit_square_mesh(n), 1, 1)
    bad = 0
    for _ in range(3):
        b = alg.generate_cost_estimates(disc, random_control(disc, rng))
        h = np.asarray(b.upper_history)
        bad += int(np.sum(h[1:] > h[:-1] * (1.0 + 1e-12)))
    trace = alg.projected_gradient(disc, params=alg.PgParams(i_max_pg=5))
    jh = np.array([r.j_h for r in trace.records])
    bad += int(np.sum(jh[1:] > jh[:-1] * (1.0 + 1e-12)))
    return bad == 0, "{} increases".format(bad)


CHECKS = {
    "mikhlin_identity": check_mikhlin,
    "bracket_ordering": check_bracket,
    "minimizer_optimality": check_minimizers,
    "gradient_check": check_gradient,
    "projection_properties": check_projection,
    "monotone_sequences": check_monotone,
}


def run_checks(problem, names=None):
    """Run the named checks (all by default); returns ``{name: (ok, detail)}``."""
    out = {}
    for name in names or CHECKS:
        try:
            out[name] = CHECKS[name](problem)
        except Exception as exc:  # a crash is a failed invariant
            out[name] = (False, "{}: {}".format(type(exc).__name__, exc))
    return out
