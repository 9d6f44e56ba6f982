import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from ocpbounds import fem
from ocpbounds import ocp_core as core
from ocpbounds.checks import random_control, random_flux, random_state
from ocpbounds.fem import AnalyticField, FeFunction
from ocpbounds.mesh import unit_square_mesh
from ocpbounds.ocp_core import (BETA_MAX, BETA_MIN, FRIEDRICHS_UNIT_SQUARE, AdmissibleSet,
                                Discretization, ProblemData)
from ocpbounds.problems import ReferenceSolver, build_case, reference_cost


def sine_field(k1=1, k2=1):
    def f(x, y):
        return np.sin(k1 * np.pi * x) * np.sin(k2 * np.pi * y)

    def g(x, y):
        return (k1 * np.pi * np.cos(k1 * np.pi * x) * np.sin(k2 * np.pi * y),
                k2 * np.pi * np.sin(k1 * np.pi * x) * np.cos(k2 * np.pi * y))

    return AnalyticField(f, g)


ZERO_FIELD = AnalyticField(lambda x, y: np.zeros(np.shape(x)),
                           lambda x, y: (np.zeros(np.shape(x)), np.zeros(np.shape(x))))

# z = x^2 + y^2 has grad z = (2x, 2y), an RT1 field with divergence 4
QUADRATIC = AnalyticField(lambda x, y: x * x + y * y, lambda x, y: (2 * x, 2 * y))


@pytest.fixture(scope="module")
def case():
    return build_case()


@pytest.fixture(scope="module")
def disc8(case):
    return Discretization(case.problem(), unit_square_mesh(8), 1, 1)


@pytest.fixture(scope="module")
def disc8_p2(case):
    return Discretization(case.problem(), unit_square_mesh(8), 2, 2)


def control_of(disc, func):
    return fem.interpolate(disc.control_space, func)


class TestProblemData:
    def test_defaults(self):
        p = ProblemData(f=0.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0)
        assert p.c_omega == pytest.approx(1 / (np.sqrt(2) * np.pi))
        assert p.admissible.kind == "unconstrained"

    @pytest.mark.parametrize("alpha", [0.0, -1.0])
    def test_alpha_positive(self, alpha):
        with pytest.raises(ValueError):
            ProblemData(f=0.0, y_d=ZERO_FIELD, u_d=0.0, alpha=alpha)

    def test_c_omega_not_below_friedrichs(self):
        with pytest.raises(ValueError):
            ProblemData(f=0.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0, c_omega=0.2)
        ProblemData(f=0.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0, c_omega=0.5)

    def test_admissible_validation(self):
        with pytest.raises(ValueError):
            AdmissibleSet.l2_ball(0.0)
        with pytest.raises(ValueError):
            AdmissibleSet("box")
        with pytest.raises(ValueError):
            AdmissibleSet("simplex")
        with pytest.raises(ValueError):
            AdmissibleSet.box(1.0, -1.0).bounds_at(np.zeros(2), np.zeros(2))


class TestState:
    def test_zero_load(self):
        p = ProblemData(f=0.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(4), 2, 1)
        y = core.solve_state(d, FeFunction(d.control_space))
        assert np.all(y.coefficients == 0.0)

    def test_sine_energy(self):
        p = ProblemData(f=lambda x, y: 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y),
                        y_d=ZERO_FIELD, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(50), 2, 1)
        y = core.solve_state(d, FeFunction(d.control_space))
        energy = y.coefficients @ d.stiffness @ y.coefficients
        assert abs(energy - np.pi ** 2 / 2) < 1e-3 * np.pi ** 2 / 2

    def test_manufactured_state(self, case):
        d = Discretization(case.problem(), unit_square_mesh(16), 2, 1)
        y = core.solve_state(d, control_of(d, case.u_opt))
        yv = y.values(degree=d.degree)
        x = d.points
        err = np.sqrt(d.sq(yv - case.y_opt(x[..., 0], x[..., 1])))
        assert err < 5e-3

    def test_dirichlet_zero(self, disc8_p2, case):
        y = core.solve_state(disc8_p2, control_of(disc8_p2, case.u_opt))
        assert np.all(y.coefficients[disc8_p2.state_space.dirichlet_mask] == 0.0)


class TestEnergy:
    def test_zero(self, disc8):
        z = FeFunction(disc8.state_space)
        assert core.energy(disc8, z, FeFunction(disc8.control_space)) == 0.0

    def test_discrete_minimizer(self, disc8_p2):
        rng = np.random.default_rng(0)
        v = random_control(disc8_p2, rng)
        y = core.solve_state(disc8_p2, v)
        e = core.energy(disc8_p2, y, v)
        for _ in range(10):
            w = random_state(disc8_p2.state_space, rng)
            assert e <= core.energy(disc8_p2, w, v)
        grad_sq = y.coefficients @ disc8_p2.stiffness @ y.coefficients
        assert abs(e + grad_sq) <= 1e-9 * grad_sq


class TestMinorant:
    def test_same_argument(self, disc8):
        rng = np.random.default_rng(1)
        z = random_state(disc8.state_space, rng)
        assert core.minorant_sq(disc8, z, z, random_control(disc8, rng)) == 0.0

    @pytest.mark.parametrize("p_state", [1, 2])
    def test_mikhlin(self, case, p_state):
        d = Discretization(case.problem(), unit_square_mesh(6), p_state, 1)
        rng = np.random.default_rng(2)
        v = random_control(d, rng)
        y = core.solve_state(d, v)
        for _ in range(5):
            z = random_state(d.state_space, rng)
            e = z.coefficients - y.coefficients
            expected = e @ d.stiffness @ e
            assert abs(core.minorant_sq(d, z, y, v) - expected) <= 1e-9 * (1 + expected)

    def test_below_fine_error(self, case):
        rng = np.random.default_rng(3)
        coarse = unit_square_mesh(4)
        d = Discretization(case.problem(), coarse, 1, 1)
        ref = ReferenceSolver(case.problem(), coarse, levels=2)
        fine = Discretization(case.problem(), ref.mesh, 2, 1)
        v = random_control(d, rng)
        v_fine = FeFunction(fine.control_space, ref.transfer(v).coefficients)
        y_ref = core.solve_state(fine, v_fine)
        for _ in range(5):
            z = random_state(d.state_space, rng)
            q = random_state(d.state_space, rng)
            true = core.minorant_sq(fine, z, y_ref, v_fine)  # lower estimate of |||y - z|||^2
            assert core.minorant_sq(d, z, q, v) <= true + 1e-8 * true


class TestMajorant:
    def test_zero_residual(self):
        p = ProblemData(f=-4.0, y_d=QUADRATIC, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(3), 1, 1)
        tau = fem.interpolate(d.flux_space, lambda x, y: (2 * x, 2 * y))
        v = FeFunction(d.control_space)
        for beta in (1e-3, 1.0, 10.0):
            assert abs(core.majorant_sq(d, QUADRATIC, tau, beta, v)) < 1e-20
            assert core.cost_upper(d, v, tau, beta) == pytest.approx(0.0, abs=1e-20)

    def test_nonpositive_beta(self, disc8):
        tau = FeFunction(disc8.flux_space)
        v = FeFunction(disc8.control_space)
        for beta in (0.0, -1.0):
            with pytest.raises(ValueError):
                core.majorant_sq(disc8, disc8.problem.y_d, tau, beta, v)

    def test_above_minorant(self, disc8):
        rng = np.random.default_rng(4)
        for _ in range(20):
            v = random_control(disc8, rng)
            z = random_state(disc8.state_space, rng)
            q = random_state(disc8.state_space, rng)
            tau = random_flux(disc8.flux_space, rng)
            beta = 10.0 ** rng.uniform(-3, 3)
            assert core.majorant_sq(disc8, z, tau, beta, v) >= core.minorant_sq(disc8, z, q, v)

    def test_efficiency(self, case):
        coarse = unit_square_mesh(8)
        d = Discretization(case.problem(), coarse, 1, 1)
        ref = ReferenceSolver(case.problem(), coarse, levels=2)
        fine = Discretization(case.problem(), ref.mesh, 2, 1)
        v = control_of(d, case.u_opt)
        y = core.solve_state(d, v)
        tau = core.tau_hat(d, v, 1.0)
        for _ in range(5):
            beta = core.beta_hat(d, v, tau)
            tau = core.tau_hat(d, v, beta)
        # the flux and beta above target y_d; here we minimize for z = y_h
        v_fine = FeFunction(fine.control_space, ref.transfer(v).coefficients)
        true = core.minorant_sq(fine, y, core.solve_state(fine, v_fine), v_fine)
        tau_y = self._flux_for(d, v, y)
        maj = min(core.majorant_sq(d, y, tau_y, b, v) for b in np.logspace(-3, 1, 41))
        assert true <= maj <= 10.0 * true

    @staticmethod
    def _flux_for(d, v, y):
        # minimizer of the majorant of z = y over RT for beta = 1 via the same SPD system
        c2 = d.problem.c_omega ** 2
        forms = d.rt_forms
        gy = y.grads(degree=d.degree)
        b = fem.assemble_vector_load(d.flux_space, gy, d.degree) - c2 * d.div_load(v)
        A = forms["mass_rt"] + c2 * forms["divdiv"]
        return FeFunction(d.flux_space, fem.solve_spd(A, b))


class TestCostBounds:
    def test_lower_zero(self):
        y_d = sine_field()
        p = ProblemData(f=1.0, y_d=y_d, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(4), 1, 1)
        assert core.cost_lower(d, FeFunction(d.control_space), y_d) == 0.0

    def test_lower_maximal_at_discrete_state(self, disc8_p2):
        rng = np.random.default_rng(5)
        v = random_control(disc8_p2, rng)
        y = core.solve_state(disc8_p2, v)
        best = core.cost_lower(disc8_p2, v, y)
        assert best == pytest.approx(core.discrete_cost(disc8_p2, v), rel=1e-12)
        for _ in range(10):
            q = FeFunction(y.space, y.coefficients + rng.standard_normal(y.space.n_dofs) * 0.1)
            q.coefficients[y.space.dirichlet_mask] = 0.0
            assert core.cost_lower(disc8_p2, v, q) <= best

    def test_lower_bounds(self, case, disc8_p2):
        v = control_of(disc8_p2, case.u_opt)
        y = core.solve_state(disc8_p2, v)
        j_v = ReferenceSolver(case.problem(), disc8_p2.mesh, levels=2).cost(v)
        assert core.cost_lower(disc8_p2, v, y) <= j_v
        assert core.lower_bound_optimal_cost(disc8_p2, y) <= reference_cost(case).j_opt

    def test_upper_above_lower(self, disc8):
        rng = np.random.default_rng(6)
        for _ in range(10):
            v = random_control(disc8, rng)
            tau = random_flux(disc8.flux_space, rng)
            beta = 10.0 ** rng.uniform(-2, 2)
            q = random_state(disc8.state_space, rng)
            assert core.cost_upper(disc8, v, tau, beta) >= core.cost_lower(disc8, v, q)

    def test_upper_ratio_fine(self, case):
        d = Discretization(case.problem(), unit_square_mesh(50), 2, 2)
        v = core.project(control_of(d, case.u_opt), d.problem.admissible)
        tau = core.tau_hat(d, v, 1.0)
        prev = np.inf
        for _ in range(20):
            beta = core.beta_hat(d, v, tau)
            tau = core.tau_hat(d, v, beta)
            upper = core.cost_upper(d, v, tau, beta)
            if prev - upper < 1e-6 * upper:
                break
            prev = upper
        j = ReferenceSolver(case.problem(), d.mesh, levels=1).cost(v)
        assert 1.0 <= upper / j <= 1.5


class TestProjection:
    def test_box_example(self):
        W = fem.build_space(unit_square_mesh(1), fem.DISCONTINUOUS, 1)
        x = FeFunction(W, np.array([-5.0, 0.0, 4.0, 4.0, 0.0, -5.0]))
        out = core.project(x, AdmissibleSet.box(-3.0, 3.0))
        assert np.array_equal(out.coefficients, [-3.0, 0.0, 3.0, 3.0, 0.0, -3.0])

    def test_ball_example(self):
        W = fem.build_space(unit_square_mesh(3), fem.DISCONTINUOUS, 1)
        x = FeFunction(W, np.full(W.n_dofs, 2.0))
        assert core.nodal_norm(x) == pytest.approx(2.0)
        out = core.project(x, AdmissibleSet.l2_ball(1.0))
        assert abs(core.nodal_norm(out) - 1.0) < 1e-12

    def test_unconstrained_identity(self):
        W = fem.build_space(unit_square_mesh(2), fem.DISCONTINUOUS, 1)
        x = FeFunction(W, np.arange(W.n_dofs, dtype=float))
        assert np.array_equal(core.project(x, AdmissibleSet()).coefficients, x.coefficients)

    def test_variable_bounds_at_nodes(self):
        W = fem.build_space(unit_square_mesh(2), fem.DISCONTINUOUS, 1)
        x = FeFunction(W, np.full(W.n_dofs, 10.0))
        out = core.project(x, AdmissibleSet.box(0.0, lambda x, y: x + y))
        nodes = core.control_nodes(W)
        assert np.allclose(out.coefficients, nodes.sum(axis=1))

    def test_discrete_set_inside_continuous(self):
        # the nodal norm dominates the L2 norm of a DG1 function
        rng = np.random.default_rng(7)
        W = fem.build_space(unit_square_mesh(4), fem.DISCONTINUOUS, 1)
        M = fem.assemble_mass(W)
        for _ in range(20):
            x = FeFunction(W, rng.standard_normal(W.n_dofs))
            assert np.sqrt(x.coefficients @ M @ x.coefficients) <= core.nodal_norm(x) + 1e-14

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["none", "box", "ball"]))
    def test_idempotent_nonexpansive(self, seed, kind):
        rng = np.random.default_rng(seed)
        W = fem.build_space(unit_square_mesh(2), fem.DISCONTINUOUS, 1)
        s = {"none": AdmissibleSet(), "box": AdmissibleSet.box(-1.0, 2.0),
             "ball": AdmissibleSet.l2_ball(0.5)}[kind]
        a = FeFunction(W, 3 * rng.standard_normal(W.n_dofs))
        b = FeFunction(W, 3 * rng.standard_normal(W.n_dofs))
        pa, pb = core.project(a, s), core.project(b, s)
        assert np.array_equal(core.project(pa, s).coefficients, pa.coefficients)
        assert core.is_admissible(pa, s)
        diff = FeFunction(W, pa.coefficients - pb.coefficients)
        ref = FeFunction(W, a.coefficients - b.coefficients)
        assert core.nodal_norm(diff) <= core.nodal_norm(ref) + 1e-12


class TestMinimizers:
    def test_v_hat_lower_trivial(self):
        y_d = sine_field()
        p = ProblemData(f=0.0, y_d=y_d, u_d=0.5, alpha=2.0,
                        admissible=AdmissibleSet.box(-1.0, 1.0))
        d = Discretization(p, unit_square_mesh(3), 1, 1)
        assert np.allclose(core.v_hat_lower(d, y_d).coefficients, 0.5)

    def test_v_hat_lower_unconstrained(self, case):
        p = build_case(unconstrained=True).problem()
        d = Discretization(p, unit_square_mesh(4), 2, 1)
        rng = np.random.default_rng(8)
        q = random_state(d.state_space, rng)
        v = core.v_hat_lower(d, q)
        nodes = core.control_nodes(d.control_space)
        qn = q.coefficients[d.mesh.triangles].ravel()
        expected = (p.y_d(nodes[:, 0], nodes[:, 1]) - qn) / p.alpha
        assert np.allclose(v.coefficients, expected, rtol=1e-13, atol=1e-12)

    @pytest.mark.parametrize("kind", ["box", "ball", "none"])
    def test_v_hat_lower_optimal(self, case, kind):
        p = case.problem()
        p.admissible = {"box": p.admissible, "ball": AdmissibleSet.l2_ball(1.0),
                        "none": AdmissibleSet()}[kind]
        d = Discretization(p, unit_square_mesh(6), 1, 1)
        rng = np.random.default_rng(9)
        q = random_state(d.state_space, rng)
        best = core.cost_lower(d, core.v_hat_lower_field(d, q), q)
        for _ in range(100):
            assert best <= core.cost_lower(d, random_control(d, rng), q)

    @pytest.mark.parametrize("kind", ["box", "ball", "none"])
    def test_v_hat_upper_optimal(self, case, kind):
        p = case.problem()
        p.admissible = {"box": p.admissible, "ball": AdmissibleSet.l2_ball(1.0),
                        "none": AdmissibleSet()}[kind]
        d = Discretization(p, unit_square_mesh(6), 1, 1)
        rng = np.random.default_rng(10)
        tau = random_flux(d.flux_space, rng)
        beta = 0.3
        best = core.cost_upper(d, core.v_hat_upper_field(d, tau, beta), tau, beta)
        for _ in range(100):
            assert best <= core.cost_upper(d, random_control(d, rng), tau, beta)

    def test_v_hat_upper_formula(self):
        p = build_case(unconstrained=True).problem()
        d = Discretization(p, unit_square_mesh(4), 1, 1)
        rng = np.random.default_rng(11)
        tau = random_flux(d.flux_space, rng)
        beta = 0.8
        w = (1 + beta) / beta * p.c_omega ** 2
        field = core.v_hat_upper_field(d, tau, beta)
        expected = -(w * (tau.div(d.degree) + d.f_values)) / (w + p.alpha)
        assert np.allclose(field.values, expected)
        # the nodal version agrees with the field at the vertices when everything is linear
        dg = core.v_hat_upper(d, tau, beta)
        assert np.all(np.isfinite(dg.coefficients))

    def test_v_hat_upper_box_is_clamped_formula(self, case):
        p = case.problem()
        d = Discretization(p, unit_square_mesh(4), 1, 1)
        tau = random_flux(d.flux_space, np.random.default_rng(12))
        free = case.problem()
        free.admissible = AdmissibleSet()
        d_free = Discretization(free, d.mesh, 1, 1)
        t_free = FeFunction(d_free.flux_space, tau.coefficients)
        a = core.v_hat_upper_field(d, tau, 0.5).values
        b = core.v_hat_upper_field(d_free, t_free, 0.5).values
        assert np.array_equal(a, np.clip(b, -3.0, 3.0))

    def test_tau_hat_zero(self):
        p = ProblemData(f=0.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(3), 1, 2)
        tau = core.tau_hat(d, FeFunction(d.control_space), 0.5)
        assert np.all(tau.coefficients == 0.0)

    @pytest.mark.parametrize("p_flux", [1, 2])
    def test_tau_hat_optimal(self, case, p_flux):
        d = Discretization(case.problem(), unit_square_mesh(6), 1, p_flux)
        rng = np.random.default_rng(13)
        v = random_control(d, rng)
        beta = 0.4
        t_hat = core.tau_hat(d, v, beta)
        best = core.cost_upper(d, v, t_hat, beta)
        for _ in range(100):
            scale = 10.0 ** rng.uniform(-4, 1)
            t = FeFunction(d.flux_space, t_hat.coefficients
                           + scale * rng.standard_normal(d.flux_space.n_dofs))
            assert best <= core.cost_upper(d, v, t, beta)

    def test_tau_hat_residual(self, disc8_p2):
        v = random_control(disc8_p2, np.random.default_rng(14))
        beta = 0.2
        tau = core.tau_hat(disc8_p2, v, beta)
        c2 = disc8_p2.problem.c_omega ** 2
        f = disc8_p2.rt_forms
        A = beta * f["mass_rt"] + c2 * f["divdiv"]
        b = beta * disc8_p2.flux_rhs_y_d - c2 * disc8_p2.div_load(v)
        assert np.linalg.norm(A @ tau.coefficients - b) <= 1e-10 * np.linalg.norm(b)


class TestBetaHat:
    def test_formula(self, disc8):
        rng = np.random.default_rng(15)
        v = random_control(disc8, rng)
        tau = random_flux(disc8.flux_space, rng)
        r = tau.div(disc8.degree) + disc8.f_values + disc8.control_values(v)
        g = tau.values(degree=disc8.degree) - disc8.y_d_grads
        expected = disc8.problem.c_omega * np.sqrt(disc8.sq(r)) / np.sqrt(disc8.sq(g))
        assert core.beta_hat(disc8, v, tau) == pytest.approx(expected, rel=1e-12)

    def test_unit_ratio(self):
        # residual norm c * |R| equal to |tau - grad y_d|: flux (1, 0), f = -1, c chosen to match
        p0 = ProblemData(f=-1.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0, c_omega=1.0)
        d = Discretization(p0, unit_square_mesh(2), 1, 1)
        tau = fem.interpolate(d.flux_space, lambda x, y: (np.ones_like(x), np.zeros_like(x)))
        assert core.beta_hat(d, FeFunction(d.control_space), tau) == pytest.approx(1.0, rel=1e-12)

    def test_zero_residual(self):
        p = ProblemData(f=-4.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(2), 1, 1)
        tau = fem.interpolate(d.flux_space, lambda x, y: (2 * x, 2 * y))
        assert core.beta_hat(d, FeFunction(d.control_space), tau) == BETA_MIN

    def test_zero_flux_error(self):
        p = ProblemData(f=1.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(2), 1, 1)
        tau = FeFunction(d.flux_space)
        assert core.beta_hat(d, FeFunction(d.control_space), tau) == BETA_MAX

    def test_both_zero(self):
        p = ProblemData(f=0.0, y_d=ZERO_FIELD, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(2), 1, 1)
        assert core.beta_hat(d, FeFunction(d.control_space), FeFunction(d.flux_space)) == 1.0

    def test_matches_line_search(self, disc8):
        rng = np.random.default_rng(16)
        for _ in range(5):
            v = random_control(disc8, rng)
            tau = random_flux(disc8.flux_space, rng)
            b_hat = core.beta_hat(disc8, v, tau)
            res = minimize_scalar(lambda s: core.cost_upper(disc8, v, tau, np.exp(s)),
                                  bracket=(np.log(b_hat) - 3, np.log(b_hat) + 3),
                                  method="golden", tol=1e-10)
            assert np.exp(res.x) == pytest.approx(b_hat, rel=1e-6)

    def test_argmin_against_multiples(self, disc8):
        rng = np.random.default_rng(17)
        v = random_control(disc8, rng)
        tau = random_flux(disc8.flux_space, rng)
        b = core.beta_hat(disc8, v, tau)
        best = core.cost_upper(disc8, v, tau, b)
        for f in (0.1, 0.5, 2.0, 10.0):
            assert best <= core.cost_upper(disc8, v, tau, f * b)


class TestGradient:
    def test_zero_at_desired(self):
        y_d = sine_field()
        p = ProblemData(f=0.0, y_d=y_d, u_d=0.0, alpha=1.0)
        d = Discretization(p, unit_square_mesh(4), 1, 1)
        g = core.gradient_direction(d, FeFunction(d.control_space), y_d)
        assert np.abs(g.coefficients).max() < 1e-14

    def test_finite_differences(self, disc8):
        from ocpbounds.checks import fd_errors
        rng = np.random.default_rng(18)
        v = random_control(disc8, rng)
        for _ in range(3):
            w = FeFunction(disc8.control_space, rng.standard_normal(disc8.control_space.n_dofs))
            err = fd_errors(disc8, v, w)
            orders = np.log10(err[:-1] / err[1:])
            assert np.all(orders > 0.9)

    def test_lumped_metric_derivative(self, disc8):
        rng = np.random.default_rng(19)
        v = random_control(disc8, rng)
        y = core.solve_state(disc8, v)
        d_l2 = core.gradient_direction(disc8, v, y, "l2")
        d_lump = core.gradient_direction(disc8, v, y, "lumped")
        w = FeFunction(disc8.control_space, rng.standard_normal(disc8.control_space.n_dofs))
        lumped = np.repeat(disc8.mesh.areas / 3, 3)
        a = core.control_inner(disc8, d_l2, w)
        b = np.sum(lumped * d_lump.coefficients * w.coefficients)
        assert a == pytest.approx(b, rel=1e-10)
        with pytest.raises(ValueError):
            core.gradient_direction(disc8, v, y, "h1")


class TestErrBounds:
    def test_algebra(self):
        e = core.err_bounds(2.0, 3.0, 2.5, 1.0)
        assert (e.err_sq_lower, e.err_sq_upper) == (-0.5, 2.0)

    def test_last_iterate(self):
        e = core.err_bounds(1.0, 1.2, 1.2, 0.9)
        assert e.err_sq_lower <= 0.0 <= e.err_sq_upper


def test_friedrichs_constant():
    assert FRIEDRICHS_UNIT_SQUARE == pytest.approx(1.0 / np.sqrt(2.0 * np.pi ** 2))
