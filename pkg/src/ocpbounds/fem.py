"""
Finite element spaces, assembly and SPD solves on triangular meshes.

Supported pairs (family, order):

* ``lagrange`` 1, 2 -- continuous, boundary dofs flagged in ``dirichlet_mask``
* ``raviart_thomas`` 1, 2 -- H(div)-conforming; order 1 is the lowest-order
  element (one flux per edge), order 2 has two edge moments per edge and two
  interior moments per triangle
* ``discontinuous`` 1 -- piecewise linear, triangle-major / vertex-minor dofs

All integrals are evaluated with the triangle rules from :mod:`ocpbounds.mesh`.
Scalar fields passed to the assembly and integration routines may be a
callable ``f(x, y)``, a constant, an :class:`FeFunction` (on the same mesh or
on a coarser ancestor) or a :class:`QpField`.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import gauss_line

LAGRANGE = "lagrange"
RAVIART_THOMAS = "raviart_thomas"
DISCONTINUOUS = "discontinuous"

_SUPPORTED = {(LAGRANGE, 1), (LAGRANGE, 2), (RAVIART_THOMAS, 1),
              (RAVIART_THOMAS, 2), (DISCONTINUOUS, 1)}


class UnsupportedElementError(ValueError):
    pass


class FamilyMismatchError(TypeError):
    pass


class SolverError(RuntimeError):
    """Raised when a linear solve misses its residual target."""

    def __init__(self, message, residual):
        super().__init__("{} (relative residual {:.3e})".format(message, residual))
        self.residual = residual


# ---------------------------------------------------------------------------
# reference bases
# ---------------------------------------------------------------------------

def _lagrange_basis(order, bary):
    """Values (..., nloc) and barycentric derivatives (..., nloc, 3)."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    shape = bary.shape[:-1]
    if order == 1:
        vals = np.array(bary, copy=True)
        d = np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
        return vals, d
    lam = (l0, l1, l2)
    vals = np.empty(shape + (6,))
    d = np.zeros(shape + (6, 3))
    for i in range(3):
        vals[..., i] = lam[i] * (2.0 * lam[i] - 1.0)
        d[..., i, i] = 4.0 * lam[i] - 1.0
    for k, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        vals[..., 3 + k] = 4.0 * lam[a] * lam[b]
        d[..., 3 + k, a] = 4.0 * lam[b]
        d[..., 3 + k, b] = 4.0 * lam[a]
    return vals, d


def _rt_raw(order, xh):
    """Raw RT polynomials in scaled local coordinates: values (..., nraw, 2), div (..., nraw)."""
    a, b = xh[..., 0], xh[..., 1]
    one = np.ones_like(a)
    zero = np.zeros_like(a)
    if order == 1:
        comps = [(one, zero), (zero, one), (a, b)]
        divs = [zero, zero, 2.0 * one]
    else:
        comps = [(one, zero), (a, zero), (b, zero),
                 (zero, one), (zero, a), (zero, b),
                 (a * a, a * b), (a * b, b * b)]
        divs = [zero, one, zero, zero, zero, one, 3.0 * a, 3.0 * b]
    vals = np.stack([np.stack(c, axis=-1) for c in comps], axis=-2)
    return vals, np.stack(divs, axis=-1)


# ---------------------------------------------------------------------------
# spaces and functions
# ---------------------------------------------------------------------------

class FeSpace:
    """
    Discrete function space on a mesh.

    Attributes
    ----------
    mesh, family, order
    dof_map : (nt, nloc) int array
    n_dofs : int
    dirichlet_mask : (n_dofs,) bool array or None
        Boundary dofs of a Lagrange space (homogeneous Dirichlet data).
    """

    def __init__(self, mesh, family, order):
        if (family, order) not in _SUPPORTED:
            raise UnsupportedElementError(
                "unsupported element ({}, {})".format(family, order))
        self.mesh = mesh
        self.family = family
        self.order = order
        self.dirichlet_mask = None
        m = mesh
        if family == LAGRANGE:
            if order == 1:
                self.dof_map = m.triangles.copy()
                self.n_dofs = m.n_vertices
                mask = m.boundary_vertex_flags.copy()
            else:
                self.dof_map = np.hstack([m.triangles, m.n_vertices + m.triangle_edges])
                self.n_dofs = m.n_vertices + m.n_edges
                mask = np.concatenate([m.boundary_vertex_flags, m.boundary_edge_flags])
            self.dirichlet_mask = mask
        elif family == DISCONTINUOUS:
            self.dof_map = np.arange(3 * m.n_triangles).reshape(-1, 3)
            self.n_dofs = 3 * m.n_triangles
        else:
            te = m.triangle_edges
            if order == 1:
                self.dof_map = te.copy()
                self.n_dofs = m.n_edges
            else:
                edge_dofs = np.stack([2 * te, 2 * te + 1], axis=2).reshape(-1, 6)
                t = np.arange(m.n_triangles)
                inner = 2 * m.n_edges + np.column_stack([2 * t, 2 * t + 1])
                self.dof_map = np.hstack([edge_dofs, inner])
                self.n_dofs = 2 * m.n_edges + 2 * m.n_triangles
            self._build_rt()
        self.dof_map.setflags(write=False)
        self._tab_cache = {}

    @property
    def is_vector(self):
        return self.family == RAVIART_THOMAS

    @property
    def n_local(self):
        return self.dof_map.shape[1]

    @property
    def free_dofs(self):
        if self.dirichlet_mask is None:
            return np.arange(self.n_dofs)
        return np.flatnonzero(~self.dirichlet_mask)

    def __repr__(self):
        return "FeSpace({}, {}, n_dofs={})".format(self.family, self.order, self.n_dofs)

    # -- Raviart-Thomas construction --------------------------------------

    def _build_rt(self):
        m = self.mesh
        p = m.vertices[m.triangles]
        self._center = p.mean(axis=1)
        self._scale = np.sqrt(2.0 * m.areas)
        D = np.empty((m.n_triangles, self.n_local, self.n_local))

        s, w = gauss_line(self.order + 2)
        row = 0
        for k in range(3):
            g = m.triangle_edges[:, k]
            lo = m.vertices[m.edges[g, 0]]
            hi = m.vertices[m.edges[g, 1]]
            tang = hi - lo
            length = np.linalg.norm(tang, axis=1)
            normal = np.column_stack([tang[:, 1], -tang[:, 0]]) / length[:, None]
            x = lo[:, None, :] + s[None, :, None] * tang[:, None, :]
            vals, _ = _rt_raw(self.order, self._local(x, np.arange(m.n_triangles)[:, None]))
            flux = np.einsum("tqrd,td->tqr", vals, normal) * (length[:, None] * w)[:, :, None]
            if self.order == 1:
                D[:, row] = flux.sum(axis=1)
                row += 1
            else:
                D[:, row] = np.einsum("tqr,q->tr", flux, 1.0 - s)
                D[:, row + 1] = np.einsum("tqr,q->tr", flux, s)
                row += 2
        if self.order == 2:
            from .mesh import quadrature
            rule = quadrature(4)
            x = m.to_physical(rule.points)
            vals, _ = _rt_raw(2, self._local(x, np.arange(m.n_triangles)[:, None]))
            D[:, row] = np.einsum("tqr,q->tr", vals[..., 0], rule.weights)
            D[:, row + 1] = np.einsum("tqr,q->tr", vals[..., 1], rule.weights)
        self._coef = np.linalg.inv(D)  # (nt, nraw, nloc)

    def _local(self, x, tri):
        return (x - self._center[tri]) / self._scale[tri][..., None]

    # -- evaluation -------------------------------------------------------

    def basis_at(self, tri, bary):
        """
        Basis data at points given by triangle indices and barycentric coords.

        ``tri`` must broadcast against ``bary.shape[:-1]``. Returns a dict with
        ``values`` and either ``grads`` (scalar spaces) or ``divs`` (RT).
        """
        m = self.mesh
        if self.family == RAVIART_THOMAS:
            p = m.vertices[m.triangles[tri]]
            x = np.einsum("...k,...kd->...d", bary, p)
            raw, rdiv = _rt_raw(self.order, self._local(x, tri))
            coef = self._coef[tri]
            scale = self._scale[tri]
            vals = np.einsum("...rd,...rj->...jd", raw, coef)
            divs = np.einsum("...r,...rj->...j", rdiv, coef) / scale[..., None]
            return {"values": vals, "divs": divs}
        vals, dl = _lagrange_basis(self.order, bary)
        grads = np.einsum("...jk,...kd->...jd", dl, m.bary_grads[tri])
        return {"values": vals, "grads": grads}

    def tabulate(self, degree):
        """Basis data at the quadrature points of the given degree (cached)."""
        if degree not in self._tab_cache:
            from .mesh import quadrature
            rule = quadrature(degree)
            nt = self.mesh.n_triangles
            if self.is_vector:
                tri = np.arange(nt)[:, None]
                bary = np.broadcast_to(rule.points, (nt,) + rule.points.shape)
                tab = self.basis_at(tri, bary)
            else:
                # reference values are shared by all triangles
                vals, dl = _lagrange_basis(self.order, rule.points)
                grads = np.einsum("qjk,tkd->tqjd", dl, self.mesh.bary_grads)
                tab = {"values": np.broadcast_to(vals, (nt,) + vals.shape), "grads": grads}
            self._tab_cache[degree] = tab
        return self._tab_cache[degree]


class FeFunction:
    """Coefficient vector in an :class:`FeSpace`."""

    def __init__(self, space, coefficients=None):
        self.space = space
        if coefficients is None:
            coefficients = np.zeros(space.n_dofs)
        c = np.asarray(coefficients, dtype=float)
        if c.shape != (space.n_dofs,):
            raise ValueError("expected {} coefficients, got {}".format(space.n_dofs, c.shape))
        self.coefficients = c

    @property
    def mesh(self):
        return self.space.mesh

    def __repr__(self):
        return "FeFunction({!r})".format(self.space)

    def copy(self):
        return FeFunction(self.space, self.coefficients.copy())

    def _local(self, tri):
        return self.coefficients[self.space.dof_map[tri]]

    def _points(self, mesh, degree):
        """(tri, bary) on self.mesh for quadrature points of ``mesh``."""
        from .mesh import quadrature
        rule = quadrature(degree)
        if mesh is self.mesh:
            tri = np.arange(mesh.n_triangles)[:, None]
            bary = np.broadcast_to(rule.points, (mesh.n_triangles,) + rule.points.shape)
            return tri, bary
        anc = mesh.ancestor_of(self.mesh)
        x, _ = mesh.quadrature_points(degree)
        tri = np.broadcast_to(anc[:, None], x.shape[:2])
        return tri, self.mesh.barycentric(tri, x)

    def values(self, mesh=None, degree=4):
        """Values at the quadrature points of ``mesh`` (self.mesh or a refinement)."""
        mesh = self.mesh if mesh is None else mesh
        if mesh is self.mesh:
            tab = self.space.tabulate(degree)
            c = self._local(np.arange(mesh.n_triangles))
            if self.space.is_vector:
                return np.einsum("tqjd,tj->tqd", tab["values"], c)
            return c @ tab["values"][0].T
        tri, bary = self._points(mesh, degree)
        basis = self.space.basis_at(tri, bary)
        c = self._local(tri)
        if self.space.is_vector:
            return np.einsum("...jd,...j->...d", basis["values"], c)
        return np.einsum("...j,...j->...", basis["values"], c)

    def grads(self, mesh=None, degree=4):
        if self.space.is_vector:
            raise FamilyMismatchError("gradient of an H(div) function is not available")
        mesh = self.mesh if mesh is None else mesh
        if mesh is self.mesh:
            tab = self.space.tabulate(degree)
            c = self._local(np.arange(mesh.n_triangles))
            return np.einsum("tqjd,tj->tqd", tab["grads"], c)
        tri, bary = self._points(mesh, degree)
        basis = self.space.basis_at(tri, bary)
        return np.einsum("...jd,...j->...d", basis["grads"], self._local(tri))

    def div(self, degree=4):
        if not self.space.is_vector:
            raise FamilyMismatchError("divergence needs a raviart_thomas function")
        tab = self.space.tabulate(degree)
        c = self._local(np.arange(self.mesh.n_triangles))
        return np.einsum("tqj,tj->tq", tab["divs"], c)


class AnalyticField:
    """Closed-form scalar field ``func(x, y)`` with its gradient ``grad(x, y) -> (gx, gy)``."""

    def __init__(self, func, grad):
        self.func = func
        self.grad = grad

    def __call__(self, x, y):
        return self.func(x, y)


class QpField:
    """Pointwise field stored by its values at the quadrature points of a mesh."""

    def __init__(self, mesh, degree, values):
        self.mesh = mesh
        self.degree = degree
        self.values = np.asarray(values, dtype=float)

    def __repr__(self):
        return "QpField(degree={}, shape={})".format(self.degree, self.values.shape)


def build_space(mesh, family, order):
    return FeSpace(mesh, family, order)


def field_values(field, mesh, degree):
    """Values (nt, nq) or (nt, nq, 2) of ``field`` at the quadrature points."""
    if isinstance(field, FeFunction):
        return field.values(mesh, degree)
    if isinstance(field, QpField):
        if field.mesh is not mesh or field.degree != degree:
            raise ValueError("QpField lives on a different mesh or rule")
        return field.values
    x, _ = mesh.quadrature_points(degree)
    if callable(field):
        return np.asarray(field(x[..., 0], x[..., 1]), dtype=float)
    return np.full(x.shape[:2], float(field))


def field_grads(field, mesh, degree):
    """Gradients (nt, nq, 2) of an FeFunction or an AnalyticField."""
    if isinstance(field, FeFunction):
        return field.grads(mesh, degree)
    x, _ = mesh.quadrature_points(degree)
    gx, gy = field.grad(x[..., 0], x[..., 1])
    return np.stack(np.broadcast_arrays(gx, gy), axis=-1)


def integrate(f, mesh, rule):
    """Integral over the mesh of a scalar field using ``rule`` on every triangle."""
    if isinstance(f, (FeFunction, QpField)):
        vals = field_values(f, mesh, rule.degree)
    else:
        x = mesh.to_physical(rule.points)
        vals = np.asarray(f(x[..., 0], x[..., 1]), dtype=float) if callable(f) \
            else np.full(x.shape[:2], float(f))
    return float(np.sum(vals * mesh.areas[:, None] * rule.weights[None, :]))


def interpolate(space, func):
    """
    Canonical interpolant of ``func``.

    Scalar spaces use nodal values (vertices, and edge midpoints for P2);
    Dirichlet dofs are set to zero. For ``raviart_thomas`` ``func(x, y)``
    must return the pair of components and the edge/interior moments are
    computed by quadrature.
    """
    m = space.mesh
    if space.family == DISCONTINUOUS:
        p = m.vertices[m.triangles]
        vals = np.broadcast_to(func(p[..., 0], p[..., 1]), p.shape[:2])
        return FeFunction(space, np.asarray(vals, dtype=float).ravel())
    if space.family == LAGRANGE:
        pts = m.vertices
        if space.order == 2:
            mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
            pts = np.vstack([pts, mids])
        c = np.array(np.broadcast_to(func(pts[:, 0], pts[:, 1]), (len(pts),)), dtype=float)
        c[space.dirichlet_mask] = 0.0
        return FeFunction(space, c)

    c = np.zeros(space.n_dofs)
    s, w = gauss_line(6)
    lo = m.vertices[m.edges[:, 0]]
    hi = m.vertices[m.edges[:, 1]]
    tang = hi - lo
    normal = np.column_stack([tang[:, 1], -tang[:, 0]])  # length already folded in
    x = lo[:, None, :] + s[None, :, None] * tang[:, None, :]
    gx, gy = np.broadcast_arrays(*func(x[..., 0], x[..., 1]))
    fn = (gx * normal[:, None, 0] + gy * normal[:, None, 1]) * w
    if space.order == 1:
        c[:] = fn.sum(axis=1)
    else:
        c[0:2 * m.n_edges:2] = fn @ (1.0 - s)
        c[1:2 * m.n_edges:2] = fn @ s
        from .mesh import quadrature
        rule = quadrature(8)
        xt = m.to_physical(rule.points)
        tx, ty = np.broadcast_arrays(*func(xt[..., 0], xt[..., 1]))
        c[2 * m.n_edges::2] = tx @ rule.weights
        c[2 * m.n_edges + 1::2] = ty @ rule.weights
    return FeFunction(space, c)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _default_degree(*spaces):
    return 2 * max(s.order for s in spaces) + 2


def _scatter(rows_map, cols_map, local, shape):
    nt, nr = rows_map.shape
    nc = cols_map.shape[1]
    I = np.broadcast_to(rows_map[:, :, None], (nt, nr, nc)).ravel()
    J = np.broadcast_to(cols_map[:, None, :], (nt, nr, nc)).ravel()
    return sp.coo_matrix((local.ravel(), (I, J)), shape=shape).tocsr()


def _weights(mesh, degree):
    return mesh.quadrature_points(degree)[1]


def assemble_stiffness(V, degree=None):
    """Matrix of (grad phi_i, grad phi_j) on a Lagrange space (no boundary conditions)."""
    if V.family != LAGRANGE:
        raise FamilyMismatchError("stiffness needs a lagrange space, got " + V.family)
    degree = degree or _default_degree(V)
    g = V.tabulate(degree)["grads"]
    w = _weights(V.mesh, degree)
    local = np.einsum("tq,tqid,tqjd->tij", w, g, g)
    return _scatter(V.dof_map, V.dof_map, local, (V.n_dofs, V.n_dofs))


def assemble_mass(V, degree=None):
    """Mass matrix (phi_i, phi_j) for scalar or RT spaces."""
    degree = degree or _default_degree(V)
    vals = V.tabulate(degree)["values"]
    w = _weights(V.mesh, degree)
    if V.is_vector:
        local = np.einsum("tq,tqid,tqjd->tij", w, vals, vals)
    else:
        local = np.einsum("tq,tqi,tqj->tij", w, vals, vals)
    return _scatter(V.dof_map, V.dof_map, local, (V.n_dofs, V.n_dofs))


def assemble_mixed_mass(V, W, degree=None):
    """Rectangular matrix (phi_i, psi_j) between two scalar spaces on one mesh."""
    if V.mesh is not W.mesh:
        raise ValueError("spaces live on different meshes")
    if V.is_vector or W.is_vector:
        raise FamilyMismatchError("mixed mass needs scalar spaces")
    degree = degree or _default_degree(V, W)
    a = V.tabulate(degree)["values"]
    b = W.tabulate(degree)["values"]
    w = _weights(V.mesh, degree)
    local = np.einsum("tq,tqi,tqj->tij", w, a, b)
    return _scatter(V.dof_map, W.dof_map, local, (V.n_dofs, W.n_dofs))


def assemble_rt_forms(Q, scalar_space=None, degree=None):
    """
    Bilinear forms on a Raviart-Thomas space.

    Returns a dict with ``mass_rt`` (tau, xi), ``divdiv`` (div tau, div xi)
    and, when ``scalar_space`` is given, ``div_to_scalar`` with entries
    (div xi_i, phi_j) of shape (Q.n_dofs, scalar_space.n_dofs).
    """
    if Q.family != RAVIART_THOMAS:
        raise FamilyMismatchError("RT forms need a raviart_thomas space, got " + Q.family)
    degree = degree or _default_degree(Q)
    tab = Q.tabulate(degree)
    w = _weights(Q.mesh, degree)
    out = {
        "mass_rt": _scatter(Q.dof_map, Q.dof_map,
                            np.einsum("tq,tqid,tqjd->tij", w, tab["values"], tab["values"]),
                            (Q.n_dofs, Q.n_dofs)),
        "divdiv": _scatter(Q.dof_map, Q.dof_map,
                           np.einsum("tq,tqi,tqj->tij", w, tab["divs"], tab["divs"]),
                           (Q.n_dofs, Q.n_dofs)),
    }
    if scalar_space is not None:
        if scalar_space.mesh is not Q.mesh:
            raise ValueError("spaces live on different meshes")
        deg = max(degree, _default_degree(Q, scalar_space))
        tq = Q.tabulate(deg)["divs"]
        ts = scalar_space.tabulate(deg)["values"]
        w = _weights(Q.mesh, deg)
        local = np.einsum("tq,tqi,tqj->tij", w, tq, ts)
        out["div_to_scalar"] = _scatter(Q.dof_map, scalar_space.dof_map, local,
                                        (Q.n_dofs, scalar_space.n_dofs))
    return out


def assemble_load(V, field, degree):
    """Vector (field, phi_i); for RT spaces pass an FeFunction or QpField of vector values."""
    if V.is_vector:
        return assemble_vector_load(V, field_values(field, V.mesh, degree), degree)
    w = _weights(V.mesh, degree)
    f = field_values(field, V.mesh, degree)
    local = (w * f) @ V.tabulate(degree)["values"][0]
    return np.bincount(V.dof_map.ravel(), weights=local.ravel(), minlength=V.n_dofs)


def assemble_vector_load(V, values, degree):
    """(g, xi_i) for an RT space, with g given by its values (nt, nq, 2)."""
    w = _weights(V.mesh, degree)
    local = np.einsum("tq,tqd,tqjd->tj", w, values, V.tabulate(degree)["values"])
    return np.bincount(V.dof_map.ravel(), weights=local.ravel(), minlength=V.n_dofs)


def assemble_div_load(Q, field, degree):
    """Vector (field, div xi_i) on an RT space."""
    if Q.family != RAVIART_THOMAS:
        raise FamilyMismatchError("divergence load needs a raviart_thomas space")
    w = _weights(Q.mesh, degree)
    f = field_values(field, Q.mesh, degree)
    local = np.einsum("tq,tqj->tj", w * f, Q.tabulate(degree)["divs"])
    return np.bincount(Q.dof_map.ravel(), weights=local.ravel(), minlength=Q.n_dofs)


def assemble_grad_load(V, gvalues, degree):
    """Vector (g, grad phi_i) for g given by values (nt, nq, 2)."""
    w = _weights(V.mesh, degree)
    local = np.einsum("tq,tqd,tqjd->tj", w, gvalues, V.tabulate(degree)["grads"])
    return np.bincount(V.dof_map.ravel(), weights=local.ravel(), minlength=V.n_dofs)


def apply_dirichlet(A, mask):
    """Zero the rows and columns of masked dofs and put ones on their diagonal."""
    keep = sp.diags((~mask).astype(float))
    return (keep @ A @ keep + sp.diags(mask.astype(float))).tocsr()


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------

RTOL = 1e-10


class SpdSolver:
    """
    Reusable solver for a symmetric positive definite sparse operator.

    A sparse LU factorization with a column fill-reducing ordering is used;
    if the residual target is missed after refinement, Jacobi-preconditioned
    CG takes over.
    """

    def __init__(self, A, rtol=RTOL):
        self.A = sp.csc_matrix(A)
        self.rtol = rtol
        self._lu = spla.splu(self.A, permc_spec="COLAMD")

    def __call__(self, b):
        b = np.asarray(b, dtype=float)
        nb = np.linalg.norm(b)
        if nb == 0.0:
            return np.zeros_like(b)
        x = self._lu.solve(b)
        for _ in range(3):
            r = b - self.A @ x
            res = np.linalg.norm(r) / nb
            if res <= self.rtol:
                return x
            x = x + self._lu.solve(r)
        return self._cg(b, x)

    def _cg(self, b, x0):
        d = self.A.diagonal()
        M = sp.diags(1.0 / d)
        x, _ = spla.cg(self.A, b, x0=x0, rtol=self.rtol * 0.1, maxiter=10 * len(b), M=M)
        res = np.linalg.norm(b - self.A @ x) / np.linalg.norm(b)
        if res > self.rtol:
            raise SolverError("SPD solve did not converge", res)
        return x


def solve_spd(A, b, rtol=RTOL):
    """Solve ``A x = b`` for SPD ``A`` with relative residual at most ``rtol``."""
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1] or A.shape[0] != len(b):
        raise ValueError("dimension mismatch: {} vs {}".format(A.shape, len(b)))
    return SpdSolver(A, rtol)(b)
