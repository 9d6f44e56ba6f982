"""
Structured triangulations of the unit square and quadrature on triangles.

The mesh is purely 2D. Triangles are stored counter-clockwise; edges are
stored with the lower vertex index first, which also fixes the global edge
orientation used by the H(div) elements.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


class MeshError(ValueError):
    pass


class UnsupportedDegreeError(ValueError):
    pass


class Mesh:
    """
    Conforming triangulation with edge connectivity.

    Parameters
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array, counter-clockwise
    parent : (nt,) int array, optional
        Index of the parent triangle in ``parent_mesh`` (set by refinement).
    parent_mesh : Mesh, optional
    """

    def __init__(self, vertices, triangles, parent=None, parent_mesh=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.parent = parent
        self.parent_mesh = parent_mesh
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshError("triangle vertex index out of range")

        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        self.areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.any(self.areas <= 0.0):
            raise MeshError("triangles must have positive signed area")

        self._build_edges()
        self._jacobians()
        for arr in (self.vertices, self.triangles, self.areas, self.edges,
                    self.triangle_edges, self.edge_triangles):
            arr.setflags(write=False)

    def _build_edges(self):
        t = self.triangles
        # local edge i is opposite local vertex i
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.edges = edges
        self.triangle_edges = inverse.reshape(-1, 3)

        ne = len(edges)
        owner = np.repeat(np.arange(len(t)), 3)
        counts = np.bincount(inverse, minlength=ne)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge found")
        order = np.argsort(inverse, kind="stable")
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        adj = -np.ones((ne, 2), dtype=np.int64)
        adj[:, 0] = owner[order[start]]
        two = counts == 2
        adj[two, 1] = owner[order[start[two] + 1]]
        self.edge_triangles = adj

        self.boundary_edge_flags = counts == 1
        flags = np.zeros(len(self.vertices), dtype=bool)
        flags[edges[self.boundary_edge_flags].ravel()] = True
        self.boundary_vertex_flags = flags

    def _jacobians(self):
        p = self.vertices[self.triangles]
        # x = p0 + J @ (l1, l2)
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        self.jac = J
        inv = np.linalg.inv(J)
        # gradients of barycentric coordinates, (nt, 3, 2)
        g12 = inv  # rows are grad l1, grad l2
        g0 = -g12.sum(axis=1)
        self.bary_grads = np.concatenate([g0[:, None, :], g12], axis=1)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def __repr__(self):
        return "Mesh(nv={}, nt={}, ne={})".format(
            self.n_vertices, self.n_triangles, self.n_edges)

    def to_physical(self, bary):
        """Map barycentric points, shape (..., 3) broadcastable, to (nt, ..., 2)."""
        p = self.vertices[self.triangles]  # (nt, 3, 2)
        return np.einsum("...k,tkd->t...d", bary, p)

    @lru_cache(maxsize=None)
    def quadrature_points(self, degree):
        """Physical quadrature points (nt, nq, 2) and weights (nt, nq)."""
        rule = quadrature(degree)
        x = self.to_physical(rule.points)
        w = self.areas[:, None] * rule.weights[None, :]
        return x, w

    def ancestor_of(self, coarse):
        """Index into ``coarse.triangles`` containing each triangle of self."""
        idx = np.arange(self.n_triangles)
        mesh = self
        while mesh is not coarse:
            if mesh.parent_mesh is None:
                raise MeshError("mesh is not a refinement of the given mesh")
            idx = mesh.parent[idx]
            mesh = mesh.parent_mesh
        return idx

    def barycentric(self, tri, x):
        """Barycentric coordinates of points ``x`` (..., 2) in triangles ``tri``."""
        p0 = self.vertices[self.triangles[tri, 0]]
        inv = np.linalg.inv(self.jac[tri])
        l12 = np.einsum("...ij,...j->...i", inv, x - p0)
        return np.concatenate([1.0 - l12.sum(axis=-1, keepdims=True), l12], axis=-1)

    def write(self, path):
        """Plain-text export: ``nv nt`` header, coordinates, 0-based triangles."""
        with open(path, "w") as fh:
            fh.write("{} {}\n".format(self.n_vertices, self.n_triangles))
            for x, y in self.vertices:
                fh.write("{!r} {!r}\n".format(x, y))
            for a, b, c in self.triangles:
                fh.write("{} {} {}\n".format(a, b, c))


def unit_square_mesh(n):
    """
    Uniform n-by-n triangulation of (0, 1)^2.

    Each cell is split along its lower-left to upper-right diagonal.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError("n must be a positive integer, got {!r}".format(n))
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, triangles)


def refine_uniform(m):
    """Split every triangle into four congruent children through edge midpoints."""
    nv = m.n_vertices
    mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    vertices = np.vstack([m.vertices, mids])
    t = m.triangles
    e = m.triangle_edges + nv  # midpoint opposite local vertex k
    m12, m20, m01 = e[:, 0], e[:, 1], e[:, 2]
    children = np.stack([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(m.n_triangles), 4)
    return Mesh(vertices, children, parent=parent, parent_mesh=m)


class QuadratureRule:
    """
    Quadrature on the reference triangle.

    ``points`` are barycentric coordinates (nq, 3); ``weights`` sum to one,
    so the physical weight of point q on triangle T is ``|T| * weights[q]``.
    """

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = degree
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return len(self.weights)

    def __repr__(self):
        return "QuadratureRule(degree={}, npoints={})".format(self.degree, len(self))


MAX_DEGREE = 41


def _symmetric(orbits):
    pts, wts = [], []
    for kind, a, w in orbits:
        if kind == 1:
            pts.append([1 / 3, 1 / 3, 1 / 3])
            wts.append(w)
        else:
            b = 1.0 - 2.0 * a
            for p in ([a, a, b], [a, b, a], [b, a, a]):
                pts.append(p)
                wts.append(w)
    return np.array(pts), np.array(wts)


def _collapsed_gauss(degree):
    # Gauss-Jacobi in the collapsed direction, Gauss-Legendre in the other;
    # k*k points integrate total degree 2k-1 exactly.
    k = (degree + 2) // 2
    eta, w_eta = roots_jacobi(k, 1.0, 0.0)
    xi, w_xi = roots_legendre(k)
    s = 0.5 * (eta + 1.0)          # in (0, 1), weight (1-s) carried by Jacobi
    r = 0.5 * (xi + 1.0)
    S, R = np.meshgrid(s, r, indexing="ij")
    x = R * (1.0 - S)
    y = S
    W = np.outer(w_eta, w_xi) * 0.125  # Jacobian factors of both maps
    w = (W / 0.5).ravel()               # normalize by reference area 1/2
    x, y = x.ravel(), y.ravel()
    return np.column_stack([1.0 - x - y, x, y]), w


@lru_cache(maxsize=None)
def quadrature(degree):
    """
    Rule exact for polynomials of total degree ``degree``.

    Degrees 1, 2, 4, 5 use classical symmetric rules; the rest use the
    collapsed Gauss rule (degree 21 has 11 x 11 = 121 points).
    """
    if not isinstance(degree, (int, np.integer)) or degree < 1:
        raise UnsupportedDegreeError("degree must be a positive integer")
    if degree > MAX_DEGREE:
        raise UnsupportedDegreeError(
            "no rule of degree {} (maximum {})".format(degree, MAX_DEGREE))
    degree = int(degree)
    if degree == 1:
        pts, w = _symmetric([(1, None, 1.0)])
    elif degree == 2:
        pts, w = _symmetric([(3, 1 / 6, 1 / 3)])
    elif degree == 4:
        pts, w = _symmetric([
            (3, 0.445948490915965, 0.223381589678011),
            (3, 0.091576213509771, 0.109951743655322),
        ])
    elif degree == 5:
        r15 = np.sqrt(15.0)
        pts, w = _symmetric([
            (1, None, 9 / 40),
            (3, (6 - r15) / 21, (155 - r15) / 1200),
            (3, (6 + r15) / 21, (155 + r15) / 1200),
        ])
    else:
        pts, w = _collapsed_gauss(degree)
    return QuadratureRule(pts, w, degree)


def gauss_line(npoints):
    """Gauss-Legendre rule on [0, 1] with weights summing to one."""
    x, w = roots_legendre(npoints)
    return 0.5 * (x + 1.0), 0.5 * w
