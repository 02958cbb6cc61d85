"""Broken polynomial spaces on triangulations.

FeSpace is the discontinuous space of piecewise P_k, or its continuous
Lagrange subspace with zero boundary values.  The reference basis is
nodal Lagrange on the lattice points of the reference triangle.  All
derivative transforms are affine, so physical Hessians are exact.

Edge operators follow the usual two-sided conventions: on an interior
edge both one-sided traces combine with the outward cell normals; on a
boundary edge the single trace is used (average = trace, jump = trace
times outward normal, tensor jump = trace tensor normal).
"""

from functools import lru_cache

import numpy as np

from .quadrature import edge_rule, triangle_rule


@lru_cache(maxsize=None)
def ref_basis(degree):
    return _RefBasis(degree)


class _RefBasis:
    """Nodal Lagrange basis of given degree on the reference triangle.

    Node order: the 3 corners, then the interior nodes of local edges
    0, 1, 2 (edge i opposite vertex i, traversed counterclockwise),
    then cell-interior lattice nodes.
    """

    def __init__(self, degree):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.degree = degree
        k = degree
        if k == 0:
            self.lattice = [(0, 0)]
            self.nodes = np.array([[1 / 3, 1 / 3]])
        else:
            lattice = [(0, 0), (k, 0), (0, k)]
            for t in range(1, k):
                lattice.append((k - t, t))       # edge 0: v1 -> v2
            for t in range(1, k):
                lattice.append((0, k - t))       # edge 1: v2 -> v0
            for t in range(1, k):
                lattice.append((t, 0))           # edge 2: v0 -> v1
            for i in range(1, k):
                for j in range(1, k - i):
                    lattice.append((i, j))
            self.lattice = lattice
            self.nodes = np.array(lattice, dtype=float) / k
        self.exponents = [(a, b) for a in range(k + 1) for b in range(k + 1 - a)]
        vand = np.array([[x**a * y**b for (a, b) in self.exponents]
                         for (x, y) in self.nodes])
        self.coef = np.linalg.inv(vand)  # coef[m, j]: monomial m of basis j

    @property
    def ndofs(self):
        return len(self.nodes)

    def _mono(self, pts, da, db):
        x, y = pts[:, 0], pts[:, 1]
        out = np.empty((len(pts), len(self.exponents)))
        for m, (a, b) in enumerate(self.exponents):
            if a < da or b < db:
                out[:, m] = 0.0
                continue
            c = 1.0
            for i in range(da):
                c *= a - i
            for i in range(db):
                c *= b - i
            out[:, m] = c * x**(a - da) * y**(b - db)
        return out

    def tabulate(self, pts):
        """Basis values, shape (npts, ndofs)."""
        return self._mono(np.asarray(pts, float), 0, 0) @ self.coef

    def tabulate_grad(self, pts):
        """Reference gradients, shape (npts, ndofs, 2)."""
        pts = np.asarray(pts, float)
        gx = self._mono(pts, 1, 0) @ self.coef
        gy = self._mono(pts, 0, 1) @ self.coef
        return np.stack([gx, gy], axis=2)

    def tabulate_hess(self, pts):
        """Reference Hessians, shape (npts, ndofs, 2, 2)."""
        pts = np.asarray(pts, float)
        hxx = self._mono(pts, 2, 0) @ self.coef
        hxy = self._mono(pts, 1, 1) @ self.coef
        hyy = self._mono(pts, 0, 2) @ self.coef
        out = np.empty((len(pts), self.ndofs, 2, 2))
        out[:, :, 0, 0] = hxx
        out[:, :, 0, 1] = hxy
        out[:, :, 1, 0] = hxy
        out[:, :, 1, 1] = hyy
        return out


def edge_ref_points(local_edge, t):
    """Reference coordinates of edge parameter values ``t`` on a local edge.

    The parameterization follows the cell's counterclockwise traversal:
    local edge i runs from vertex (i+1)%3 to vertex (i+2)%3.
    """
    t = np.asarray(t, float)
    lam = np.zeros((len(t), 3))
    lam[:, (local_edge + 1) % 3] = 1 - t
    lam[:, (local_edge + 2) % 3] = t
    return lam[:, 1:]


class CellGeometry:
    """Affine maps of all cells: Jacobians, inverses, determinants."""

    def __init__(self, mesh):
        p = mesh.vertices[mesh.cells]
        self.origin = p[:, 0]
        self.jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        self.det = (self.jac[:, 0, 0] * self.jac[:, 1, 1]
                    - self.jac[:, 0, 1] * self.jac[:, 1, 0])
        inv = np.empty_like(self.jac)
        inv[:, 0, 0] = self.jac[:, 1, 1]
        inv[:, 0, 1] = -self.jac[:, 0, 1]
        inv[:, 1, 0] = -self.jac[:, 1, 0]
        inv[:, 1, 1] = self.jac[:, 0, 0]
        self.inv = inv / self.det[:, None, None]

    def push_forward(self, ref_pts):
        """Physical coordinates, shape (ncells, npts, 2)."""
        return self.origin[:, None, :] + np.einsum(
            "cij,pj->cpi", self.jac, np.asarray(ref_pts, float))


class FeSpace:
    """Piecewise P_k space, discontinuous or continuous with zero boundary.

    ``cell_dofs[c, b]`` is the global dof of local basis function b on
    cell c; -1 marks eliminated (boundary) nodes of the continuous space.
    """

    def __init__(self, mesh, degree, continuity="dg"):
        if continuity not in ("dg", "cg"):
            raise ValueError("continuity must be 'dg' or 'cg'")
        if continuity == "cg" and degree < 1:
            raise ValueError("continuous space needs degree >= 1")
        self.mesh = mesh
        self.degree = degree
        self.continuity = continuity
        self.basis = ref_basis(degree)
        self.geometry = CellGeometry(mesh)
        nb = self.basis.ndofs
        nc = mesh.num_cells
        if continuity == "dg":
            self.cell_dofs = np.arange(nc * nb, dtype=np.int64).reshape(nc, nb)
            self.num_dofs = nc * nb
        else:
            self.cell_dofs, self.num_dofs = self._cg_dof_map()

    def _cg_dof_map(self):
        mesh = self.mesh
        k = self.degree
        skel = mesh.skeleton()
        boundary_vertex = np.zeros(mesh.num_vertices, dtype=bool)
        for e in np.nonzero(skel.boundary)[0]:
            boundary_vertex[skel.vertex_a[e]] = True
            boundary_vertex[skel.vertex_b[e]] = True
        edge_of = {}
        for e in range(skel.num_edges):
            a, b = int(skel.vertex_a[e]), int(skel.vertex_b[e])
            edge_of[(min(a, b), max(a, b))] = e
        keys = {}
        nb = self.basis.ndofs
        cell_dofs = np.full((mesh.num_cells, nb), -1, dtype=np.int64)
        next_dof = [0]

        def dof_for(key, on_boundary):
            if on_boundary:
                return -1
            if key not in keys:
                keys[key] = next_dof[0]
                next_dof[0] += 1
            return keys[key]

        for c in range(mesh.num_cells):
            verts = mesh.cells[c]
            for b, (i, j) in enumerate(self.basis.lattice):
                lam = (k - i - j, i, j)
                zero = [n for n in range(3) if lam[n] == 0]
                if len(zero) == 2:  # corner node
                    loc = [n for n in range(3) if lam[n] == k][0]
                    v = int(verts[loc])
                    cell_dofs[c, b] = dof_for(("v", v), boundary_vertex[v])
                elif len(zero) == 1:  # edge node
                    loc = zero[0]
                    va = int(verts[(loc + 1) % 3])
                    vb = int(verts[(loc + 2) % 3])
                    t = lam[(loc + 2) % 3]  # steps from va towards vb
                    eid = edge_of[(min(va, vb), max(va, vb))]
                    idx = t if va < vb else k - t
                    cell_dofs[c, b] = dof_for(("e", eid, idx), skel.boundary[eid])
                else:
                    cell_dofs[c, b] = dof_for(("i", c, i, j), False)
        return cell_dofs, next_dof[0]

    def node_coordinates(self):
        """Physical positions of the local nodes, shape (ncells, nb, 2)."""
        return self.geometry.push_forward(self.basis.nodes)

    def interpolate(self, f):
        """Nodal interpolant of a callable f((n,2) pts) -> (n,) values.

        For the continuous space, boundary nodes are dropped, so f should
        vanish on the boundary for the interpolant to be meaningful.
        """
        pts = self.node_coordinates()
        vals = f(pts.reshape(-1, 2)).reshape(pts.shape[:2])
        coefs = np.zeros(self.num_dofs)
        mask = self.cell_dofs >= 0
        coefs[self.cell_dofs[mask]] = vals[mask]
        return FeFunction(self, coefs)

    def function(self, coefs=None, vshape=()):
        if coefs is None:
            coefs = np.zeros(vshape + (self.num_dofs,))
        return FeFunction(self, coefs)


class FeFunction:
    """Coefficient vector bound to a space; optionally tensor-valued.

    ``coefs`` has shape (*vshape, num_dofs).
    """

    def __init__(self, space, coefs):
        coefs = np.asarray(coefs, dtype=float)
        if coefs.shape[-1] != space.num_dofs:
            raise ValueError("coefficient length does not match space")
        self.space = space
        self.coefs = coefs
        self.vshape = coefs.shape[:-1]

    def cell_coefs(self):
        """Per-cell coefficients, shape (*vshape, ncells, nb); eliminated
        boundary dofs read as zero."""
        padded = np.concatenate(
            [self.coefs, np.zeros(self.vshape + (1,))], axis=-1)
        idx = np.where(self.space.cell_dofs >= 0, self.space.cell_dofs,
                       self.space.num_dofs)
        return padded[..., idx]

    def eval_cells(self, ref_pts, deriv=0):
        """Evaluate on every cell at shared reference points.

        Returns (*vshape, nc, np) for deriv=0, (*vshape, nc, np, 2) for
        the gradient and (*vshape, nc, np, 2, 2) for the Hessian, in
        physical coordinates.
        """
        basis = self.space.basis
        geo = self.space.geometry
        cc = self.cell_coefs()
        if deriv == 0:
            tab = basis.tabulate(ref_pts)
            return np.einsum("...cb,pb->...cp", cc, tab)
        if deriv == 1:
            tab = basis.tabulate_grad(ref_pts)
            return np.einsum("...cb,pbj,cji->...cpi", cc, tab, geo.inv)
        if deriv == 2:
            tab = basis.tabulate_hess(ref_pts)
            return np.einsum("...cb,pbkl,cki,clj->...cpij", cc, tab,
                             geo.inv, geo.inv)
        raise ValueError("deriv must be 0, 1 or 2")

    def __add__(self, other):
        _check_same_space(self, other)
        return FeFunction(self.space, self.coefs + other.coefs)

    def __sub__(self, other):
        _check_same_space(self, other)
        return FeFunction(self.space, self.coefs - other.coefs)

    def __mul__(self, scalar):
        return FeFunction(self.space, self.coefs * scalar)

    __rmul__ = __mul__


def _check_same_space(u, v):
    if u.space is not v.space:
        raise ValueError("functions live on different spaces")


class TraceSample:
    """One-sided values and gradients of a function on one edge."""

    def __init__(self, edge, side, values, gradients):
        self.edge = edge
        self.side = side
        self.values = values
        self.gradients = gradients


def trace_sample(u, edge, rule, side="left"):
    skel = u.space.mesh.skeleton()
    vals, grads = edge_traces(u, rule, deriv_max=1)
    i = 0 if side == "left" else 1
    if side == "right" and skel.boundary[edge]:
        raise ValueError("boundary edge has no right trace")
    return TraceSample(edge, side, vals[i][edge], grads[i][edge])


def edge_traces(u, rule, deriv_max=0):
    """Both one-sided traces of u at edge quadrature points.

    Returns (values_left, values_right) with shape (*vshape, ne, np) and,
    when deriv_max >= 1, also (grad_left, grad_right) with a trailing
    axis of length 2.  Right traces of boundary edges are zero-filled and
    must not be used.
    """
    space = u.space
    mesh = space.mesh
    skel = mesh.skeleton()
    basis = space.basis
    geo = space.geometry
    cc = u.cell_coefs()
    t = rule.points
    ne, npts = skel.num_edges, len(t)
    vsh = u.vshape

    vals = [np.zeros(vsh + (ne, npts)) for _ in range(2)]
    grads = [np.zeros(vsh + (ne, npts, 2)) for _ in range(2)]
    for side in range(2):
        cells = skel.left_cell if side == 0 else skel.right_cell
        locals_ = skel.left_local if side == 0 else skel.right_local
        tt = t if side == 0 else 1 - t
        for loc in range(3):
            sel = np.nonzero((locals_ == loc) & (cells >= 0))[0]
            if len(sel) == 0:
                continue
            pts = edge_ref_points(loc, tt)
            tab = basis.tabulate(pts)
            vals[side][..., sel, :] = np.einsum("...eb,pb->...ep", cc[..., cells[sel], :], tab)
            if deriv_max >= 1:
                gtab = basis.tabulate_grad(pts)
                grads[side][..., sel, :, :] = np.einsum(
                    "...eb,pbj,eji->...epi", cc[..., cells[sel], :], gtab,
                    geo.inv[cells[sel]])
    if deriv_max == 0:
        return vals[0], vals[1]
    return (vals[0], vals[1]), (grads[0], grads[1])


def jump(u, edge, rule=None):
    """Value jump on one edge: vector of size 2 at each quadrature point."""
    rule = rule or edge_rule(2 * u.space.degree)
    skel = u.space.mesh.skeleton()
    vl, vr = edge_traces(u, rule)
    return _jump_scalar(vl[edge], vr[edge], skel.normal[edge], skel.boundary[edge])


def average(u, edge, rule=None):
    rule = rule or edge_rule(2 * u.space.degree)
    skel = u.space.mesh.skeleton()
    vl, vr = edge_traces(u, rule)
    if skel.boundary[edge]:
        return vl[edge]
    return 0.5 * (vl[edge] + vr[edge])


def jump_vec(u, edge, rule=None):
    """Normal jump of the gradient of u on one edge: scalar per point."""
    rule = rule or edge_rule(2 * u.space.degree)
    skel = u.space.mesh.skeleton()
    (_, _), (gl, gr) = edge_traces(u, rule, deriv_max=1)
    return _jump_vector(gl[edge], gr[edge], skel.normal[edge], skel.boundary[edge])


def average_vec(u, edge, rule=None):
    rule = rule or edge_rule(2 * u.space.degree)
    skel = u.space.mesh.skeleton()
    (_, _), (gl, gr) = edge_traces(u, rule, deriv_max=1)
    if skel.boundary[edge]:
        return gl[edge]
    return 0.5 * (gl[edge] + gr[edge])


def tensor_jump(u, edge, rule=None):
    """Tensor jump of the gradient: (np, 2, 2) matrices."""
    rule = rule or edge_rule(2 * u.space.degree)
    skel = u.space.mesh.skeleton()
    (_, _), (gl, gr) = edge_traces(u, rule, deriv_max=1)
    return _tensor_jump(gl[edge], gr[edge], skel.normal[edge], skel.boundary[edge])


def _jump_scalar(vl, vr, n, boundary):
    v = vl if boundary else vl - vr
    return v[..., None] * n[None, :]


def _jump_vector(vl, vr, n, boundary):
    v = vl if boundary else vl - vr
    return v @ n


def _tensor_jump(vl, vr, n, boundary):
    v = vl if boundary else vl - vr
    return v[..., :, None] * n[None, None, :]


def l2_project(f, degree, mesh, rule=None, vshape=()):
    """Per-cell L2 projection into discontinuous P_degree.

    ``f`` is a callable of physical points returning (*vshape, n) arrays,
    or an FeFunction on the same mesh.  The projection is computed with
    the supplied quadrature rule; by default an overkill rule is used.
    When the rule is inexact for f the result is the discrete
    (quadrature-weighted) projection, which is what quadrature-mode
    schemes and estimators require.
    """
    degree = max(degree, 0)
    if rule is None:
        base = degree if not isinstance(f, FeFunction) else f.space.degree
        rule = triangle_rule(min(2 * max(degree, base) + 4, 10))
    if isinstance(f, FeFunction):
        vshape = f.vshape
        fvals = f.eval_cells(rule.xy)  # (*v, nc, np)
    else:
        fvals = sample_callable(f, mesh, rule, vshape)
    return project_values(fvals, degree, mesh, rule)


def project_values(fvals, degree, mesh, rule):
    """L2-project values sampled at the rule's cell points into P_degree.

    ``fvals`` has shape (*vshape, nc, np) with np matching the rule.  The
    per-cell mass matrix is built with the same rule, so for low-order
    rules this is the discrete projection the quadrature scheme induces.
    """
    target = FeSpace(mesh, max(degree, 0), "dg")
    tab = target.basis.tabulate(rule.xy)
    # per-cell mass and rhs share the |det| factor, so it cancels
    mass = np.einsum("p,pi,pj->ij", rule.weights, tab, tab)
    minv = np.linalg.inv(mass)
    vshape = np.asarray(fvals).shape[:-2]
    rhs = np.einsum("p,pi,...cp->...ci", rule.weights, tab, fvals)
    coef_cells = np.einsum("ij,...cj->...ci", minv, rhs)
    coefs = coef_cells.reshape(vshape + (target.num_dofs,))
    return FeFunction(target, coefs)


def sample_callable(f, mesh, rule, vshape=()):
    """Evaluate a callable at all cell quadrature points.

    ``f`` takes (n, 2) physical points and returns (n, *vshape) values;
    the result has shape (*vshape, nc, np).
    """
    geo = CellGeometry(mesh)
    x = geo.push_forward(rule.xy)
    nc, npts = x.shape[0], x.shape[1]
    vals = np.asarray(f(x.reshape(-1, 2)), dtype=float)
    vals = vals.reshape((nc, npts) + vshape)
    return np.moveaxis(vals.reshape(nc, npts, -1), -1, 0).reshape(
        vshape + (nc, npts)) if vshape else vals


def edge_value_jump_sq(u, rule, include_boundary=True):
    """Per-edge int_e |jump(u)|^2; boundary edges use the single trace."""
    skel = u.space.mesh.skeleton()
    vl, vr = edge_traces(u, rule)
    diff = np.where(skel.boundary[:, None], vl, vl - vr)
    per_edge = skel.length * (rule.weights[None, :] * diff**2).sum(axis=1)
    if not include_boundary:
        per_edge = np.where(skel.boundary, 0.0, per_edge)
    return per_edge


def edge_grad_jump_sq(u, rule):
    """Per-edge int_e (normal jump of grad u)^2; zero on boundary edges."""
    skel = u.space.mesh.skeleton()
    (_, _), (gl, gr) = edge_traces(u, rule, deriv_max=1)
    jn = np.einsum("epi,ei->ep", gl - gr, skel.normal)
    per_edge = skel.length * (rule.weights[None, :] * jn**2).sum(axis=1)
    return np.where(skel.boundary, 0.0, per_edge)


def _edge_jump_sq(u, rule, weight_exp, include_boundary=True):
    per_edge = edge_value_jump_sq(u, rule, include_boundary)
    w = u.space.mesh.skeleton().length.astype(float)**weight_exp
    return float(np.sum(w * per_edge))


def _edge_grad_jump_sq(u, rule, weight_exp):
    per_edge = edge_grad_jump_sq(u, rule)
    w = u.space.mesh.skeleton().length.astype(float)**weight_exp
    return float(np.sum(w * per_edge))


def _cell_deriv_sq(u, rule, deriv):
    geo = u.space.geometry
    vals = u.eval_cells(rule.xy, deriv=deriv)
    sq = vals**2
    while sq.ndim > 2:
        sq = sq.sum(axis=-1)
    return float(np.einsum("c,p,cp->", np.abs(geo.det), rule.weights, sq))


def l2norm(u, order=None):
    rule = triangle_rule(min(order or 2 * u.space.degree + 2, 10))
    return np.sqrt(_cell_deriv_sq(u, rule, 0))


def h1seminorm(u, order=None):
    rule = triangle_rule(min(order or 2 * u.space.degree, 10))
    return np.sqrt(_cell_deriv_sq(u, rule, 1))


def h2seminorm(u, order=None):
    rule = triangle_rule(min(order or 2 * u.space.degree, 10))
    return np.sqrt(_cell_deriv_sq(u, rule, 2))


def enorm(u):
    """Broken H1 norm: gradient part plus h^-1 weighted value jumps."""
    erule = edge_rule(2 * u.space.degree)
    return np.sqrt(h1seminorm(u)**2 + _edge_jump_sq(u, erule, -1.0))


def eenorm(u):
    """Broken H2 norm: Hessians, h^-1 gradient jumps, h^-3 value jumps."""
    erule = edge_rule(2 * u.space.degree)
    return np.sqrt(h2seminorm(u)**2
                   + _edge_grad_jump_sq(u, erule, -1.0)
                   + _edge_jump_sq(u, erule, -3.0))


def opnorm(u, beta):
    """Over-penalized dG norm: h^-beta value jumps."""
    erule = edge_rule(2 * u.space.degree)
    return np.sqrt(h1seminorm(u)**2 + _edge_jump_sq(u, erule, -float(beta)))


def l2_error(u_h, u_exact, order=None):
    """L2 distance between a finite element function and a callable."""
    space = u_h.space
    rule = triangle_rule(min(order or 2 * space.degree + 4, 10))
    diff = sample_callable(u_exact, space.mesh, rule) - u_h.eval_cells(rule.xy)
    return float(np.sqrt(np.einsum("c,p,cp->", np.abs(space.geometry.det),
                                   rule.weights, diff**2)))


def enorm_error(u_h, grad_exact, order=None):
    """enorm of (u - u_h) for an exact solution with zero boundary values."""
    space = u_h.space
    rule = triangle_rule(min(order or 2 * space.degree + 4, 10))
    gd = (np.moveaxis(sample_callable(grad_exact, space.mesh, rule, vshape=(2,)), 0, -1)
          - u_h.eval_cells(rule.xy, deriv=1))
    grad_sq = float(np.einsum("c,p,cpi->", np.abs(space.geometry.det),
                              rule.weights, gd**2))
    erule = edge_rule(2 * space.degree)
    return float(np.sqrt(grad_sq + _edge_jump_sq(u_h, erule, -1.0)))


def eenorm_error(u_h, hess_exact, order=None):
    """eenorm of (u - u_h); exact solution smooth with zero boundary values."""
    space = u_h.space
    rule = triangle_rule(min(order or 2 * space.degree + 4, 10))
    hd = (np.moveaxis(sample_callable(hess_exact, space.mesh, rule, vshape=(2, 2)), (0, 1), (-2, -1))
          - u_h.eval_cells(rule.xy, deriv=2))
    hess_sq = float(np.einsum("c,p,cpij->", np.abs(space.geometry.det),
                              rule.weights, hd**2))
    erule = edge_rule(2 * space.degree)
    return float(np.sqrt(hess_sq + _edge_grad_jump_sq(u_h, erule, -1.0)
                         + _edge_jump_sq(u_h, erule, -3.0)))
