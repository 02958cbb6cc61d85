"""Assembly of the discrete bilinear and linear forms.

Sign and quadrature conventions:

* value-jump terms (penalties, consistency) run over interior and
  boundary edges, imposing homogeneous Dirichlet data weakly;
* gradient-jump terms (tensor jumps, gradient penalties) run over
  interior edges only;
* quadrature-mode assemblies use exactly the stated orders: cells 2k-2,
  consistency edges 2k-1, penalties 2k, load 2k-2 (orders below 1 are
  clamped to the centroid rule).
"""

import numpy as np
import scipy.sparse as sparse

from .quadrature import edge_rule, triangle_rule
from .space import FeFunction, FeSpace, edge_ref_points, sample_callable

OVERKILL_EXTRA = 4  # overkill rule order is 2k + OVERKILL_EXTRA, capped at 10


def overkill_rule(degree):
    return triangle_rule(min(2 * degree + OVERKILL_EXTRA, 10))


class SparseSystem:
    """Assembled sparse matrix with right-hand side."""

    def __init__(self, matrix, rhs, symmetric=False, space=None):
        self.matrix = matrix.tocsr()
        self.rhs = np.asarray(rhs, dtype=float)
        self.symmetric = symmetric
        self.space = space
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("system matrix must be square")
        if self.matrix.shape[0] != len(self.rhs):
            raise ValueError("rhs length does not match matrix")

    @property
    def num_dofs(self):
        return self.matrix.shape[0]


class Coefficient:
    """Problem data: diffusion tensor, source, optional exact solution.

    ``A`` maps (n, 2) points to (n, 2, 2) symmetric matrices (None means
    the identity), ``f`` maps points to values.  ``exact``/``grad``/
    ``hess`` describe a manufactured solution when available.
    """

    def __init__(self, A=None, f=None, exact=None, grad=None, hess=None):
        self.A = A
        self.f = f
        self.exact = exact
        self.grad = grad
        self.hess = hess

    def a_values(self, x):
        if self.A is None:
            out = np.zeros((len(x), 2, 2))
            out[:, 0, 0] = 1.0
            out[:, 1, 1] = 1.0
            return out
        return np.asarray(self.A(x), dtype=float)

    def validate_spd(self, mesh, order=4):
        """Check positive definiteness of A at quadrature points."""
        from .space import CellGeometry
        rule = triangle_rule(order)
        a = self.a_values(
            CellGeometry(mesh).push_forward(rule.xy).reshape(-1, 2))
        tr = a[:, 0, 0] + a[:, 1, 1]
        det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
        lam_min = tr / 2 - np.sqrt(np.maximum((a[:, 0, 0] - a[:, 1, 1])**2 / 4
                                              + a[:, 0, 1] * a[:, 1, 0], 0.0))
        if np.any(lam_min <= 0) or np.any(det <= 0):
            raise ValueError("diffusion tensor is not positive definite")
        return float(np.min(lam_min))


class _EdgeBasis:
    """Per-edge one-sided basis traces at edge quadrature points."""

    def __init__(self, space, rule):
        self.space = space
        self.rule = rule
        self.skel = space.mesh.skeleton()
        basis = space.basis
        t = rule.points
        self.tab = [[basis.tabulate(edge_ref_points(loc, tt))
                     for loc in range(3)] for tt in (t, 1 - t)]
        self.gtab = [[basis.tabulate_grad(edge_ref_points(loc, tt))
                      for loc in range(3)] for tt in (t, 1 - t)]

    def traces(self, e):
        """(dofs, value traces, gradient traces) for one edge.

        Values have shape (np, nd); gradients (np, nd, 2).  For interior
        edges the first nb columns belong to the left cell and the last
        nb to the right cell (each zero on the opposite side).
        """
        skel = self.skel
        geo = self.space.geometry
        cl = int(skel.left_cell[e])
        ll = int(skel.left_local[e])
        tl = self.tab[0][ll]
        gl = np.einsum("pbj,ji->pbi", self.gtab[0][ll], geo.inv[cl])
        dofs_l = self.space.cell_dofs[cl]
        if skel.boundary[e]:
            return (dofs_l,), (tl,), (gl,)
        cr = int(skel.right_cell[e])
        lr = int(skel.right_local[e])
        tr = self.tab[1][lr]
        gr = np.einsum("pbj,ji->pbi", self.gtab[1][lr], geo.inv[cr])
        return (dofs_l, self.space.cell_dofs[cr]), (tl, tr), (gl, gr)


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rows, cols, block):
        r = np.repeat(rows, len(cols))
        c = np.tile(cols, len(rows))
        v = np.asarray(block, float).ravel()
        keep = (r >= 0) & (c >= 0)
        self.rows.append(r[keep])
        self.cols.append(c[keep])
        self.vals.append(v[keep])

    def matrix(self, n):
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _cell_order(k):
    return max(2 * k - 2, 1)


def _grad_phys(space, rule):
    gtab = space.basis.tabulate_grad(rule.xy)
    return np.einsum("pbj,cji->cpbi", gtab, space.geometry.inv)


def _scatter_cells(trip, space, local):
    """Scatter per-cell blocks (nc, nb, nb) into the triplet store."""
    dofs = space.cell_dofs
    nb = dofs.shape[1]
    for c in range(space.mesh.num_cells):
        trip.add(dofs[c], dofs[c], local[c])


def assemble_stiffness(space, coeff=None, order=None):
    """Cell part sum_K int (A grad u).grad v, exact for constant A."""
    k = space.degree
    rule = triangle_rule(min(order if order is not None else 2 * k, 10))
    geo = space.geometry
    g = _grad_phys(space, rule)
    if coeff is None or coeff.A is None:
        local = np.einsum("p,c,cpbi,cpdi->cbd", rule.weights, np.abs(geo.det), g, g)
    else:
        a = _a_at_cells(coeff, space.mesh, rule)
        local = np.einsum("p,c,cpij,cpdj,cpbi->cbd", rule.weights,
                          np.abs(geo.det), a, g, g)
    trip = _Triplets()
    _scatter_cells(trip, space, local)
    return trip.matrix(space.num_dofs)


def _a_at_cells(coeff, mesh, rule):
    return np.moveaxis(
        sample_callable(coeff.a_values, mesh, rule, vshape=(2, 2)), (0, 1), (-2, -1))


def assemble_load(space, f, order=None):
    """Load vector int f v with an overkill rule by default."""
    rule = overkill_rule(space.degree) if order is None else triangle_rule(min(order, 10))
    geo = space.geometry
    tab = space.basis.tabulate(rule.xy)
    fv = sample_callable(f, space.mesh, rule)
    local = np.einsum("p,c,cp,pb->cb", rule.weights, np.abs(geo.det), fv, tab)
    rhs = np.zeros(space.num_dofs)
    mask = space.cell_dofs >= 0
    np.add.at(rhs, space.cell_dofs[mask], local[mask])
    return rhs


def _penalty_weights(skel, sigma, beta):
    return sigma * skel.length**(-float(beta))


def _edge_loop_penalty(trip, space, rule, weight):
    """sum_e w_e int_e [u].[v] over all edges (boundary included)."""
    eb = _EdgeBasis(space, rule)
    skel = eb.skel
    w = rule.weights
    for e in range(skel.num_edges):
        dofs, vals, _ = eb.traces(e)
        if len(dofs) == 1:
            jmp = vals[0]
            dd = dofs[0]
        else:
            jmp = np.concatenate([vals[0], -vals[1]], axis=1)
            dd = np.concatenate(dofs)
        block = weight[e] * skel.length[e] * np.einsum("p,pb,pd->bd", w, jmp, jmp)
        trip.add(dd, dd, block)


def _edge_loop_consistency(trip, space, rule, coeff=None, sign=-1.0):
    """sum_e int_e [u].{A grad v} + [v].{A grad u}, with given sign."""
    eb = _EdgeBasis(space, rule)
    skel = eb.skel
    mesh = space.mesh
    w = rule.weights
    a_edge = _a_at_edges(coeff, mesh, rule) if coeff is not None and coeff.A is not None else None
    for e in range(skel.num_edges):
        dofs, vals, grads = eb.traces(e)
        n = skel.normal[e]
        if len(dofs) == 1:
            jmp = vals[0]
            g = grads[0]
            dd = dofs[0]
        else:
            jmp = np.concatenate([vals[0], -vals[1]], axis=1)
            g = 0.5 * np.concatenate([grads[0], grads[1]], axis=1)
            dd = np.concatenate(dofs)
        if a_edge is None:
            ag = np.einsum("pdi,i->pd", g, n)
        else:
            ag = np.einsum("pij,pdj,i->pd", a_edge[e], g, n)
        block = skel.length[e] * np.einsum("p,pb,pd->bd", w, jmp, ag)
        trip.add(dd, dd, sign * (block + block.T))


def _a_at_edges(coeff, mesh, rule):
    skel = mesh.skeleton()
    pa = mesh.vertices[skel.vertex_a]
    pb = mesh.vertices[skel.vertex_b]
    t = rule.points
    x = pa[:, None, :] + t[None, :, None] * (pb - pa)[:, None, :]
    a = coeff.a_values(x.reshape(-1, 2))
    return a.reshape(skel.num_edges, len(t), 2, 2)


def assemble_ip(space, sigma, f=None):
    """Symmetric interior penalty form for the Laplacian."""
    if sigma <= 0:
        raise ValueError("penalty parameter must be positive")
    k = space.degree
    trip = _Triplets()
    stiff = assemble_stiffness(space)
    rule = edge_rule(2 * k)
    _edge_loop_consistency(trip, space, rule, sign=-1.0)
    _edge_loop_penalty(trip, space, rule, _penalty_weights(space.mesh.skeleton(), sigma, 1.0))
    mat = stiff + trip.matrix(space.num_dofs)
    rhs = assemble_load(space, f) if f is not None else np.zeros(space.num_dofs)
    return SparseSystem(mat, rhs, symmetric=True, space=space)


def assemble_bz(space, sigma, f=None):
    """Babuska-Zlamal form: gradient part plus sigma/h value-jump penalty."""
    return assemble_bz_overpen(space, sigma, 1.0, f=f)


def assemble_bz_overpen(space, sigma, beta, f=None):
    """Over-penalized BZ form with weight sigma * h^(-beta)."""
    if sigma <= 0:
        raise ValueError("penalty parameter must be positive")
    if beta < 1:
        raise ValueError("over-penalization exponent must be >= 1")
    k = space.degree
    trip = _Triplets()
    stiff = assemble_stiffness(space)
    rule = edge_rule(2 * k)
    _edge_loop_penalty(trip, space, rule,
                       _penalty_weights(space.mesh.skeleton(), sigma, beta))
    mat = stiff + trip.matrix(space.num_dofs)
    rhs = assemble_load(space, f) if f is not None else np.zeros(space.num_dofs)
    return SparseSystem(mat, rhs, symmetric=True, space=space)


def quadrature_load(space, coeff):
    """Load vector int (P_{k-2} f) v with the scheme-order projection.

    The projection of f is computed with the order 2k-2 cell rule (the
    discrete projection the scheme induces); the product with v is then a
    polynomial and is integrated exactly.
    """
    from .space import l2_project
    k = space.degree
    rule = triangle_rule(_cell_order(k))
    pf = l2_project(coeff.f, max(k - 2, 0), space.mesh, rule=rule)
    exact = triangle_rule(min(max(k - 2, 0) + k, 10))
    geo = space.geometry
    tab = space.basis.tabulate(exact.xy)
    pv = pf.eval_cells(exact.xy)
    local = np.einsum("p,c,cp,pb->cb", exact.weights, np.abs(geo.det), pv, tab)
    rhs = np.zeros(space.num_dofs)
    mask = space.cell_dofs >= 0
    np.add.at(rhs, space.cell_dofs[mask], local[mask])
    return rhs


def assemble_cg_quad(space, coeff):
    """Continuous Galerkin scheme under quadrature of order 2k-2.

    The cell terms use exactly the stated rule; the load is the projected
    form int (P_{k-2} f) v.  The inconsistency relative to exact
    integration is intentional.
    """
    if space.continuity != "cg":
        raise ValueError("assemble_cg_quad needs a continuous space")
    k = space.degree
    mat = assemble_stiffness(space, coeff, order=_cell_order(k))
    rhs = quadrature_load(space, coeff)
    return SparseSystem(mat, rhs, symmetric=True, space=space)


def assemble_ip_quad(space, coeff, sigma):
    """Interior penalty scheme under quadrature; stated orders only."""
    if sigma <= 0:
        raise ValueError("penalty parameter must be positive")
    if space.continuity != "dg":
        raise ValueError("assemble_ip_quad needs a discontinuous space")
    k = space.degree
    mat = assemble_stiffness(space, coeff, order=_cell_order(k))
    trip = _Triplets()
    _edge_loop_consistency(trip, space, edge_rule(max(2 * k - 1, 1)), coeff, sign=-1.0)
    _edge_loop_penalty(trip, space, edge_rule(2 * k),
                       _penalty_weights(space.mesh.skeleton(), sigma, 1.0))
    mat = mat + trip.matrix(space.num_dofs)
    rhs = quadrature_load(space, coeff)
    return SparseSystem(mat, rhs, symmetric=True, space=space)


def _mass_inverse_blocks(space, rule=None):
    """Per-cell inverse mass matrices of the dG space."""
    k = space.degree
    rule = rule or triangle_rule(min(2 * k, 10))
    tab = space.basis.tabulate(rule.xy)
    mref = np.einsum("p,pi,pj->ij", rule.weights, tab, tab)
    minv_ref = np.linalg.inv(mref)
    return minv_ref[None, :, :] / np.abs(space.geometry.det)[:, None, None]


def _hessian_lifting_rhs(u, rule_cell, rule_edge):
    """Right-hand sides of the finite element Hessian system.

    Returns (2, 2, ndofs): for each component, int Hess_h u phi minus the
    interior-edge liftings of the gradient tensor jump and the value jump.
    """
    space = u.space
    mesh = space.mesh
    geo = space.geometry
    skel = mesh.skeleton()
    nb = space.basis.ndofs
    out = np.zeros((2, 2, space.num_dofs))

    hess = u.eval_cells(rule_cell.xy, deriv=2)  # (nc, np, 2, 2)
    tab = space.basis.tabulate(rule_cell.xy)
    local = np.einsum("p,c,cpij,pb->ijcb", rule_cell.weights, np.abs(geo.det),
                      hess, tab)
    np.add.at(out.reshape(4, -1).T, space.cell_dofs.ravel(),
              local.reshape(4, mesh.num_cells * nb).T)

    eb = _EdgeBasis(space, rule_edge)
    (vl, vr), (gl, gr) = _function_edge_traces(u, rule_edge)
    w = rule_edge.weights
    for e in np.nonzero(skel.interior)[0]:
        dofs, vals, grads = eb.traces(e)
        n = skel.normal[e]
        h = skel.length[e]
        dj = gl[e] - gr[e]                   # (np, 2) gradient jump
        vj = vl[e] - vr[e]                   # (np,) value jump
        avg_phi = 0.5 * np.concatenate([vals[0], vals[1]], axis=1)
        avg_gphi = 0.5 * np.concatenate([grads[0], grads[1]], axis=1)
        dd = np.concatenate(dofs)
        # - int tjump(grad u) {phi} + int [u] (x) {grad phi}
        t1 = -h * np.einsum("p,pi,j,pb->ijb", w, dj, n, avg_phi)
        t2 = h * np.einsum("p,p,i,pbj->ijb", w, vj, n, avg_gphi)
        np.add.at(out.reshape(4, -1).T, dd, (t1 + t2).reshape(4, -1).T)
    return out


def _function_edge_traces(u, rule):
    from .space import edge_traces
    return edge_traces(u, rule, deriv_max=1)


def fe_hessian(u):
    """Finite element Hessian of a dG function.

    Each component solves the dG mass system against the broken Hessian
    minus the interior edge liftings; the mass matrix is inverted cell by
    cell.  Returns a matrix-valued function on the same space.
    """
    space = u.space
    if space.continuity != "dg":
        raise ValueError("the Hessian lifting needs a discontinuous space")
    k = space.degree
    rule_cell = triangle_rule(min(max(2 * k - 2, 1), 10))
    rule_edge = edge_rule(max(2 * k - 1, 1))
    rhs = _hessian_lifting_rhs(u, rule_cell, rule_edge)
    minv = _mass_inverse_blocks(space)
    nb = space.basis.ndofs
    nc = space.mesh.num_cells
    coefs = np.einsum("cbd,ijcd->ijcb", minv, rhs.reshape(2, 2, nc, nb))
    return FeFunction(space, coefs.reshape(2, 2, space.num_dofs))


def hessian_operator(space, coeff, rule_cell=None):
    """Sparse matrix of u -> int (A : H(u)) v over the dG space."""
    k = space.degree
    rule_cell = rule_cell or triangle_rule(min(max(2 * k - 2, 1), 10))
    lift = _hessian_lifting_matrices(space)
    minv = sparse.block_diag(
        [m for m in _mass_inverse_blocks(space)], format="csr")
    a = _a_at_cells(coeff, space.mesh, rule_cell)
    geo = space.geometry
    tab = space.basis.tabulate(rule_cell.xy)
    mat = sparse.csr_matrix((space.num_dofs, space.num_dofs))
    for i in range(2):
        for j in range(2):
            wmass = np.einsum("p,c,cp,pb,pd->cbd", rule_cell.weights,
                              np.abs(geo.det), a[:, :, i, j], tab, tab)
            trip = _Triplets()
            _scatter_cells(trip, space, wmass)
            cij = trip.matrix(space.num_dofs)
            mat = mat + cij @ minv @ lift[i][j]
    return mat


def _hessian_lifting_matrices(space):
    """Sparse matrices B_ij with (B_ij u)_q = rhs of the H system."""
    k = space.degree
    rule_cell = triangle_rule(min(max(2 * k - 2, 1), 10))
    rule_edge = edge_rule(max(2 * k - 1, 1))
    geo = space.geometry
    mesh = space.mesh
    skel = mesh.skeleton()
    trips = [[_Triplets() for _ in range(2)] for _ in range(2)]

    htab = space.basis.tabulate_hess(rule_cell.xy)
    hphys = np.einsum("pbkl,cki,clj->cpbij", htab, geo.inv, geo.inv)
    tab = space.basis.tabulate(rule_cell.xy)
    local = np.einsum("p,c,cpdij,pb->ijcbd", rule_cell.weights,
                      np.abs(geo.det), hphys, tab)
    for i in range(2):
        for j in range(2):
            _scatter_cells_block(trips[i][j], space, local[i, j])

    eb = _EdgeBasis(space, rule_edge)
    w = rule_edge.weights
    for e in np.nonzero(skel.interior)[0]:
        dofs, vals, grads = eb.traces(e)
        n = skel.normal[e]
        h = skel.length[e]
        jval = np.concatenate([vals[0], -vals[1]], axis=1)      # (np, nd)
        jgrad = np.concatenate([grads[0], -grads[1]], axis=1)   # (np, nd, 2)
        avg_phi = 0.5 * np.concatenate([vals[0], vals[1]], axis=1)
        avg_gphi = 0.5 * np.concatenate([grads[0], grads[1]], axis=1)
        dd = np.concatenate(dofs)
        t1 = -h * np.einsum("p,pdi,j,pb->ijbd", w, jgrad, n, avg_phi)
        t2 = h * np.einsum("p,pd,i,pbj->ijbd", w, jval, n, avg_gphi)
        blocks = t1 + t2
        for i in range(2):
            for j in range(2):
                trips[i][j].add(dd, dd, blocks[i, j])
    return [[trips[i][j].matrix(space.num_dofs) for j in range(2)]
            for i in range(2)]


def _scatter_cells_block(trip, space, local):
    dofs = space.cell_dofs
    for c in range(space.mesh.num_cells):
        trip.add(dofs[c], dofs[c], local[c])


def _nonvar_penalties(space, sigma):
    """sigma h [grad u][grad v] on interior edges plus
    sigma h^-1 [u].[v] on all edges."""
    rule = edge_rule(2 * space.degree)
    skel = space.mesh.skeleton()
    trip = _Triplets()
    _edge_loop_penalty(trip, space, rule, _penalty_weights(skel, sigma, 1.0))
    eb = _EdgeBasis(space, rule)
    w = rule.weights
    for e in np.nonzero(skel.interior)[0]:
        dofs, _, grads = eb.traces(e)
        n = skel.normal[e]
        h = skel.length[e]
        jg = np.einsum("pdi,i->pd", np.concatenate([grads[0], -grads[1]], axis=1), n)
        dd = np.concatenate(dofs)
        block = sigma * h * h * np.einsum("p,pb,pd->bd", w, jg, jg)
        trip.add(dd, dd, block)
    return trip.matrix(space.num_dofs)


def assemble_nonvar(space, coeff, sigma, quadrature=False):
    """Inconsistent nonvariational scheme with the FE Hessian lifting.

    a(u, v) = int (A : H(u)) v + sigma h [grad u][grad v]
            + sigma h^-1 [u].[v];  rhs = int f v (or its order 2k-2
    quadrature variant when ``quadrature`` is set).
    """
    if sigma <= 0:
        raise ValueError("penalty parameter must be positive")
    if space.degree < 1 or space.continuity != "dg":
        raise ValueError("nonvariational scheme needs a dG space of degree >= 1")
    k = space.degree
    rule_cell = (triangle_rule(_cell_order(k)) if quadrature
                 else overkill_rule(k))
    mat = hessian_operator(space, coeff, rule_cell) + _nonvar_penalties(space, sigma)
    if quadrature:
        rhs = assemble_load(space, coeff.f, order=_cell_order(k))
    else:
        rhs = assemble_load(space, coeff.f)
    return SparseSystem(mat, rhs, symmetric=False, space=space)


def assemble_nonvar_consistent(space, coeff, sigma):
    """Consistent nonvariational scheme tested against broken Hessians.

    a(u, v) = int (A : Hess_h u) v - int_E tjump(grad u) : {A v}
            + sigma h [grad u][grad v] + sigma h^-1 [u].[v]
    """
    if sigma <= 0:
        raise ValueError("penalty parameter must be positive")
    if space.degree < 1:
        raise ValueError("invalid degree")
    k = space.degree
    rule_cell = overkill_rule(k)
    geo = space.geometry
    a = _a_at_cells(coeff, space.mesh, rule_cell)
    htab = space.basis.tabulate_hess(rule_cell.xy)
    hphys = np.einsum("pbkl,cki,clj->cpbij", htab, geo.inv, geo.inv)
    tab = space.basis.tabulate(rule_cell.xy)
    local = np.einsum("p,c,cpij,cpdij,pb->cbd", rule_cell.weights,
                      np.abs(geo.det), a, hphys, tab)
    trip = _Triplets()
    _scatter_cells(trip, space, local)

    rule_edge = edge_rule(2 * k)
    skel = space.mesh.skeleton()
    eb = _EdgeBasis(space, rule_edge)
    a_edge = _a_at_edges(coeff, space.mesh, rule_edge)
    w = rule_edge.weights
    for e in np.nonzero(skel.interior)[0]:
        dofs, vals, grads = eb.traces(e)
        n = skel.normal[e]
        h = skel.length[e]
        jgrad = np.concatenate([grads[0], -grads[1]], axis=1)
        avg_phi = 0.5 * np.concatenate([vals[0], vals[1]], axis=1)
        dd = np.concatenate(dofs)
        # tjump(grad u):{A v} = (A n . jump grad u) {v} for symmetric A
        an = np.einsum("pij,pj->pi", a_edge[e], np.broadcast_to(n, (len(w), 2)))
        contracted = np.einsum("pdi,pi->pd", jgrad, an)
        block = -h * np.einsum("p,pb,pd->bd", w, avg_phi, contracted)
        trip.add(dd, dd, block)
    mat = trip.matrix(space.num_dofs) + _nonvar_penalties(space, sigma)
    rhs = assemble_load(space, coeff.f)
    return SparseSystem(mat, rhs, symmetric=False, space=space)


def galerkin_residual(system, x):
    """max_i |(b - A x)_i| / ||b||, the post-solve Galerkin residual."""
    r = system.rhs - system.matrix @ x
    scale = np.linalg.norm(system.rhs)
    return float(np.max(np.abs(r)) / (scale if scale > 0 else 1.0))
