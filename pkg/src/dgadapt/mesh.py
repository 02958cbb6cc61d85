"""Conforming triangulations with newest-vertex bisection.

Cells are vertex triples with positive orientation.  Local edge ``i`` of a
cell is the edge opposite local vertex ``i``.  Each cell carries a
refinement edge (the edge that gets bisected); bisection inserts the edge
midpoint and assigns the two remaining parent edges as the children's
refinement edges, so the family stays shape regular.  Refinement and
coarsening return new meshes; a parent/child forest links the generations
so sibling pairs can be merged back.
"""

import numpy as np


class Mesh:
    """Immutable conforming triangulation.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
    cells : ndarray, shape (nc, 3)
        Vertex indices, positively oriented.
    cell_level : ndarray, shape (nc,)
        Bisection depth of each cell.
    refinement_edge : ndarray, shape (nc,)
        Local index of the edge to bisect next (edge i is opposite vertex i).
    """

    def __init__(self, vertices, cells, cell_level=None, refinement_edge=None,
                 forest=None, cell_node=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        nc = len(self.cells)
        self.cell_level = (np.zeros(nc, dtype=np.int64) if cell_level is None
                           else np.asarray(cell_level, dtype=np.int64))
        if refinement_edge is None:
            refinement_edge = _longest_edge_index(self.vertices, self.cells)
        self.refinement_edge = np.asarray(refinement_edge, dtype=np.int64)
        if forest is None:
            forest = _Forest.roots(self.cells, self.refinement_edge)
            cell_node = np.arange(nc, dtype=np.int64)
        self.forest = forest
        self.cell_node = np.asarray(cell_node, dtype=np.int64)
        self._skeleton = None
        areas = self.signed_areas()
        if np.any(areas <= 0):
            raise ValueError("mesh contains a cell with nonpositive signed area")

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    def signed_areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self):
        return float(np.sum(self.signed_areas()))

    def cell_diameters(self):
        p = self.vertices[self.cells]
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def cell_inradii(self):
        p = self.vertices[self.cells]
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        per = np.linalg.norm(e, axis=2).sum(axis=1)
        return 2.0 * self.signed_areas() / per

    def size_field(self):
        return MeshSizeField(self.cell_diameters(), self.cell_inradii())

    def skeleton(self):
        if self._skeleton is None:
            self._skeleton = Skeleton(self)
        return self._skeleton

    def vertex_patch(self, vertex):
        """Ids of all cells containing the given vertex."""
        return set(np.nonzero(np.any(self.cells == vertex, axis=1))[0].tolist())

    def edge_patch(self, cell):
        """The cell together with every cell sharing an edge with it."""
        skel = self.skeleton()
        patch = {int(cell)}
        for e in range(skel.num_edges):
            if skel.left_cell[e] == cell and skel.right_cell[e] >= 0:
                patch.add(int(skel.right_cell[e]))
            elif skel.right_cell[e] == cell:
                patch.add(int(skel.left_cell[e]))
        return patch


class MeshSizeField:
    """Per-cell diameter ``h`` and inradius ``rho``; rho <= h/2 always."""

    def __init__(self, h, rho):
        self.h = np.asarray(h, dtype=float)
        self.rho = np.asarray(rho, dtype=float)


class Skeleton:
    """Edge connectivity of a conforming triangulation.

    Edges store the vertex pair ordered counterclockwise as seen from the
    left cell, so the unit normal always points out of the left cell
    (outward on boundary edges).  The right cell traverses the edge in the
    opposite direction.
    """

    def __init__(self, mesh):
        cells = mesh.cells
        verts = mesh.vertices
        first = {}
        v_a, v_b = [], []
        left_cell, right_cell = [], []
        left_local, right_local = [], []
        for c in range(len(cells)):
            for loc in range(3):
                a = int(cells[c, (loc + 1) % 3])
                b = int(cells[c, (loc + 2) % 3])
                key = (a, b) if a < b else (b, a)
                if key not in first:
                    first[key] = len(v_a)
                    v_a.append(a)
                    v_b.append(b)
                    left_cell.append(c)
                    left_local.append(loc)
                    right_cell.append(-1)
                    right_local.append(-1)
                else:
                    e = first[key]
                    if right_cell[e] >= 0:
                        raise ValueError("edge shared by more than two cells")
                    right_cell[e] = c
                    right_local[e] = loc
        self.vertex_a = np.array(v_a, dtype=np.int64)
        self.vertex_b = np.array(v_b, dtype=np.int64)
        self.left_cell = np.array(left_cell, dtype=np.int64)
        self.right_cell = np.array(right_cell, dtype=np.int64)
        self.left_local = np.array(left_local, dtype=np.int64)
        self.right_local = np.array(right_local, dtype=np.int64)
        self.boundary = self.right_cell < 0
        pa = verts[self.vertex_a]
        pb = verts[self.vertex_b]
        tang = pb - pa
        self.length = np.linalg.norm(tang, axis=1)
        tang = tang / self.length[:, None]
        self.normal = np.column_stack([tang[:, 1], -tang[:, 0]])

    @property
    def num_edges(self):
        return len(self.vertex_a)

    @property
    def interior(self):
        return ~self.boundary


def make_unit_square(n):
    """Uniform right-triangle mesh of [0, 1]^2 with n subdivisions per side.

    2 n^2 cells; every refinement edge is a hypotenuse, so uniform
    bisection never needs closure.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    vx, vy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([vx.ravel(), vy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            # diagonal v00 -- v11; hypotenuse first so refinement edge is local 0
            cells.append((v10, v11, v00))
            cells.append((v01, v00, v11))
    cells = np.array(cells, dtype=np.int64)
    return Mesh(vertices, cells, refinement_edge=np.zeros(len(cells), dtype=np.int64))


def make_lshape(n):
    """L-shaped domain [0,1]^2 minus [1/2,1]x[0,1/2], n cells per half side."""
    if n < 1:
        raise ValueError("n must be >= 1")
    square = make_unit_square(2 * n)
    centroids = square.vertices[square.cells].mean(axis=1)
    keep = ~((centroids[:, 0] > 0.5) & (centroids[:, 1] < 0.5))
    cells = square.cells[keep]
    used = np.unique(cells)
    renum = -np.ones(square.num_vertices, dtype=np.int64)
    renum[used] = np.arange(len(used))
    vertices = square.vertices[used]
    cells = renum[cells]
    return Mesh(vertices, cells, refinement_edge=np.zeros(len(cells), dtype=np.int64))


def shape_regularity(mesh):
    """min over cells of inradius / diameter."""
    if mesh.num_cells == 0:
        raise ValueError("empty mesh")
    sf = mesh.size_field()
    return float(np.min(sf.rho / sf.h))


def refine(mesh, marked):
    """Bisect every marked cell, closing neighbors to keep conformity."""
    marked = sorted(int(c) for c in marked)
    if marked and (marked[0] < 0 or marked[-1] >= mesh.num_cells):
        raise ValueError("marked cell id out of range")
    if not marked:
        return mesh
    work = _RefineWork(mesh)
    for c in marked:
        node = int(mesh.cell_node[c])
        if node in work.active:
            work.split_pair(node)
    return work.freeze()


def coarsen(mesh, marked, report=None):
    """Merge sibling leaf pairs where both siblings are marked.

    A pair is merged only if the merge leaves the mesh conforming (no
    other active cell keeps using the bisection midpoint); skipped pairs
    are counted in ``report['skipped']`` when a dict is passed.
    """
    marked = {int(c) for c in marked}
    if marked and (min(marked) < 0 or max(marked) >= mesh.num_cells):
        raise ValueError("marked cell id out of range")
    forest = mesh.forest
    marked_nodes = {int(mesh.cell_node[c]) for c in marked}
    active = set(int(t) for t in mesh.cell_node)

    # candidate parents: both children active, both marked
    candidates = {}
    for node in sorted(marked_nodes):
        parent = forest.parent[node]
        if parent < 0:
            continue
        ca, cb = forest.children[parent]
        if ca in marked_nodes and cb in marked_nodes and ca in active and cb in active:
            candidates[parent] = (ca, cb)

    # group by midpoint vertex; a group merges only if the midpoint is used
    # exclusively by the children of that group's candidates
    users = {}
    for node in active:
        for v in forest.verts[node]:
            users.setdefault(int(v), set()).add(node)
    by_mid = {}
    for parent, pair in candidates.items():
        by_mid.setdefault(int(forest.midpoint[parent]), []).append((parent, pair))
    merged = set()
    merged_pairs = 0
    for mid, group in sorted(by_mid.items()):
        group_children = set()
        for _, (ca, cb) in group:
            group_children.update((ca, cb))
        if users.get(mid, set()) <= group_children:
            for parent, (ca, cb) in group:
                active.discard(ca)
                active.discard(cb)
                active.add(parent)
                merged.update((ca, cb))
                merged_pairs += 1
    if report is not None:
        report["merged"] = merged_pairs
        report["skipped"] = len(marked_nodes - merged)
    if not merged:
        return mesh
    order = sorted(active)
    cells = np.array([forest.verts[t] for t in order], dtype=np.int64)
    level = np.array([forest.level[t] for t in order], dtype=np.int64)
    refedge = np.array([forest.refedge[t] for t in order], dtype=np.int64)
    used = np.unique(cells)
    renum = -np.ones(mesh.num_vertices, dtype=np.int64)
    renum[used] = np.arange(len(used))
    new_forest, node_map = forest.compact(renum)
    return Mesh(mesh.vertices[used], renum[cells], level, refedge,
                forest=new_forest,
                cell_node=np.array([node_map[t] for t in order], dtype=np.int64))


class _Forest:
    """Bisection history: one record per triangle ever created."""

    def __init__(self, verts, refedge, level, parent, children, midpoint):
        self.verts = verts
        self.refedge = refedge
        self.level = level
        self.parent = parent
        self.children = children
        self.midpoint = midpoint

    @classmethod
    def roots(cls, cells, refedge):
        n = len(cells)
        return cls([tuple(int(v) for v in c) for c in cells],
                   [int(r) for r in refedge],
                   [0] * n, [-1] * n, [(-1, -1)] * n, [-1] * n)

    def copy(self):
        return _Forest(list(self.verts), list(self.refedge), list(self.level),
                       list(self.parent), list(self.children), list(self.midpoint))

    def compact(self, vertex_renum):
        """Keep only nodes whose vertices survive a vertex renumbering.

        Parents whose children are dropped become leaves again (their
        children/midpoint links are reset).
        """
        keep = [t for t in range(len(self.verts))
                if all(vertex_renum[v] >= 0 for v in self.verts[t])]
        node_map = {t: i for i, t in enumerate(keep)}
        verts = [tuple(int(vertex_renum[v]) for v in self.verts[t]) for t in keep]
        refedge = [self.refedge[t] for t in keep]
        level = [self.level[t] for t in keep]
        parent = [node_map.get(self.parent[t], -1) for t in keep]
        children = []
        midpoint = []
        for t in keep:
            ca, cb = self.children[t]
            if ca in node_map and cb in node_map and vertex_renum[self.midpoint[t]] >= 0:
                children.append((node_map[ca], node_map[cb]))
                midpoint.append(int(vertex_renum[self.midpoint[t]]))
            else:
                children.append((-1, -1))
                midpoint.append(-1)
        return _Forest(verts, refedge, level, parent, children, midpoint), node_map


class _RefineWork:
    """Mutable state while bisecting; frozen into a new Mesh at the end."""

    def __init__(self, mesh):
        self.forest = mesh.forest.copy()
        self.vertices = [tuple(p) for p in mesh.vertices]
        self.active = set(int(t) for t in mesh.cell_node)
        self.edge_mid = {}
        self.edge_cells = {}
        for t in self.active:
            for key in self._edge_keys(t):
                self.edge_cells.setdefault(key, set()).add(t)

    def _edge_keys(self, node):
        v = self.forest.verts[node]
        out = []
        for loc in range(3):
            a, b = v[(loc + 1) % 3], v[(loc + 2) % 3]
            out.append((a, b) if a < b else (b, a))
        return out

    def _ref_edge_key(self, node):
        v = self.forest.verts[node]
        r = self.forest.refedge[node]
        a, b = v[(r + 1) % 3], v[(r + 2) % 3]
        return (a, b) if a < b else (b, a)

    def _midpoint(self, key):
        if key not in self.edge_mid:
            pa = self.vertices[key[0]]
            pb = self.vertices[key[1]]
            self.vertices.append(((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2))
            self.edge_mid[key] = len(self.vertices) - 1
        return self.edge_mid[key]

    def _bisect(self, node, mid):
        f = self.forest
        v = f.verts[node]
        r = f.refedge[node]
        p, a, b = v[r], v[(r + 1) % 3], v[(r + 2) % 3]
        child_a = (mid, p, a)
        child_b = (mid, b, p)
        ia = len(f.verts)
        f.verts.extend([child_a, child_b])
        f.refedge.extend([0, 0])
        f.level.extend([f.level[node] + 1] * 2)
        f.parent.extend([node, node])
        f.children.extend([(-1, -1), (-1, -1)])
        f.midpoint.extend([-1, -1])
        f.children[node] = (ia, ia + 1)
        f.midpoint[node] = mid
        self.active.discard(node)
        for key in self._edge_keys(node):
            self.edge_cells.get(key, set()).discard(node)
        for child in (ia, ia + 1):
            self.active.add(child)
            for key in self._edge_keys(child):
                self.edge_cells.setdefault(key, set()).add(child)
        return ia, ia + 1

    def _neighbor_across(self, node, key):
        for other in self.edge_cells.get(key, ()):
            if other != node:
                return other
        return None

    def split_pair(self, node, depth=0):
        """Bisect ``node``; recursively pre-refine the neighbor across the
        refinement edge until it is compatibly divisible."""
        if node not in self.active:
            return
        if depth > len(self.forest.verts) + 8:
            raise RuntimeError("bisection closure did not terminate")
        key = self._ref_edge_key(node)
        nbr = self._neighbor_across(node, key)
        if nbr is not None and self._ref_edge_key(nbr) != key:
            self.split_pair(nbr, depth + 1)
            if node not in self.active:
                return
            nbr = self._neighbor_across(node, key)
        mid = self._midpoint(key)
        self._bisect(node, mid)
        if nbr is not None and nbr in self.active:
            # compatible neighbor: split it across the same midpoint
            self._bisect(nbr, mid)

    def freeze(self):
        order = sorted(self.active)
        f = self.forest
        cells = np.array([f.verts[t] for t in order], dtype=np.int64)
        level = np.array([f.level[t] for t in order], dtype=np.int64)
        refedge = np.array([f.refedge[t] for t in order], dtype=np.int64)
        return Mesh(np.array(self.vertices, dtype=float), cells, level, refedge,
                    forest=f, cell_node=np.array(order, dtype=np.int64))


def _longest_edge_index(vertices, cells):
    p = vertices[cells]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    return np.argmax(np.linalg.norm(e, axis=2), axis=1)
