import numpy as np

from dgadapt import mesh as msh


def assert_conforming(m, domain_area):
    skel = m.skeleton()
    assert np.all(m.signed_areas() > 0)
    assert abs(m.area() - domain_area) < 1e-12 * domain_area
    # every interior edge has two cells, every boundary edge one
    counts = np.where(skel.boundary, 1, 2)
    incidences = (skel.left_cell >= 0).sum() + (skel.right_cell >= 0).sum()
    assert incidences == counts.sum()
    # each cell contributes exactly 3 edge incidences
    assert incidences == 3 * m.num_cells
    # no hanging vertices: every vertex of a cell edge is an edge endpoint
    lengths = np.linalg.norm(
        m.vertices[skel.vertex_a] - m.vertices[skel.vertex_b], axis=1)
    assert np.allclose(lengths, skel.length)


def test_unit_square_n1():
    m = msh.make_unit_square(1)
    assert m.num_cells == 2
    assert m.num_vertices == 4
    skel = m.skeleton()
    assert skel.num_edges == 5
    assert int(skel.interior.sum()) == 1
    assert abs(m.area() - 1.0) < 1e-12


def test_unit_square_n2():
    m = msh.make_unit_square(2)
    assert m.num_cells == 8
    assert m.num_vertices == 9
    assert_conforming(m, 1.0)


def test_unit_square_rejects_zero():
    import pytest
    with pytest.raises(ValueError):
        msh.make_unit_square(0)
    with pytest.raises(ValueError):
        msh.make_lshape(0)


def test_lshape():
    m = msh.make_lshape(1)
    assert m.num_cells == 6
    assert abs(m.area() - 0.75) < 1e-12
    corner = np.array([0.5, 0.5])
    assert np.any(np.all(np.isclose(m.vertices, corner), axis=1))
    m2 = msh.make_lshape(2)
    assert m2.num_cells == 24
    assert_conforming(m2, 0.75)


def test_refine_all_two_cells():
    m = msh.make_unit_square(1)
    fine = msh.refine(m, {0, 1})
    assert fine.num_cells == 4
    assert_conforming(fine, 1.0)


def test_refine_empty_is_identity():
    m = msh.make_unit_square(2)
    same = msh.refine(m, set())
    assert same is m


def test_refine_single_cell_closure():
    # marking one of the two cells bisects the neighbor too (shared
    # refinement edge), giving 4 cells and no hanging vertex
    m = msh.make_unit_square(1)
    fine = msh.refine(m, {0})
    assert fine.num_cells == 4
    assert_conforming(fine, 1.0)


def test_refine_deep_closure():
    m = msh.make_unit_square(2)
    rng = np.random.default_rng(0)
    for _ in range(6):
        marked = set(rng.choice(m.num_cells, size=max(1, m.num_cells // 5),
                                replace=False).tolist())
        m = msh.refine(m, marked)
        assert_conforming(m, 1.0)


def test_coarsen_inverts_uniform_refine():
    m = msh.make_unit_square(2)
    fine = msh.refine(m, set(range(m.num_cells)))
    assert fine.num_cells == 2 * m.num_cells
    report = {}
    back = msh.coarsen(fine, set(range(fine.num_cells)), report)
    assert back.num_cells == m.num_cells
    assert report["skipped"] == 0
    assert_conforming(back, 1.0)


def test_coarsen_requires_both_siblings():
    m = msh.make_unit_square(1)
    fine = msh.refine(m, {0, 1})
    out = msh.coarsen(fine, {0})
    assert out is fine


def test_coarsen_empty_is_identity():
    m = msh.make_unit_square(2)
    assert msh.coarsen(m, set()) is m


def test_coarsen_skips_nonconforming_merge():
    # refine twice, then try to merge only the deepest generation in a
    # region where a neighbor still uses the midpoint
    m = msh.make_unit_square(1)
    m1 = msh.refine(m, set(range(m.num_cells)))
    m2 = msh.refine(m1, {0})
    report = {}
    out = msh.coarsen(m2, set(range(m2.num_cells)), report)
    assert_conforming(out, 1.0)
    assert out.num_cells <= m2.num_cells


def test_shape_regularity_values():
    tri = msh.Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                   np.array([[0, 1, 2]]))
    mu = msh.shape_regularity(tri)
    assert abs(mu - (2 - np.sqrt(2)) / 2 / np.sqrt(2)) < 1e-12

    eq = msh.Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]]),
                  np.array([[0, 1, 2]]))
    assert abs(msh.shape_regularity(eq) - 1 / (2 * np.sqrt(3))) < 1e-12


def test_shape_regularity_stable_under_uniform_refinement():
    m = msh.make_unit_square(1)
    mus = [msh.shape_regularity(m)]
    for _ in range(6):
        m = msh.refine(m, set(range(m.num_cells)))
        mus.append(msh.shape_regularity(m))
    assert min(mus) > 0.2
    assert max(mus) - min(mus) < 1e-12


def test_center_vertex_patch():
    m = msh.make_unit_square(2)
    center = None
    for i, p in enumerate(m.vertices):
        if np.allclose(p, [0.5, 0.5]):
            center = i
    assert center is not None
    patch = m.vertex_patch(center)
    assert len(patch) == 6


def test_edge_patch():
    m = msh.make_unit_square(2)
    patch = m.edge_patch(0)
    assert 0 in patch
    assert 2 <= len(patch) <= 4


def test_boundary_normals_point_outward():
    m = msh.make_unit_square(2)
    skel = m.skeleton()
    for e in range(skel.num_edges):
        if not skel.boundary[e]:
            continue
        c = skel.left_cell[e]
        centroid = m.vertices[m.cells[c]].mean(axis=0)
        edge_mid = 0.5 * (m.vertices[skel.vertex_a[e]] + m.vertices[skel.vertex_b[e]])
        assert np.dot(skel.normal[e], edge_mid - centroid) > 0


def test_interior_normals_left_to_right():
    m = msh.make_unit_square(2)
    skel = m.skeleton()
    for e in range(skel.num_edges):
        if skel.boundary[e]:
            continue
        cl = skel.left_cell[e]
        cr = skel.right_cell[e]
        dl = m.vertices[m.cells[cl]].mean(axis=0)
        dr = m.vertices[m.cells[cr]].mean(axis=0)
        assert np.dot(skel.normal[e], dr - dl) > 0


def test_refinement_determinism():
    def run():
        m = msh.make_unit_square(2)
        m = msh.refine(m, {0, 3, 5})
        m = msh.refine(m, {1, 2})
        return m
    a, b = run(), run()
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.cells, b.cells)
    assert np.array_equal(a.cell_level, b.cell_level)
