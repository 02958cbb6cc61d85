import numpy as np

from dgadapt import mesh as msh, reconstruct as rec, space as sp


def test_oswald_identity_on_conforming_input():
    m = msh.make_unit_square(3)
    cg = sp.FeSpace(m, 2, "cg")
    dg = sp.FeSpace(m, 2, "dg")
    rng = np.random.default_rng(0)
    v = cg.function(rng.standard_normal(cg.num_dofs))
    u = rec.embed_dg(v, dg)
    w = rec.oswald(u)
    assert np.allclose(w.coefs, v.coefs, atol=1e-13)


def test_oswald_output_has_no_jumps():
    m = msh.make_unit_square(3)
    dg = sp.FeSpace(m, 2, "dg")
    rng = np.random.default_rng(1)
    u = dg.function(rng.standard_normal(dg.num_dofs))
    w = rec.embed_dg(rec.oswald(u), dg)
    rule = sp.edge_rule(4)
    per_edge = sp.edge_value_jump_sq(w, rule, include_boundary=False)
    assert np.sqrt(per_edge.sum()) < 1e-11
    # boundary values are zero as well
    bvals = sp.edge_value_jump_sq(w, rule) - per_edge
    assert np.sqrt(np.abs(bvals).sum()) < 1e-11


def test_oswald_averages_shared_edge_node():
    # k=2 on the two-cell square: the diagonal midpoint is the only
    # interior node; averaging a 0/1 piecewise constant gives 1/2 there
    m = msh.make_unit_square(1)
    dg = sp.FeSpace(m, 2, "dg")
    skel = m.skeleton()
    e = int(np.nonzero(skel.interior)[0][0])
    left = int(skel.left_cell[e])
    u = dg.function()
    u.coefs[dg.cell_dofs[left]] = 1.0
    w = rec.oswald(u)
    assert w.space.num_dofs == 1
    assert abs(w.coefs[0] - 0.5) < 1e-14


def test_oswald_linear():
    m = msh.make_unit_square(2)
    dg = sp.FeSpace(m, 1, "dg")
    rng = np.random.default_rng(2)
    u = dg.function(rng.standard_normal(dg.num_dofs))
    v = dg.function(rng.standard_normal(dg.num_dofs))
    a, b = 2.5, -1.25
    w = rec.oswald(a * u + b * v)
    assert np.allclose(w.coefs, a * rec.oswald(u).coefs + b * rec.oswald(v).coefs,
                       atol=1e-12)


def test_oswald_idempotent():
    m = msh.make_unit_square(2)
    dg = sp.FeSpace(m, 2, "dg")
    rng = np.random.default_rng(3)
    u = dg.function(rng.standard_normal(dg.num_dofs))
    once = rec.oswald(u)
    twice = rec.oswald(rec.embed_dg(once, dg))
    assert np.allclose(once.coefs, twice.coefs, atol=1e-13)


def test_report_zero_for_continuous():
    m = msh.make_unit_square(2)
    cg = sp.FeSpace(m, 1, "cg")
    dg = sp.FeSpace(m, 1, "dg")
    rng = np.random.default_rng(4)
    u = rec.embed_dg(cg.function(rng.standard_normal(cg.num_dofs)), dg)
    rep = rec.reconstruction_report(u)
    assert rep.l2_diff < 1e-12
    assert rep.enorm_diff < 1e-11
    assert rep.l2_ratio < 1e-6 or rep.jump_h < 1e-20


def test_report_finite_positive_on_random():
    m = msh.make_unit_square(4)
    dg = sp.FeSpace(m, 1, "dg")
    rng = np.random.default_rng(5)
    u = dg.function(rng.standard_normal(dg.num_dofs))
    rep = rec.reconstruction_report(u)
    for val in (rep.l2_diff, rep.enorm_diff, rep.jump_h, rep.jump_hinv,
                rep.l2_ratio, rep.enorm_ratio):
        assert np.isfinite(val) and val > 0


def step_pattern(x):
    return np.where(x[:, 0] > 0.5, np.sin(3 * x[:, 1]) + 1.0, 0.0)


def test_report_ratios_bounded_across_refinement():
    m = msh.make_unit_square(2)
    ratios_l2, ratios_en = [], []
    for _ in range(4):
        dg = sp.FeSpace(m, 1, "dg")
        u = dg.interpolate(step_pattern)
        rep = rec.reconstruction_report(u)
        ratios_l2.append(rep.l2_ratio)
        ratios_en.append(rep.enorm_ratio)
        m = msh.refine(m, set(range(m.num_cells)))
    # bounded constant: no monotone growth above 10% per level
    for seq in (ratios_l2, ratios_en):
        growth = [b / a for a, b in zip(seq, seq[1:])]
        assert not all(g > 1.1 for g in growth)
        assert max(seq) < 100 * min(seq)
