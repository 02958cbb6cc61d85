"""Conforming reconstruction by nodal averaging (Oswald interpolation).

The reconstruction of a dG function takes, at every Lagrange node of the
continuous subspace, the arithmetic mean of the values contributed by all
cells sharing that node.  Boundary nodes are set to zero so the output
lies in the zero-trace subspace.
"""

from dataclasses import dataclass

import numpy as np

from .quadrature import edge_rule
from .space import FeFunction, FeSpace, edge_traces, enorm


def oswald(u):
    """Average a dG function into the continuous zero-boundary subspace."""
    space = u.space
    cg = FeSpace(space.mesh, space.degree, "cg")
    sums = np.zeros(cg.num_dofs)
    counts = np.zeros(cg.num_dofs)
    vals = u.cell_coefs()  # nodal coefficients
    mask = cg.cell_dofs >= 0
    np.add.at(sums, cg.cell_dofs[mask], vals[mask])
    np.add.at(counts, cg.cell_dofs[mask], 1.0)
    return FeFunction(cg, sums / np.maximum(counts, 1.0))


def embed_dg(v, dg_space):
    """Embed a continuous function into the matching dG space exactly."""
    if v.space.mesh is not dg_space.mesh or v.space.degree != dg_space.degree:
        raise ValueError("spaces do not match")
    return FeFunction(dg_space, v.cell_coefs().reshape(-1))


@dataclass
class ReconstructionReport:
    l2_diff: float          # || E(u) - u ||_L2
    enorm_diff: float       # enorm(E(u) - u)
    jump_h: float           # sum_e h_e ||[u]||_e^2
    jump_hinv: float        # sum_e h_e^-1 ||[u]||_e^2
    l2_ratio: float         # l2_diff^2 / jump_h
    enorm_ratio: float      # enorm_diff^2 / jump_hinv


def reconstruction_report(u):
    """Evaluate both sides of the reconstruction stability bounds."""
    space = u.space
    rec = embed_dg(oswald(u), space)
    diff = rec - u
    rule = edge_rule(2 * space.degree)
    skel = space.mesh.skeleton()
    vl, vr = edge_traces(u, rule)
    jump_sq = np.where(skel.boundary[:, None], vl, vl - vr) ** 2
    per_edge = skel.length * (rule.weights[None, :] * jump_sq).sum(axis=1)
    jump_h = float(np.sum(skel.length * per_edge))
    jump_hinv = float(np.sum(per_edge / skel.length))

    from .space import l2norm
    l2_diff = l2norm(diff)
    enorm_diff = enorm(diff)
    return ReconstructionReport(
        l2_diff=l2_diff,
        enorm_diff=enorm_diff,
        jump_h=jump_h,
        jump_hinv=jump_hinv,
        l2_ratio=l2_diff**2 / max(jump_h, 1e-300),
        enorm_ratio=enorm_diff**2 / max(jump_hinv, 1e-300),
    )
