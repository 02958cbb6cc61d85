"""Maximum-strategy adaptive loop with inconsistency-aware marking.

Each sweep solves, estimates, accumulates the weighted totals
C1*H_R + C2*H_I + C3*H_J, and stops once they drop below the tolerance.
Per-cell indicators combine the cell residual, half of each incident
edge's jump contribution, and the cell inconsistency; cells at or above
theta times the maximum are refined, cells at or below theta_c times the
maximum are coarsened.  Coarsening runs before refinement so fresh
bisections are never undone within a sweep.
"""

from dataclasses import dataclass, field

import numpy as np

from .mesh import coarsen, refine


@dataclass
class AdaptConfig:
    c1: float = 1 / 3
    c2: float = 1 / 3
    c3: float = 1 / 3
    tol: float = 1e-3
    theta: float = 0.5
    theta_c: float = 0.05
    max_iterations: int = 25

    def __post_init__(self):
        if abs(self.c1 + self.c2 + self.c3 - 1.0) > 1e-12:
            raise ValueError("marking weights must sum to 1")
        if not (0 <= self.theta_c < self.theta <= 1.0):
            raise ValueError("need 0 <= theta_c < theta <= 1")
        if self.max_iterations < 0:
            raise ValueError("max iterations must be >= 0")


@dataclass
class AdaptRecord:
    iterate: int
    cells: int
    dofs: int
    total_R: float
    total_I: float
    total_J: float
    weighted: float
    marked_refine: int = 0
    marked_coarsen: int = 0
    error: float = None


@dataclass
class AdaptTrace:
    records: list = field(default_factory=list)

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]


def cell_indicators(report, mesh):
    """eta_K = eta_R + 1/2 sum of incident edge eta_J + eta_I per cell."""
    skel = mesh.skeleton()
    eta = report.eta_R.copy()
    half = 0.5 * report.eta_J
    np.add.at(eta, skel.left_cell, half)
    interior = skel.right_cell >= 0
    np.add.at(eta, skel.right_cell[interior], half[interior])
    eta_i = report.marking_eta_I()
    if eta_i is not None:
        eta = eta + eta_i
    return eta


def mark(report, config, mesh):
    """Maximum-strategy marking; returns (refine set, coarsen set)."""
    if mesh.num_cells == 0:
        raise ValueError("empty mesh")
    eta = cell_indicators(report, mesh)
    top = float(np.max(eta))
    refine_set = set(np.nonzero(eta >= config.theta * top)[0].tolist())
    coarsen_set = set(np.nonzero(eta <= config.theta_c * top)[0].tolist())
    return refine_set, coarsen_set


def _weighted_total(report, config):
    c1, c2, c3 = config.c1, config.c2, config.c3
    if report.eta_I is None and report.eta_I_upper is None:
        # family without an inconsistency part: drop C2, renormalize
        s = c1 + c3
        c1, c2, c3 = c1 / s, 0.0, c3 / s
    return (c1 * report.total_R + c2 * report.total_I_upper
            + c3 * report.total_J)


def _remap_by_centroid(old_mesh, ids, new_mesh):
    """Follow surviving cells across a coarsen call via their centroids."""
    lookup = {}
    cents = new_mesh.vertices[new_mesh.cells].mean(axis=1)
    for c, p in enumerate(cents):
        lookup[(round(float(p[0]), 12), round(float(p[1]), 12))] = c
    old_cents = old_mesh.vertices[old_mesh.cells].mean(axis=1)
    out = set()
    for c in ids:
        key = (round(float(old_cents[c][0]), 12), round(float(old_cents[c][1]), 12))
        if key in lookup:
            out.add(lookup[key])
    return out


def adaptive_loop(problem, config):
    """Run the solve/estimate/mark/adapt cycle.

    ``problem`` provides ``initial_mesh``, ``solve(mesh) -> (u, aux)``,
    ``estimate(u, aux) -> EstimateReport`` and optionally
    ``error(u) -> float``.  Returns (trace, final u, final report, mesh).
    """
    mesh = problem.initial_mesh
    trace = AdaptTrace()
    u = report = None
    for it in range(config.max_iterations + 1):
        u, aux = problem.solve(mesh)
        report = problem.estimate(u, aux)
        weighted = _weighted_total(report, config)
        err = problem.error(u) if hasattr(problem, "error") else None
        rec = AdaptRecord(it, mesh.num_cells, u.space.num_dofs,
                          report.total_R, report.total_I_upper,
                          report.total_J, weighted, error=err)
        trace.append(rec)
        if weighted <= config.tol or it == config.max_iterations:
            break
        refine_set, coarsen_set = mark(report, config, mesh)
        rec.marked_refine = len(refine_set)
        rec.marked_coarsen = len(coarsen_set)
        if coarsen_set:
            new_mesh = coarsen(mesh, coarsen_set)
            refine_set = _remap_by_centroid(mesh, refine_set, new_mesh)
            mesh = new_mesh
        mesh = refine(mesh, refine_set)
    return trace, u, report, mesh
