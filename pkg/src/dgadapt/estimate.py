"""Residual, jump and inconsistency error indicators.

Every estimator returns an EstimateReport with per-cell residual and
inconsistency contributions and per-edge jump contributions, all stored
as squared quantities' square roots (eta >= 0), plus the norm the total
bounds.  Conventions shared by all families:

* value-jump terms include boundary edges (weak Dirichlet data),
  gradient-jump terms are interior only;
* projected residual and flux-jump terms are polynomial and evaluated
  exactly at the scheme's quadrature order; raw-data terms (the
  inconsistency / data oscillation parts) use an overkill rule.
"""

from dataclasses import dataclass, field

import numpy as np

from .forms import overkill_rule
from .quadrature import edge_rule, triangle_rule
from .reconstruct import embed_dg, oswald
from .space import (
    edge_grad_jump_sq,
    edge_traces,
    edge_value_jump_sq,
    eenorm_error,
    enorm_error,
    l2_error,
    project_values,
    sample_callable,
)


@dataclass
class EstimateReport:
    family: str
    norm: str                      # enorm | l2 | eenorm
    eta_R: np.ndarray              # per cell
    eta_J: np.ndarray              # per edge
    eta_I: np.ndarray = None       # per cell (efficiency side), optional
    eta_I_upper: np.ndarray = None # per cell (reliability side), optional
    flags: dict = field(default_factory=dict)

    @property
    def total_R(self):
        return float(np.sqrt(np.sum(self.eta_R**2)))

    @property
    def total_J(self):
        return float(np.sqrt(np.sum(self.eta_J**2)))

    @property
    def total_I(self):
        if self.eta_I is None:
            return 0.0
        return float(np.sqrt(np.sum(self.eta_I**2)))

    @property
    def total_I_upper(self):
        if self.eta_I_upper is None:
            return self.total_I
        return float(np.sqrt(np.sum(self.eta_I_upper**2)))

    @property
    def total(self):
        return float(np.sqrt(self.total_R**2 + self.total_J**2
                             + self.total_I_upper**2))

    def marking_eta_I(self):
        if self.eta_I_upper is not None:
            return self.eta_I_upper
        return self.eta_I


@dataclass
class Effectivity:
    estimator: float
    error: float
    index: float
    efficiency_ratio: float      # (H_R + H_J) / (error + H_I)
    unbounded: bool = False


def _cell_l2_sq(space, values, rule):
    """Per-cell int of values^2; values shaped (nc, np)."""
    det = np.abs(space.geometry.det)
    return np.einsum("c,p,cp->c", det, rule.weights, values**2)


def _laplace_residual_sq(u_h, f, rule):
    space = u_h.space
    hess = u_h.eval_cells(rule.xy, deriv=2)
    lap = hess[:, :, 0, 0] + hess[:, :, 1, 1]
    fv = sample_callable(f, space.mesh, rule)
    return _cell_l2_sq(space, fv + lap, rule)


def estimate_energy_laplace(u_h, f, sigma):
    """Energy-norm estimator for the IP and BZ Laplace approximations.

    eta_R^2 = h_K^2 ||f + Lap u_h||_K^2,
    eta_J^2 = h_e ||[grad u_h]||_e^2 + sigma/h_e ||[u_h]||_e^2.
    One formula serves both methods.
    """
    space = u_h.space
    mesh = space.mesh
    h = mesh.cell_diameters()
    rule = overkill_rule(space.degree)
    res_sq = _laplace_residual_sq(u_h, f, rule)
    eta_r = np.sqrt(h**2 * res_sq)
    erule = edge_rule(2 * space.degree)
    he = mesh.skeleton().length
    jump_sq = (he * edge_grad_jump_sq(u_h, erule)
               + sigma / he * edge_value_jump_sq(u_h, erule))
    return EstimateReport("energy-laplace", "enorm", eta_r, np.sqrt(jump_sq))


def estimate_l2_dual(u_h, f, sigma, beta=None):
    """L2 dual-norm estimator (adjoint consistent IP, or over-penalized
    BZ with beta >= 3).

    eta_R^2 = h_K^4 ||f + Lap u_h||_K^2,
    eta_J^2 = h_e^3 ||[grad u_h]||_e^2 + sigma h_e ||[u_h]||_e^2.
    """
    space = u_h.space
    mesh = space.mesh
    h = mesh.cell_diameters()
    rule = overkill_rule(space.degree)
    res_sq = _laplace_residual_sq(u_h, f, rule)
    eta_r = np.sqrt(h**4 * res_sq)
    erule = edge_rule(2 * space.degree)
    he = mesh.skeleton().length
    jump_sq = (he**3 * edge_grad_jump_sq(u_h, erule)
               + sigma * he * edge_value_jump_sq(u_h, erule))
    flags = {}
    if beta is not None and beta < 3:
        flags["bound_not_guaranteed"] = True
    return EstimateReport("l2-dual", "l2", eta_r, np.sqrt(jump_sq), flags=flags)


def _projected_flux(u_h, coeff, scheme_rule):
    """Discrete P_{k-1} projection of A grad u_h, per component."""
    space = u_h.space
    a = np.moveaxis(sample_callable(coeff.a_values, space.mesh, scheme_rule,
                                    vshape=(2, 2)), (0, 1), (-2, -1))
    grad = u_h.eval_cells(scheme_rule.xy, deriv=1)
    flux = np.einsum("cpij,cpj->icp", a, grad)  # (2, nc, np)
    return project_values(flux, space.degree - 1, space.mesh, scheme_rule)


def _flux_jump_sq(pflux, rule):
    """Per-edge int_e (normal jump of a vector field)^2, interior only."""
    skel = pflux.space.mesh.skeleton()
    vl, vr = edge_traces(pflux, rule)  # (2, ne, np) each
    jn = np.einsum("iep,ei->ep", vl - vr, skel.normal)
    per_edge = skel.length * (rule.weights[None, :] * jn**2).sum(axis=1)
    return np.where(skel.boundary, 0.0, per_edge)


def _quad_residual(u_h, coeff, scheme_rule):
    """eta_R of the quadrature estimators: exact at the scheme order."""
    space = u_h.space
    mesh = space.mesh
    k = space.degree
    from .space import l2_project
    pf = l2_project(coeff.f, max(k - 2, 0), mesh, rule=scheme_rule)
    pflux = _projected_flux(u_h, coeff, scheme_rule)
    pf_vals = pf.eval_cells(scheme_rule.xy)
    dflux = pflux.eval_cells(scheme_rule.xy, deriv=1)  # (2, nc, np, 2)
    div = dflux[0, :, :, 0] + dflux[1, :, :, 1]
    h = mesh.cell_diameters()
    res_sq = _cell_l2_sq(space, pf_vals + div, scheme_rule)
    return np.sqrt(h**2 * res_sq), pf, pflux


def _data_oscillation(u_h, coeff, pf, scheme_rule, flux_of=None):
    """eta_I^2 = h^2 ||f - P f||^2 + ||(P - Id)(A grad w)||^2, overkill."""
    space = u_h.space
    mesh = space.mesh
    w = flux_of if flux_of is not None else u_h
    rule = overkill_rule(space.degree)
    fv = sample_callable(coeff.f, mesh, rule)
    pfv = pf.eval_cells(rule.xy)
    h = mesh.cell_diameters()
    osc_f = h**2 * _cell_l2_sq(space, fv - pfv, rule)

    a = np.moveaxis(sample_callable(coeff.a_values, mesh, rule, vshape=(2, 2)),
                    (0, 1), (-2, -1))
    grad = w.eval_cells(rule.xy, deriv=1)
    flux = np.einsum("cpij,cpj->icp", a, grad)
    pflux = _projected_flux(w, coeff, scheme_rule)
    pflux_v = pflux.eval_cells(rule.xy)
    diff = flux - pflux_v
    det = np.abs(space.geometry.det)
    osc_flux = np.einsum("c,p,icp->c", det, rule.weights, diff**2)
    return osc_f + osc_flux


def estimate_cg_quad(u_h, coeff):
    """Estimator for the conforming scheme under quadrature.

    eta_R and eta_J involve only projected data and are exact at the
    scheme order; eta_I is the data oscillation, evaluated overkill.
    """
    space = u_h.space
    k = space.degree
    scheme_rule = triangle_rule(max(2 * k - 2, 1))
    eta_r, pf, pflux = _quad_residual(u_h, coeff, scheme_rule)
    erule = edge_rule(max(2 * (k - 1), 1))
    he = space.mesh.skeleton().length
    eta_j = np.sqrt(he * _flux_jump_sq(pflux, erule))
    eta_i = np.sqrt(_data_oscillation(u_h, coeff, pf, scheme_rule))
    return EstimateReport("cg-quad", "enorm", eta_r, eta_j, eta_i)


def estimate_dg_quad(u_h, coeff, sigma):
    """Estimator for the dG interior penalty scheme under quadrature.

    The reliability-side inconsistency uses the conforming reconstruction
    of u_h; the efficiency side replaces it by u_h itself.  eta_J gains
    the penalty jump of u_h.
    """
    space = u_h.space
    k = space.degree
    scheme_rule = triangle_rule(max(2 * k - 2, 1))
    eta_r, pf, pflux = _quad_residual(u_h, coeff, scheme_rule)
    erule = edge_rule(2 * k)
    he = space.mesh.skeleton().length
    jump_sq = (he * _flux_jump_sq(pflux, erule)
               + sigma / he * edge_value_jump_sq(u_h, erule))
    eta_i = np.sqrt(_data_oscillation(u_h, coeff, pf, scheme_rule))
    rec = embed_dg(oswald(u_h), space)
    eta_i_up = np.sqrt(_data_oscillation(u_h, coeff, pf, scheme_rule,
                                         flux_of=rec))
    return EstimateReport("dg-quad", "enorm", eta_r, np.sqrt(jump_sq),
                          eta_i, eta_i_up)


def _a_frobenius_hess(coeff, w, rule):
    """Values of A : M at cell quadrature points for a matrix field M."""
    mesh = w.space.mesh
    a = np.moveaxis(sample_callable(coeff.a_values, mesh, rule, vshape=(2, 2)),
                    (0, 1), (-2, -1))
    m = w.eval_cells(rule.xy)  # (2, 2, nc, np)
    return np.einsum("cpij,ijcp->cp", a, m)


def _nonvar_jumps(u_h):
    """eta_J^2 = h^-1 ||[grad u_h]||^2 + h^-3 ||[u_h]||^2 per edge."""
    erule = edge_rule(2 * u_h.space.degree)
    he = u_h.space.mesh.skeleton().length
    return (edge_grad_jump_sq(u_h, erule) / he
            + edge_value_jump_sq(u_h, erule) / he**3)


def estimate_nonvar(u_h, coeff, sigma, H=None, mode="inconsistent"):
    """H2-norm estimator for the nonvariational schemes.

    eta_R^2 = ||f - A : H(u_h)||_K^2 (inconsistent mode) or
              ||f - A : Hess u_h||_K^2 (consistent mode);
    eta_J^2 = h^-1 ||[grad u_h]||^2 + h^-3 ||[u_h]||^2.
    """
    if mode not in ("inconsistent", "consistent"):
        raise ValueError("mode must be 'inconsistent' or 'consistent'")
    if mode == "inconsistent" and H is None:
        raise ValueError("inconsistent mode requires the finite element Hessian")
    space = u_h.space
    rule = overkill_rule(space.degree)
    fv = sample_callable(coeff.f, space.mesh, rule)
    if mode == "inconsistent":
        ah = _a_frobenius_hess(coeff, H, rule)
    else:
        a = np.moveaxis(sample_callable(coeff.a_values, space.mesh, rule,
                                        vshape=(2, 2)), (0, 1), (-2, -1))
        hess = u_h.eval_cells(rule.xy, deriv=2)
        ah = np.einsum("cpij,cpij->cp", a, hess)
    eta_r = np.sqrt(_cell_l2_sq(space, fv - ah, rule))
    eta_j = np.sqrt(_nonvar_jumps(u_h))
    family = "nonvar" if mode == "inconsistent" else "nonvar-consistent"
    return EstimateReport(family, "eenorm", eta_r, eta_j)


def estimate_nonvar_quad(u_h, coeff, sigma, H):
    """Nonvariational estimator with quadrature data approximation.

    eta_R compares projected data with the projected discrete operator;
    eta_I carries the unprojected parts.  The reliability-side eta_I uses
    the Hessian of the conforming reconstruction as a computable
    surrogate for the H2 reconstruction term (flagged in the report).
    """
    from .forms import fe_hessian
    space = u_h.space
    k = space.degree
    mesh = space.mesh
    scheme_rule = triangle_rule(max(2 * k - 2, 1))
    over = overkill_rule(k)
    m = max(k - 2, 0)
    from .space import l2_project
    pf = l2_project(coeff.f, m, mesh, rule=scheme_rule)
    ah_scheme = _a_frobenius_hess(coeff, H, scheme_rule)
    p_ah = project_values(ah_scheme, m, mesh, scheme_rule)
    res = pf.eval_cells(scheme_rule.xy) - p_ah.eval_cells(scheme_rule.xy)
    eta_r = np.sqrt(_cell_l2_sq(space, res, scheme_rule))

    fv = sample_callable(coeff.f, mesh, over)
    osc_f = _cell_l2_sq(space, fv - pf.eval_cells(over.xy), over)
    ah_over = _a_frobenius_hess(coeff, H, over)
    osc_ah = _cell_l2_sq(space, ah_over - p_ah.eval_cells(over.xy), over)
    eta_i = np.sqrt(osc_f + osc_ah)

    rec = embed_dg(oswald(u_h), space)
    h_rec = fe_hessian(rec)
    ah_rec_scheme = _a_frobenius_hess(coeff, h_rec, scheme_rule)
    p_ah_rec = project_values(ah_rec_scheme, m, mesh, scheme_rule)
    ah_rec_over = _a_frobenius_hess(coeff, h_rec, over)
    osc_rec = _cell_l2_sq(space, ah_rec_over - p_ah_rec.eval_cells(over.xy), over)
    eta_i_up = np.sqrt(osc_f + osc_rec)

    eta_j = np.sqrt(_nonvar_jumps(u_h))
    return EstimateReport("nonvar-quad", "eenorm", eta_r, eta_j, eta_i,
                          eta_i_up, flags={"surrogate_E2": True})


def estimate_nonvar_dual(u_h, coeff, H):
    """L2 dual estimator for the nonvariational scheme.

    eta_R^2 = h^4 ||f - A : H(u_h)||^2,
    eta_J^2 = h^3 ||[grad u_h]||^2 + h ||[u_h]||^2.
    Valid only under dual well-posedness (flagged, not checked).
    """
    space = u_h.space
    mesh = space.mesh
    rule = overkill_rule(space.degree)
    fv = sample_callable(coeff.f, mesh, rule)
    ah = _a_frobenius_hess(coeff, H, rule)
    h = mesh.cell_diameters()
    eta_r = np.sqrt(h**4 * _cell_l2_sq(space, fv - ah, rule))
    erule = edge_rule(2 * space.degree)
    he = mesh.skeleton().length
    jump_sq = (he**3 * edge_grad_jump_sq(u_h, erule)
               + he * edge_value_jump_sq(u_h, erule))
    return EstimateReport("nonvar-dual", "l2", eta_r, np.sqrt(jump_sq),
                          flags={"assumes_dual_well_posed": True})


def true_error(u_h, coeff, norm):
    if norm == "enorm":
        return enorm_error(u_h, coeff.grad)
    if norm == "l2":
        return l2_error(u_h, coeff.exact)
    if norm == "eenorm":
        return eenorm_error(u_h, coeff.hess)
    raise ValueError(f"unknown norm '{norm}'")


def effectivity(report, coeff, u_h):
    """Estimator total over true error, plus the efficiency-side ratio."""
    err = true_error(u_h, coeff, report.norm)
    total = report.total
    if err == 0.0:
        return Effectivity(total, 0.0, np.inf if total > 0 else 1.0,
                           0.0, unbounded=total > 0)
    ratio = (report.total_R + report.total_J) / (err + report.total_I)
    return Effectivity(total, err, total / err, ratio)
