"""Linear algebra backend: direct and Krylov solves, eigenvalue probes."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sparse
import scipy.sparse.linalg as sla

DENSE_LIMIT = 5000


class SolverFailure(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass
class LinearSolverConfig:
    method: str = "direct"          # direct | cg | bicgstab | gmres
    tol: float = 1e-12
    maxiter: int = 2000
    preconditioner: str = "ilu"     # none | diagonal | ilu

    def __post_init__(self):
        if not 0 < self.tol <= 1e-2:
            raise ValueError("tolerance must lie in (0, 1e-2]")
        if self.maxiter < 1:
            raise ValueError("max iterations must be >= 1")


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float


def _make_preconditioner(mat, kind):
    if kind == "none":
        return None
    if kind == "diagonal":
        d = mat.diagonal()
        d = np.where(np.abs(d) > 0, d, 1.0)
        return sla.LinearOperator(mat.shape, matvec=lambda x: x / d)
    if kind == "ilu":
        ilu = sla.spilu(mat.tocsc(), drop_tol=1e-5, fill_factor=20)
        return sla.LinearOperator(mat.shape, matvec=ilu.solve)
    raise ValueError(f"unknown preconditioner '{kind}'")


def solve(system, config=None):
    """Solve the assembled system; returns (x, SolveReport).

    The iterative paths start from the zero vector and fail loudly if the
    relative residual does not reach the configured tolerance.
    """
    config = config or LinearSolverConfig()
    mat = system.matrix
    b = system.rhs
    if mat.shape[0] != len(b):
        raise ValueError("rhs length mismatch")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), SolveReport(config.method, 0, 0.0)

    if config.method == "direct":
        x = sla.spsolve(mat.tocsc(), b)
        res = np.linalg.norm(b - mat @ x) / bnorm
        return x, SolveReport("direct", 0, float(res))

    if config.method == "cg" and not system.symmetric:
        raise ValueError("cg requested for a matrix not flagged symmetric")

    M = _make_preconditioner(mat, config.preconditioner)
    it = [0]

    def count(_):
        it[0] += 1

    if config.method == "cg":
        x, info = sla.cg(mat, b, rtol=config.tol, maxiter=config.maxiter,
                         M=M, callback=count)
    elif config.method == "bicgstab":
        x, info = sla.bicgstab(mat, b, rtol=config.tol, maxiter=config.maxiter,
                               M=M, callback=count)
    elif config.method == "gmres":
        x, info = sla.gmres(mat, b, rtol=config.tol, maxiter=config.maxiter,
                            M=M, callback=lambda r: count(r), restart=100)
    else:
        raise ValueError(f"unknown method '{config.method}'")
    res = float(np.linalg.norm(b - mat @ x) / bnorm)
    if info != 0 or res > 10 * config.tol:
        raise SolverFailure(f"{config.method} did not converge", res)
    return x, SolveReport(config.method, it[0], res)


def min_eigenvalue_estimate(mat):
    """Smallest eigenvalue of a symmetric sparse matrix.

    Dense solve below the desk-scale limit, shift-invert Lanczos above.
    """
    mat = sparse.csr_matrix(mat)
    asym = abs(mat - mat.T).max()
    scale = abs(mat).max()
    if asym > 1e-10 * max(scale, 1.0):
        raise ValueError("matrix is not symmetric")
    n = mat.shape[0]
    if n <= DENSE_LIMIT:
        vals = dla.eigvalsh(mat.toarray())
        return float(vals[0])
    vals = sla.eigsh(mat, k=1, sigma=0, which="LM", return_eigenvectors=False)
    return float(vals[0])
