import numpy as np
import pytest
import scipy.sparse as sparse

from dgadapt import forms, mesh as msh, solver, space as sp


def _system(mat, rhs, symmetric=True):
    return forms.SparseSystem(sparse.csr_matrix(mat), rhs, symmetric=symmetric)


def test_identity_solve():
    b = np.array([3.0, -1.0, 2.0])
    x, rep = solver.solve(_system(np.eye(3), b))
    assert np.allclose(x, b)
    assert rep.residual < 1e-14


def test_small_diagonal_system():
    x, _ = solver.solve(_system(np.diag([2.0, 3.0]), np.array([2.0, 3.0])))
    assert np.allclose(x, [1.0, 1.0])


def test_cg_and_direct_agree_on_ip():
    m = msh.make_unit_square(2)
    V = sp.FeSpace(m, 1, "dg")
    f = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    sys = forms.assemble_ip(V, sigma=10.0, f=f)
    xd, _ = solver.solve(sys, solver.LinearSolverConfig(method="direct"))
    xc, repc = solver.solve(sys, solver.LinearSolverConfig(method="cg", tol=1e-12))
    assert np.linalg.norm(xd - xc) < 1e-9 * max(1.0, np.linalg.norm(xd))
    assert repc.iterations >= 1


def test_cg_rejects_nonsymmetric():
    mat = np.array([[1.0, 2.0], [0.0, 1.0]])
    sys = _system(mat, np.ones(2), symmetric=False)
    with pytest.raises(ValueError):
        solver.solve(sys, solver.LinearSolverConfig(method="cg"))


def test_solver_failure_reported():
    # singular matrix: gmres cannot reach the tolerance
    mat = np.array([[1.0, 0.0], [0.0, 0.0]])
    sys = _system(mat, np.array([1.0, 1.0]), symmetric=True)
    with pytest.raises(solver.SolverFailure):
        solver.solve(sys, solver.LinearSolverConfig(
            method="gmres", tol=1e-10, maxiter=5, preconditioner="none"))


def test_config_validation():
    with pytest.raises(ValueError):
        solver.LinearSolverConfig(tol=0.5)
    with pytest.raises(ValueError):
        solver.LinearSolverConfig(maxiter=0)


def test_min_eigenvalue_diag():
    assert abs(solver.min_eigenvalue_estimate(
        sparse.diags([1.0, 2.0, 3.0])) - 1.0) < 1e-12


def test_min_eigenvalue_rejects_nonsymmetric():
    mat = sparse.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        solver.min_eigenvalue_estimate(mat)


def test_min_eigenvalue_large_sparse_path():
    n = solver.DENSE_LIMIT + 10
    diag = np.linspace(0.5, 4.0, n)
    lam = solver.min_eigenvalue_estimate(sparse.diags(diag))
    assert abs(lam - 0.5) < 1e-6 * 0.5


def test_bicgstab_on_nonsymmetric_nonvar():
    m = msh.make_unit_square(2)
    V = sp.FeSpace(m, 2, "dg")
    def A(x):
        out = np.zeros((len(x), 2, 2))
        out[:, 0, 0] = 2.0
        out[:, 1, 1] = np.sin(2 * np.pi * x[:, 0]) * np.sin(2 * np.pi * x[:, 1]) + 2
        return out
    coeff = forms.Coefficient(A=A, f=lambda x: np.ones(len(x)))
    sys = forms.assemble_nonvar(V, coeff, 10.0)
    xd, _ = solver.solve(sys)
    xb, rep = solver.solve(sys, solver.LinearSolverConfig(
        method="bicgstab", tol=1e-12))
    assert np.linalg.norm(xd - xb) <= 1e-8 * max(1.0, np.linalg.norm(xd))
