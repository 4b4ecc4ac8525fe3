import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from genericmech import jacobi_block as jb
from genericmech.errors import DimensionMismatch
from genericmech.field_grid import Grid


def sympy_trilinear(J, q, z1, z2, z3):
    """Independent oracle: symbolic J(q), symbolic derivative, cyclic sum."""
    n = J.size
    x = sp.symbols(f"x0:{n}")
    o = J.offsets
    q1 = sp.Matrix(x[o[0]:o[1]])
    J0, A = sp.Matrix(J.J0), J.A
    J11 = J0 + sp.Matrix(J.dims[0], J.dims[0],
                         lambda i, j: sum(A[i, j, k] * q1[k] for k in range(J.dims[0])))
    if J.kappa:
        J11 = (1 + J.kappa * sum(J.casimir[k] * q1[k] for k in range(J.dims[0]))) * J11
    if J.Q is not None:
        J11 = J11 + sp.Matrix(J.dims[0], J.dims[0], lambda i, j: sum(
            J.Q[i, j, k, l] * q1[k] * q1[l] for k in range(J.dims[0]) for l in range(J.dims[0])))
    M = sp.zeros(n, n)
    M[:o[1], :o[1]] = J11
    for b in range(1, len(J.dims)):
        qb = x[o[b]:o[b + 1]]
        Bn = J.B[b - 1]
        blk = sp.Matrix(J.dims[0], J.dims[b], lambda i, a: sum(Bn[i, a, c] * qb[c] for c in range(J.dims[b])))
        M[:o[1], o[b]:o[b + 1]] = blk
        M[o[b]:o[b + 1], :o[1]] = (1 if J.flip[b - 1] else -1) * blk.T
    subs = dict(zip(x, q))
    Mq = np.array(M.subs(subs), dtype=float)

    def term(a, b, c):
        u = Mq @ b
        DJ = sum((M.diff(x[l]) * u[l] for l in range(n)), sp.zeros(n, n))
        return float((sp.Matrix(a).T * DJ.subs(subs) * sp.Matrix(c))[0])

    return term(z1, z2, z3) + term(z2, z3, z1) + term(z3, z1, z2)


def test_sympy_oracle_dim_1_1():
    """X1 = X2 = R: J = [[0, b q2], [-b q2, 0]]; every 2-d skew field is Poisson."""
    J = jb.BlockPoisson((1, 1), np.zeros((1, 1)), np.zeros((1, 1, 1)), [np.array([[[0.7]]])])
    rng = np.random.default_rng(0)
    for _ in range(3):
        q, z1, z2, z3 = rng.standard_normal((4, 2))
        ours = jb.jacobi_trilinear(J, q, z1, z2, z3)
        ref = sympy_trilinear(J, q, z1, z2, z3)
        assert abs(ours - ref) <= 1e-12 and abs(ours) <= 1e-14
    flipped = jb.BlockPoisson((1, 1), np.zeros((1, 1)), np.zeros((1, 1, 1)), [np.array([[[0.7]]])],
                              flip=(True,))
    q, z1, z2, z3 = rng.standard_normal((4, 2))
    assert jb.jacobi_trilinear(flipped, q, z1, z2, z3) == pytest.approx(
        sympy_trilinear(flipped, q, z1, z2, z3), abs=1e-12)


@pytest.mark.parametrize("kind", ["conforming", "violate_A", "violate_B", "violate_C", "quadratic"])
def test_sympy_oracle_random_instances(kind):
    J = jb.random_instance(3, kind, m=2)
    rng = np.random.default_rng(1)
    q, z1, z2, z3 = (rng.standard_normal(J.size) for _ in range(4))
    ours = jb.jacobi_trilinear(J, q, z1, z2, z3)
    ref = sympy_trilinear(J, q, z1, z2, z3)
    assert abs(ours - ref) <= 1e-10 * jb.jacobi_scale(q, z1, z2, z3)


@given(seed=st.integers(0, 10_000), m=st.sampled_from([2, 3]))
def test_conforming_instances_satisfy_jacobi_and_conditions(seed, m):
    J = jb.random_instance(seed, "conforming", m=m)
    rng = np.random.default_rng(seed)
    assert jb.max_jacobi(J, rng) <= jb.TOL_CONFORM
    assert jb.check_conditions(J, seed=seed).passed
    assert jb.skew_defect(J, jb.random_point(J, rng)) <= 1e-14


def test_exact_derivative_matches_fd():
    J = jb.random_instance(5, "quadratic", m=2)
    rng = np.random.default_rng(5)
    q, dq = rng.standard_normal((2, J.size))
    h = 1e-5
    fd = (J.matrix(q + h * dq) - J.matrix(q - h * dq)) / (2 * h)
    assert np.max(np.abs(fd - J.dmatrix(q, dq))) <= 1e-7 * np.max(np.abs(fd))


@pytest.mark.parametrize("kind,cond", [("violate_A", "A"), ("violate_B", "B"), ("violate_C", "C")])
def test_each_violation_breaks_its_condition(kind, cond):
    for seed in range(5):
        J = jb.random_instance(seed, kind)
        rep = jb.check_conditions(J, seed=seed)
        assert not rep.ok(cond)
        assert jb.max_jacobi(J, np.random.default_rng(seed)) > jb.DETECT


def test_violate_B_keeps_A_and_pairing():
    J = jb.random_instance(2, "violate_B")
    rep = jb.check_conditions(J, seed=2)
    assert rep.ok("A") and rep.ok("pairing")


def test_quadratic_J11_negative_control_is_large():
    """DJ_11 non-constant: residual well above 1e-3 of the input scale."""
    worst = 0.0
    for seed in range(10):
        J = jb.random_instance(seed, "quadratic")
        worst = max(worst, jb.max_jacobi(J, np.random.default_rng(seed)))
    assert worst > 1e-3


def test_flip_n1_seen_by_expanded_condition_only():
    J = jb.random_instance(4, "flip_n1")
    rep = jb.check_conditions(J, seed=4)
    assert not rep.ok("C") and not rep.ok("pairing")
    assert rep.ok("C_displayed")
    assert jb.max_jacobi(J, np.random.default_rng(4)) > jb.DETECT


def test_equivalence_report(tmp_path):
    rep = jb.equivalence_theorem_test(trials=8, seed=3)
    assert all(ok == tot == 8 for ok, tot in rep.summary().values())
    rep.to_csv(tmp_path / "a.csv")
    head = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert head.startswith("kind,instance,label,cond_A")
    again = jb.equivalence_theorem_test(trials=8, seed=3)
    assert [r["jacobi"] for r in rep.rows] == [r["jacobi"] for r in again.rows]


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("block", ["alpha", "beta", "F"])
def test_continuum_condition_C(d, block):
    g = Grid(d, 32 if d == 1 else 16, 1.0)
    assert jb.continuum_condition_C(g, block, kmax=2 if d == 2 else 3) <= 1e-10


def test_gl_representations_are_homomorphisms():
    m = 2
    c = jb.gl_structure(m)
    for kind in ("std", "dual", "char"):
        R = jb.gl_representation(m, kind)
        for i in range(m * m):
            for j in range(m * m):
                comm = R[i] @ R[j] - R[j] @ R[i]
                assert np.allclose(comm, np.einsum("k,kab->ab", c[i, j], R))


def test_shape_validation():
    with pytest.raises(DimensionMismatch):
        jb.BlockPoisson((2, 1), np.zeros((2, 2)), np.zeros((2, 2, 2)), [])
    J = jb.random_instance(0, "conforming", m=2)
    with pytest.raises(DimensionMismatch):
        J.split(np.zeros(J.size + 1))
