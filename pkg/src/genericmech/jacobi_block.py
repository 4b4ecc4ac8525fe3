"""Finite-dimensional block Poisson operators and Jacobi checks.

A block operator lives on X = X_1 x ... x X_N with

    J(q) = [[J_11(q_1), J_12(q_2), ..., J_1N(q_N)],
            [J_21(q_2), 0,         ..., 0        ],
            ...
            [J_N1(q_N), 0,         ..., 0        ]],   J_n1 = -J_1n^T.

Only the first row and column couple the blocks, as for the momentum
coupling of the continuum operator.  J_11 is affine, J_11(q_1) = J0 + A q_1,
optionally modified for negative controls (a quadratic term, or a Casimir
rescaling that keeps Jacobi on X_1 but makes DJ_11 non-constant).  The
couplings are linear, J_1n(q_n)_{i a} = sum_b B_n[i, a, b] q_n[b].

Conforming instances are Lie-Poisson operators on the dual of a semidirect
product gl(m) x| (V_2 + ... + V_N), written in randomly changed linear
coordinates and with a random affine shift of q_1.  Their Jacobi identity
holds exactly, so everything here is a polynomial identity tested to
roundoff.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .errors import DimensionMismatch
from .generic_structure import lie_0form, lie_dform, lie_dm1form, lie_vec
from .field_grid import random_smooth_field

TOL_CONFORM = 1e-10
TOL_DJ11 = 1e-12
DETECT = 1e-6


@dataclass
class BlockPoisson:
    """Block-structured operator on R^{n_1} x ... x R^{n_N}.

    J_11(q) = (1 + kappa l.q) (J0 + A q) + Q[q, q]; kappa = 0 and Q = None
    give the affine form.  `flip[n]` replaces J_n1 = -J_1n^T by +J_1n^T
    (a sign-flip control that breaks skew-symmetry).
    """
    dims: tuple
    J0: np.ndarray
    A: np.ndarray
    B: list
    Q: np.ndarray = None
    casimir: np.ndarray = None
    kappa: float = 0.0
    flip: tuple = None
    label: str = ""

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        n1 = self.dims[0]
        if len(self.dims) < 1 or len(self.B) != len(self.dims) - 1:
            raise DimensionMismatch("need one coupling tensor per block n >= 2")
        if self.J0.shape != (n1, n1) or self.A.shape != (n1, n1, n1):
            raise DimensionMismatch("J0 must be (n1, n1) and A (n1, n1, n1)")
        for Bn, nn in zip(self.B, self.dims[1:]):
            if Bn.shape != (n1, nn, nn):
                raise DimensionMismatch(f"coupling of shape {Bn.shape}, expected {(n1, nn, nn)}")
        if self.Q is not None and self.Q.shape != (n1,) * 4:
            raise DimensionMismatch("Q must be (n1, n1, n1, n1)")
        if self.flip is None:
            self.flip = (False,) * len(self.B)
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)])

    @property
    def size(self):
        return int(self.offsets[-1])

    def split(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise DimensionMismatch(f"vector of shape {x.shape}, expected ({self.size},)")
        o = self.offsets
        return [x[o[n]:o[n + 1]] for n in range(len(self.dims))]

    # block maps
    def J11(self, q1):
        out = self.J0 + self.A @ q1
        if self.kappa:
            out = (1.0 + self.kappa * self.casimir @ q1) * out
        if self.Q is not None:
            out = out + np.einsum("ijkl,k,l->ij", self.Q, q1, q1)
        return out

    def DJ11(self, q1, dq1):
        out = self.A @ dq1
        if self.kappa:
            out = ((1.0 + self.kappa * self.casimir @ q1) * out
                   + self.kappa * (self.casimir @ dq1) * (self.J0 + self.A @ q1))
        if self.Q is not None:
            out = out + np.einsum("ijkl,k,l->ij", self.Q, dq1, q1) + np.einsum("ijkl,k,l->ij", self.Q, q1, dq1)
        return out

    def J1n(self, n, qn):
        """Coupling J_1n(q_n) as an (n_1, n_n) matrix; n counts from 1 (first coupled block)."""
        return self.B[n - 1] @ qn

    def Jn1(self, n, qn):
        s = 1.0 if self.flip[n - 1] else -1.0
        return s * self.J1n(n, qn).T

    def matrix(self, q):
        qs = self.split(q)
        o = self.offsets
        M = np.zeros((self.size, self.size))
        M[:o[1], :o[1]] = self.J11(qs[0])
        for n in range(1, len(self.dims)):
            M[:o[1], o[n]:o[n + 1]] = self.J1n(n, qs[n])
            M[o[n]:o[n + 1], :o[1]] = self.Jn1(n, qs[n])
        return M

    def dmatrix(self, q, dq):
        """Exact directional derivative DJ(q)[dq]."""
        qs, ds = self.split(q), self.split(dq)
        o = self.offsets
        M = np.zeros((self.size, self.size))
        M[:o[1], :o[1]] = self.DJ11(qs[0], ds[0])
        for n in range(1, len(self.dims)):
            M[:o[1], o[n]:o[n + 1]] = self.J1n(n, ds[n])
            M[o[n]:o[n + 1], :o[1]] = self.Jn1(n, ds[n])
        return M

    def restrict(self):
        """The operator J_11 alone, as a one-block instance."""
        return BlockPoisson((self.dims[0],), self.J0, self.A, [], self.Q, self.casimir,
                            self.kappa, (), self.label + "|X1")


def jacobi_trilinear(J, q, z1, z2, z3):
    """<z1, DJ(q)[J(q) z2] z3> + cyclic permutations (exact DJ)."""
    for x in (q, z1, z2, z3):
        J.split(x)
    M = J.matrix(q)

    def term(a, b, c):
        return float(a @ J.dmatrix(q, M @ b) @ c)

    return term(z1, z2, z3) + term(z2, z3, z1) + term(z3, z1, z2)


def jacobi_scale(q, z1, z2, z3):
    return (np.linalg.norm(z1) * np.linalg.norm(z2) * np.linalg.norm(z3)
            * (1.0 + np.linalg.norm(q)))


def jacobi_residual(J, q, z1, z2, z3):
    """Trilinear residual normalized by |z1||z2||z3|(1 + |q|)."""
    return abs(jacobi_trilinear(J, q, z1, z2, z3)) / jacobi_scale(q, z1, z2, z3)


def skew_defect(J, q):
    M = J.matrix(q)
    return float(np.abs(M + M.T).max() / max(np.abs(M).max(), 1e-300))


# --- random instances -----------------------------------------------------------

def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gl_structure(m):
    """Structure constants c[i, j, k] of gl(m) in the basis E_ab, index i = a m + b."""
    n = m * m
    c = np.zeros((n, n, n))
    for a in range(m):
        for b in range(m):
            for cc in range(m):
                for d in range(m):
                    i, j = a * m + b, cc * m + d
                    # [E_ab, E_cd] = delta_bc E_ad - delta_da E_cb
                    if b == cc:
                        c[i, j, a * m + d] += 1.0
                    if d == a:
                        c[i, j, cc * m + b] -= 1.0
    return c


def gl_representation(m, kind, weight=1.0):
    """Matrices R_i of a gl(m) representation: 'std', 'dual' or 'char' (weight * trace)."""
    reps = []
    for a in range(m):
        for b in range(m):
            E = np.zeros((m, m))
            E[a, b] = 1.0
            if kind == "std":
                reps.append(E)
            elif kind == "dual":
                reps.append(-E.T)
            elif kind == "char":
                reps.append(np.array([[weight * float(a == b)]]))
            else:
                raise ValueError(f"unknown representation {kind!r}")
    return np.array(reps)


def _basis_change(rng, n):
    """Random well-conditioned invertible matrix (singular values in [e^-.5, e^.5])."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return U @ np.diag(np.exp(rng.uniform(-0.5, 0.5, n))) @ V


def _skew_ij(T):
    return 0.5 * (T - np.swapaxes(T, 0, 1))


KINDS = ("conforming", "violate_A", "violate_B", "violate_C", "quadratic", "flip_n1")


def random_instance(seed, kind="conforming", m=None, reps=None, shift=True):
    """Random block operator of the given kind.

    conforming  Lie-Poisson on (gl(m) x| V)^*, changed coordinates, shifted q_1
    violate_A   random skew A (no Lie algebra), zero coupling; (B), (C) hold
    violate_B   Casimir-rescaled J_11 = (1 + kappa tr) A q_1; (A), (C) hold
    violate_C   conforming J_11 with perturbed representation matrices
    quadratic   conforming plus a random skew quadratic term in J_11
    flip_n1     conforming with J_n1 = +J_1n^T in every coupled block
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    rng = _rng(seed)
    m = int(rng.integers(2, 4)) if m is None else m
    if reps is None:
        nb = int(rng.integers(1, 4))
        reps = tuple(rng.choice(["std", "dual", "char"], nb))
    n1 = m * m
    c = gl_structure(m)
    # J_11(mu)_ij = c_ij^k mu_k  ->  A[i, j, k] = c[i, j, k]
    A = c.copy()
    Rs = [gl_representation(m, r, weight=rng.uniform(0.5, 2.0)) for r in reps]
    # J_1n(a)_{i alpha} = sum_beta R_i[beta, alpha] a_beta
    B = [np.transpose(R, (0, 2, 1)) for R in Rs]
    ell = np.eye(m).ravel()  # the identity of gl(m), dC for the Casimir tr

    P = _basis_change(rng, n1)
    Pinv = np.linalg.inv(P)
    A = np.einsum("ia,jb,abc,ck->ijk", P, P, A, Pinv)
    ell = Pinv.T @ ell
    Bp = []
    for Bn in B:
        Qn = _basis_change(rng, Bn.shape[1])
        Bp.append(np.einsum("ia,aqr,pq,rs->ips", P, Bn, Qn, np.linalg.inv(Qn)))
    B = Bp
    J0 = np.zeros((n1, n1))
    if shift and kind not in ("violate_B",):
        J0 = A @ rng.standard_normal(n1)

    dims = (n1,) + tuple(Bn.shape[1] for Bn in B)
    kw = dict(label=f"{kind}:gl({m}):{','.join(reps)}")
    if kind == "violate_A":
        A = _skew_ij(rng.standard_normal((n1, n1, n1)))
        J0 = _skew_ij(rng.standard_normal((n1, n1)))
        B = [np.zeros_like(Bn) for Bn in B]
    elif kind == "violate_B":
        kw.update(casimir=ell, kappa=float(rng.uniform(0.5, 1.5)))
    elif kind == "violate_C":
        B = [Bn + 0.3 * rng.standard_normal(Bn.shape) for Bn in B]
    elif kind == "quadratic":
        Q = rng.standard_normal((n1,) * 4)
        kw.update(Q=0.5 * (Q - np.swapaxes(Q, 0, 1)))
    elif kind == "flip_n1":
        kw.update(flip=(True,) * len(B))
    return BlockPoisson(dims, J0, A, B, **kw)


def random_point(J, rng):
    return rng.standard_normal(J.size)


# --- Proposition conditions -----------------------------------------------------

@dataclass
class ConditionReport:
    values: dict = field(default_factory=dict)
    tols: dict = field(default_factory=lambda: {"A": TOL_CONFORM, "B": TOL_DJ11, "C": TOL_CONFORM,
                                                "C_displayed": TOL_CONFORM, "pairing": 0.0})

    def ok(self, key):
        return self.values[key] <= self.tols[key]

    @property
    def passed(self):
        return all(self.ok(k) for k in self.values)

    def failed(self):
        return [k for k in self.values if not self.ok(k)]


def condition_A(J, rng, trials=3):
    J1 = J.restrict()
    worst = 0.0
    for _ in range(trials):
        x = [rng.standard_normal(J1.size) for _ in range(4)]
        worst = max(worst, jacobi_residual(J1, *x))
    return worst


def condition_B(J, rng, trials=3, h=0.5):
    """Central-difference DJ_11 at two base points; relative disagreement."""
    n1 = J.dims[0]
    worst = 0.0
    for _ in range(trials):
        qa, qb, dq = (rng.standard_normal(n1) for _ in range(3))

        def fd(q):
            return (J.J11(q + h * dq) - J.J11(q - h * dq)) / (2 * h)

        Da, Db = fd(qa), fd(qb)
        scale = max(np.abs(Da).max(), np.abs(Db).max(), 1e-300)
        worst = max(worst, float(np.abs(Da - Db).max() / scale))
    return worst


def condition_C_residual(J, n, qn, zeta, v, w, form="expanded"):
    """Residual of condition (C) for block n, normalized by |v||w||zeta|(1 + |q_n|).

    form="displayed":
        <v, (A J_1n zeta) w> - <zeta, DJ_n1[J_n1 v] w> + <zeta, DJ_n1[J_n1 w] v>
    form="expanded" (before J_1n = -J_n1^T is used):
        <v, (A J_1n zeta) w> + <w, DJ_1n[J_n1 v] zeta> + <zeta, DJ_n1[J_n1 w] v>
    The two agree when the pairing holds.  The displayed form is even in
    J_n1 and so cannot see a sign flip of J_n1 alone; the expanded one can.
    A = DJ_11(0); DJ_1n, DJ_n1 are the (linear) couplings themselves.
    """
    n1 = J.dims[0]
    A_x = J.DJ11(np.zeros(n1), J.J1n(n, qn) @ zeta)
    lhs = v @ A_x @ w
    last = zeta @ J.Jn1(n, J.Jn1(n, qn) @ w) @ v
    if form == "displayed":
        mid = -(zeta @ J.Jn1(n, J.Jn1(n, qn) @ v) @ w)
    elif form == "expanded":
        mid = w @ J.J1n(n, J.Jn1(n, qn) @ v) @ zeta
    else:
        raise ValueError("form must be 'expanded' or 'displayed'")
    scale = (np.linalg.norm(v) * np.linalg.norm(w) * np.linalg.norm(zeta)
             * (1.0 + np.linalg.norm(qn)))
    return abs(lhs + mid + last) / scale


def condition_C(J, rng, trials=3, form="expanded"):
    n1 = J.dims[0]
    worst = 0.0
    for _ in range(trials):
        for n in range(1, len(J.dims)):
            nn = J.dims[n]
            worst = max(worst, condition_C_residual(
                J, n, rng.standard_normal(nn), rng.standard_normal(nn),
                rng.standard_normal(n1), rng.standard_normal(n1), form=form))
    return worst


def pairing_defect(J, rng, trials=3):
    """max |J_n1(q_n) + J_1n(q_n)^T| relative, the structural skew pairing."""
    worst = 0.0
    for _ in range(trials):
        for n in range(1, len(J.dims)):
            qn = rng.standard_normal(J.dims[n])
            M1, Mn = J.J1n(n, qn), J.Jn1(n, qn)
            worst = max(worst, float(np.abs(Mn + M1.T).max() / max(np.abs(M1).max(), 1e-300)))
    return worst


def check_conditions(J, trials=3, seed=0):
    """Report of the block conditions (A), (B), (C) for one operator.

    Alongside the three conditions the report holds the displayed form of
    (C) and the exact skew pairing J_n1 = -J_1n^T the criterion presumes.
    """
    rng = _rng(seed)
    rep = ConditionReport()
    rep.values["A"] = condition_A(J, rng, trials)
    rep.values["B"] = condition_B(J, rng, trials)
    rep.values["C"] = condition_C(J, rng, trials)
    rep.values["C_displayed"] = condition_C(J, rng, trials, form="displayed")
    rep.values["pairing"] = pairing_defect(J, rng, trials)
    return rep


def max_jacobi(J, rng, directions=5):
    worst = 0.0
    for _ in range(directions):
        x = [random_point(J, rng) for _ in range(4)]
        worst = max(worst, jacobi_residual(J, *x))
    return worst


# --- the equivalence test -------------------------------------------------------

TARGET = {"violate_A": "A", "violate_B": "B", "violate_C": "C"}


@dataclass
class EquivalenceReport:
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def of_kind(self, kind):
        return [r for r in self.rows if r["kind"] == kind]

    def summary(self):
        """kind -> (successes, total); success = pass for conforming, flagged otherwise."""
        out = {}
        for r in self.rows:
            s, t = out.get(r["kind"], (0, 0))
            out[r["kind"]] = (s + int(r["verdict"]), t + 1)
        return out

    def to_csv(self, path):
        keys = ["kind", "instance", "label", "cond_A", "cond_B", "cond_C", "pairing", "jacobi", "skew", "verdict"]
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=keys)
            wr.writeheader()
            for r in self.rows:
                wr.writerow({k: r[k] for k in keys})


def classify(J, kind, rng, cond_trials=3, directions=5):
    """Conditions, Jacobi residual and verdict for one instance.

    A conforming instance passes if all conditions hold and the Jacobi
    residual is <= TOL_CONFORM in every sampled direction.  A violating
    instance is flagged if its targeted condition fails and the Jacobi
    residual exceeds DETECT in at least one sampled direction.
    """
    rep = check_conditions(J, trials=cond_trials, seed=rng)
    jac = max_jacobi(J, rng, directions)
    if kind == "conforming":
        verdict = rep.passed and jac <= TOL_CONFORM
    elif kind in TARGET:
        verdict = (not rep.ok(TARGET[kind])) and jac > DETECT
    else:
        verdict = jac > DETECT
    return rep, jac, bool(verdict)


def equivalence_theorem_test(trials=50, seed=0, kinds=("conforming", "violate_A", "violate_B", "violate_C"),
                             directions=5):
    """Both directions of the block criterion over random instances.

    Sufficiency: conforming instances have vanishing Jacobi residual.
    Necessity: an instance breaking exactly one condition is caught by the
    condition check and by a nonzero trilinear residual in some direction.
    """
    ss = np.random.SeedSequence(seed)
    report = EquivalenceReport()
    for kind, child in zip(kinds, ss.spawn(len(kinds))):
        for i, s in enumerate(child.spawn(trials)):
            rng = np.random.default_rng(s)
            J = random_instance(rng, kind)
            rep, jac, verdict = classify(J, kind, rng, directions=directions)
            report.add(kind=kind, instance=i, label=J.label, cond_A=rep.values["A"],
                       cond_B=rep.values["B"], cond_C=rep.values["C"], pairing=rep.values["pairing"], jacobi=jac,
                       skew=skew_defect(J, random_point(J, rng)), verdict=verdict)
    return report


# --- condition (C) for the continuum momentum coupling --------------------------

def _Jpp(grid, p, z):
    """Momentum self-coupling J_pp(p) z = -div(p (x) z) - (grad z)^T p."""
    return -lie_dm1form(grid, z, p)


def continuum_condition_C(grid, block="alpha", kmax=3, seed=0, trials=3):
    """Condition (C) for the field blocks coupled to momentum, on low-mode fields.

    X_1 holds the momentum density with A[x] = J_pp(x); the coupled block
    is alpha (0-form: J_1a a = a grad alpha, J_a1 z = -z . grad alpha),
    beta (d-form: J_1b b = -beta grad b, J_b1 z = -div(beta z)) or F
    (columns transported as vectors).  All fields carry modes |m| <= kmax,
    so every product stays resolved and the residual is roundoff.
    """
    rng = _rng(seed)
    d = grid.d
    comp = {"alpha": (), "beta": (), "F": (d, d)}[block]

    def rnd(shape):
        return random_smooth_field(grid, kmax, rng, shape=shape)

    def J1n(qn, zeta):
        if block == "alpha":
            return zeta[..., None] * grid.grad(qn)
        if block == "beta":
            return -qn[..., None] * grid.grad(zeta)
        return np.einsum("...ijk,...ij->...k", grid.grad(qn), zeta) + grid.div(tc.matmul(zeta, tc.transpose(qn)))

    def Jn1(qn, z):
        if block == "alpha":
            return -lie_0form(grid, z, qn)
        if block == "beta":
            return -lie_dform(grid, z, qn)
        return -lie_vec(grid, z, qn)

    worst = 0.0
    for _ in range(trials):
        qn, zeta = rnd(comp), rnd(comp)
        v, w = rnd((d,)), rnd((d,))
        lhs = grid.inner(v, _Jpp(grid, J1n(qn, zeta), w))
        r1 = grid.inner(zeta, Jn1(Jn1(qn, v), w))
        r2 = grid.inner(zeta, Jn1(Jn1(qn, w), v))
        scale = grid.norm(v) * grid.norm(w) * grid.norm(zeta) * (1.0 + grid.norm(qn))
        worst = max(worst, abs(lhs - r1 + r2) / scale)
    return worst
