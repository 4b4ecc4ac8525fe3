"""Poisson and Onsager structure of the Eulerian thermo-visco-elastoplastic model.

Everything here acts on fields over a periodic :class:`~genericmech.field_grid.Grid`.
A state q = (p, F_e, alpha, beta, w) and a covector zeta share the
:class:`~genericmech.constitutive.State` container.

Reversible dynamics:  dq/dt = J(q) DE(q), with J block structured, only
the momentum row and column coupling to the other blocks.  Irreversible
dynamics:  dq/dt = N_E(q) dR*_simple(q, N_E(q)^* DS(q)), with N_E^* built
so that N_E^* DE = (0, ..., 0, 1).

The operators are assembled exactly as skew/adjoint pairs of the discrete
(spectral) derivative, so skew-symmetry, the non-interaction conditions
and the global energy balance hold to roundoff on the grid.  Jacobi's
identity and the pointwise cancellations are continuum identities that
hold on the grid up to aliasing of nonlinear products.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .constitutive import State, ThermalGauge
from .errors import DegenerateEnergySlope, DegenerateEntropySlope, GridMismatch
from .field_grid import random_smooth_field

CORRUPTIONS = ("pbeta_sign", "pp_sign", "wp_sign")


# --- Lie derivatives along v -------------------------------------------------------

def _check(grid, *fields):
    for f in fields:
        if np.shape(f)[:grid.d] != grid.N:
            raise GridMismatch(f"field of shape {np.shape(f)} not on grid {grid.N}")


def lie_0form(grid, v, a):
    """v . grad a  (intensive scalar)."""
    _check(grid, v, a)
    return tc.dot(v, grid.grad(a))


def lie_dform(grid, v, b):
    """div(b v)  (extensive scalar density)."""
    _check(grid, v, b)
    return grid.div(b[..., None] * v)


def lie_vec(grid, v, G):
    """(v . grad) G - (grad v) G, acting on a vector field or on the columns of G."""
    _check(grid, v, G)
    Lv = grid.grad(v)
    if G.ndim == grid.d + 1:
        return tc.matvec(grid.grad(G), v) - tc.matvec(Lv, G)
    return np.einsum("...ijk,...k->...ij", grid.grad(G), v) - tc.matmul(Lv, G)


def lie_dm1form(grid, v, q):
    """div(q (x) v) + (grad v)^T q  ((d-1)-form, e.g. momentum density)."""
    _check(grid, v, q)
    return grid.div(tc.outer(q, v)) + tc.matvec(tc.transpose(grid.grad(v)), q)


def bracket(grid, v, w):
    """[[v, w]] = (grad w) v - (grad v) w = L_v w."""
    return tc.matvec(grid.grad(w), v) - tc.matvec(grid.grad(v), w)


# --- energy and entropy functionals ----------------------------------------------------

def density(model, q):
    return model.rho_ref / tc.det(q.F)


def velocity(model, q):
    return q.p / density(model, q)[..., None]


def DE(model, q, ev=None):
    ev = model.evaluate_state(q) if ev is None else ev
    rho = density(model, q)
    kin = tc.dot(q.p, q.p) / (2 * rho)
    return State(q.p / rho[..., None], ev.E_F + kin[..., None, None] * tc.inv_transpose(q.F),
                 ev.E_a, ev.E_b, ev.E_w)


def DS(model, q, ev=None):
    ev = model.evaluate_state(q) if ev is None else ev
    return State(np.zeros_like(q.p), ev.S_F, ev.S_a, ev.S_b, ev.S_w)


def energy_density(model, q, ev=None):
    ev = model.evaluate_state(q) if ev is None else ev
    return tc.dot(q.p, q.p) / (2 * density(model, q)) + ev.E


def total_energy(grid, model, q, ev=None):
    return grid.integrate(energy_density(model, q, ev))


def kinetic_energy(grid, model, q):
    return grid.integrate(tc.dot(q.p, q.p) / (2 * density(model, q)))


def total_entropy(grid, model, q, ev=None):
    ev = model.evaluate_state(q) if ev is None else ev
    return grid.integrate(ev.S)


# --- Poisson operator -----------------------------------------------------------------

class PoissonOperator:
    """zeta -> J(q) zeta for a fixed state field q.

    `blocks` restricts the assembly ("all", or "transport" for the momentum
    self-coupling J^pp alone).  `corrupt` holds negative-control switches:
    "pbeta_sign" flips J^{p beta} only (breaks skew-symmetry), "pp_sign"
    flips J^pp (keeps skew-symmetry, breaks Jacobi), "wp_sign" uses the
    opposite sign for the S'-terms of J^{wp}.
    """

    def __init__(self, grid, model, q, blocks="all", corrupt=(), ev=None):
        unknown = set(corrupt) - set(CORRUPTIONS)
        if unknown:
            raise ValueError(f"unknown corruption {sorted(unknown)}")
        if blocks not in ("all", "transport"):
            raise ValueError("blocks must be 'all' or 'transport'")
        _check(grid, q.p, q.F, q.alpha, q.beta, q.w)
        self.grid, self.model, self.q = grid, model, q
        self.blocks, self.corrupt = blocks, frozenset(corrupt)
        if blocks == "all":
            self.ev = model.evaluate_state(q) if ev is None else ev
            if np.any(~(self.ev.S_w > 0)):
                raise DegenerateEntropySlope("S'_w <= 0 somewhere on the grid")
            self._gradF = grid.grad(q.F)
            self._grada = grid.grad(q.alpha)

    # upper row
    def Jpp(self, z):
        g = self.grid
        out = -g.div(tc.outer(self.q.p, z)) - tc.matvec(tc.transpose(g.grad(z)), self.q.p)
        return -out if "pp_sign" in self.corrupt else out

    def JpF(self, X):
        return (np.einsum("...ijk,...ij->...k", self._gradF, X)
                + self.grid.div(tc.matmul(X, tc.transpose(self.q.F))))

    def Jpa(self, a):
        return a[..., None] * self._grada

    def Jpb(self, b):
        out = -self.q.beta[..., None] * self.grid.grad(b)
        return -out if "pbeta_sign" in self.corrupt else out

    def Jpw(self, om):
        ev = self.ev
        r = om / ev.S_w
        return (-ev.S[..., None] * self.grid.grad(r) - self.JpF(r[..., None, None] * ev.S_F)
                - self.Jpa(r * ev.S_a) - self.Jpb(r * ev.S_b))

    # left column
    def JFp(self, z):
        return (-np.einsum("...ijk,...k->...ij", self._gradF, z)
                + tc.matmul(self.grid.grad(z), self.q.F))

    def Jap(self, z):
        return -tc.dot(z, self._grada)

    def Jbp(self, z):
        return -self.grid.div(self.q.beta[..., None] * z)

    def Jwp(self, z):
        ev = self.ev
        sgn = -1.0 if "wp_sign" in self.corrupt else 1.0
        inner = (self.grid.div(ev.S[..., None] * z)
                 + sgn * (tc.ddot(ev.S_F, self.JFp(z)) + ev.S_a * self.Jap(z) + ev.S_b * self.Jbp(z)))
        return -inner / ev.S_w

    def parts(self, zeta):
        """Dict (row, col) -> contribution; rows/cols named after State blocks."""
        out = {("p", "p"): self.Jpp(zeta.p)}
        if self.blocks == "transport":
            return out
        out[("p", "F")] = self.JpF(zeta.F)
        out[("p", "alpha")] = self.Jpa(zeta.alpha)
        out[("p", "beta")] = self.Jpb(zeta.beta)
        out[("p", "w")] = self.Jpw(zeta.w)
        out[("F", "p")] = self.JFp(zeta.p)
        out[("alpha", "p")] = self.Jap(zeta.p)
        out[("beta", "p")] = self.Jbp(zeta.p)
        out[("w", "p")] = self.Jwp(zeta.p)
        return out

    def apply(self, zeta):
        res = State.zeros(self.q.d, self.grid.N)
        acc = {n: getattr(res, n) for n in State.BLOCKS}
        for (row, _), val in self.parts(zeta).items():
            acc[row] = acc[row] + val
        return State(**acc)

    __call__ = apply


def poisson_apply(P, zeta):
    return P.apply(zeta)


def v_ham(grid, model, q, ev=None, corrupt=()):
    ev = model.evaluate_state(q) if ev is None else ev
    return PoissonOperator(grid, model, q, corrupt=corrupt, ev=ev).apply(DE(model, q, ev))


def v_ham_simplified(grid, model, q, ev=None):
    """Closed form: momentum row -div(rho v (x) v) + div(Sigma_Cauchy - p_beta I)."""
    ev = model.evaluate_state(q) if ev is None else ev
    d = q.d
    v = velocity(model, q)
    sig = tc.matmul(ev.stress_F, tc.transpose(q.F)) + (ev.free_energy - q.beta * ev.mu_b)[..., None, None] * np.eye(d)
    mom = -grid.div(tc.outer(q.p, v)) + grid.div(sig)
    Ft = -lie_vec(grid, v, q.F)
    at = -lie_0form(grid, v, q.alpha)
    bt = -lie_dform(grid, v, q.beta)
    wt = -(lie_dform(grid, v, ev.S) + tc.ddot(ev.S_F, Ft) + ev.S_a * at + ev.S_b * bt) / ev.S_w
    return State(mom, Ft, at, bt, wt)


def entropy_rate(model, q, dq, ev=None):
    """Chain rule d/dt S(F_e, alpha, beta, w) along a tangent dq."""
    ev = model.evaluate_state(q) if ev is None else ev
    return tc.ddot(ev.S_F, dq.F) + ev.S_a * dq.alpha + ev.S_b * dq.beta + ev.S_w * dq.w


def energy_rate(model, q, dq, ev=None):
    ev = model.evaluate_state(q) if ev is None else ev
    return tc.ddot(ev.E_F, dq.F) + ev.E_a * dq.alpha + ev.E_b * dq.beta + ev.E_w * dq.w


# --- Onsager part ----------------------------------------------------------------------

@dataclass
class ReducedForces:
    """s = N_E(q)^* zeta; `hv` is the hyperviscous second-gradient block (or None)."""
    p: np.ndarray
    F: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    w: np.ndarray
    hv: object = None

    def blocks(self):
        out = [self.p, self.F, self.alpha, self.beta, self.w]
        return out + ([self.hv] if self.hv is not None else [])

    def scale(self, c):
        return ReducedForces(*(c * b for b in self.blocks()[:5]),
                             hv=None if self.hv is None else c * self.hv)


class OnsagerOperator:
    """N_E(q), the block-diagonal dual potential R*_simple, and their composition."""

    def __init__(self, grid, model, q, spec, ev=None):
        self.grid, self.model, self.q, self.spec = grid, model, q, spec
        self.ev = model.evaluate_state(q) if ev is None else ev
        if np.any(self.ev.E_w == 0):
            raise DegenerateEnergySlope("E'_w = 0 somewhere on the grid")
        d = q.d
        self.rho = density(model, q)
        self.v = q.p / self.rho[..., None]
        self.L = grid.grad(self.v)
        self.D = tc.sym(self.L)
        self.Theta = self.ev.Theta
        self.FtEF = tc.matmul(tc.transpose(q.F), self.ev.E_F)
        self.hyper = spec.hyperviscosity > 0
        if self.hyper:
            self.H = grid.grad(self.L)
        self.A = spec.matrix("diff_alpha", d)
        self.B = spec.matrix("diff_beta", d)
        self.K = spec.matrix("heat_conductivity", d)

    def ne_star(self, zeta):
        g, ev, q = self.grid, self.ev, self.q
        r = zeta.w / ev.E_w
        sp = tc.sym(g.grad(zeta.p)) - r[..., None, None] * self.D
        sF = (tc.matmul(tc.transpose(q.F), zeta.F)
              - (0.5 * self.rho * tc.dot(self.v, zeta.p))[..., None, None] * np.eye(q.d)
              - r[..., None, None] * self.FtEF)
        sa = zeta.alpha - r * ev.E_a
        sb = zeta.beta - r * ev.E_b
        hv = None
        if self.hyper:
            hv = g.grad(g.grad(zeta.p)) - r[..., None, None, None] * self.H
        return ReducedForces(sp, sF, sa, sb, r, hv)

    def ne_apply(self, sig):
        """N_E(q) sigma, the L^2 adjoint of ne_star."""
        g, ev, q = self.grid, self.ev, self.q
        mom = -g.div(tc.sym(sig.p)) - (0.5 * self.rho * tc.trace(sig.F))[..., None] * self.v
        wrow = (-tc.ddot(self.D, sig.p) - tc.ddot(self.FtEF, sig.F)
                - ev.E_a * sig.alpha - ev.E_b * sig.beta + sig.w)
        if sig.hv is not None:
            mom = mom + g.div(g.div(sig.hv))
            wrow = wrow - np.sum(self.H * sig.hv, axis=(-3, -2, -1))
        return State(mom, tc.matmul(q.F, sig.F), sig.alpha, sig.beta, wrow / ev.E_w)

    def _diffusion(self, M, s, source=0.0):
        g = self.grid
        gs = g.grad(s)
        flux = tc.matvec(M, gs)
        val = 0.5 * tc.dot(gs, flux) + 0.5 * source * s * s
        return val, -g.div(flux) + source * s

    def dual_density(self, s):
        """Pointwise density of R*_simple(q, s) and its gradient (a ReducedForces)."""
        spec, Th = self.spec, self.Theta
        Dvs = spec.viscous(s.p)
        val = 0.5 * Th * tc.ddot(s.p, Dvs)
        gp = Th[..., None, None] * Dvs
        gF = np.zeros_like(s.F)
        if spec.plast_fluidity > 0:
            sig = -Th[..., None, None] * tc.dev(s.F)
            pv, pg = spec.plastic_dual(sig, Th)
            val = val + pv
            gF = -Th[..., None, None] * tc.dev(pg)
        va, ga = self._diffusion(self.A, s.alpha, spec.source_alpha)
        vb, gb = self._diffusion(self.B, s.beta)
        vw, gw = self._diffusion(self.K, s.w)
        val = val + va + vb + vw
        ghv = None
        if self.hyper:
            pexp, nu = spec.hyper_exponent, spec.hyperviscosity
            mag = np.sqrt(np.sum(s.hv * s.hv, axis=(-3, -2, -1)))
            val = val + nu / pexp * Th ** (pexp - 1) * mag**pexp
            ghv = (nu * Th ** (pexp - 1) * mag ** (pexp - 2))[..., None, None, None] * s.hv
        return val, ReducedForces(gp, gF, ga, gb, gw, ghv)

    def dual(self, s):
        val, grad = self.dual_density(s)
        return self.grid.integrate(val), grad

    def potential(self, zeta):
        """R*(q, zeta) = R*_simple(q, N_E^* zeta)."""
        return self.dual(self.ne_star(zeta))[0]

    def forces(self):
        return self.ne_star(DS(self.model, self.q, self.ev))

    def v_irr(self):
        return self.ne_apply(self.dual(self.forces())[1])

    def inelastic_rate(self):
        """L_p = Theta dev dR*_plast(dev Sigma_Mandel); zero if plasticity is off."""
        q = self.q
        if self.spec.plast_fluidity <= 0:
            return np.zeros_like(q.F)
        mandel = tc.matmul(tc.transpose(q.F), self.ev.stress_F)
        _, g = self.spec.plastic_dual(tc.dev(mandel), self.Theta)
        return self.Theta[..., None, None] * tc.dev(g)


def ne_star(grid, model, q, spec, zeta, ev=None):
    return OnsagerOperator(grid, model, q, spec, ev).ne_star(zeta)


def dual_dissipation(grid, model, q, spec, s, ev=None):
    return OnsagerOperator(grid, model, q, spec, ev).dual(s)


def v_irr(grid, model, q, spec, ev=None):
    return OnsagerOperator(grid, model, q, spec, ev).v_irr()


def v_irr_display(grid, model, q, spec, ev=None):
    """The irreversible field written out term by term (independent assembly path)."""
    O = OnsagerOperator(grid, model, q, spec, ev)
    g, ev = grid, O.ev
    Th = O.Theta
    Lp = O.inelastic_rate()
    Dv = spec.viscous(O.D)
    mom = g.div(Dv) + (0.5 * O.rho * tc.trace(Lp))[..., None] * O.v
    Va = g.div(tc.matvec(O.A, g.grad(ev.mu_a / Th))) - spec.source_alpha * ev.mu_a / Th
    Vb = g.div(tc.matvec(O.B, g.grad(ev.mu_b / Th)))
    heat = g.div(tc.matvec(O.K, g.grad(1.0 / Th)))
    wrow = (tc.ddot(O.D, Dv) + tc.ddot(ev.E_F, tc.matmul(q.F, Lp))
            - ev.E_a * Va - ev.E_b * Vb - heat)
    if O.hyper:
        pexp, nu = spec.hyper_exponent, spec.hyperviscosity
        mag = np.sqrt(np.sum(O.H * O.H, axis=(-3, -2, -1)))
        Shv = (nu * mag ** (pexp - 2))[..., None, None, None] * O.H
        mom = mom - g.div(g.div(Shv))
        wrow = wrow + nu * mag**pexp
    return State(mom, -tc.matmul(q.F, Lp), Va, Vb, wrow / ev.E_w)


# --- gauge chain rule -----------------------------------------------------------------

def map_tangent_gauge(model, q, dq, target):
    """Map a tangent dq at q (in the gauge of model) to the gauge `target`.

    Uses w_target = W(F, a, b, theta(F, a, b, w)); the partials of
    theta -> e and theta -> s at fixed (F, a, b) are the gauge-theta partials
    of E and S.
    """
    target = ThermalGauge.parse(target)
    mth = model.with_gauge(ThermalGauge.TEMPERATURE)
    theta = model.theta_from_w(q.F, q.alpha, q.beta, q.w)
    ev = mth.evaluate(q.F, q.alpha, q.beta, theta)

    def partials(g):
        one = np.ones_like(theta)
        if g is ThermalGauge.TEMPERATURE:
            return np.zeros_like(q.F), 0 * one, 0 * one, one
        if g is ThermalGauge.ENERGY:
            return ev.E_F, ev.E_a, ev.E_b, ev.E_w
        return ev.S_F, ev.S_a, ev.S_b, ev.S_w

    WF, Wa, Wb, Wt = partials(model.gauge)
    theta_dot = (dq.w - tc.ddot(WF, dq.F) - Wa * dq.alpha - Wb * dq.beta) / Wt
    TF, Ta, Tb, Tt = partials(target)
    w_dot = tc.ddot(TF, dq.F) + Ta * dq.alpha + Tb * dq.beta + Tt * theta_dot
    return State(np.array(dq.p), np.array(dq.F), np.array(dq.alpha), np.array(dq.beta), w_dot)


# --- random test fields ---------------------------------------------------------------

def base_point(model):
    """Reference (alpha, beta, theta) in the middle of the model's admissible box."""
    en = model.energy
    return 0.5 * sum(en.alpha_range), 0.5 * sum(en.beta_range), float(en.theta_scale)


def random_state(grid, model, seed, kmax=3, amp_p=0.1, amp_F=0.05, amp_a=0.1, amp_b=0.1,
                 amp_theta=0.1, thermal="theta", J0=1.0, base=None):
    """Band-limited admissible state field.

    thermal="theta" makes the temperature band-limited (w is then a smooth
    nonlinear image of it); thermal="w" makes w itself band-limited.
    """
    rng = np.random.default_rng(seed)
    d = grid.d
    a0, b0, th0 = base_point(model) if base is None else base
    f = lambda shape, amp: random_smooth_field(grid, kmax, rng, shape, amp)
    rho0 = model.rho_ref / J0
    cvel = 1.0 if model.energy.energy_scale <= 0 else np.sqrt(model.energy.energy_scale / rho0)
    p = rho0 * cvel * f((d,), amp_p)
    F = J0 ** (1.0 / d) * (np.eye(d) + f((d, d), amp_F))
    da, db = f((), 1.0), f((), 1.0)
    rng_a = 0.5 * (model.energy.alpha_range[1] - model.energy.alpha_range[0])
    rng_b = 0.5 * (model.energy.beta_range[1] - model.energy.beta_range[0])
    alpha = a0 + amp_a * rng_a * da
    beta = b0 + amp_b * rng_b * db
    field_t = f((), 1.0)
    if thermal == "theta":
        w = model.w_from_theta(F, alpha, beta, th0 * (1 + amp_theta * field_t))
    elif thermal == "w":
        ones = np.ones(grid.N)
        Fb = np.broadcast_to(J0 ** (1.0 / d) * np.eye(d), grid.N + (d, d))
        w0 = model.w_from_theta(Fb, a0 * ones, b0 * ones, th0 * ones)
        mth = model.with_gauge(ThermalGauge.TEMPERATURE)
        ev = mth.evaluate(Fb, a0 * ones, b0 * ones, th0 * ones)
        slope = {ThermalGauge.TEMPERATURE: 1.0, ThermalGauge.ENERGY: ev.E_w,
                 ThermalGauge.ENTROPY: ev.S_w}[model.gauge]
        w = w0 + amp_theta * th0 * slope * field_t
    else:
        raise ValueError("thermal must be 'theta' or 'w'")
    return State(p, F, alpha, beta, w)


def random_covector(grid, seed, kmax=3, scales=None):
    """Band-limited covector with unit-RMS blocks (optionally rescaled per block)."""
    rng = np.random.default_rng(seed)
    d = grid.d
    sc = {"p": 1.0, "F": 1.0, "alpha": 1.0, "beta": 1.0, "w": 1.0}
    sc.update(scales or {})
    f = lambda shape: random_smooth_field(grid, kmax, rng, shape, 1.0)
    return State(sc["p"] * f((d,)), sc["F"] * f((d, d)), sc["alpha"] * f(()),
                 sc["beta"] * f(()), sc["w"] * f(()))


def covector_scales(model, q, ev=None):
    """Per-block magnitudes of DE, used to give random covectors a natural size."""
    Dq = DE(model, q, ev)
    return {n: float(np.sqrt(np.mean(b * b))) or 1.0 for n, b in zip(State.BLOCKS, Dq.blocks())}


# --- residuals ------------------------------------------------------------------------

def skew_residual(grid, P, z1, z2):
    J1, J2 = P.apply(z1), P.apply(z2)
    a, b = grid.inner(z1, J2), grid.inner(z2, J1)
    scale = grid.norm(z1) * grid.norm(J2) + grid.norm(z2) * grid.norm(J1)
    return abs(a + b) / scale if scale > 0 else abs(a + b)


def nic1_residual(grid, P, ds):
    parts = P.parts(ds)
    total = State.zeros(P.q.d, grid.N)
    acc = {n: getattr(total, n) for n in State.BLOCKS}
    scale = 0.0
    for (row, _), val in parts.items():
        acc[row] = acc[row] + val
        scale += np.sqrt(np.sum(val * val) * grid.cell_volume)
    res = grid.norm(State(**acc))
    return res / scale if scale > 0 else res


def nic2_residuals(grid, model, q, spec, lambdas=(-1.0, 0.5, 3.0), ev=None):
    """(pointwise max |N_E^* DE - (0,..,0,1)|, max_lambda |R*(q, lambda DE)| / R-scale)."""
    O = OnsagerOperator(grid, model, q, spec, ev)
    de = DE(model, q, O.ev)
    s = O.ne_star(de)
    blocks = s.blocks()
    point = 0.0
    scales = [np.max(np.abs(O.D)) + 1e-300,
              np.max(np.abs(O.FtEF)) + 0.5 * np.max(O.rho * tc.dot(O.v, O.v)) + 1e-300,
              np.max(np.abs(O.ev.E_a)) / np.min(np.abs(O.ev.E_w)) + 1.0,
              np.max(np.abs(O.ev.E_b)) / np.min(np.abs(O.ev.E_w)) + 1.0]
    for blk, sc in zip(blocks[:4], scales):
        point = max(point, float(np.max(np.abs(blk))) / sc)
    point = max(point, float(np.max(np.abs(blocks[4] - 1.0))))
    if s.hv is not None:
        point = max(point, float(np.max(np.abs(s.hv))) / (np.max(np.abs(O.H)) + 1e-300))
    # compare R*(lambda DE) with R* at the actual forces
    ref = abs(O.dual(O.forces())[0]) + 1e-300
    rstar = max(abs(O.potential(lam * de)) for lam in lambdas) / ref
    return point, rstar


def jacobi_residual(grid, make_J, q, z1, z2, z3, rel_step=1e-6, norm="terms"):
    """Cyclic sum <z_i, DJ(q)[J(q) z_j] z_k> by central differences of q -> J(q).

    make_J(q) returns an operator with .apply.  norm="terms" divides by the
    sum of the absolute values of the three cyclic terms (the fraction of the
    sum that fails to cancel); norm="cauchy" divides by the Cauchy-Schwarz
    bound sum |z_i| |DJ z_k|, which also shrinks with the mutual alignment of
    random fields and so with resolution.
    """
    Jq = make_J(q)
    qn = grid.norm(q)
    total, terms, bound = 0.0, 0.0, 0.0
    for a, b, c in ((z1, z2, z3), (z2, z3, z1), (z3, z1, z2)):
        dq = Jq.apply(b)
        t = rel_step * qn / max(grid.norm(dq), 1e-300)
        Jp = make_J(q + t * dq).apply(c)
        Jm = make_J(q - t * dq).apply(c)
        DJ = (Jp - Jm) / (2 * t)
        val = grid.inner(a, DJ)
        total += val
        terms += abs(val)
        bound += grid.norm(a) * grid.norm(DJ)
    scale = {"terms": terms, "cauchy": bound}[norm]
    return abs(total) / scale if scale > 0 else abs(total)


# --- verifier -------------------------------------------------------------------------

DEFAULT_TOLS = {
    "skew": 1e-10,
    "nic1": 1e-8,
    "nic2_pointwise": 1e-12,
    "nic2_rstar": 1e-20,
    "jacobi": 1e-6,
    "entropy_production": -1e-10,
    "energy_neutral": 1e-9,
    "hamiltonian_cancellation": 1e-9,
    "entropy_transport": 1e-8,
}


@dataclass
class StructureReport:
    rows: list = field(default_factory=list)
    tols: dict = field(default_factory=lambda: dict(DEFAULT_TOLS))

    def add(self, trial, check, value, tol=None, lower=False):
        tol = self.tols[check] if tol is None else tol
        ok = bool(value >= tol) if lower else bool(value <= tol)
        self.rows.append({"trial": trial, "check": check, "value": float(value),
                          "tol": tol, "passed": ok})

    @property
    def passed(self):
        return all(r["passed"] for r in self.rows)

    def worst(self):
        out = {}
        for r in self.rows:
            lower = r["check"] == "entropy_production"
            cur = out.get(r["check"])
            if cur is None or (r["value"] < cur if lower else r["value"] > cur):
                out[r["check"]] = r["value"]
        return out

    def failures(self):
        return [r for r in self.rows if not r["passed"]]

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["trial", "check", "value", "tol", "passed"])
            w.writeheader()
            w.writerows(self.rows)


def verify_structure(grid, model, spec, trials=5, seed=0, corrupt=(), checks=None, kmax=3,
                     thermal="theta", tols=None):
    """Run the structural checks on random band-limited states and covectors."""
    rep = StructureReport()
    if tols:
        rep.tols.update(tols)
    checks = set(checks or ("skew", "nic1", "nic2", "jacobi", "onsager", "hamiltonian"))
    ss = np.random.SeedSequence(seed)
    for t, child in enumerate(ss.spawn(trials)):
        s1, s2, s3, s4 = child.generate_state(4)
        q = random_state(grid, model, s1, kmax=kmax, thermal=thermal)
        ev = model.evaluate_state(q)
        P = PoissonOperator(grid, model, q, corrupt=corrupt, ev=ev)
        sc = covector_scales(model, q, ev)
        z1 = random_covector(grid, s2, kmax, sc)
        z2 = random_covector(grid, s3, kmax, sc)
        z3 = random_covector(grid, s4, kmax, sc)
        if "skew" in checks:
            rep.add(t, "skew", skew_residual(grid, P, z1, z2))
        if "nic1" in checks:
            rep.add(t, "nic1", nic1_residual(grid, P, DS(model, q, ev)))
        if "nic2" in checks:
            pt, rs = nic2_residuals(grid, model, q, spec, ev=ev)
            rep.add(t, "nic2_pointwise", pt)
            rep.add(t, "nic2_rstar", rs)
        if "jacobi" in checks:
            mk = lambda s: PoissonOperator(grid, model, s, corrupt=corrupt)
            rep.add(t, "jacobi", jacobi_residual(grid, mk, q, z1, z2, z3))
        if "onsager" in checks:
            O = OnsagerOperator(grid, model, q, spec, ev)
            vi = O.v_irr()
            ds, de = DS(model, q, ev), DE(model, q, ev)
            prod = grid.inner(ds, vi)
            pscale = grid.norm(ds) * grid.norm(vi)
            rep.add(t, "entropy_production", prod / pscale if pscale > 0 else 0.0, lower=True)
            en = grid.inner(de, vi)
            escale = sum(grid.integrate(np.abs(a * b)) for a, b in zip(de.blocks(), vi.blocks()))
            rep.add(t, "energy_neutral", abs(en) / escale if escale > 0 else abs(en))
        if "hamiltonian" in checks and not corrupt:
            vh = P.apply(DE(model, q, ev))
            vs = v_ham_simplified(grid, model, q, ev)
            rep.add(t, "hamiltonian_cancellation", grid.norm(vh - vs) / grid.norm(vh))
            sr = entropy_rate(model, q, vh, ev) + lie_dform(grid, velocity(model, q), ev.S)
            ref = np.sqrt(np.mean(lie_dform(grid, velocity(model, q), ev.S) ** 2)) + 1e-300
            rep.add(t, "entropy_transport", float(np.sqrt(np.mean(sr * sr))) / ref)
    return rep
