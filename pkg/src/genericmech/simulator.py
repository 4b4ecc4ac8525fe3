"""Explicit time integration of the full reversible + irreversible evolution.

The state advances as dq/dt = J(q) DE(q) + K(q) DS(q) + (rho g, 0, 0, 0, 0)
on a periodic grid, with RK4 (default) or Heun.  Default thermal variable
is the internal energy, so that total-energy conservation is a discrete
near-identity of the spatial operators and the drift is pure time error.

Besides the integrator this module holds the diagnostics: totals, local
energy and entropy balances, the pointwise comparison of the temperature
form of the heat equation with its internal-energy form, and the
bookkeeping of the inelastic distortion F_p along a run.
"""

import csv
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor_core as tc
from .constitutive import PsiDerivs, State, ThermalGauge, ThermoModel
from .errors import (BlowUp, GenericMechError, Inadmissible, NonpositiveTemperature,
                     RootFindFailure, SingularTensor)
from .field_grid import Grid, write_snapshot
from .generic_structure import (DE, OnsagerOperator, density, map_tangent_gauge, random_state,
                                total_energy, total_entropy, kinetic_energy, v_ham)
from .materials import DissipationSpec

log = logging.getLogger(__name__)

INTEGRATORS = ("rk4", "heun")


@dataclass
class InitialCondition:
    """Band-limited random initial field around the model's base point."""
    seed: int = 0
    kmax: int = 2
    amp_p: float = 0.05
    amp_F: float = 0.02
    amp_alpha: float = 0.05
    amp_beta: float = 0.05
    amp_theta: float = 0.05
    J0: float = 1.0


@dataclass
class SceneConfig:
    grid: Grid
    model: ThermoModel
    dissipation: DissipationSpec = field(default_factory=DissipationSpec)
    gravity: tuple = None
    integrator: str = "rk4"
    dt: float = None
    t_end: float = 0.0
    steps: int = None
    gauge: ThermalGauge = ThermalGauge.ENERGY
    s_ext: int = 1
    hyperviscosity: float = 0.0
    dealias: bool = False
    cfl: float = 0.25
    diag_every: int = 1
    local_every: int = 0
    snapshot_every: int = 0
    overflow: float = 1e30
    initial: InitialCondition = field(default_factory=InitialCondition)

    def __post_init__(self):
        self.gauge = ThermalGauge.parse(self.gauge)
        self.model = self.model.with_gauge(self.gauge)
        d = self.grid.d
        self.gravity = np.zeros(d) if self.gravity is None else np.asarray(self.gravity, float)
        if self.hyperviscosity > 0:
            self.dissipation = replace(self.dissipation, hyperviscosity=self.hyperviscosity)
        self.integrator = self.integrator.lower()

    def problems(self):
        """Violated invariants, as (key, message) pairs."""
        out = []
        if self.integrator not in INTEGRATORS:
            out.append(("run.integrator", f"must be one of {INTEGRATORS}"))
        if self.dt is not None and not self.dt > 0:
            out.append(("run.dt", "must be > 0"))
        if self.t_end < 0:
            out.append(("run.t_end", "must be >= 0"))
        if self.steps is not None and self.steps < 0:
            out.append(("run.steps", "must be >= 0"))
        if self.s_ext not in (0, 1):
            out.append(("run.s_ext", "must be 0 or 1"))
        if self.gravity.shape != (self.grid.d,):
            out.append(("run.gravity", f"needs {self.grid.d} components"))
        if not 0 < self.cfl:
            out.append(("run.cfl", "must be > 0"))
        for msg in self.dissipation.validate(self.grid.d):
            out.append(("dissipation", msg))
        return out


@dataclass
class Diagnostics:
    t: list = field(default_factory=list)
    E_tot: list = field(default_factory=list)
    E_kin: list = field(default_factory=list)
    S_tot: list = field(default_factory=list)
    min_theta: list = field(default_factory=list)
    min_detFe: list = field(default_factory=list)
    res_energy_local: list = field(default_factory=list)
    res_entropy_local: list = field(default_factory=list)
    steps: int = 0
    aborted: str = ""
    # total heat capacity of the initial state; entropy is only defined up to
    # a constant, so relative entropy changes are measured against this
    entropy_scale: float = 1.0

    COLUMNS = ("t", "E_tot", "E_kin", "S_tot", "min_theta", "min_detFe",
               "res_energy_local", "res_entropy_local")

    def arrays(self):
        return {k: np.asarray(getattr(self, k), dtype=float) for k in self.COLUMNS}

    def energy_drift(self):
        E = np.asarray(self.E_tot)
        return float(np.max(np.abs(E - E[0])) / abs(E[0]))

    def entropy_worst_step(self):
        """Most negative relative entropy increment between consecutive records."""
        S = np.asarray(self.S_tot)
        if S.size < 2:
            return 0.0
        return float(np.min(np.diff(S)) / self.entropy_scale)

    def entropy_drift(self):
        S = np.asarray(self.S_tot)
        return float(np.max(np.abs(S - S[0])) / self.entropy_scale)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.COLUMNS)
            for row in zip(*(getattr(self, k) for k in self.COLUMNS)):
                wr.writerow([repr(float(x)) for x in row])


# --- right-hand side ------------------------------------------------------------

def _guard(cfg, q):
    """Raise Inadmissible/BlowUp for states the model cannot evaluate."""
    if not q.is_finite() or max(float(np.max(np.abs(b))) for b in q.blocks()) > cfg.overflow:
        raise BlowUp("state exceeded the overflow guard")
    J = tc.det(q.F)
    if np.any(J <= 0):
        idx = tuple(int(i) for i in np.unravel_index(np.argmin(J), J.shape))
        raise Inadmissible(f"det F_e = {J[idx]:.3e} <= 0 at grid index {idx}")
    try:
        ev = cfg.model.evaluate_state(q)
    except (NonpositiveTemperature, RootFindFailure, SingularTensor) as exc:
        raise Inadmissible(str(exc)) from exc
    if np.any(~(ev.Theta > 0)):
        raise Inadmissible("Theta <= 0")
    return ev


def rhs(q, cfg, ev=None, parts=False):
    """v_ham + v_irr + gravity.  With parts=True return the three pieces."""
    g = cfg.grid
    ev = _guard(cfg, q) if ev is None else ev
    vh = v_ham(g, cfg.model, q, ev)
    if cfg.dissipation.is_zero:
        vi = State.zeros(q.d, g.N)
    else:
        vi = OnsagerOperator(g, cfg.model, q, cfg.dissipation, ev).v_irr()
    grav = State.zeros(q.d, g.N)
    if np.any(cfg.gravity != 0):
        grav.p = density(cfg.model, q)[..., None] * cfg.gravity
    if parts:
        return vh, vi, grav
    return vh + vi + grav


def wave_speed(cfg, q, ev=None, eps=1e-6):
    """Max of |v| + c, c^2 = |d Sigma_Cauchy / d eps| / rho over F -> (I + eps E) F.

    Isothermal stiffness from central differences at fixed temperature;
    the adiabatic speed is somewhat larger, which the CFL factor absorbs.
    """
    m = cfg.model.with_gauge(ThermalGauge.TEMPERATURE)
    ev = cfg.model.evaluate_state(q) if ev is None else ev
    th = ev.theta
    d = q.d
    rho = density(cfg.model, q)

    def cauchy(F):
        e = m.evaluate(F, q.alpha, q.beta, th)
        return tc.matmul(e.stress_F, tc.transpose(F)) + e.free_energy[..., None, None] * np.eye(d)

    stiff = np.zeros(q.alpha.shape)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            dS = (cauchy(tc.matmul(np.eye(d) + eps * E, q.F))
                  - cauchy(tc.matmul(np.eye(d) - eps * E, q.F))) / (2 * eps)
            stiff = np.maximum(stiff, tc.norm(dS))
    c = np.sqrt(stiff / rho)
    return float(np.max(tc.norm(q.p / rho[..., None]) + c))


def stable_dt(cfg, q, ev=None):
    """CFL step cfl * h / c_max, capped by an explicit-diffusion estimate."""
    ev = cfg.model.evaluate_state(q) if ev is None else ev
    h = cfg.grid.h
    dt = cfg.cfl * h / wave_speed(cfg, q, ev)
    sp = cfg.dissipation
    rho = float(np.min(density(cfg.model, q)))
    nu = (2.0 * sp.shear_viscosity + sp.bulk_viscosity) / rho
    if nu > 0:
        dt = min(dt, 0.2 * h * h / nu)
    K = np.max(np.abs(sp.matrix("heat_conductivity", q.d)))
    if K > 0:
        cap = -ev.theta * ev.psi.psi_tt
        chi = float(np.max(K / (ev.theta**2 * cap)))
        dt = min(dt, 0.2 * h * h / chi)
    return dt


# --- integrator -----------------------------------------------------------------

def _combine(q, ks, ws, dt):
    out = q
    for k, w in zip(ks, ws):
        out = out + k * (w * dt)
    return out


def step(q, cfg, dt=None, extra=None):
    """One explicit step.  `extra` = (y, f) integrates an auxiliary field y
    with y' = f(q, y, ev) in the same scheme (used for F_p)."""
    dt = cfg.dt if dt is None else dt
    y, f = extra if extra is not None else (None, None)

    def F(qq, yy):
        ev = _guard(cfg, qq)
        dq = rhs(qq, cfg, ev)
        return dq, (f(qq, yy, ev) if f is not None else None)

    if cfg.integrator == "rk4":
        k1, l1 = F(q, y)
        k2, l2 = F(q + k1 * (0.5 * dt), None if y is None else y + 0.5 * dt * l1)
        k3, l3 = F(q + k2 * (0.5 * dt), None if y is None else y + 0.5 * dt * l2)
        k4, l4 = F(q + k3 * dt, None if y is None else y + dt * l3)
        qn = _combine(q, (k1, k2, k3, k4), (1 / 6, 1 / 3, 1 / 3, 1 / 6), dt)
        yn = None if y is None else y + dt * (l1 + 2 * l2 + 2 * l3 + l4) / 6
    elif cfg.integrator == "heun":
        k1, l1 = F(q, y)
        k2, l2 = F(q + k1 * dt, None if y is None else y + dt * l1)
        qn = _combine(q, (k1, k2), (0.5, 0.5), dt)
        yn = None if y is None else y + 0.5 * dt * (l1 + l2)
    else:
        raise ValueError(f"unknown integrator {cfg.integrator!r}")
    if cfg.dealias:
        qn = cfg.grid.dealias_state(qn)
        if yn is not None:
            yn = cfg.grid.dealias(yn)
    if not qn.is_finite() or max(float(np.max(np.abs(b))) for b in qn.blocks()) > cfg.overflow:
        raise BlowUp("non-finite or overflowing state after step")
    if extra is not None:
        return qn, yn
    return qn


# --- diagnostics ----------------------------------------------------------------

@dataclass
class LocalBalance:
    energy: float
    entropy: float
    min_production: float
    lp_trace_term: float


def local_balances(cfg, q, ev=None):
    """Pointwise residuals of the local energy and entropy balances.

        d_t e + div(e v) - p_mech + div j_ener = 0
        d_t s + div(s v) - sigma_prod + div j_entr = 0

    with p_mech = (Sigma_C - beta mu_b I + D_visc D) : grad v (+ nu |grad grad v|^p),
    j_ener = K grad(1/Theta) and sigma_prod, j_entr as in the entropy balance.
    Time derivatives come from the assembled right-hand side mapped to the
    e and s gauges.  Residuals are max-norms divided by the largest term.
    """
    g, m, sp = cfg.grid, cfg.model, cfg.dissipation
    ev = _guard(cfg, q) if ev is None else ev
    dq = rhs(q, cfg, ev)
    de = map_tangent_gauge(m, q, dq, ThermalGauge.ENERGY).w
    ds = map_tangent_gauge(m, q, dq, ThermalGauge.ENTROPY).w
    O = OnsagerOperator(g, m, q, sp, ev)
    d = q.d
    Th, v, L, D = O.Theta, O.v, O.L, O.D
    sigma_c = tc.matmul(ev.stress_F, tc.transpose(q.F)) + ev.free_energy[..., None, None] * np.eye(d)
    Dv = sp.viscous(D)
    visc = tc.ddot(Dv, D)
    hyper = 0.0
    if O.hyper:
        pexp = sp.hyper_exponent
        hyper = sp.hyperviscosity * np.sqrt(np.sum(O.H * O.H, axis=(-3, -2, -1))) ** pexp
    p_mech = tc.ddot(sigma_c - (q.beta * ev.mu_b)[..., None, None] * np.eye(d) + Dv, L) + hyper
    j_ener = tc.matvec(O.K, g.grad(1.0 / Th))
    terms_e = [de, g.div(ev.E[..., None] * v), p_mech, g.div(j_ener)]
    r_e = de + terms_e[1] - p_mech + terms_e[3]
    Lp = O.inelastic_rate()
    plast = tc.ddot(tc.matmul(tc.transpose(q.F), ev.stress_F), Lp)
    xa, xb, xt = ev.mu_a / Th, ev.mu_b / Th, 1.0 / Th
    ga, gb, gt = g.grad(xa), g.grad(xb), g.grad(xt)
    fa, fb, ft = tc.matvec(O.A, ga), tc.matvec(O.B, gb), tc.matvec(O.K, gt)
    sigma = ((visc + plast + hyper) / Th + tc.dot(ga, fa) + sp.source_alpha * xa**2
             + tc.dot(gb, fb) + tc.dot(gt, ft))
    j_entr = xa[..., None] * fa + xb[..., None] * fb + xt[..., None] * ft
    terms_s = [ds, g.div(ev.S[..., None] * v), sigma, g.div(j_entr)]
    r_s = ds + terms_s[1] - sigma + terms_s[3]

    def rel(r, terms):
        return float(np.max(np.abs(r)) / max(max(float(np.max(np.abs(t))) for t in terms), 1e-300))

    sig_scale = max(float(np.max(np.abs(sigma))), 1e-300)
    lp_term = float(np.max(np.abs(0.5 * O.rho * tc.trace(Lp))))
    return LocalBalance(rel(r_e, terms_e), rel(r_s, terms_s),
                        float(np.min(sigma)) / sig_scale, lp_term)


def initial_state(cfg):
    ic = cfg.initial
    return random_state(cfg.grid, cfg.model, ic.seed, kmax=ic.kmax, amp_p=ic.amp_p, amp_F=ic.amp_F,
                        amp_a=ic.amp_alpha, amp_b=ic.amp_beta, amp_theta=ic.amp_theta, J0=ic.J0)


def _record(diag, cfg, q, t, local):
    g, m = cfg.grid, cfg.model
    ev = m.evaluate_state(q)
    diag.t.append(t)
    diag.E_tot.append(total_energy(g, m, q, ev))
    diag.E_kin.append(kinetic_energy(g, m, q))
    diag.S_tot.append(total_entropy(g, m, q, ev))
    diag.min_theta.append(float(np.min(ev.Theta)))
    diag.min_detFe.append(float(np.min(tc.det(q.F))))
    if local:
        lb = local_balances(cfg, q, ev)
        diag.res_energy_local.append(lb.energy)
        diag.res_entropy_local.append(lb.entropy)
    else:
        diag.res_energy_local.append(np.nan)
        diag.res_entropy_local.append(np.nan)


def run(cfg, q0=None, out_dir=None, callback=None):
    """Integrate to t_end (or for `steps` steps) and return (q, Diagnostics).

    Diagnostics are recorded every `diag_every` steps, the local balances
    every `local_every` steps (0: first and last record only).  On an abort
    the partial diagnostics are flushed and the typed error re-raised with
    the diagnostics attached as `exc.diagnostics`.
    """
    q = initial_state(cfg) if q0 is None else q0
    _guard(cfg, q)
    dt = cfg.dt if cfg.dt is not None else stable_dt(cfg, q)
    c_dt = stable_dt(cfg, q)
    if dt > c_dt * (1 + 1e-12):
        log.warning("dt = %.3e exceeds the stability estimate %.3e", dt, c_dt)
    nsteps = cfg.steps if cfg.steps is not None else int(np.ceil(cfg.t_end / dt - 1e-9))
    if cfg.steps is None and nsteps > 0:
        dt = cfg.t_end / nsteps
    ev0 = cfg.model.evaluate_state(q)
    diag = Diagnostics(entropy_scale=cfg.grid.integrate(-ev0.theta * ev0.psi.psi_tt))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    t = 0.0
    _record(diag, cfg, q, t, local=True)
    try:
        for n in range(1, nsteps + 1):
            q = step(q, cfg, dt)
            t = n * dt
            diag.steps = n
            last = n == nsteps
            if n % cfg.diag_every == 0 or last:
                local = last or (cfg.local_every and n % cfg.local_every == 0)
                _record(diag, cfg, q, t, local=bool(local))
            if out_dir and cfg.snapshot_every and n % cfg.snapshot_every == 0:
                write_snapshot(os.path.join(out_dir, f"snap_{n:06d}.bin"), cfg.grid, q, t)
            if callback is not None:
                callback(n, t, q)
    except GenericMechError as exc:
        diag.aborted = f"{type(exc).__name__}: {exc}"
        exc.diagnostics = diag
        if out_dir:
            diag.to_csv(os.path.join(out_dir, "diagnostics.csv"))
        raise
    if out_dir:
        diag.to_csv(os.path.join(out_dir, "diagnostics.csv"))
        write_snapshot(os.path.join(out_dir, "final.bin"), cfg.grid, q, t)
    return q, diag


# --- temperature form vs internal-energy form -----------------------------------

@dataclass
class FormReport:
    residual: float
    scale: float
    ansatz_term: float
    ext_term_theta: float
    ext_term_energy: float
    referential_residual: float

    @property
    def relative(self):
        return self.residual / self.scale


def referential_derivs(energy, F, a, b, theta):
    """Derivatives of psi_ref = det(F) psi (from ref_derivs when the model has one)."""
    if hasattr(energy, "ref_derivs"):
        return energy.ref_derivs(F, a, b, theta)
    r = energy.derivs(F, a, b, theta)
    J = tc.det(F)
    Jt = J[..., None, None]
    FiT = tc.inv_transpose(F)
    return PsiDerivs(psi=J * r.psi, psi_F=Jt * (r.psi_F + r.psi[..., None, None] * FiT),
                     psi_a=J * r.psi_a, psi_b=J * r.psi_b, psi_t=J * r.psi_t, psi_tt=J * r.psi_tt,
                     psi_Ft=Jt * (r.psi_Ft + r.psi_t[..., None, None] * FiT),
                     psi_at=J * r.psi_at, psi_bt=J * r.psi_bt)


def check_form_equivalence(model, F, a, b, theta, L, Lp, zdot, p_heat=0.0, q_div=0.0, s_ext=1):
    """Temperature form of the heat equation against the internal-energy form.

    Pointwise data: the velocity gradient L, a deviatoric inelastic rate Lp,
    the material rate zdot of the diffusant, the heat production p_heat and
    the conductive term q_div = div(K grad 1/theta).  The diffusant z is
    beta (extensive) for s_ext = 1 and alpha (intensive) for s_ext = 0; the
    other concentration is held fixed along the motion.

    (i)  c theta' from the referential temperature equation,
         c = -theta psi_ref_tt / J, mapped to e' + e div v through
         e = psi - theta psi_t and F' = L F - F Lp;
    (ii) e' + e div v = p_heat - q_div + (psi_F F^T + psi I) : L
                        - F^T psi_F : Lp - s_ext z psi_z div v.
    The same temperature equation written with the actual psi is also
    evaluated; `referential_residual` is its distance to the referential one.
    """
    en = model.energy
    F = np.asarray(F, dtype=float)
    r = en.derivs(F, a, b, theta)
    R = referential_derivs(en, F, a, b, theta)
    J = tc.det(F)
    d = F.shape[-1]
    I = np.eye(d)
    th = np.asarray(theta, dtype=float)
    divv = tc.trace(L)
    z, psi_z, psi_zt, Rz, Rzt = ((b, r.psi_b, r.psi_bt, R.psi_b, R.psi_bt) if s_ext
                                 else (a, r.psi_a, r.psi_at, R.psi_a, R.psi_at))
    th2 = th[..., None, None]
    Ft = tc.transpose(F)
    Fdot = tc.matmul(L, F) - tc.matmul(F, Lp)
    # (i) referential temperature equation
    c = -th * R.psi_tt / J
    ansatz = (Rz - th * Rzt) / J * zdot
    ext_t = s_ext * z * Rz / J * divv
    cth_ref = (p_heat - q_div
               + th * tc.ddot(tc.matmul(R.psi_Ft, Ft) / J[..., None, None], L)
               - th * tc.ddot(tc.matmul(Ft, R.psi_Ft) / J[..., None, None], Lp)
               - ansatz - ext_t)
    # the same in actual psi
    cth_act = (p_heat - q_div
               + th * tc.ddot(tc.matmul(r.psi_Ft, Ft) + r.psi_t[..., None, None] * I, L)
               - th * tc.ddot(tc.matmul(Ft, r.psi_Ft), Lp)
               - (psi_z - th * psi_zt) * zdot - s_ext * z * psi_z * divv)
    e = r.psi - th * r.psi_t
    chain = (cth_ref + tc.ddot(r.psi_F - th2 * r.psi_Ft, Fdot)
             + (psi_z - th * psi_zt) * zdot + e * divv)
    # (ii) internal-energy form
    ext_e = s_ext * z * psi_z * divv
    power = tc.ddot(tc.matmul(r.psi_F, Ft) + r.psi[..., None, None] * I, L)
    plast = tc.ddot(tc.matmul(Ft, r.psi_F), Lp)
    energy_form = p_heat - q_div + power - plast - ext_e
    terms = [np.abs(p_heat), np.abs(q_div), np.abs(power), np.abs(plast), np.abs(ext_e),
             np.abs(e * divv), np.abs(cth_ref)]
    scale = float(np.max(sum(np.broadcast_to(t, np.shape(e)) for t in terms)))
    return FormReport(
        residual=float(np.max(np.abs(chain - energy_form))),
        scale=scale,
        ansatz_term=float(np.max(np.abs(ansatz))),
        ext_term_theta=float(np.max(np.abs(ext_t))),
        ext_term_energy=float(np.max(np.abs(ext_e))),
        referential_residual=float(np.max(np.abs(cth_ref - cth_act)) / scale),
    )


def random_local_data(rng, n, d, scale=1.0):
    """n random (L, deviatoric Lp, zdot, p_heat >= 0, q_div) tuples."""
    L = scale * rng.standard_normal((n, d, d))
    Lp = tc.dev(scale * rng.standard_normal((n, d, d)))
    zdot = scale * rng.standard_normal(n)
    p_heat = np.abs(scale * rng.standard_normal(n))
    q_div = scale * rng.standard_normal(n)
    return L, Lp, zdot, p_heat, q_div


# --- inelastic distortion ---------------------------------------------------------

@dataclass
class DistortionTrack:
    t: list = field(default_factory=list)
    det_drift: list = field(default_factory=list)
    split_residual: list = field(default_factory=list)
    integrated_mismatch: list = field(default_factory=list)
    max_Lp: list = field(default_factory=list)
    Fp: np.ndarray = None


def _advect_tensor(grid, v, A):
    return np.einsum("...ijk,...k->...ij", grid.grad(A), v)


def split_residual(cfg, q, Fp, Fp_dot, ev=None):
    """|F' + (v.grad)F - L F| / |L F| for F = F_e F_p, F' from the rates of F_e and F_p."""
    g = cfg.grid
    ev = _guard(cfg, q) if ev is None else ev
    dq = rhs(q, cfg, ev)
    rho = density(cfg.model, q)
    v = q.p / rho[..., None]
    L = g.grad(v)
    Fm = tc.matmul(q.F, Fp)
    Fdot = tc.matmul(dq.F, Fp) + tc.matmul(q.F, Fp_dot)
    LF = tc.matmul(L, Fm)
    res = Fdot + _advect_tensor(g, v, Fm) - LF
    return float(np.max(tc.norm(res)) / max(float(np.max(tc.norm(LF))), 1e-300))


def track_inelastic_distortion(cfg, q0=None, Fp0=None, steps=None, dt=None, record_every=1):
    """Run while integrating F_p' + (v.grad) F_p = L_p F_p in the same scheme.

    The total deformation gradient is integrated independently alongside,
    F' + (v.grad) F = L F, starting from F_e(0) F_p(0); its distance to the
    reconstruction F_e F_p is `integrated_mismatch`.  `split_residual` is the
    instantaneous residual of F' = L F for F = F_e F_p, `det_drift` the max
    of |det F_p - det F_p(0)|.
    """
    g = cfg.grid
    q = initial_state(cfg) if q0 is None else q0
    d = q.d
    Fp = np.broadcast_to(np.eye(d), g.N + (d, d)).copy() if Fp0 is None else np.array(Fp0, float)
    det0 = tc.det(Fp)
    dt = cfg.dt if dt is None else dt
    dt = stable_dt(cfg, q) if dt is None else dt
    steps = cfg.steps if steps is None else steps
    Ftot = tc.matmul(q.F, Fp)

    def rates(qq, y, ev):
        Fp_, Ft_ = y[..., :d, :], y[..., d:, :]
        O = OnsagerOperator(g, cfg.model, qq, cfg.dissipation, ev)
        Lp = O.inelastic_rate()
        v, L = O.v, O.L
        return np.concatenate([tc.matmul(Lp, Fp_) - _advect_tensor(g, v, Fp_),
                               tc.matmul(L, Ft_) - _advect_tensor(g, v, Ft_)], axis=-2)

    y = np.concatenate([Fp, Ftot], axis=-2)
    tr = DistortionTrack()

    def record(n, qq, yy):
        ev = _guard(cfg, qq)
        Fp_, Ft_ = yy[..., :d, :], yy[..., d:, :]
        Fpd = rates(qq, yy, ev)[..., :d, :]
        O = OnsagerOperator(g, cfg.model, qq, cfg.dissipation, ev)
        tr.t.append(n * dt)
        tr.det_drift.append(float(np.max(np.abs(tc.det(Fp_) - det0))))
        tr.split_residual.append(split_residual(cfg, qq, Fp_, Fpd, ev))
        rec = tc.matmul(qq.F, Fp_)
        tr.integrated_mismatch.append(float(np.max(tc.norm(rec - Ft_)) / np.max(tc.norm(Ft_))))
        tr.max_Lp.append(float(np.max(tc.norm(O.inelastic_rate()))))

    record(0, q, y)
    for n in range(1, steps + 1):
        q, y = step(q, cfg, dt, extra=(y, rates))
        if n % record_every == 0 or n == steps:
            record(n, q, y)
    tr.Fp = y[..., :d, :]
    return q, tr
