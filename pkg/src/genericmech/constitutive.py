"""Thermodynamic potentials in an arbitrary thermal variable.

A material is described by its actual (per Eulerian volume) free energy
psi(F_e, alpha, beta, theta) together with the handful of analytic
derivatives listed in :class:`PsiDerivs`.  :class:`ThermoModel` turns that
into the pair (E, S) and their partials with respect to a chosen thermal
variable w, which is the temperature theta, the internal energy e or the
entropy s.

With e = psi - theta psi_t and s = -psi_t the partials in the three gauges
are closed-form in terms of the psi derivatives:

    gauge theta:  E_F = psi_F - theta psi_Ft,  S_F = -psi_Ft,
                  E_w = -theta psi_tt,         S_w = -psi_tt
    gauge e:      E_F = 0,  E_w = 1,  S_F = -psi_F/theta,  S_w = 1/theta
    gauge s:      S_F = 0,  S_w = 1,  E_F = psi_F,         E_w = theta

(the same pattern holds for alpha and beta).  The only numerical step is
recovering theta from w in gauges e and s, done by safeguarded Newton on
the strictly increasing maps theta -> e and theta -> s.
"""

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .errors import (BadParameters, NonpositiveHeatCapacity,
                     NonpositiveTemperature, RootFindFailure)


class ThermalGauge(enum.Enum):
    TEMPERATURE = "theta"
    ENERGY = "e"
    ENTROPY = "s"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"theta": cls.TEMPERATURE, "temperature": cls.TEMPERATURE,
                   "e": cls.ENERGY, "energy": cls.ENERGY,
                   "s": cls.ENTROPY, "entropy": cls.ENTROPY}
        if key not in aliases:
            raise ValueError(f"unknown thermal gauge {value!r}")
        return aliases[key]


@dataclass
class State:
    """Block vector (p, F_e, alpha, beta, w).

    Used for states, tangent increments and covectors alike, pointwise or on
    a grid: the arrays carry any leading batch axes.
    """
    p: np.ndarray
    F: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    w: np.ndarray

    BLOCKS = ("p", "F", "alpha", "beta", "w")

    def blocks(self):
        return tuple(getattr(self, name) for name in self.BLOCKS)

    @property
    def d(self):
        return self.p.shape[-1]

    @property
    def batch_shape(self):
        return np.shape(self.w)

    def map(self, fn, *others):
        return State(*(fn(a, *(getattr(o, n) for o in others))
                       for n, a in zip(self.BLOCKS, self.blocks())))

    def __add__(self, other):
        return self.map(lambda a, b: a + b, other)

    def __sub__(self, other):
        return self.map(lambda a, b: a - b, other)

    def __neg__(self):
        return self.map(lambda a: -a)

    def __mul__(self, c):
        return self.map(lambda a: c * a)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self.map(lambda a: a / c)

    def copy(self):
        return self.map(np.array)

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.blocks())

    @classmethod
    def zeros(cls, d, batch_shape=()):
        b = tuple(batch_shape)
        return cls(np.zeros(b + (d,)), np.zeros(b + (d, d)), np.zeros(b),
                   np.zeros(b), np.zeros(b))


StateLocal = State
CotangentLocal = State


@dataclass
class PsiDerivs:
    """psi and the derivatives needed by the gauge maps and the heat equation.

    Suffix t denotes d/dtheta; F, a, b denote d/dF_e, d/dalpha, d/dbeta.
    """
    psi: np.ndarray
    psi_F: np.ndarray
    psi_a: np.ndarray
    psi_b: np.ndarray
    psi_t: np.ndarray
    psi_tt: np.ndarray
    psi_Ft: np.ndarray
    psi_at: np.ndarray
    psi_bt: np.ndarray


class FreeEnergy:
    """Actual free energy psi(F_e, alpha, beta, theta) with analytic derivatives.

    Subclasses implement :meth:`derivs`.  The admissible box is declared by
    the ranges below and is used both for sampling test states and as the
    bracket of the gauge inversion.
    """
    rho_ref = 1.0
    theta_range = (1e-3, 1e3)
    det_range = (0.5, 2.0)
    alpha_range = (-1.0, 1.0)
    beta_range = (-1.0, 1.0)
    energy_scale = 1.0
    theta_scale = 1.0
    isotropic = False
    ansatz = False

    def derivs(self, F, a, b, theta):
        raise NotImplementedError

    def theta_from_energy(self, F, a, b, e):
        """Closed-form inverse of theta -> e, or None to use the root finder."""
        return None

    def theta_from_entropy(self, F, a, b, s):
        return None

    def sample(self, rng, n, d):
        """n random admissible pointwise states (F, alpha, beta, theta)."""
        lo, hi = self.det_range
        J = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), n)
        U = np.eye(d) + 0.15 * rng.standard_normal((n, d, d))
        U = U / np.abs(tc.det(U))[:, None, None] ** (1.0 / d)
        U = np.where((tc.det(U) < 0)[:, None, None], U[:, ::-1, :], U)
        F = J[:, None, None] ** (1.0 / d) * U
        a = rng.uniform(*_shrink(self.alpha_range), n)
        b = rng.uniform(*_shrink(self.beta_range), n)
        theta = rng.uniform(*_shrink(self.theta_range), n)
        return F, a, b, theta


def _shrink(r, f=0.15):
    lo, hi = r
    return lo + f * (hi - lo), hi - f * (hi - lo)


class ReferentialFreeEnergy(FreeEnergy):
    """Free energy given per referential volume, psi = psi_ref / det F_e."""

    def ref_derivs(self, F, a, b, theta):
        raise NotImplementedError

    def derivs(self, F, a, b, theta):
        r = self.ref_derivs(F, a, b, theta)
        J = tc.det(F)
        FiT = tc.inv_transpose(F)
        Jm = (1.0 / J)
        Jt = Jm[..., None, None]
        return PsiDerivs(
            psi=r.psi * Jm,
            psi_F=(r.psi_F - r.psi[..., None, None] * FiT) * Jt,
            psi_a=r.psi_a * Jm,
            psi_b=r.psi_b * Jm,
            psi_t=r.psi_t * Jm,
            psi_tt=r.psi_tt * Jm,
            psi_Ft=(r.psi_Ft - r.psi_t[..., None, None] * FiT) * Jt,
            psi_at=r.psi_at * Jm,
            psi_bt=r.psi_bt * Jm,
        )


@dataclass
class ThermoEval:
    """E, S and their first partials in one gauge, evaluated at a state."""
    E: np.ndarray
    S: np.ndarray
    E_F: np.ndarray
    E_a: np.ndarray
    E_b: np.ndarray
    E_w: np.ndarray
    S_F: np.ndarray
    S_a: np.ndarray
    S_b: np.ndarray
    S_w: np.ndarray
    theta: np.ndarray
    psi: PsiDerivs

    @property
    def Theta(self):
        return self.E_w / self.S_w

    @property
    def free_energy(self):
        return self.E - self.Theta * self.S

    @property
    def stress_F(self):
        """E_F - Theta S_F, the gauge-independent conjugate of F_e."""
        return self.E_F - self.Theta[..., None, None] * self.S_F

    @property
    def mu_a(self):
        return self.E_a - self.Theta * self.S_a

    @property
    def mu_b(self):
        return self.E_b - self.Theta * self.S_b


def _invert_increasing(fun, target, lo, hi, guess, max_iter=200):
    """Solve fun(x) = target for a strictly increasing fun, elementwise.

    fun returns (value, slope).  Newton steps that leave the current bracket
    are replaced by bisection.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    flo, _ = fun(lo)
    fhi, _ = fun(hi)
    if np.any(flo > target) or np.any(fhi < target):
        raise RootFindFailure("thermal variable outside the admissible bracket")
    x = np.clip(np.broadcast_to(guess, target.shape), lo, hi).astype(float)
    for _ in range(max_iter):
        f, fp = fun(x)
        r = f - target
        hi = np.where(r > 0, x, hi)
        lo = np.where(r <= 0, x, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - r / fp
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        step = np.abs(xn - x)
        x = xn
        if np.all(step <= 4 * np.finfo(float).eps * np.abs(x)):
            break
    else:
        raise RootFindFailure("gauge inversion did not converge")
    return x


@dataclass(frozen=True)
class ThermoModel:
    energy: FreeEnergy
    gauge: ThermalGauge = ThermalGauge.TEMPERATURE

    def __post_init__(self):
        object.__setattr__(self, "gauge", ThermalGauge.parse(self.gauge))

    @property
    def rho_ref(self):
        return self.energy.rho_ref

    def with_gauge(self, gauge):
        return dataclasses.replace(self, gauge=ThermalGauge.parse(gauge))

    # --- gauge maps ----------------------------------------------------
    def w_from_theta(self, F, a, b, theta, gauge=None):
        g = self.gauge if gauge is None else ThermalGauge.parse(gauge)
        theta = np.asarray(theta, dtype=float)
        if g is ThermalGauge.TEMPERATURE:
            return theta.copy()
        d = self.energy.derivs(F, a, b, theta)
        if g is ThermalGauge.ENERGY:
            return d.psi - theta * d.psi_t
        return -d.psi_t

    def theta_from_w(self, F, a, b, w, gauge=None):
        g = self.gauge if gauge is None else ThermalGauge.parse(gauge)
        w = np.asarray(w, dtype=float)
        if g is ThermalGauge.TEMPERATURE:
            theta = w.copy()
        else:
            closed = (self.energy.theta_from_energy(F, a, b, w) if g is ThermalGauge.ENERGY
                      else self.energy.theta_from_entropy(F, a, b, w))
            if closed is not None:
                theta = np.asarray(closed, dtype=float)
            else:
                theta = self._solve_theta(F, a, b, w, g)
        if np.any(~(theta > 0)):
            raise NonpositiveTemperature("temperature <= 0 encountered")
        return theta

    def _solve_theta(self, F, a, b, w, g):
        en = self.energy

        def fun(theta):
            d = en.derivs(F, a, b, theta)
            if g is ThermalGauge.ENERGY:
                return d.psi - theta * d.psi_t, -theta * d.psi_tt
            return -d.psi_t, -d.psi_tt

        lo, hi = en.theta_range
        return _invert_increasing(fun, w, lo, hi, en.theta_scale)

    # --- evaluation ----------------------------------------------------
    def evaluate(self, F, a, b, w):
        F = np.asarray(F, dtype=float)
        theta = self.theta_from_w(F, a, b, w)
        d = self.energy.derivs(F, a, b, theta)
        g = self.gauge
        th = theta
        th2 = theta[..., None, None]
        e = d.psi - th * d.psi_t
        s = -d.psi_t
        if g is ThermalGauge.TEMPERATURE:
            out = ThermoEval(
                E=e, S=s,
                E_F=d.psi_F - th2 * d.psi_Ft, E_a=d.psi_a - th * d.psi_at,
                E_b=d.psi_b - th * d.psi_bt, E_w=-th * d.psi_tt,
                S_F=-d.psi_Ft, S_a=-d.psi_at, S_b=-d.psi_bt, S_w=-d.psi_tt,
                theta=th, psi=d)
        elif g is ThermalGauge.ENERGY:
            one = np.ones_like(th)
            out = ThermoEval(
                E=np.asarray(w, dtype=float) * one, S=s,
                E_F=np.zeros_like(F), E_a=0 * one, E_b=0 * one, E_w=one,
                S_F=-d.psi_F / th2, S_a=-d.psi_a / th, S_b=-d.psi_b / th, S_w=1.0 / th,
                theta=th, psi=d)
        else:
            one = np.ones_like(th)
            out = ThermoEval(
                E=e, S=np.asarray(w, dtype=float) * one,
                E_F=d.psi_F, E_a=d.psi_a, E_b=d.psi_b, E_w=th,
                S_F=np.zeros_like(F), S_a=0 * one, S_b=0 * one, S_w=one,
                theta=th, psi=d)
        if np.any(~(out.Theta > 0)):
            raise NonpositiveTemperature("E_w / S_w <= 0 encountered")
        return out

    def evaluate_state(self, q):
        return self.evaluate(q.F, q.alpha, q.beta, q.w)


# --- operations on pointwise (or batched) states --------------------------

def temperature(m, q):
    return m.evaluate_state(q).Theta


def free_energy(m, q):
    return m.evaluate_state(q).free_energy


def cauchy_stress(m, q):
    ev = m.evaluate_state(q)
    d = q.F.shape[-1]
    return tc.matmul(ev.stress_F, tc.transpose(q.F)) + ev.free_energy[..., None, None] * np.eye(d)


def mandel_stress(m, q):
    ev = m.evaluate_state(q)
    return tc.matmul(tc.transpose(q.F), ev.stress_F)


def chemical_potentials(m, q):
    ev = m.evaluate_state(q)
    return ev.mu_a, ev.mu_b


def heat_capacity(m, q):
    """Actual heat capacity c = -theta psi_tt (per actual volume)."""
    ev = m.evaluate_state(q)
    c = -ev.theta * ev.psi.psi_tt
    if np.any(~(c > 0)):
        raise NonpositiveHeatCapacity("heat capacity <= 0 encountered")
    return c


def change_gauge(m, q, target):
    target = ThermalGauge.parse(target)
    if target is m.gauge:
        return q.copy()
    theta = m.theta_from_w(q.F, q.alpha, q.beta, q.w)
    w = m.w_from_theta(q.F, q.alpha, q.beta, theta, gauge=target)
    return State(np.array(q.p), np.array(q.F), np.array(q.alpha), np.array(q.beta), w)


def state_from_theta(m, p, F, a, b, theta):
    """Build a state in the gauge of m from a temperature."""
    return State(np.asarray(p, dtype=float), np.asarray(F, dtype=float),
                 np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                 m.w_from_theta(F, a, b, theta))


# --- finite-difference oracle ---------------------------------------------

@dataclass
class DerivativeReport:
    errors: dict
    flagged: dict
    tol: float
    relaxed_tol: float

    def worst(self):
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self):
        return all(v <= self.tol for v in self.errors.values())

    def lines(self):
        out = []
        for k, v in self.errors.items():
            flag = f" high-curvature states: {self.flagged[k]}" if self.flagged.get(k) else ""
            out.append(f"{k:10s} max rel err {v:.3e}{flag}")
        return out


def check_derivatives(m, q, h=1e-5, tol=1e-6, relaxed_tol=1e-4):
    """Compare every analytic partial against central differences.

    q is a batched State.  Steps are h times a per-variable scale.  For every
    partial two step sizes (h, 2h) are used; if they disagree by more than
    tol the state sits in a high-curvature region (e.g. a plateau fillet)
    and is judged against relaxed_tol instead; such states are counted in
    the report's flag table.
    """
    en = m.energy
    F = np.asarray(q.F, dtype=float)
    a, b, w = (np.asarray(x, dtype=float) for x in (q.alpha, q.beta, q.w))
    n = np.shape(w)
    d = F.shape[-1]
    theta = m.theta_from_w(F, a, b, w)
    wscale = np.maximum(np.abs(w), {ThermalGauge.TEMPERATURE: en.theta_scale,
                                    ThermalGauge.ENERGY: en.energy_scale,
                                    ThermalGauge.ENTROPY: en.energy_scale / en.theta_scale}[m.gauge])
    errors, flagged = {}, {}

    def record(name, analytic, fd1, fd2, fval, fscale, xscale):
        # relative error with a noise floor: central differences of f carry
        # roundoff ~ eps |f| / h, so partials below 1e-4 (|f| + fscale)/xscale
        # are compared absolutely (at tol times that floor)
        ax = tuple(range(len(n), analytic.ndim))
        nrm = lambda x: np.sqrt(np.sum(x * x, axis=ax)) if ax else np.abs(x)
        floor = 1e-4 * (np.abs(fval) + fscale) / xscale
        denom = np.maximum(np.maximum(nrm(analytic), nrm(fd1)), floor)
        e1 = nrm(fd1 - analytic) / denom
        spread = nrm(fd1 - fd2) / denom
        high = spread > tol
        err = np.where(high, e1 * tol / relaxed_tol, e1)
        errors[name] = float(np.max(err)) if np.size(err) else 0.0
        flagged[name] = int(np.sum(high))

    def partials(fun, an_F, an_a, an_b, an_last, last_val, last_h, label, last_name, fscale):
        f0 = fun(F, a, b, last_val)
        fdF = {}
        for fac in (1.0, 2.0):
            g = np.empty_like(F)
            for i in range(d):
                for j in range(d):
                    Fp, Fm = F.copy(), F.copy()
                    Fp[..., i, j] += fac * h
                    Fm[..., i, j] -= fac * h
                    g[..., i, j] = (fun(Fp, a, b, last_val) - fun(Fm, a, b, last_val)) / (2 * fac * h)
            fdF[fac] = g
        record(f"{label}_F", an_F, fdF[1.0], fdF[2.0], f0, fscale, 1.0)
        for nm, an, var in (("a", an_a, 1), ("b", an_b, 2)):
            res = {}
            for fac in (1.0, 2.0):
                args_p = [F, a, b, last_val]
                args_m = [F, a, b, last_val]
                args_p[var] = args_p[var] + fac * h
                args_m[var] = args_m[var] - fac * h
                res[fac] = (fun(*args_p) - fun(*args_m)) / (2 * fac * h)
            record(f"{label}_{nm}", an, res[1.0], res[2.0], f0, fscale, 1.0)
        res = {}
        for fac in (1.0, 2.0):
            hh = fac * h * last_h
            res[fac] = (fun(F, a, b, last_val + hh) - fun(F, a, b, last_val - hh)) / (2 * hh)
        record(f"{label}_{last_name}", an_last, res[1.0], res[2.0], f0, fscale, last_h)

    # level 1: free energy in gauge theta
    pd = en.derivs(F, a, b, theta)
    psi = lambda F_, a_, b_, t_: en.derivs(F_, a_, b_, t_).psi
    psi_t = lambda F_, a_, b_, t_: en.derivs(F_, a_, b_, t_).psi_t
    escale, sscale = en.energy_scale, en.energy_scale / en.theta_scale
    partials(psi, pd.psi_F, pd.psi_a, pd.psi_b, pd.psi_t, theta, theta, "psi", "t", escale)
    partials(psi_t, pd.psi_Ft, pd.psi_at, pd.psi_bt, pd.psi_tt, theta, theta, "psi_t", "t", sscale)

    # level 2: E and S in the model's gauge (through the gauge inversion)
    ev = m.evaluate(F, a, b, w)
    Efun = lambda F_, a_, b_, w_: m.evaluate(F_, a_, b_, w_).E
    Sfun = lambda F_, a_, b_, w_: m.evaluate(F_, a_, b_, w_).S
    partials(Efun, ev.E_F, ev.E_a, ev.E_b, ev.E_w, w, wscale, "E", "w", escale)
    partials(Sfun, ev.S_F, ev.S_a, ev.S_b, ev.S_w, w, wscale, "S", "w", sscale)
    return DerivativeReport(errors, flagged, tol, relaxed_tol)


def gauge_invariants(m, q):
    """Gauge-independent quantities at q: Theta, psi, Cauchy, Mandel, mu_a, mu_b."""
    return {
        "Theta": temperature(m, q),
        "psi": free_energy(m, q),
        "cauchy": cauchy_stress(m, q),
        "mandel": mandel_stress(m, q),
        "mu_a": chemical_potentials(m, q)[0],
        "mu_b": chemical_potentials(m, q)[1],
    }


def gauge_invariance_errors(m, F, a, b, theta, p=None):
    """Max relative spread of each invariant across the three gauges."""
    d = F.shape[-1]
    if p is None:
        p = np.zeros(np.shape(theta) + (d,))
    ref = None
    worst = {}
    for g in ThermalGauge:
        mg = m.with_gauge(g)
        q = state_from_theta(mg, p, F, a, b, theta)
        # exercise the conversion path as well: go through gauge e and back
        q = change_gauge(mg.with_gauge(ThermalGauge.ENERGY),
                         change_gauge(mg, q, ThermalGauge.ENERGY), g)
        inv = gauge_invariants(mg, q)
        if ref is None:
            ref = inv
            continue
        for k, v in inv.items():
            scale = np.max(np.abs(ref[k])) + 1e-300
            worst[k] = max(worst.get(k, 0.0), float(np.max(np.abs(v - ref[k])) / scale))
    return worst


def require(cond, msg):
    if not cond:
        raise BadParameters(msg)
