"""Packaged constitutive models and dissipation specifications.

Three free energies are provided:

* :class:`QuadraticFreeEnergy`: smooth oracle model whose gauge maps are
  invertible in closed form.
* :class:`MantleFreeEnergy`: neo-Hookean bulk/shear energy with a Biot-type
  coupling to a concentration z in [0, 1] and a bulk law with two pressure
  plateaus (olivine-type phase transitions).
* :class:`SmaFreeEnergy`: multi-well energy of a shape-memory alloy, with a
  hard minimum over the wells or a log-sum-exp smoothing of it.

plus :class:`DissipationSpec` (coefficients of the dual dissipation
potential) and the rate-independent SMA dissipation.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import tensor_core as tc
from .constitutive import (PsiDerivs, ReferentialFreeEnergy, FreeEnergy,
                           ThermoModel, ThermalGauge, require)
from .errors import BadParameters


# --- quintic smoothstep and its antiderivatives -----------------------------

def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def smoothstep_slope(t):
    inside = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * t**2 * (1.0 - t) ** 2, 0.0)


def _smoothstep_int(t):
    """int_0^t smoothstep for t in [0, 1]."""
    return t**4 * (2.5 - 3.0 * t + t**2)


def _smoothstep_int2(t):
    return t**5 * (0.5 - 0.5 * t + t**2 / 7.0)


def smooth_ramp(x, w):
    """C^2 ramp: 0 for x <= 0, x - w/2 for x >= w, quintic fillet between."""
    t = np.clip(x / w, 0.0, 1.0)
    return np.where(x >= w, x - 0.5 * w, w * _smoothstep_int(t))


def smooth_ramp_int(x, w):
    """int_0^x smooth_ramp."""
    t = np.clip(x / w, 0.0, 1.0)
    tail = w**2 / 7.0 + 0.5 * (x**2 - w**2) - 0.5 * w * (x - w)
    return np.where(x >= w, tail, w**2 * _smoothstep_int2(t))


# --- quadratic oracle model --------------------------------------------------

@dataclass(frozen=True)
class QuadraticParams:
    G: float = 1.0
    k_alpha: float = 0.5      # energetic (non-ansatz) part of the alpha term
    k_beta: float = 0.5
    a_alpha: float = 0.3      # entropic (ansatz) part, multiplied by theta/theta0
    a_beta: float = 0.3
    alpha0: float = 0.5
    beta0: float = 1.0
    theta0: float = 1.0
    gamma: float = 0.2        # thermal expansion coupling -gamma (theta - theta0)(J - 1)
    c: float = 2.0
    rho_ref: float = 1.0


class QuadraticFreeEnergy(ReferentialFreeEnergy):
    """psi_ref = G/2 |F-I|^2 + k/2 (z-z0)^2 + theta/theta0 a/2 (z-z0)^2
    - gamma (theta-theta0)(J-1) + c theta (1 - ln theta), for z = alpha, beta.

    Internal energy and entropy are
        J e = G/2 |F-I|^2 + k/2 (z-z0)^2 + gamma theta0 (J-1) + c theta
        J s = c ln theta - theta0^{-1} a/2 (z-z0)^2 + gamma (J-1)
    so theta(e) and theta(s) are explicit.
    """

    def __init__(self, params=None):
        self.params = params or QuadraticParams()
        P = self.params
        require(P.G >= 0 and P.c > 0 and P.theta0 > 0 and P.rho_ref > 0,
                "quadratic model needs G >= 0, c > 0, theta0 > 0, rho_ref > 0")
        require(P.a_alpha >= 0 and P.a_beta >= 0, "entropic coefficients must be >= 0")
        self.rho_ref = P.rho_ref
        self.theta_range = (1e-6 * P.theta0, 1e6 * P.theta0)
        self.det_range = (0.7, 1.4)
        self.alpha_range = (P.alpha0 - 1.0, P.alpha0 + 1.0)
        self.beta_range = (P.beta0 - 1.0, P.beta0 + 1.0)
        self.energy_scale = max(P.c * P.theta0, P.G)
        self.theta_scale = P.theta0
        self.ansatz = P.k_alpha == 0 and P.k_beta == 0

    def _parts(self, F, a, b):
        P = self.params
        d = F.shape[-1]
        da, db = a - P.alpha0, b - P.beta0
        J = tc.det(F)
        X = F - np.eye(d)
        phi = 0.5 * P.G * tc.ddot(X, X) + 0.5 * P.k_alpha * da**2 + 0.5 * P.k_beta * db**2
        eta = (0.5 * P.a_alpha * da**2 + 0.5 * P.a_beta * db**2) / P.theta0
        return J, X, da, db, phi, eta

    def ref_derivs(self, F, a, b, theta):
        P = self.params
        J, X, da, db, phi, eta = self._parts(F, a, b)
        C = tc.cof(F)
        th = theta
        return PsiDerivs(
            psi=phi + th * eta - P.gamma * (th - P.theta0) * (J - 1) + P.c * th * (1 - np.log(th)),
            psi_F=P.G * X - (P.gamma * (th - P.theta0))[..., None, None] * C,
            psi_a=P.k_alpha * da + th * P.a_alpha * da / P.theta0,
            psi_b=P.k_beta * db + th * P.a_beta * db / P.theta0,
            psi_t=eta - P.gamma * (J - 1) - P.c * np.log(th),
            psi_tt=-P.c / th,
            psi_Ft=-P.gamma * C,
            psi_at=P.a_alpha * da / P.theta0 + 0 * th,
            psi_bt=P.a_beta * db / P.theta0 + 0 * th,
        )

    def theta_from_energy(self, F, a, b, e):
        P = self.params
        J, X, da, db, phi, eta = self._parts(F, a, b)
        return (J * e - phi - P.gamma * P.theta0 * (J - 1)) / P.c

    def theta_from_entropy(self, F, a, b, s):
        P = self.params
        J, X, da, db, phi, eta = self._parts(F, a, b)
        return np.exp((J * s + eta - P.gamma * (J - 1)) / P.c)

    def sample(self, rng, n, d):
        P = self.params
        F = np.eye(d) + 0.12 * rng.standard_normal((n, d, d))
        a = P.alpha0 + rng.uniform(-0.5, 0.5, n)
        b = P.beta0 + rng.uniform(-0.5, 0.5, n)
        theta = P.theta0 * rng.uniform(0.5, 3.0, n)
        return F, a, b, theta


def quadratic_test_model(gauge=ThermalGauge.TEMPERATURE, **params):
    return ThermoModel(QuadraticFreeEnergy(QuadraticParams(**params)), gauge)


# --- mantle model --------------------------------------------------------------

@dataclass(frozen=True)
class MantleParams:
    G: float = 60e9                 # Pa
    B: float = 1e5                  # J m^-3 K^-1 (per unit z^2)
    b: float = 1.0
    J_T: float = 0.9
    c: float = 4e6                  # J m^-3 K^-1
    mu_barrier: float = 1.0         # J m^-3, barrier stiffness at theta_ref
    theta_ref: float = 1800.0       # K
    rho_ref: float = 3300.0         # kg m^-3
    p1: float = 14e9                # plateau pressures at theta_ref
    p2: float = 24e9
    clapeyron1: float = 1.6e6       # Pa/K
    clapeyron2: float = -2.5e6
    plateau1_upper_J: float = 0.93  # J at the low-pressure end of the first plateau
    jump1: float = 0.03             # relative density jump across plateau 1
    jump2: float = 0.05
    plateau_gap: float = 0.05       # J-distance between the two plateaus
    fillet: float = 0.005           # width of the quintic fillets in J
    K_low: float = 2e11             # Pa, slope of p(J) above plateau 1
    K_high: float = 4e11            # Pa, slope of p(J) below plateau 2
    diffusant: str = "alpha"        # slot carrying z: "alpha" (intensive) or "beta"


class MantleFreeEnergy(ReferentialFreeEnergy):
    """psi_ref = kappa(J, theta) + G (J^{-2/d} tr(F F^T) - d)
    + theta B/2 (z + b (J - J_T))^2 + c theta (1 - ln theta)
    + theta mu_b/theta_ref (-ln z - ln(1 - z)).

    The barrier is multiplied by theta so the z-dependence is purely
    entropic, i.e. psi_z - theta psi_zt = 0 exactly.

    The bulk energy kappa(., theta) is convex with two exactly linear
    segments; its slope gives the pressure p = -d kappa/dJ, which equals
    p_k(theta) = p_k + clapeyron_k (theta - theta_ref) on the interval
    [a_k, b_k] of plateau k.  Between and outside the plateaus p(J) is
    joined by C^2 quintic transitions, so kappa is C^3 in J.
    """

    isotropic = True
    ansatz = True

    def __init__(self, params=None):
        self.params = P = params or MantleParams()
        require(P.G > 0 and P.c > 0 and P.B >= 0 and P.mu_barrier >= 0, "bad mantle moduli")
        require(P.diffusant in ("alpha", "beta"), "diffusant must be 'alpha' or 'beta'")
        require(P.jump1 > 0 and P.jump2 > 0 and P.plateau_gap > 2 * P.fillet and P.fillet > 0,
                "plateau geometry must be non-degenerate")
        self.b1 = P.plateau1_upper_J
        self.a1 = self.b1 / (1 + P.jump1)
        self.b2 = self.a1 - P.plateau_gap
        self.a2 = self.b2 / (1 + P.jump2)
        require(self.a2 > 0, "plateau intervals must lie at J > 0")
        self.rho_ref = P.rho_ref
        self.theta_range = (50.0, 2e4)
        self.det_range = (self.a2 - 0.05, 1.03)
        self.alpha_range = (0.0, 1.0)
        self.beta_range = (0.0, 1.0)
        self.energy_scale = P.G
        self.theta_scale = P.theta_ref

    # bulk law
    def plateau_pressures(self, theta):
        P = self.params
        dt = np.asarray(theta, dtype=float) - P.theta_ref
        return P.p1 + P.clapeyron1 * dt, P.p2 + P.clapeyron2 * dt

    def plateaus(self):
        """J-intervals [a_k, b_k] on which the pressure is exactly constant."""
        return (self.a1, self.b1), (self.a2, self.b2)

    def _H(self, J):
        g = self.a1 - self.b2
        return smoothstep((self.a1 - J) / g), -smoothstep_slope((self.a1 - J) / g) / g

    def _A_H(self, J):
        g = self.a1 - self.b2
        t = np.clip((self.a1 - J) / g, 0.0, 1.0)
        return -g * _smoothstep_int(t) - np.maximum(self.b2 - J, 0.0)

    def pressure(self, J, theta):
        P = self.params
        p1, p2 = self.plateau_pressures(theta)
        H, _ = self._H(J)
        w = P.fillet
        return (p1 + (p2 - p1) * H - P.K_low * smooth_ramp(J - self.b1, w)
                + P.K_high * smooth_ramp(self.a2 - J, w))

    def pressure_J(self, J, theta):
        P = self.params
        p1, p2 = self.plateau_pressures(theta)
        _, HJ = self._H(J)
        w = P.fillet
        return ((p2 - p1) * HJ - P.K_low * smoothstep((J - self.b1) / w)
                - P.K_high * smoothstep((self.a2 - J) / w))

    def _P(self, J, theta):
        P = self.params
        p1, p2 = self.plateau_pressures(theta)
        w = P.fillet
        return (p1 * J + (p2 - p1) * self._A_H(J) - P.K_low * smooth_ramp_int(J - self.b1, w)
                - P.K_high * smooth_ramp_int(self.a2 - J, w))

    def _P_t(self, J):
        P = self.params
        return P.clapeyron1 * J + (P.clapeyron2 - P.clapeyron1) * self._A_H(J)

    def bulk(self, J, theta):
        """(kappa, kappa_J, kappa_t, kappa_Jt) with kappa(1, theta) = 0."""
        P = self.params
        H, _ = self._H(J)
        kappa = -(self._P(J, theta) - self._P(1.0, theta))
        kappa_t = -(self._P_t(J) - self._P_t(1.0)) + 0 * theta
        kappa_Jt = -(P.clapeyron1 + (P.clapeyron2 - P.clapeyron1) * H) + 0 * theta
        return kappa, -self.pressure(J, theta), kappa_t, kappa_Jt

    def ref_derivs(self, F, a, b, theta):
        P = self.params
        d = F.shape[-1]
        z = a if P.diffusant == "alpha" else b
        if np.any((z <= 0) | (z >= 1)):
            raise BadParameters("mantle concentration z must lie strictly inside (0, 1)")
        J = tc.det(F)
        C = tc.cof(F)
        FiT = C / J[..., None, None]
        I1 = tc.ddot(F, F)
        Jm = J ** (-2.0 / d)
        kappa, kappa_J, kappa_t, kappa_Jt = self.bulk(J, theta)
        y = z + P.b * (J - P.J_T)
        mb = P.mu_barrier / P.theta_ref
        barrier = -np.log(z) - np.log1p(-z)
        barrier_z = -1.0 / z + 1.0 / (1.0 - z)
        th = theta
        X = P.B * y + mb * barrier_z          # = psi_zt; psi_z = theta X
        shear = P.G * (Jm * I1 - d)
        shear_F = P.G * Jm[..., None, None] * (2.0 * F - (2.0 / d) * I1[..., None, None] * FiT)
        psi = kappa + shear + th * 0.5 * P.B * y**2 + P.c * th * (1 - np.log(th)) + th * mb * barrier
        psi_F = (kappa_J + th * P.B * P.b * y)[..., None, None] * C + shear_F
        psi_t = kappa_t + 0.5 * P.B * y**2 - P.c * np.log(th) + mb * barrier
        psi_Ft = (kappa_Jt + P.B * P.b * y)[..., None, None] * C
        zero = 0 * th
        psi_z, psi_zt = th * X, X + zero
        if P.diffusant == "alpha":
            pa, pat, pb, pbt = psi_z, psi_zt, zero, zero
        else:
            pa, pat, pb, pbt = zero, zero, psi_z, psi_zt
        return PsiDerivs(psi=psi, psi_F=psi_F, psi_a=pa, psi_b=pb, psi_t=psi_t,
                         psi_tt=-P.c / th + zero, psi_Ft=psi_Ft, psi_at=pat, psi_bt=pbt)

    def sample(self, rng, n, d):
        P = self.params
        lo, hi = self.det_range
        J = rng.uniform(lo + 0.02, hi - 0.01, n)
        U = np.eye(d) + 0.05 * rng.standard_normal((n, d, d))
        U = U / tc.det(U)[:, None, None] ** (1.0 / d)
        R = tc.rotation(rng.uniform(-np.pi, np.pi, (n, d * (d - 1) // 2 if d > 1 else 1)), d)
        F = J[:, None, None] ** (1.0 / d) * tc.matmul(R, U)
        z = rng.uniform(0.1, 0.9, n)
        other = rng.uniform(0.1, 0.9, n)
        theta = rng.uniform(1000.0, 2600.0, n)
        a, b = (z, other) if P.diffusant == "alpha" else (other, z)
        return F, a, b, theta


def mantle_energy(params=None, gauge=ThermalGauge.TEMPERATURE):
    return ThermoModel(MantleFreeEnergy(params), gauge)


def mantle_pressure(params, J, theta):
    """Bulk pressure p(J, theta) = -d kappa/dJ of the mantle model (Pa)."""
    en = params if isinstance(params, MantleFreeEnergy) else MantleFreeEnergy(params)
    return en.pressure(np.asarray(J, dtype=float), np.asarray(theta, dtype=float))


# --- shape-memory alloy ---------------------------------------------------------

def default_sma_wells(d=2, shear=0.1):
    if d == 2:
        return (np.eye(2), np.array([[1.0, shear], [0.0, 1.0]]), np.array([[1.0, -shear], [0.0, 1.0]]))
    if d == 3:
        wells = [np.eye(3)]
        for k in range(3):
            U = np.full(3, (1 + shear) ** -0.5)
            U[k] = 1 + shear
            wells.append(np.diag(U))
        return tuple(wells)
    raise BadParameters("default wells exist for d = 2 and d = 3")


@dataclass(frozen=True)
class SmaParams:
    wells: tuple = None
    G: tuple = (20e9, 20e9, 20e9)     # shear moduli per well (Pa)
    c: tuple = (3.0e6, 2.8e6, 2.8e6)  # heat capacities per well (J m^-3 K^-1)
    theta_T: float = 300.0            # K
    K: float = 1e11                   # bulk modulus (Pa)
    rho_ref: float = 6500.0
    smooth: bool = False              # log-sum-exp instead of hard min
    tau_w: float = 1e8                # smoothing energy (J/m^3), ~ G_i shear^2
    d: int = 2


class SmaFreeEnergy(FreeEnergy):
    """psi = K/2 (J-1)^2 + min_i [G_i (|F F_i^{-1}|^2 J^{-2/d} - d) - c_i theta ln(theta/theta_T)].

    The elastic part is written with |F F_i^{-1}|^2 = tr(F^T F F_i^{-1} F_i^{-T}),
    which is invariant under F -> R F and vanishes on the whole orbit SO(d) F_i.
    Ties of the hard minimum are broken by the lowest index.
    """

    def __init__(self, params=None):
        self.params = P = params or SmaParams()
        wells = P.wells if P.wells is not None else default_sma_wells(P.d)
        self.wells = tuple(np.asarray(Fi, dtype=float) for Fi in wells)
        n = len(self.wells)
        require(len(P.G) == n and len(P.c) == n, "need one G_i and c_i per well")
        for Fi in self.wells:
            require(Fi.shape == (P.d, P.d), "well shape must be d x d")
            require(abs(np.linalg.det(Fi) - 1.0) <= 1e-12, "wells must have det F_i = 1")
        require(all(ci > 0 for ci in P.c) and all(g > 0 for g in P.G), "moduli must be positive")
        require(all(P.c[0] > ci for ci in P.c[1:]), "need c_0 > c_i for the martensite wells")
        self.M = tuple(np.linalg.inv(Fi) @ np.linalg.inv(Fi).T for Fi in self.wells)
        self.rho_ref = P.rho_ref
        self.theta_range = (1.0, 1e4)
        self.det_range = (0.9, 1.1)
        self.energy_scale = max(P.G)
        self.theta_scale = P.theta_T

    def well_energies(self, F):
        """Elastic parts W_i(F) and their F-derivatives, stacked on axis -1 / -3."""
        d = F.shape[-1]
        J = tc.det(F)
        Jm = J ** (-2.0 / d)
        FiT = tc.inv_transpose(F)
        W, WF = [], []
        for Gi, Mi in zip(self.params.G, self.M):
            FM = F @ Mi
            I = tc.ddot(FM, F)
            W.append(Gi * (Jm * I - d))
            WF.append(Gi * Jm[..., None, None] * (2.0 * FM - (2.0 / d) * I[..., None, None] * FiT))
        return np.stack(W, axis=-1), np.stack(WF, axis=-3)

    def _wells(self, F, theta):
        P = self.params
        W, WF = self.well_energies(F)
        c = np.asarray(P.c)
        th = theta[..., None]
        lg = np.log(th / P.theta_T)
        Wt = W - c * th * lg
        Wt_t = -c * (lg + 1.0)
        Wt_tt = -c / th
        return Wt, WF, Wt_t, Wt_tt

    def active_well(self, F, theta):
        Wt, _, _, _ = self._wells(np.asarray(F, dtype=float), np.asarray(theta, dtype=float))
        return np.argmin(Wt, axis=-1)

    def derivs(self, F, a, b, theta):
        P = self.params
        theta = np.asarray(theta, dtype=float)
        J = tc.det(F)
        C = tc.cof(F)
        Wt, WF, Wt_t, Wt_tt = self._wells(F, theta)
        if P.smooth:
            m = np.min(Wt, axis=-1, keepdims=True)
            ex = np.exp(-(Wt - m) / P.tau_w)
            lam = ex / np.sum(ex, axis=-1, keepdims=True)
            val = m[..., 0] - P.tau_w * np.log(np.sum(ex, axis=-1))
            mF = np.einsum("...i,...ijk->...jk", lam, WF)
            mt = np.sum(lam * Wt_t, axis=-1)
            var_t = np.sum(lam * Wt_t**2, axis=-1) - mt**2
            mtt = np.sum(lam * Wt_tt, axis=-1) - var_t / P.tau_w
            cov = np.einsum("...i,...ijk,...i->...jk", lam, WF, Wt_t) - mF * mt[..., None, None]
            mFt = -cov / P.tau_w
        else:
            i = np.argmin(Wt, axis=-1)[..., None]
            val = np.take_along_axis(Wt, i, -1)[..., 0]
            mF = np.take_along_axis(WF, i[..., None, None], -3)[..., 0, :, :]
            mt = np.take_along_axis(Wt_t, i, -1)[..., 0]
            mtt = np.take_along_axis(Wt_tt, i, -1)[..., 0]
            mFt = np.zeros_like(mF)
        zero = 0 * theta
        return PsiDerivs(
            psi=0.5 * P.K * (J - 1) ** 2 + val,
            psi_F=(P.K * (J - 1))[..., None, None] * C + mF,
            psi_a=zero, psi_b=zero, psi_t=mt, psi_tt=mtt, psi_Ft=mFt,
            psi_at=zero, psi_bt=zero)

    def sample(self, rng, n, d):
        P = self.params
        require(d == P.d, "SMA wells fix the dimension")
        idx = rng.integers(0, len(self.wells), n)
        Fi = np.stack(self.wells)[idx]
        U = np.eye(d) + 0.02 * rng.standard_normal((n, d, d))
        R = tc.rotation(rng.uniform(-np.pi, np.pi, (n, d * (d - 1) // 2)), d)
        F = tc.matmul(R, tc.matmul(Fi, U))
        theta = rng.uniform(0.8 * P.theta_T, 1.2 * P.theta_T, n)
        return F, rng.uniform(-0.5, 0.5, n), rng.uniform(0.5, 1.5, n), theta


def sma_energy(params=None, gauge=ThermalGauge.TEMPERATURE):
    return ThermoModel(SmaFreeEnergy(params), gauge)


class PhaseIndicator:
    """lambda(F) = softmax(-W_i(F)/tau) over the elastic well energies."""

    def __init__(self, energy, tau=None):
        self.energy = energy
        self.tau = tau if tau is not None else 0.01 * energy.energy_scale

    def __call__(self, F):
        W, _ = self.energy.well_energies(np.asarray(F, dtype=float))
        z = -(W - np.min(W, axis=-1, keepdims=True)) / self.tau
        ex = np.exp(z)
        return ex / np.sum(ex, axis=-1, keepdims=True)

    def derivative(self, F, H):
        """Directional derivative lambda'(F)[H]."""
        F = np.asarray(F, dtype=float)
        lam = self(F)
        _, WF = self.energy.well_energies(F)
        dW = np.einsum("...ijk,...jk->...i", WF, H)
        return lam * (-dW + np.sum(lam * dW, axis=-1, keepdims=True)) / self.tau


def huber(x, eps):
    """Huber regularization of |x| (x a vector in the last axis or a scalar)."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1)) if x.ndim else np.abs(x)
    return np.where(r <= eps, 0.5 * r**2 / eps, r - 0.5 * eps)


def huber_norm(A, eps):
    r = tc.norm(A)
    return np.where(r <= eps, 0.5 * r**2 / eps, r - 0.5 * eps)


# --- dissipation ----------------------------------------------------------------

@dataclass(frozen=True)
class DissipationSpec:
    """Coefficients of the dual dissipation potential.

    Matrices (diffusivities, conductivity) are given either as a scalar
    (isotropic) or as a flat tuple of d*d entries.  Viscosity acts as
    D_visc X = 2 eta dev X + eta_b (tr X) I.  Plastic dual potential, per
    unit Mandel stress sigma (deviatoric):

        R*(sigma) = (1/theta) phi sigma_ref^2/(n+1) ((|sigma| - sigma_y)_+/sigma_ref)^(n+1)

    which for n = 1 is Maxwell-type flow with fluidity phi above a yield
    stress sigma_y(theta) = max(sigma_y + slope (theta - theta_ref), 0).
    """
    shear_viscosity: float = 0.0
    bulk_viscosity: float = 0.0
    diff_alpha: object = 0.0
    diff_beta: object = 0.0
    heat_conductivity: object = 0.0
    source_alpha: float = 0.0
    plast_fluidity: float = 0.0
    plast_yield: float = 0.0
    plast_yield_slope: float = 0.0
    plast_exponent: float = 1.0
    plast_stress_scale: float = 1.0
    theta_ref: float = 1.0
    eps_reg: float = 1e-6
    hyperviscosity: float = 0.0
    hyper_exponent: float = 3.0

    def matrix(self, name, d):
        val = getattr(self, name)
        arr = np.atleast_1d(np.asarray(val, dtype=float))
        if arr.size == 1:
            return float(arr[0]) * np.eye(d)
        if arr.size != d * d:
            raise BadParameters(f"{name} needs 1 or {d * d} entries, got {arr.size}")
        return arr.reshape(d, d)

    def validate(self, d):
        problems = []
        for name in ("diff_alpha", "diff_beta", "heat_conductivity"):
            try:
                M = self.matrix(name, d)
            except BadParameters as exc:
                problems.append(str(exc))
                continue
            if np.max(np.abs(M - M.T)) > 1e-12 * (1 + np.max(np.abs(M))):
                problems.append(f"{name} must be symmetric")
            elif np.min(np.linalg.eigvalsh(M)) < 0:
                problems.append(f"{name} must be positive semidefinite")
        for name in ("shear_viscosity", "bulk_viscosity", "source_alpha", "plast_fluidity",
                     "plast_yield", "hyperviscosity"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        if self.plast_exponent < 1:
            problems.append("plast_exponent must be >= 1")
        if self.plast_stress_scale <= 0 or self.eps_reg <= 0 or self.theta_ref <= 0:
            problems.append("plast_stress_scale, eps_reg and theta_ref must be > 0")
        if self.hyperviscosity > 0 and self.hyper_exponent <= max(d, 1):
            problems.append("hyper_exponent must exceed the dimension d")
        return problems

    def viscous(self, X):
        d = X.shape[-1]
        return (2.0 * self.shear_viscosity * tc.dev(X)
                + self.bulk_viscosity * tc.trace(X)[..., None, None] * np.eye(d))

    def yield_stress(self, theta):
        return np.maximum(self.plast_yield + self.plast_yield_slope * (theta - self.theta_ref), 0.0)

    def plastic_dual(self, sigma, theta):
        """(R*_plast(sigma), dR*_plast/dsigma) for a deviatoric stress field sigma."""
        n, sr = self.plast_exponent, self.plast_stress_scale
        r = tc.norm(sigma)
        x = np.maximum(r - self.yield_stress(theta), 0.0) / sr
        val = self.plast_fluidity * sr**2 / (n + 1) * x ** (n + 1) / theta
        safe = np.where(r > 0, r, 1.0)
        slope = np.where(r > 0, self.plast_fluidity * sr * x**n / (theta * safe), 0.0)
        return val, slope[..., None, None] * sigma

    @property
    def is_zero(self):
        return all(np.all(np.asarray(getattr(self, f.name)) == 0) for f in fields(self)
                   if f.name in ("shear_viscosity", "bulk_viscosity", "diff_alpha", "diff_beta",
                                 "heat_conductivity", "source_alpha", "plast_fluidity",
                                 "hyperviscosity"))


def sma_dissipation(spec, F, theta, L, L_p, indicator):
    """Rate-independent SMA dissipation, Huber-regularized:

    r = huber(lambda'(F)[L F - L_p F]) + sigma(theta) huber(L_p).
    """
    F = np.asarray(F, dtype=float)
    H = tc.matmul(L, F) - tc.matmul(L_p, F)
    dlam = indicator.derivative(F, H)
    return huber(dlam, spec.eps_reg) + spec.yield_stress(theta) * huber_norm(L_p, spec.eps_reg)
