import numpy as np
import pytest
from hypothesis import given, strategies as st

from genericmech import tensor_core as tc
from genericmech.constitutive import heat_capacity, state_from_theta
from genericmech.errors import BadParameters
from genericmech.materials import (DissipationSpec, MantleFreeEnergy, MantleParams, PhaseIndicator,
                                   SmaFreeEnergy, SmaParams, default_sma_wells, huber,
                                   mantle_energy, mantle_pressure, quadratic_test_model,
                                   sma_dissipation, sma_energy)

P0 = MantleParams()


def test_mantle_plateau_pressures_at_reference_temperature():
    en = MantleFreeEnergy()
    for (a, b), target in zip(en.plateaus(), (14e9, 24e9)):
        J = np.linspace(a, b, 50)
        assert np.max(np.abs(mantle_pressure(P0, J, P0.theta_ref) - target)) <= 1e-6 * target


def test_mantle_density_jumps():
    en = MantleFreeEnergy()
    (a1, b1), (a2, b2) = en.plateaus()
    # rho = rho_ref / J, so the density ratio across a plateau is b/a
    assert b1 / a1 - 1 == pytest.approx(0.03, abs=1e-12)
    assert b2 / a2 - 1 == pytest.approx(0.05, abs=1e-12)


@pytest.mark.parametrize("k,slope", [(0, 1.6e6), (1, -2.5e6)])
def test_mantle_clapeyron(k, slope):
    en = MantleFreeEnergy()
    a, b = en.plateaus()[k]
    Jm = 0.5 * (a + b)
    h = 10.0
    dp = (mantle_pressure(P0, Jm, 1800 + h) - mantle_pressure(P0, Jm, 1800 - h)) / (2 * h)
    assert dp == pytest.approx(slope, rel=1e-9)


@pytest.mark.parametrize("theta", [1200.0, 1800.0, 2500.0])
def test_mantle_bulk_convex_and_pressure_monotone(theta):
    en = MantleFreeEnergy()
    J = np.linspace(0.72, 1.02, 1001)
    kappa = en.bulk(J, theta)[0]
    second = kappa[2:] - 2 * kappa[1:-1] + kappa[:-2]
    assert np.min(second) >= -1e-10 * np.max(np.abs(kappa))
    p = en.pressure(J, theta)
    assert np.all(np.diff(p) <= 1e-6)


def test_mantle_pressure_is_minus_kappa_slope():
    en = MantleFreeEnergy()
    J = np.linspace(0.75, 1.0, 200)
    h = 1e-6
    fd = -(en.bulk(J + h, 1700.0)[0] - en.bulk(J - h, 1700.0)[0]) / (2 * h)
    assert np.max(np.abs(fd - en.pressure(J, 1700.0))) <= 1e-5 * 24e9


@pytest.mark.parametrize("diff", ["alpha", "beta"])
def test_mantle_ansatz_term_vanishes(diff):
    m = mantle_energy(MantleParams(diffusant=diff))
    F, a, b, th = m.energy.sample(np.random.default_rng(0), 200, 2)
    r = m.energy.derivs(F, a, b, th)
    pz, pzt = (r.psi_a, r.psi_at) if diff == "alpha" else (r.psi_b, r.psi_bt)
    assert np.max(np.abs(pz - th * pzt)) <= 1e-12 * (1 + np.max(np.abs(pz)))


def test_mantle_heat_capacity_independent_of_z():
    m = mantle_energy()
    F, a, b, th = m.energy.sample(np.random.default_rng(1), 50, 2)
    c1 = heat_capacity(m, state_from_theta(m, np.zeros((50, 2)), F, a, b, th))
    c2 = heat_capacity(m, state_from_theta(m, np.zeros((50, 2)), F, 1 - a, b, th))
    assert np.max(np.abs(c1 - c2)) <= 1e-12 * np.max(c1)


def test_mantle_isochoric_term_zero_on_spherical_state():
    en = MantleFreeEnergy()
    F = (P0.J_T ** 0.5 * np.eye(2))[None]
    z = np.array([1e-3])
    # with z and the Biot term removed, psi_ref = kappa + shear + thermal + barrier; the
    # shear part G (J^{-2/d} |F|^2 - d) must vanish for F = J^{1/d} I
    J = tc.det(F)
    shear = P0.G * (J ** (-1.0) * tc.ddot(F, F) - 2)
    assert np.max(np.abs(shear)) <= 1e-12 * P0.G
    assert np.isfinite(en.ref_derivs(F, z, z, np.array([1800.0])).psi).all()


def test_mantle_rejects_z_outside_unit_interval():
    en = MantleFreeEnergy()
    with pytest.raises(BadParameters):
        en.ref_derivs(np.eye(2)[None], np.array([1.2]), np.array([0.5]), np.array([1800.0]))
    with pytest.raises(BadParameters):
        MantleFreeEnergy(MantleParams(G=-1.0))


def test_sma_well_and_thermal_zeros():
    p = SmaParams(d=2)
    en = SmaFreeEnergy(p)
    W, _ = en.well_energies(np.stack(en.wells))
    assert np.max(np.abs(np.diagonal(W))) <= 1e-12 * max(p.G)
    th = np.full(len(en.wells), p.theta_T)
    Wt, _, _, _ = en._wells(np.stack(en.wells), th)
    assert np.allclose(Wt, W, rtol=0, atol=1e-6)


def test_sma_austenite_dominant_above_transition():
    p = SmaParams(d=2)
    en = SmaFreeEnergy(p)
    th = np.array(1.2 * p.theta_T)
    thermal = -np.asarray(p.c) * th * np.log(th / p.theta_T)
    assert np.argmin(thermal) == 0
    assert en.active_well(np.eye(2), th) == 0


@given(st.floats(-np.pi, np.pi), st.floats(240.0, 360.0), st.integers(0, 2))
def test_sma_well_selection_frame_indifferent(ang, theta, i):
    en = SmaFreeEnergy(SmaParams(d=2))
    F = en.wells[i] @ (np.eye(2) + 0.01 * np.array([[0.3, -0.2], [0.1, 0.4]]))
    R = tc.rotation(np.array([ang]), 2)
    th = np.array(theta)
    assert en.active_well(F, th) == en.active_well(R @ F, th)
    a = np.array(0.0)
    p1 = en.derivs(F, a, a, th).psi
    p2 = en.derivs(R @ F, a, a, th).psi
    assert abs(p1 - p2) <= 1e-10 * max(abs(p1), 1.0)


def test_sma_wells_validated():
    bad = (np.eye(2), 1.1 * np.eye(2), np.eye(2))
    with pytest.raises(BadParameters):
        SmaFreeEnergy(SmaParams(wells=bad))
    with pytest.raises(BadParameters):
        SmaFreeEnergy(SmaParams(c=(1.0, 2.0, 2.0)))
    for Fi in default_sma_wells(2):
        assert abs(np.linalg.det(Fi) - 1) <= 1e-12


def test_phase_indicator_on_simplex():
    en = SmaFreeEnergy(SmaParams(d=2))
    lam = PhaseIndicator(en)
    rng = np.random.default_rng(3)
    F = np.eye(2) + 0.1 * rng.standard_normal((100, 2, 2))
    L = lam(F)
    assert np.min(L) >= 0 and np.max(np.abs(L.sum(-1) - 1)) <= 1e-12
    H = rng.standard_normal((100, 2, 2))
    h = 1e-6
    fd = (lam(F + h * H) - lam(F - h * H)) / (2 * h)
    assert np.max(np.abs(fd - lam.derivative(F, H))) <= 1e-5 * (1 + np.max(np.abs(fd)))


def _sma_setup():
    en = SmaFreeEnergy(SmaParams(d=2))
    spec = DissipationSpec(plast_yield=2e6, eps_reg=1e-6)
    return en, spec, PhaseIndicator(en)


def test_sma_dissipation_zero_and_kernel():
    en, spec, lam = _sma_setup()
    F, th = np.eye(2), np.array(300.0)
    Z = np.zeros((2, 2))
    assert sma_dissipation(spec, F, th, Z, Z, lam) == 0.0
    # L = L_p gives L F - L_p F = 0
    X = np.array([[0.0, 1.0], [0.0, 0.0]])
    r_same = sma_dissipation(spec, F, th, X, X, lam)
    assert r_same == pytest.approx(spec.yield_stress(th) * huber(np.atleast_1d(np.linalg.norm(X)),
                                                                 spec.eps_reg), rel=1e-12)


def test_sma_dissipation_homogeneity_as_eps_vanishes():
    en, _, lam = _sma_setup()
    F, th = en.wells[1], np.array(300.0)
    L = np.array([[0.1, 0.3], [-0.2, 0.05]])
    Lp = np.array([[0.0, 0.2], [0.0, 0.0]])
    ratios = []
    for eps in (1e-2, 1e-4, 1e-8):
        s = DissipationSpec(plast_yield=1.0, eps_reg=eps)
        ratios.append(sma_dissipation(s, F, th, 2 * L, 2 * Lp, lam) / sma_dissipation(s, F, th, L, Lp, lam))
    assert abs(ratios[-1] - 2) < abs(ratios[0] - 2) or abs(ratios[0] - 2) < 1e-6
    assert ratios[-1] == pytest.approx(2.0, abs=1e-6)


@given(st.integers(0, 10_000))
def test_sma_dissipation_midpoint_convex(seed):
    en, spec, lam = _sma_setup()
    rng = np.random.default_rng(seed)
    F, th = en.wells[0], np.array(300.0)
    L1, P1, L2, P2 = rng.standard_normal((4, 2, 2)) * 1e-2
    r = lambda L, P: float(sma_dissipation(spec, F, th, L, P, lam))
    mid = r((L1 + L2) / 2, (P1 + P2) / 2)
    assert mid <= 0.5 * (r(L1, P1) + r(L2, P2)) + 1e-12 * (1 + abs(mid))


def test_dissipation_spec_validation():
    assert DissipationSpec(heat_conductivity=(1.0, 0.2, 0.2, 1.0)).validate(2) == []
    assert DissipationSpec(heat_conductivity=(1.0, 0.3, 0.0, 1.0)).validate(2)
    assert DissipationSpec(diff_alpha=(1.0, 2.0, 2.0, 1.0)).validate(2)   # indefinite
    assert DissipationSpec(shear_viscosity=-1.0).validate(1)
    assert DissipationSpec(hyperviscosity=1.0, hyper_exponent=1.5).validate(2)
    with pytest.raises(BadParameters):
        DissipationSpec(diff_beta=(1.0, 0.0)).matrix("diff_beta", 2)


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_viscous_operator_psd(eta, eta_b):
    spec = DissipationSpec(shear_viscosity=eta, bulk_viscosity=eta_b)
    rng = np.random.default_rng(0)
    X = tc.sym(rng.standard_normal((20, 2, 2)))
    assert np.min(tc.ddot(X, spec.viscous(X))) >= -1e-12


def test_quadratic_model_constants():
    m = quadratic_test_model()
    F, a, b, th = m.energy.sample(np.random.default_rng(5), 30, 2)
    q = state_from_theta(m, np.zeros((30, 2)), F, a, b, th)
    c = heat_capacity(m, q)
    # per actual volume: c_ref / det F
    assert np.allclose(c * tc.det(F), m.energy.params.c, rtol=1e-12)
    with pytest.raises(BadParameters):
        quadratic_test_model(c=-1.0)
