import numpy as np
import pytest
from hypothesis import given, strategies as st

from genericmech.constitutive import State
from genericmech.errors import GridMismatch
from genericmech.field_grid import (Grid, random_smooth_field, read_snapshot, write_slice_csv,
                                    write_snapshot)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(1, 48, 1.0)
    with pytest.raises(ValueError):
        Grid(3, 16, 1.0)
    g = Grid(2, (16, 32), (1.0, 2.0))
    assert g.shape == (16, 32) and g.volume == 2.0 and g.h == 1 / 16


@pytest.mark.parametrize("d,N", [(1, 64), (2, 32)])
def test_spectral_derivative_exact_on_trig(d, N):
    g = Grid(d, N, 2.0)
    x = g.coords()
    k = 2 * np.pi / 2.0
    f = np.sin(3 * k * x[..., 0]) * (np.cos(2 * k * x[..., -1]) if d == 2 else 1.0)
    grad = g.grad(f)
    ex0 = 3 * k * np.cos(3 * k * x[..., 0]) * (np.cos(2 * k * x[..., -1]) if d == 2 else 1.0)
    assert np.max(np.abs(grad[..., 0] - ex0)) <= 1e-11
    lap = g.laplacian(f)
    assert np.max(np.abs(lap + ((3 * k) ** 2 + ((2 * k) ** 2 if d == 2 else 0)) * f)) <= 1e-9


@pytest.mark.parametrize("d,N", [(1, 32), (2, 16)])
@given(seed=st.integers(0, 2**31))
def test_integration_by_parts_discrete(d, N, seed):
    """<u, div w> = -<grad u, w> exactly, also for non-band-limited data."""
    g = Grid(d, N, 1.0)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(g.N)
    w = rng.standard_normal(g.N + (d,))
    lhs = g.inner(u, g.div(w))
    rhs = -g.inner(g.grad(u), w)
    assert abs(lhs - rhs) <= 1e-12 * g.norm(u) * g.norm(w) * N


def test_div_of_tensor_contracts_last_axis():
    g = Grid(2, 16, 1.0)
    rng = np.random.default_rng(0)
    A = random_smooth_field(g, 2, rng, shape=(2, 2))
    dv = g.div_tensor(A)
    ref = g.deriv(A[..., 0], 0) + g.deriv(A[..., 1], 1)
    assert np.allclose(dv, ref, atol=1e-12)
    assert g.grad_tensor(A).shape == (16, 16, 2, 2, 2)


def test_random_field_band_limited_and_scaled():
    g = Grid(2, 32, 1.0)
    f = random_smooth_field(g, 3, 7, amplitude=0.5)
    assert np.sqrt(np.mean(f * f)) == pytest.approx(0.5)
    fh = g.fft(f)
    m = g.mode_index()
    outside = np.any(np.abs(m) > 3, axis=-1)
    assert np.max(np.abs(fh[outside])) <= 1e-10 * np.max(np.abs(fh))
    with pytest.raises(ValueError):
        random_smooth_field(g, 9, 0)
    z = random_smooth_field(g, 2, 1, zero_mean=True)
    assert abs(np.mean(z)) <= 1e-14


def test_dealias_keeps_low_and_kills_high_modes():
    g = Grid(1, 64, 1.0)
    x = g.coords()[..., 0]
    low, high = np.sin(2 * np.pi * 5 * x), np.sin(2 * np.pi * 30 * x)
    assert np.allclose(g.dealias(low), low, atol=1e-13)
    assert np.max(np.abs(g.dealias(high))) <= 1e-13


def test_grid_mismatch():
    g = Grid(1, 32, 1.0)
    with pytest.raises(GridMismatch):
        g.grad(np.zeros(16))
    with pytest.raises(GridMismatch):
        g.inner(np.zeros(32), np.zeros((32, 1)))
    with pytest.raises(GridMismatch):
        g.inner(State.zeros(1, (32,)), np.zeros(32))


def test_integration_quadrature():
    g = Grid(2, 16, (1.0, 3.0))
    assert g.integrate(np.ones(g.N)) == pytest.approx(3.0)


@pytest.mark.parametrize("d", [1, 2])
def test_snapshot_round_trip(tmp_path, d):
    g = Grid(d, 16, 1.0)
    rng = np.random.default_rng(d)
    q = State(rng.standard_normal(g.N + (d,)), rng.standard_normal(g.N + (d, d)),
              rng.standard_normal(g.N), rng.standard_normal(g.N), rng.standard_normal(g.N))
    path = tmp_path / "s.bin"
    write_snapshot(path, g, q, 1.25)
    raw = path.read_bytes()
    assert raw[:4] == b"GMS1" and raw[63:64] == b"\n"
    shape, t, back = read_snapshot(path)
    assert shape == g.N and t == 1.25
    for a, b in zip(q.blocks(), back.blocks()):
        assert np.array_equal(a, b)
    write_slice_csv(tmp_path / "s.csv", g, q)
    head = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert head.startswith("x,p0") and head.endswith("alpha,beta,w")
