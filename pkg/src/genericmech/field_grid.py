"""Periodic tensor-product grids with Fourier differentiation.

Fields are stored spatial-axes-first: a scalar field on a d-dimensional
grid has shape grid.shape, a vector field grid.shape + (d,), a tensor
field grid.shape + (d, d).  Derivative stacks put the new derivative index
last, so grad(u)[..., i, j] = d_j u_i and grad_tensor(A)[..., i, j, k] =
d_k A_ij, matching the (grad v)_ij = d_j v_i convention of the operators.

The first-derivative symbol i k has its Nyquist entry set to zero.  With
that choice the discrete derivative is an exactly skew-symmetric real
matrix, so integration by parts holds to roundoff on the grid.
"""

from dataclasses import dataclass

import numpy as np

from .constitutive import State
from .errors import GridMismatch

StateField = State
CotangentField = State


@dataclass(frozen=True)
class Grid:
    d: int
    N: tuple
    L: tuple

    def __post_init__(self):
        N = (self.N,) * self.d if np.isscalar(self.N) else tuple(int(n) for n in self.N)
        L = (self.L,) * self.d if np.isscalar(self.L) else tuple(float(x) for x in self.L)
        if self.d not in (1, 2):
            raise ValueError("field grids support d = 1 or d = 2")
        if len(N) != self.d or len(L) != self.d:
            raise ValueError("need one N and one L per axis")
        for n in N:
            if n < 8 or n & (n - 1):
                raise ValueError(f"N must be a power of two >= 8, got {n}")
        if any(x <= 0 for x in L):
            raise ValueError("box lengths must be positive")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "L", L)
        ks = []
        for ax, (n, ell) in enumerate(zip(N, L)):
            if ax == self.d - 1:
                k = 2 * np.pi * np.fft.rfftfreq(n, d=ell / n)
            else:
                k = 2 * np.pi * np.fft.fftfreq(n, d=ell / n)
            ks.append(k)
        mesh = np.meshgrid(*ks, indexing="ij")
        ik = []
        for ax, K in enumerate(mesh):
            K1 = K.copy()
            nyq = np.pi * N[ax] / L[ax]
            K1[np.isclose(np.abs(K1), nyq)] = 0.0
            ik.append(1j * K1)
        object.__setattr__(self, "_ik", np.stack(ik, axis=-1))
        idx = np.meshgrid(*[np.rint(k * ell / (2 * np.pi)) for k, ell in zip(ks, L)], indexing="ij")
        keep = np.ones(mesh[0].shape, dtype=bool)
        for ax, m in enumerate(idx):
            keep &= np.abs(m) <= N[ax] // 3
        object.__setattr__(self, "_keep", keep)
        object.__setattr__(self, "_mode_index", np.stack(idx, axis=-1))

    # geometry
    @property
    def shape(self):
        return self.N

    @property
    def axes(self):
        return tuple(range(self.d))

    @property
    def dx(self):
        return tuple(ell / n for ell, n in zip(self.L, self.N))

    @property
    def cell_volume(self):
        return float(np.prod(self.dx))

    @property
    def volume(self):
        return float(np.prod(self.L))

    @property
    def h(self):
        return min(self.dx)

    def coords(self):
        xs = [np.arange(n) * ell / n for n, ell in zip(self.N, self.L)]
        return np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1)

    def mode_index(self):
        """Integer wavenumbers (per box) of the rfft layout, last axis = component."""
        return self._mode_index

    # transforms
    def fft(self, f):
        return np.fft.rfftn(f, axes=self.axes)

    def ifft(self, fh):
        return np.fft.irfftn(fh, s=self.N, axes=self.axes)

    def _bcast(self, arr, extra):
        """Spectral-shaped array broadcast against `extra` trailing component axes."""
        return arr.reshape(arr.shape[:self.d] + (1,) * extra + arr.shape[self.d:])

    def check(self, f, comps=()):
        if np.shape(f)[:self.d] != self.N:
            raise GridMismatch(f"field of shape {np.shape(f)} is not on grid {self.N}")

    def grad(self, f):
        """Append a derivative axis: out[..., j] = d_j f."""
        f = np.asarray(f, dtype=float)
        self.check(f)
        extra = f.ndim - self.d
        fh = self.fft(f)
        ik = self._bcast(self._ik, extra)
        return self.ifft(fh[..., None] * ik)

    def deriv(self, f, axis):
        f = np.asarray(f, dtype=float)
        self.check(f)
        extra = f.ndim - self.d
        ik = self._bcast(self._ik[..., axis], extra)
        return self.ifft(self.fft(f) * ik)

    def div(self, u):
        """Contract the last axis of u with the derivative: sum_j d_j u_..j."""
        u = np.asarray(u, dtype=float)
        self.check(u)
        extra = u.ndim - self.d - 1
        ik = self._bcast(self._ik, extra)
        return self.ifft(np.sum(self.fft(u) * ik, axis=-1))

    def grad_tensor(self, A):
        return self.grad(A)

    def div_tensor(self, A):
        return self.div(A)

    def laplacian(self, f):
        f = np.asarray(f, dtype=float)
        extra = f.ndim - self.d
        ik = self._bcast(self._ik, extra)
        return self.ifft(self.fft(f) * np.sum(ik * ik, axis=-1))

    def dealias(self, f):
        """2/3-rule filter: drop modes with |m_j| > N_j/3 on any axis."""
        f = np.asarray(f, dtype=float)
        extra = f.ndim - self.d
        keep = self._bcast(self._keep, extra)
        return self.ifft(self.fft(f) * keep)

    def dealias_state(self, q):
        return q.map(self.dealias)

    # quadrature
    def integrate(self, f):
        return float(np.sum(f) * self.cell_volume)

    def inner(self, u, v):
        if isinstance(u, State) or isinstance(v, State):
            if not (isinstance(u, State) and isinstance(v, State)):
                raise GridMismatch("cannot pair a block field with a plain array")
            return sum(self.inner(a, b) for a, b in zip(u.blocks(), v.blocks()))
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        if u.shape != v.shape:
            raise GridMismatch(f"shape mismatch {u.shape} vs {v.shape}")
        self.check(u)
        return float(np.sum(u * v) * self.cell_volume)

    def norm(self, u):
        return np.sqrt(max(self.inner(u, u), 0.0))


def random_smooth_field(grid, kmax, seed, shape=(), amplitude=1.0, zero_mean=False):
    """Real band-limited random field with modes |m_j| <= kmax on every axis.

    The field is scaled to RMS `amplitude` (per component array as a whole).
    """
    if kmax > min(grid.N) // 4:
        raise ValueError("kmax must not exceed N/4 (anti-aliasing margin)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    spec_shape = grid.fft(np.zeros(grid.N)).shape
    m = grid.mode_index()
    inside = np.all(np.abs(m) <= kmax, axis=-1)
    if zero_mean:
        inside &= np.any(m != 0, axis=-1)
    full = spec_shape + tuple(shape)
    coef = rng.standard_normal(full) + 1j * rng.standard_normal(full)
    coef *= grid._bcast(inside, len(shape))
    f = grid.ifft(coef)
    rms = np.sqrt(np.mean(f * f))
    if rms == 0:
        return f
    return amplitude * f / rms


# --- snapshots ---------------------------------------------------------------

HEADER_BYTES = 64
SNAPSHOT_FIELDS = "p,F,a,b,w"


def write_snapshot(path, grid, q, t):
    """Flat little-endian float64 blocks (p, F, alpha, beta, w) after a 64-byte header."""
    dims = "x".join(str(n) for n in grid.N)
    head = f"GMS1 d={grid.d} n={dims} t={t:.10e} f={SNAPSHOT_FIELDS}"
    if len(head) > HEADER_BYTES - 1:
        raise ValueError("snapshot header overflow")
    with open(path, "wb") as fh:
        fh.write(head.ljust(HEADER_BYTES - 1).encode("ascii") + b"\n")
        for block in q.blocks():
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def read_snapshot(path):
    """Return (shape, t, State) from a snapshot file."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER_BYTES).decode("ascii").split()
        data = np.frombuffer(fh.read(), dtype="<f8")
    meta = dict(tok.split("=", 1) for tok in head[1:])
    d = int(meta["d"])
    shape = tuple(int(n) for n in meta["n"].split("x"))
    sizes = [(d,), (d, d), (), (), ()]
    blocks, pos = [], 0
    for comp in sizes:
        n = int(np.prod(shape + comp))
        blocks.append(data[pos:pos + n].reshape(shape + comp).copy())
        pos += n
    if pos != data.size:
        raise ValueError("snapshot payload does not match its header")
    return shape, float(meta["t"]), State(*blocks)


def write_slice_csv(path, grid, q, axis=0, index=0):
    """CSV of all field components along one grid line (the whole field if d = 1)."""
    sl = [index] * grid.d
    sl[axis] = slice(None)
    sl = tuple(sl)
    x = grid.coords()[sl][..., axis]
    d = grid.d
    cols, names = [x], ["x"]
    for i in range(d):
        cols.append(q.p[sl][..., i])
        names.append(f"p{i}")
    for i in range(d):
        for j in range(d):
            cols.append(q.F[sl][..., i, j])
            names.append(f"F{i}{j}")
    for name, arr in (("alpha", q.alpha), ("beta", q.beta), ("w", q.w)):
        cols.append(arr[sl])
        names.append(name)
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names), comments="")
