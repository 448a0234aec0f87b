"""Grid wavefunctions, Gaussian packets, and magnetic Schrodinger propagation.

States live on a periodic square grid.  The Hamiltonian is

    H = |-i hbar grad + A(y)|^2 / 2 + |y|^2 / 2 + V(y),

i.e. magnetic kinetic energy plus the confining well plus the bounded
extra potential.  Density operators are always represented as explicit
mixtures of pure grid states (weights + wavefunctions); no dense matrix
is ever formed.

Propagation is second-order Strang splitting throughout, specialised per
field kind:

* zero field: classic split-step Fourier (multiplier / kinetic / multiplier).
* rotating field  A = y_perp / eps: the Hamiltonian regroups into
  T + Lz/eps + M with [T, Lz] = 0, so one step is
  exp(-i M dt/2h) FFT-kinetic rotate(dt/eps) exp(-i M dt/2h),
  where the argument rotation is done with three FFT shear passes and is
  exactly unitary for any angle.
* generic field: the cross term  (A . p + p . A)/2  is advanced with a
  Cayley (Crank-Nicolson) substep solved by fixed-point iteration; all
  multiplications and the kinetic factor stay spectral.

Every public propagator verifies norm preservation to 1e-10 and monitors
probability mass in the outer 5% frame of the box (MassLeak).
"""

from __future__ import annotations

import dataclasses
import math
import struct

import numpy as np
from scipy import fft as sfft

from .errors import (
    DimensionMismatch,
    InvariantViolation,
    MassLeak,
    NotConverged,
    OutOfBox,
)
from .model import (
    AtomicMeasure,
    FieldSpec,
    PotentialSpec,
    field_eval,
    potential_eval,
)

__all__ = [
    "Grid",
    "GridState",
    "DensityMixture",
    "coherent_state",
    "toeplitz_mixture",
    "propagate_state",
    "propagate_mixture",
    "make_stepper",
    "expectation_multiplication",
    "quantum_second_moments",
    "quantum_kinetic_magnetic",
    "quantum_energy",
    "fidelity",
    "dump_state",
    "load_state",
]

_MAGIC = b"MLQG"


@dataclasses.dataclass(frozen=True)
class Grid:
    """Periodic box [-halfwidth, halfwidth)^d sampled with n points per axis."""

    n: int
    halfwidth: float
    d: int = 2

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise InvariantViolation("grid.n", "n must be a power of two >= 16")
        if self.d != 2:
            raise DimensionMismatch("grid states are implemented for d = 2")

    @property
    def h(self) -> float:
        return 2.0 * self.halfwidth / self.n

    @property
    def axis(self) -> np.ndarray:
        return -self.halfwidth + self.h * np.arange(self.n)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.h)

    def meshgrid(self):
        a = self.axis
        return np.meshgrid(*([a] * self.d), indexing="ij")

    @property
    def cell(self) -> float:
        return self.h**self.d


@dataclasses.dataclass
class GridState:
    """One wavefunction sampled on a grid."""

    grid: Grid
    psi: np.ndarray
    hbar: float

    def __post_init__(self):
        if self.psi.shape != (self.grid.n,) * self.grid.d:
            raise DimensionMismatch("psi shape does not match grid")

    def norm_sq(self) -> float:
        return float(np.vdot(self.psi, self.psi).real * self.grid.cell)

    def copy(self) -> "GridState":
        return GridState(self.grid, self.psi.copy(), self.hbar)


@dataclasses.dataclass
class DensityMixture:
    """Convex mixture of pure states; stands in for a density operator."""

    weights: np.ndarray
    components: list

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvariantViolation("weights", "mixture weights must be positive, sum 1")
        self.weights = w / w.sum()
        grids = {(c.grid.n, c.grid.halfwidth) for c in self.components}
        hbars = {c.hbar for c in self.components}
        if len(grids) != 1 or len(hbars) != 1:
            raise DimensionMismatch("mixture components must share grid and hbar")

    @property
    def grid(self) -> Grid:
        return self.components[0].grid

    @property
    def hbar(self) -> float:
        return self.components[0].hbar

    def purity(self) -> float:
        """tr R^2 via the Gram matrix of the components."""
        cell = self.grid.cell
        n = len(self.components)
        gram = np.empty((n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                gram[i, j] = np.vdot(self.components[i].psi,
                                     self.components[j].psi) * cell
        w = self.weights
        return float(np.real(np.einsum("i,j,ij,ji->", w, w, gram, gram)))


def coherent_state(grid: Grid, hbar: float, q, p) -> GridState:
    """Normalized Gaussian packet centered at (q, p).

    The packet must fit: |q|_inf + 4 sqrt(hbar) < halfwidth, else OutOfBox.
    Position variance is hbar/2 per coordinate.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != (grid.d,) or p.shape != (grid.d,):
        raise DimensionMismatch(f"q, p must have shape ({grid.d},)")
    if np.max(np.abs(q)) + 4.0 * math.sqrt(hbar) >= grid.halfwidth:
        raise OutOfBox(
            f"packet at q={q.tolist()} with hbar={hbar} does not fit "
            f"inside halfwidth {grid.halfwidth}"
        )
    mesh = grid.meshgrid()
    r2 = sum((y - qk) ** 2 for y, qk in zip(mesh, q))
    phase = sum(pk * y for y, pk in zip(mesh, p))
    psi = np.exp(-r2 / (2.0 * hbar) + 1j * phase / hbar)
    psi *= (math.pi * hbar) ** (-grid.d / 4.0)
    st = GridState(grid, psi.astype(complex), hbar)
    st.psi /= math.sqrt(st.norm_sq())  # scrub the periodic-tail residue
    return st


def toeplitz_mixture(grid: Grid, hbar: float, atoms: AtomicMeasure) -> DensityMixture:
    """Mixture of coherent packets, one per atom, weights copied over.

    This is the positive quantization of the atomic measure, normalised to
    unit trace.
    """
    comps = [coherent_state(grid, hbar, x, xi) for x, xi in zip(atoms.x, atoms.xi)]
    return DensityMixture(atoms.weights.copy(), comps)


# ---------------------------------------------------------------------------
# steppers


class _LeakMonitor:
    """Mass in the outer 5% frame of the box must stay below 1e-6."""

    def __init__(self, grid: Grid):
        a = np.abs(grid.axis) > 0.95 * grid.halfwidth
        mx = a[:, None] | a[None, :]
        self.mask = mx
        self.cell = grid.cell

    def check(self, psi: np.ndarray):
        leaked = float(np.sum(np.abs(psi[self.mask]) ** 2) * self.cell)
        if leaked > 1e-6:
            raise MassLeak(f"outer-frame mass {leaked:.3e} exceeds 1e-6")


class _Rotation:
    """Exact argument rotation by three FFT shear passes (unitary)."""

    def __init__(self, grid: Grid, theta: float):
        if abs(theta) >= math.pi / 2:
            raise InvariantViolation("dt", "rotation angle per step must be < pi/2")
        a = math.tan(theta / 2.0)
        b = -math.sin(theta)
        k = grid.wavenumbers
        y = grid.axis
        # axis-0 shear: y1 <- y1 + a y2  (phase over (k1, y2))
        self.p0 = np.exp(1j * np.outer(k, a * y))
        # axis-1 shear: y2 <- y2 + b y1  (phase over (y1, k2))
        self.p1 = np.exp(1j * np.outer(b * y, k))

    def _shear0(self, psi):
        return sfft.ifft(sfft.fft(psi, axis=0) * self.p0, axis=0)

    def _shear1(self, psi):
        return sfft.ifft(sfft.fft(psi, axis=1) * self.p1, axis=1)

    def __call__(self, psi):
        return self._shear0(self._shear1(self._shear0(psi)))


class _Stepper:
    """One Strang step of size dt; specialised by field kind."""

    def __init__(self, grid: Grid, field: FieldSpec, potential: PotentialSpec,
                 hbar: float, dt: float, fp_tol: float = 1e-14,
                 fp_cap: int = 200, flip_field: bool = False):
        self.grid, self.field, self.potential = grid, field, potential
        self.hbar, self.dt = hbar, dt
        sign = -1.0 if flip_field else 1.0  # self-test fault hook: A -> -A
        mesh = grid.meshgrid()
        well = 0.5 * sum(y * y for y in mesh)
        v = potential_eval(potential, np.stack(mesh, axis=-1))
        k = grid.wavenumbers
        k2 = k[:, None] ** 2 + k[None, :] ** 2
        self.kin_full = np.exp(-1j * dt * hbar * k2 / 2.0)
        if field.kind == "eps_rotation":
            mult = (1.0 + 1.0 / field.eps**2) * well + v
            self.mult_half = np.exp(-1j * dt * mult / (2.0 * hbar))
            self.rotate = _Rotation(grid, sign * dt / field.eps)
            self.kind = "rotation"
        elif field.kind == "zero":
            mult = well + v
            self.mult_half = np.exp(-1j * dt * mult / (2.0 * hbar))
            self.kind = "zero"
        else:
            a_vals = sign * field_eval(field, np.stack(mesh, axis=-1))
            self.a_vals = np.moveaxis(a_vals, -1, 0)  # (d, n, n)
            mult = well + v + 0.5 * np.sum(self.a_vals**2, axis=0)
            self.mult_half = np.exp(-1j * dt * mult / (2.0 * hbar))
            self.kin_half = np.exp(-1j * dt * hbar * k2 / 4.0)
            self.hk = [hbar * k[:, None] * np.ones_like(k)[None, :],
                       hbar * k[None, :] * np.ones_like(k)[:, None]]
            self.fp_tol, self.fp_cap = fp_tol, fp_cap
            self.kind = "generic"

    # -- generic-field helpers ------------------------------------------

    def _apply_cross(self, psi):
        """B psi with B = (A . p + p . A)/2; built-ins are divergence free."""
        ft = sfft.fft2(psi)
        out = np.zeros_like(psi)
        acc = np.zeros_like(ft)
        for ax in range(2):
            grad = sfft.ifft2(self.hk[ax] * ft)
            out += self.a_vals[ax] * grad
            acc += self.hk[ax] * sfft.fft2(self.a_vals[ax] * psi)
        out = 0.5 * (out + sfft.ifft2(acc))
        return out

    def _cayley_cross(self, psi):
        """(1 + i s B)^-1 (1 - i s B) psi, s = dt/(2 hbar), by fixed point."""
        s = self.dt / (2.0 * self.hbar)
        rhs = psi - 1j * s * self._apply_cross(psi)
        cur = psi
        scale = math.sqrt(float(np.vdot(psi, psi).real)) or 1.0
        for _ in range(self.fp_cap):
            nxt = rhs - 1j * s * self._apply_cross(cur)
            delta = float(np.max(np.abs(nxt - cur)))
            cur = nxt
            if delta <= self.fp_tol * scale:
                return cur
        raise NotConverged("Cayley fixed point for the magnetic cross term")

    # -- one full Strang step -------------------------------------------

    def __call__(self, psi):
        psi = self.mult_half * psi
        if self.kind == "zero":
            psi = sfft.ifft2(self.kin_full * sfft.fft2(psi))
        elif self.kind == "rotation":
            psi = sfft.ifft2(self.kin_full * sfft.fft2(psi))
            psi = self.rotate(psi)
        else:
            psi = sfft.ifft2(self.kin_half * sfft.fft2(psi))
            psi = self._cayley_cross(psi)
            psi = sfft.ifft2(self.kin_half * sfft.fft2(psi))
        return self.mult_half * psi


def make_stepper(grid, field, potential, hbar, dt,
                 flip_field: bool = False) -> _Stepper:
    """Public factory used by the sweep drivers for incremental stepping."""
    return _Stepper(grid, field, potential, hbar, dt, flip_field=flip_field)


def _choose_steps(field: FieldSpec, t: float, dt: float):
    if t < 0:
        raise InvariantViolation("t", "quantum propagation runs forward only")
    dt_eff = dt
    if field.kind == "eps_rotation":
        dt_eff = min(dt, 0.2 * field.eps)  # keep the shear angle small
    n = max(1, int(math.ceil(t / dt_eff - 1e-12)))
    return n, t / n


def propagate_state(state: GridState, field: FieldSpec, potential: PotentialSpec,
                    t: float, dt: float) -> GridState:
    """Evolve one pure state to time t; validates unitarity and mass leak."""
    if t == 0.0:
        return state.copy()
    n_steps, h = _choose_steps(field, t, dt)
    stepper = _Stepper(state.grid, field, potential, state.hbar, h)
    monitor = _LeakMonitor(state.grid)
    psi = state.psi.copy()
    norm0 = math.sqrt(float(np.vdot(psi, psi).real) * state.grid.cell)
    for _ in range(n_steps):
        psi = stepper(psi)
    out = GridState(state.grid, psi, state.hbar)
    drift = abs(math.sqrt(out.norm_sq()) - norm0)
    if drift > 1e-10:
        raise InvariantViolation("norm", f"norm drift {drift:.3e} exceeds 1e-10")
    monitor.check(psi)
    return out


def propagate_mixture(mix: DensityMixture, field, potential, t, dt,
                      pool=None) -> DensityMixture:
    """Evolve every component; mixture weights are conserved."""
    job = lambda c: propagate_state(c, field, potential, t, dt)
    comps = pool.map_ordered(job, mix.components) if pool else [job(c) for c in mix.components]
    return DensityMixture(mix.weights.copy(), list(comps))


# ---------------------------------------------------------------------------
# expectations


def _as_values(grid: Grid, g):
    if callable(g):
        return np.asarray(g(np.stack(grid.meshgrid(), axis=-1)), dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape != (grid.n,) * grid.d:
        raise DimensionMismatch("multiplication operator values do not match grid")
    return g


def expectation_multiplication(mix: DensityMixture, g) -> float:
    """tr(R g(y)) for a bounded multiplication operator g."""
    vals = _as_values(mix.grid, g)
    cell = mix.grid.cell
    total = 0.0
    for w, comp in zip(mix.weights, mix.components):
        total += w * float(np.sum(vals * np.abs(comp.psi) ** 2) * cell)
    return total


def _second_moments_state(state: GridState):
    grid, hbar = state.grid, state.hbar
    mesh = grid.meshgrid()
    prob = np.abs(state.psi) ** 2 * grid.cell
    y_mean = np.array([float(np.sum(y * prob)) for y in mesh])
    y2 = float(np.sum(sum(y * y for y in mesh) * prob))
    ft = sfft.fft2(state.psi)
    pw = np.abs(ft) ** 2
    pw /= pw.sum()
    k = grid.wavenumbers
    p_mean = np.array([
        float(np.sum(hbar * k[:, None] * pw)),
        float(np.sum(hbar * k[None, :] * pw)),
    ])
    p2 = float(np.sum((hbar**2) * (k[:, None] ** 2 + k[None, :] ** 2) * pw))
    return y_mean, y2, p_mean, p2


def quantum_second_moments(mix: DensityMixture) -> dict:
    """Means and total second moments of position and momentum."""
    y_mean = np.zeros(mix.grid.d)
    p_mean = np.zeros(mix.grid.d)
    y2 = p2 = 0.0
    for w, comp in zip(mix.weights, mix.components):
        ym, y2c, pm, p2c = _second_moments_state(comp)
        y_mean += w * ym
        p_mean += w * pm
        y2 += w * y2c
        p2 += w * p2c
    return {"y_mean": y_mean, "p_mean": p_mean, "y_sq": y2, "p_sq": p2,
            "phase_sq": y2 + p2}


def quantum_kinetic_magnetic(mix: DensityMixture, field: FieldSpec) -> float:
    """tr(R |-i hbar grad + A|^2 / 2), assembled per component.

    Computed as a sum of squared norms of (-i hbar d_k + A_k) psi, so the
    result is nonnegative by construction.
    """
    grid, hbar = mix.grid, mix.hbar
    mesh = grid.meshgrid()
    a_vals = np.moveaxis(field_eval(field, np.stack(mesh, axis=-1)), -1, 0)
    k = grid.wavenumbers
    hk = [hbar * k[:, None] * np.ones((1, grid.n)),
          hbar * k[None, :] * np.ones((grid.n, 1))]
    total = 0.0
    for w, comp in zip(mix.weights, mix.components):
        ft = sfft.fft2(comp.psi)
        for ax in range(2):
            phi = sfft.ifft2(hk[ax] * ft) + a_vals[ax] * comp.psi
            total += 0.5 * w * float(np.vdot(phi, phi).real * grid.cell)
    return total


def quantum_energy(mix: DensityMixture, field: FieldSpec,
                   potential: PotentialSpec) -> float:
    """tr(R H): magnetic kinetic + well + bounded potential."""
    grid = mix.grid
    mesh = grid.meshgrid()
    well = 0.5 * sum(y * y for y in mesh)
    v = potential_eval(potential, np.stack(mesh, axis=-1))
    return quantum_kinetic_magnetic(mix, field) + expectation_multiplication(
        mix, well + v)


def fidelity(a: GridState, b: GridState) -> float:
    """|<a, b>|^2 on the grid (insensitive to global phase)."""
    ip = np.vdot(a.psi, b.psi) * a.grid.cell
    return float(np.abs(ip) ** 2)


# ---------------------------------------------------------------------------
# binary dumps

_HEADER = struct.Struct("<4sii dd 4x")


def dump_state(state: GridState, path):
    """Write a GridState to the MLQG binary layout."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, state.grid.d, state.grid.n,
                              state.grid.halfwidth, state.hbar))
        fh.write(np.ascontiguousarray(state.psi, dtype=np.complex128).tobytes())


def load_state(path) -> GridState:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, d, n, hw, hbar = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise InvariantViolation("magic", "not a grid-state dump")
        raw = fh.read(16 * n**d)
    psi = np.frombuffer(raw, dtype=np.complex128).reshape((n,) * d).copy()
    return GridState(Grid(n=n, halfwidth=hw, d=d), psi, hbar)
