"""Phase-space transforms: Wigner samples, Husimi densities, pairing checks.

Both transforms are evaluated on a shared rectangular phase lattice whose
momentum nodes sit on the discrete Fourier lattice of the underlying
wavefunction grid.  That choice lets every transform be computed with
plain FFTs and *no* oscillatory quadrature:

* Wigner at position node x (a grid point) and all lattice momenta:
  correlator C(u) = psi(x + u/2) conj(psi(x - u/2)) gathered by modular
  rolls, one FFT over u, then a strided frequency pick.
* Husimi at node q: Gaussian-windowed copy of psi, one FFT, strided pick;
  the value is |overlap with a coherent packet|^2 / (2 pi hbar)^d, so the
  overlap route is nonnegative by construction.

The smoothing route (heat kernel of width hbar/2 applied to the Wigner
samples) is a separable Fourier multiplier on the phase lattice.  The two
routes agree up to discretisation; their L1 gap is one of the standing
diagnostics.

Momentum extent policy: lattices must reach 6 sqrt(hbar) + 1 beyond the
largest atom momentum requested; construction fails with
ResolutionInsufficient when the wavefunction grid cannot resolve that.
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
    ResolutionInsufficient,
)
from .model import AtomicMeasure
from .quantum import DensityMixture, Grid, coherent_state

__all__ = [
    "PhaseGrid",
    "PhaseGridDensity",
    "build_phase_grid",
    "wigner",
    "husimi_overlap",
    "husimi_smooth",
    "husimi_at",
    "gaussian_comb",
    "toeplitz_wigner_check",
    "trace_pairing",
    "l1_gap",
]

_MAGIC = b"MLPG"
_HEADER = struct.Struct("<4siii ddddd")


@dataclasses.dataclass(frozen=True)
class PhaseGrid:
    """Rectangular phase lattice tied to a wavefunction grid.

    Position nodes are cell centres that coincide with wavefunction grid
    points (needed by the Wigner gather); momentum nodes are an even-strided
    subset of the Fourier lattice, symmetric around zero.
    """

    grid: Grid
    hbar: float
    pos_centers: np.ndarray      # (m_pos,)
    pos_idx: np.ndarray          # (m_pos,) wavefunction-grid indices
    mom_centers: np.ndarray      # (m_mom,) = stride * base lattice
    stride: int                  # even; in units of pi hbar / (2 halfwidth)

    @property
    def m_pos(self) -> int:
        return self.pos_centers.shape[0]

    @property
    def m_mom(self) -> int:
        return self.mom_centers.shape[0]

    @property
    def dx(self) -> float:
        return float(self.pos_centers[1] - self.pos_centers[0])

    @property
    def dxi(self) -> float:
        return float(self.mom_centers[1] - self.mom_centers[0])

    @property
    def cell(self) -> float:
        return (self.dx * self.dxi) ** 2

    def nodes(self) -> np.ndarray:
        """(m_pos^2 * m_mom^2, 4) array of (x1, x2, xi1, xi2) rows."""
        x1, x2, k1, k2 = np.meshgrid(self.pos_centers, self.pos_centers,
                                     self.mom_centers, self.mom_centers,
                                     indexing="ij")
        return np.stack([x1, x2, k1, k2], axis=-1).reshape(-1, 4)


@dataclasses.dataclass
class PhaseGridDensity:
    """Scalar field sampled on a PhaseGrid; integrates by Riemann sums."""

    pgrid: PhaseGrid
    values: np.ndarray  # (m_pos, m_pos, m_mom, m_mom)

    def __post_init__(self):
        p, m = self.pgrid.m_pos, self.pgrid.m_mom
        if self.values.shape != (p, p, m, m):
            raise DimensionMismatch("density values do not match phase grid")

    def mass(self) -> float:
        return float(self.values.sum() * self.pgrid.cell)

    def to_csv(self, path):
        """Plain (x1,x2,xi1,xi2,value) rows; intended for small lattices."""
        nodes = self.pgrid.nodes()
        flat = self.values.reshape(-1)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x1,x2,xi1,xi2,value\n")
            for row, v in zip(nodes, flat):
                fh.write(f"{row[0]:.9g},{row[1]:.9g},{row[2]:.9g},"
                         f"{row[3]:.9g},{v:.12g}\n")

    def dump(self, path):
        pg = self.pgrid
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, 2, pg.m_pos, pg.m_mom, pg.hbar,
                                  float(pg.pos_centers[0]), pg.dx,
                                  float(pg.mom_centers[0]), pg.dxi))
            fh.write(np.ascontiguousarray(self.values, dtype=np.float64).tobytes())


def load_density(path) -> "tuple[np.ndarray, dict]":
    """Read back an MLPG dump (values + axis metadata)."""
    with open(path, "rb") as fh:
        magic, d, m_pos, m_mom, hbar, pos_lo, dx, mom_lo, dxi = _HEADER.unpack(
            fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise InvariantViolation("magic", "not a phase-density dump")
        raw = fh.read(8 * m_pos * m_pos * m_mom * m_mom)
    values = np.frombuffer(raw, dtype=np.float64).reshape(
        (m_pos, m_pos, m_mom, m_mom)).copy()
    meta = {"d": d, "hbar": hbar, "pos_lo": pos_lo, "dx": dx,
            "mom_lo": mom_lo, "dxi": dxi}
    return values, meta


def build_phase_grid(grid: Grid, hbar: float, p_need: float,
                     m_pos: int = 32, target_spacing: float = 0.16,
                     for_smoothing: bool = False) -> PhaseGrid:
    """Construct the shared lattice.

    p_need is the momentum extent that must be covered.  for_smoothing
    additionally caps the spacing at pi sqrt(hbar)/6.1 so the periodic
    heat kernel of husimi_smooth has negligible alias mass; lattices used
    only for transport or the overlap route skip that cap (it would blow
    up the cell count at small hbar for no accuracy gain).
    Spacings are tightened below the target
    wherever hbar demands it, so that Gaussians of variance hbar stay
    well sampled and the smoothing multiplier is alias free.
    """
    n, hw = grid.n, grid.halfwidth
    if p_need <= 0:
        raise InvariantViolation("p_need", "momentum extent must be positive")
    # position nodes: cell centres on the psi lattice
    spacing_cap = target_spacing
    if for_smoothing:
        spacing_cap = min(spacing_cap, math.pi * math.sqrt(hbar) / 6.1)
    m_eff = int(m_pos)
    while m_eff < n // 2 and 2.0 * hw / m_eff > spacing_cap:
        m_eff *= 2
    if n % (2 * m_eff):
        raise InvariantViolation("m_pos", "position cells must divide n/2")
    k = n // (2 * m_eff)
    pos_idx = (2 * np.arange(m_eff) + 1) * k
    pos_centers = -hw + grid.h * pos_idx
    # momentum nodes: even stride on the base lattice pi hbar / (2 hw)
    base = math.pi * hbar / (2.0 * hw)
    stride = max(2, 2 * int(spacing_cap / (2.0 * base)))
    dxi = stride * base
    j_max = int(math.ceil(p_need / dxi - 1e-12))
    if j_max * stride // 2 > n // 2 - 1:
        raise ResolutionInsufficient(
            f"momentum extent {p_need:.3f} needs lattice index "
            f"{j_max * stride // 2}, grid supports {n // 2 - 1}"
        )
    mom_centers = dxi * np.arange(-j_max, j_max + 1)
    return PhaseGrid(grid=grid, hbar=hbar, pos_centers=pos_centers,
                     pos_idx=pos_idx.astype(int), mom_centers=mom_centers,
                     stride=stride)


# ---------------------------------------------------------------------------
# Wigner route


def _reverse_mod(a: np.ndarray) -> np.ndarray:
    """b[m] = a[(-m) mod n] along both axes."""
    return np.roll(np.roll(a[::-1, ::-1], 1, axis=0), 1, axis=1)


def wigner(mix: DensityMixture, pgrid: PhaseGrid) -> PhaseGridDensity:
    """Wigner transform sampled on the phase lattice.

    Needs the full stride (not stride/2) below the correlator Nyquist
    index; construction that passes build_phase_grid can still fail here
    when hbar is small and the extent large.
    """
    grid, hbar = pgrid.grid, pgrid.hbar
    n = grid.n
    j_abs = (pgrid.mom_centers / (math.pi * hbar / (2 * grid.halfwidth)))
    j_int = np.rint(j_abs).astype(int)
    if np.max(np.abs(j_int)) > n // 2 - 1:
        raise ResolutionInsufficient(
            "phase lattice exceeds the correlator Nyquist index; enlarge the "
            "box or reduce the momentum extent"
        )
    sel = j_int % n
    # correlator terms with |y| near the halfwidth pair the state with its
    # periodic image; on a strided momentum pick their Nyquist oscillation
    # rectifies into ghost mass at edge positions, so cut the gather at the
    # half box (true correlator is negligible there for contained states)
    m_idx = np.arange(n)
    win = (np.minimum(m_idx, n - m_idx) <= n // 4).astype(float)
    mp, mm = pgrid.m_pos, pgrid.m_mom
    out = np.zeros((mp, mp, mm, mm), dtype=float)
    pref = (2.0 * grid.h) ** 2 / (2.0 * math.pi * hbar) ** 2
    for w, comp in zip(mix.weights, mix.components):
        psi = comp.psi
        rev = psi[::-1, ::-1]
        for i1, j1 in enumerate(pgrid.pos_idx):
            # plus[m] = psi[(j + m) mod n], minus[m] = psi[(j - m) mod n]
            row_plus = np.roll(psi, -int(j1), axis=0)
            row_minus = np.roll(rev, int(j1) + 1, axis=0)
            plus = np.empty((mp, n, n), dtype=complex)
            minus = np.empty((mp, n, n), dtype=complex)
            for i2, j2 in enumerate(pgrid.pos_idx):
                plus[i2] = np.roll(row_plus, -int(j2), axis=1)
                minus[i2] = np.roll(row_minus, int(j2) + 1, axis=1)
            corr = plus * np.conj(minus)
            corr *= win[None, :, None]
            corr *= win[None, None, :]
            spec = sfft.fft2(corr, axes=(1, 2))
            block = spec[:, sel][:, :, sel].real
            out[i1] += w * pref * block
    return PhaseGridDensity(pgrid, out)


# ---------------------------------------------------------------------------
# Husimi routes


def husimi_overlap(mix: DensityMixture, pgrid: PhaseGrid) -> PhaseGridDensity:
    """Husimi density via coherent-packet overlaps (nonnegative)."""
    grid, hbar = pgrid.grid, pgrid.hbar
    n = grid.n
    if pgrid.stride % 2:
        raise InvariantViolation("stride", "husimi needs an even lattice stride")
    sel = (np.rint(pgrid.mom_centers * n * grid.h
                   / (2 * math.pi * hbar)).astype(int)) % n
    y = grid.axis
    mp, mm = pgrid.m_pos, pgrid.m_mom
    out = np.zeros((mp, mp, mm, mm), dtype=float)
    pref = (grid.cell ** 2) * (math.pi * hbar) ** (-1.0) \
        / (2.0 * math.pi * hbar) ** 2
    for w, comp in zip(mix.weights, mix.components):
        psi = comp.psi
        for i1, c1 in enumerate(pgrid.pos_centers):
            g1 = np.exp(-((y - c1) ** 2) / (2.0 * hbar))
            windowed = np.empty((mp, n, n), dtype=complex)
            for i2, c2 in enumerate(pgrid.pos_centers):
                g2 = np.exp(-((y - c2) ** 2) / (2.0 * hbar))
                windowed[i2] = (g1[:, None] * g2[None, :]) * psi
            spec = sfft.fft2(windowed, axes=(1, 2))
            block = np.abs(spec[:, sel][:, :, sel]) ** 2
            out[i1] += w * pref * block
    return PhaseGridDensity(pgrid, out)


def husimi_at(mix: DensityMixture, points: np.ndarray) -> np.ndarray:
    """Husimi values at arbitrary phase points (m, 4); off-lattice path."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != 4:
        raise DimensionMismatch("points must be (m, 4) rows (x1, x2, xi1, xi2)")
    grid, hbar = mix.grid, mix.hbar
    y = grid.axis
    vals = np.zeros(points.shape[0])
    pref = (grid.cell ** 2) * (math.pi * hbar) ** (-1.0) \
        / (2.0 * math.pi * hbar) ** 2
    for m, (q1, q2, p1, p2) in enumerate(points):
        u1 = np.exp(-((y - q1) ** 2) / (2.0 * hbar) - 1j * p1 * y / hbar)
        u2 = np.exp(-((y - q2) ** 2) / (2.0 * hbar) - 1j * p2 * y / hbar)
        for w, comp in zip(mix.weights, mix.components):
            s = u1 @ comp.psi @ u2
            vals[m] += w * pref * float(np.abs(s) ** 2)
    return vals


def husimi_smooth(wig: PhaseGridDensity) -> PhaseGridDensity:
    """Heat smoothing of Wigner samples: Fourier multiplier exp(-|k|^2 hbar/4)."""
    pg = wig.pgrid
    hbar = pg.hbar
    kx = 2.0 * math.pi * np.fft.fftfreq(pg.m_pos, d=pg.dx)
    kk = 2.0 * math.pi * np.fft.fftfreq(pg.m_mom, d=pg.dxi)
    mult = np.exp(-hbar / 4.0 * (
        kx[:, None, None, None] ** 2 + kx[None, :, None, None] ** 2
        + kk[None, None, :, None] ** 2 + kk[None, None, None, :] ** 2))
    spec = sfft.fftn(wig.values)
    smoothed = sfft.ifftn(spec * mult).real
    return PhaseGridDensity(pg, smoothed)


# ---------------------------------------------------------------------------
# quantization cross-checks


def gaussian_comb(atoms: AtomicMeasure, pgrid: PhaseGrid) -> PhaseGridDensity:
    """Exact Wigner of the packet quantization of an atomic measure.

    Each atom contributes an isotropic phase-space Gaussian of variance
    hbar/2 per coordinate: (pi hbar)^{-d} exp(-|z - z_a|^2 / hbar).
    """
    hbar = pgrid.hbar
    x1 = pgrid.pos_centers[:, None, None, None]
    x2 = pgrid.pos_centers[None, :, None, None]
    k1 = pgrid.mom_centers[None, None, :, None]
    k2 = pgrid.mom_centers[None, None, None, :]
    vals = np.zeros((pgrid.m_pos, pgrid.m_pos, pgrid.m_mom, pgrid.m_mom))
    for w, xa, ka in zip(atoms.weights, atoms.x, atoms.xi):
        r2 = ((x1 - xa[0]) ** 2 + (x2 - xa[1]) ** 2
              + (k1 - ka[0]) ** 2 + (k2 - ka[1]) ** 2)
        vals += w * np.exp(-r2 / hbar)
    vals /= (math.pi * hbar) ** 2
    return PhaseGridDensity(pgrid, vals)


def l1_gap(a: PhaseGridDensity, b: PhaseGridDensity) -> float:
    if a.pgrid is not b.pgrid and (a.pgrid.m_pos != b.pgrid.m_pos
                                   or a.pgrid.m_mom != b.pgrid.m_mom):
        raise DimensionMismatch("densities live on different lattices")
    return float(np.abs(a.values - b.values).sum() * a.pgrid.cell)


def toeplitz_wigner_check(atoms: AtomicMeasure, mix: DensityMixture,
                          pgrid: PhaseGrid) -> float:
    """L1 lattice gap between the computed Wigner of the packet mixture and
    the exact Gaussian comb it must equal."""
    return l1_gap(wigner(mix, pgrid), gaussian_comb(atoms, pgrid))


def trace_pairing(atoms: AtomicMeasure, mix: DensityMixture) -> tuple:
    """Trace pairing of a packet quantization against a mixture, two routes.

    Route one forms coherent packets on the grid and takes Gram inner
    products with the mixture components; route two evaluates the mixture's
    Husimi density at the atom locations.  Both equal
    (2 pi hbar)^{-d} sum_a w_a <z_a| R |z_a>.
    """
    grid, hbar = mix.grid, mix.hbar
    pref = (2.0 * math.pi * hbar) ** (-2.0)
    lhs = 0.0
    for wa, xa, ka in zip(atoms.weights, atoms.x, atoms.xi):
        packet = coherent_state(grid, hbar, xa, ka)
        for wj, comp in zip(mix.weights, mix.components):
            ip = np.vdot(packet.psi, comp.psi) * grid.cell
            lhs += wa * wj * pref * float(np.abs(ip) ** 2)
    pts = np.concatenate([atoms.x, atoms.xi], axis=1)
    rhs = float(np.dot(atoms.weights, husimi_at(mix, pts)))
    return lhs, rhs
