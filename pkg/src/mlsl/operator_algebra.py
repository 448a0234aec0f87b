"""Finite-dimensional and grid-level operator identities.

Two checks guard the algebra the convergence argument leans on: an exact
cancellation of symmetrised commutator sums (true for any matrix tuple,
so its failure means broken plumbing, never bad data), and the canonical
commutation relation of the field-shifted momenta on the FFT grid, which
does depend on resolution and is reported as a residual to track.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

from .errors import DimensionMismatch
from .model import FieldSpec, field_eval, field_jacobian
from .quantum import Grid, coherent_state

__all__ = [
    "anticommutator_cancellation_residual",
    "discrete_commutator_check",
]


def _jordan(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * (a @ b + b @ a)


def anticommutator_cancellation_residual(mats) -> float:
    """Residual of sum_{k,l} D_k v (D_l v [D_k, D_l]) over a matrix tuple.

    v is the symmetrised product.  The sum vanishes identically: the inner
    bracket is antisymmetric under k <-> l while the nested symmetrised
    products are built to cancel pairwise.  Returns the Frobenius norm of
    the sum divided by the cube of the largest operator norm.
    """
    ops = [np.asarray(m, dtype=complex) for m in mats]
    n = ops[0].shape[0]
    for m in ops:
        if m.shape != (n, n):
            raise DimensionMismatch("all operators must share one square shape")
    total = np.zeros((n, n), dtype=complex)
    for dk in ops:
        for dl in ops:
            comm = dk @ dl - dl @ dk
            total += _jordan(dk, _jordan(dl, comm))
    scale = max(np.linalg.norm(m, ord=2) for m in ops)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(total, ord="fro") / scale**3)


def _random_smooth_states(grid: Grid, hbar: float, rng: np.random.Generator,
                          count: int) -> list:
    """Superpositions of a few packets, kept central so box leakage is nil."""
    states = []
    for _ in range(count):
        psi = np.zeros((grid.n,) * grid.d, dtype=complex)
        for _ in range(3):
            q = rng.uniform(-0.35, 0.35, size=grid.d) * grid.halfwidth
            p = rng.uniform(-2.0, 2.0, size=grid.d)
            amp = rng.standard_normal() + 1j * rng.standard_normal()
            psi += amp * coherent_state(grid, hbar, q, p).psi
        nrm = np.sqrt(np.vdot(psi, psi).real * grid.cell)
        states.append(psi / nrm)
    return states


def discrete_commutator_check(field: FieldSpec, grid: Grid, hbar: float,
                              k: int, l: int, seed: int = 0,
                              count: int = 20) -> float:
    """Commutation residual of the field-shifted momenta on the grid.

    P_k = -i hbar d/dy_k + A_k(y) applied spectrally / pointwise.  The
    bracket [P_k, P_l] acting on a smooth state equals
    i hbar (dA_k/dy_l - dA_l/dy_k) times the state; the residual is the
    worst relative L2 deviation over `count` random smooth states.
    """
    if not (0 <= k < grid.d and 0 <= l < grid.d):
        raise DimensionMismatch("component indices out of range")
    rng = np.random.default_rng(seed)
    mesh = np.stack(grid.meshgrid(), axis=-1)
    a_vals = np.moveaxis(field_eval(field, mesh), -1, 0)
    jac = field_jacobian(field, mesh)           # (..., comp, coord)
    curl = hbar * (jac[..., k, l] - jac[..., l, k])
    wn = grid.wavenumbers
    kk = [wn[:, None], wn[None, :]]

    def shifted_momentum(ax, psi):
        deriv = sfft.ifft2(hbar * kk[ax] * sfft.fft2(psi))
        return deriv + a_vals[ax] * psi

    worst = 0.0
    for psi in _random_smooth_states(grid, hbar, rng, count):
        forward = shifted_momentum(k, shifted_momentum(l, psi))
        backward = shifted_momentum(l, shifted_momentum(k, psi))
        resid = (forward - backward) - 1j * curl * psi
        num = np.sqrt(np.vdot(resid, resid).real)
        den = np.sqrt(np.vdot(psi, psi).real)
        worst = max(worst, float(num / den))
    return worst
