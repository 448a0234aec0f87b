"""Gronwall bound constants and the computable pseudo-distance brackets.

The convergence statements verified by the sweeps compare a squared
transport distance against exponential envelopes of the form

    prefactor * exp(growth_rate * t) * (dist_in^2 + additive) + additive,

with constants determined by the Lipschitz data of the field (lip_field,
its Jacobian lip_field_jac), the bounded potential's gradient (lip_force),
the initial support radius, and the cost weight.  The quantum-classical
pseudo-distance itself (an infimum over operator couplings) is never
computed exactly; this module evaluates the explicit coherent-coupling
value as the upper bracket and the transport-minus-offset lower bracket.

Cost convention: for weight w > 0 the phase-space cost is
c(z, z') = w^2 |x - x'|^2 / 2 + |xi - xi'|^2 / 2, and its quantum version
on a packet adds w^2 d hbar/4 + d hbar/4 of irreducible spread.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import fft as sfft

from .errors import InvariantViolation, NonPositiveInput
from .model import AtomicMeasure, FieldSpec, TransportParams, field_eval
from .quantum import GridState
from .transforms import PhaseGridDensity
from .transport import w2_cloud_grid, w2_exact

__all__ = [
    "CostParams",
    "RateConstants",
    "constants",
    "double_limit_rate",
    "single_limit_bound",
    "double_limit_bound",
    "coherent_cost_expectation",
    "pseudo_distance_upper",
    "pseudo_distance_lower",
    "magnetic_cost_expectation",
    "optimize_cstar",
]


@dataclasses.dataclass(frozen=True)
class CostParams:
    """Cost weight and semiclassical parameter for the pseudo-distance."""

    cost_weight: float
    hbar: float

    def __post_init__(self):
        if not (self.cost_weight > 0 and self.hbar > 0):
            raise NonPositiveInput("cost_weight and hbar must be > 0")


@dataclasses.dataclass(frozen=True)
class RateConstants:
    """Envelope constants plus an echo of the inputs that produced them."""

    growth_rate: float        # multiplies t in the exponent
    prefactor: float          # multiplies the whole envelope
    lip_force: float          # Lipschitz constant of grad V
    lip_field: float          # Lipschitz constant of A
    lip_field_jac: float      # Lipschitz constant of the Jacobian of A
    support_radius: float     # energy radius of the initial atoms
    cost_weight: float
    double_rate: float | None = None  # rate of the strong-field envelope


def constants(lip_force: float, lip_field: float, lip_field_jac: float,
              support_radius: float, cost_weight: float,
              double_rate: float | None = None) -> RateConstants:
    """Envelope constants for the single-limit bound.

    growth_rate = 1 + max(1, (1 + L^2)/w^2) + 4 r max(2 Kp^2 / w^2, 1)
    prefactor   = max(2, (w^2 + 2 K^2)/w^2)^2

    where L, K, Kp, r, w are the five arguments in order.  At w = 1 these
    reduce to 2 + L^2 + 4 r max(2 Kp^2, 1) and max(2, 1 + 2 K^2)^2.
    """
    if cost_weight <= 0:
        raise NonPositiveInput("cost_weight must be > 0")
    for name, v in (("lip_force", lip_force), ("lip_field", lip_field),
                    ("lip_field_jac", lip_field_jac),
                    ("support_radius", support_radius)):
        if v < 0:
            raise NonPositiveInput(f"{name} must be >= 0")
    w2 = cost_weight**2
    growth = (1.0 + max(1.0, (1.0 + lip_force**2) / w2)
              + 4.0 * support_radius * max(2.0 * lip_field_jac**2 / w2, 1.0))
    pref = max(2.0, (w2 + 2.0 * lip_field**2) / w2) ** 2
    return RateConstants(growth_rate=growth, prefactor=pref,
                         lip_force=lip_force, lip_field=lip_field,
                         lip_field_jac=lip_field_jac,
                         support_radius=support_radius,
                         cost_weight=cost_weight, double_rate=double_rate)


def double_limit_rate(eps: float, lip_force: float) -> float:
    """Rate of the strong-field envelope: max(2, eps^2 (1 + L^2))."""
    if eps <= 0:
        raise NonPositiveInput("eps must be > 0")
    if lip_force < 0:
        raise NonPositiveInput("lip_force must be >= 0")
    return max(2.0, eps**2 * (1.0 + lip_force**2))


def single_limit_bound(t: float, dist_in_sq: float, d: int, hbar: float,
                       consts: RateConstants) -> float:
    """prefactor e^{growth t} (dist_in^2 + d hbar/2) + d hbar/2."""
    add = d * hbar / 2.0
    return consts.prefactor * math.exp(consts.growth_rate * t) \
        * (dist_in_sq + add) + add


def double_limit_bound(t: float, dist_in_sq: float, hbar: float, eps: float,
                       rate: float) -> float:
    """e^{rate t} (dist_in^2 + (1+eps^2) hbar/2) + (1+eps^2) hbar/2."""
    add = 0.5 * (1.0 + eps**2) * hbar
    return math.exp(rate * t) * (dist_in_sq + add) + add


# ---------------------------------------------------------------------------
# pseudo-distance brackets


def coherent_cost_expectation(x, xi, q, p, params: CostParams,
                              d: int | None = None) -> float:
    """Expected cost between phase point (x, xi) and a packet at (q, p).

    Closed form: w^2 (|x-q|^2 + d hbar/2)/2 + (|xi-p|^2 + d hbar/2)/2.
    The d hbar/2 spreads are the packet's variance, hbar/2 per coordinate
    in each of position and momentum.
    """
    x, xi = np.asarray(x, dtype=float), np.asarray(xi, dtype=float)
    q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
    d = d if d is not None else x.shape[-1]
    w2 = params.cost_weight**2
    spread = d * params.hbar / 2.0
    return 0.5 * w2 * (float(np.sum((x - q) ** 2)) + spread) \
        + 0.5 * (float(np.sum((xi - p) ** 2)) + spread)


def pseudo_distance_upper(f: AtomicMeasure, mu: AtomicMeasure,
                          params: CostParams) -> float:
    """Coherent-coupling value of the pseudo-distance squared (upper bracket).

    Transports f onto the packet mixture over mu along the optimal plan of
    the plain W2 problem and adds the irreducible packet spread.  Also
    asserts the looser published inequality
    value <= max(1, w^2) dist^2 + (w^2+1) d hbar / 4.
    """
    dist, plan = w2_exact(f, mu)
    w2 = params.cost_weight**2
    d = f.d
    dx = f.x[:, None, :] - mu.x[None, :, :]
    dxi = f.xi[:, None, :] - mu.xi[None, :, :]
    transport = float(np.sum(plan.plan * (
        0.5 * w2 * np.einsum("ijk,ijk->ij", dx, dx)
        + 0.5 * np.einsum("ijk,ijk->ij", dxi, dxi))))
    offset = (w2 + 1.0) * d * params.hbar / 4.0
    value = transport + offset
    loose = max(1.0, w2) * dist**2 + offset
    if value > loose + 1e-12 * max(1.0, loose):
        raise InvariantViolation(
            "pseudo_distance_upper",
            f"coupling value {value!r} exceeds the published bound {loose!r}")
    return value


def pseudo_distance_lower(f: AtomicMeasure, husimi: PhaseGridDensity,
                          params: CostParams,
                          transport_params: TransportParams | None = None
                          ) -> float:
    """Transport lower bracket: W2(f, husimi)^2 - (w^2+1) d hbar/4.

    May legitimately be negative when the measures nearly coincide.
    """
    d = f.d
    dist = w2_cloud_grid(f, husimi, transport_params)
    return dist**2 - (params.cost_weight**2 + 1.0) * d * params.hbar / 4.0


def magnetic_cost_expectation(x, xi, psi: GridState, field: FieldSpec,
                              cost_weight: float) -> float:
    """Field-shifted cost expectation on a grid state.

    Quadrature of w^2 <|x - y|^2>/2 plus half the squared norm of
    (xi_k + A_k(x) - A_k(y) + i hbar d/dy_k) psi per component, the
    derivative applied spectrally.  Nonnegative by construction.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    grid, hbar = psi.grid, psi.hbar
    mesh = grid.meshgrid()
    cell = grid.cell
    prob = np.abs(psi.psi) ** 2 * cell
    r2 = sum((y - xk) ** 2 for y, xk in zip(mesh, x))
    value = 0.5 * cost_weight**2 * float(np.sum(r2 * prob))
    a_at_x = field_eval(field, x)
    a_mesh = np.moveaxis(field_eval(field, np.stack(mesh, axis=-1)), -1, 0)
    k = grid.wavenumbers
    kk = [k[:, None], k[None, :]]
    ft = sfft.fft2(psi.psi)
    for ax in range(grid.d):
        # i hbar d/dy on the grid: multiply the spectrum by -hbar k
        deriv = sfft.ifft2(-hbar * kk[ax] * ft)
        phi = (xi[ax] + a_at_x[ax] - a_mesh[ax]) * psi.psi + deriv
        value += 0.5 * float(np.vdot(phi, phi).real * cell)
    return value


# ---------------------------------------------------------------------------
# observation constant


def _cstar_objective(lam: float, horizon: float, lip_force: float,
                     lip_field: float, lip_field_jac: float,
                     support_radius: float, d: int, hbar: float) -> float:
    c = constants(lip_force, lip_field, lip_field_jac, support_radius, lam)
    try:
        growth = math.exp(c.growth_rate * horizon / 2.0) - 1.0
    except OverflowError:
        return math.inf
    return (1.0 / lam) * math.sqrt(c.prefactor) \
        * math.sqrt((lam**2 + 1.0) * d * hbar) \
        * 2.0 * growth / c.growth_rate


def optimize_cstar(horizon: float, lip_force: float, lip_field: float,
                   lip_field_jac: float, support_radius: float, d: int,
                   hbar: float) -> tuple:
    """Minimise the observation constant over the cost weight.

    Coarse 64-point logarithmic scan of [1e-3, 1e3] (no unimodality
    assumed), then golden-section refinement inside the bracketing
    interval.  Returns (weight_star, value).
    """
    lams = np.logspace(-3.0, 3.0, 64)
    vals = np.array([_cstar_objective(l, horizon, lip_force, lip_field,
                                      lip_field_jac, support_radius, d, hbar)
                     for l in lams])
    i = int(np.argmin(vals))
    lo = lams[max(i - 1, 0)]
    hi = lams[min(i + 1, len(lams) - 1)]
    best_lam, best_val = float(lams[i]), float(vals[i])

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - invphi * (b - a)
    dd = a + invphi * (b - a)
    fc = _cstar_objective(math.exp(c), horizon, lip_force, lip_field,
                          lip_field_jac, support_radius, d, hbar)
    fd = _cstar_objective(math.exp(dd), horizon, lip_force, lip_field,
                          lip_field_jac, support_radius, d, hbar)
    for _ in range(90):
        if fc <= fd:
            b, dd, fd = dd, c, fc
            c = b - invphi * (b - a)
            fc = _cstar_objective(math.exp(c), horizon, lip_force, lip_field,
                                  lip_field_jac, support_radius, d, hbar)
        else:
            a, c, fc = c, dd, fd
            dd = a + invphi * (b - a)
            fd = _cstar_objective(math.exp(dd), horizon, lip_force, lip_field,
                                  lip_field_jac, support_radius, d, hbar)
    lam_ref = math.exp((a + b) / 2.0)
    val_ref = _cstar_objective(lam_ref, horizon, lip_force, lip_field,
                               lip_field_jac, support_radius, d, hbar)
    if val_ref < best_val:
        best_lam, best_val = lam_ref, val_ref
    return best_lam, best_val
