"""Quadratic Wasserstein distances between phase-space measures.

Three computational regimes, matched to how the distances are used:

* atom cloud vs atom cloud: exact solver.  Equal-size uniform clouds go
  through the assignment solver; everything else is the transportation LP
  handed to HiGHS (deterministic, sparse equality constraints).
* atom cloud vs lattice density: a single atom admits the closed form
  W2^2 = sum_c rho_c |z_c - z|^2 (every transport plan is the product
  plan), used on all sweep paths.  Multi-atom clouds run debiased
  log-domain Sinkhorn with geometric epsilon scaling, with the lattice
  support truncated to its heavy cells.
* Gaussian vs Gaussian: the Bures closed form, used as an oracle.

All costs are squared Euclidean on phase space (positions and momenta
weighted equally).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import sparse
from scipy.linalg import sqrtm
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import logsumexp

from .errors import (
    InvariantViolation,
    NotConverged,
    NotNormalized,
    NotPSD,
    SizeExceeded,
)
from .model import AtomicMeasure, TransportParams
from .transforms import PhaseGridDensity

__all__ = [
    "TransportPlan",
    "w2_exact",
    "w2_cloud_grid",
    "w2_gaussian_oracle",
    "sinkhorn_divergence",
]

_ATOM_CAP = 4096


@dataclasses.dataclass(frozen=True)
class TransportPlan:
    """Optimal coupling between two atom clouds."""

    plan: np.ndarray      # (na, nb), nonnegative, marginals = weights
    cost: float           # <plan, squared distances>
    row_residual: float
    col_residual: float


def _sq_dists(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    diff = pa[:, None, :] - pb[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def w2_exact(a: AtomicMeasure, b: AtomicMeasure,
             marginal_tol: float = 1e-9) -> tuple:
    """Exact W2 between atomic measures; returns (distance, TransportPlan)."""
    if a.n > _ATOM_CAP or b.n > _ATOM_CAP:
        raise SizeExceeded(f"exact solver capped at {_ATOM_CAP} atoms per side")
    if a.d != b.d:
        raise InvariantViolation("d", "measures live in different dimensions")
    cost = _sq_dists(a.points(), b.points())
    wa, wb = a.weights, b.weights

    uniform = (a.n == b.n
               and np.allclose(wa, 1.0 / a.n, rtol=0, atol=1e-14)
               and np.allclose(wb, 1.0 / b.n, rtol=0, atol=1e-14))
    if uniform:
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros_like(cost)
        plan[rows, cols] = 1.0 / a.n
    else:
        na, nb = a.n, b.n
        # row-sum and column-sum equality constraints; drop one redundant row
        row_eq = sparse.kron(sparse.eye(na, format="csr"),
                             np.ones((1, nb)), format="csr")
        col_eq = sparse.kron(np.ones((1, na)),
                             sparse.eye(nb, format="csr"), format="csr")
        a_eq = sparse.vstack([row_eq, col_eq[:-1]], format="csr")
        b_eq = np.concatenate([wa, wb[:-1]])
        res = linprog(cost.reshape(-1), A_eq=a_eq, b_eq=b_eq,
                      bounds=(0, None), method="highs")
        if not res.success:
            raise NotConverged(f"transport LP failed: {res.message}")
        plan = res.x.reshape(na, nb)

    row_res = float(np.abs(plan.sum(axis=1) - wa).sum())
    col_res = float(np.abs(plan.sum(axis=0) - wb).sum())
    if max(row_res, col_res) > marginal_tol:
        raise InvariantViolation(
            "plan", f"marginal residual {max(row_res, col_res):.2e}")
    value = float((plan * cost).sum())
    return math.sqrt(max(value, 0.0)), TransportPlan(
        plan=plan, cost=value, row_residual=row_res, col_residual=col_res)


# ---------------------------------------------------------------------------
# entropic solver


def _sinkhorn_potentials(log_wa, log_wb, cost, eps_ladder, iter_cap,
                         marginal_tol):
    """Log-domain Sinkhorn with epsilon scaling; returns (f, g, eps, iters)."""
    f = np.zeros_like(log_wa)
    g = np.zeros_like(log_wb)
    total = 0
    for lvl, eps in enumerate(eps_ladder):
        final = lvl == len(eps_ladder) - 1
        budget = iter_cap - total
        inner = budget if final else min(8, budget)
        for _ in range(max(inner, 0)):
            total += 1
            f = -eps * logsumexp((g[None, :] - cost) / eps + log_wb[None, :],
                                 axis=1)
            g = -eps * logsumexp((f[:, None] - cost) / eps + log_wa[:, None],
                                 axis=0)
            if final:
                # column marginals are exact after the g-update; check rows
                log_plan = (f[:, None] + g[None, :] - cost) / eps \
                    + log_wa[:, None] + log_wb[None, :]
                rows = np.exp(logsumexp(log_plan, axis=1))
                viol = float(np.abs(rows - np.exp(log_wa)).sum())
                if viol <= marginal_tol:
                    return f, g, eps, total
        if total >= iter_cap:
            break
    if len(eps_ladder) == 0:
        raise InvariantViolation("eps", "empty epsilon ladder")
    raise NotConverged(
        f"sinkhorn hit the {iter_cap}-iteration cap (residual above "
        f"{marginal_tol:g})")


def _symmetric_potential(log_w, cost, eps_ladder, iter_cap):
    """Self-transport potential: f with f = T(f); damped fixed point."""
    f = np.zeros_like(log_w)
    total = 0
    for lvl, eps in enumerate(eps_ladder):
        final = lvl == len(eps_ladder) - 1
        inner = 200 if final else 5
        for _ in range(inner):
            total += 1
            if total > iter_cap:
                raise NotConverged("symmetric sinkhorn hit the iteration cap")
            upd = -eps * logsumexp((f[None, :] - cost) / eps + log_w[None, :],
                                   axis=1)
            new = 0.5 * (f + upd)
            delta = float(np.max(np.abs(new - f)))
            f = new
            if final and delta < 1e-12 * max(1.0, float(np.max(np.abs(f)))):
                return f, eps
    return f, eps_ladder[-1]


def _plan_cost(f, g, cost, eps, log_wa, log_wb) -> float:
    log_plan = (f[:, None] + g[None, :] - cost) / eps \
        + log_wa[:, None] + log_wb[None, :]
    return float(np.sum(np.exp(log_plan) * cost))


def sinkhorn_divergence(wa, pa, wb, pb, params: TransportParams) -> float:
    """Debiased entropic OT cost between weighted point clouds.

    Returns S = OT(a,b) - OT(a,a)/2 - OT(b,b)/2 >= ~0, an approximation of
    W2^2 that tightens as the epsilon floor decreases.
    """
    cab = _sq_dists(pa, pb)
    scale = float(np.max(cab))
    if scale == 0.0:
        return 0.0
    eps_floor = params.eps_floor_scale * scale
    n_levels = max(1, int(math.ceil(math.log2(scale / eps_floor))) + 1)
    ladder = [max(scale * 0.5**k, eps_floor) for k in range(n_levels)]
    ladder[-1] = eps_floor
    log_wa, log_wb = np.log(wa), np.log(wb)

    f, g, eps, _ = _sinkhorn_potentials(log_wa, log_wb, cab, ladder,
                                        params.iter_cap, params.marginal_tol)
    ot_ab = _plan_cost(f, g, cab, eps, log_wa, log_wb)

    caa = _sq_dists(pa, pa)
    fa, eps_a = _symmetric_potential(log_wa, caa, ladder, params.iter_cap)
    ot_aa = _plan_cost(fa, fa, caa, eps_a, log_wa, log_wa)

    cbb = _sq_dists(pb, pb)
    fb, eps_b = _symmetric_potential(log_wb, cbb, ladder, params.iter_cap)
    ot_bb = _plan_cost(fb, fb, cbb, eps_b, log_wb, log_wb)

    return ot_ab - 0.5 * ot_aa - 0.5 * ot_bb


def w2_cloud_grid(atoms: AtomicMeasure, density: PhaseGridDensity,
                  params: TransportParams | None = None) -> float:
    """W2 between an atom cloud and a lattice density.

    Single-atom clouds use the exact product-plan formula at any lattice
    size.  Multi-atom clouds truncate the lattice to its heavy cells and
    run the debiased entropic solver; the truncated support must stay
    under params.dense_cap cells.  The default support_threshold trims
    roughly half a percent of Gaussian tail mass, which perturbs the
    squared distance at the one-percent level; tighten it (and accept a
    larger dense support) when that matters.
    """
    params = params or TransportParams()
    mass = density.mass()
    if abs(mass - 1.0) > 1e-4:
        raise NotNormalized(f"density mass {mass!r} is not 1 within 1e-4")
    vals = density.values
    vmin = float(vals.min())
    if vmin < -1e-9 * max(float(vals.max()), 1e-300):
        raise InvariantViolation("density", f"negative cell value {vmin:.3e}")
    cell = density.pgrid.cell
    w = np.clip(vals, 0.0, None).reshape(-1) * cell
    w /= w.sum()
    nodes = density.pgrid.nodes()

    if atoms.n == 1:
        z = atoms.points()[0]
        diff = nodes - z[None, :]
        return math.sqrt(float(np.sum(w * np.einsum("ij,ij->i", diff, diff))))

    keep = w >= params.support_threshold * float(w.max())
    w_kept, nodes_kept = w[keep], nodes[keep]
    if w_kept.shape[0] > params.dense_cap:
        raise SizeExceeded(
            f"{w_kept.shape[0]} support cells exceed the dense cap "
            f"{params.dense_cap}; coarsen the phase lattice")
    w_kept = w_kept / w_kept.sum()
    val = sinkhorn_divergence(atoms.weights, atoms.points(), w_kept,
                              nodes_kept, params)
    return math.sqrt(max(val, 0.0))


def w2_gaussian_oracle(m1, s1, m2, s2) -> float:
    """Closed-form W2 between Gaussian measures (Bures distance)."""
    m1, m2 = np.asarray(m1, dtype=float), np.asarray(m2, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    for s in (s1, s2):
        if not np.allclose(s, s.T, atol=1e-12):
            raise NotPSD("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(s)) < -1e-12:
            raise NotPSD("covariance has a negative eigenvalue")
    root = sqrtm(s1)
    if np.iscomplexobj(root):
        root = root.real
    cross = sqrtm(root @ s2 @ root)
    if np.iscomplexobj(cross):
        cross = cross.real
    gap = float(np.trace(s1) + np.trace(s2) - 2.0 * np.trace(cross))
    d2 = float(np.sum((m1 - m2) ** 2)) + max(gap, 0.0)
    return math.sqrt(max(d2, 0.0))
