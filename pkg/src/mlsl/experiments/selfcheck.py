"""End-to-end smoke checks at small sizes, with a fault-injection hook.

self_check exercises one representative of every load-bearing kernel in a
few seconds.  The optional injected fault flips the sign of the vector
potential inside the quantum stepper only; a correct pipeline must then
fail the packet-tracking check (classical and quantum orbits separate),
which proves the checks are actually sensitive to the physics.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..classical_flow import (Region, batch_hitting_occupation,
                              classical_energy, integrate_flow)
from ..errors import MlslError
from ..model import AtomicMeasure, FieldSpec, PotentialSpec
from ..operator_algebra import (anticommutator_cancellation_residual,
                                discrete_commutator_check)
from ..quantum import (DensityMixture, Grid, GridState, coherent_state,
                       make_stepper, toeplitz_mixture)
from ..transforms import build_phase_grid, husimi_overlap, trace_pairing
from ..transport import sinkhorn_divergence, w2_cloud_grid, w2_exact
from ..model import TransportParams

__all__ = ["CheckResult", "self_check", "FAULT_NAMES"]

FAULT_NAMES = ("flip_field_sign",)


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _check(name, ok, detail) -> CheckResult:
    return CheckResult(name, bool(ok), detail)


def _matrix_identity() -> CheckResult:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(3):
        mats = [rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
                for _ in range(2)]
        worst = max(worst, anticommutator_cancellation_residual(mats))
    return _check("operator-identity", worst <= 1e-12, f"residual {worst:.2e}")


def _commutator() -> CheckResult:
    grid = Grid(64, 3.0)
    res = discrete_commutator_check(FieldSpec("zero"), grid, 0.1, 0, 1,
                                    seed=3, count=5)
    return _check("commutator-zero-field", res <= 1e-12, f"residual {res:.2e}")


def _pairing() -> CheckResult:
    grid = Grid(128, 3.0)
    atoms = AtomicMeasure(np.array([0.6, 0.4]),
                          np.array([[0.3, -0.2], [-0.4, 0.1]]),
                          np.array([[0.5, 0.0], [-0.3, 0.4]]))
    mix = toeplitz_mixture(grid, 0.1, atoms)
    lhs, rhs = trace_pairing(atoms, mix)
    rel = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    return _check("trace-pairing", rel <= 1e-8, f"relative gap {rel:.2e}")


def _transport() -> CheckResult:
    rng = np.random.default_rng(11)
    n = 8
    a = AtomicMeasure(np.full(n, 1.0 / n), rng.normal(size=(n, 2)),
                      rng.normal(size=(n, 2)))
    b = AtomicMeasure(np.full(n, 1.0 / n), rng.normal(size=(n, 2)),
                      rng.normal(size=(n, 2)))
    exact, _ = w2_exact(a, b)
    ent = math.sqrt(max(sinkhorn_divergence(
        a.weights, a.points(), b.weights, b.points(), TransportParams()), 0.0))
    rel = abs(ent - exact) / exact
    return _check("transport-oracle", rel <= 1e-2,
                  f"entropic vs exact gap {rel:.2e}")


def _classical_energy_drift() -> CheckResult:
    field = FieldSpec("sinswap")
    pot = PotentialSpec("cosine")
    traj = integrate_flow(field, pot, np.array([1.0, 0.0, 0.0, 0.0]), 2.0, 1e-3)
    e = classical_energy(field, pot, traj.states)
    drift = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))
    return _check("classical-energy", drift <= 1e-8, f"relative drift {drift:.2e}")


def _quantum_unitarity() -> CheckResult:
    grid = Grid(64, 3.0)
    psi = coherent_state(grid, 0.1, np.array([0.4, -0.3]), np.array([0.5, 0.2]))
    stepper = make_stepper(grid, FieldSpec("zero"), PotentialSpec("cosine"),
                           0.1, 1e-3)
    cur = psi.psi.copy()
    for _ in range(500):
        cur = stepper(cur)
    drift = abs(math.sqrt(float(np.vdot(cur, cur).real) * grid.cell) - 1.0)
    return _check("quantum-unitarity", drift <= 1e-10, f"norm drift {drift:.2e}")


def _packet_tracking(flip_field: bool) -> CheckResult:
    hbar = 0.1
    field = FieldSpec("eps_rotation", eps=1.0)
    pot = PotentialSpec("zero")
    grid = Grid(128, 2.5)
    x0 = np.array([0.6, 0.0])
    xi0 = -np.array([-x0[1], x0[0]])  # kinetic velocity zero
    t_final = math.pi / 2.0

    traj = integrate_flow(field, pot, np.concatenate([x0, xi0]), t_final, 1e-3)
    z_end = traj.states[-1]
    atoms_end = AtomicMeasure(np.array([1.0]), z_end[None, :2], z_end[None, 2:])

    psi = coherent_state(grid, hbar, x0, xi0).psi
    stepper = make_stepper(grid, field, pot, hbar, 1e-3, flip_field=flip_field)
    steps = int(round(t_final / 1e-3))
    for _ in range(steps):
        psi = stepper(psi)
    mix = DensityMixture(np.array([1.0]), [GridState(grid, psi, hbar)])

    p_inf = float(np.max(np.abs(traj.momenta()))) + 2.0
    pgrid = build_phase_grid(grid, hbar, p_inf, m_pos=32)
    dist2 = w2_cloud_grid(atoms_end, husimi_overlap(mix, pgrid)) ** 2
    floor = 2 * grid.d * hbar
    return _check("packet-tracking", dist2 <= 3.0 * floor,
                  f"dist^2 {dist2:.3f} vs packet floor {floor:.3f}")


def _observation_geometry() -> CheckResult:
    field = FieldSpec("sinswap")
    pot = PotentialSpec("zero")
    grid_pts = np.array([[1.0 + dx, dy, 0.0, 0.0]
                         for dx in (-0.05, 0.0, 0.05) for dy in (-0.05, 0.0, 0.05)])
    region = Region("ball", np.zeros(2), (0.95,))
    hits, occs = batch_hitting_occupation(field, pot, grid_pts, region,
                                          2 * math.pi, 1e-3)
    ok = bool(np.all(np.isfinite(hits)) and np.min(occs) > 0)
    return _check("observation-geometry", ok,
                  f"worst hit {np.nanmax(hits):.2f}, min occupation {np.min(occs):.2f}")


def self_check(inject_fault: str | None = None) -> list:
    """Run every smoke check; returns CheckResult rows in a fixed order."""
    if inject_fault is not None and inject_fault not in FAULT_NAMES:
        raise MlslError(f"unknown fault {inject_fault!r}; known: {FAULT_NAMES}")
    flip = inject_fault == "flip_field_sign"
    out = []
    for fn in (_matrix_identity, _commutator, _pairing, _transport,
               _classical_energy_drift, _quantum_unitarity):
        out.append(fn())
    out.append(_packet_tracking(flip))
    out.append(_observation_geometry())
    return out
