"""Side-by-side sweep drivers.

A sweep runs the atomic flow and the packet-mixture propagation from the
same initial data, measures the squared transport distance between the
pushed-forward atoms and the Husimi density at each report time, and
evaluates the matching exponential envelope.  Two envelope families:

* semiclassical ("single"): constants from the Lipschitz data and the
  initial support radius; valid for any built-in field at fixed eps;
* strong-field ("double"): rate max(2, eps^2 (1 + L^2)); additive term
  (1 + eps^2) hbar / 2; d = 2.

The measured distance uses the plain quadratic phase-space cost
(cost_weight pinned to 1 for the envelopes; the configured weight enters
only the pseudo-distance brackets carried alongside).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..classical_flow import classical_energy, flow_states_at
from ..costs import (CostParams, RateConstants, constants, double_limit_bound,
                     double_limit_rate, pseudo_distance_upper,
                     single_limit_bound)
from ..errors import InvariantViolation, SupportViolation
from ..model import (AtomicMeasure, SimConfig, potential_sup, resolve_atoms)
from ..quantum import (DensityMixture, Grid, GridState, _LeakMonitor,
                       make_stepper, quantum_energy, quantum_kinetic_magnetic,
                       toeplitz_mixture)
from ..transforms import build_phase_grid, husimi_overlap
from ..transport import w2_cloud_grid, w2_exact

__all__ = ["BoundReport", "run_single_limit_sweep", "run_double_limit_sweep"]


@dataclasses.dataclass(frozen=True)
class BoundReport:
    """One sweep leg: measured distances against the envelope."""

    kind: str                    # "semiclassical" | "strong_field"
    label: str
    hbar: float
    eps: float | None
    times: np.ndarray
    measured_dist2: np.ndarray
    bound: np.ndarray
    margin: np.ndarray           # bound - measured
    constants: RateConstants
    config_hash: str
    dist_in: float
    bracket_lower: np.ndarray    # transport bracket of the pseudo-distance sq
    bracket_upper: np.ndarray    # coherent-coupling bracket (exact coupling)
    kinetic: np.ndarray          # magnetic kinetic energy at the samples
    energy0: float
    potential_sup: float
    norm_drift: float
    moment_ok: bool              # kinetic <= energy0 + sup|V| + 1e-6 throughout

    def worst_relative_margin(self) -> float:
        """min over samples of margin / bound (negative = envelope violated)."""
        return float(np.min(self.margin / np.maximum(self.bound, 1e-300)))


def _report_times(t_final: float, delta: float) -> np.ndarray:
    k = int(math.floor(t_final / delta + 1e-9))
    times = delta * np.arange(k + 1)
    if times[-1] < t_final - 1e-9 * max(1.0, t_final):
        times = np.append(times, t_final)
    return times


def _support_radius(field, potential, atoms: AtomicMeasure) -> float:
    energies = classical_energy(field, potential, atoms.points())
    rho0 = math.sqrt(float(np.max(energies)))
    if float(np.max(energies)) > rho0**2 + 1e-12:
        raise SupportViolation("initial atoms exceed the declared energy radius")
    return rho0


def _momentum_extent(states_list, atoms_mu: AtomicMeasure, hbar: float,
                     lip_field: float) -> float:
    """Lattice half-extent in momentum.

    Mean excursion from the sampled flow plus the packet tail: the linear
    analysis gives spread growth exactly sqrt(1 + K^2) in momentum (and
    none in position), so 4.5 sigma of the grown packet plus a cushion.
    """
    p_inf = float(np.max(np.abs(atoms_mu.xi))) if atoms_mu.n else 0.0
    d = atoms_mu.d
    for st in states_list:
        p_inf = max(p_inf, float(np.max(np.abs(st[..., d:]))))
    tail = 4.5 * math.sqrt(hbar / 2.0) * math.sqrt(1.0 + lip_field**2)
    return p_inf + tail + 0.5


def _atoms_at(atoms: AtomicMeasure, state: np.ndarray) -> AtomicMeasure:
    d = atoms.d
    return AtomicMeasure(atoms.weights, state[:, :d], state[:, d:])


def _propagate_sampled(cfg: SimConfig, mix: DensityMixture, times: np.ndarray,
                       on_sample) -> float:
    """Step the mixture through the report times, calling on_sample at each.

    Returns the worst per-component norm drift.  Mass leak and norm are
    checked at every sample (the incremental path bypasses the one-shot
    propagator, so its guarantees are replicated here).
    """
    grid = mix.grid
    monitor = _LeakMonitor(grid)
    dt_eff = cfg.dt_quantum
    if cfg.field.kind == "eps_rotation":
        dt_eff = min(dt_eff, 0.2 * cfg.field.eps)
    steppers = {}
    psis = [c.psi.copy() for c in mix.components]
    norms0 = [math.sqrt(float(np.vdot(p, p).real) * grid.cell) for p in psis]
    drift = 0.0
    on_sample(0, mix)
    for i in range(1, len(times)):
        span = float(times[i] - times[i - 1])
        n_sub = max(1, int(math.ceil(span / dt_eff - 1e-12)))
        h = span / n_sub
        key = round(h, 15)
        if key not in steppers:
            steppers[key] = make_stepper(grid, cfg.field, cfg.potential,
                                         cfg.hbar, h)
        step = steppers[key]
        for j, psi in enumerate(psis):
            for _ in range(n_sub):
                psi = step(psi)
            psis[j] = psi
            monitor.check(psi)
            nrm = math.sqrt(float(np.vdot(psi, psi).real) * grid.cell)
            drift = max(drift, abs(nrm - norms0[j]))
        cur = DensityMixture(mix.weights.copy(),
                             [GridState(grid, p, cfg.hbar) for p in psis])
        on_sample(i, cur)
    if drift > 1e-10:
        raise InvariantViolation("norm", f"norm drift {drift:.3e} exceeds 1e-10")
    return drift


def _run_leg(cfg: SimConfig, kind: str) -> BoundReport:
    field, potential = cfg.field, cfg.potential
    d, hbar = cfg.d, cfg.hbar
    atoms_f = resolve_atoms(cfg, "f")
    atoms_mu = resolve_atoms(cfg, "mu")
    rho0 = _support_radius(field, potential, atoms_f)
    lam = cfg.cost_weight
    times = _report_times(cfg.t_final, cfg.report_dt)

    # classical side, sampled finely for the lattice extent estimate
    fine = np.union1d(times, np.linspace(0.0, cfg.t_final, 201))
    idx = np.searchsorted(fine, times)
    states_f_fine = flow_states_at(field, potential, atoms_f, fine,
                                   cfg.dt_classical)
    matched = (atoms_mu is atoms_f) or (
        atoms_mu.n == atoms_f.n
        and np.array_equal(atoms_mu.weights, atoms_f.weights)
        and np.array_equal(atoms_mu.x, atoms_f.x)
        and np.array_equal(atoms_mu.xi, atoms_f.xi))
    states_mu_fine = states_f_fine if matched else flow_states_at(
        field, potential, atoms_mu, fine, cfg.dt_classical)
    states_f = [states_f_fine[i] for i in idx]
    states_mu = [states_mu_fine[i] for i in idx]

    dist_in = 0.0 if matched else w2_exact(atoms_f, atoms_mu)[0]

    # envelope constants (cost weight pinned to 1 for the envelope)
    lip_l = potential.lip_grad
    lip_k = field.lip_field
    lip_kp = field.lip_field_jac
    if kind == "strong_field":
        rate = double_limit_rate(field.eps, lip_l)
        consts = constants(lip_l, lip_k, lip_kp, rho0, 1.0, double_rate=rate)
        bound = np.array([double_limit_bound(t, dist_in**2, hbar, field.eps,
                                             rate) for t in times])
    else:
        consts = constants(lip_l, lip_k, lip_kp, rho0, 1.0)
        bound = np.array([single_limit_bound(t, dist_in**2, d, hbar, consts)
                          for t in times])

    grid = Grid(cfg.grid_n, cfg.grid_halfwidth, d)
    mix0 = toeplitz_mixture(grid, hbar, atoms_mu)
    energy0 = quantum_energy(mix0, field, potential)
    vsup = potential_sup(potential, cfg.grid_halfwidth, d)

    p_need = _momentum_extent([np.stack(states_f_fine), np.stack(states_mu_fine)],
                              atoms_mu, hbar, lip_k)
    pgrid = build_phase_grid(grid, hbar, p_need, m_pos=cfg.phase_m_pos,
                             target_spacing=cfg.phase_spacing)

    params = CostParams(cost_weight=lam, hbar=hbar)
    offset = (lam**2 + 1.0) * d * hbar / 4.0
    measured = np.zeros(len(times))
    lower = np.zeros(len(times))
    upper = np.zeros(len(times))
    kinetic = np.zeros(len(times))

    def on_sample(i, mix):
        cloud = _atoms_at(atoms_f, states_f[i])
        dist = w2_cloud_grid(cloud, husimi_overlap(mix, pgrid), cfg.transport)
        measured[i] = dist**2
        lower[i] = dist**2 - offset
        upper[i] = pseudo_distance_upper(cloud, _atoms_at(atoms_mu, states_mu[i]),
                                         params)
        kinetic[i] = quantum_kinetic_magnetic(mix, field)

    drift = _propagate_sampled(cfg, mix0, times, on_sample)
    moment_ok = bool(np.all(kinetic <= energy0 + vsup + 1e-6))

    label = f"{kind} hbar={hbar:g}"
    if kind == "strong_field":
        label += f" eps={field.eps:g}"
    return BoundReport(
        kind=kind, label=label, hbar=hbar,
        eps=field.eps if kind == "strong_field" else None,
        times=times, measured_dist2=measured, bound=bound,
        margin=bound - measured, constants=consts,
        config_hash=cfg.config_hash, dist_in=dist_in,
        bracket_lower=lower, bracket_upper=upper, kinetic=kinetic,
        energy0=energy0, potential_sup=vsup, norm_drift=drift,
        moment_ok=moment_ok)


def run_single_limit_sweep(cfg: SimConfig, hbars) -> list:
    """Semiclassical sweep: one report per hbar, field/potential fixed."""
    reports = []
    for hbar in hbars:
        reports.append(_run_leg(dataclasses.replace(cfg, hbar=float(hbar)),
                                "semiclassical"))
    return reports


def run_double_limit_sweep(cfg: SimConfig, eps_list, hbars) -> list:
    """Strong-field sweep over (eps, hbar) pairs; rotation field only."""
    if cfg.field.kind != "eps_rotation":
        raise InvariantViolation(
            "field", "the strong-field sweep needs the eps_rotation field")
    reports = []
    for eps in eps_list:
        field = dataclasses.replace(cfg.field, eps=float(eps))
        for hbar in hbars:
            leg = dataclasses.replace(cfg, hbar=float(hbar), field=field)
            reports.append(_run_leg(leg, "strong_field"))
    return reports
