"""Problem description: magnetic fields, bounded potentials, atomic measures, run config.

The dynamical setting is a charged particle in a confining quadratic well,
an additional bounded even potential V, and a divergence-free magnetic
vector potential A.  Everything downstream (flows, propagators, bounds)
consumes the small value-object types defined here.

Config documents are INI text parsed by :func:`parse_config`.  Every key
has a default, so the minimal valid document is::

    [model]
    d = 2
    hbar = 0.1
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import math

import numpy as np

from .errors import (
    DimensionMismatch,
    InvariantViolation,
    MalformedDocument,
    NonPositiveInput,
)

__all__ = [
    "PhaseVec",
    "FieldSpec",
    "PotentialSpec",
    "AtomicMeasure",
    "TransportParams",
    "ObserveParams",
    "SimConfig",
    "parse_config",
    "config_from_file",
    "field_eval",
    "field_jacobian",
    "field_divergence",
    "potential_eval",
    "potential_gradient",
    "potential_sup",
    "resolve_atoms",
    "canonical_hash",
]

FIELD_KINDS = ("zero", "eps_rotation", "sinswap")
POTENTIAL_NAMES = ("zero", "cosine", "quadratic")


@dataclasses.dataclass(frozen=True)
class PhaseVec:
    """A single phase-space point (position x, momentum xi)."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if self.x.shape != self.xi.shape or self.x.ndim != 1:
            raise DimensionMismatch(
                f"phase point needs matching 1-d x and xi, got {self.x.shape} / {self.xi.shape}"
            )

    @property
    def d(self) -> int:
        return self.x.shape[0]

    def as_array(self) -> np.ndarray:
        """Flat (2d,) layout [x, xi] used by the integrators."""
        return np.concatenate([self.x, self.xi])


@dataclasses.dataclass(frozen=True)
class FieldSpec:
    """Built-in magnetic vector potential catalog entry.

    kind:
        "zero"          A = 0
        "eps_rotation"  A(x) = (-x2, x1) / eps, planar, stiff as eps -> 0
        "sinswap"       A(x) = (sin x2, sin x1) (d=2; cyclic shift for d=3)

    lip_field / lip_field_jac are Lipschitz constants of A and of its
    Jacobian; both built-ins are divergence free.
    """

    kind: str
    d: int = 2
    eps: float = 1.0

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise InvariantViolation("field.kind", f"unknown kind {self.kind!r}")
        if self.d < 1:
            raise InvariantViolation("field.d", "dimension must be >= 1")
        if self.kind == "eps_rotation":
            if self.d != 2:
                raise DimensionMismatch("eps_rotation field is planar (d = 2)")
            if not (self.eps > 0):
                raise NonPositiveInput("eps_rotation needs eps > 0")
        if self.kind == "sinswap" and self.d not in (2, 3):
            raise DimensionMismatch("sinswap field defined for d in {2, 3}")

    @property
    def lip_field(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "eps_rotation":
            return 1.0 / self.eps
        return 1.0

    @property
    def lip_field_jac(self) -> float:
        # constant Jacobians for zero / eps_rotation; |cos a - cos b| <= |a - b|
        return 1.0 if self.kind == "sinswap" else 0.0

    @property
    def divergence_free(self) -> bool:
        return True


@dataclasses.dataclass(frozen=True)
class PotentialSpec:
    """Bounded even potential added on top of the fixed quadratic well.

    name:
        "zero"       V = 0
        "cosine"     V(x) = sum_k cos(x_k), sup |V| = d, grad Lipschitz 1
        "quadratic"  V(x) = (gamma/2) |x|^2, sup taken over the run box

    The confining well |x|^2 / 2 is *not* part of this spec; it is always
    present in the dynamics.
    """

    name: str
    d: int = 2
    gamma: float = 0.5

    def __post_init__(self):
        if self.name not in POTENTIAL_NAMES:
            raise InvariantViolation("potential.name", f"unknown name {self.name!r}")
        if self.name == "quadratic" and self.gamma < 0:
            raise NonPositiveInput("quadratic potential needs gamma >= 0")

    @property
    def lip_grad(self) -> float:
        """Lipschitz constant of grad V."""
        if self.name == "zero":
            return 0.0
        if self.name == "cosine":
            return 1.0
        return self.gamma


@dataclasses.dataclass(frozen=True)
class AtomicMeasure:
    """Finitely many weighted phase-space atoms; weights sum to one."""

    weights: np.ndarray
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        x = np.asarray(self.x, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if x.ndim != 2 or xi.shape != x.shape or w.shape != (x.shape[0],):
            raise DimensionMismatch(
                f"atoms need shapes (n,), (n,d), (n,d); got {w.shape}, {x.shape}, {xi.shape}"
            )
        if w.size == 0:
            raise InvariantViolation("weights", "measure needs at least one atom")
        if np.any(w <= 0):
            raise InvariantViolation("weights", "atom weights must be positive")
        s = w.sum()
        if abs(s - 1.0) > 1e-9:
            raise InvariantViolation("weights", f"weights sum to {s!r}, expected 1")
        object.__setattr__(self, "weights", w / s)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def points(self) -> np.ndarray:
        """(n, 2d) array of [x, xi] rows."""
        return np.concatenate([self.x, self.xi], axis=1)


@dataclasses.dataclass(frozen=True)
class TransportParams:
    """Knobs of the entropic transport solver (see transport module)."""

    support_threshold: float = 5e-4
    eps_floor_scale: float = 2e-3
    iter_cap: int = 100_000
    marginal_tol: float = 1e-7
    dense_cap: int = 8192


@dataclasses.dataclass(frozen=True)
class ObserveParams:
    """Observation experiment inputs: initial box K, target set, horizon."""

    k_center: tuple = (1.0, 0.0, 0.0, 0.0)
    k_halfwidth: float = 0.05
    k_points_per_axis: int = 9
    omega_kind: str = "ball"  # ball | annulus
    omega_params: tuple = (0.0, 0.0, 0.5)  # center..., radii
    horizon: float = 2.0 * math.pi
    delta: float | None = None  # None = auto-select


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Fully resolved run description; every field validated."""

    d: int = 2
    hbar: float = 0.1
    cost_weight: float = 1.0
    field: FieldSpec = FieldSpec("zero")
    potential: PotentialSpec = PotentialSpec("zero")
    grid_n: int = 256
    grid_halfwidth: float = 3.0
    t_final: float = 1.0
    dt_classical: float = 1e-3
    dt_quantum: float = 1e-3
    report_dt: float = 0.2
    atoms_f: AtomicMeasure | None = None
    atoms_mu: AtomicMeasure | None = None
    velocity_frame: bool = False
    phase_m_pos: int = 32
    phase_spacing: float = 0.16
    transport: TransportParams = TransportParams()
    observe: ObserveParams = ObserveParams()
    seed: int = 0
    threads: int = 1
    raw_text: str = ""

    def __post_init__(self):
        for name in ("hbar", "cost_weight", "grid_halfwidth", "t_final",
                     "dt_classical", "dt_quantum", "report_dt", "phase_spacing"):
            if not (getattr(self, name) > 0):
                raise NonPositiveInput(f"{name} must be > 0")
        if self.d < 1:
            raise InvariantViolation("d", "dimension must be >= 1")
        if self.grid_n < 16 or self.grid_n & (self.grid_n - 1):
            raise InvariantViolation("grid_n", "grid size must be a power of two >= 16")
        if self.field.d != self.d or (self.atoms_f is not None and self.atoms_f.d != self.d):
            raise DimensionMismatch("field / atoms dimension differs from model d")

    @property
    def config_hash(self) -> str:
        return canonical_hash(self)


def _format_atoms(m: AtomicMeasure | None) -> str:
    if m is None:
        return "none"
    rows = []
    for w, x, xi in zip(m.weights, m.x, m.xi):
        rows.append(
            f"{w!r} @ {','.join(repr(v) for v in x)} ; {','.join(repr(v) for v in xi)}"
        )
    return "|".join(rows)


def canonical_hash(cfg: SimConfig) -> str:
    """Deterministic hex digest of the semantically relevant config fields."""
    parts = []
    for f in dataclasses.fields(cfg):
        if f.name in ("raw_text",):
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, AtomicMeasure):
            v = _format_atoms(v)
        parts.append(f"{f.name}={v!r}")
    blob = "\n".join(parts).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# config parsing

_KNOWN = {
    "model": {"d", "hbar", "lambda", "seed", "threads"},
    "field": {"kind", "eps"},
    "potential": {"name", "gamma"},
    "grid": {"n", "halfwidth", "phase_m_pos", "phase_spacing"},
    "time": {"t_final", "dt_classical", "dt_quantum", "report_dt"},
    "initial": {"atoms_f", "atoms_mu", "velocity_frame"},
    "transport": {"support_threshold", "eps_floor_scale", "iter_cap",
                  "marginal_tol", "dense_cap"},
    "observe": {"k_center", "k_halfwidth", "k_points_per_axis", "omega",
                "horizon", "delta"},
}


def _parse_atoms(text: str, d: int) -> AtomicMeasure:
    rows = [ln.strip() for ln in text.replace("|", "\n").splitlines() if ln.strip()]
    if not rows:
        raise MalformedDocument("empty atom list")
    ws, xs, xis = [], [], []
    for row in rows:
        try:
            w_part, coords = row.split("@", 1)
            x_part, xi_part = coords.split(";", 1)
            ws.append(float(w_part))
            xs.append([float(v) for v in x_part.split(",")])
            xis.append([float(v) for v in xi_part.split(",")])
        except ValueError as exc:
            raise MalformedDocument(f"bad atom row {row!r}: {exc}") from None
    x = np.array(xs, dtype=float)
    xi = np.array(xis, dtype=float)
    if x.shape[1] != d or xi.shape[1] != d:
        raise DimensionMismatch(f"atom coordinates must have d={d} components")
    return AtomicMeasure(np.array(ws), x, xi)


def parse_config(text: str) -> SimConfig:
    """Parse an INI config document into a validated :class:`SimConfig`."""
    # '#' only: atom rows use ';' to separate position from momentum columns
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise MalformedDocument(str(exc)) from None

    for sec in cp.sections():
        if sec not in _KNOWN:
            raise InvariantViolation(sec, "unknown config section")
        for key in cp[sec]:
            if key not in _KNOWN[sec]:
                raise InvariantViolation(f"{sec}.{key}", "unknown config key")

    def get(sec, key, conv, default):
        if cp.has_option(sec, key):
            try:
                return conv(cp.get(sec, key))
            except ValueError as exc:
                raise MalformedDocument(f"{sec}.{key}: {exc}") from None
        return default

    d = get("model", "d", int, 2)
    hbar = get("model", "hbar", float, 0.1)
    cost_weight = get("model", "lambda", float, 1.0)
    seed = get("model", "seed", int, 0)
    threads = get("model", "threads", int, 1)

    field = FieldSpec(
        kind=get("field", "kind", str, "zero").strip(),
        d=d,
        eps=get("field", "eps", float, 1.0),
    )
    potential = PotentialSpec(
        name=get("potential", "name", str, "zero").strip(),
        d=d,
        gamma=get("potential", "gamma", float, 0.5),
    )

    atoms_f = get("initial", "atoms_f", lambda s: _parse_atoms(s, d),
                  _parse_atoms("1.0 @ 1,0 ; 0,0", d) if d == 2 else None)
    atoms_mu_raw = get("initial", "atoms_mu", str, "match").strip()
    if atoms_mu_raw == "match":
        atoms_mu = atoms_f
    else:
        atoms_mu = _parse_atoms(atoms_mu_raw, d)

    observe_defaults = ObserveParams()
    omega_raw = get("observe", "omega", str, "ball 0,0 0.5").split()
    if len(omega_raw) != 3 or omega_raw[0] not in ("ball", "annulus"):
        raise MalformedDocument("observe.omega expects '<ball|annulus> <center> <radii>'")
    try:
        omega_center = tuple(float(v) for v in omega_raw[1].split(","))
        omega_radii = tuple(float(v) for v in omega_raw[2].split(","))
    except ValueError as exc:
        raise MalformedDocument(f"observe.omega: {exc}") from None
    delta_raw = get("observe", "delta", str, "auto").strip()
    observe = ObserveParams(
        k_center=tuple(float(v) for v in
                       get("observe", "k_center", str, "1,0,0,0").split(",")),
        k_halfwidth=get("observe", "k_halfwidth", float, observe_defaults.k_halfwidth),
        k_points_per_axis=get("observe", "k_points_per_axis", int,
                              observe_defaults.k_points_per_axis),
        omega_kind=omega_raw[0],
        omega_params=omega_center + omega_radii,
        horizon=get("observe", "horizon", float, observe_defaults.horizon),
        delta=None if delta_raw == "auto" else float(delta_raw),
    )

    cfg = SimConfig(
        d=d,
        hbar=hbar,
        cost_weight=cost_weight,
        field=field,
        potential=potential,
        grid_n=get("grid", "n", int, 256),
        grid_halfwidth=get("grid", "halfwidth", float, 3.0),
        t_final=get("time", "t_final", float, 1.0),
        dt_classical=get("time", "dt_classical", float, 1e-3),
        dt_quantum=get("time", "dt_quantum", float, 1e-3),
        report_dt=get("time", "report_dt", float, 0.2),
        atoms_f=atoms_f,
        atoms_mu=atoms_mu,
        velocity_frame=get("initial", "velocity_frame",
                           lambda s: s.lower() in ("1", "true", "yes"), False),
        phase_m_pos=get("grid", "phase_m_pos", int, 32),
        phase_spacing=get("grid", "phase_spacing", float, 0.16),
        transport=TransportParams(
            support_threshold=get("transport", "support_threshold", float, 1e-12),
            eps_floor_scale=get("transport", "eps_floor_scale", float, 5e-4),
            iter_cap=get("transport", "iter_cap", int, 100_000),
            marginal_tol=get("transport", "marginal_tol", float, 1e-9),
            dense_cap=get("transport", "dense_cap", int, 8192),
        ),
        observe=observe,
        seed=seed,
        threads=threads,
        raw_text=text,
    )
    return cfg


def config_from_file(path) -> SimConfig:
    with io.open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# field / potential evaluation (batched over leading axes)


def field_eval(spec: FieldSpec, x: np.ndarray) -> np.ndarray:
    """A(x); x has shape (..., d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise DimensionMismatch(f"expected last axis {spec.d}, got {x.shape[-1]}")
    if spec.kind == "zero":
        return np.zeros_like(x)
    if spec.kind == "eps_rotation":
        out = np.empty_like(x)
        out[..., 0] = -x[..., 1] / spec.eps
        out[..., 1] = x[..., 0] / spec.eps
        return out
    # sinswap: cyclic coordinate swap keeps the field divergence free
    return np.sin(np.roll(x, -1, axis=-1))


def field_jacobian(spec: FieldSpec, x: np.ndarray) -> np.ndarray:
    """J[k, l] = d A_k / d x_l, shape (..., d, d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise DimensionMismatch(f"expected last axis {spec.d}, got {x.shape[-1]}")
    d = spec.d
    out = np.zeros(x.shape + (d,), dtype=float)
    if spec.kind == "zero":
        return out
    if spec.kind == "eps_rotation":
        out[..., 0, 1] = -1.0 / spec.eps
        out[..., 1, 0] = 1.0 / spec.eps
        return out
    c = np.cos(np.roll(x, -1, axis=-1))
    for k in range(d):
        out[..., k, (k + 1) % d] = c[..., k]
    return out


def field_divergence(spec: FieldSpec, x: np.ndarray) -> np.ndarray:
    """div A; identically zero for every built-in field."""
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1], dtype=float)


def potential_eval(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    """V(x) for the bounded extra potential (well not included)."""
    x = np.asarray(x, dtype=float)
    if spec.name == "zero":
        return np.zeros(x.shape[:-1], dtype=float)
    if spec.name == "cosine":
        return np.cos(x).sum(axis=-1)
    return 0.5 * spec.gamma * (x * x).sum(axis=-1)


def potential_gradient(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.name == "zero":
        return np.zeros_like(x)
    if spec.name == "cosine":
        return -np.sin(x)
    return spec.gamma * x


def potential_sup(spec: PotentialSpec, halfwidth: float, d: int) -> float:
    """sup |V| over the run box [-halfwidth, halfwidth]^d."""
    if spec.name == "zero":
        return 0.0
    if spec.name == "cosine":
        return float(d)
    return 0.5 * spec.gamma * d * halfwidth**2


def resolve_atoms(cfg: SimConfig, which: str = "f") -> AtomicMeasure:
    """Initial atoms with the velocity convention applied.

    With velocity_frame the config's momentum columns are kinetic
    velocities v; the canonical momentum is xi = v - A(x), evaluated with
    the *current* field (so one document serves a whole eps sweep).
    """
    atoms = cfg.atoms_f if which == "f" else cfg.atoms_mu
    if atoms is None:
        raise InvariantViolation("initial", "config declares no atoms")
    if not cfg.velocity_frame:
        return atoms
    xi = atoms.xi - field_eval(cfg.field, atoms.x)
    return AtomicMeasure(atoms.weights, atoms.x, xi)
