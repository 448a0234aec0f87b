"""Report serialisation: delimited series, manifest, figures.

Everything written here is byte-reproducible across runs of the same
config on the same code, except the single 'created:' manifest line which
carries the timestamp and wall time.  Figures are rendered for human eyes
and carry no reproducibility promise (PNG metadata varies by backend).
"""

from __future__ import annotations

import dataclasses
import datetime
import os
import re

import numpy as np

from .. import __version__
from ..errors import IoFailure
from ..model import SimConfig, canonical_hash
from .observe import ObservationReport
from .sweeps import BoundReport

__all__ = ["emit_outputs", "series_csv_text", "manifest_text"]

_HEADER = "t,measured_dist2,bound,margin"


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-")


def series_csv_text(report: BoundReport) -> str:
    lines = [_HEADER]
    for t, m, b, g in zip(report.times, report.measured_dist2, report.bound,
                          report.margin):
        lines.append(f"{t!r},{m!r},{b!r},{g!r}")
    return "\n".join(lines) + "\n"


def _config_echo(cfg: SimConfig) -> list:
    rows = []
    for f in dataclasses.fields(cfg):
        if f.name == "raw_text":
            continue
        rows.append(f"  {f.name} = {getattr(cfg, f.name)!r}")
    return rows


def _report_block(r: BoundReport) -> list:
    c = r.constants
    out = [
        f"report: {r.label}",
        f"  path: {_slug(r.label)}/series.csv",
        f"  kind: {r.kind}",
        f"  hbar: {r.hbar!r}",
        f"  eps: {r.eps!r}",
        f"  initial-distance: {r.dist_in!r}",
        f"  growth-rate: {c.growth_rate!r}",
        f"  prefactor: {c.prefactor!r}",
        f"  double-rate: {c.double_rate!r}",
        f"  support-radius: {c.support_radius!r}",
        f"  lipschitz(force,field,field-jac): "
        f"{c.lip_force!r}, {c.lip_field!r}, {c.lip_field_jac!r}",
        f"  norm-drift: {r.norm_drift!r}",
        f"  kinetic-within-energy-budget: {r.moment_ok}",
        f"  worst-relative-margin: {r.worst_relative_margin()!r}",
    ]
    return out


def _observation_block(o: ObservationReport) -> list:
    out = [
        "observation:",
        f"  path: observation.txt",
        f"  gc-satisfied: {o.gc_satisfied}",
        f"  worst-hitting-time: {o.hitting_worst!r}",
        f"  worst-occupation: {o.c_geo!r}",
        f"  weight-star: {o.weight_star!r}",
        f"  transport-constant: {o.cstar!r}",
        f"  smearing-width: {o.delta!r} (auto={o.delta_auto})",
        f"  observation-constant: {o.c_obs!r}",
        f"  observed-integral: {o.observed_integral!r}",
        f"  inequality-holds: {o.inequality_holds}",
        f"  lattice-points: {o.lattice_points}",
    ]
    return out


def manifest_text(cfg: SimConfig, reports, observation, wall_time_s: float,
                  stamp: str | None = None) -> str:
    """Manifest; only the 'created:' line varies between identical runs."""
    if stamp is None:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    lines = [
        "manifest-version: 1",
        f"code-version: mlsl {__version__}",
        f"created: {stamp} wall-time-s={wall_time_s:.3f}",
        f"seed: {cfg.seed}",
        f"config-hash: {canonical_hash(cfg)}",
        "note: plane model (d = 2); higher-dimensional claims are "
        "extrapolated, not simulated",
    ]
    caveats = []
    if observation is not None:
        caveats.extend(observation.caveats)
    for cv in dict.fromkeys(caveats):
        lines.append(f"caveat: {cv}")
    for r in reports:
        lines.extend(_report_block(r))
    if observation is not None:
        lines.extend(_observation_block(observation))
    lines.append("config:")
    lines.extend(_config_echo(cfg))
    return "\n".join(lines) + "\n"


def _render_figure(report: BoundReport, path: str):
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.4))
    ax1.semilogy(report.times, report.measured_dist2, "o-",
                 label="measured dist$^2$")
    ax1.semilogy(report.times, report.bound, "s--", label="envelope")
    ax1.set_ylabel("squared distance")
    ax1.legend(loc="best")
    ax1.set_title(report.label)
    ax2.axhline(0.0, color="k", lw=0.8)
    ax2.plot(report.times, report.margin, "d-", color="tab:red")
    ax2.set_xlabel("t")
    ax2.set_ylabel("margin")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _observation_text(o: ObservationReport) -> str:
    rows = [f"{k}: {getattr(o, k)!r}" for k in (
        "gc_satisfied", "hitting_worst", "c_geo", "weight_star", "cstar",
        "delta", "delta_auto", "c_obs", "observed_integral",
        "inequality_holds", "horizon", "hbar", "lattice_points",
        "support_radius", "config_hash")]
    rows.extend(f"caveat: {c}" for c in o.caveats)
    return "\n".join(rows) + "\n"


def emit_outputs(out_dir, cfg: SimConfig, reports=(), observation=None,
                 wall_time_s: float = 0.0, figures: bool = True) -> list:
    """Write series/figures/manifest under out_dir; returns written paths."""
    reports = list(reports)
    try:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for r in reports:
            sub = os.path.join(out_dir, _slug(r.label))
            os.makedirs(sub, exist_ok=True)
            spath = os.path.join(sub, "series.csv")
            with open(spath, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(series_csv_text(r))
            written.append(spath)
            if figures:
                fpath = os.path.join(sub, "figure.png")
                _render_figure(r, fpath)
                written.append(fpath)
        if observation is not None:
            opath = os.path.join(out_dir, "observation.txt")
            with open(opath, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(_observation_text(observation))
            written.append(opath)
        mpath = os.path.join(out_dir, "manifest.txt")
        with open(mpath, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(manifest_text(cfg, reports, observation, wall_time_s))
        written.append(mpath)
        return written
    except OSError as exc:
        raise IoFailure(f"cannot write outputs under {out_dir!r}: {exc}") from None
