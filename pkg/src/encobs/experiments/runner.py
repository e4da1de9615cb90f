"""Sweep execution: one cell per (h, Lambda, schedule) or per h for certificate work."""
from __future__ import annotations

import csv
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..controller import write_transcript
from ..crypto import CryptoParams
from ..plant import mrms, run_closed_loop
from ..quantizer import GainSchedule
from ..stability.certificate import (
    NoAdmissibleGain,
    maximize_gamma,
    min_quantization_gain,
    read_certificate,
    solve_feasibility,
    write_certificate,
)
from ..stability.lmi import LmiProblem
from ..stability.solver import SolverOptions
from .config import ExperimentConfig
from .plants import resolve_plant
from .svg import line_plot

__all__ = ["ExperimentReport", "run", "cell_seed", "default_out_dir", "OUT_ENV"]

OUT_ENV = "ENCOBS_OUT"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "encobs-out"))


def cell_seed(seed: int, index: int) -> int:
    """Independent per-cell stream derived from (seed, cell index)."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class ExperimentReport:
    name: str
    kind: str
    out_dir: Path
    rows: list
    tables: dict = field(default_factory=dict)        # table name -> relative path
    traces: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    plots: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "rows": self.rows, "tables": self.tables,
                "traces": self.traces, "certificates": self.certificates, "plots": self.plots}


def _write_table(path: Path, rows: list[dict], columns: list[str]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in columns])


def _h_tag(h: float) -> str:
    return f"h{h:g}".replace(".", "p")


# -- certificate sweeps -----------------------------------------------------------

def _lambda_min_cell(args):
    cfg, h, cert_dir = args
    cr = resolve_plant(cfg.plant)
    problem = LmiProblem.from_realization(cr)
    opts = SolverOptions(tol=cfg.solver_tol)
    search = maximize_gamma(problem, h, ratio=cfg.gamma_ratio, options=opts)
    row = {"h": float(h), "feasible": search.certificate is not None, "gamma": None,
           "lambda_min": None, "certificate": None}
    if search.certificate is None:
        return row
    cert = search.certificate
    cert.plant = cfg.plant if isinstance(cfg.plant, str) else "custom"
    name = f"{_h_tag(h)}.cert"
    write_certificate(cert, Path(cert_dir) / name)
    row["gamma"] = float(cert.gamma)
    row["certificate"] = f"certificates/{name}"
    try:
        row["lambda_min"] = float(min_quantization_gain(cert, cr, h))
    except NoAdmissibleGain:
        pass
    return row


def _feasibility_cell(args):
    cfg, h, cert_dir = args
    cr = resolve_plant(cfg.plant)
    problem = LmiProblem.from_realization(cr)
    res = solve_feasibility(problem, h, SolverOptions(tol=cfg.solver_tol))
    row = {"h": float(h), "feasible": res.feasible, "status": res.status,
           "margin": float(res.solve.margin), "upper_bound": float(res.solve.upper_bound),
           "certificate": None}
    if res.feasible:
        cert = res.certificate
        cert.plant = cfg.plant if isinstance(cfg.plant, str) else "custom"
        name = f"{_h_tag(h)}.cert"
        write_certificate(cert, Path(cert_dir) / name)
        row["certificate"] = f"certificates/{name}"
    return row


# -- trajectories --------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    index: int
    h: float
    lam: float | None
    schedule: object


def trajectory_cells(cfg: ExperimentConfig, lams: dict | None = None) -> list[Cell]:
    """Expand the grids; ``lams`` maps h to a gain when lam is 'from-certificate'."""
    if cfg.mode == "ideal":
        lam_list = [None]
    elif cfg.lam == "from-certificate":
        lam_list = None
    else:
        lam_list = list(cfg.lam)
    if cfg.pairing == "zip":
        lists = [cfg.h, lam_list or [None], cfg.schedules]
        n = max(len(x) for x in lists)
        if any(len(x) not in (1, n) for x in lists):
            from .config import ConfigError
            raise ConfigError("zip pairing needs lists of equal length (or length 1)")
        combos = [tuple(x[i] if len(x) > 1 else x[0] for x in lists) for i in range(n)]
    else:
        combos = list(itertools.product(cfg.h, lam_list or [None], cfg.schedules))
    cells = []
    for i, (h, lam, s) in enumerate(combos):
        if cfg.mode != "ideal" and lam_list is None:
            lam = lams[h]
        cells.append(Cell(i, float(h), None if lam is None else float(lam), s))
    return cells


def _trajectory_cell(args):
    cfg, cell, run_dir = args
    cr = resolve_plant(cfg.plant)
    schedule = GainSchedule.from_dict(cell.schedule)
    seed = cell_seed(cfg.seed, cell.index)
    params = CryptoParams.with_bits(cfg.crypto.bits, cfg.crypto.n_key, omega=cfg.crypto.omega,
                                    e_max=cfg.crypto.e_max, seed=seed)
    transcript = [] if (cfg.transcripts and cfg.mode == "encrypted") else None
    trace = run_closed_loop(cr, cell.h, cell.lam, schedule, cfg.mode, horizon=cfg.horizon,
                            x0=cfg.x0, chi0=cfg.chi0, substeps=cfg.substeps,
                            crypto_params=params, seed=seed, transcript=transcript)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    trace.to_csv(run_dir / "trace.csv")
    row = {"cell": cell.index, "h": cell.h, "lam": cell.lam, "schedule": schedule.label(),
           "mode": cfg.mode, "norm_z0": float(trace.norm_z[0]),
           "norm_z_final": float(trace.norm_z[-1]),
           "max_abs_u": float(np.max(np.abs(trace.u))),
           "snap_max": float(np.max(trace.snap)), "mrms": None,
           "trace": f"runs/{run_dir.name}/trace.csv", "transcript": None}
    if cfg.mrms_window is not None:
        row["mrms"] = float(mrms(trace.y[:, 0], trace.t, cfg.mrms_window, cfg.mrms_at))
    if transcript is not None:
        header = {"plant": cfg.plant, "h": cell.h, "lam": cell.lam,
                  "schedule": schedule.to_dict(), "horizon": cfg.horizon, "x0": cfg.x0,
                  "chi0": cfg.chi0, "substeps": cfg.substeps, "seed": seed,
                  "crypto": {"bits": cfg.crypto.bits, "n_key": cfg.crypto.n_key,
                             "omega": cfg.crypto.omega, "e_max": cfg.crypto.e_max},
                  "crypto_gain": int(trace.info["crypto_gain"])}
        write_transcript(run_dir / "transcript.jsonl", header, trace.info["setup"], transcript)
        row["transcript"] = f"runs/{run_dir.name}/transcript.jsonl"
    # plot series: values at the sampling instants, i.e. rows of trace.csv
    stride = trace.substeps
    series = {"t": trace.t[::stride], "theta_e": trace.y[::stride, 0],
              "u": trace.u[::stride, 0], "norm_z": trace.norm_z[::stride]}
    return row, series


def _map(fn, jobs: int, items: list):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> ExperimentReport:
    """Execute ``cfg``; every artifact lands under ``out_dir`` and the report
    (``report.json``) lists them by relative path."""
    out = Path(out_dir) if out_dir is not None else default_out_dir() / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport(name=cfg.name, kind=cfg.kind, out_dir=out, rows=[])
    cert_dir = out / "certificates"
    if cfg.kind in ("lambda_min", "feasibility"):
        cert_dir.mkdir(exist_ok=True)
        fn = _lambda_min_cell if cfg.kind == "lambda_min" else _feasibility_cell
        rows = _map(fn, jobs, [(cfg, float(h), str(cert_dir)) for h in cfg.h])
        cols = (["h", "feasible", "gamma", "lambda_min", "certificate"] if cfg.kind == "lambda_min"
                else ["h", "feasible", "status", "margin", "upper_bound", "certificate"])
        _write_table(out / f"{cfg.name}.csv", rows, cols)
        report.rows = rows
        report.tables[cfg.name] = f"{cfg.name}.csv"
        report.certificates = [r["certificate"] for r in rows if r["certificate"]]
    else:
        lams = None
        if cfg.mode != "ideal" and cfg.lam == "from-certificate":
            lams = _lams_from_certificates(cfg, out, jobs)
            report.certificates = [f"certificates/{_h_tag(h)}.cert" for h in sorted(lams)]
        cells = trajectory_cells(cfg, lams)
        results = _map(_trajectory_cell, jobs,
                       [(cfg, c, str(out / "runs" / f"cell{c.index:03d}")) for c in cells])
        rows = [r for r, _ in results]
        cols = ["cell", "h", "lam", "schedule", "mode", "norm_z0", "norm_z_final", "max_abs_u",
                "snap_max", "mrms", "trace", "transcript"]
        _write_table(out / f"{cfg.name}.csv", rows, cols)
        report.rows = rows
        report.tables[cfg.name] = f"{cfg.name}.csv"
        report.traces = [r["trace"] for r in rows]
        if cfg.plots:
            report.plots = _plots(cfg, out, rows, [s for _, s in results])
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report


def _lams_from_certificates(cfg: ExperimentConfig, out: Path, jobs: int) -> dict:
    """Lambda_min per h from the largest-gamma certificate (reusing certificates on disk)."""
    cert_dir = out / "certificates"
    cert_dir.mkdir(exist_ok=True)
    cr = resolve_plant(cfg.plant)
    todo = []
    lams = {}
    for h in cfg.h:
        path = cert_dir / f"{_h_tag(h)}.cert"
        if path.exists():
            cert = read_certificate(path)
            lams[h] = min_quantization_gain(cert, cr, h)
        else:
            todo.append((cfg, float(h), str(cert_dir)))
    for row in _map(_lambda_min_cell, jobs, todo):
        if row["lambda_min"] is None:
            raise NoAdmissibleGain(f"no certificate or admissible gain at h={row['h']}")
        lams[row["h"]] = row["lambda_min"]
    return lams


def _plots(cfg, out: Path, rows, series) -> list[str]:
    pdir = out / "plots"
    pdir.mkdir(exist_ok=True)
    labels = [f"h={r['h']:g}, {r['schedule']}" + ("" if r["lam"] is None else f", L={r['lam']:g}")
              for r in rows]
    made = []
    for key, ylabel, logy in (("theta_e", "theta_e [rad]", False), ("u", "u [V]", False),
                              ("norm_z", "|z|", True)):
        path = pdir / f"{key}.svg"
        line_plot(path, [(lab, s["t"], s[key]) for lab, s in zip(labels, series)],
                  title=f"{cfg.name}: {key}", xlabel="t [s]", ylabel=ylabel, logy=logy)
        made.append(f"plots/{key}.svg")
    return made
