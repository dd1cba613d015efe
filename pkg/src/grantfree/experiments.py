"""Sweeps that regenerate the ASE-vs-P, optimum-vs-SNR and ASE-vs-M tables.

Each sweep returns a :class:`FigureTable`; :func:`write_table` stores it as a
CSV with a header row plus a JSON sidecar holding the resolved sweep and the
column documentation.
"""

from __future__ import annotations

import csv
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytic import SystemConfig, average_se
from .montecarlo import RNG_NAME, SINR_CAP, run_campaign
from .optimizer import optimize_grant_free

AXES = ("preamble_len", "snr_db", "m_antennas")
DEFAULT_SNR_GRID = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0)
DEFAULT_M_GRID = (100, 200, 300, 400, 500)
DEFAULT_FIG4_SNRS = (-10.0, 0.0)
DEFAULT_FIG6_SNRS = (-20.0, -10.0)
DEFAULT_POLICIES = ("p_star", "p1", "p_hat_star", "half_L")

FIG4_COLUMNS = ("snr_db", "m", "n", "l", "p", "analytic_ase", "empirical_ase",
                "ci_ase", "expect_ase", "trials", "seed")
FIG5_COLUMNS = ("snr_db", "m", "n", "l", "p_star", "p_hat_star", "p1", "converged")
FIG6_COLUMNS = ("snr_db", "m", "n", "l", "policy", "p", "ase")


class SweepError(ValueError):
    pass


_FIXED = re.compile(r"^fixed[:(]\s*([0-9.eE+-]+)\s*\)?$")


def parse_policy(name: str):
    """Return ``(kind, value)``; ``value`` is only set for ``fixed`` policies."""
    name = name.strip()
    if name in ("p_star", "p1", "p_hat_star", "half_L"):
        return name, None
    m = _FIXED.match(name)
    if m:
        return "fixed", float(m.group(1))
    raise SweepError(f"unknown policy {name!r}")


@dataclass
class SweepSpec:
    """One figure sweep.

    ``series`` holds the second axis: SNR values in dB for ``preamble_len``
    and ``m_antennas`` sweeps, antenna counts for ``snr_db`` sweeps. An empty
    series means "use the base configuration's value".
    """

    base: SystemConfig
    vary: str
    grid: tuple
    policies: tuple = ()
    trials: int = 0
    master_seed: int = 0
    series: tuple = ()

    def __post_init__(self):
        if self.vary not in AXES:
            raise SweepError(f"vary must be one of {AXES}, got {self.vary!r}")
        self.grid = tuple(self.grid)
        self.series = tuple(self.series)
        self.policies = tuple(self.policies)
        if not self.grid:
            raise SweepError("grid must not be empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise SweepError("grid must be strictly increasing")
        if int(self.trials) != self.trials or self.trials < 0:
            raise SweepError(f"trials must be a non-negative integer, got {self.trials}")
        for pol in self.policies:
            parse_policy(pol)

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(), "vary": self.vary, "grid": list(self.grid),
            "policies": list(self.policies), "trials": int(self.trials),
            "master_seed": int(self.master_seed), "series": list(self.series),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        base = d.pop("base", {}) or {}
        return cls(base=SystemConfig(**base), **d)


@dataclass
class AseCurve:
    axis: np.ndarray
    analytic: np.ndarray
    empirical: np.ndarray | None = None
    ci: np.ndarray | None = None
    expect: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.axis)
        for name in ("analytic", "empirical", "ci", "expect"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise SweepError(f"{name} has length {len(arr)}, expected {n}")


@dataclass
class FigureTable:
    name: str
    columns: tuple
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]


def point_seed(master_seed: int, *key: int) -> int:
    """Campaign seed of one grid point, derived from the sweep seed."""
    ss = np.random.SeedSequence([int(master_seed), *map(int, key)])
    return int(ss.generate_state(1, np.uint32)[0])


def _map(fn, items, parallelism):
    if parallelism > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _series(spec: SweepSpec, default):
    return spec.series if spec.series else default


def run_fig4(spec: SweepSpec, parallelism: int = 1) -> list[AseCurve]:
    """Analytic (and optionally simulated) ASE against the preamble length."""
    if spec.vary != "preamble_len":
        raise SweepError("fig4 sweeps vary preamble_len")
    base = spec.base
    grid = np.asarray(spec.grid, dtype=float)
    if grid[0] < 1 or grid[-1] > base.packet_len:
        raise SweepError(f"preamble grid must lie in [1, {base.packet_len}]")
    if spec.trials > 0 and np.any(grid != np.round(grid)):
        raise SweepError("simulated sweeps need an integer preamble grid")

    curves = []
    for si, snr in enumerate(_series(spec, (base.snr_db,))):
        cfg = base.replace(snr_db=float(snr))
        analytic = np.asarray(average_se(cfg, grid), dtype=float)
        meta = {"config": cfg.to_dict(), "trials": int(spec.trials),
                "master_seed": int(spec.master_seed)}
        if spec.trials == 0:
            curves.append(AseCurve(grid, analytic, metadata=meta))
            continue

        seeds = [point_seed(spec.master_seed, si, k) for k in range(len(grid))]

        def simulate(k, cfg=cfg, seeds=seeds):
            return run_campaign(cfg, int(grid[k]), spec.trials, seeds[k])

        results = _map(simulate, list(range(len(grid))), parallelism)
        meta["seeds"] = seeds
        curves.append(AseCurve(
            grid, analytic,
            empirical=np.array([r.mean_ase for r in results]),
            ci=np.array([r.ci_ase for r in results]),
            expect=np.array([r.expect_ase for r in results]),
            metadata=meta,
        ))
    return curves


def fig4_table(spec: SweepSpec, curves: list[AseCurve]) -> FigureTable:
    rows = []
    for curve in curves:
        cfg = curve.metadata["config"]
        seeds = curve.metadata.get("seeds")
        for k, p in enumerate(curve.axis):
            sim = curve.empirical is not None
            rows.append((
                cfg["snr_db"], cfg["m_antennas"], cfg["n_ues"], cfg["packet_len"],
                int(p) if float(p).is_integer() else float(p),
                float(curve.analytic[k]),
                float(curve.empirical[k]) if sim else "",
                float(curve.ci[k]) if sim else "",
                float(curve.expect[k]) if sim else "",
                int(spec.trials), seeds[k] if sim else "",
            ))
    return FigureTable("fig4", FIG4_COLUMNS, rows, _metadata(spec, FIG4_COLUMNS))


def run_fig5(spec: SweepSpec, parallelism: int = 1) -> FigureTable:
    """Grant-free and granted optimal preamble lengths against SNR."""
    if spec.vary != "snr_db":
        raise SweepError("fig5 sweeps vary snr_db")
    jobs = [(int(m), float(snr)) for m in _series(spec, (spec.base.m_antennas,))
            for snr in spec.grid]

    def solve(job):
        m, snr = job
        return optimize_grant_free(spec.base.replace(m_antennas=m, snr_db=snr))

    reports = _map(solve, jobs, parallelism)
    rows = [(r.cfg.snr_db, r.cfg.m_antennas, r.cfg.n_ues, r.cfg.packet_len,
             r.p_star, r.p_hat_star, r.p1, r.converged) for r in reports]
    meta = _metadata(spec, FIG5_COLUMNS)
    meta["monotone"] = fig5_monotone(rows)
    meta["all_converged"] = all(r.converged for r in reports)
    return FigureTable("fig5", FIG5_COLUMNS, rows, meta)


def fig5_monotone(rows, tol: float = 1e-6) -> bool:
    """True if ``p_star`` and ``p_hat_star`` never increase with SNR for each M."""
    by_m = {}
    for snr, m, _, _, p_star, p_hat, _, _ in rows:
        by_m.setdefault(m, []).append((snr, p_star, p_hat))
    for pts in by_m.values():
        pts.sort()
        for (_, a1, b1), (_, a2, b2) in zip(pts, pts[1:]):
            if a2 > a1 + tol or b2 > b1 + tol:
                return False
    return True


def policy_length(policy: str, report) -> float:
    kind, value = parse_policy(policy)
    if kind == "p_star":
        return report.p_star
    if kind == "p1":
        return report.p1
    if kind == "p_hat_star":
        return report.p_hat_star
    if kind == "half_L":
        return report.cfg.packet_len / 2.0
    if not 1 <= value <= report.cfg.packet_len:
        raise SweepError(f"fixed preamble length {value} outside [1, {report.cfg.packet_len}]")
    return value


def run_fig6(spec: SweepSpec, parallelism: int = 1) -> FigureTable:
    """ASE against antenna count under several preamble-length policies."""
    if spec.vary != "m_antennas":
        raise SweepError("fig6 sweeps vary m_antennas")
    if not spec.policies:
        raise SweepError("fig6 sweeps need at least one policy")
    jobs = [(float(snr), int(m)) for snr in _series(spec, (spec.base.snr_db,))
            for m in spec.grid]

    def solve(job):
        snr, m = job
        return optimize_grant_free(spec.base.replace(m_antennas=m, snr_db=snr))

    rows = []
    for report in _map(solve, jobs, parallelism):
        cfg = report.cfg
        for policy in spec.policies:
            p = policy_length(policy, report)
            rows.append((cfg.snr_db, cfg.m_antennas, cfg.n_ues, cfg.packet_len,
                         policy, p, float(average_se(cfg, p))))
    return FigureTable("fig6", FIG6_COLUMNS, rows, _metadata(spec, FIG6_COLUMNS))


def _metadata(spec: SweepSpec, columns) -> dict:
    return {
        "spec": spec.to_dict(),
        "columns": list(columns),
        "rng": RNG_NAME,
        "sinr_cap": SINR_CAP,
        "empirical_ase": "mean over slots of per-UE (1-P/L) log2(1+SINR), collided UEs count as 0",
        "expect_ase": "collision-free rate x (1-P/L) log2(1 + rho M^2 / mean interference-plus-noise)",
    }


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return v


def write_table(table: FigureTable, path, *, gnuplot: bool = False) -> Path:
    """Write ``table`` to ``path`` (CSV) plus ``<path>.json`` and optionally ``.gp``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps({"figure": table.name, **table.metadata},
                                  indent=2, sort_keys=True) + "\n")
    if gnuplot:
        path.with_suffix(".gp").write_text(_gnuplot_stub(table, path.name))
    return path


def _gnuplot_stub(table: FigureTable, csv_name: str) -> str:
    cols = {c: i + 1 for i, c in enumerate(table.columns)}
    head = f"set datafile separator ','\nset key autotitle columnhead\n"
    if table.name == "fig4":
        return head + (f"set xlabel 'P (symbols)'\nset ylabel 'ASE (bit/s/Hz)'\n"
                       f"plot '{csv_name}' using {cols['p']}:{cols['analytic_ase']} with lines, "
                       f"'' using {cols['p']}:{cols['empirical_ase']} with points\n")
    if table.name == "fig5":
        return head + (f"set xlabel 'SNR (dB)'\nset ylabel 'optimal P (symbols)'\n"
                       f"plot '{csv_name}' using {cols['snr_db']}:{cols['p_star']} with linespoints, "
                       f"'' using {cols['snr_db']}:{cols['p_hat_star']} with linespoints\n")
    return head + (f"set xlabel 'M'\nset ylabel 'ASE (bit/s/Hz)'\n"
                   f"plot '{csv_name}' using {cols['m']}:{cols['ase']} with points\n")
