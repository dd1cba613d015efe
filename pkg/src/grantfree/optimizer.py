"""Preamble-length optimization for grant-free and granted access."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .analytic import (
    SystemConfig,
    ase_derivatives,
    average_se,
    p1_stationary_point,
    spectral_efficiency,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

REPORT_COLUMNS = (
    "m", "n", "l", "snr_db", "p1", "p_star", "p_star_int", "p_hat_star",
    "ase_at_star", "se_at_hat_star", "iterations", "converged", "residual",
)


@dataclass
class OptimumReport:
    cfg: SystemConfig
    p1: float
    p_star: float
    p_star_int: int
    p_hat_star: float
    ase_at_star: float
    se_at_hat_star: float
    iterations: int
    converged: bool
    residual: float

    def row(self) -> dict:
        d = asdict(self)
        del d["cfg"]
        head = {"m": self.cfg.m_antennas, "n": self.cfg.n_ues,
                "l": self.cfg.packet_len, "snr_db": self.cfg.snr_db}
        return {**head, **d}

    def to_json(self) -> dict:
        return self.row()

    def csv_row(self) -> list:
        r = self.row()
        return [r[c] for c in REPORT_COLUMNS]


def grid_oracle(objective, lo: float, hi: float, resolution: float, *,
                vectorized: bool = False):
    """Exhaustive scan of ``objective`` on ``lo, lo + resolution, ..., hi``.

    ``hi`` is always included. Ties go to the smallest argument. Returns
    ``(argmax, max)``.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    n = int(math.floor((hi - lo) / resolution + 1e-9))
    xs = lo + resolution * np.arange(n + 1)
    xs = xs[xs < hi]
    xs = np.append(xs, hi)
    if vectorized:
        ys = np.asarray(objective(xs), dtype=float)
    else:
        ys = np.array([objective(float(x)) for x in xs], dtype=float)
    if not np.all(np.isfinite(ys)):
        raise ValueError("objective returned non-finite values")
    k = int(np.argmax(ys))
    return float(xs[k]), float(ys[k])


def golden_section_max(objective, lo: float, hi: float, tol: float = 1e-7,
                       max_iter: int = 500) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = objective(d)
    return (a + b) / 2.0


def optimize_granted(cfg: SystemConfig, lower: float | None = None,
                     coarse_points: int = 1024, tol: float = 1e-7) -> float:
    """Maximizer of the collision-free SE on ``[N, L]``.

    A coarse grid picks the bracket around its best point, golden-section
    search refines it, and the endpoints are kept if they do better.
    """
    lo = float(cfg.n_ues if lower is None else lower)
    hi = float(cfg.packet_len)
    if lo > hi:
        raise ValueError(f"granted access needs N <= L, got N={cfg.n_ues}, L={cfg.packet_len}")
    if lo == hi:
        return lo

    def se(x):
        return float(spectral_efficiency(cfg, x))

    xs = np.linspace(lo, hi, coarse_points)
    k = int(np.argmax(spectral_efficiency(cfg, xs)))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, coarse_points - 1)]
    x = golden_section_max(se, a, b, tol)
    return float(max((lo, x, hi), key=se))


def optimize_grant_free(cfg: SystemConfig, max_iter: int = 100) -> OptimumReport:
    """Maximize the average SE over ``[1, L]``.

    Newton iteration on the first derivative, started at P1 and kept inside
    the sign-change bracket ``[P1, L - eps]``; a step that leaves the bracket
    is replaced by bisection.
    """
    big_l = cfg.packet_len
    p1 = p1_stationary_point(cfg)
    p_hat = optimize_granted(cfg)
    se_hat = float(spectral_efficiency(cfg, p_hat))

    if cfg.n_ues == 1:
        p_star = optimize_granted(cfg, lower=1.0)
        return OptimumReport(
            cfg=cfg, p1=p1, p_star=p_star, p_star_int=_integer_choice(cfg, p_star),
            p_hat_star=p_hat, ase_at_star=float(average_se(cfg, p_star)),
            se_at_hat_star=se_hat, iterations=0, converged=True, residual=0.0,
        )

    lo, hi = p1, big_l - 1e-9 * big_l
    x = p1
    iterations = 0
    converged = False
    d1, d2 = ase_derivatives(cfg, x)
    if d1 <= 0:
        # only reachable through rounding when the optimum sits on P1
        converged = True
    while not converged and iterations < max_iter:
        iterations += 1
        if d1 > 0:
            lo = x
        else:
            hi = x
        step_ok = d2 < 0
        x_new = x - d1 / d2 if step_ok else math.nan
        if not (step_ok and lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        x = x_new
        d1, d2 = ase_derivatives(cfg, x)
        if abs(d1) <= 1e-12 * max(1.0, abs(d2)) or hi - lo <= 1e-9:
            converged = True

    return OptimumReport(
        cfg=cfg, p1=p1, p_star=float(x), p_star_int=_integer_choice(cfg, x),
        p_hat_star=p_hat, ase_at_star=float(average_se(cfg, x)),
        se_at_hat_star=se_hat, iterations=iterations, converged=converged,
        residual=float(abs(d1)),
    )


def _integer_choice(cfg: SystemConfig, p: float) -> int:
    lo = max(1, int(math.floor(p)))
    hi = min(cfg.packet_len, int(math.ceil(p)))
    # ties go to the shorter preamble
    return lo if average_se(cfg, lo) >= average_se(cfg, hi) else hi
