"""Closed-form average spectral efficiency of grant-free random access.

All functions accept a scalar preamble length or a numpy array of them and
return values of the same shape. The preamble length is treated as a real
number here; rounding to an integer is left to the callers.

The model factors the average SE as ``f(P) * g(P)`` where

* ``f(P) = (1 - 1/P)**(N-1) * (1 - P/L)`` carries collisions and overhead,
* ``g(P) = log2(1 + SINR(P))`` carries the channel-estimation quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


class DomainError(ValueError):
    """Raised when an argument falls outside the model's valid domain."""


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters shared by every formula.

    ``snr_db`` is the uplink receive SNR per antenna (receive power over
    noise power) in dB; :attr:`rho` is its linear value.
    """

    m_antennas: int = 100
    n_ues: int = 10
    packet_len: int = 200
    snr_db: float = 0.0

    def __post_init__(self):
        for name in ("m_antennas", "n_ues", "packet_len"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise DomainError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.m_antennas < 1:
            raise DomainError(f"m_antennas must be >= 1, got {self.m_antennas}")
        if self.n_ues < 1:
            raise DomainError(f"n_ues must be >= 1, got {self.n_ues}")
        if self.packet_len < 2:
            raise DomainError(f"packet_len must be >= 2, got {self.packet_len}")
        if not math.isfinite(self.snr_db):
            raise DomainError(f"snr_db must be finite, got {self.snr_db}")
        object.__setattr__(self, "snr_db", float(self.snr_db))

    @property
    def rho(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def replace(self, **changes) -> "SystemConfig":
        fields = {
            "m_antennas": self.m_antennas,
            "n_ues": self.n_ues,
            "packet_len": self.packet_len,
            "snr_db": self.snr_db,
        }
        fields.update(changes)
        return SystemConfig(**fields)

    def to_dict(self) -> dict:
        return {
            "m_antennas": self.m_antennas,
            "n_ues": self.n_ues,
            "packet_len": self.packet_len,
            "snr_db": self.snr_db,
        }


def _as_p(p):
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)):
        raise DomainError("preamble length must be finite")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def _check_range(cfg: SystemConfig, p, *, upper=True):
    if np.any(p < 1.0):
        raise DomainError(f"preamble length must be >= 1, got min {np.min(p)}")
    if upper and np.any(p > cfg.packet_len):
        raise DomainError(
            f"preamble length must be <= packet_len={cfg.packet_len}, got max {np.max(p)}"
        )


def collision_free_prob(cfg: SystemConfig, p):
    """Probability that a tagged UE's preamble is picked by no other UE."""
    p = _as_p(p)
    _check_range(cfg, p, upper=False)
    if cfg.n_ues == 1:
        return _out(np.ones_like(p))
    # 0**(N-1) == 0 at P == 1, no special case needed
    return _out((1.0 - 1.0 / p) ** (cfg.n_ues - 1))


def _sinr_denominator(cfg: SystemConfig, p):
    rho = cfg.rho
    n = cfg.n_ues
    return n / p + (n - 1) * rho + 1.0 + 1.0 / (rho * p)


def asymptotic_sinr(cfg: SystemConfig, p):
    """Large-array SINR of a non-collided UE with LS estimate and CB detection.

    ``M rho / (N/P + (N-1) rho + 1 + 1/(rho P))``
    """
    p = _as_p(p)
    _check_range(cfg, p, upper=False)
    if not cfg.rho > 0:
        raise DomainError("linear SNR must be positive")
    return _out(cfg.m_antennas * cfg.rho / _sinr_denominator(cfg, p))


def spectral_efficiency(cfg: SystemConfig, p):
    """Overhead-discounted rate ``(1 - P/L) log2(1 + SINR)`` of a non-collided UE."""
    p = _as_p(p)
    _check_range(cfg, p)
    sinr = cfg.m_antennas * cfg.rho / _sinr_denominator(cfg, p)
    return _out((1.0 - p / cfg.packet_len) * np.log2(1.0 + sinr))


def average_se(cfg: SystemConfig, p):
    """Collision-free probability times :func:`spectral_efficiency`."""
    p = _as_p(p)
    _check_range(cfg, p)
    return _out(
        np.asarray(collision_free_prob(cfg, p)) * np.asarray(spectral_efficiency(cfg, p))
    )


def p1_stationary_point(cfg: SystemConfig) -> float:
    """Stationary point of ``f``; the optimum lies in ``[P1, L]``.

    Positive root of ``P**2 + (N-2) P - (N-1) L = 0``. For ``N == 1`` this
    returns 1 (``f`` is then strictly decreasing on the whole range).
    """
    n, big_l = cfg.n_ues, cfg.packet_len
    disc = n * n + 4 * n * (big_l - 1) + 4 - 4 * big_l
    return (-n + 2 + math.sqrt(disc)) / 2.0


def overhead_collision_factor(cfg: SystemConfig, p):
    """Return ``(f, f', f'')`` at ``p`` (open interval ``1 < p``)."""
    p = _as_p(p)
    n, big_l = cfg.n_ues, cfg.packet_len
    a = 1.0 - 1.0 / p
    b = 1.0 - p / big_l
    da, d2a = 1.0 / p**2, -2.0 / p**3
    db = -1.0 / big_l
    k = n - 1
    u = a**k
    if k == 0:
        du = np.zeros_like(p)
        d2u = np.zeros_like(p)
    else:
        du = k * a ** (k - 1) * da
        d2u = k * a ** (k - 1) * d2a
        if k >= 2:
            d2u = d2u + k * (k - 1) * a ** (k - 2) * da**2
    f = u * b
    df = du * b + u * db
    d2f = d2u * b + 2.0 * du * db
    return _out(f), _out(df), _out(d2f)


def rate_factor(cfg: SystemConfig, p):
    """Return ``(g, g', g'')`` where ``g = log2(1 + SINR(P))``."""
    p = _as_p(p)
    rho = cfg.rho
    n = cfg.n_ues
    scale = cfg.m_antennas * rho
    c1 = n + 1.0 / rho
    den = _sinr_denominator(cfg, p)
    dden = -c1 / p**2
    d2den = 2.0 * c1 / p**3
    s = scale / den
    ds = -scale * dden / den**2
    d2s = scale * (2.0 * dden**2 / den**3 - d2den / den**2)
    g = np.log1p(s) / LN2
    dg = ds / ((1.0 + s) * LN2)
    d2g = (d2s * (1.0 + s) - ds**2) / ((1.0 + s) ** 2 * LN2)
    return _out(g), _out(dg), _out(d2g)


def ase_derivatives(cfg: SystemConfig, p):
    """First and second derivative of :func:`average_se` with respect to P.

    Valid on the open interval ``1 < P < L``.
    """
    p = _as_p(p)
    if np.any(p <= 1.0) or np.any(p >= cfg.packet_len):
        raise DomainError(
            f"derivatives need 1 < P < {cfg.packet_len}, got range "
            f"[{np.min(p)}, {np.max(p)}]"
        )
    f, df, d2f = (np.asarray(v) for v in overhead_collision_factor(cfg, p))
    g, dg, d2g = (np.asarray(v) for v in rate_factor(cfg, p))
    first = df * g + f * dg
    second = d2f * g + f * d2g + 2.0 * df * dg
    return _out(first), _out(second)
