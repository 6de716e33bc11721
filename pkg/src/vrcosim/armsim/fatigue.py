"""Three-compartment fatigue model with rest recovery (3CC-r).

Each unit tracks the percentage of resting (``m_r``), active (``m_a``) and
fatigued (``m_f``) motor units. Here a unit is one joint's torque motor and
its target load is ``100 * |a_agonist - a_antagonist|`` (%MVC).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import N_DOF, FatigueParams


@dataclass
class FatigueState:
    m_r: np.ndarray = field(default_factory=lambda: np.full(N_DOF, 100.0))
    m_a: np.ndarray = field(default_factory=lambda: np.zeros(N_DOF))
    m_f: np.ndarray = field(default_factory=lambda: np.zeros(N_DOF))
    params: FatigueParams = field(default_factory=FatigueParams)

    @classmethod
    def rested(cls, params: FatigueParams | None = None, n_units: int = N_DOF) -> "FatigueState":
        return cls(np.full(n_units, 100.0), np.zeros(n_units), np.zeros(n_units), params or FatigueParams())

    def copy(self) -> "FatigueState":
        return FatigueState(self.m_r.copy(), self.m_a.copy(), self.m_f.copy(), self.params)

    @property
    def fatigued_fraction(self) -> float:
        """Mean over units of m_f / 100."""
        return float(np.mean(self.m_f) / 100.0)


def target_load(activations) -> np.ndarray:
    a = np.asarray(activations, dtype=float)
    return 100.0 * np.abs(a[0::2] - a[1::2])


@njit(cache=True)
def _deriv(m_r, m_a, m_f, tl, F, R, r, LD, LR):
    deficit = tl - m_a
    if m_a < tl:
        c = LD * deficit if m_r >= deficit else LD * m_r
    else:
        c = LR * deficit
    r_eff = r * R if (tl < m_a or tl == 0.0) else R
    return -c + r_eff * m_f, c - F * m_a, F * m_a - r_eff * m_f


def derivatives(m_r, m_a, m_f, tl, p: FatigueParams):
    """Time derivatives (d m_r, d m_a, d m_f) of one unit."""
    return _deriv(float(m_r), float(m_a), float(m_f), float(tl), p.F, p.R, p.r, p.LD, p.LR)


@njit(cache=True)
def _rk4(m_r, m_a, m_f, tl, dt, F, R, r, LD, LR):
    for i in range(m_r.shape[0]):
        r0 = m_r[i]
        a0 = m_a[i]
        f0 = m_f[i]
        t = tl[i]
        h2 = 0.5 * dt
        k1r, k1a, k1f = _deriv(r0, a0, f0, t, F, R, r, LD, LR)
        k2r, k2a, k2f = _deriv(r0 + h2 * k1r, a0 + h2 * k1a, f0 + h2 * k1f, t, F, R, r, LD, LR)
        k3r, k3a, k3f = _deriv(r0 + h2 * k2r, a0 + h2 * k2a, f0 + h2 * k2f, t, F, R, r, LD, LR)
        k4r, k4a, k4f = _deriv(r0 + dt * k3r, a0 + dt * k3a, f0 + dt * k3f, t, F, R, r, LD, LR)
        w = dt / 6.0
        nr = r0 + w * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        na = a0 + w * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        nr = min(max(nr, 0.0), 100.0)
        na = min(max(na, 0.0), 100.0 - nr)
        m_r[i] = nr
        m_a[i] = na
        m_f[i] = max(100.0 - nr - na, 0.0)


def fatigue_step(fstate: FatigueState, load, dt: float) -> FatigueState:
    """Advance by ``dt`` with one classical RK4 step at constant target load.

    ``m_f`` is recovered from the conservation law so that the three
    compartments sum to 100 up to rounding of a single subtraction.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    tl = np.clip(np.asarray(load, dtype=float), 0.0, 100.0)
    p = fstate.params
    m_r = fstate.m_r.astype(float).copy()
    m_a = fstate.m_a.astype(float).copy()
    m_f = fstate.m_f.astype(float).copy()
    _rk4(m_r, m_a, m_f, tl, float(dt), p.F, p.R, p.r, p.LD, p.LR)
    return FatigueState(m_r, m_a, m_f, p)


_UNIT = struct.Struct("<3d")


def pack_fatigue_state(fstate: FatigueState) -> bytes:
    n = len(fstate.m_r)
    out = [struct.pack("<H", n)]
    for i in range(n):
        out.append(_UNIT.pack(fstate.m_r[i], fstate.m_a[i], fstate.m_f[i]))
    return b"".join(out)


def unpack_fatigue_state(data: bytes, params: FatigueParams | None = None) -> FatigueState:
    (n,) = struct.unpack_from("<H", data, 0)
    vals = np.array([_UNIT.unpack_from(data, 2 + i * _UNIT.size) for i in range(n)]).reshape(n, 3)
    return FatigueState(vals[:, 0].copy(), vals[:, 1].copy(), vals[:, 2].copy(), params or FatigueParams())
