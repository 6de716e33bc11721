"""Torque-actuated rigid-body dynamics of the 3-DOF arm.

The arm is modelled as three point masses (upper-arm midpoint, forearm
midpoint, controller at the hammer tip) plus a rotor inertia per joint.
Each DOF is driven by an agonist/antagonist pair of first-order activation
units. The inner loop is compiled with numba because it runs ten physics
substeps per control step.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import N_ACTUATORS, N_DOF, ArmModel

N_SUBSTEPS = 10


class SimulationDiverged(RuntimeError):
    pass


@dataclass
class ArmState:
    q: np.ndarray = field(default_factory=lambda: np.zeros(N_DOF))
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(N_DOF))
    activations: np.ndarray = field(default_factory=lambda: np.zeros(N_ACTUATORS))
    qddot: np.ndarray = field(default_factory=lambda: np.zeros(N_DOF))

    def copy(self) -> "ArmState":
        return ArmState(self.q.copy(), self.qdot.copy(), self.activations.copy(), self.qddot.copy())

    def __eq__(self, other):
        if not isinstance(other, ArmState):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("q", "qdot", "activations", "qddot")
        )


def rest_state(model: ArmModel) -> ArmState:
    q = np.clip(np.zeros(N_DOF), model.joint_lower, model.joint_upper)
    return ArmState(q=q)


# --------------------------------------------------------------------------
# compiled kernel
# --------------------------------------------------------------------------
@njit(cache=True)
def _term(beta, ca, sa, vx, vy, vz, bdot, adot):
    """Point ``R_y(a) R_x(beta) v``: (position, d/dbeta, d/da, J-dot q-dot)."""
    cb = math.cos(beta)
    sb = math.sin(beta)
    wx = vx
    wy = vy * cb - vz * sb
    wz = vy * sb + vz * cb
    by = -vy * sb - vz * cb
    bz = vy * cb - vz * sb
    px = wx * ca + wz * sa
    py = wy
    pz = -wx * sa + wz * ca
    jbx = bz * sa
    jby = by
    jbz = bz * ca
    jax = -wx * sa + wz * ca
    jaz = -wx * ca - wz * sa
    # R_y w_bb b^2 + 2 R_y' w_b b a' + R_y'' w a'^2, with w_bb = (0, -wy, -wz)
    b2 = bdot * bdot
    ab2 = 2.0 * bdot * adot
    a2 = adot * adot
    accx = (-wz * sa) * b2 + (bz * ca) * ab2 - (wx * ca + wz * sa) * a2
    accy = -wy * b2
    accz = (-wz * ca) * b2 + (-bz * sa) * ab2 + (wx * sa - wz * ca) * a2
    return px, py, pz, jbx, jby, jbz, jax, jaz, accx, accy, accz


@njit(cache=True)
def _dynamics_terms(q, qd, geom):
    """Return mass matrix M (3x3), bias force (gravity - J^T m Jdot qdot), and
    the world y of each point mass (for potential energy)."""
    l1 = geom[0]
    l2 = geom[1]
    m1 = geom[2]
    m2 = geom[3]
    m3 = geom[4]
    ox = geom[5]
    oy = geom[6]
    oz = geom[7]
    grav = geom[8]
    arm = geom[9]
    e = q[0]
    a = q[1]
    k = q[2]
    ed = qd[0]
    ad = qd[1]
    kd = qd[2]
    ca = math.cos(a)
    sa = math.sin(a)

    M = np.zeros((3, 3))
    bias = np.zeros(3)
    ys = np.zeros(3)
    J = np.zeros((3, 3))
    for point in range(3):
        J[:, :] = 0.0
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        py = 0.0
        if point == 0:
            mass = m1
            nterms = 1
        elif point == 1:
            mass = m2
            nterms = 2
        else:
            mass = m3
            nterms = 2
        for t in range(nterms):
            if t == 0:
                beta = e
                bdot = ed
                vx = 0.0
                vy = -l1 * 0.5 if point == 0 else -l1
                vz = 0.0
            else:
                beta = e + k
                bdot = ed + kd
                if point == 1:
                    vx = 0.0
                    vy = -l2 * 0.5
                    vz = 0.0
                else:
                    vx = ox
                    vy = oy - l2
                    vz = oz
            r = _term(beta, ca, sa, vx, vy, vz, bdot, ad)
            py += r[1]
            J[0, 0] += r[3]
            J[1, 0] += r[4]
            J[2, 0] += r[5]
            J[0, 1] += r[6]
            J[2, 1] += r[7]
            if t == 1:
                J[0, 2] += r[3]
                J[1, 2] += r[4]
                J[2, 2] += r[5]
            acc0 += r[8]
            acc1 += r[9]
            acc2 += r[10]
        ys[point] = py
        for i in range(3):
            for j in range(3):
                M[i, j] += mass * (J[0, i] * J[0, j] + J[1, i] * J[1, j] + J[2, i] * J[2, j])
            bias[i] += mass * (J[0, i] * (-acc0) + J[1, i] * (-grav - acc1) + J[2, i] * (-acc2))
    for i in range(3):
        M[i, i] += arm
    return M, bias, ys


@njit(cache=True)
def _solve3(M, f):
    a = M[0, 0]
    b = M[0, 1]
    c = M[0, 2]
    d = M[1, 0]
    e = M[1, 1]
    g = M[1, 2]
    h = M[2, 0]
    i = M[2, 1]
    j = M[2, 2]
    det = a * (e * j - g * i) - b * (d * j - g * h) + c * (d * i - e * h)
    x = np.empty(3)
    x[0] = (f[0] * (e * j - g * i) - b * (f[1] * j - g * f[2]) + c * (f[1] * i - e * f[2])) / det
    x[1] = (a * (f[1] * j - g * f[2]) - f[0] * (d * j - g * h) + c * (d * f[2] - f[1] * h)) / det
    x[2] = (a * (e * f[2] - f[1] * i) - b * (d * f[2] - f[1] * h) + f[0] * (d * i - e * h)) / det
    return x


@njit(cache=True)
def _integrate(q, qd, act, u, geom, max_torque, damping, tau, lower, upper, locked, dt, nsub):
    h = dt / nsub
    alpha = 1.0 - math.exp(-h / tau)
    for _ in range(nsub):
        for n in range(act.shape[0]):
            act[n] += (u[n] - act[n]) * alpha
        M, bias, _ys = _dynamics_terms(q, qd, geom)
        f = np.empty(3)
        for i in range(3):
            f[i] = max_torque[i] * (act[2 * i] - act[2 * i + 1]) - damping * qd[i] + bias[i]
        for i in range(3):
            if locked[i]:
                for j in range(3):
                    M[i, j] = 0.0
                    M[j, i] = 0.0
                M[i, i] = 1.0
                f[i] = 0.0
        qdd = _solve3(M, f)
        for i in range(3):
            qd[i] += h * qdd[i]
            q[i] += h * qd[i]
            if q[i] < lower[i]:
                q[i] = lower[i]
                if qd[i] < 0.0:
                    qd[i] = 0.0
            elif q[i] > upper[i]:
                q[i] = upper[i]
                if qd[i] > 0.0:
                    qd[i] = 0.0


def _geometry(model: ArmModel) -> np.ndarray:
    ox, oy, oz = model.hammer_offset.position
    return np.array(
        [
            model.upper_arm_length,
            model.forearm_length,
            model.upper_arm_mass,
            model.forearm_mass,
            model.controller_mass,
            ox,
            oy,
            oz,
            model.gravity,
            model.armature,
        ]
    )


class Dynamics:
    """Pre-packed model constants for repeated stepping."""

    def __init__(self, model: ArmModel, locked=(False, False, False), n_substeps: int = N_SUBSTEPS):
        self.model = model
        self.geom = _geometry(model)
        self.max_torque = np.asarray(model.max_torque, dtype=float)
        self.lower = np.asarray(model.joint_lower, dtype=float)
        self.upper = np.asarray(model.joint_upper, dtype=float)
        self.locked = np.asarray(locked, dtype=np.bool_)
        self.n_substeps = n_substeps

    def step(self, state: ArmState, controls, dt: float) -> ArmState:
        if not dt > 0:
            raise ValueError("dt must be positive")
        u = np.clip(np.asarray(controls, dtype=float), 0.0, 1.0)
        if u.shape != (N_ACTUATORS,):
            raise ValueError(f"expected {N_ACTUATORS} controls, got shape {u.shape}")
        q = state.q.astype(float).copy()
        qd = state.qdot.astype(float).copy()
        act = state.activations.astype(float).copy()
        qd[self.locked] = 0.0
        _integrate(
            q, qd, act, u, self.geom, self.max_torque, self.model.damping,
            self.model.activation_time_constant, self.lower, self.upper, self.locked, dt, self.n_substeps,
        )
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd)) and np.all(np.isfinite(act))):
            raise SimulationDiverged("non-finite arm state")
        np.clip(act, 0.0, 1.0, out=act)
        qdd = (qd - state.qdot) / dt
        return ArmState(q, qd, act, qdd)

    def mass_matrix(self, q) -> np.ndarray:
        M, _, _ = _dynamics_terms(np.asarray(q, float), np.zeros(3), self.geom)
        return M

    def bias_force(self, q, qdot) -> np.ndarray:
        _, bias, _ = _dynamics_terms(np.asarray(q, float), np.asarray(qdot, float), self.geom)
        return bias

    def energy(self, state: ArmState) -> float:
        """Kinetic plus gravitational potential energy (J)."""
        M, _, ys = _dynamics_terms(state.q.astype(float), np.zeros(3), self.geom)
        kinetic = 0.5 * float(state.qdot @ M @ state.qdot)
        masses = self.geom[2:5]
        potential = float(self.model.gravity * np.dot(masses, ys))
        return kinetic + potential


def step_dynamics(model: ArmModel, state: ArmState, controls, dt: float) -> ArmState:
    return Dynamics(model).step(state, controls, dt)


_SNAPSHOT = struct.Struct("<" + "d" * (3 * N_DOF + N_ACTUATORS))


def pack_arm_state(state: ArmState) -> bytes:
    return _SNAPSHOT.pack(*state.q, *state.qdot, *state.activations, *state.qddot)


def unpack_arm_state(data: bytes) -> ArmState:
    vals = np.array(_SNAPSHOT.unpack(data))
    return ArmState(vals[0:3], vals[3:6], vals[6:12], vals[12:15])
