"""Whac-A-Mole game state: spawning, expiry, hit detection and curriculum.

Spawning and expiry are event driven: within one ``spawn_update(dt)`` call
events are processed at their exact times, so a target that expires mid-step
frees its slot for a spawn at that same instant. The spawn-interval timer
starts at the previous spawn; if the interval elapses while the area is full,
the spawn happens as soon as a slot frees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..seeding import make_rng
from .config import GRID_SIZE, N_CELLS, GameConfig, TargetArea, target_area


class TargetStatus(Enum):
    ACTIVE = "active"
    HIT = "hit"
    EXPIRED = "expired"


class Outcome(Enum):
    HIT = "hit"
    SLOW_CONTACT = "slow_contact"


@dataclass
class Target:
    cell: int
    position: np.ndarray
    spawn_time: float
    age: float = 0.0
    status: TargetStatus = TargetStatus.ACTIVE
    in_contact: bool = False

    @property
    def grid_index(self) -> tuple[int, int]:
        return divmod(self.cell, GRID_SIZE)


@dataclass
class CurriculumState:
    """Counters of the previous episode and the resulting spawn distribution."""

    spawns: np.ndarray = field(default_factory=lambda: np.zeros(N_CELLS, dtype=np.int64))
    misses: np.ndarray = field(default_factory=lambda: np.zeros(N_CELLS, dtype=np.int64))

    def fail_rates(self) -> np.ndarray:
        return self.misses / np.maximum(1, self.spawns)

    def distribution(self) -> np.ndarray:
        return curriculum_distribution(self.fail_rates())


def curriculum_distribution(fail_rates) -> np.ndarray:
    """Half uniform, half proportional to the fail rates (uniform if all zero)."""
    fr = np.asarray(fail_rates, dtype=float)
    total = fr.sum()
    if total <= 0.0:
        return np.full(N_CELLS, 1.0 / N_CELLS)
    return 0.5 / N_CELLS + 0.5 * fr / total


def curriculum_sample(probs, rng: np.random.Generator, allowed=None) -> int:
    """Draw a cell index, optionally restricted to ``allowed`` (bool mask)."""
    p = np.asarray(probs, dtype=float)
    if allowed is not None:
        p = np.where(allowed, p, 0.0)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, N_CELLS - 1)
    # guard against landing on a zero-probability cell at the cdf boundary
    while p[idx] == 0.0:
        idx -= 1
    return idx


@dataclass
class Counters:
    hits: int = 0
    misses: int = 0
    slow_contacts: int = 0
    spawns: np.ndarray = field(default_factory=lambda: np.zeros(N_CELLS, dtype=np.int64))
    cell_hits: np.ndarray = field(default_factory=lambda: np.zeros(N_CELLS, dtype=np.int64))
    cell_misses: np.ndarray = field(default_factory=lambda: np.zeros(N_CELLS, dtype=np.int64))


class Game:
    """One round of the game in the app frame."""

    def __init__(self, config: GameConfig, curriculum: CurriculumState | None = None,
                 hmd_position=(0.0, 0.0, 0.0), hmd_orientation=(1.0, 0.0, 0.0, 0.0)):
        self.config = config
        self.curriculum = curriculum or CurriculumState()
        if config.curriculum == "adaptive":
            self.cell_probs = self.curriculum.distribution()
        else:
            self.cell_probs = np.full(N_CELLS, 1.0 / N_CELLS)
        self.spawn_rng = make_rng(config.seed, "spawn-timing")
        self.cell_rng = make_rng(config.seed, "curriculum")
        self.area: TargetArea = target_area(config, hmd_position, hmd_orientation)
        self.clock = 0.0
        self.targets: list[Target] = []
        self.counters = Counters()
        self.spawn_log: list[tuple[float, int]] = []
        self.intervals: list[float] = []
        self.next_spawn_time = 0.0
        self._spawn(0.0)

    # -- state -------------------------------------------------------------
    @property
    def score(self) -> int:
        return self.counters.hits

    @property
    def active(self) -> list[Target]:
        return [t for t in self.targets if t.status is TargetStatus.ACTIVE]

    @property
    def finished(self) -> bool:
        return self.clock >= self.config.round_duration

    @property
    def time_feature(self) -> float:
        return max(0.0, 1.0 - self.clock / self.config.round_duration)

    def set_hmd(self, position, orientation) -> None:
        """Move the target area with the head; active targets keep their cell."""
        self.area = target_area(self.config, position, orientation)
        for t in self.active:
            t.position = self.area.cells[t.cell].copy()

    # -- spawning ----------------------------------------------------------
    def _spawn(self, now: float) -> None:
        occupied = np.zeros(N_CELLS, dtype=bool)
        for t in self.active:
            occupied[t.cell] = True
        cell = curriculum_sample(self.cell_probs, self.cell_rng, ~occupied)
        self.targets.append(Target(cell, self.area.cells[cell].copy(), now))
        self.counters.spawns[cell] += 1
        self.spawn_log.append((now, cell))
        interval = float(self.spawn_rng.uniform(0.0, self.config.spawn_interval_max))
        self.intervals.append(interval)
        self.next_spawn_time = now + interval

    def _expire_due(self, now: float) -> None:
        lifespan = self.config.target_lifespan
        for t in self.targets:
            if t.status is TargetStatus.ACTIVE and t.spawn_time + lifespan <= now:
                t.status = TargetStatus.EXPIRED
                t.age = lifespan
                self.counters.misses += 1
                self.counters.cell_misses[t.cell] += 1

    def spawn_update(self, dt: float) -> None:
        self.advance_to(self.clock + dt)

    def advance_to(self, t_end: float) -> None:
        """Process expiries and spawns up to and including ``t_end``."""
        cap = self.config.max_targets
        lifespan = self.config.target_lifespan
        now = self.clock
        while True:
            active = self.active
            if not active:
                self._spawn(now)
                continue
            t_exp = min(t.spawn_time + lifespan for t in active)
            t_spawn = max(self.next_spawn_time, now) if len(active) < cap else math.inf
            if min(t_exp, t_spawn) > t_end:
                break
            if t_exp <= t_spawn:
                now = t_exp
                self._expire_due(now)
            else:
                now = t_spawn
                self._spawn(now)
        self.clock = t_end
        self._drop_resolved()
        for t in self.targets:
            t.age = min(t_end - t.spawn_time, lifespan)

    def _drop_resolved(self) -> None:
        self.targets = [t for t in self.targets if t.status is TargetStatus.ACTIVE]

    def refill(self) -> None:
        """Spawn immediately when the area is empty (e.g. right after a hit)."""
        if not self.active:
            self._spawn(self.clock)

    # -- hits --------------------------------------------------------------
    def check_hit(self, tip, velocity) -> list[tuple[Target, Outcome]]:
        cfg = self.config
        tip = np.asarray(tip, dtype=float)
        v_axis = float(np.dot(np.asarray(velocity, dtype=float), self.area.hit_axis))
        reach = cfg.target_radius + cfg.hammer_radius
        events = []
        for t in self.active:
            contact = float(np.linalg.norm(tip - t.position)) <= reach
            if not contact:
                t.in_contact = False
                continue
            if not cfg.constrained or v_axis >= cfg.velocity_threshold:
                t.status = TargetStatus.HIT
                self.counters.hits += 1
                self.counters.cell_hits[t.cell] += 1
                events.append((t, Outcome.HIT))
            elif not t.in_contact:
                self.counters.slow_contacts += 1
                events.append((t, Outcome.SLOW_CONTACT))
            t.in_contact = True
        self._drop_resolved()
        return events

    def next_curriculum(self) -> CurriculumState:
        """Counters of this round, to drive the next round's distribution."""
        return CurriculumState(self.counters.spawns.copy(), self.counters.cell_misses.copy())
