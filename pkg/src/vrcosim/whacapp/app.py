"""The Whac-A-Mole application served over the bridge protocol."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from ..bridge.errors import ProtocolViolation
from ..bridge.messages import PROTOCOL_VERSION, Hello, HelloAck, ObservationMsg, RgbdImage, StateUpdateMsg
from .config import N_CELLS, GameConfig
from .game import CurriculumState, Game, Outcome
from .render import Camera, Scene, SceneTarget, render_rgbd
from .reward import RewardBreakdown, compute_reward

log = logging.getLogger(__name__)


class WhacApp:
    """Game logic, reward and rendering behind the ``BridgeApp`` interface.

    After HELLO a default round (``config``) is running, so a client may step
    without an explicit RESET. Each RESET starts a new round with the given
    overrides; the adaptive curriculum carries counters from the previous
    round. Finished rounds are appended to ``episodes`` and, when
    ``log_path`` is set, written as JSON lines.
    """

    def __init__(self, config: GameConfig | None = None, log_path: str | Path | None = None,
                 vertical_fov: float = 90.0):
        self.base_config = config or GameConfig()
        self.log_path = Path(log_path) if log_path is not None else None
        self.vertical_fov = vertical_fov
        self.camera = Camera(120, 80, vertical_fov)
        self.episodes: list[dict] = []
        self.episode_index = -1
        self.render_count = 0
        self.game: Game | None = None
        self.last_reward: RewardBreakdown | None = None
        self._curriculum = CurriculumState()

    # -- BridgeApp ---------------------------------------------------------
    def on_hello(self, hello: Hello) -> HelloAck:
        if hello.version != PROTOCOL_VERSION:
            raise ProtocolViolation(f"unsupported protocol version {hello.version}")
        self.camera = Camera(hello.width, hello.height, self.vertical_fov)
        self._start(self.base_config)
        return HelloAck(PROTOCOL_VERSION, hello.dt, hello.width, hello.height, hello.channels)

    def on_reset(self, config: dict[str, str]) -> ObservationMsg:
        try:
            cfg = self.base_config.with_episode_config(config)
        except (TypeError, ValueError) as exc:
            raise ProtocolViolation(f"bad episode config: {exc}") from None
        self._close_episode()
        self._start(cfg)
        return ObservationMsg(self._render(None), 0.0, False, self.game.time_feature, self._log_entries(None))

    def on_update(self, update: StateUpdateMsg) -> ObservationMsg:
        game = self.game
        if game is None:
            raise ProtocolViolation("STATE_UPDATE before any episode started")
        hmd = update.hmd
        if hmd.position != self._hmd[0] or hmd.orientation != self._hmd[1]:
            self._hmd = (hmd.position, hmd.orientation)
            game.set_hmd(hmd.position, hmd.orientation)

        game.advance_to(update.t_next)

        tip = np.asarray(update.controllers[0].position, dtype=float) if update.controllers else None
        velocity = np.zeros(3)
        if tip is not None and self._prev_tip is not None:
            velocity = (tip - self._prev_tip) / (update.t_next - update.t_current)
        self._prev_tip = tip
        v_h = float(np.linalg.norm(velocity))

        events = game.check_hit(tip, velocity) if tip is not None else []
        n_hits = sum(1 for _, o in events if o is Outcome.HIT)
        n_slow = len(events) - n_hits
        self._fatigue = float(update.extension("fatigue", 0.0))
        self._max_fatigue = max(self._max_fatigue, self._fatigue)
        reward = compute_reward(
            game.config.weights, n_hits, n_slow, tip,
            [t.position for t in game.active], self._fatigue, v_h,
        )
        self.last_reward = reward
        game.refill()

        self._steps += 1
        self._hit_speeds.extend([v_h] * n_hits)
        if tip is not None:
            self._depths.append(game.area.depth_of(tip))
        self._reward_sum += reward.total

        image = self._render(tip)
        finished = game.finished
        entries = self._log_entries(tip, reward, n_hits, n_slow)
        if finished:
            self._close_episode()
        return ObservationMsg(image, reward.total, finished, game.time_feature, entries)

    # -- episodes ----------------------------------------------------------
    def _start(self, cfg: GameConfig) -> None:
        if self.game is not None:
            self._curriculum = self.game.next_curriculum()
        self.episode_index += 1
        self._hmd = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))
        self.game = Game(cfg, self._curriculum, *self._hmd)
        self._prev_tip = None
        self._steps = 0
        self._fatigue = 0.0
        self._max_fatigue = 0.0
        self._hit_speeds: list[float] = []
        self._depths: list[float] = []
        self._reward_sum = 0.0
        self._logged = False

    def episode_record(self) -> dict:
        game = self.game
        c = game.counters
        cfg = game.config
        return {
            "episode": self.episode_index,
            "hits": int(c.hits),
            "misses": int(c.misses),
            "slow_contacts": int(c.slow_contacts),
            "per_cell": [{"spawns": int(c.spawns[k]), "hits": int(c.cell_hits[k])} for k in range(N_CELLS)],
            "score": int(game.score),
            "difficulty": cfg.difficulty,
            "placement": cfg.placement,
            "constrained": cfg.constrained,
            "curriculum": cfg.curriculum,
            "seed": cfg.seed,
            "steps": self._steps,
            "duration": game.clock,
            "final_fatigue": self._fatigue,
            "max_fatigue": self._max_fatigue,
            "total_reward": self._reward_sum,
            "hit_speeds": list(self._hit_speeds),
            "hammer_depths": list(self._depths),
        }

    def _close_episode(self) -> None:
        if self.game is None or self._logged or self._steps == 0:
            return
        record = self.episode_record()
        self.episodes.append(record)
        self._logged = True
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    def close(self) -> None:
        self._close_episode()

    # -- rendering and logs ------------------------------------------------
    def scene(self, tip=None) -> Scene:
        game = self.game
        cfg = game.config
        area = game.area
        lifespan = cfg.target_lifespan
        return Scene(
            tuple(area.center), tuple(area.right), tuple(area.up),
            cfg.grid_spacing + 3.0 * cfg.target_radius,
            tuple(SceneTarget(tuple(t.position), t.age / lifespan) for t in game.active),
            cfg.target_radius,
            None if tip is None else tuple(tip),
            cfg.hammer_radius,
        )

    def _render(self, tip) -> RgbdImage:
        self.render_count += 1
        if self.camera.width == 0 or self.camera.height == 0:
            return RgbdImage.empty()
        return render_rgbd(self.scene(tip), *self._hmd, self.camera)

    def _log_entries(self, tip, reward: RewardBreakdown | None = None, n_hits: int = 0, n_slow: int = 0):
        game = self.game
        c = game.counters
        entries = [
            ("score", game.score),
            ("hits", c.hits),
            ("misses", c.misses),
            ("slow_contacts", c.slow_contacts),
            ("step_hits", n_hits),
            ("step_slow_contacts", n_slow),
            ("n_active", len(game.active)),
        ]
        if reward is not None:
            entries += [
                ("v_h", reward.v_h),
                ("reward/S", reward.S),
                ("reward/C_c", reward.C_c),
                ("reward/C_d", reward.C_d),
                ("reward/C_e", reward.C_e),
            ]
        if tip is not None:
            entries.append(("hammer_depth", game.area.depth_of(tip)))
        if reward is not None:
            entries.append(("fatigue", self._fatigue))
        for k in range(N_CELLS):
            entries.append((f"cell/{k}/spawns", c.spawns[k]))
            entries.append((f"cell/{k}/hits", c.cell_hits[k]))
        if game.config.debug_obs:
            by_cell = {t.cell: t for t in game.active}
            lifespan = game.config.target_lifespan
            for k in range(N_CELLS):
                t = by_cell.get(k)
                pos = t.position if t is not None else (0.0, 0.0, 0.0)
                entries += [
                    (f"cell/{k}/active", 1.0 if t is not None else 0.0),
                    (f"cell/{k}/age", t.age / lifespan if t is not None else 0.0),
                    (f"cell/{k}/x", pos[0]),
                    (f"cell/{k}/y", pos[1]),
                    (f"cell/{k}/z", pos[2]),
                ]
        return tuple((k, float(v)) for k, v in entries)
