"""A training environment: one simulated user driving one bridge session."""
from __future__ import annotations

import numpy as np

from ..armsim.model import ArmModel
from ..armsim.perception import HeadsetConfig
from ..armsim.user import UserSimulator
from ..bridge.messages import CHANNEL_DEPTH, CHANNEL_G, Hello, ObservationMsg
from ..bridge.net import SocketTransport
from ..bridge.session import ClientSession, LoopbackTransport
from ..whacapp.app import WhacApp
from ..whacapp.config import GameConfig
from .config import EnvConfig


class WhacEnv:
    """Reset/step interface over the lockstep bridge.

    ``step`` returns ``(obs, reward, done, log)`` where ``log`` is the
    app's per-step log dictionary.
    """

    def __init__(self, cfg: EnvConfig, model: ArmModel | None = None, recorder=None, app_log_path=None):
        self.cfg = cfg
        vector = cfg.observation == "vector"
        width, height = (0, 0) if vector else (120, 80)
        channels = CHANNEL_G | CHANNEL_DEPTH
        self.headset = HeadsetConfig(width=width, height=height, channels=channels)
        self.user = UserSimulator(model, cfg.dt, headset=self.headset, stack_delay=cfg.stack_delay,
                                  debug_targets=vector)
        if cfg.address:
            transport = SocketTransport.connect(cfg.address)
            self.app = None
        else:
            self.app = WhacApp(GameConfig.from_dict(cfg.game), log_path=app_log_path)
            transport = LoopbackTransport(self.app)
        self.session = ClientSession(transport, Hello(dt=cfg.dt, width=width, height=height, channels=channels),
                                     recorder=recorder)
        self.session.connect()
        self.last_obs: ObservationMsg | None = None

    @property
    def obs_dim(self) -> int:
        return len(self._probe_dim())

    def _probe_dim(self) -> np.ndarray:
        if self.last_obs is None:
            self.reset(0)
        return self.user.observe(self.last_obs)

    def reset(self, seed: int) -> np.ndarray:
        self.user.reset()
        self.last_obs = self.session.reset_handshake(self.cfg.episode_config(seed))
        return self.user.observe(self.last_obs)

    def step(self, action) -> tuple[np.ndarray, float, bool, dict[str, float]]:
        update = self.user.step(action)
        obs_msg = self.session.step_exchange(update)
        self.last_obs = obs_msg
        return self.user.observe(obs_msg), obs_msg.reward, obs_msg.is_finished, obs_msg.log()

    def close(self) -> None:
        self.session.close()
        if self.app is not None:
            self.app.close()
