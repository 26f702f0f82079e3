"""Episodic-environment adapter over the vmsched scheduling core.

Exposes the reset/step/action_mask cycle in the convention RL frameworks
expect: ``reset`` returns the observation (plus the action mask), ``step``
returns ``(observation, reward, terminated, info)``.  Observations are the
core's normalized flat view as float32 arrays; masks are boolean arrays.
In expansion scenarios the cluster grows, so observation and mask lengths
grow with it; consumers must size by the arrays, not a fixed shape.
All logic lives in the core package; this layer only converts types and
manages handle lifetime, so anything trained against it replays exactly
through the core CLI.
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from vmsched.env import Scenario, SchedulingEnv, load_env_config
from vmsched.trace import read_trace

__all__ = ["BoundEnv", "ClosedHandleError", "make_env"]

__version__ = "0.1.0"


class ClosedHandleError(RuntimeError):
    """The handle was closed; it no longer owns an environment."""


class BoundEnv:
    """Opaque handle over one core environment instance.

    Handles are single-threaded and independent of each other; drive any
    number of them from parallel workers.
    """

    def __init__(self, config_path, scenario: Union[str, Scenario], trace_path,
                 seed: Optional[int] = None):
        self._closed = False
        self._config_path = config_path
        self._scenario = (
            scenario if isinstance(scenario, Scenario) else Scenario.parse(scenario)
        )
        self._trace_path = trace_path
        self._seed = seed
        self._env: Optional[SchedulingEnv] = None

    def reset(self, config_path=None, scenario=None, trace_path=None,
              seed: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """Start (or rebind and start) an episode.

        Returns ``(observation, mask)``.  A trace with no allocations yields
        an empty observation and mask; the episode is already terminated.
        """
        self._ensure_open()
        if config_path is not None:
            self._config_path = config_path
        if scenario is not None:
            self._scenario = (
                scenario if isinstance(scenario, Scenario) else Scenario.parse(scenario)
            )
        if trace_path is not None:
            self._trace_path = trace_path
        if seed is not None:
            self._seed = seed

        cfg = load_env_config(self._config_path)
        if self._seed is not None:
            cfg.seed = self._seed
        trace = read_trace(self._trace_path)
        self._env = SchedulingEnv(cfg, self._scenario, trace)
        obs = self._env.reset()
        if obs is None or self._env.done:
            empty = np.zeros(0, dtype=np.float32)
            if obs is not None:
                return obs.flat_normalized(), self.action_mask_or_empty()
            return empty, np.zeros(0, dtype=bool)
        return obs.flat_normalized(), self._env.action_mask().copy()

    def step(self, action: int) -> tuple[np.ndarray, float, bool, dict]:
        """Apply one placement decision; mirrors the core step exactly."""
        env = self._require_env()
        result = env.step(int(action))
        if result.obs is None:
            obs = np.zeros(0, dtype=np.float32)
        else:
            obs = result.obs.flat_normalized()
        return obs, float(result.reward), bool(result.done), dict(result.info)

    def action_mask(self) -> np.ndarray:
        """Feasibility mask for the pending request."""
        env = self._require_env()
        return env.action_mask().copy()

    def action_mask_or_empty(self) -> np.ndarray:
        env = self._require_env()
        if env.done:
            return np.zeros(0, dtype=bool)
        return env.action_mask().copy()

    @property
    def terminated(self) -> bool:
        return self._require_env().done

    def close(self) -> None:
        """Release the environment; all later calls raise ClosedHandleError."""
        self._closed = True
        self._env = None

    def _ensure_open(self) -> None:
        if self._closed:
            raise ClosedHandleError("handle is closed")

    def _require_env(self) -> SchedulingEnv:
        self._ensure_open()
        if self._env is None:
            raise RuntimeError("call reset() before stepping")
        return self._env

    def __enter__(self) -> "BoundEnv":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def make_env(config, scenario, trace, seed: Optional[int] = None) -> BoundEnv:
    """Build a handle bound to a config file, scenario name, and trace file."""
    return BoundEnv(config, scenario, trace, seed)
