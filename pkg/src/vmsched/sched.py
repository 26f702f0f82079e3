"""Scheduling policies: first-fit, best-fit, random, and a linear Q learner.

A policy is a callable ``(observation, mask) -> flat action index`` with a
``name`` attribute.  All policies only ever return actions whose mask entry
is true and raise :class:`NoFeasibleAction` on an all-false mask.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .env import Observation, SchedulingEnv
from .errors import NoFeasibleAction

FEATURE_NAMES = (
    "free_cpu",
    "free_mem",
    "residual_cpu",
    "residual_mem",
    "request_cpu",
    "request_mem",
    "is_large",
    "bias",
)
N_FEATURES = len(FEATURE_NAMES)


def _feasible_indices(mask: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise NoFeasibleAction("mask has no true entries")
    return idx


class FirstFit:
    """Lowest flat (server-major, numa-minor) feasible action."""

    name = "first-fit"

    def __call__(self, obs: Observation, mask: np.ndarray) -> int:
        return int(_feasible_indices(mask)[0])


class BestFit:
    """Feasible action minimizing post-placement residuals.

    Keys, in order: residual cpu of the target node (both nodes summed for
    large flavors), then residual mem, then the flat index.
    """

    name = "best-fit"

    def __call__(self, obs: Observation, mask: np.ndarray) -> int:
        idx = _feasible_indices(mask)
        nodes_per_server = obs.node_free.shape[1]
        if obs.request_is_large:
            server_free = obs.node_free.sum(axis=1)  # (S, 2)
            servers = idx // nodes_per_server
            resid_cpu = server_free[servers, 0] - obs.request_cpu
            resid_mem = server_free[servers, 1] - obs.request_mem
        else:
            flat_free = obs.node_free.reshape(-1, 2)
            resid_cpu = flat_free[idx, 0] - obs.request_cpu
            resid_mem = flat_free[idx, 1] - obs.request_mem
        order = np.lexsort((idx, resid_mem, resid_cpu))
        return int(idx[order[0]])


class RandomPolicy:
    """Uniform choice over feasible actions; deterministic given its seed."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, obs: Observation, mask: np.ndarray) -> int:
        return int(self.rng.choice(_feasible_indices(mask)))


def first_fit(obs: Observation, mask: np.ndarray) -> int:
    return FirstFit()(obs, mask)


def best_fit(obs: Observation, mask: np.ndarray) -> int:
    return BestFit()(obs, mask)


# --- linear Q learning ---

def feature_matrix(obs: Observation) -> np.ndarray:
    """Per-action feature rows for the whole flat action space."""
    node_cap = np.asarray(obs.node_capacity, dtype=np.float64)
    server_cap = np.asarray(obs.server_capacity, dtype=np.float64)
    request = np.array([obs.request_cpu, obs.request_mem], dtype=np.float64)
    nodes_per_server = obs.node_free.shape[1]

    if obs.request_is_large:
        free = obs.node_free.sum(axis=1).astype(np.float64)  # (S, 2)
        free = np.repeat(free, nodes_per_server, axis=0)
        cap = server_cap
    else:
        free = obs.node_free.reshape(-1, 2).astype(np.float64)
        cap = node_cap

    n_actions = free.shape[0]
    feats = np.empty((n_actions, N_FEATURES), dtype=np.float64)
    feats[:, 0:2] = free / cap
    feats[:, 2:4] = (free - request) / cap
    feats[:, 4:6] = request / server_cap
    feats[:, 6] = 1.0 if obs.request_is_large else 0.0
    feats[:, 7] = 1.0
    return feats


def linear_q_features(obs: Observation, action: int) -> np.ndarray:
    """Feature vector of one (state, action) pair."""
    return feature_matrix(obs)[action]


@dataclass
class LinearQParams:
    learning_rate: float = 0.05
    discount: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5000
    episodes: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must be in [0, 1]")
        for eps in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= eps <= 1.0:
                raise ValueError("epsilon must be in [0, 1]")
        if self.epsilon_decay_steps < 1:
            raise ValueError("epsilon_decay_steps must be >= 1")


class LinearQPolicy:
    """Greedy policy over learned linear action values."""

    name = "linear-q"

    def __init__(self, weights: np.ndarray, params: Optional[LinearQParams] = None):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} weights, got {self.weights.shape}")
        self.params = params

    def __call__(self, obs: Observation, mask: np.ndarray) -> int:
        idx = _feasible_indices(mask)
        q = feature_matrix(obs)[idx] @ self.weights
        # argmax keeps the first (smallest flat index) maximum
        return int(idx[int(np.argmax(q))])

    def save(self, path) -> None:
        doc = {
            "feature_names": list(FEATURE_NAMES),
            "weights": self.weights.tolist(),
            "params": asdict(self.params) if self.params else {},
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "LinearQPolicy":
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        if tuple(doc.get("feature_names", ())) != FEATURE_NAMES:
            raise ValueError(f"weight file {path} has unexpected feature names")
        params = doc.get("params") or None
        return cls(
            np.array(doc["weights"], dtype=np.float64),
            LinearQParams(**params) if params else None,
        )


def train_linear_q(
    env_factory: Callable[[int], SchedulingEnv], params: LinearQParams
) -> LinearQPolicy:
    """Epsilon-greedy TD learning over masked actions.

    Action values factor as Q(s, a) = v.psi(s) + w.(phi(s, a) - psi(s)) with
    psi the mean feature vector over feasible actions.  The v head soaks up
    the state-level value (how close the episode is to starving), which
    would otherwise swamp the per-action signal and push w toward
    spread-out placements; w is left with the pure action preference and is
    what the returned greedy policy uses (the centering term is constant
    per state, so argmax over w.phi is unchanged).

    ``env_factory(episode_index)`` supplies a fresh environment per episode;
    fixed seeds (factory plus ``params.seed``) give identical final weights.
    """
    rng = np.random.default_rng(params.seed)
    w = np.zeros(N_FEATURES, dtype=np.float64)  # advantage: the shipped policy
    v = np.zeros(N_FEATURES, dtype=np.float64)  # state-value head, train-time only
    t = 0
    for episode in range(params.episodes):
        env = env_factory(episode)
        obs = env.reset()
        while not env.done:
            frac = min(1.0, t / params.epsilon_decay_steps)
            epsilon = params.epsilon_start + frac * (
                params.epsilon_end - params.epsilon_start
            )
            feasible = np.flatnonzero(env.action_mask())
            feats = feature_matrix(obs)
            centered = feats[feasible] - feats[feasible].mean(axis=0)
            if rng.random() < epsilon:
                pick = int(rng.integers(feasible.size))
            else:
                pick = int(np.argmax(centered @ w))
            action = int(feasible[pick])
            psi = feats[feasible].mean(axis=0)
            q_sa = float(psi @ v) + float(centered[pick] @ w)
            result = env.step(action)
            target = result.reward
            if not result.done:
                next_feats = feature_matrix(result.obs)
                next_feasible = np.flatnonzero(env.action_mask())
                next_psi = next_feats[next_feasible].mean(axis=0)
                next_adv = (next_feats[next_feasible] - next_psi) @ w
                target += params.discount * (
                    float(next_psi @ v) + float(next_adv.max())
                )
            delta = target - q_sa
            v += params.learning_rate * delta * psi
            w += params.learning_rate * delta * centered[pick]
            obs = result.obs
            t += 1
    return LinearQPolicy(w, params)


# --- CLI policy specs ---

def make_policy(spec: str, seed: int = 0):
    """Build a policy from its CLI spec: first-fit|best-fit|random|linear-q:<file>."""
    if spec == "first-fit":
        return FirstFit()
    if spec == "best-fit":
        return BestFit()
    if spec == "random":
        return RandomPolicy(seed)
    if spec.startswith("linear-q:"):
        return LinearQPolicy.load(spec.split(":", 1)[1])
    raise ValueError(
        f"unknown policy {spec!r}; expected first-fit, best-fit, random, "
        "or linear-q:<weights-file>"
    )
