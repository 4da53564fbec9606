"""Trajectory collection, reward assignment and evaluation.

Collection fans out over worker threads, each with its own environment and its
own random stream; results are gathered in worker order so a round is
reproducible regardless of scheduling.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..env import ChainEnv, EnvConfig, MotionClip
from ..errors import EmptyTrajectoryError
from ..metric import episode_rewards
from ..models import DistanceMode, EvalReport, RewardKind
from ..nets import SiameseNetwork
from ..sequences import Episode, MotionSequence
from .advantage import discounted_returns, gae, normalize
from .policy import GaussianPolicy, ValueFunction
from .trpo import PolicyBatch

logger = logging.getLogger(__name__)

RewardSource = Literal["metric", "oracle"]


class Trajectory(BaseModel):
    """One episode. ``frames`` and ``demo_frames`` start with the reset frame (T+1 each)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    states: np.ndarray = Field(description="(T, state_dim) pose states s_t the actions were taken in")
    frames: np.ndarray = Field(description="(T+1, H, W) agent frames")
    demo_frames: np.ndarray = Field(description="(T+1, H, W) synchronised demonstration frames")
    actions: np.ndarray
    log_probs: np.ndarray
    oracle_rewards: np.ndarray = Field(description="Evaluation-only pose reward per step")
    dones: np.ndarray
    final_state: np.ndarray = Field(description="s_T, used to bootstrap truncated episodes")
    terminated: bool = Field(description="Ended by ground contact rather than the step cap")
    rewards: Optional[np.ndarray] = Field(default=None, description="Learned-metric reward per step")
    class_id: int = 0
    speed: float = 1.0

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    def with_rewards(self, rewards: np.ndarray) -> "Trajectory":
        return self.model_copy(update={"rewards": np.asarray(rewards, dtype=np.float64)})

    def episode(self) -> Episode:
        return Episode(
            agent=MotionSequence(frames=self.frames, class_id=self.class_id, source="policy"),
            demo=MotionSequence(frames=self.demo_frames, class_id=self.class_id, speed=self.speed),
            class_id=self.class_id,
            steps=len(self),
        )


def collect_episode(
    env: ChainEnv,
    policy: GaussianPolicy,
    rng: np.random.Generator,
    deterministic: bool = False,
    max_steps: Optional[int] = None,
) -> Trajectory:
    obs = env.reset(rng)
    pose = obs.pose
    frames, demo_frames = [obs.frame], [obs.demo_frame]
    states, actions, log_probs, oracle, dones = [], [], [], [], []
    terminated = False
    limit = max_steps or env.config.episode_steps
    for _ in range(limit):
        state = pose.policy_features()
        if deterministic:
            action, log_prob = policy.mean_numpy(state)[0], 0.0
        else:
            action, log_prob = policy.sample_action(state, rng)
        result = env.step(action)
        states.append(state)
        actions.append(action)
        log_probs.append(log_prob)
        oracle.append(result.info["oracle_reward"])
        dones.append(result.done)
        frames.append(result.frame)
        demo_frames.append(result.demo_frame)
        pose = result.pose
        if result.done:
            terminated = bool(result.info["terminated"])
            break
    return Trajectory(
        states=np.asarray(states, dtype=np.float32),
        frames=np.stack(frames),
        demo_frames=np.stack(demo_frames),
        actions=np.asarray(actions, dtype=np.float64),
        log_probs=np.asarray(log_probs, dtype=np.float64),
        oracle_rewards=np.asarray(oracle, dtype=np.float64),
        dones=np.asarray(dones, dtype=bool),
        final_state=pose.policy_features(),
        terminated=terminated,
        class_id=env.clip.class_id,
        speed=env.speed,
    )


def _worker(
    policy: GaussianPolicy,
    clip: MotionClip,
    config: EnvConfig,
    samples: int,
    rng: np.random.Generator,
) -> list[Trajectory]:
    env = ChainEnv(config, clip)
    out: list[Trajectory] = []
    collected = 0
    while collected < samples:
        traj = collect_episode(env, policy, rng)
        out.append(traj)
        collected += len(traj)
    return out


def collect_round(
    policy: GaussianPolicy,
    clip: MotionClip,
    config: EnvConfig,
    samples: int,
    seed: np.random.SeedSequence,
    workers: int = 1,
) -> list[Trajectory]:
    """At least ``samples`` environment steps split over ``workers`` threads."""
    workers = max(1, workers)
    shares = [samples // workers + (1 if i < samples % workers else 0) for i in range(workers)]
    rngs = [np.random.default_rng(s) for s in seed.spawn(workers)]
    if workers == 1:
        results = [_worker(policy, clip, config, shares[0], rngs[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_worker, policy, clip, config, n, r) for n, r in zip(shares, rngs)]
            results = [f.result() for f in futures]
    trajectories = [traj for batch in results for traj in batch]
    logger.debug(
        "collected rollouts",
        extra={"episodes": len(trajectories), "steps": sum(len(t) for t in trajectories)},
    )
    return trajectories


def assign_rewards(
    trajectories: Sequence[Trajectory],
    metric: Optional[SiameseNetwork],
    source: RewardSource = "metric",
    mode: DistanceMode = "combined",
    kind: RewardKind = "normalized",
    w_d: float = -5.0,
) -> list[Trajectory]:
    """Fill ``rewards``. ``metric`` should be a frozen snapshot for the whole round."""
    out = []
    for traj in trajectories:
        if source == "oracle":
            rewards = traj.oracle_rewards.copy()
        else:
            if metric is None:
                raise ValueError("metric rewards need a distance network")
            rewards = episode_rewards(metric, traj.frames, traj.demo_frames, mode, kind, w_d)
        out.append(traj.with_rewards(rewards))
    return out


def build_policy_batch(
    trajectories: Sequence[Trajectory],
    value_fn: ValueFunction,
    gamma: float = 0.95,
    lam: float = 0.95,
) -> PolicyBatch:
    """Advantages and returns from ``Trajectory.rewards`` only."""
    if not trajectories:
        raise EmptyTrajectoryError("no trajectories to learn from")
    advantages, returns = [], []
    for traj in trajectories:
        if traj.rewards is None:
            raise EmptyTrajectoryError("trajectory has no assigned rewards")
        values = value_fn.predict_numpy(traj.states)
        last = 0.0 if traj.terminated else float(value_fn.predict_numpy(traj.final_state)[0])
        advantages.append(gae(traj.rewards, values, gamma, lam, last_value=last))
        returns.append(discounted_returns(traj.rewards, gamma, bootstrap=last))
    return PolicyBatch(
        states=np.concatenate([t.states for t in trajectories]),
        actions=np.concatenate([t.actions for t in trajectories]),
        log_probs=np.concatenate([t.log_probs for t in trajectories]),
        advantages=normalize(np.concatenate(advantages)),
        returns=np.concatenate(returns),
    )


def evaluate_policy(
    policy: GaussianPolicy,
    clip: MotionClip,
    config: EnvConfig,
    episodes: int,
    rng: np.random.Generator,
    deterministic: bool = True,
) -> EvalReport:
    """Mean and std of the undiscounted oracle return over ``episodes`` runs."""
    if episodes < 1:
        raise ValueError(f"episodes must be positive, got {episodes}")
    env = ChainEnv(config, clip)
    returns, lengths = [], []
    for _ in range(episodes):
        traj = collect_episode(env, policy, rng, deterministic=deterministic)
        returns.append(float(traj.oracle_rewards.sum()))
        lengths.append(len(traj))
    return EvalReport(
        episodes=episodes,
        mean_return=float(np.mean(returns)),
        std_return=float(np.std(returns)),
        mean_length=float(np.mean(lengths)),
    )
