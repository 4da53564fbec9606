"""The outer training loop and the run-level operations built on it.

One master seed feeds every random stream through ``np.random.SeedSequence``
spawn keys, so two runs with the same config write byte-identical metrics and
checkpoints.
"""

import csv
import logging
import time
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np
from pydantic import BaseModel, Field

from .autodiff import Adam, CheckpointHeader, ParameterStore
from .config import RunConfig
from .env import (
    ChainEnv,
    MotionClip,
    clip_by_name,
    demo_frames,
    library_sequences,
    motion_library,
    state_dim,
    write_sequence,
)
from .errors import CheckpointError, VirlError
from .memory import ExperienceMemory
from .metric import MetricTrainer, class_separation, final_encoding, snapshot
from .models import EvalReport, LossReport, MetricsRow
from .nets import SiameseNetwork
from .pairs import build_batch
from .rl import (
    GaussianPolicy,
    ValueFunction,
    assign_rewards,
    build_policy_batch,
    collect_episode,
    collect_round,
    evaluate_policy,
    policy_update,
    value_update,
)
from .sequences import Episode, MotionSequence

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.txt"
METRICS_FILE = "metrics.csv"
CHECKPOINT_FILE = "checkpoint.ckpt"
LAST_GOOD_FILE = "last_good.ckpt"
METRIC_CHECKPOINT_FILE = "metric.ckpt"
PRETRAIN_FILE = "pretrain.csv"

# Spawn keys of the independent random streams
STREAM_INIT = 0
STREAM_LIBRARY = 1
STREAM_METRIC = 2
STREAM_PAIRS = 3
STREAM_ROLLOUT = 4
STREAM_EVAL = 5
STREAM_HELDOUT = 6


def seed_stream(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(seed_stream(seed, *key))


class Networks:
    """The distance network, the policy and the value function of one run."""

    def __init__(self, metric: SiameseNetwork, policy: GaussianPolicy, value: ValueFunction) -> None:
        self.metric = metric
        self.policy = policy
        self.value = value

    @classmethod
    def initialise(cls, config: RunConfig) -> "Networks":
        rng = stream_rng(config.seed, STREAM_INIT)
        env = config.env_config()
        dim = state_dim(env.joints)
        metric = SiameseNetwork(config.architecture(), rng=rng)
        policy = GaussianPolicy(
            dim,
            env.joints,
            config.rl_hidden,
            rng=rng,
            init_std=config.rl_init_std,
            learn_std=config.rl_learn_std,
        )
        value = ValueFunction(dim, config.rl_hidden, rng=rng)
        return cls(metric, policy, value)

    def store(self) -> ParameterStore:
        return ParameterStore.union(self.metric.store, self.policy.store, self.value.store)

    def save(self, path: Path | str, config: RunConfig) -> Path:
        path = Path(path)
        self.store().save(path, config.config_hash())
        return path


def load_metric(path: Path | str, config: RunConfig) -> SiameseNetwork:
    store, header = ParameterStore.load(path)
    _note_config_hash(header, config, path)
    return SiameseNetwork.from_store(config.architecture(), store)


def load_networks(path: Path | str, config: RunConfig) -> Networks:
    """Rebuild all three networks; raises CheckpointError on any architecture mismatch."""
    store, header = ParameterStore.load(path)
    _note_config_hash(header, config, path)
    env = config.env_config()
    dim = state_dim(env.joints)
    return Networks(
        SiameseNetwork.from_store(config.architecture(), store),
        GaussianPolicy.from_store(store, dim, env.joints, config.rl_hidden, learn_std=config.rl_learn_std),
        ValueFunction.from_store(store, dim, config.rl_hidden),
    )


def _note_config_hash(header: CheckpointHeader, config: RunConfig, path: Path | str) -> None:
    if header.config_hash and header.config_hash != config.config_hash():
        logger.warning(
            "checkpoint was written under a different config",
            extra={"checkpoint": str(path), "recorded": header.config_hash, "current": config.config_hash()},
        )


class MetricsWriter:
    """Appends one MetricsRow per round to a CSV whose header is written on open."""

    def __init__(self, path: Path | str, columns: Optional[list[str]] = None) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file: TextIO = self.path.open("w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(columns or MetricsRow.columns())
        self._file.flush()
        self._last_round = -1

    def write(self, row: MetricsRow) -> None:
        if row.round <= self._last_round:
            raise VirlError(f"metrics rounds must increase, got {row.round} after {self._last_round}")
        self._last_round = row.round
        self._writer.writerow(row.csv_values())
        self._file.flush()

    def write_values(self, values: Sequence[object]) -> None:
        self._writer.writerow(values)
        self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


class TrainingSummary(BaseModel):
    """What ``run_training`` leaves behind."""

    rounds: int = Field(description="Rounds completed")
    env_steps: int = Field(description="Environment steps collected")
    checkpoint: str = Field(description="Path of the final checkpoint")
    metrics: str = Field(description="Path of the metrics CSV")
    config_hash: str
    last_oracle_return: float = Field(default=0.0, description="Mean oracle return of the last round")
    accepted_updates: int = Field(default=0, description="Policy updates that passed the line search")
    max_accepted_kl: float = Field(default=0.0, description="Largest measured KL of an accepted update")


class PretrainSummary(BaseModel):
    steps: int
    checkpoint: str
    losses: str = Field(description="Path of the per-step loss CSV")
    initial_triplet: float
    final_triplet: float
    inter_class: float
    intra_class: float
    separation_ratio: float


def build_library(config: RunConfig, rng: np.random.Generator) -> tuple[list[MotionClip], list[MotionSequence]]:
    env = config.env_config()
    clips = motion_library(config.classes, env.joints)
    sequences = library_sequences(
        clips, env, config.metric_library_per_class, config.metric_library_length, rng
    )
    return clips, sequences


def _mean_losses(reports: Sequence[LossReport]) -> tuple[float, float, float]:
    if not reports:
        return 0.0, 0.0, 0.0
    n = len(reports)
    return (
        sum(r.triplet for r in reports) / n,
        sum(r.vae for r in reports) / n,
        sum(r.seq_ae for r in reports) / n,
    )


def run_training(config: RunConfig) -> TrainingSummary:
    """Interleave rollouts, metric updates and policy updates for ``config.rounds`` rounds.

    Rewards of a round come from a frozen copy of the distance network taken
    before collection. If a round fails, the parameters of the last completed
    round are written to ``last_good.ckpt`` and the error is re-raised.
    """
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / CONFIG_FILE)

    nets = Networks.initialise(config)
    if config.metric_checkpoint:
        nets.metric = load_metric(config.metric_checkpoint, config)
        logger.info("loaded pretrained distance network", extra={"path": config.metric_checkpoint})

    clips, library = build_library(config, stream_rng(config.seed, STREAM_LIBRARY))
    clip = clip_by_name(config.clip, clips)
    env_config = config.env_config()
    weights = config.loss_weights()
    trainer = MetricTrainer(nets.metric, weights, lr=config.metric_lr, rng=stream_rng(config.seed, STREAM_METRIC))
    value_opt = Adam(nets.value.store, lr=config.rl_value_lr)
    memory = ExperienceMemory(config.metric_memory_capacity)
    pair_rng = stream_rng(config.seed, STREAM_PAIRS)

    checkpoint = nets.save(out / CHECKPOINT_FILE, config)
    last_good = nets.store()
    env_steps = 0
    accepted, max_kl = 0, 0.0
    last_return = 0.0
    started = time.perf_counter()

    logger.info(
        "training started",
        extra={"rounds": config.rounds, "clip": config.clip, "mode": config.mode, "config_hash": config.config_hash()},
    )
    with MetricsWriter(out / METRICS_FILE) as writer:
        for round_index in range(1, config.rounds + 1):
            try:
                frozen = snapshot(trainer.net)
                trajectories = collect_round(
                    nets.policy,
                    clip,
                    env_config,
                    config.rl_samples_per_round,
                    seed_stream(config.seed, STREAM_ROLLOUT, round_index),
                    config.rl_workers,
                )
                trajectories = assign_rewards(
                    trajectories, frozen, config.reward_source, config.mode, config.reward, config.metric_w_d
                )
                memory.extend(t.episode() for t in trajectories)

                reports: list[LossReport] = []
                if round_index % config.metric_update_every == 0:
                    for _ in range(config.metric_steps_per_round):
                        batch = build_batch(
                            memory,
                            library,
                            config.metric_batch_size,
                            pair_rng,
                            config.metric_mix,
                            config.metric_min_crop,
                        )
                        reports.append(trainer.train_step(batch))

                batch = build_policy_batch(trajectories, nets.value, config.rl_gamma, config.rl_lambda)
                update = policy_update(nets.policy, batch, config.rl_max_kl, config.rl_max_backtracks)
                if update.accepted:
                    if update.kl > config.rl_max_kl:
                        raise VirlError("accepted policy update exceeded the KL budget", update.model_dump())
                    accepted += 1
                    max_kl = max(max_kl, update.kl)
                value_mse = nets.value.mse(batch.states, batch.returns).item()
                for _ in range(config.value_steps_per_round):
                    value_mse = value_update(nets.value, batch, value_opt)
            except Exception:
                path = out / LAST_GOOD_FILE
                last_good.save(path, config.config_hash())
                logger.exception(
                    "training round failed; wrote last good parameters",
                    extra={"round": round_index, "checkpoint": str(path)},
                )
                raise

            steps = sum(len(t) for t in trajectories)
            env_steps += steps
            triplet, vae, seq_ae = _mean_losses(reports)
            last_return = float(np.mean([t.oracle_rewards.sum() for t in trajectories]))
            row = MetricsRow(
                round=round_index,
                env_steps=env_steps,
                mean_metric_reward=float(np.mean(np.concatenate([t.rewards for t in trajectories]))),
                mean_oracle_return=last_return,
                mean_episode_length=steps / len(trajectories),
                triplet=triplet,
                vae=vae,
                seq_ae=seq_ae,
                policy_kl=update.kl,
                value_mse=value_mse,
                wall_time=time.perf_counter() - started if config.record_wall_time else 0.0,
            )
            writer.write(row)
            last_good = nets.store()
            logger.info("round finished", extra=row.model_dump())

            if round_index % config.checkpoint_every == 0:
                checkpoint = nets.save(out / CHECKPOINT_FILE, config)

    checkpoint = nets.save(out / CHECKPOINT_FILE, config)
    summary = TrainingSummary(
        rounds=config.rounds,
        env_steps=env_steps,
        checkpoint=str(checkpoint),
        metrics=str(out / METRICS_FILE),
        config_hash=config.config_hash(),
        last_oracle_return=last_return,
        accepted_updates=accepted,
        max_accepted_kl=max_kl,
    )
    logger.info("training finished", extra=summary.model_dump())
    return summary


def pretrain_metric(config: RunConfig, steps: Optional[int] = None) -> PretrainSummary:
    """Train the distance network on demonstration clips only, no policy rollouts.

    Library clips double as experience episodes (agent = demo), so batches mix
    class pairs and augmentation pairs exactly as during training.
    """
    steps = config.pretrain_steps if steps is None else steps
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)

    net = SiameseNetwork(config.architecture(), rng=stream_rng(config.seed, STREAM_INIT))
    _, library = build_library(config, stream_rng(config.seed, STREAM_LIBRARY))
    memory = ExperienceMemory(max(config.metric_memory_capacity, len(library)))
    memory.extend(Episode(agent=seq, demo=seq, class_id=seq.class_id, steps=len(seq) - 1) for seq in library)
    trainer = MetricTrainer(net, config.loss_weights(), lr=config.metric_lr, rng=stream_rng(config.seed, STREAM_METRIC))
    pair_rng = stream_rng(config.seed, STREAM_PAIRS)

    initial = final = 0.0
    with MetricsWriter(out / PRETRAIN_FILE, ["step", "triplet", "vae", "seq_ae", "total"]) as writer:
        for step in range(1, steps + 1):
            batch = build_batch(
                memory, library, config.metric_batch_size, pair_rng, config.metric_mix, config.metric_min_crop
            )
            report = trainer.train_step(batch)
            if step == 1:
                initial = report.triplet
            final = report.triplet
            writer.write_values(
                [step, f"{report.triplet:.6f}", f"{report.vae:.6f}", f"{report.seq_ae:.6f}", f"{report.total:.6f}"]
            )
            if step % 100 == 0:
                logger.info("pretraining", extra={"step": step, **report.model_dump()})

    _, held_out = build_library(config, stream_rng(config.seed, STREAM_HELDOUT))
    inter, intra, ratio = class_separation(net, held_out)
    checkpoint = out / METRIC_CHECKPOINT_FILE
    net.store.save(checkpoint, config.config_hash())

    summary = PretrainSummary(
        steps=steps,
        checkpoint=str(checkpoint),
        losses=str(out / PRETRAIN_FILE),
        initial_triplet=initial,
        final_triplet=final,
        inter_class=inter,
        intra_class=intra,
        separation_ratio=ratio,
    )
    logger.info("pretraining finished", extra=summary.model_dump())
    return summary


def export_embeddings(
    checkpoint: Path | str,
    config: RunConfig,
    path: Path | str,
    sequences: Optional[Sequence[MotionSequence]] = None,
) -> int:
    """Write ``class_id, source, h0..h{n-1}`` (the final temporal encoding) per sequence.

    Without explicit ``sequences`` the held-out library is exported, followed
    by policy episodes on the configured clip when the checkpoint carries a
    policy.
    """
    net = load_metric(checkpoint, config)
    if sequences is None:
        sequences = _default_export_sequences(checkpoint, config)
    if not sequences:
        raise VirlError("no sequences to export")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = config.metric_embed_dim
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class_id", "source", *[f"h{i}" for i in range(dim)]])
        for seq in sequences:
            h = final_encoding(net, seq.frames)
            writer.writerow([seq.class_id, seq.source, *[f"{v:.6f}" for v in h]])
    logger.info("exported embeddings", extra={"rows": len(sequences), "path": str(path)})
    return len(sequences)


def _default_export_sequences(checkpoint: Path | str, config: RunConfig) -> list[MotionSequence]:
    clips, library = build_library(config, stream_rng(config.seed, STREAM_HELDOUT))
    sequences = list(library)
    try:
        nets = load_networks(checkpoint, config)
    except CheckpointError:
        return sequences
    env = ChainEnv(config.env_config(), clip_by_name(config.clip, clips))
    rng = stream_rng(config.seed, STREAM_EVAL)
    for _ in range(config.metric_library_per_class):
        traj = collect_episode(env, nets.policy, rng, deterministic=True)
        sequences.append(MotionSequence(frames=traj.frames, class_id=traj.class_id, source="policy"))
    return sequences


def evaluate_checkpoint(
    checkpoint: Path | str, config: RunConfig, episodes: Optional[int] = None
) -> EvalReport:
    """Oracle-return statistics of the checkpointed policy's mean action."""
    nets = load_networks(checkpoint, config)
    clip = clip_by_name(config.clip, motion_library(config.classes, config.env_config().joints))
    report = evaluate_policy(
        nets.policy,
        clip,
        config.env_config(),
        episodes or config.eval_episodes,
        stream_rng(config.seed, STREAM_EVAL),
    )
    logger.info("evaluated checkpoint", extra={"checkpoint": str(checkpoint), **report.model_dump()})
    return report


def random_baseline(config: RunConfig, episodes: Optional[int] = None) -> EvalReport:
    """The untrained, stochastic policy: the floor every trained run is compared to."""
    nets = Networks.initialise(config)
    clip = clip_by_name(config.clip, motion_library(config.classes, config.env_config().joints))
    return evaluate_policy(
        nets.policy,
        clip,
        config.env_config(),
        episodes or config.eval_episodes,
        stream_rng(config.seed, STREAM_EVAL),
        deterministic=False,
    )


def render_demo(
    config: RunConfig, frames: Optional[int] = None, checkpoint: Optional[Path | str] = None
) -> dict[str, object]:
    """Write the configured clip as PGM frames, plus the policy's episode when given a checkpoint."""
    env_config = config.env_config()
    length = frames or env_config.episode_steps
    if length < 1:
        raise VirlError(f"frame count must be positive, got {length}")
    clip = clip_by_name(config.clip, motion_library(config.classes, env_config.joints))
    target = Path(config.out) / "demo" / clip.name
    written = write_sequence(target, demo_frames(clip, env_config, length), stem="demo")
    result: dict[str, object] = {"clip": clip.name, "frames": len(written), "directory": str(target)}

    if checkpoint is not None:
        nets = load_networks(checkpoint, config)
        env = ChainEnv(env_config, clip)
        traj = collect_episode(env, nets.policy, stream_rng(config.seed, STREAM_EVAL), deterministic=True)
        policy_dir = Path(config.out) / "demo" / f"{clip.name}_policy"
        write_sequence(policy_dir, traj.frames, stem="agent")
        write_sequence(policy_dir, traj.demo_frames, stem="demo")
        result["policy_directory"] = str(policy_dir)
        result["policy_frames"] = int(traj.frames.shape[0])
    logger.info("rendered demonstration", extra=result)
    return result
