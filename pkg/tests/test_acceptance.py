"""Scaled-down end-to-end properties of the whole system.

Most of these are marked ``slow`` and excluded by default; run them with
``pytest -m slow``.
"""

import numpy as np
import pytest

from virl.config import build_config
from virl.errors import DegenerateSequenceError
from virl.metric import distance_profile
from virl.pairs import NEGATIVE_VARIANTS, eesp_crop_start, eesp_probabilities, make_negative, make_positive
from virl.sequences import MotionSequence
from virl.training import (
    STREAM_HELDOUT,
    build_library,
    evaluate_checkpoint,
    load_metric,
    pretrain_metric,
    random_baseline,
    run_training,
    stream_rng,
)


def _multiset(frames: np.ndarray) -> list[bytes]:
    return sorted(f.tobytes() for f in frames)


def test_augmentation_properties():
    """1000 random non-constant sequences through every rule."""
    rng = np.random.default_rng(11)
    for _ in range(1000):
        length = int(rng.integers(2, 9))
        seq = MotionSequence(frames=rng.random((length, 4, 4)))
        for variant in NEGATIVE_VARIANTS:
            other = make_negative(seq, rng, variant)
            assert not np.array_equal(other.frames, seq.frames), variant
            if variant.startswith("shuffle"):
                assert _multiset(other.frames) == _multiset(seq.frames)
        assert len(make_positive(seq, rng, "noise")) == length
        assert len(make_positive(seq, rng, "desync")) == length - 1
        assert len(make_positive(seq, rng, "dup_first")) == length
        assert len(make_positive(seq, rng, "dup_last")) == length


@pytest.mark.parametrize("variant", NEGATIVE_VARIANTS)
def test_constant_sequence_is_guarded(variant, rng):
    constant = MotionSequence(frames=np.full((5, 4, 4), 0.3))
    with pytest.raises(DegenerateSequenceError):
        make_negative(constant, rng, variant)


@pytest.mark.slow
@pytest.mark.parametrize("length", [2, 4, 16])
def test_eesp_start_frequencies(length):
    rng = np.random.default_rng(length)
    draws = np.array([eesp_crop_start(length, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=length) / draws.size
    np.testing.assert_allclose(freq, eesp_probabilities(length), atol=0.01)


@pytest.fixture(scope="module")
def pretrained(tmp_path_factory):
    config = build_config(
        {
            "seed": 0,
            "out": str(tmp_path_factory.mktemp("pretrain")),
            "classes": 4,
            "env_frame_size": 32,
            "pretrain_steps": 2000,
            "metric_library_per_class": 25,
        }
    )
    return config, pretrain_metric(config)


@pytest.mark.slow
def test_pretraining_separates_classes(pretrained):
    _, summary = pretrained
    assert summary.separation_ratio >= 1.2


@pytest.mark.slow
def test_temporal_distance_is_order_sensitive(pretrained):
    """Reversal is farther than a noisy copy on at least 90% of held-out clips."""
    config, summary = pretrained
    net = load_metric(summary.checkpoint, config)
    _, held_out = build_library(config, stream_rng(config.seed, STREAM_HELDOUT))
    rng = np.random.default_rng(1)
    wins = 0
    for seq in held_out:
        reversed_h = distance_profile(net, seq.frames, seq.frames[::-1]).temporal.sum()
        noisy_h = distance_profile(net, seq.frames, make_positive(seq, rng, "noise").frames).temporal.sum()
        wins += int(reversed_h > noisy_h)
    assert wins >= 0.9 * len(held_out)


@pytest.mark.slow
def test_oracle_reward_beats_random_policy(tmp_path):
    config = build_config(
        {
            "seed": 0,
            "out": str(tmp_path / "oracle"),
            "clip": "walk",
            "rounds": 50,
            "reward_source": "oracle",
            "env_frame_size": 16,
            "metric_steps_per_round": 0,
            "rl_samples_per_round": 1024,
            "rl_hidden": "64,64",
            "eval_episodes": 10,
        }
    )
    summary = run_training(config)
    assert summary.max_accepted_kl <= config.rl_max_kl
    trained = evaluate_checkpoint(summary.checkpoint, config)
    baseline = random_baseline(config)
    assert trained.mean_return >= 2.0 * baseline.mean_return


@pytest.mark.slow
def test_combined_distance_beats_spatial_only_and_random(tmp_path):
    """Over three seeds, most combined-mode runs beat both the random policy and spatial-only mode."""
    wins = 0
    for seed in range(3):
        config = build_config(
            {
                "seed": seed,
                "out": str(tmp_path / f"pretrain_{seed}"),
                "clip": "walk",
                "classes": 4,
                "rounds": 100,
                "pretrain_steps": 2000,
                "metric_library_per_class": 25,
                "rl_samples_per_round": 1024,
                "rl_hidden": "64,64",
                "eval_episodes": 10,
            }
        )
        pretrained = pretrain_metric(config)
        returns = {}
        for mode in ("combined", "spatial"):
            run = config.with_overrides(
                mode=mode, out=str(tmp_path / f"{mode}_{seed}"), metric_checkpoint=str(pretrained.checkpoint)
            )
            summary = run_training(run)
            assert summary.max_accepted_kl <= run.rl_max_kl
            returns[mode] = evaluate_checkpoint(summary.checkpoint, run).mean_return
        baseline = random_baseline(config).mean_return
        wins += int(returns["combined"] > baseline and returns["combined"] > returns["spatial"])
    assert wins >= 2
