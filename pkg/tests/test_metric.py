"""Tests for the distance losses, the metric training step and the RL reward."""

import math

import numpy as np
import pytest

from virl.autodiff import Adam, Tensor
from virl.env import demo_frames
from virl.errors import EmptySourcesError, LengthMismatchError, NonFiniteLossError, VirlError
from virl.metric import (
    MetricLossWeights,
    MetricTrainer,
    bernoulli_cross_entropy,
    class_separation,
    distance_profile,
    episode_rewards,
    gaussian_kl,
    seq_ae_loss,
    shaped_reward,
    snapshot,
    target_entropy,
    triplet_loss,
    vae_loss,
)
from virl.nets import SiameseNetwork
from virl.sequences import LabeledPair, MotionSequence


def pair(anchor: MotionSequence, other: MotionSequence, y: int) -> LabeledPair:
    return LabeledPair(anchor=anchor, other=other, y=y, provenance="test")


class TestShapedReward:
    def test_unit_distance(self):
        assert shaped_reward(1.0, -5.0) == pytest.approx(math.exp(-5.0))

    def test_zero_distance_is_one(self):
        assert shaped_reward(0.0) == 1.0

    def test_vector_is_monotone(self):
        rewards = shaped_reward(np.array([0.0, 0.1, 0.5, 2.0]))
        assert np.all(np.diff(rewards) < 0)
        assert np.all((rewards > 0) & (rewards <= 1))

    def test_non_negative_width_rejected(self):
        with pytest.raises(VirlError, match="w_d"):
            shaped_reward(1.0, 0.0)

    def test_negative_distance_rejected(self):
        with pytest.raises(VirlError):
            shaped_reward(np.array([0.5, -0.1]))

    def test_far_distance_stays_positive(self):
        # exp(-5 * 13^2) underflows float64
        assert shaped_reward(13.0, -5.0) > 0.0
        rewards = shaped_reward(np.array([12.0, 13.0, 100.0]))
        assert np.all(rewards > 0.0)
        assert np.all(np.diff(rewards) <= 0)


class TestDistanceProfile:
    def test_identical_sequences_are_exactly_zero(self, small_net, sequence_factory, rng):
        frames = sequence_factory(rng).frames
        profile = distance_profile(small_net, frames, frames.copy())
        assert np.all(profile.spatial == 0.0)
        assert np.all(profile.temporal == 0.0)

    def test_identical_sequences_give_unit_rewards(self, small_net, sequence_factory, rng):
        frames = sequence_factory(rng).frames
        rewards = episode_rewards(small_net, frames, frames.copy())
        assert rewards.shape == (len(frames) - 1,)
        assert np.all(rewards == 1.0)

    def test_different_sequences_are_positive(self, small_net, sequence_factory, rng):
        a, b = sequence_factory(rng).frames, sequence_factory(rng).frames
        profile = distance_profile(small_net, a, b)
        assert np.all(profile.combined > 0)
        np.testing.assert_allclose(profile.selected(), profile.spatial + profile.temporal)

    def test_modes_select_terms(self, small_net, sequence_factory, rng):
        a, b = sequence_factory(rng).frames, sequence_factory(rng).frames
        spatial = distance_profile(small_net, a, b, "spatial")
        temporal = distance_profile(small_net, a, b, "temporal")
        np.testing.assert_array_equal(spatial.selected(), spatial.spatial)
        np.testing.assert_array_equal(temporal.selected(), temporal.temporal)

    def test_negdist_rewards(self, small_net, sequence_factory, rng):
        a, b = sequence_factory(rng).frames, sequence_factory(rng).frames
        rewards = episode_rewards(small_net, a, b, kind="negdist")
        assert np.all(rewards < 0)

    def test_length_mismatch(self, small_net, rng):
        with pytest.raises(LengthMismatchError):
            distance_profile(small_net, rng.random((4, 16, 16)), rng.random((5, 16, 16)))


class TestLossTerms:
    def test_triplet_of_identical_pair(self, small_net, sequence_factory, rng):
        seq = sequence_factory(rng)
        assert triplet_loss(small_net, pair(seq, seq, 1)).item() == pytest.approx(0.0, abs=1e-5)
        assert triplet_loss(small_net, pair(seq, seq, 0), margin=1.0).item() == pytest.approx(1.0, abs=1e-5)

    def test_triplet_rejects_length_mismatch(self, small_net, sequence_factory, rng):
        with pytest.raises(LengthMismatchError):
            triplet_loss(small_net, pair(sequence_factory(rng, length=4), sequence_factory(rng, length=5), 1))

    def test_kl_of_standard_normal_is_zero(self):
        kl = gaussian_kl(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 4))))
        np.testing.assert_allclose(kl.numpy(), [0.0, 0.0])

    def test_cross_entropy_bounded_by_target_entropy(self, rng):
        targets = rng.random((3, 16, 16))
        ce = bernoulli_cross_entropy(Tensor(rng.standard_normal((3, 16, 16))), targets).numpy()
        assert np.all(ce >= target_entropy(targets) - 1e-5)


class TestMetricTrainer:
    def test_train_step_reports_and_updates(self, small_net, sequence_factory, rng):
        before = small_net.store.vector().copy()
        trainer = MetricTrainer(small_net, lr=1e-3, rng=np.random.default_rng(1))
        a, b = sequence_factory(rng, class_id=0), sequence_factory(rng, class_id=1)
        report = trainer.train_step([pair(a, a, 1), pair(a, b, 0)])
        assert report.batch_size == 2
        assert all(math.isfinite(v) for v in (report.triplet, report.vae, report.seq_ae, report.total))
        assert not np.array_equal(small_net.store.vector(), before)

    def test_zero_learning_rate_leaves_parameters(self, small_net, sequence_factory, rng):
        before = small_net.store.vector().copy()
        trainer = MetricTrainer(small_net, rng=np.random.default_rng(1))
        seq = sequence_factory(rng)
        trainer.train_step([pair(seq, seq, 1)], lr=0.0)
        np.testing.assert_array_equal(small_net.store.vector(), before)

    def test_empty_batch(self, small_net):
        with pytest.raises(EmptySourcesError):
            MetricTrainer(small_net).train_step([])

    def test_non_finite_sample_aborts_step(self, small_net, sequence_factory, rng):
        before = small_net.store.vector().copy()
        good = sequence_factory(rng)
        frames = good.frames.copy()
        frames[2, 3, 3] = np.nan
        bad = good.with_frames(frames)
        with pytest.raises(NonFiniteLossError) as exc_info:
            MetricTrainer(small_net, lr=1e-3).train_step([pair(good, good, 1), pair(bad, good, 0)])
        assert exc_info.value.sample_index == 1
        np.testing.assert_array_equal(small_net.store.vector(), before)

    def test_weights_validate_width(self):
        with pytest.raises(ValueError):
            MetricLossWeights(w_d=1.0)


class TestSnapshotAndSeparation:
    def test_snapshot_is_frozen(self, small_net, sequence_factory, rng):
        frozen = snapshot(small_net)
        name = small_net.store.names()[0]
        small_net.store.set_value(name, small_net.store.value(name) + 1.0)
        assert not np.array_equal(frozen.store.value(name), small_net.store.value(name))

    def test_class_separation(self, small_net, sequence_factory, rng):
        sequences = [sequence_factory(rng, class_id=c) for c in (0, 0, 1, 1)]
        inter, intra, ratio = class_separation(small_net, sequences)
        assert inter > 0 and intra > 0
        assert ratio == pytest.approx(inter / intra)

    def test_class_separation_needs_two_classes(self, small_net, sequence_factory, rng):
        with pytest.raises(VirlError):
            class_separation(small_net, [sequence_factory(rng, class_id=0) for _ in range(3)])


class TestTrainingDynamics:
    """Each loss term goes down when optimised on its own."""

    @pytest.fixture
    def net(self, small_arch) -> SiameseNetwork:
        return SiameseNetwork(small_arch.model_copy(update={"dropout": 0.0}), rng=np.random.default_rng(3))

    def test_triplet_loss_rarely_increases(self, net, sequence_factory, rng):
        a, b, c, d = (sequence_factory(rng, class_id=i % 2) for i in range(4))
        optimizer = Adam(net.store, lr=1e-4)
        history = []
        for _ in range(51):
            net.store.zero_grad()
            loss = triplet_loss(net, pair(a, b, 1)) + triplet_loss(net, pair(c, d, 0))
            history.append(loss.item())
            loss.backward()
            optimizer.step()
        non_increasing = sum(after <= before + 1e-7 for before, after in zip(history, history[1:]))
        assert non_increasing >= 45

    @pytest.mark.slow
    def test_vae_loss_falls_over_500_steps(self, net, walk, env_config):
        frames = demo_frames(walk, env_config, 4)
        optimizer = Adam(net.store, lr=3e-3)
        noise = np.random.default_rng(5)
        history = []
        for _ in range(500):
            net.store.zero_grad()
            loss = vae_loss(net, frames, MetricLossWeights().w_vae, noise)
            history.append(loss.item())
            loss.backward()
            optimizer.step()
        assert np.mean(history[-10:]) < 0.7 * history[0]

    @pytest.mark.slow
    def test_sequence_autoencoder_loss_halves(self, net, sequence_factory, rng):
        frames = sequence_factory(rng).frames
        optimizer = Adam(net.store, lr=3e-3)
        first = None
        for _ in range(500):
            net.store.zero_grad()
            loss = seq_ae_loss(net, net.encode_sequence(frames))
            first = loss.item() if first is None else first
            loss.backward()
            optimizer.step()
        assert seq_ae_loss(net, net.encode_sequence(frames)).item() <= 0.5 * first
