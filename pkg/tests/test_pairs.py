"""Tests for augmentation rules, cropping and batch building."""

from collections import Counter

import numpy as np
import pytest

from virl.errors import (
    DegenerateSequenceError,
    EmptySequenceError,
    EmptySourcesError,
    SequenceTooShortError,
)
from virl.memory import ExperienceMemory
from virl.pairs import (
    NEGATIVE_VARIANTS,
    applicable_negatives,
    build_batch,
    class_pairs,
    crop_window,
    eesp_crop_start,
    eesp_probabilities,
    is_palindrome,
    make_negative,
    make_positive,
    negative_pair,
    positive_pair,
)
from virl.sequences import Episode, MotionSequence


def constant_sequence(length: int = 5, value: float = 0.3) -> MotionSequence:
    return MotionSequence(frames=np.full((length, 16, 16), value))


def palindrome_sequence(rng: np.random.Generator) -> MotionSequence:
    half = rng.random((2, 16, 16))
    return MotionSequence(frames=np.concatenate([half, rng.random((1, 16, 16)), half[::-1]]))


def episode_from(rng: np.random.Generator, length: int = 10) -> Episode:
    agent = MotionSequence(frames=rng.random((length, 16, 16)), source="policy")
    demo = MotionSequence(frames=rng.random((length, 16, 16)))
    return Episode(agent=agent, demo=demo, class_id=0, steps=length)


class TestPositiveRules:
    def test_noise_variance(self, rng):
        seq = MotionSequence(frames=np.full((50, 16, 16), 0.5))
        noisy = make_positive(seq, rng, "noise")
        assert np.var(noisy.frames - seq.frames) == pytest.approx(0.02, rel=0.05)

    def test_noise_is_clipped(self, rng):
        seq = MotionSequence(frames=np.zeros((3, 16, 16)))
        noisy = make_positive(seq, rng, "noise")
        assert noisy.frames.min() >= 0.0 and noisy.frames.max() <= 1.0

    def test_desync_pairs_shifted_windows(self, sequence_factory, rng):
        seq = sequence_factory(rng, length=6)
        p = positive_pair(seq, rng, "desync")
        assert p.y == 1
        np.testing.assert_array_equal(p.anchor.frames, seq.frames[:-1])
        np.testing.assert_array_equal(p.other.frames, seq.frames[1:])

    def test_duplicate_first_keeps_length(self, sequence_factory, rng):
        seq = sequence_factory(rng, length=5)
        out = make_positive(seq, rng, "dup_first")
        assert len(out) == 5
        np.testing.assert_array_equal(out.frames[0], out.frames[1])
        np.testing.assert_array_equal(out.frames[1:], seq.frames[:-1])

    def test_duplicate_last_keeps_length(self, sequence_factory, rng):
        seq = sequence_factory(rng, length=5)
        out = make_positive(seq, rng, "dup_last")
        np.testing.assert_array_equal(out.frames[-1], out.frames[-2])

    def test_single_frame_only_gets_noise(self, rng):
        seq = MotionSequence(frames=rng.random((1, 16, 16)))
        assert positive_pair(seq, rng).provenance == "noise"
        with pytest.raises(SequenceTooShortError):
            make_positive(seq, rng, "dup_first")

    def test_empty_sequence(self, rng):
        with pytest.raises(EmptySequenceError):
            make_positive(MotionSequence(frames=np.zeros((0, 16, 16))), rng, "noise")


class TestNegativeRules:
    @pytest.mark.parametrize("variant", ["reverse", "replicate_random", "shuffle_one"])
    def test_negative_differs_from_input(self, variant, sequence_factory, rng):
        seq = sequence_factory(rng, length=5)
        out = make_negative(seq, rng, variant)
        assert out.frames.shape == seq.frames.shape
        assert not np.array_equal(out.frames, seq.frames)

    def test_shuffle_preserves_frame_multiset(self, rng):
        seq = MotionSequence(frames=np.stack([np.full((16, 16), v) for v in (0.1, 0.2, 0.3, 0.4)]))
        out = make_negative(seq, rng, "shuffle_one")
        assert sorted(out.frames[:, 0, 0].tolist()) == pytest.approx([0.1, 0.2, 0.3, 0.4])

    def test_shuffle_both_members_differ(self, sequence_factory, rng):
        seq = sequence_factory(rng, length=4)
        p = negative_pair(seq, rng, "shuffle_both")
        assert p.y == 0
        assert not np.array_equal(p.anchor.frames, p.other.frames)

    def test_two_frame_shuffle_swaps(self, sequence_factory, rng):
        seq = sequence_factory(rng, length=2)
        out = make_negative(seq, rng, "shuffle_one")
        np.testing.assert_array_equal(out.frames, seq.frames[::-1])

    def test_constant_sequence_is_degenerate(self):
        seq = constant_sequence()
        assert applicable_negatives(seq) == ()
        with pytest.raises(DegenerateSequenceError):
            make_negative(seq, np.random.default_rng(0), "reverse")

    def test_palindrome_excludes_reverse(self, rng):
        seq = palindrome_sequence(rng)
        assert is_palindrome(seq.frames)
        assert "reverse" not in applicable_negatives(seq)
        with pytest.raises(DegenerateSequenceError):
            make_negative(seq, rng, "reverse")

    def test_constant_sequence_uses_fallback(self, rng):
        seq = constant_sequence(value=0.3)
        fallback = MotionSequence(frames=np.full((3, 16, 16), 0.9))
        p = negative_pair(seq, rng, fallback=fallback)
        assert p.provenance == "replicate_random_fallback"
        assert len(p.other) == len(seq)
        assert np.allclose(p.other.frames, 0.9)

    def test_no_fallback_raises(self):
        with pytest.raises(DegenerateSequenceError):
            negative_pair(constant_sequence(), np.random.default_rng(0))

    def test_rules_are_drawn_uniformly(self, sequence_factory):
        rng = np.random.default_rng(11)
        seq = sequence_factory(rng, length=5)
        counts = Counter(negative_pair(seq, rng).provenance for _ in range(800))
        assert set(counts) == set(NEGATIVE_VARIANTS)
        assert all(150 < c < 250 for c in counts.values())


class TestCropping:
    def test_probabilities(self):
        p = eesp_probabilities(4)
        np.testing.assert_allclose(p, [0.4, 0.3, 0.2, 0.1])

    def test_start_frequencies(self):
        rng = np.random.default_rng(5)
        draws = np.bincount([eesp_crop_start(4, rng) for _ in range(20000)], minlength=4) / 20000
        np.testing.assert_allclose(draws, [0.4, 0.3, 0.2, 0.1], atol=0.015)

    def test_window_is_aligned_and_bounded(self, rng):
        episode = episode_from(rng, length=10)
        for _ in range(50):
            agent, demo = crop_window(episode, rng, min_len=4)
            assert 4 <= len(agent) == len(demo) <= 10
            start = int(np.flatnonzero(np.all(episode.agent.frames == agent.frames[0], axis=(1, 2)))[0])
            np.testing.assert_array_equal(demo.frames, episode.demo.frames[start : start + len(demo)])

    def test_episode_too_short(self, rng):
        with pytest.raises(SequenceTooShortError):
            crop_window(episode_from(rng, length=3), rng, min_len=4)

    def test_mean_window_grows_with_episode_length(self, rng):
        """E[window] = 4 + 2 (L - 4) / 9 for min_len 4."""
        means = []
        for length in (4, 6, 8, 12, 16, 24):
            episode = episode_from(rng, length=length)
            sizes = np.array([len(crop_window(episode, rng, min_len=4)[0]) for _ in range(2000)])
            expected = 4 + 2 * (length - 4) / 9
            assert abs(sizes.mean() - expected) <= 5 * sizes.std() / np.sqrt(sizes.size) + 1e-9
            means.append(sizes.mean())
        assert np.all(np.diff(means) > 0)


class TestBatches:
    def library(self, rng):
        return [MotionSequence(frames=rng.random((6, 16, 16)), class_id=c) for c in (0, 0, 1, 1)]

    def test_class_pairs_labels(self, rng):
        library = self.library(rng)
        positive, negative = class_pairs(library, rng)
        assert positive.y == 1 and negative.y == 0
        assert positive.anchor.class_id == positive.other.class_id
        assert negative.anchor.class_id != negative.other.class_id

    def test_class_pairs_need_two_classes(self, rng):
        with pytest.raises(EmptySourcesError):
            class_pairs([MotionSequence(frames=rng.random((3, 16, 16)), class_id=0)] * 2, rng)

    def test_single_clip_class_is_never_paired_with_itself(self, rng):
        library = [MotionSequence(frames=rng.random((6, 16, 16)), class_id=c) for c in (0, 1, 1)]
        for _ in range(50):
            positive, negative = class_pairs(library, rng)
            assert positive.anchor.class_id == 1
            assert not np.array_equal(positive.anchor.frames, positive.other.frames)
            assert negative.other.class_id == 0

    def test_all_single_clip_classes_raise(self, rng):
        library = [MotionSequence(frames=rng.random((6, 16, 16)), class_id=c) for c in (0, 1)]
        with pytest.raises(EmptySourcesError) as exc_info:
            class_pairs(library, rng)
        assert exc_info.value.details["classes"] == {"0": 1, "1": 1}

    def test_batch_with_only_single_clip_classes_needs_memory(self, rng):
        library = [MotionSequence(frames=rng.random((6, 16, 16)), class_id=c) for c in (0, 1)]
        with pytest.raises(EmptySourcesError):
            build_batch(ExperienceMemory(), library, 4, rng)

    def test_batch_from_library_only(self, rng):
        batch = build_batch(ExperienceMemory(), self.library(rng), 6, rng)
        assert len(batch) == 6
        assert Counter(p.y for p in batch) == Counter({1: 3, 0: 3})

    def test_batch_from_memory_only(self, rng):
        memory = ExperienceMemory(capacity=5)
        memory.extend(episode_from(rng) for _ in range(3))
        batch = build_batch(memory, [], 4, rng, min_len=4)
        assert len(batch) == 4
        assert all(p.provenance not in ("same_class", "cross_class") for p in batch)
        assert all(len(p.anchor) == len(p.other) for p in batch)

    def test_no_sources(self, rng):
        with pytest.raises(EmptySourcesError):
            build_batch(ExperienceMemory(), [], 4, rng)

    @pytest.mark.slow
    def test_mix_sets_the_augmentation_share(self, rng):
        memory = ExperienceMemory()
        memory.extend(episode_from(rng) for _ in range(20))
        batch = build_batch(memory, self.library(rng), 20_000, rng, mix=0.5)
        augmented = sum(p.provenance not in ("same_class", "cross_class") for p in batch)
        assert augmented / len(batch) == pytest.approx(0.5, abs=0.02)


class TestExperienceMemory:
    def test_fifo_eviction(self, rng):
        memory = ExperienceMemory(capacity=2)
        episodes = [episode_from(rng, length=n) for n in (4, 5, 6)]
        memory.extend(episodes)
        assert [len(ep) for ep in memory] == [5, 6]

    def test_sample_respects_min_length(self, rng):
        memory = ExperienceMemory()
        memory.extend([episode_from(rng, length=3), episode_from(rng, length=8)])
        assert all(len(memory.sample(rng, min_len=5)) == 8 for _ in range(10))

    def test_sample_without_candidates(self, rng):
        with pytest.raises(EmptySourcesError):
            ExperienceMemory().sample(rng)

    def test_capacity_must_be_positive(self):
        with pytest.raises(ValueError):
            ExperienceMemory(capacity=0)
