"""Self-supervised pair construction for the distance metric.

Augmentation pairs alter a copy of a cropped episode sequence and compare it
with the original. Class pairs come from the multitask library: same class is
positive, different class is negative.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateSequenceError,
    EmptySequenceError,
    EmptySourcesError,
    SequenceTooShortError,
    VirlError,
)
from .memory import ExperienceMemory
from .sequences import Episode, LabeledPair, MotionSequence, TripletBatch

logger = logging.getLogger(__name__)

POSITIVE_VARIANTS = ("noise", "desync", "dup_first", "dup_last")
NEGATIVE_VARIANTS = ("reverse", "replicate_random", "shuffle_one", "shuffle_both")
NOISE_VARIANCE = 0.02
DEGENERATE_TOL = 1e-6
_SHUFFLE_TRIES = 32


def is_frame_constant(frames: np.ndarray, tol: float = DEGENERATE_TOL) -> bool:
    return bool(np.max(np.abs(frames - frames[:1]), initial=0.0) <= tol)


def is_palindrome(frames: np.ndarray, tol: float = DEGENERATE_TOL) -> bool:
    return bool(np.max(np.abs(frames - frames[::-1]), initial=0.0) <= tol)


def _differs(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.max(np.abs(a - b), initial=0.0) > DEGENERATE_TOL)


def _require_length(seq: MotionSequence, minimum: int, variant: str) -> None:
    if len(seq) == 0:
        raise EmptySequenceError(f"{variant} needs a nonempty sequence")
    if len(seq) < minimum:
        raise SequenceTooShortError(
            f"{variant} needs at least {minimum} frames, got {len(seq)}",
            {"variant": variant, "length": len(seq)},
        )


def _guard(seq: MotionSequence, variant: str) -> None:
    frames = seq.frames
    if is_frame_constant(frames):
        raise DegenerateSequenceError(
            f"{variant} of a frame-constant sequence would equal its input",
            {"variant": variant},
            suggestion="Use replicate_random against a different episode",
        )
    if variant == "reverse" and is_palindrome(frames):
        raise DegenerateSequenceError("reverse of a palindromic sequence equals its input", {"variant": variant})


def _shuffled(frames: np.ndarray, rng: np.random.Generator, avoid: np.ndarray) -> np.ndarray:
    for _ in range(_SHUFFLE_TRIES):
        candidate = frames[rng.permutation(len(frames))]
        if _differs(candidate, avoid):
            return candidate
    # rolling a non-constant sequence by one always changes it
    return np.roll(avoid, 1, axis=0)


# Positive rules


def make_positive(seq: MotionSequence, rng: np.random.Generator, variant: str) -> MotionSequence:
    """The altered copy for one positive rule."""
    frames = seq.frames
    if variant == "noise":
        _require_length(seq, 1, variant)
        noise = rng.standard_normal(frames.shape) * math.sqrt(NOISE_VARIANCE)
        return seq.with_frames(np.clip(frames + noise, 0.0, 1.0))
    if variant not in POSITIVE_VARIANTS:
        raise VirlError(f"unknown positive variant {variant!r}", {"variants": list(POSITIVE_VARIANTS)})
    _require_length(seq, 2, variant)
    if variant == "desync":
        return seq.with_frames(frames[1:])
    if variant == "dup_first":
        return seq.with_frames(np.concatenate([frames[:1], frames[:-1]]))
    return seq.with_frames(np.concatenate([frames[1:], frames[-1:]]))


def positive_pair(
    seq: MotionSequence, rng: np.random.Generator, variant: Optional[str] = None
) -> LabeledPair:
    if variant is None:
        options = POSITIVE_VARIANTS if len(seq) >= 2 else ("noise",)
        variant = options[int(rng.integers(len(options)))]
    if variant == "desync":
        _require_length(seq, 2, variant)
        anchor = seq.with_frames(seq.frames[:-1])
        return LabeledPair(anchor=anchor, other=make_positive(seq, rng, variant), y=1, provenance=variant)
    return LabeledPair(anchor=seq, other=make_positive(seq, rng, variant), y=1, provenance=variant)


# Negative rules


def make_negative(seq: MotionSequence, rng: np.random.Generator, variant: str) -> MotionSequence:
    """The altered copy for one negative rule; never equal to ``seq``."""
    if variant not in NEGATIVE_VARIANTS:
        raise VirlError(f"unknown negative variant {variant!r}", {"variants": list(NEGATIVE_VARIANTS)})
    _require_length(seq, 2, variant)
    _guard(seq, variant)
    frames = seq.frames
    if variant == "reverse":
        return seq.with_frames(frames[::-1].copy())
    if variant == "replicate_random":
        return replicate_frame(seq, rng, len(seq))
    return seq.with_frames(_shuffled(frames, rng, avoid=frames))


def replicate_frame(source: MotionSequence, rng: np.random.Generator, length: int) -> MotionSequence:
    """One random frame of ``source`` tiled to ``length``."""
    frame = source.frames[int(rng.integers(len(source)))]
    return source.with_frames(np.repeat(frame[None], length, axis=0))


def applicable_negatives(seq: MotionSequence) -> tuple[str, ...]:
    if len(seq) < 2 or is_frame_constant(seq.frames):
        return ()
    if is_palindrome(seq.frames):
        return tuple(v for v in NEGATIVE_VARIANTS if v != "reverse")
    return NEGATIVE_VARIANTS


def negative_pair(
    seq: MotionSequence,
    rng: np.random.Generator,
    variant: Optional[str] = None,
    fallback: Optional[MotionSequence] = None,
) -> LabeledPair:
    """A y=0 pair; degenerate inputs use a frame of ``fallback`` tiled to length."""
    options = applicable_negatives(seq)
    if variant is None and options:
        variant = options[int(rng.integers(len(options)))]
    if variant is None or (variant not in options and variant in NEGATIVE_VARIANTS and len(seq) >= 2):
        if fallback is None:
            raise DegenerateSequenceError(
                "no negative rule applies and no fallback episode was given", {"length": len(seq)}
            )
        other = replicate_frame(fallback, rng, len(seq))
        return LabeledPair(anchor=seq, other=other, y=0, provenance="replicate_random_fallback")
    if variant == "shuffle_both":
        _require_length(seq, 2, variant)
        _guard(seq, variant)
        first = _shuffled(seq.frames, rng, avoid=seq.frames)
        second = _shuffled(seq.frames, rng, avoid=first)
        return LabeledPair(
            anchor=seq.with_frames(first), other=seq.with_frames(second), y=0, provenance=variant
        )
    return LabeledPair(anchor=seq, other=make_negative(seq, rng, variant), y=0, provenance=variant)


# Cropping


def eesp_probabilities(length: int) -> np.ndarray:
    """p(i) = (L - i) / sum_j (L - j) for i in [0, L)."""
    if length < 1:
        raise VirlError(f"crop length must be >= 1, got {length}")
    weights = np.arange(length, 0, -1, dtype=np.float64)
    return weights / weights.sum()


def eesp_crop_start(length: int, rng: np.random.Generator) -> int:
    if length == 1:
        return 0
    return int(rng.choice(length, p=eesp_probabilities(length)))


def crop_window(
    episode: Episode, rng: np.random.Generator, min_len: int = 4
) -> tuple[MotionSequence, MotionSequence]:
    """Cut agent and demo at the same (start, length), favouring early starts and short windows."""
    length = len(episode)
    if length < min_len:
        raise SequenceTooShortError(
            f"episode of {length} steps is shorter than the minimum crop {min_len}",
            {"length": length, "min_len": min_len},
        )
    start = eesp_crop_start(length - min_len + 1, rng)
    size = min_len + eesp_crop_start(length - start - min_len + 1, rng)
    return episode.agent.window(start, size), episode.demo.window(start, size)


# Batches


def _common_length(a: MotionSequence, b: MotionSequence) -> tuple[MotionSequence, MotionSequence]:
    n = min(len(a), len(b))
    return a.window(0, n), b.window(0, n)


def _library_supplies_pairs(library: Sequence[MotionSequence]) -> bool:
    counts: dict[int, int] = {}
    for seq in library:
        counts[seq.class_id] = counts.get(seq.class_id, 0) + 1
    return len(counts) >= 2 and max(counts.values()) >= 2


def class_pairs(
    library: Sequence[MotionSequence], rng: np.random.Generator
) -> tuple[LabeledPair, LabeledPair]:
    """(same-class positive, cross-class negative) around one random anchor."""
    by_class: dict[int, list[int]] = {}
    for i, seq in enumerate(library):
        by_class.setdefault(seq.class_id, []).append(i)
    if len(by_class) < 2:
        raise EmptySourcesError("class pairs need at least two motion classes", {"classes": list(by_class)})
    # a positive needs a distinct clip of the same class
    anchors = [i for members in by_class.values() if len(members) >= 2 for i in members]
    if not anchors:
        raise EmptySourcesError(
            "class pairs need a motion class with at least two clips",
            {"classes": {str(c): len(m) for c, m in by_class.items()}},
            suggestion="Raise metric_library_per_class above 1",
        )
    singletons = [c for c, members in by_class.items() if len(members) < 2]
    if singletons:
        logger.debug("single-clip classes are not used as anchors", extra={"classes": singletons})

    anchor_idx = anchors[int(rng.integers(len(anchors)))]
    anchor = library[anchor_idx]
    same = [i for i in by_class[anchor.class_id] if i != anchor_idx]
    other_classes = [c for c in by_class if c != anchor.class_id]
    positive = library[same[int(rng.integers(len(same)))]]
    negative_class = other_classes[int(rng.integers(len(other_classes)))]
    pool = by_class[negative_class]
    negative = library[pool[int(rng.integers(len(pool)))]]

    a, p = _common_length(anchor, positive)
    b, n = _common_length(anchor, negative)
    return (
        LabeledPair(anchor=a, other=p, y=1, provenance="same_class"),
        LabeledPair(anchor=b, other=n, y=0, provenance="cross_class"),
    )


def augmentation_pairs(
    memory: ExperienceMemory,
    library: Sequence[MotionSequence],
    rng: np.random.Generator,
    min_len: int = 4,
) -> tuple[LabeledPair, LabeledPair]:
    """(positive, negative) from one cropped episode, rules drawn uniformly."""
    episode = memory.sample(rng, min_len=min_len)
    agent, demo = crop_window(episode, rng, min_len)
    anchor = agent if rng.random() < 0.5 else demo
    positive = positive_pair(anchor, rng)

    fallback: Optional[MotionSequence] = None
    if not applicable_negatives(anchor):
        fallback = _fallback_source(anchor, episode, memory, library, rng, min_len)
    negative = negative_pair(anchor, rng, fallback=fallback)
    return positive, negative


def _fallback_source(
    anchor: MotionSequence,
    episode: Episode,
    memory: ExperienceMemory,
    library: Sequence[MotionSequence],
    rng: np.random.Generator,
    min_len: int,
) -> Optional[MotionSequence]:
    others = [ep for ep in memory.episodes() if ep is not episode and len(ep) >= 1]
    candidates: list[MotionSequence] = []
    for ep in others:
        candidates.extend([ep.agent, ep.demo])
    candidates.extend(library)
    if not is_frame_constant(episode.demo.frames):
        candidates.append(episode.demo)
    candidates = [c for c in candidates if len(c) and _differs(c.frames.mean(axis=0), anchor.frames[0])]
    if not candidates:
        return None
    return candidates[int(rng.integers(len(candidates)))]


def build_batch(
    memory: ExperienceMemory,
    library: Sequence[MotionSequence],
    n: int,
    rng: np.random.Generator,
    mix: float = 0.5,
    min_len: int = 4,
) -> TripletBatch:
    """``n`` labelled pairs; each anchor contributes one positive and one negative.

    With probability ``mix`` an anchor is an augmentation anchor (cropped episode),
    otherwise a class anchor from the library. Missing sources fall back to the other.
    """
    if n < 1:
        raise VirlError(f"batch size must be positive, got {n}")
    has_memory = bool(memory.eligible(min_len))
    has_library = _library_supplies_pairs(library)
    if not has_memory and not has_library:
        raise EmptySourcesError(
            "neither experience memory nor multitask library can supply pairs",
            {"memory_size": len(memory), "library_size": len(library)},
            suggestion="Collect rollouts first or provide at least two motion classes",
        )

    batch: TripletBatch = []
    failures = 0
    while len(batch) < n:
        use_memory = has_memory and (not has_library or rng.random() < mix)
        try:
            if use_memory:
                pair = augmentation_pairs(memory, library, rng, min_len)
            else:
                pair = class_pairs(library, rng)
        except DegenerateSequenceError:
            failures += 1
            if failures > 10 * n:
                raise EmptySourcesError("every candidate anchor was degenerate", {"failures": failures})
            continue
        batch.extend(pair)
    batch = batch[:n]
    augmented = sum(p.provenance not in ("same_class", "cross_class") for p in batch)
    logger.debug("built pair batch", extra={"pairs": len(batch), "augmentation": augmented})
    return batch
