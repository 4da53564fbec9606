"""Frame-sequence records shared by the environment, the pair factory and the metric."""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import LengthMismatchError, ShapeMismatchError

SequenceSource = Literal["policy", "expert"]


class MotionSequence(BaseModel):
    """Ordered grayscale frames (T, H, W) with pixel values in [0, 1]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frames: np.ndarray = Field(description="(T, H, W) float32 frames")
    class_id: int = Field(default=-1, description="Motion class, -1 when unlabelled")
    speed: float = Field(default=1.0, description="Speed modifier the clip was replayed at")
    source: SequenceSource = Field(default="expert", description="Who produced the frames")

    @field_validator("frames")
    @classmethod
    def _check_frames(cls, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float32)
        if frames.ndim != 3:
            raise ShapeMismatchError("MotionSequence", [tuple(frames.shape)], "expected (T, H, W)")
        return frames

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    def with_frames(self, frames: np.ndarray) -> "MotionSequence":
        return self.model_copy(update={"frames": np.asarray(frames, dtype=np.float32)})

    def window(self, start: int, length: int) -> "MotionSequence":
        return self.with_frames(self.frames[start : start + length])


class Episode(BaseModel):
    """One rollout as the metric sees it: agent frames next to synchronised demo frames."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    agent: MotionSequence
    demo: MotionSequence
    class_id: int = Field(default=0, description="Class of the imitated clip")
    steps: int = Field(description="Control steps in the episode")

    @field_validator("demo")
    @classmethod
    def _same_length(cls, demo: MotionSequence, info) -> MotionSequence:  # type: ignore[no-untyped-def]
        agent = info.data.get("agent")
        if agent is not None and len(agent) != len(demo):
            raise LengthMismatchError(
                f"agent ({len(agent)}) and demo ({len(demo)}) sequences differ in length"
            )
        return demo

    def __len__(self) -> int:
        return len(self.agent)


class LabeledPair(BaseModel):
    """Two same-length sequences and whether they should be near (y=1) or far (y=0)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    anchor: MotionSequence
    other: MotionSequence
    y: Literal[0, 1]
    provenance: str = Field(description="Augmentation rule or class rule that produced the pair")


TripletBatch = list[LabeledPair]
