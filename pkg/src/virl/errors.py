"""Exception hierarchy for virl.

Every error carries a machine-readable ``error_type`` so the CLI and the MCP
tools can report it as a structured ErrorDetail.
"""

from typing import Any, Optional

from .models import ErrorDetail, ErrorType


class VirlError(Exception):
    """Base class for all virl errors."""

    error_type: ErrorType = "execution_error"
    suggestion: Optional[str] = None

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
        suggestion: Optional[str] = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}
        if suggestion is not None:
            self.suggestion = suggestion

    def to_detail(self) -> ErrorDetail:
        return ErrorDetail(
            error_type=self.error_type,
            message=self.message,
            details=self.details or None,
            suggestion=self.suggestion,
        )


class ShapeMismatchError(VirlError):
    error_type: ErrorType = "shape_mismatch"

    def __init__(self, op: str, shapes: list[tuple[int, ...]], reason: str = "") -> None:
        message = f"{op}: incompatible shapes {shapes}"
        if reason:
            message += f" ({reason})"
        super().__init__(message, {"op": op, "shapes": [list(s) for s in shapes]})
        self.op = op


class NonFiniteError(VirlError):
    error_type: ErrorType = "non_finite"

    def __init__(self, op: str, node_id: int) -> None:
        super().__init__(
            f"{op} produced a non-finite value at node {node_id}",
            {"op": op, "node_id": node_id},
            suggestion="Lower the learning rate or check the inputs for NaN/inf",
        )
        self.op = op
        self.node_id = node_id


class BackwardBeforeForwardError(VirlError):
    error_type: ErrorType = "backward_before_forward"


class EmptySequenceError(VirlError):
    error_type: ErrorType = "empty_sequence"


class SequenceTooShortError(VirlError):
    error_type: ErrorType = "sequence_too_short"


class DegenerateSequenceError(VirlError):
    error_type: ErrorType = "degenerate_sequence"
    suggestion = "Pair the anchor with replicate_random of a different episode instead"


class LengthMismatchError(VirlError):
    error_type: ErrorType = "length_mismatch"


class EmptySourcesError(VirlError):
    error_type: ErrorType = "empty_sources"


class NonFiniteLossError(VirlError):
    error_type: ErrorType = "non_finite_loss"

    def __init__(self, sample_index: int, component: str) -> None:
        super().__init__(
            f"non-finite {component} loss at sample {sample_index}; step aborted",
            {"sample_index": sample_index, "component": component},
        )
        self.sample_index = sample_index


class NonFiniteGradientError(VirlError):
    error_type: ErrorType = "non_finite_gradient"


class ConfigError(VirlError):
    error_type: ErrorType = "config_error"


class CheckpointError(VirlError):
    error_type: ErrorType = "checkpoint_error"


class InvalidActionError(VirlError):
    error_type: ErrorType = "invalid_action"


class EmptyTrajectoryError(VirlError):
    error_type: ErrorType = "empty_trajectory"
