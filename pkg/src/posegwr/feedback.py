"""Per-frame pose comparison: joint errors, red/green flags, run verdicts, overlays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body25 import BONES, JOINT_NAMES, NUM_JOINTS
from .pose import KeypointFrame

GREEN = "green"
RED = "red"
MASKED = "masked"


@dataclass(frozen=True)
class FeedbackFrame:
    frame_index: int
    errors: np.ndarray  # (25,) per-joint distance, normalized units
    flags: tuple[str, ...]  # green | red | masked per joint
    pose_distance: float  # full-vector masked norm


@dataclass(frozen=True)
class RunVerdict:
    erroneous: tuple[bool, ...]  # per joint
    accuracy: float | None = None


def joint_errors(
    actual: KeypointFrame, expected: np.ndarray, d_t_pose: float = 0.04, frame_index: int | None = None
) -> FeedbackFrame:
    """Compare a frame against an expected 50-component pose vector.

    A joint goes red when its 2D error strictly exceeds the threshold;
    undetected joints are flagged masked and excluded from the full-vector
    pose distance.
    """
    expected = np.asarray(expected, dtype=np.float64).reshape(NUM_JOINTS, 2)
    diff = actual.coords() - expected
    errors = np.linalg.norm(diff, axis=1)
    mask = actual.mask
    errors = np.where(mask, 0.0, errors)
    flags = tuple(
        MASKED if mask[j] else (RED if errors[j] > d_t_pose else GREEN) for j in range(NUM_JOINTS)
    )
    pose_distance = float(np.linalg.norm(diff[~mask].reshape(-1))) if (~mask).any() else 0.0
    return FeedbackFrame(
        frame_index=actual.frame_index if frame_index is None else frame_index,
        errors=errors,
        flags=flags,
        pose_distance=pose_distance,
    )


def classify_run(frames: list[FeedbackFrame], flag_fraction: float = 0.10) -> RunVerdict:
    """A joint is erroneous when red in more than this fraction of its unmasked frames."""
    if not frames:
        raise ValueError("cannot classify an empty run")
    erroneous = []
    for j in range(NUM_JOINTS):
        red = sum(1 for f in frames if f.flags[j] == RED)
        unmasked = sum(1 for f in frames if f.flags[j] != MASKED)
        erroneous.append(unmasked > 0 and red > flag_fraction * unmasked)
    return RunVerdict(erroneous=tuple(erroneous))


def aggregate_flags(flags: np.ndarray, flag_fraction: float = 0.10) -> tuple[bool, ...]:
    """Collapse per-frame boolean joint flags to a per-run verdict with the same rule."""
    flags = np.asarray(flags, dtype=bool)
    n = flags.shape[0]
    return tuple(bool(flags[:, j].sum() > flag_fraction * n) for j in range(NUM_JOINTS))


def score_against_ground_truth(verdict: RunVerdict, truth: tuple[bool, ...]) -> float:
    """Fraction of the 25 joints classified the same way as the ground truth."""
    matches = sum(1 for v, t in zip(verdict.erroneous, truth) if v == t)
    return matches / NUM_JOINTS


_SVG_STYLE = (
    "circle.actual-green{fill:#1a9641;}circle.actual-red{fill:#d7191c;}"
    "circle.expected{fill:#2b5fb5;}line.actual{stroke:#1a9641;stroke-width:2;}"
    "line.expected{stroke:#2b5fb5;stroke-width:2;}"
)


def render_overlay(
    actual: KeypointFrame,
    expected: np.ndarray,
    flags: tuple[str, ...],
    dims: tuple[int, int] = (480, 320),
) -> str:
    """Static SVG overlay: actual skeleton in green (red joints where flagged),
    expected skeleton in blue. Output bytes are deterministic for equal inputs."""
    width, height = dims
    expected = np.asarray(expected, dtype=np.float64).reshape(NUM_JOINTS, 2)
    actual_px = actual.coords() * np.array([width, height], dtype=np.float64)
    expected_px = expected * np.array([width, height], dtype=np.float64)
    mask = actual.mask

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<style>{_SVG_STYLE}</style>",
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for a, b in BONES:
        parts.append(
            f'<line class="expected" x1="{expected_px[a, 0]:.2f}" y1="{expected_px[a, 1]:.2f}" '
            f'x2="{expected_px[b, 0]:.2f}" y2="{expected_px[b, 1]:.2f}"/>'
        )
    for j in range(NUM_JOINTS):
        parts.append(
            f'<circle class="expected" cx="{expected_px[j, 0]:.2f}" cy="{expected_px[j, 1]:.2f}" r="2.5"/>'
        )
    for a, b in BONES:
        if mask[a] or mask[b]:
            continue
        parts.append(
            f'<line class="actual" x1="{actual_px[a, 0]:.2f}" y1="{actual_px[a, 1]:.2f}" '
            f'x2="{actual_px[b, 0]:.2f}" y2="{actual_px[b, 1]:.2f}"/>'
        )
    for j in range(NUM_JOINTS):
        if mask[j]:
            continue
        css = "actual-red" if flags[j] == RED else "actual-green"
        parts.append(
            f'<circle class="{css}" cx="{actual_px[j, 0]:.2f}" cy="{actual_px[j, 1]:.2f}" r="3.5">'
            f"<title>{JOINT_NAMES[j]}</title></circle>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
