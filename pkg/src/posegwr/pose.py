"""Pose-sequence data model: normalized 25-joint frames and their file formats.

Coordinates are normalized per axis (x by image width, y by image height).
A confidence of exactly 0 marks an undetected joint; such joints are masked
and excluded from every distance computation downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .body25 import NUM_JOINTS

SEQUENCE_FORMAT_VERSION = 1


class MalformedFrameError(ValueError):
    """A raw frame does not have exactly 25 joints."""


class IngestionError(RuntimeError):
    """A keypoint file or directory could not be ingested."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class KeypointFrame:
    """One pose: 25 joints as an (25, 3) array of (x, y, confidence)."""

    joints: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.shape != (NUM_JOINTS, 3):
            raise MalformedFrameError(
                f"expected {NUM_JOINTS} joints with (x, y, confidence), got shape {joints.shape}"
            )
        object.__setattr__(self, "joints", _frozen(joints))

    @property
    def mask(self) -> np.ndarray:
        """True where the joint is undetected (confidence 0)."""
        return self.joints[:, 2] == 0.0

    def coords(self) -> np.ndarray:
        return self.joints[:, :2]


@dataclass(frozen=True)
class SampleVector:
    """Flattened pose: 50 interleaved (x, y) values plus a 25-joint mask."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != (2 * NUM_JOINTS,):
            raise ValueError(f"expected {2 * NUM_JOINTS} components, got {values.shape}")
        if mask.shape != (NUM_JOINTS,):
            raise ValueError(f"expected {NUM_JOINTS} mask entries, got {mask.shape}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def component_mask(self) -> np.ndarray:
        """Per-component mask: True where the component belongs to a masked joint."""
        return np.repeat(self.mask, 2)


@dataclass(frozen=True)
class PoseSequence:
    frames: tuple[KeypointFrame, ...]
    source_dims: tuple[int, int] = (480, 320)
    label: str = ""

    def __post_init__(self):
        frames = tuple(self.frames)
        for i, f in enumerate(frames):
            if f.frame_index != i:
                raise ValueError(f"frame_index must increase from 0; frame {i} has {f.frame_index}")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def samples(self) -> list[SampleVector]:
        return [flatten(f) for f in self.frames]


def normalize_frame(raw: np.ndarray, dims: tuple[int, int], frame_index: int = 0) -> KeypointFrame:
    """Normalize a pixel-coordinate (25, 3) frame by image width and height.

    Joints with confidence 0 come out as (0, 0) and masked.
    """
    width, height = dims
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {dims}")
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (NUM_JOINTS, 3):
        raise MalformedFrameError(
            f"expected {NUM_JOINTS} joints with (x, y, confidence), got shape {raw.shape}"
        )
    out = raw.copy()
    out[:, 0] /= float(width)
    out[:, 1] /= float(height)
    undetected = out[:, 2] == 0.0
    out[undetected, 0] = 0.0
    out[undetected, 1] = 0.0
    return KeypointFrame(joints=out, frame_index=frame_index)


def flatten(frame: KeypointFrame) -> SampleVector:
    """Interleave (x, y) per joint in BODY_25 order; the mask follows confidence 0."""
    return SampleVector(values=frame.coords().reshape(-1), mask=frame.mask.copy())


def unflatten(sample: SampleVector, frame_index: int = 0) -> KeypointFrame:
    """Inverse of flatten. Confidence is synthesized as 1 (0 for masked joints)."""
    joints = np.empty((NUM_JOINTS, 3), dtype=np.float64)
    joints[:, :2] = np.asarray(sample.values).reshape(NUM_JOINTS, 2)
    joints[:, 2] = np.where(sample.mask, 0.0, 1.0)
    return KeypointFrame(joints=joints, frame_index=frame_index)


_FRAME_NUMBER = re.compile(r"(\d+)")


def _frame_number(path: Path) -> int:
    groups = _FRAME_NUMBER.findall(path.stem)
    if not groups:
        raise IngestionError(f"no frame number in filename: {path.name}")
    return int(groups[-1])


def ingest_openpose_dir(
    path: str | Path,
    dims: tuple[int, int] = (480, 320),
    label: str = "",
) -> PoseSequence:
    """Read a directory of per-frame OpenPose keypoint files into a PoseSequence.

    Files carry their frame number in the filename and hold a ``people`` list
    whose first entry's ``pose_keypoints_2d`` is a flat x, y, confidence
    triple list in BODY_25 order. The first detected person per frame is
    used; a frame with no people is emitted fully masked.
    """
    path = Path(path)
    files = sorted(path.glob("*.json"), key=_frame_number)
    if not files:
        raise IngestionError(f"no frames found in {path}")
    frames = []
    for index, file in enumerate(files):
        try:
            doc = json.loads(file.read_text())
            people = doc.get("people", [])
            if not people:
                raw = np.zeros((NUM_JOINTS, 3), dtype=np.float64)
            else:
                flat = np.asarray(people[0]["pose_keypoints_2d"], dtype=np.float64)
                if flat.size != NUM_JOINTS * 3:
                    raise ValueError(f"expected {NUM_JOINTS * 3} values, got {flat.size}")
                raw = flat.reshape(NUM_JOINTS, 3)
        except IngestionError:
            raise
        except Exception as exc:
            raise IngestionError(f"unparsable keypoint file {file.name}: {exc}") from exc
        frames.append(normalize_frame(raw, dims, frame_index=index))
    return PoseSequence(frames=tuple(frames), source_dims=dims, label=label or path.name)


def sequence_to_text(seq: PoseSequence) -> str:
    """Serialize a sequence to its versioned document. Bit-exact round trip."""
    doc = {
        "version": SEQUENCE_FORMAT_VERSION,
        "label": seq.label,
        "source_dims": list(seq.source_dims),
        "frames": [
            {"index": f.frame_index, "joints": [[float(v) for v in row] for row in f.joints]}
            for f in seq.frames
        ],
    }
    return json.dumps(doc, indent=1) + "\n"


def sequence_from_text(text: str) -> PoseSequence:
    doc = json.loads(text)
    version = doc.get("version")
    if version != SEQUENCE_FORMAT_VERSION:
        raise IngestionError(f"unsupported sequence format version: {version!r}")
    frames = tuple(
        KeypointFrame(joints=np.asarray(fr["joints"], dtype=np.float64), frame_index=fr["index"])
        for fr in doc["frames"]
    )
    return PoseSequence(
        frames=frames,
        source_dims=tuple(doc["source_dims"]),
        label=doc["label"],
    )


def save_sequence(seq: PoseSequence, path: str | Path) -> None:
    Path(path).write_text(sequence_to_text(seq))


def load_sequence(path: str | Path) -> PoseSequence:
    try:
        return sequence_from_text(Path(path).read_text())
    except FileNotFoundError:
        raise IngestionError(f"sequence file not found: {path}") from None
