"""Parametric 2D skeleton generator: squat-with-side-arm-raises sequences.

Avatars are frontal stick figures anchored at the feet. A squat is driven
by one phase value per frame (0 standing, 1 bottom); knee flexion folds
the projected leg segments (depth foreshortening) while arm abduction
raises the arms in the image plane. Error variants override single
kinematic parameters, and ground-truth flags are the joints that deviate
from the same avatar's correct execution by more than the pose threshold.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .body25 import JOINT_INDEX, NUM_JOINTS
from .pose import KeypointFrame, PoseSequence, save_sequence

# Canonical segment lengths in normalized image units, sized so the
# standing figure keeps a frame margin even when every factor hits +20%.
# The perturbation step clamps (and reports) the rare corner cases where a
# shifted full arm raise would leave the frame.
_CANON = {
    "torso": 0.268,
    "upper_arm": 0.123,
    "forearm": 0.112,
    "thigh": 0.173,
    "shin": 0.162,
    "shoulder_halfwidth": 0.112,
    "hip_halfwidth": 0.062,
    "stance_halfwidth": 0.078,
    "head": 1.12,  # scales the head offset table below
    "foot": 1.12,  # scales the foot offset table below
}

# Head joints as (lateral, up-offset, depth) relative to the neck; pitching
# the head forward rotates (up, depth) so the face drops in the projection.
_HEAD = {
    "Nose": (0.0, 0.075, 0.10),
    "REye": (-0.022, 0.095, 0.095),
    "LEye": (0.022, 0.095, 0.095),
    "REar": (-0.042, 0.085, 0.02),
    "LEar": (0.042, 0.085, 0.02),
}

# Foot joints as (lateral-outward, downward) offsets from the ankle.
_FOOT = {
    "BigToe": (-0.012, 0.030),
    "SmallToe": (0.020, 0.030),
    "Heel": (0.004, 0.028),
}


@dataclass(frozen=True)
class AvatarSpec:
    avatar_id: int
    seed: int
    torso: float
    upper_arm: float
    forearm: float
    thigh: float
    shin: float
    shoulder_halfwidth: float
    hip_halfwidth: float
    stance_halfwidth: float
    head: float
    foot: float
    root: tuple[float, float] = (0.5, 0.86)  # midline ground anchor (ankle height)
    scale: float = 1.0


@dataclass(frozen=True)
class ExerciseVariant:
    name: str
    max_knee_deg: float = 90.0
    max_arm_deg: float = 90.0
    head_pitch_deg: float = 0.0
    torso_tilt_deg: float = 0.0
    speed_multiplier: int = 1


VARIANTS = {
    "correct": ExerciseVariant("correct"),
    "arms": ExerciseVariant("arms", max_arm_deg=15.0),
    "head": ExerciseVariant("head", head_pitch_deg=30.0),
    "legs": ExerciseVariant("legs", max_knee_deg=15.0),
    "side": ExerciseVariant("side", torso_tilt_deg=15.0),
    "speed": ExerciseVariant("speed", speed_multiplier=2),
}


@dataclass(frozen=True)
class Perturbation:
    name: str
    yaw_deg: float = 0.0
    shift_cm: float = 0.0
    cm_to_px: float = 3.0

    @property
    def is_identity(self) -> bool:
        return self.yaw_deg == 0.0 and self.shift_cm == 0.0


PERTURBATIONS = {
    "centered": Perturbation("centered"),
    "rotated": Perturbation("rotated", yaw_deg=5.0),
    "translated": Perturbation("translated", shift_cm=5.0),
    "rotated_translated": Perturbation("rotated_translated", yaw_deg=5.0, shift_cm=5.0),
}


def make_avatar(seed: int) -> AvatarSpec:
    """Draw body proportions uniformly within +/-20% of the canonical figure."""
    rng = np.random.default_rng(seed)
    factors = {name: float(rng.uniform(0.8, 1.2)) for name in _CANON}
    return AvatarSpec(
        avatar_id=seed,
        seed=seed,
        **{name: _CANON[name] * factors[name] for name in _CANON},
    )


def squat_phase(t: int, n: int) -> float:
    """Cycle phase at frame t: stand, descend, bottom hold, ascend, stand."""
    s1 = int(round(0.10 * n))
    s2 = int(round(0.46 * n))
    s3 = int(round(0.56 * n))
    s4 = int(round(0.91 * n))
    if t < s1 or t >= s4:
        return 0.0
    if t < s2:
        return (t - (s1 - 1)) / (s2 - s1)
    if t < s3:
        return 1.0
    return 1.0 - (t - (s3 - 1)) / (s4 - s3)


def _pose_at_phase(avatar: AvatarSpec, variant: ExerciseVariant, phase: float) -> np.ndarray:
    """Forward kinematics for one phase value; returns (25, 2) normalized coords."""
    s = avatar.scale
    root_x, ankle_y = avatar.root
    hip_x = root_x
    theta = math.radians(variant.max_knee_deg) * phase
    alpha = math.radians(min(90.0 * phase, variant.max_arm_deg))
    tilt = math.radians(variant.torso_tilt_deg)
    pitch = math.radians(variant.head_pitch_deg)

    pose = np.zeros((NUM_JOINTS, 2))

    def put(name, x, y):
        pose[JOINT_INDEX[name]] = (x, y)

    # Legs: ankles planted; the shin pitches forward at half the knee
    # flexion while the thigh folds fully into depth, so the hips drop and
    # the knees shift slightly outward.
    shin_pitch = theta / 2.0
    for side, prefix in ((-1.0, "R"), (1.0, "L")):
        ankle_x = root_x + side * avatar.stance_halfwidth * s
        knee_x = ankle_x + side * 0.3 * avatar.shin * s * math.sin(shin_pitch)
        knee_y = ankle_y - avatar.shin * s * math.cos(shin_pitch)
        hip_y = knee_y - avatar.thigh * s * math.cos(theta)
        put(f"{prefix}Ankle", ankle_x, ankle_y)
        put(f"{prefix}Knee", knee_x, knee_y)
        put(f"{prefix}Hip", hip_x + side * avatar.hip_halfwidth * s, hip_y)
        for part, (dx, dy) in _FOOT.items():
            put(f"{prefix}{part}", ankle_x + side * dx * avatar.foot * s, ankle_y + dy * avatar.foot * s)

    mid_hip_y = pose[JOINT_INDEX["RHip"], 1]
    put("MidHip", hip_x, mid_hip_y)

    # Upper body is built in a hip-anchored frame (x lateral, y up the
    # spine) and rotated by the torso tilt into image coordinates.
    def to_world(lx, ly):
        wx = hip_x + lx * math.cos(tilt) + ly * math.sin(tilt)
        wy = mid_hip_y - (ly * math.cos(tilt) - lx * math.sin(tilt))
        return wx, wy

    torso = avatar.torso * s
    put("Neck", *to_world(0.0, torso))
    for side, prefix in ((-1.0, "R"), (1.0, "L")):
        sh_x = side * avatar.shoulder_halfwidth * s
        sh_y = torso - 0.015 * s
        put(f"{prefix}Shoulder", *to_world(sh_x, sh_y))
        el_x = sh_x + side * avatar.upper_arm * s * math.sin(alpha)
        el_y = sh_y - avatar.upper_arm * s * math.cos(alpha)
        put(f"{prefix}Elbow", *to_world(el_x, el_y))
        wr_x = el_x + side * avatar.forearm * s * math.sin(alpha)
        wr_y = el_y - avatar.forearm * s * math.cos(alpha)
        put(f"{prefix}Wrist", *to_world(wr_x, wr_y))

    for name, (dx, up, depth) in _HEAD.items():
        u = up * avatar.head * s
        d = depth * avatar.head * s
        put(name, *to_world(dx * avatar.head * s, torso + u * math.cos(pitch) - d * math.sin(pitch)))

    return pose


def _frame_times(variant: ExerciseVariant, n: int) -> list[int]:
    if variant.speed_multiplier == 1:
        return list(range(n))
    return [min(variant.speed_multiplier * t, n - 1) for t in range(n)]


def generate_exercise(
    avatar: AvatarSpec,
    variant: ExerciseVariant | str,
    frames: int = 100,
    d_t_pose: float = 0.04,
    source_dims: tuple[int, int] = (480, 320),
) -> tuple[PoseSequence, np.ndarray]:
    """One exercise execution plus per-frame ground-truth joint flags.

    A joint is flagged at frame t when its position deviates from the same
    avatar's correct execution at t by more than d_t_pose.
    """
    if frames < 10:
        raise ValueError("need at least 10 frames for the phase schedule")
    if isinstance(variant, str):
        variant = VARIANTS[variant.lower()]
    correct = VARIANTS["correct"]

    times = _frame_times(variant, frames)
    kf = []
    flags = np.zeros((frames, NUM_JOINTS), dtype=bool)
    for t in range(frames):
        pose = _pose_at_phase(avatar, variant, squat_phase(times[t], frames))
        reference = _pose_at_phase(avatar, correct, squat_phase(t, frames))
        flags[t] = np.linalg.norm(pose - reference, axis=1) > d_t_pose
        joints = np.concatenate([pose, np.ones((NUM_JOINTS, 1))], axis=1)
        kf.append(KeypointFrame(joints=joints, frame_index=t))
    label = f"avatar{avatar.avatar_id:02d}_{variant.name}"
    return PoseSequence(frames=tuple(kf), source_dims=source_dims, label=label), flags


def perturb(
    seq: PoseSequence, p: Perturbation, rotation_center: float | None = None
) -> tuple[PoseSequence, list[str]]:
    """Apply yaw (x-offsets from the root scaled by cos) then lateral shift.

    The rotation center defaults to the first frame's MidHip x. Ground-truth
    flags are untouched by perturbation and stay with the caller. Joints
    pushed outside [0, 1] are clamped and reported as warnings.
    """
    if p.is_identity:
        return seq, []
    width = seq.source_dims[0]
    if rotation_center is None:
        rotation_center = float(seq.frames[0].joints[JOINT_INDEX["MidHip"], 0])
    cos_yaw = math.cos(math.radians(p.yaw_deg))
    shift = p.shift_cm * p.cm_to_px / width
    warnings = []
    frames = []
    for frame in seq.frames:
        joints = np.array(frame.joints)
        detected = joints[:, 2] > 0.0
        x = joints[detected, 0]
        x = rotation_center + (x - rotation_center) * cos_yaw
        x -= shift
        if (x < 0.0).any() or (x > 1.0).any():
            warnings.append(f"frame {frame.frame_index}: clamped joints leaving the image")
            x = np.clip(x, 0.0, 1.0)
        joints[detected, 0] = x
        frames.append(KeypointFrame(joints=joints, frame_index=frame.frame_index))
    label = f"{seq.label}_{p.name}" if p.name else seq.label
    return PoseSequence(frames=tuple(frames), source_dims=seq.source_dims, label=label), warnings


def sequence_filename(avatar_id: int, variant: str, perturbation: str) -> str:
    return f"avatar{avatar_id:02d}_{variant}_{perturbation}.seq"


def truth_filename(avatar_id: int, variant: str, perturbation: str) -> str:
    return f"avatar{avatar_id:02d}_{variant}_{perturbation}.truth.json"


def write_truth(
    path: Path, avatar_id: int, variant: str, perturbation: str, flags: np.ndarray
) -> None:
    doc = {
        "avatar_id": avatar_id,
        "variant": variant,
        "perturbation": perturbation,
        "flags": [[bool(v) for v in row] for row in np.asarray(flags)],
    }
    path.write_text(json.dumps(doc, indent=1) + "\n")


def read_truth(path: Path) -> np.ndarray:
    doc = json.loads(path.read_text())
    return np.asarray(doc["flags"], dtype=bool)


def generate_dataset(
    out_dir: str | Path,
    avatar_seeds: list[int],
    variants: list[str],
    perturbations: list[str],
    frames: int = 100,
    d_t_pose: float = 0.04,
    cm_to_px: float = 3.0,
) -> tuple[list[Path], list[Path]]:
    """Write the full (avatar x variant x perturbation) grid of sequence files
    with ground-truth sidecars. Returns (sequence paths, truth paths)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seq_paths = []
    truth_paths = []
    for seed in avatar_seeds:
        avatar = make_avatar(seed)
        for variant in variants:
            seq, flags = generate_exercise(avatar, variant, frames=frames, d_t_pose=d_t_pose)
            for pname in perturbations:
                p = replace(PERTURBATIONS[pname], cm_to_px=cm_to_px)
                out_seq, _ = perturb(seq, p)
                seq_path = out_dir / sequence_filename(avatar.avatar_id, variant, pname)
                truth_path = out_dir / truth_filename(avatar.avatar_id, variant, pname)
                save_sequence(out_seq, seq_path)
                write_truth(truth_path, avatar.avatar_id, variant, pname, flags)
                seq_paths.append(seq_path)
                truth_paths.append(truth_path)
    return seq_paths, truth_paths


def dataset_digest(paths: list[Path]) -> str:
    """Stable digest over file names and contents, independent of listing order."""
    h = hashlib.sha256()
    for path in sorted(paths, key=lambda p: p.name):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()
