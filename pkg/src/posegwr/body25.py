"""BODY_25 keypoint layout: joint names, indices and bone connectivity."""

JOINT_NAMES = (
    "Nose",
    "Neck",
    "RShoulder",
    "RElbow",
    "RWrist",
    "LShoulder",
    "LElbow",
    "LWrist",
    "MidHip",
    "RHip",
    "RKnee",
    "RAnkle",
    "LHip",
    "LKnee",
    "LAnkle",
    "REye",
    "LEye",
    "REar",
    "LEar",
    "LBigToe",
    "LSmallToe",
    "LHeel",
    "RBigToe",
    "RSmallToe",
    "RHeel",
)

NUM_JOINTS = 25

JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

# Standard BODY_25 rendering pairs (torso, arms, legs, face, feet).
BONES = (
    (1, 8),
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 12),
    (12, 13),
    (13, 14),
    (1, 0),
    (0, 15),
    (15, 17),
    (0, 16),
    (16, 18),
    (14, 19),
    (19, 20),
    (14, 21),
    (11, 22),
    (22, 23),
    (11, 24),
)

# Joints above the hips; used by the synthetic generator for torso tilt.
UPPER_BODY = (0, 1, 2, 3, 4, 5, 6, 7, 15, 16, 17, 18)

HEAD_JOINTS = (0, 15, 16, 17, 18)
