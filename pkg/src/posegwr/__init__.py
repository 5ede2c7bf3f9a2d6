"""Growing self-organizing networks for pose-sequence learning and exercise feedback."""

__version__ = "0.1.0"
