"""Side-camera lane dataset toolkit.

Transforms dashcam lane-detection datasets in the CULane layout into
simulated side-mounted-camera training data (crop, perspective warp, resize,
hood inpainting, vehicle-body overlay, with labels co-transformed), provides
a semi-automatic labeler with a human review service, and scores predictions
under the CULane IoU protocol.
"""

__version__ = "0.1.0"

from .imaging import BinaryMask, ImageBuffer, RectROI
from .labels import LabelSet, LaneLabel, PointF
from .geometry import CameraModel, Homography, QuadCorrespondence

__all__ = [
    "__version__",
    "BinaryMask",
    "ImageBuffer",
    "RectROI",
    "LabelSet",
    "LaneLabel",
    "PointF",
    "CameraModel",
    "Homography",
    "QuadCorrespondence",
]
