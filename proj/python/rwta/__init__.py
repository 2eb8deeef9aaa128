from ._rwta import (
    LinearSvm,
    Net,
    RwtaError,
    conv2d,
    rotation_videos,
    scan_videos,
    train_svm,
    train_unsupervised,
    wta,
)

__all__ = [
    "LinearSvm",
    "Net",
    "RwtaError",
    "conv2d",
    "rotation_videos",
    "scan_videos",
    "train_svm",
    "train_unsupervised",
    "wta",
]
