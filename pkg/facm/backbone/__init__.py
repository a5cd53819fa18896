from .models import (
    ARCHITECTURES,
    FeatureTaps,
    MNISTNet,
    SmallCNN,
    TappableClassifier,
    build_backbone,
    forward_with_taps,
)
from .training import train_backbone, train_natural, train_trades

__all__ = [
    "ARCHITECTURES",
    "FeatureTaps",
    "MNISTNet",
    "SmallCNN",
    "TappableClassifier",
    "build_backbone",
    "forward_with_taps",
    "train_backbone",
    "train_natural",
    "train_trades",
]
