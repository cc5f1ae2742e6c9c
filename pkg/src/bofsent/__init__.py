"""Audio-visual sentiment classification with bag-of-features codebooks and late fusion."""

from .config import PipelineConfig
from .corpus import Manifest, Polarity, Segment, binarize, filter_split, load_manifest, save_manifest

__version__ = "0.1.0"

__all__ = [
    "Manifest",
    "PipelineConfig",
    "Polarity",
    "Segment",
    "binarize",
    "filter_split",
    "load_manifest",
    "save_manifest",
    "__version__",
]
