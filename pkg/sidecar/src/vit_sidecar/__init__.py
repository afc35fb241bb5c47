"""Vision-transformer attention sidecar for the patch-coding toolkit."""

__version__ = "0.1.0"

from .classify import NearestCentroidClassifier, eval_accuracy
from .extract import ExtractorConfig, extract_attention, extract_attention_batch
from .vit import SMALL_VIT_8, VitConfig, cls_attention_rows, init_weights, load_weights, save_weights

__all__ = [
    "ExtractorConfig",
    "extract_attention",
    "extract_attention_batch",
    "NearestCentroidClassifier",
    "eval_accuracy",
    "VitConfig",
    "SMALL_VIT_8",
    "cls_attention_rows",
    "init_weights",
    "load_weights",
    "save_weights",
]
