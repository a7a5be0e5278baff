"""Autoregressive prior over token codes."""

from .generate import (
    Generation,
    Sampler,
    StopResult,
    StopRule,
    entropy,
    kv_generate,
    sample_step,
    size_stats,
    smooth3,
    softmax,
    stop_finite,
    stop_spline,
    truncate,
)
from .model import ArConfig, ArModel, KVCache, ar_config_hash, causal_doc_mask
from .train import (
    ArTrainConfig,
    Batch,
    ar_loss,
    ar_train_step,
    load_ar_state,
    pack_rows,
    pad_rows,
    save_ar_state,
    train_ar,
)

__all__ = [
    "ArConfig", "ArModel", "ArTrainConfig", "Batch", "Generation", "KVCache", "Sampler", "StopResult",
    "StopRule", "ar_config_hash", "ar_loss", "ar_train_step", "causal_doc_mask", "entropy", "kv_generate",
    "load_ar_state", "pack_rows", "pad_rows", "sample_step", "save_ar_state", "size_stats", "smooth3",
    "softmax", "stop_finite", "stop_spline", "train_ar", "truncate",
]
