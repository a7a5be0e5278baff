"""The diffusion autoencoder and its training loop."""

from .model import (
    DecoderConfig,
    EncoderConfig,
    Tokenizer,
    TokenizerConfig,
    config_hash,
    flow_target,
    manifest,
    pad_batch,
    sample_times,
)
from .train import TrainConfig, load_training_state, save_training_state, train_step, train_tokenizer
