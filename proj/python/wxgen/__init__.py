"""Stochastic precipitation-field generator.

Synthetic monsoon data pipeline, convolutional VAE training, latent-locus
sampling (scaled-variance and tail modes), and QQ-based evaluation. Heavy
lifting happens in the `_core` extension; trained models live in checkpoint
files shared with the `weathergen` CLI.
"""

from ._core import (
    IoError,
    ValidationError,
    checkpoint_info,
    decode,
    default_probs,
    denormalize,
    encode,
    gen_monsoon,
    gradcheck,
    kl_normal,
    normalize,
    qq_divergence,
    quantiles,
    reference_extremes,
    sample_scaled,
    sample_tail,
    split_train_test,
    synthesize,
    train_vae,
    window_samples,
)

__version__ = "1.0.0"

__all__ = [
    "IoError",
    "ValidationError",
    "checkpoint_info",
    "decode",
    "default_probs",
    "denormalize",
    "encode",
    "gen_monsoon",
    "gradcheck",
    "kl_normal",
    "normalize",
    "qq_divergence",
    "quantiles",
    "reference_extremes",
    "sample_scaled",
    "sample_tail",
    "split_train_test",
    "synthesize",
    "train_vae",
    "window_samples",
]
