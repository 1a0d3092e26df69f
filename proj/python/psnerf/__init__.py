"""Neural inverse rendering for multi-view photometric stereo."""

from ._core import (
    ConfigError,
    UpstreamError,
    chamfer,
    default_config,
    load_config,
    normal_mae,
    read_pfm,
    run_command,
    scale_invariant_psnr,
    ssim,
    write_pfm,
)

__all__ = [
    "ConfigError",
    "UpstreamError",
    "chamfer",
    "default_config",
    "load_config",
    "normal_mae",
    "read_pfm",
    "run_command",
    "scale_invariant_psnr",
    "ssim",
    "write_pfm",
]
