"""Python bindings for the uags splatting engine."""

from ._core import (  # noqa: F401
    Camera,
    Checkpoint,
    GaussianModel,
    Precision,
    RenderOutput,
    Scene,
    UncertaintyParams,
    config_defaults,
    contribution_to_uncertainty,
    evaluate,
    load_checkpoint,
    load_scene,
    look_at,
    psnr,
    refresh_uncertainty,
    render,
    render_oracle,
    save_checkpoint,
    ssim,
    synth_scene,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
