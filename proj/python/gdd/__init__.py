"""Graph-based deep denoiser: bilateral-initialized unrolled CG with a learned graph Laplacian."""

from ._core import (
    CgMode,
    DegenerateMatrix,
    Hyper,
    InvalidInput,
    IoError,
    MetricInit,
    NumericError,
    ParamVector,
    TrainOptions,
    add_awgn,
    bilateral_filter_image,
    calibrate,
    denoise_image,
    denoiser_matrix,
    extract_features,
    forward,
    grad_fd,
    grad_reverse,
    load_image,
    loss,
    make_synthetic_image,
    partition,
    psnr,
    read_checkpoint,
    save_image,
    spectrum,
    train,
    write_checkpoint,
)

__all__ = [name for name in dir() if not name.startswith("_")]
