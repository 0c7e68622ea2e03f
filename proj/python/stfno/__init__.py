"""Python access to the space-time Fourier neural operator emulator."""

from ._core import (
    Checkpoint,
    FormatError,
    InvalidArgument,
    NumericFailure,
    dispersion_omega,
    generate,
    generate_dataset,
    load_checkpoint,
    radial_psd,
    read_fst,
    read_mask,
    relative_rmse,
    train,
    write_fst,
)

__all__ = [
    "Checkpoint",
    "FormatError",
    "InvalidArgument",
    "NumericFailure",
    "dispersion_omega",
    "generate",
    "generate_dataset",
    "load_checkpoint",
    "radial_psd",
    "read_fst",
    "read_mask",
    "relative_rmse",
    "train",
    "write_fst",
]
