from mbda.pca.core import (
    CrossProductAccumulator,
    PcaModel,
    PreprocessParams,
    accumulate,
    apply_preprocess,
    calibrate,
    calibrate_passes,
    fit_pca,
    fit_preprocess,
    iter_chunks,
    project,
    residual,
)

__all__ = [
    "CrossProductAccumulator",
    "PcaModel",
    "PreprocessParams",
    "accumulate",
    "apply_preprocess",
    "calibrate",
    "calibrate_passes",
    "fit_pca",
    "fit_preprocess",
    "iter_chunks",
    "project",
    "residual",
]
