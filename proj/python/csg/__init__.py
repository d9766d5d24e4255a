# SPDX-License-Identifier: Apache-2.0
"""Channel space gridization: CAPS estimation and grid partitioning from beam-level RSRP."""

from ._core import (
    CsgError,
    build_beam,
    center_wasserstein,
    clustering_metrics,
    desk_beam,
    forward_rsrp,
    gen_dataset,
    kmeans,
    predict_under_beam,
    run_pipeline,
    sample_mean_nmse,
    sparse_code,
    train,
)

__all__ = [
    "CsgError",
    "build_beam",
    "center_wasserstein",
    "clustering_metrics",
    "desk_beam",
    "forward_rsrp",
    "gen_dataset",
    "kmeans",
    "predict_under_beam",
    "run_pipeline",
    "sample_mean_nmse",
    "sparse_code",
    "train",
]
