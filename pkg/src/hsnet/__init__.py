"""Heterogeneous subgraph network for single-image super-resolution."""

from hsnet.fusion import attention_head, graph_aggregation, sab_combine
from hsnet.model import HSNet, ModelConfig, build_model, count_params
from hsnet.nss import nss_decompose, nss_recompose
from hsnet.subgraph import (
    aggregate_neighbors,
    build_knn_graph,
    downsample_half,
    extract_patches,
    patch_ssim,
    sgb_forward,
)

__all__ = [
    "HSNet",
    "ModelConfig",
    "aggregate_neighbors",
    "attention_head",
    "build_knn_graph",
    "build_model",
    "count_params",
    "downsample_half",
    "extract_patches",
    "graph_aggregation",
    "nss_decompose",
    "nss_recompose",
    "patch_ssim",
    "sab_combine",
    "sgb_forward",
]

__version__ = "0.1.0"
