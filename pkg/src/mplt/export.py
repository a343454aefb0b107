"""Template-to-search attention map export for external plotting."""

import numpy as np

from . import model


def attention_grids(params, config, rgb_template, rgb_search, tir_template,
                    tir_search, layer):
    """Per-branch G x G template-to-search attention grids at one layer.

    Rows (template tokens) and heads are averaged; the search columns are
    reshaped to the search grid.  Also returns the raw per-layer attention
    matrices for verification.
    """
    if not 0 <= layer < config.num_layers:
        raise ValueError(
            f"layer {layer} out of range [0, {config.num_layers})")
    cap_rgb, cap_tir = [], []
    model.forward_pair(rgb_template, rgb_search, tir_template, tir_search,
                       params, config, capture_rgb=cap_rgb,
                       capture_tir=cap_tir)
    g = config.grid
    n_z = config.n_z
    grids = {}
    raw = {"rgb": cap_rgb[layer], "tir": cap_tir[layer]}
    for branch, cap in (("rgb", cap_rgb), ("tir", cap_tir)):
        attn = cap[layer]                       # heads x N x N
        block = attn[:, :n_z, n_z:]             # template rows, search cols
        grids[branch] = block.mean(axis=(0, 1)).reshape(g, g)
    return grids, raw


def export_attention(params, config, rgb_template, rgb_search, tir_template,
                     tir_search, layer, out_prefix):
    """Write one delimited numeric grid per branch; returns written paths."""
    grids, _ = attention_grids(params, config, rgb_template, rgb_search,
                               tir_template, tir_search, layer)
    paths = {}
    for branch, grid in grids.items():
        path = f"{out_prefix}_{branch}.txt"
        np.savetxt(path, grid, fmt="%.9e", delimiter="\t")
        paths[branch] = path
    return paths
