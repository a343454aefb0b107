"""Attention-map export contracts."""

import numpy as np
import pytest

from mplt import export, model

TOY = dict(patch_size=4, embed_dim=16, num_layers=2, num_heads=2,
           template_size=(4, 12), search_size=(12, 12), reduction_ratio=4,
           hanning_window=False)


def setup():
    config = model.ModelConfig(**TOY)
    params = model.ModelParams(config, seed=0)
    rng = np.random.default_rng(1)
    crops = (rng.normal(size=(*config.template_size, 3)),
             rng.normal(size=(*config.search_size, 3)),
             rng.normal(size=(*config.template_size, 3)),
             rng.normal(size=(*config.search_size, 3)))
    return config, params, crops


class TestAttentionGrids:
    def test_grid_shape(self):
        config, params, crops = setup()
        grids, _ = export.attention_grids(params, config, *crops, layer=1)
        g = config.grid
        assert set(grids) == {"rgb", "tir"}
        assert grids["rgb"].shape == (g, g)
        assert grids["tir"].shape == (g, g)

    def test_raw_rows_stochastic(self):
        config, params, crops = setup()
        _, raw = export.attention_grids(params, config, *crops, layer=0)
        for branch in ("rgb", "tir"):
            np.testing.assert_allclose(raw[branch].sum(axis=-1), 1.0,
                                       atol=1e-6)

    def test_deterministic(self):
        config, params, crops = setup()
        a, _ = export.attention_grids(params, config, *crops, layer=1)
        b, _ = export.attention_grids(params, config, *crops, layer=1)
        assert np.array_equal(a["rgb"], b["rgb"])
        assert np.array_equal(a["tir"], b["tir"])

    def test_layer_out_of_range(self):
        config, params, crops = setup()
        with pytest.raises(ValueError):
            export.attention_grids(params, config, *crops, layer=5)

    def test_export_files(self, tmp_path):
        config, params, crops = setup()
        paths = export.export_attention(params, config, *crops, layer=0,
                                        out_prefix=str(tmp_path / "attn"))
        for branch, path in paths.items():
            grid = np.loadtxt(path, delimiter="\t")
            assert grid.shape == (config.grid, config.grid)
