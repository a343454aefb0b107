"""CLI dispatch: smoke runs at toy scale, flag handling, determinism."""

import os

import numpy as np
import pytest

from mplt import cli, fileio

TOY_CFG = """\
patch_size = 4
embed_dim = 16
num_layers = 2
num_heads = 2
template_h = 16
template_w = 16
search_h = 32
search_w = 32
reduction_ratio = 16
hanning_window = true
train_steps = 3
"""


@pytest.fixture
def toy_cfg_path(tmp_path):
    path = tmp_path / "toy.cfg"
    path.write_text(TOY_CFG)
    return str(path)


def run(argv):
    return cli.main(argv)


class TestDispatch:
    def test_unknown_subcommand_exits_nonzero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["frobnicate"])
        assert exc.value.code != 0
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            run(["bench", "--bogus-flag"])
        assert exc.value.code != 0


class TestSynthCommand:
    def test_writes_sequences(self, toy_cfg_path, tmp_path, capsys):
        out = str(tmp_path / "seqs")
        assert run(["synth", "--config", toy_cfg_path, "--out", out,
                    "--frames", "4", "--num-sequences", "2"]) == 0
        assert sorted(os.listdir(out)) == ["seq000", "seq001"]
        record = fileio.load_sequence(os.path.join(out, "seq000"))
        assert len(record) == 4

    def test_seed_determinism(self, toy_cfg_path, tmp_path):
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        for out in (out_a, out_b):
            run(["synth", "--config", toy_cfg_path, "--out", out,
                 "--frames", "3", "--seed", "5"])
        ra = fileio.load_sequence(os.path.join(out_a, "seq000"))
        rb = fileio.load_sequence(os.path.join(out_b, "seq000"))
        for fa, fb in zip(ra.frames_rgb, rb.frames_rgb):
            assert np.array_equal(fa, fb)


class TestTrackEval:
    def test_track_then_eval(self, toy_cfg_path, tmp_path, capsys):
        seqs = str(tmp_path / "seqs")
        run(["synth", "--config", toy_cfg_path, "--out", seqs,
             "--frames", "4"])
        results_dir = tmp_path / "results"
        results_dir.mkdir()
        result = str(results_dir / "seq000.txt")
        assert run(["track", "--config", toy_cfg_path, "--sequence",
                    os.path.join(seqs, "seq000"), "--out", result]) == 0
        boxes = fileio.read_results(result)
        assert len(boxes) == 4
        plots = str(tmp_path / "plots")
        assert run(["eval", "--sequences", seqs, "--results",
                    str(results_dir), "--out", plots]) == 0
        out = capsys.readouterr().out
        assert "PR@20px" in out and "SR(AUC)" in out
        assert os.path.exists(os.path.join(plots, "success_plot.txt"))

    def test_track_determinism(self, toy_cfg_path, tmp_path):
        seqs = str(tmp_path / "seqs")
        run(["synth", "--config", toy_cfg_path, "--out", seqs,
             "--frames", "3"])
        outs = []
        for name in ("r1.txt", "r2.txt"):
            path = str(tmp_path / name)
            run(["track", "--config", toy_cfg_path, "--sequence",
                 os.path.join(seqs, "seq000"), "--out", path, "--seed", "2"])
            outs.append(open(path).read())
        assert outs[0] == outs[1]

    def test_ablation_flags_compose(self, toy_cfg_path, tmp_path):
        seqs = str(tmp_path / "seqs")
        run(["synth", "--config", toy_cfg_path, "--out", seqs,
             "--frames", "3"])
        path = str(tmp_path / "ablate.txt")
        assert run(["track", "--config", toy_cfg_path, "--sequence",
                    os.path.join(seqs, "seq000"), "--out", path,
                    "--no-mvip", "--no-sa", "--no-ta", "--no-tu",
                    "--no-kf"]) == 0
        assert len(fileio.read_results(path)) == 3


class TestTrainAndCheckpoint:
    def test_train_toy_saves_loadable_checkpoint(self, toy_cfg_path,
                                                 tmp_path, capsys):
        ckpt = str(tmp_path / "toy.ckpt")
        assert run(["train-toy", "--config", toy_cfg_path,
                    "--out", ckpt]) == 0
        assert "loss" in capsys.readouterr().out
        cfg = fileio.load_config(toy_cfg_path)
        fileio.load_checkpoint(ckpt, cfg.model_config())


class TestBench:
    def test_prints_tables(self, toy_cfg_path, capsys):
        assert run(["bench", "--config", toy_cfg_path]) == 0
        out = capsys.readouterr().out
        assert "parameters" in out
        assert "GMAC" in out
        assert "encoder" in out


class TestDumpAttention:
    def test_writes_grids(self, toy_cfg_path, tmp_path):
        seqs = str(tmp_path / "seqs")
        run(["synth", "--config", toy_cfg_path, "--out", seqs,
             "--frames", "2"])
        prefix = str(tmp_path / "attn")
        assert run(["dump-attention", "--config", toy_cfg_path,
                    "--sequence", os.path.join(seqs, "seq000"),
                    "--layer", "1", "--out", prefix]) == 0
        grid = np.loadtxt(prefix + "_rgb.txt", delimiter="\t")
        assert grid.shape == (8, 8)   # 32 / 4


class TestGradcheckExitCode:
    def test_exit_zero_iff_all_pass(self, monkeypatch, capsys):
        from mplt import gradchecks

        monkeypatch.setattr(gradchecks, "run_all",
                            lambda seed=0: {"ok": (1e-9, 1e-6)})
        assert run(["gradcheck"]) == 0
        monkeypatch.setattr(gradchecks, "run_all",
                            lambda seed=0: {"bad": (1.0, 1e-6)})
        assert run(["gradcheck"]) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out
