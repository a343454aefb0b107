"""Gradient-check suite: every differentiable operation plus composite
blocks and the end-to-end loss, verified against central finite differences.

The end-to-end check runs at a tiny configuration (D=16, L=2, N=12) and
subsamples parameter elements deterministically to stay within a desktop
time budget; per-operation checks are exhaustive.
"""

import numpy as np

from . import model, prompter
from .boxes import BBox
from .tensor import Tensor, grad_check, layer_norm, softmax

TOY_END_TO_END_CHECKS = 2000


def _t(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def toy_config(**overrides):
    base = dict(patch_size=4, embed_dim=16, num_layers=2, num_heads=2,
                template_size=(4, 12), search_size=(12, 12),
                reduction_ratio=4, hanning_window=False)
    base.update(overrides)
    return model.ModelConfig(**base)


def run_all(seed=0, end_to_end_checks=TOY_END_TO_END_CHECKS):
    """Returns {check name: (max rel. error, threshold)}."""
    rng = np.random.default_rng(seed)
    results = {}

    a, b = _t(rng, 5, 7), _t(rng, 7, 3)
    results["matmul"] = (
        grad_check(lambda: (a @ b).power(2.0).sum(), [a, b]), 1e-6)

    x = _t(rng, 4, 6)
    probe = rng.normal(size=(4, 6))
    results["softmax"] = (
        grad_check(lambda: (softmax(x, axis=1) * probe).sum(), [x]), 1e-6)

    gain, bias = _t(rng, 6), _t(rng, 6)
    results["layer_norm"] = (
        grad_check(lambda: layer_norm(x, gain, bias).power(2.0).sum(),
                   [x, gain, bias]), 1e-5)

    xm = _t(rng, 5, 4)
    probe_m = rng.normal(size=(1, 4))
    results["reduce_mean_max"] = (
        grad_check(lambda: (xm.mean(axis=0, keepdims=True) * probe_m).sum()
                   + (xm.max(axis=0, keepdims=True) * probe_m).sum(), [xm]),
        1e-6)

    xc = _t(rng, 2, 16)
    wk = _t(rng, 1, 2, 7)
    bk = _t(rng, 1)
    results["conv1d"] = (
        grad_check(lambda: xc.conv1d(wk, bk).power(2.0).sum(),
                   [xc, wk, bk]), 1e-5)

    xa = _t(rng, 3, 5)
    wa, ba = _t(rng, 5, 4), _t(rng, 4)
    results["affine"] = (
        grad_check(lambda: (xa @ wa + ba).power(2.0).sum(),
                   [xa, wa, ba]), 1e-6)

    xg = _t(rng, 4, 4)
    results["gelu"] = (grad_check(lambda: xg.gelu().sum(), [xg]), 1e-5)
    results["sigmoid"] = (grad_check(lambda: xg.sigmoid().sum(), [xg]), 1e-6)

    x2 = _t(rng, 3, 5, 5)
    w2 = _t(rng, 2, 3, 3, 3)
    b2 = _t(rng, 2)
    results["conv2d"] = (
        grad_check(lambda: x2.conv2d(w2, b2).power(2.0).sum(),
                   [x2, w2, b2]), 1e-5)

    # full MVIP block at tiny dims (N=6, D=8)
    pp = prompter.init_prompter("gc", 6, 2, 3, rng)
    # nonzero projections so the whole block participates
    for br in pp.branches:
        br.g_s2_w.value.data[:] = rng.normal(0, 0.3, br.g_s2_w.data.shape)
        br.g_t_w.value.data[:] = rng.normal(0, 0.3, br.g_t_w.data.shape)
    h_cur, p_prev, h_other = _t(rng, 6, 8), _t(rng, 6, 8), _t(rng, 6, 8)
    leaves = [h_cur, p_prev, h_other] + [p.value for p in pp.parameters()]
    results["mvip_block"] = (
        grad_check(lambda: prompter.mvip(h_cur, p_prev, h_other, pp)
                   .power(2.0).sum(), leaves), 1e-4)

    # end-to-end loss at the toy configuration
    config = toy_config()
    params = model.ModelParams(config, seed=seed + 1)
    tz = rng.normal(size=(*config.template_size, 3))
    sxr = rng.normal(size=(*config.search_size, 3))
    tz2 = rng.normal(size=(*config.template_size, 3))
    sx2 = rng.normal(size=(*config.search_size, 3))
    gt = BBox(3, 4, 5, 4)

    def loss():
        out = model.forward_pair(tz, sxr, tz2, sx2, params, config)
        return model.compute_loss(out, gt, config)["total"]

    results["end_to_end_loss"] = (
        grad_check(loss, [p.value for p in params.parameters()],
                   max_checks=end_to_end_checks, seed=seed), 1e-4)
    return results
