"""Mutual multi-modal visual information prompters.

Each prompter reweights an N x D token sequence with two pooled attention
mechanisms (per-token weights pooled over the feature axis, per-feature
weights pooled over the token axis), applies a lambda-smoothed softmax
("fovea") on the current-modality branch, and sums the branches into an
additive prompt.  The last stage of every attention stack starts at exactly
zero, so a freshly initialized prompter is a no-op on the backbone.  Only
the last stage is zeroed: zeroing both stages of the multiplicative
composition would leave every prompter gradient identically zero, making the
modules untrainable.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import Parameter, Tensor, affine, concat, softmax

FOVEA_LAMBDA_INIT = 10.0
CONV_KERNEL = 7

# branch roles, in parameter order
BRANCH_CURRENT = 0
BRANCH_OTHER = 1
BRANCH_PREV = 2


@dataclass
class BranchParams:
    """One attention-stack parameter set (g_s1, g_s2, g_t)."""

    g_s1_w: Parameter
    g_s1_b: Parameter
    g_s2_w: Parameter
    g_s2_b: Parameter
    g_t_w: Parameter   # zero at init: makes the whole stack output zero
    g_t_b: Parameter   # zero at init

    def parameters(self):
        return [self.g_s1_w, self.g_s1_b, self.g_s2_w, self.g_s2_b,
                self.g_t_w, self.g_t_b]


@dataclass
class PrompterParams:
    """Branch parameter sets plus one shared fovea smoothing scalar."""

    branches: list
    lam: Parameter

    def parameters(self):
        out = []
        for b in self.branches:
            out.extend(b.parameters())
        out.append(self.lam)
        return out


def init_branch(prefix, n_tokens, r, rng):
    if n_tokens % r != 0:
        raise ValueError(f"reduction ratio {r} does not divide N={n_tokens}")
    hidden = n_tokens // r
    return BranchParams(
        g_s1_w=Parameter(f"{prefix}.g_s1.weight",
                         rng.normal(0.0, 0.02, size=(n_tokens, hidden))),
        g_s1_b=Parameter(f"{prefix}.g_s1.bias", np.zeros(hidden)),
        g_s2_w=Parameter(f"{prefix}.g_s2.weight",
                         rng.normal(0.0, 0.02, size=(hidden, n_tokens))),
        g_s2_b=Parameter(f"{prefix}.g_s2.bias", np.zeros(n_tokens)),
        g_t_w=Parameter(f"{prefix}.g_t.weight", np.zeros((1, 2, CONV_KERNEL))),
        g_t_b=Parameter(f"{prefix}.g_t.bias", np.zeros(1)),
    )


def init_prompter(prefix, n_tokens, r, n_branches, rng,
                  lam_init=FOVEA_LAMBDA_INIT):
    branches = [init_branch(f"{prefix}.branch{i}", n_tokens, r, rng)
                for i in range(n_branches)]
    lam = Parameter(f"{prefix}.lambda", np.array([lam_init]))
    return PrompterParams(branches=branches, lam=lam)


def token_attention(h, bp, use_sigmoid=False):
    """Per-token reweighting: pool over D, squeeze-excite over the N axis."""
    n = h.shape[0]
    pooled_mean = h.mean(axis=1, keepdims=True).reshape(1, n)
    pooled_max = h.max(axis=1, keepdims=True).reshape(1, n)
    w = None
    for pooled in (pooled_mean, pooled_max):
        z = affine(pooled, bp.g_s1_w.value, bp.g_s1_b.value).relu()
        z = affine(z, bp.g_s2_w.value, bp.g_s2_b.value)
        w = z if w is None else w + z
    if use_sigmoid:
        w = w.sigmoid()
    return h * w.reshape(n, 1)


def spatial_attention(h, bp, use_sigmoid=False):
    """Per-feature-position reweighting: pool over N, kernel-7 conv over D."""
    pooled_mean = h.mean(axis=0, keepdims=True)
    pooled_max = h.max(axis=0, keepdims=True)
    stacked = concat([pooled_mean, pooled_max], axis=0)
    w = stacked.conv1d(bp.g_t_w.value, bp.g_t_b.value,
                       padding=(CONV_KERNEL - 1) // 2)
    if use_sigmoid:
        w = w.sigmoid()
    return h * w


def attention_stack(h, bp, use_token_attn=True, use_spatial_attn=True,
                    use_sigmoid=False):
    """Token attention followed by spatial attention; disabled stages pass through."""
    out = h
    if use_token_attn:
        out = token_attention(out, bp, use_sigmoid)
    if use_spatial_attn:
        out = spatial_attention(out, bp, use_sigmoid)
    return out


def fovea(h, lam):
    """Column-wise lambda-smoothed softmax over the token axis, times the input."""
    mask = softmax(h * lam, axis=0)
    return mask * h


def _stack(h, bp, flags):
    return attention_stack(h, bp,
                           use_token_attn=flags.get("use_token_attn", True),
                           use_spatial_attn=flags.get("use_spatial_attn", True),
                           use_sigmoid=flags.get("attn_sigmoid", False))


def mvip(h_cur, p_prev, h_other, pp, **flags):
    """Three-branch prompt for intermediate layers."""
    cur = _stack(h_cur, pp.branches[BRANCH_CURRENT], flags)
    other = _stack(h_other, pp.branches[BRANCH_OTHER], flags)
    prev = _stack(p_prev, pp.branches[BRANCH_PREV], flags)
    if flags.get("fovea_on_other", False):
        return cur + fovea(other, pp.lam.value) + prev
    return fovea(cur, pp.lam.value) + other + prev


def imvip(h_cur, h_other, pp, **flags):
    """Two-branch prompt applied before the first encoder layer."""
    cur = _stack(h_cur, pp.branches[BRANCH_CURRENT], flags)
    other = _stack(h_other, pp.branches[BRANCH_OTHER], flags)
    if flags.get("fovea_on_other", False):
        return cur + fovea(other, pp.lam.value)
    return fovea(cur, pp.lam.value) + other


def branch_param_count(n_tokens, r):
    hidden = n_tokens // r
    g_s1 = n_tokens * hidden + hidden
    g_s2 = hidden * n_tokens + n_tokens
    g_t = 2 * CONV_KERNEL + 1
    return g_s1 + g_s2 + g_t


def prompter_param_count(n_tokens, r, n_branches):
    """Exact learnable-scalar count of one prompter (lambda counted once)."""
    return n_branches * branch_param_count(n_tokens, r) + 1
