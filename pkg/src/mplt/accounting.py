"""Analytic parameter and multiply-accumulate accounting.

MAC counts cover matrix multiplications and convolutions of one forward
pass; normalizations, activations, softmaxes, and elementwise products are
excluded.  Reported-FLOPs figures in the tracking literature follow this
MAC convention; `flops` doubles it (one multiply + one add per MAC).
"""

from . import prompter as prm
from .model import HEAD_DEPTH, _head_channels


def count_params(params, trainable_only=True):
    """Exact element counts grouped by top-level module path."""
    table = {}
    total = 0
    for name, par in params.named_parameters():
        group = name.split(".")[0]
        n = par.data.size
        table[group] = table.get(group, 0) + n
        total += n
    return total, table


def encoder_layer_param_count(d, mlp_hidden):
    qkv = d * 3 * d + 3 * d
    proj = d * d + d
    mlp = d * mlp_hidden + mlp_hidden + mlp_hidden * d + d
    norms = 4 * d
    return qkv + proj + mlp + norms


def _encoder_layer_macs(n, d, mlp_hidden):
    qkv = n * d * 3 * d
    attn = 2 * n * n * d          # QK^T and attn @ V
    proj = n * d * d
    mlp = 2 * n * d * mlp_hidden
    return qkv + attn + proj + mlp


def _prompter_macs(n, d, r, n_branches):
    hidden = n // r
    # token attention: mean and max paths through g_s1/g_s2 (vectors over N)
    token = 2 * (n * hidden + hidden * n)
    # spatial attention: kernel-7 conv, 2 channels -> 1, over the D axis
    spatial = d * 2 * prm.CONV_KERNEL
    return n_branches * (token + spatial)


def _head_macs(config):
    g = config.grid
    chans = _head_channels(config.embed_dim)
    total = 0
    for out_ch in (1, 2, 2):
        for i in range(HEAD_DEPTH):
            total += g * g * 9 * chans[i] * chans[i + 1]
        total += g * g * chans[-1] * out_ch
    return total


def count_flops(config, single_branch=False):
    """Analytic MAC/FLOP counts for one forward pass, with per-module table."""
    n = config.n_tokens
    d = config.embed_dim
    table = {}

    patch = n * (config.patch_size ** 2 * 3) * d
    encoder = config.num_layers * _encoder_layer_macs(n, d, config.mlp_hidden)
    head = _head_macs(config)

    if single_branch:
        table["patch"] = patch
        table["encoder"] = encoder
        table["head"] = head
    else:
        table["patch"] = 2 * patch
        table["encoder"] = 2 * encoder
        prompters = 0
        if config.use_mvip:
            per_dir_imvip = _prompter_macs(n, d, config.reduction_ratio, 2)
            per_dir_mvip = _prompter_macs(n, d, config.reduction_ratio, 3)
            prompters = 2 * (per_dir_imvip
                             + config.num_layers * per_dir_mvip)
        table["prompter"] = prompters
        table["fuse"] = n * 2 * d * d
        table["head"] = head

    macs = sum(table.values())
    return {"macs": macs, "flops": 2 * macs, "table": table}
