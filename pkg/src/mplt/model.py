"""Dual-branch one-stream backbone, prompt recursion, localization head, loss.

The backbone is a pre-norm ViT without class token, operating on the
concatenation of template and search tokens.  Two modality branches run in
parallel; at every layer a pair of prompters exchanges an additive prompt
between them.  Branch features are fused by channel concatenation plus a
linear reduction and decoded by an anchor-free center head (score / offset /
size maps).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import prompter as prm
from .boxes import BBox
from .tensor import (DimensionError, Parameter, Tensor, affine, concat,
                     layer_norm, softmax)

RGB = "RGB"
TIR = "TIR"
FUSED = "FUSED"

HEAD_DEPTH = 4        # conv+norm+relu layers per head stack, channel halving
LOSS_GIOU_WEIGHT = 2.0
LOSS_L1_WEIGHT = 5.0
FOCAL_ALPHA = 2.0
FOCAL_BETA = 4.0


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    patch_size: int = 16
    embed_dim: int = 768
    num_layers: int = 12
    num_heads: int = 12
    mlp_ratio: float = 4.0
    template_size: tuple = (128, 128)   # (H_z, W_z)
    search_size: tuple = (256, 256)     # (H_x, W_x)
    reduction_ratio: int = 16
    fovea_init: float = 10.0
    share_backbone: bool = True
    hanning_window: bool = True
    attn_sigmoid: bool = False
    fovea_on_other: bool = False
    use_mvip: bool = True
    use_spatial_attn: bool = True
    use_token_attn: bool = True
    use_template_update: bool = True
    use_kalman: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        p = self.patch_size
        for name, (h, w) in (("template", self.template_size),
                             ("search", self.search_size)):
            if h % p or w % p:
                raise ConfigError(
                    f"{name} size {h}x{w} not divisible by patch size {p}")
        if self.embed_dim % self.num_heads:
            raise ConfigError("embed_dim must be divisible by num_heads")
        if self.n_tokens % self.reduction_ratio:
            raise ConfigError(
                f"reduction ratio {self.reduction_ratio} does not divide "
                f"N={self.n_tokens}")
        gx = self.search_size[1] // p
        gy = self.search_size[0] // p
        if gx != gy:
            raise ConfigError("search region must be square")

    @property
    def n_z(self):
        h, w = self.template_size
        return (h * w) // (self.patch_size ** 2)

    @property
    def n_x(self):
        h, w = self.search_size
        return (h * w) // (self.patch_size ** 2)

    @property
    def n_tokens(self):
        return self.n_z + self.n_x

    @property
    def grid(self):
        return self.search_size[0] // self.patch_size

    @property
    def mlp_hidden(self):
        return int(self.embed_dim * self.mlp_ratio)

    def ablation_flags(self):
        return dict(use_token_attn=self.use_token_attn,
                    use_spatial_attn=self.use_spatial_attn,
                    attn_sigmoid=self.attn_sigmoid,
                    fovea_on_other=self.fovea_on_other)


@dataclass
class TokenSeq:
    tokens: Tensor          # N x D
    n_z: int
    n_x: int
    modality: str

    def __post_init__(self):
        if self.tokens.shape[0] != self.n_z + self.n_x:
            raise DimensionError("token count must equal n_z + n_x")

    @property
    def dim(self):
        return self.tokens.shape[1]


@dataclass
class HeadOutput:
    score: Tensor    # G x G, sigmoid
    offset: Tensor   # 2 x G x G
    size: Tensor     # 2 x G x G, sigmoid


def _head_channels(d):
    chans = [d]
    for _ in range(HEAD_DEPTH):
        chans.append(max(1, chans[-1] // 2))
    return chans


class ModelParams:
    """All learnable tensors, addressable by unique name."""

    def __init__(self, config, seed=0):
        self.config = config
        self._params = {}
        rng = np.random.default_rng(seed)
        d = config.embed_dim
        p = config.patch_size

        for mod in ("rgb", "tir"):
            self._add(f"patch.{mod}.weight",
                      rng.normal(0, 0.02, size=(p * p * 3, d)))
            self._add(f"patch.{mod}.bias", np.zeros(d))
        self._add("pos.template", rng.normal(0, 0.02, size=(config.n_z, d)))
        self._add("pos.search", rng.normal(0, 0.02, size=(config.n_x, d)))

        stacks = ("shared",) if config.share_backbone else ("rgb", "tir")
        for stack in stacks:
            for l in range(config.num_layers):
                self._init_encoder_layer(f"encoder.{stack}.l{l}", rng, config)

        self.prompters = {}
        for l in range(config.num_layers + 1):
            n_branches = 2 if l == 0 else 3
            for direction in ("rgb", "tir"):
                pp = prm.init_prompter(f"prompter.l{l}.{direction}",
                                       config.n_tokens, config.reduction_ratio,
                                       n_branches, rng,
                                       lam_init=config.fovea_init)
                self.prompters[(l, direction)] = pp
                for par in pp.parameters():
                    self._register(par)

        self._add("fuse.dr.weight", rng.normal(0, 0.02, size=(2 * d, d)))
        self._add("fuse.dr.bias", np.zeros(d))

        chans = _head_channels(d)
        for stack, out_ch in (("score", 1), ("offset", 2), ("size", 2)):
            for i in range(HEAD_DEPTH):
                cin, cout = chans[i], chans[i + 1]
                self._add(f"head.{stack}.conv{i}.weight",
                          rng.normal(0, 0.02, size=(cout, cin, 3, 3)))
                self._add(f"head.{stack}.conv{i}.bias", np.zeros(cout))
                self._add(f"head.{stack}.norm{i}.gain", np.ones(cout))
                self._add(f"head.{stack}.norm{i}.bias", np.zeros(cout))
            self._add(f"head.{stack}.out.weight",
                      rng.normal(0, 0.02, size=(out_ch, chans[-1], 1, 1)))
            self._add(f"head.{stack}.out.bias", np.zeros(out_ch))

    def _add(self, name, value):
        self._register(Parameter(name, value))

    def _register(self, par):
        if par.name in self._params:
            raise ConfigError(f"duplicate parameter name '{par.name}'")
        self._params[par.name] = par

    def _init_encoder_layer(self, prefix, rng, config):
        d = config.embed_dim
        hidden = config.mlp_hidden
        self._add(f"{prefix}.ln1.gain", np.ones(d))
        self._add(f"{prefix}.ln1.bias", np.zeros(d))
        self._add(f"{prefix}.qkv.weight", rng.normal(0, 0.02, size=(d, 3 * d)))
        self._add(f"{prefix}.qkv.bias", np.zeros(3 * d))
        self._add(f"{prefix}.proj.weight", rng.normal(0, 0.02, size=(d, d)))
        self._add(f"{prefix}.proj.bias", np.zeros(d))
        self._add(f"{prefix}.ln2.gain", np.ones(d))
        self._add(f"{prefix}.ln2.bias", np.zeros(d))
        self._add(f"{prefix}.mlp.fc1.weight",
                  rng.normal(0, 0.02, size=(d, hidden)))
        self._add(f"{prefix}.mlp.fc1.bias", np.zeros(hidden))
        self._add(f"{prefix}.mlp.fc2.weight",
                  rng.normal(0, 0.02, size=(hidden, d)))
        self._add(f"{prefix}.mlp.fc2.bias", np.zeros(d))

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def get(self, name):
        return self._params[name].value

    def named_parameters(self):
        return list(self._params.items())

    def parameters(self):
        return list(self._params.values())

    def encoder_prefix(self, modality, layer):
        stack = "shared" if self.config.share_backbone else modality.lower()
        return f"encoder.{stack}.l{layer}"

    def zero_grad(self):
        for par in self._params.values():
            par.value.grad = None


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------

def patch_embed(image, modality, role, params, config):
    """Flattened-patch projection plus the segment's positional table."""
    p = config.patch_size
    h, w = image.shape[:2]
    if h % p or w % p:
        raise ConfigError(f"image {h}x{w} not divisible by patch size {p}")
    gy, gx = h // p, w // p
    patches = (np.asarray(image, dtype=np.float64)
               .reshape(gy, p, gx, p, 3)
               .transpose(0, 2, 1, 3, 4)
               .reshape(gy * gx, p * p * 3))
    mod = modality.lower()
    tokens = affine(Tensor(patches), params.get(f"patch.{mod}.weight"),
                    params.get(f"patch.{mod}.bias"))
    if role == "template":
        tokens = tokens + params.get("pos.template")
        return TokenSeq(tokens, n_z=gy * gx, n_x=0, modality=modality)
    if role == "search":
        tokens = tokens + params.get("pos.search")
        return TokenSeq(tokens, n_z=0, n_x=gy * gx, modality=modality)
    raise ConfigError(f"unknown segment role '{role}'")


def concat_tokens(z, x):
    if z.modality != x.modality:
        raise DimensionError(
            f"modality mismatch: {z.modality} vs {x.modality}")
    if z.dim != x.dim:
        raise DimensionError("token dims differ")
    return TokenSeq(concat([z.tokens, x.tokens], axis=0),
                    n_z=z.n_z + z.n_x, n_x=x.n_z + x.n_x,
                    modality=z.modality)


def split_tokens(ts):
    z = ts.tokens.narrow(0, 0, ts.n_z)
    x = ts.tokens.narrow(0, ts.n_z, ts.n_x)
    return z, x


def _attention(h, params, prefix, num_heads, capture=None):
    n, d = h.shape
    dh = d // num_heads
    qkv = affine(h, params.get(f"{prefix}.qkv.weight"),
                 params.get(f"{prefix}.qkv.bias"))
    parts = []
    for i in range(3):
        part = qkv.narrow(1, i * d, d).reshape(n, num_heads, dh)
        parts.append(part.transpose(1, 0, 2))   # heads x N x dh
    q, k, v = parts
    scores = q.matmul(k.transpose(0, 2, 1)) * (1.0 / math.sqrt(dh))
    attn = softmax(scores, axis=-1)
    if capture is not None:
        capture.append(attn.data.copy())
    out = attn.matmul(v).transpose(1, 0, 2).reshape(n, d)
    return affine(out, params.get(f"{prefix}.proj.weight"),
                  params.get(f"{prefix}.proj.bias"))


def encoder_layer(ts, params, prefix, config, capture=None):
    """Pre-norm ViT block: h + MHSA(LN(h)), then + MLP(LN(.))."""
    h = ts.tokens
    normed = layer_norm(h, params.get(f"{prefix}.ln1.gain"),
                        params.get(f"{prefix}.ln1.bias"))
    h = h + _attention(normed, params, prefix, config.num_heads, capture)
    normed = layer_norm(h, params.get(f"{prefix}.ln2.gain"),
                        params.get(f"{prefix}.ln2.bias"))
    mlp = affine(normed, params.get(f"{prefix}.mlp.fc1.weight"),
                 params.get(f"{prefix}.mlp.fc1.bias")).gelu()
    mlp = affine(mlp, params.get(f"{prefix}.mlp.fc2.weight"),
                 params.get(f"{prefix}.mlp.fc2.bias"))
    h = h + mlp
    return TokenSeq(h, ts.n_z, ts.n_x, ts.modality)


def single_forward(ts, params, config, capture=None):
    """Plain L-layer encoder pass of one branch, no prompting."""
    out = ts
    for l in range(config.num_layers):
        prefix = params.encoder_prefix(ts.modality, l)
        out = encoder_layer(out, params, prefix, config, capture)
    return out


def dual_forward(h_rgb, h_tir, params, config, capture_rgb=None,
                 capture_tir=None):
    """Mutual-prompt recursion over both branches.

    Layer 0 applies the initial two-branch prompter; every encoder layer l
    then computes H_m^l = E_m^l(H_m^{l-1}) + MVIP(H_m^{l-1}, P_m^{l-1},
    H_other^{l-1}).  With use_mvip disabled the branches run independently.
    """
    if h_rgb.tokens.shape != h_tir.tokens.shape:
        raise DimensionError("branch token shapes differ")
    flags = config.ablation_flags()

    if not config.use_mvip:
        return (single_forward(h_rgb, params, config, capture_rgb),
                single_forward(h_tir, params, config, capture_tir))

    p_rgb = prm.imvip(h_rgb.tokens, h_tir.tokens,
                      params.prompters[(0, "rgb")], **flags)
    p_tir = prm.imvip(h_tir.tokens, h_rgb.tokens,
                      params.prompters[(0, "tir")], **flags)
    cur_rgb = TokenSeq(h_rgb.tokens + p_rgb, h_rgb.n_z, h_rgb.n_x, RGB)
    cur_tir = TokenSeq(h_tir.tokens + p_tir, h_tir.n_z, h_tir.n_x, TIR)

    for l in range(1, config.num_layers + 1):
        next_p_rgb = prm.mvip(cur_rgb.tokens, p_rgb, cur_tir.tokens,
                              params.prompters[(l, "rgb")], **flags)
        next_p_tir = prm.mvip(cur_tir.tokens, p_tir, cur_rgb.tokens,
                              params.prompters[(l, "tir")], **flags)
        enc_rgb = encoder_layer(cur_rgb, params,
                                params.encoder_prefix(RGB, l - 1), config,
                                capture_rgb)
        enc_tir = encoder_layer(cur_tir, params,
                                params.encoder_prefix(TIR, l - 1), config,
                                capture_tir)
        cur_rgb = TokenSeq(enc_rgb.tokens + next_p_rgb,
                           cur_rgb.n_z, cur_rgb.n_x, RGB)
        cur_tir = TokenSeq(enc_tir.tokens + next_p_tir,
                           cur_tir.n_z, cur_tir.n_x, TIR)
        p_rgb, p_tir = next_p_rgb, next_p_tir

    return cur_rgb, cur_tir


def fuse_reduce(h_rgb, h_tir, params):
    if h_rgb.tokens.shape != h_tir.tokens.shape:
        raise DimensionError("fusion inputs must have equal shapes")
    fused = concat([h_rgb.tokens, h_tir.tokens], axis=1)
    reduced = affine(fused, params.get("fuse.dr.weight"),
                     params.get("fuse.dr.bias"))
    return TokenSeq(reduced, h_rgb.n_z, h_rgb.n_x, FUSED)


def _channel_norm(x, gain, bias, eps=1e-6):
    """Per-channel normalization over spatial positions (C x H x W input)."""
    c = x.shape[0]
    flat = x.reshape(c, -1)
    mu = flat.mean(axis=1, keepdims=True)
    centered = flat - mu
    var = centered.power(2.0).mean(axis=1, keepdims=True)
    normed = centered / (var + eps).sqrt()
    normed = normed * gain.reshape(c, 1) + bias.reshape(c, 1)
    return normed.reshape(*x.shape)


def _head_stack(x, params, stack, config):
    out = x
    for i in range(HEAD_DEPTH):
        out = out.conv2d(params.get(f"head.{stack}.conv{i}.weight"),
                         params.get(f"head.{stack}.conv{i}.bias"))
        out = _channel_norm(out, params.get(f"head.{stack}.norm{i}.gain"),
                            params.get(f"head.{stack}.norm{i}.bias"))
        out = out.relu()
    return out.conv2d(params.get(f"head.{stack}.out.weight"),
                      params.get(f"head.{stack}.out.bias"))


def head_forward(fused, params, config):
    if fused.modality != FUSED:
        raise DimensionError("head expects fused tokens")
    g = int(round(math.sqrt(fused.n_x)))
    if g * g != fused.n_x:
        raise DimensionError(f"search token count {fused.n_x} is not square")
    d = fused.dim
    _, search = split_tokens(fused)
    fmap = search.reshape(g, g, d).transpose(2, 0, 1)   # D x G x G
    score = _head_stack(fmap, params, "score", config).reshape(g, g).sigmoid()
    offset = _head_stack(fmap, params, "offset", config)
    size = _head_stack(fmap, params, "size", config).sigmoid()
    return HeadOutput(score=score, offset=offset, size=size)


def forward_pair(rgb_template, rgb_search, tir_template, tir_search, params,
                 config, capture_rgb=None, capture_tir=None):
    """Full pipeline from normalized crops to head maps."""
    h_rgb = concat_tokens(
        patch_embed(rgb_template, RGB, "template", params, config),
        patch_embed(rgb_search, RGB, "search", params, config))
    h_tir = concat_tokens(
        patch_embed(tir_template, TIR, "template", params, config),
        patch_embed(tir_search, TIR, "search", params, config))
    out_rgb, out_tir = dual_forward(h_rgb, h_tir, params, config,
                                    capture_rgb, capture_tir)
    fused = fuse_reduce(out_rgb, out_tir, params)
    return head_forward(fused, params, config)


# ---------------------------------------------------------------------------
# decoding and loss
# ---------------------------------------------------------------------------

def decode_box(out, geometry, config):
    """Argmax-cell decode of the head maps into a frame-coordinate box."""
    g = out.score.shape[0]
    cell = config.search_size[0] / g
    score = out.score.data
    ranked = score
    if config.hanning_window:
        win = np.outer(np.hanning(g + 2)[1:-1], np.hanning(g + 2)[1:-1])
        ranked = score * win
    r, c = np.unravel_index(np.argmax(ranked), ranked.shape)
    ox, oy = out.offset.data[:, r, c]
    cx = (c + 0.5 + ox) * cell
    cy = (r + 0.5 + oy) * cell
    w = out.size.data[0, r, c] * config.search_size[1]
    h = out.size.data[1, r, c] * config.search_size[0]
    crop_box = BBox.from_center(cx, cy, w, h, confidence=float(score[r, c]))
    return geometry.box_to_frame(crop_box)


def _gaussian_radius(height, width, min_overlap=0.7):
    # CenterNet radius heuristic
    a1 = 1
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 - math.sqrt(b1 ** 2 - 4 * a1 * c1)) / 2
    a2 = 4
    b2 = 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 - math.sqrt(b2 ** 2 - 4 * a2 * c2)) / 2
    a3 = 4 * min_overlap
    b3 = -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(b3 ** 2 - 4 * a3 * c3)) / 2
    return max(0.0, min(r1, r2, r3))


def gaussian_target(gt, config):
    """Unit-peak Gaussian score target on the search grid."""
    g = config.grid
    cell = config.search_size[0] / g
    cx = gt.cx / cell - 0.5
    cy = gt.cy / cell - 0.5
    radius = _gaussian_radius(max(gt.h / cell, 1.0), max(gt.w / cell, 1.0))
    sigma = max((2 * radius + 1) / 6.0, 0.5)
    ys, xs = np.mgrid[0:g, 0:g]
    target = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sigma ** 2))
    r0 = int(np.clip(round(cy), 0, g - 1))
    c0 = int(np.clip(round(cx), 0, g - 1))
    target[r0, c0] = 1.0
    return target, (r0, c0)


def _giou_tensor(pred, gt):
    """Differentiable GIoU between (cx, cy, w, h) tensors of shape (4,)."""
    def corners(b):
        cx, cy = b.narrow(0, 0, 1), b.narrow(0, 1, 1)
        w, h = b.narrow(0, 2, 1), b.narrow(0, 3, 1)
        return cx - w * 0.5, cy - h * 0.5, cx + w * 0.5, cy + h * 0.5, w, h

    ax1, ay1, ax2, ay2, aw, ah = corners(pred)
    bx1, by1, bx2, by2, bw, bh = corners(gt)
    zero = Tensor(np.zeros(1))
    iw = ax2.minimum(bx2) - ax1.maximum(bx1)
    ih = ay2.minimum(by2) - ay1.maximum(by1)
    inter = iw.maximum(zero) * ih.maximum(zero)
    union = aw * ah + bw * bh - inter
    enc = (ax2.maximum(bx2) - ax1.minimum(bx1)) * \
          (ay2.maximum(by2) - ay1.minimum(by1))
    return inter / union - (enc - union) / enc


def compute_loss(out, gt, config):
    """Gaussian-target focal loss + weighted GIoU and L1 box regression.

    `gt` is a BBox in search-crop pixel coordinates.  Box regression reads
    the offset/size maps at the ground-truth center cell.
    """
    if not (0 <= gt.cx <= config.search_size[1]
            and 0 <= gt.cy <= config.search_size[0]):
        raise ValueError("ground-truth center outside the search region")
    g = config.grid
    cell = config.search_size[0] / g
    target, (r0, c0) = gaussian_target(gt, config)

    eps = 1e-12
    s = out.score.maximum(eps).minimum(1.0 - eps)
    pos_mask = (target >= 1.0).astype(np.float64)
    neg_mask = 1.0 - pos_mask
    neg_weight = (1.0 - target) ** FOCAL_BETA
    pos_term = (1.0 - s).power(FOCAL_ALPHA) * s.log() * pos_mask
    neg_term = s.power(FOCAL_ALPHA) * (1.0 - s).log() * (neg_weight * neg_mask)
    n_pos = max(pos_mask.sum(), 1.0)
    focal = -(pos_term.sum() + neg_term.sum()) * (1.0 / n_pos)

    # predicted box at the ground-truth cell, normalized to [0, 1]
    off = out.offset.narrow(1, r0, 1).narrow(2, c0, 1).reshape(2)
    siz = out.size.narrow(1, r0, 1).narrow(2, c0, 1).reshape(2)
    base = Tensor(np.array([(c0 + 0.5) / g, (r0 + 0.5) / g]))
    pred = concat([base + off * (cell / config.search_size[0]), siz], axis=0)
    gt_vec = Tensor(np.array([gt.cx, gt.cy, gt.w, gt.h])
                    / config.search_size[0])
    giou_term = 1.0 - _giou_tensor(pred, gt_vec).reshape(())
    diff = pred - gt_vec
    l1_term = diff.maximum(-diff).mean()

    total = focal + LOSS_GIOU_WEIGHT * giou_term + LOSS_L1_WEIGHT * l1_term
    return {"total": total, "focal": focal, "giou": giou_term, "l1": l1_term}
