"""Desk-scale training: AdamW optimizer and toy overfit/finetune loops.

Dataset-scale schedules (epoch counts, LR decay milestones) are documented
defaults in RunConfig but not reproduced here; these loops exist to verify
that the architecture and loss train correctly.
"""

import numpy as np

from . import fileio, model, tracker
from .boxes import BBox


class AdamW:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-4):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.value.grad = None

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.value.grad
            if g is None:
                continue
            self._m[i] = self.beta1 * self._m[i] + (1 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1 - self.beta2) * g * g
            update = (self._m[i] / bc1) / (np.sqrt(self._v[i] / bc2)
                                           + self.eps)
            p.value.data = p.value.data * (1.0 - self.lr * self.weight_decay) \
                - self.lr * update


def make_training_sample(record, frame_idx, config, rng=None, jitter=0.0):
    """Template/search crops plus the ground-truth box in search coordinates."""
    gt = record.gt[frame_idx]
    rgb = fileio.normalize_frame(record.frames_rgb[frame_idx])
    tir = fileio.normalize_frame(record.frames_tir[frame_idx])
    t_rgb, _ = tracker.crop_region(rgb, gt, tracker.TEMPLATE_CONTEXT,
                                   config.template_size[0])
    t_tir, _ = tracker.crop_region(tir, gt, tracker.TEMPLATE_CONTEXT,
                                   config.template_size[0])
    center = gt
    if jitter > 0 and rng is not None:
        dx, dy = rng.uniform(-jitter, jitter, size=2) * gt.w
        center = BBox.from_center(gt.cx + dx, gt.cy + dy, gt.w, gt.h)
    s_rgb, geom = tracker.crop_region(rgb, center, tracker.SEARCH_CONTEXT,
                                      config.search_size[0])
    s_tir, _ = tracker.crop_region(tir, center, tracker.SEARCH_CONTEXT,
                                   config.search_size[0])
    return {"template_rgb": t_rgb, "template_tir": t_tir,
            "search_rgb": s_rgb, "search_tir": s_tir,
            "gt_crop": geom.box_to_crop(gt)}


def loss_on_sample(params, config, sample):
    out = model.forward_pair(sample["template_rgb"], sample["search_rgb"],
                             sample["template_tir"], sample["search_tir"],
                             params, config)
    return model.compute_loss(out, sample["gt_crop"], config), out


def clip_grad_norm(parameters, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm."""
    grads = [p.value.grad for p in parameters if p.value.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def train_steps(params, config, samples, steps, lr=1e-3, weight_decay=1e-4,
                seed=0, clip_norm=None, trainable=None, callback=None):
    """Run AdamW over the given samples (cycled deterministically).

    `trainable` restricts the update to a subset of parameters (for
    prompt-tuning against a frozen backbone); defaults to all parameters.
    """
    rng = np.random.default_rng(seed)
    opt = AdamW(params.parameters() if trainable is None else trainable,
                lr=lr, weight_decay=weight_decay)
    losses = []
    for step in range(steps):
        sample = samples[int(rng.integers(len(samples)))]
        params.zero_grad()
        loss, _ = loss_on_sample(params, config, sample)
        loss["total"].backward()
        if clip_norm is not None:
            clip_grad_norm(opt.params, clip_norm)
        opt.step()
        losses.append(loss["total"].item())
        if callback is not None:
            callback(step, losses[-1])
    return losses
