"""Configuration, checkpoint, sequence, and result file formats."""

import os
import struct
from dataclasses import dataclass, fields

import numpy as np
from PIL import Image

from .boxes import BBox
from .model import ModelConfig, ModelParams
from .synth import SequenceRecord

CHECKPOINT_MAGIC = b"MPLT1"
CHECKPOINT_VERSION = 1

# channel statistics applied to both modalities after scaling to [0, 1]
NORM_MEAN = np.array([0.485, 0.456, 0.406])
NORM_STD = np.array([0.229, 0.224, 0.225])


class ConfigParseError(ValueError):
    pass


class CheckpointError(IOError):
    pass


class SequenceError(IOError):
    pass


@dataclass
class RunConfig:
    # architecture
    patch_size: int = 16
    embed_dim: int = 768
    num_layers: int = 12
    num_heads: int = 12
    mlp_ratio: float = 4.0
    template_h: int = 128
    template_w: int = 128
    search_h: int = 256
    search_w: int = 256
    reduction_ratio: int = 16
    fovea_init: float = 10.0
    share_backbone: bool = True
    hanning_window: bool = True
    attn_sigmoid: bool = False
    fovea_on_other: bool = False
    # ablation flags
    use_mvip: bool = True
    use_spatial_attn: bool = True
    use_token_attn: bool = True
    use_template_update: bool = True
    use_kalman: bool = True
    # online tracking
    thr_a: float = 0.91
    thr_b: float = 0.25
    buffer_n: int = 16
    kf_q_pos: float = 1e-2
    kf_q_vel: float = 1e-4
    kf_r: float = 1e-1
    kf_p0: float = 10.0
    # run control
    seed: int = 0
    sequences_dir: str = ""
    checkpoint: str = ""
    output_dir: str = ""
    # training (documented defaults; dataset-scale schedules are out of scope)
    train_steps: int = 500
    learning_rate: float = 7.5e-4
    backbone_learning_rate: float = 7.5e-5
    weight_decay: float = 1e-4

    def validate(self):
        for name in ("thr_a", "thr_b"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigParseError(f"{name}={v} outside [0, 1]")
        if not self.thr_b < self.thr_a:
            raise ConfigParseError("thr_b must be below thr_a")
        for name in ("sequences_dir", "checkpoint", "output_dir"):
            path = getattr(self, name)
            if path and not os.path.exists(path):
                raise ConfigParseError(f"{name} path does not exist: {path}")
        self.model_config()   # architecture divisibility checks

    def model_config(self):
        return ModelConfig(
            patch_size=self.patch_size, embed_dim=self.embed_dim,
            num_layers=self.num_layers, num_heads=self.num_heads,
            mlp_ratio=self.mlp_ratio,
            template_size=(self.template_h, self.template_w),
            search_size=(self.search_h, self.search_w),
            reduction_ratio=self.reduction_ratio,
            fovea_init=self.fovea_init, share_backbone=self.share_backbone,
            hanning_window=self.hanning_window,
            attn_sigmoid=self.attn_sigmoid,
            fovea_on_other=self.fovea_on_other, use_mvip=self.use_mvip,
            use_spatial_attn=self.use_spatial_attn,
            use_token_attn=self.use_token_attn,
            use_template_update=self.use_template_update,
            use_kalman=self.use_kalman)

    def kf_noise(self):
        return {"q_pos": self.kf_q_pos, "q_vel": self.kf_q_vel,
                "r_meas": self.kf_r, "p0": self.kf_p0}


def _coerce(name, raw, target_type, lineno):
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return target_type(raw)
    except ValueError:
        raise ConfigParseError(
            f"line {lineno}: invalid value '{raw}' for key '{name}'") from None


def parse_config(text):
    """Line-based `key = value` parser; unknown keys are an error."""
    types = {f.name: f.type for f in fields(RunConfig)}
    type_map = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigParseError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in types:
            raise ConfigParseError(f"line {lineno}: unknown key '{key}'")
        target = type_map[types[key]] if isinstance(types[key], str) \
            else types[key]
        values[key] = _coerce(key, raw, target, lineno)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg):
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params, path):
    """Binary little-endian checkpoint: magic, version, named f64 tensors."""
    named = params.named_parameters()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(named)))
        for name, par in named:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            data = np.ascontiguousarray(par.data, dtype="<f8")
            fh.write(struct.pack("<I", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(data.tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path, config, seed=0):
    """Load named tensors into a fresh model, validating shapes against
    the given configuration."""
    params = ModelParams(config, seed=seed)
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad checkpoint magic: {magic!r}")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        seen = set()
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8, "dims"))[0]
                for _ in range(rank))
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(
                _read_exact(fh, 8 * size, f"data of '{name}'"),
                dtype="<f8").reshape(shape)
            if name not in params:
                raise CheckpointError(f"unknown tensor '{name}' in checkpoint")
            expected = params[name].data.shape
            if expected != shape:
                raise CheckpointError(
                    f"shape mismatch for tensor '{name}': checkpoint "
                    f"{shape} vs config {expected}")
            params[name].value.data = data.astype(np.float64).copy()
            seen.add(name)
    missing = {name for name, _ in params.named_parameters()} - seen
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")
    return params


# ---------------------------------------------------------------------------
# sequence directories
# ---------------------------------------------------------------------------

def normalize_frame(frame):
    """uint8 image -> standardized float64, shared constants per modality."""
    scaled = np.asarray(frame, dtype=np.float64) / 255.0
    return (scaled - NORM_MEAN) / NORM_STD


def _load_frames(folder):
    names = sorted(os.listdir(folder))
    frames = []
    for name in names:
        with Image.open(os.path.join(folder, name)) as img:
            frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
    return frames


def load_sequence(directory):
    visible = os.path.join(directory, "visible")
    infrared = os.path.join(directory, "infrared")
    gt_path = os.path.join(directory, "groundtruth.txt")
    for required in (visible, infrared, gt_path):
        if not os.path.exists(required):
            raise SequenceError(f"missing '{required}'")
    frames_rgb = _load_frames(visible)
    frames_tir = _load_frames(infrared)
    if len(frames_rgb) != len(frames_tir):
        raise SequenceError(
            f"frame count mismatch: {len(frames_rgb)} visible vs "
            f"{len(frames_tir)} infrared")
    gt = []
    with open(gt_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                x, y, w, h = (float(p) for p in parts)
            except ValueError:
                raise SequenceError(
                    f"{gt_path}: unparsable line {lineno}: '{line}'") \
                    from None
            gt.append(BBox(x, y, w, h))
    attributes = [[] for _ in gt]
    attr_path = os.path.join(directory, "attributes.txt")
    if os.path.exists(attr_path):
        with open(attr_path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                if i < len(attributes):
                    attributes[i] = [a for a in line.strip().split(",") if a]
    return SequenceRecord(name=os.path.basename(os.path.normpath(directory)),
                          frames_rgb=frames_rgb, frames_tir=frames_tir,
                          gt=gt, attributes=attributes)


def write_sequence(record, directory):
    visible = os.path.join(directory, "visible")
    infrared = os.path.join(directory, "infrared")
    os.makedirs(visible, exist_ok=True)
    os.makedirs(infrared, exist_ok=True)
    for i, (rgb, tir) in enumerate(zip(record.frames_rgb, record.frames_tir)):
        Image.fromarray(rgb).save(os.path.join(visible, f"{i:06d}.png"))
        Image.fromarray(tir).save(os.path.join(infrared, f"{i:06d}.png"))
    with open(os.path.join(directory, "groundtruth.txt"), "w",
              encoding="utf-8") as fh:
        for box in record.gt:
            fh.write(f"{box.x:.6f},{box.y:.6f},{box.w:.6f},{box.h:.6f}\n")
    with open(os.path.join(directory, "attributes.txt"), "w",
              encoding="utf-8") as fh:
        for attrs in record.attributes:
            fh.write(",".join(attrs) + "\n")


# ---------------------------------------------------------------------------
# tracker results
# ---------------------------------------------------------------------------

def write_results(boxes, path):
    """One `x,y,w,h,confidence` line per frame, 6 decimal places."""
    with open(path, "w", encoding="utf-8") as fh:
        for box in boxes:
            fh.write(f"{box.x:.6f},{box.y:.6f},{box.w:.6f},{box.h:.6f},"
                     f"{box.confidence:.6f}\n")


def read_results(path):
    boxes = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            x, y, w, h, conf = (float(p) for p in line.split(","))
            boxes.append(BBox(x, y, w, h, conf))
    return boxes
