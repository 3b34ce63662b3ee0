"""Backbone network, refinement branches, flat baseline head, checkpoints.

The backbone (temporal conv -> relu -> mean pool -> dense -> relu) produces a
shared embedding. The refinement head attaches three small branches to it:
keyword classification (N logits), keyword-like (1 logit), speech (1 logit).
The baseline head is a single (N+2)-way classifier over the same backbone.
All branches are computed for every sample; masking is the loss layer's job.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .labels import HierLabel
from .nncore import ParamStore, conv1d_time, conv1d_time_backward, dense, dense_backward, relu, relu_backward

HEAD_SR = "sr"
HEAD_BASELINE = "baseline"
CHECKPOINT_VERSION = 1

# Affine input rescaling centring the default log-mel range [ln 1e-6, 0] on [-1, 1].
DEFAULT_INPUT_SHIFT = 6.907755278982137
DEFAULT_INPUT_SCALE = 0.14476482730108395

BRANCHES = ("sp", "kw", "cls")


@dataclass(frozen=True)
class ModelConfig:
    n_keywords: int = 3
    n_frames: int = 98
    n_mels: int = 40
    conv_kernel: int = 5
    channels: int = 16
    embed_dim: int = 32
    hidden_cls: int = 32
    hidden_kw: int = 32
    hidden_sp: int = 32
    hidden_baseline: Optional[int] = None  # None -> hidden_cls + hidden_kw + hidden_sp
    branch_depth: int = 2
    head_kind: str = HEAD_SR
    input_shift: float = DEFAULT_INPUT_SHIFT
    input_scale: float = DEFAULT_INPUT_SCALE
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.n_keywords < 1:
            raise ValueError(f"n_keywords must be >= 1, got {self.n_keywords}")
        for name in ("n_frames", "n_mels", "conv_kernel", "channels", "embed_dim",
                     "hidden_cls", "hidden_kw", "hidden_sp"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden_baseline is not None and self.hidden_baseline < 1:
            raise ValueError(f"hidden_baseline must be >= 1, got {self.hidden_baseline}")
        if self.branch_depth not in (1, 2):
            raise ValueError(f"branch_depth must be 1 or 2, got {self.branch_depth}")
        if self.head_kind not in (HEAD_SR, HEAD_BASELINE):
            raise ValueError(f"head_kind must be 'sr' or 'baseline', got {self.head_kind!r}")
        if self.conv_kernel > self.n_frames:
            raise ValueError(
                f"conv_kernel {self.conv_kernel} exceeds n_frames {self.n_frames}"
            )
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @property
    def baseline_hidden(self) -> int:
        if self.hidden_baseline is not None:
            return self.hidden_baseline
        return self.hidden_cls + self.hidden_kw + self.hidden_sp

    @property
    def n_classes(self) -> int:
        return self.n_keywords + 2


def _branch_specs(cfg: ModelConfig) -> list[tuple[str, int, int]]:
    if cfg.head_kind == HEAD_SR:
        return [
            ("sp", cfg.hidden_sp, 1),
            ("kw", cfg.hidden_kw, 1),
            ("cls", cfg.hidden_cls, cfg.n_keywords),
        ]
    return [("head", cfg.baseline_hidden, cfg.n_classes)]


def layer_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Parameter name -> shape, in deterministic initialization order."""
    shapes: dict[str, tuple[int, ...]] = {
        "conv.w": (cfg.conv_kernel, cfg.n_mels, cfg.channels),
        "conv.b": (cfg.channels,),
        "embed.w": (cfg.channels, cfg.embed_dim),
        "embed.b": (cfg.embed_dim,),
    }
    for name, hidden, out in _branch_specs(cfg):
        if cfg.branch_depth == 2:
            shapes[f"{name}.hidden.w"] = (cfg.embed_dim, hidden)
            shapes[f"{name}.hidden.b"] = (hidden,)
            shapes[f"{name}.out.w"] = (hidden, out)
        else:
            shapes[f"{name}.out.w"] = (cfg.embed_dim, out)
        shapes[f"{name}.out.b"] = (out,)
    return shapes


def _fans(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 2:
        return shape[0], shape[1]
    # conv kernels (K, F, O): receptive field times input bins feed each output
    return shape[0] * shape[1], shape[2]


def init_model(cfg: ModelConfig) -> ParamStore:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(cfg.seed)
    dtype = np.dtype(cfg.dtype)
    store = ParamStore()
    for name, shape in layer_shapes(cfg).items():
        if name.endswith(".w"):
            fan_in, fan_out = _fans(shape)
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            store.add(name, rng.uniform(-bound, bound, size=shape).astype(dtype))
        else:
            store.add(name, np.zeros(shape, dtype=dtype))
    return store


def glorot_bound(cfg: ModelConfig, name: str) -> float:
    return math.sqrt(6.0 / sum(_fans(layer_shapes(cfg)[name])))


@dataclass
class ForwardState:
    """Activations of one forward pass, kept for the matching backward pass."""

    embeddings: np.ndarray
    cls_logits: np.ndarray | None = None
    kw_logits: np.ndarray | None = None
    sp_logits: np.ndarray | None = None
    logits: np.ndarray | None = None  # baseline head
    hidden: dict[str, np.ndarray] = field(default_factory=dict)
    cache: dict[str, np.ndarray] = field(default_factory=dict)


def _check_features(cfg: ModelConfig, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[1] != cfg.n_frames or x.shape[2] != cfg.n_mels:
        raise ValueError(
            f"features of shape {x.shape} do not match configured "
            f"(batch, {cfg.n_frames}, {cfg.n_mels})"
        )
    return x


def _backbone_forward(store: ParamStore, cfg: ModelConfig, x: np.ndarray) -> ForwardState:
    p = store.params
    scaled = (x + cfg.input_shift) * cfg.input_scale
    pre_conv = conv1d_time(scaled, p["conv.w"], p["conv.b"])
    act_conv = relu(pre_conv)
    pooled = act_conv.mean(axis=1)
    pre_embed = dense(pooled, p["embed.w"], p["embed.b"])
    state = ForwardState(embeddings=relu(pre_embed))
    state.cache.update(
        scaled=scaled, pre_conv=pre_conv, act_conv=act_conv, pooled=pooled, pre_embed=pre_embed
    )
    return state


def _backbone_backward(store: ParamStore, cfg: ModelConfig, state: ForwardState, g_embed):
    p, cache = store.params, state.cache
    g_pre_embed = relu_backward(g_embed, cache["pre_embed"])
    g_pooled, g_w, g_b = dense_backward(g_pre_embed, cache["pooled"], p["embed.w"])
    store.accumulate("embed.w", g_w)
    store.accumulate("embed.b", g_b)
    t_out = cache["act_conv"].shape[1]
    g_act = np.broadcast_to(g_pooled[:, None, :] / t_out, cache["act_conv"].shape)
    g_pre_conv = relu_backward(g_act, cache["pre_conv"])
    _, g_k, g_cb = conv1d_time_backward(g_pre_conv, cache["scaled"], p["conv.w"])
    store.accumulate("conv.w", g_k)
    store.accumulate("conv.b", g_cb)


def _branch_forward(store: ParamStore, cfg: ModelConfig, state: ForwardState, name: str):
    p = store.params
    if cfg.branch_depth == 2:
        pre_hidden = dense(state.embeddings, p[f"{name}.hidden.w"], p[f"{name}.hidden.b"])
        hidden = relu(pre_hidden)
        state.cache[f"{name}.pre_hidden"] = pre_hidden
        state.hidden[name] = hidden
        return dense(hidden, p[f"{name}.out.w"], p[f"{name}.out.b"])
    state.hidden[name] = state.embeddings
    return dense(state.embeddings, p[f"{name}.out.w"], p[f"{name}.out.b"])


def _branch_backward(store: ParamStore, cfg: ModelConfig, state: ForwardState, name: str, g_out):
    p = store.params
    if cfg.branch_depth == 2:
        g_hidden, g_w, g_b = dense_backward(g_out, state.hidden[name], p[f"{name}.out.w"])
        store.accumulate(f"{name}.out.w", g_w)
        store.accumulate(f"{name}.out.b", g_b)
        g_pre = relu_backward(g_hidden, state.cache[f"{name}.pre_hidden"])
        g_embed, g_w, g_b = dense_backward(g_pre, state.embeddings, p[f"{name}.hidden.w"])
        store.accumulate(f"{name}.hidden.w", g_w)
        store.accumulate(f"{name}.hidden.b", g_b)
        return g_embed
    g_embed, g_w, g_b = dense_backward(g_out, state.embeddings, p[f"{name}.out.w"])
    store.accumulate(f"{name}.out.w", g_w)
    store.accumulate(f"{name}.out.b", g_b)
    return g_embed


def forward_sr(store: ParamStore, cfg: ModelConfig, x) -> ForwardState:
    """Embeddings plus per-branch logits; every branch runs on every sample."""
    if cfg.head_kind != HEAD_SR:
        raise ValueError("forward_sr requires a model configured with head_kind='sr'")
    state = _backbone_forward(store, cfg, _check_features(cfg, x))
    state.sp_logits = _branch_forward(store, cfg, state, "sp")[:, 0]
    state.kw_logits = _branch_forward(store, cfg, state, "kw")[:, 0]
    state.cls_logits = _branch_forward(store, cfg, state, "cls")
    return state


def backward_sr(store: ParamStore, cfg: ModelConfig, state: ForwardState, g_cls, g_kw, g_sp):
    """Accumulate gradients for a forward_sr pass given per-logit-group gradients."""
    g_embed = _branch_backward(store, cfg, state, "cls", np.asarray(g_cls))
    g_embed = g_embed + _branch_backward(store, cfg, state, "kw", np.asarray(g_kw)[:, None])
    g_embed = g_embed + _branch_backward(store, cfg, state, "sp", np.asarray(g_sp)[:, None])
    _backbone_backward(store, cfg, state, g_embed)


def forward_baseline(store: ParamStore, cfg: ModelConfig, x) -> ForwardState:
    if cfg.head_kind != HEAD_BASELINE:
        raise ValueError("forward_baseline requires a model configured with head_kind='baseline'")
    state = _backbone_forward(store, cfg, _check_features(cfg, x))
    state.logits = _branch_forward(store, cfg, state, "head")
    return state


def backward_baseline(store: ParamStore, cfg: ModelConfig, state: ForwardState, g_logits):
    g_embed = _branch_backward(store, cfg, state, "head", np.asarray(g_logits))
    _backbone_backward(store, cfg, state, g_embed)


def backbone_param_names() -> list[str]:
    return ["conv.w", "conv.b", "embed.w", "embed.b"]


def branch_param_names(cfg: ModelConfig, branch: str) -> list[str]:
    return [name for name in layer_shapes(cfg) if name.startswith(branch + ".")]


def save_checkpoint(store: ParamStore, cfg: ModelConfig, path) -> None:
    """Write a versioned JSON checkpoint; float repr keeps values bit-exact."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(cfg),
        "params": {
            name: {"shape": list(value.shape), "data": value.ravel().tolist()}
            for name, value in store.params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)


def load_checkpoint(path) -> tuple[ParamStore, ModelConfig]:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    cfg = ModelConfig(**payload["config"])
    expected = layer_shapes(cfg)
    params = payload["params"]
    if set(params) != set(expected):
        raise ValueError(
            f"checkpoint parameters {sorted(params)} do not match config layers {sorted(expected)}"
        )
    dtype = np.dtype(cfg.dtype)
    store = ParamStore()
    for name, shape in expected.items():
        entry = params[name]
        if tuple(entry["shape"]) != shape:
            raise ValueError(
                f"checkpoint shape {entry['shape']} for {name!r} does not match expected {shape}"
            )
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ValueError(f"checkpoint data length {data.size} wrong for {name!r} shape {shape}")
        store.add(name, data.reshape(shape).astype(dtype))
    return store, cfg


def dump_embeddings(store: ParamStore, cfg: ModelConfig, x, labels, path, batch: int = 256) -> None:
    """CSV of per-sample branch hidden activations plus the hierarchical label.

    Row layout: sample_id, label_kind, keyword_index (-1 if absent), then the
    speech-, keyword-, and classifier-branch activation vectors. With
    branch_depth=1 the branches have no private hidden layer and the shared
    embedding is exported for each.
    """
    if cfg.head_kind != HEAD_SR:
        raise ValueError("embedding export is defined for sr-head models only")
    x = _check_features(cfg, x)
    labels = list(labels)
    if len(labels) != x.shape[0]:
        raise ValueError(f"{len(labels)} labels for {x.shape[0]} samples")
    with open(path, "w", encoding="utf-8") as handle:
        for start in range(0, x.shape[0], batch):
            state = forward_sr(store, cfg, x[start : start + batch])
            for row in range(state.embeddings.shape[0]):
                label: HierLabel = labels[start + row]
                index = label.keyword_index if label.keyword_index is not None else -1
                cells = [str(start + row), label.kind, str(index)]
                for name in BRANCHES:
                    cells.extend(repr(float(v)) for v in state.hidden[name][row])
                handle.write(",".join(cells) + "\n")
