"""Context-window token classifier: embeddings, a two-layer head with
per-token softmax, exact analytic gradients, and a bias-corrected Adam
optimizer.  All arithmetic is float64 so finite-difference gradient checks
are meaningful at tight tolerances.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .corpus import LabelScheme, Vocabulary

CHECKPOINT_MAGIC = b"MOMNERC1"
CHECKPOINT_VERSION = 1

# parameter blocks in declaration (and serialization) order
PARAM_BLOCKS = ("embedding", "w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_classes: int
    embed_dim: int = 32
    context_radius: int = 2
    hidden_dim: int = 64
    max_len: int = 128
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "n_classes", "embed_dim", "hidden_dim", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.context_radius < 0:
            raise ValueError("context_radius must be >= 0")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")

    @property
    def feature_dim(self) -> int:
        return (2 * self.context_radius + 1) * self.embed_dim


@dataclass
class ModelParameters:
    embedding: np.ndarray  # (vocab_size, embed_dim)
    w1: np.ndarray         # (feature_dim, hidden_dim)
    b1: np.ndarray         # (hidden_dim,)
    w2: np.ndarray         # (hidden_dim, n_classes)
    b2: np.ndarray         # (n_classes,)

    def blocks(self):
        for name in PARAM_BLOCKS:
            yield name, getattr(self, name)

    def copy(self) -> "ModelParameters":
        return ModelParameters(**{name: arr.copy() for name, arr in self.blocks()})

    def zero_(self) -> None:
        for _, arr in self.blocks():
            arr.fill(0.0)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(arr)) for _, arr in self.blocks())


@dataclass
class AdamState:
    m: ModelParameters
    v: ModelParameters
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_params(cfg: ModelConfig) -> ModelParameters:
    """Uniform weights in [-init_scale, init_scale], zero biases; seeded."""
    rng = np.random.default_rng(cfg.seed)
    s = cfg.init_scale

    def uniform(*shape):
        return rng.uniform(-s, s, size=shape)

    return ModelParameters(
        embedding=uniform(cfg.vocab_size, cfg.embed_dim),
        w1=uniform(cfg.feature_dim, cfg.hidden_dim),
        b1=np.zeros(cfg.hidden_dim),
        w2=uniform(cfg.hidden_dim, cfg.n_classes),
        b2=np.zeros(cfg.n_classes),
    )


def zeros_like_params(params: ModelParameters) -> ModelParameters:
    return ModelParameters(**{name: np.zeros_like(arr) for name, arr in params.blocks()})


def init_adam(params: ModelParameters, learning_rate: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(m=zeros_like_params(params), v=zeros_like_params(params),
                     learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps)


def _check_ids(params: ModelParameters, ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty sentence")
    if ids.min() < 0 or ids.max() >= params.embedding.shape[0]:
        raise ValueError(
            f"token id out of range [0, {params.embedding.shape[0]})")
    return ids


def forward_cached(params: ModelParameters, ids: np.ndarray,
                   context_radius: int, pad_id: int = 0,
                   extra: np.ndarray | None = None,
                   sigmoid_out: bool = False):
    """Forward pass returning (probs, hidden, feats) for use by backward."""
    ids = _check_ids(params, ids)
    if extra is None:
        extra = np.zeros(params.w1.shape[0])
    return kernels.sentence_forward(
        params.embedding, params.w1, params.b1, params.w2, params.b2,
        ids, extra, context_radius, pad_id, sigmoid_out)


def forward(params: ModelParameters, ids: np.ndarray, context_radius: int,
            pad_id: int = 0) -> np.ndarray:
    """Per-token class probabilities (M, n_classes); rows sum to one."""
    return forward_cached(params, ids, context_radius, pad_id)[0]


def accumulate_backward(params: ModelParameters, ids: np.ndarray,
                        feats: np.ndarray, hidden: np.ndarray,
                        dlogits: np.ndarray, grads: ModelParameters,
                        context_radius: int, pad_id: int = 0) -> np.ndarray:
    """Add this sentence's parameter gradients into ``grads``; returns the
    gradient w.r.t. the shared per-token extra-feature vector."""
    ids = np.asarray(ids, dtype=np.int64)
    if dlogits.shape != (ids.shape[0], params.w2.shape[1]):
        raise ValueError(f"dlogits shape {dlogits.shape} does not match "
                         f"({ids.shape[0]}, {params.w2.shape[1]})")
    return kernels.sentence_backward(
        ids, feats, hidden, dlogits, params.w1, params.w2,
        context_radius, pad_id,
        grads.embedding, grads.w1, grads.b1, grads.w2, grads.b2)


def backward(params: ModelParameters, ids: np.ndarray, feats: np.ndarray,
             hidden: np.ndarray, dlogits: np.ndarray, context_radius: int,
             pad_id: int = 0) -> ModelParameters:
    """Exact parameter gradients for one sentence, as a fresh block set."""
    grads = zeros_like_params(params)
    accumulate_backward(params, ids, feats, hidden, dlogits, grads,
                        context_radius, pad_id)
    return grads


def adam_step(params: ModelParameters, grads: ModelParameters,
              state: AdamState) -> tuple[ModelParameters, AdamState]:
    """One bias-corrected Adam update, in place; step counter advances by 1."""
    for name, grad in grads.blocks():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in block {name!r}")
    state.step += 1
    for name in PARAM_BLOCKS:
        kernels.adam_update(
            getattr(params, name).reshape(-1), getattr(grads, name).reshape(-1),
            getattr(state.m, name).reshape(-1), getattr(state.v, name).reshape(-1),
            state.step, state.learning_rate, state.beta1, state.beta2, state.eps)
    return params, state


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Argmax per row; ties resolve to the lowest class index."""
    return np.argmax(probs, axis=1)


# ---------------------------------------------------------------------------
# checkpoint serialization: magic + version + JSON header + raw float64 blocks
# ---------------------------------------------------------------------------

def save_checkpoint(path, cfg: ModelConfig, params: ModelParameters,
                    vocab: Vocabulary | None = None,
                    scheme: LabelScheme | None = None) -> None:
    header = {"model": asdict(cfg)}
    if vocab is not None:
        header["vocab"] = list(vocab.tokens)
        header["min_frequency"] = vocab.min_frequency
    if scheme is not None:
        header["classes"] = list(scheme.classes)
        header["majority_class"] = scheme.majority_class
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in params.blocks():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (cfg, params, vocab-or-None, scheme-or-None)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        size = struct.unpack("<I", fh.read(4))[0]
        header = json.loads(fh.read(size).decode("utf-8"))
        cfg = ModelConfig(**header["model"])
        shapes = {
            "embedding": (cfg.vocab_size, cfg.embed_dim),
            "w1": (cfg.feature_dim, cfg.hidden_dim),
            "b1": (cfg.hidden_dim,),
            "w2": (cfg.hidden_dim, cfg.n_classes),
            "b2": (cfg.n_classes,),
        }
        blocks = {}
        for name in PARAM_BLOCKS:
            shape = shapes[name]
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"truncated checkpoint in block {name!r}")
            blocks[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    params = ModelParameters(**blocks)
    vocab = None
    if "vocab" in header:
        vocab = Vocabulary(tokens=tuple(header["vocab"]),
                           min_frequency=header.get("min_frequency", 1))
    scheme = None
    if "classes" in header:
        scheme = LabelScheme(classes=tuple(header["classes"]),
                             majority_class=header.get("majority_class", "O"))
    return cfg, params, vocab, scheme
