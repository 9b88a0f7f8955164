"""Per-token losses (CE, WCE-1/2, FL, DL), the majority-or-minority mixture,
and their analytic gradients with respect to probabilities and logits.

The sentence loss is

    L_sentence = lambda * L_base + (1 - lambda) * L_majority

where L_base averages the per-token loss over all real tokens and
L_majority sums it over tokens whose gold label is the majority class,
divided by the same denominator.  Equivalently every token carries the
coefficient (lambda + (1 - lambda) * [gold is majority]) / denominator,
which is what the gradient path uses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import CorpusStats, LabelScheme

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12

VARIANTS = ("CE", "WCE1", "WCE2", "FL", "DL")
WEIGHTED_VARIANTS = ("WCE1", "WCE2")


@dataclass(frozen=True)
class LossConfig:
    base_variant: str = "CE"
    mom_enabled: bool = False
    lam: float | None = None      # trade-off; present iff mom_enabled
    beta: float = 1.0             # WCE2 log offset, >= 1
    gamma: float = 2.0            # FL focusing exponent, >= 0
    epsilon: float = 1.0          # DL focusing exponent, >= 0
    delta: float = 0.01           # DL smoothing, > 0
    normalization: str = "by_length"        # "by_length" | "by_M"
    dice_mode: str = "self_adjusting"       # "self_adjusting" | "eq6_literal"

    def __post_init__(self):
        if self.base_variant not in VARIANTS:
            raise ValueError(f"unknown loss variant {self.base_variant!r}")
        if self.mom_enabled:
            if self.lam is None:
                raise ValueError("mom_enabled requires lam")
            if not 0.0 <= self.lam <= 1.0:
                raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        elif self.lam is not None:
            raise ValueError("lam is only meaningful with mom_enabled")
        if self.beta < 1.0:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.delta <= 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.normalization not in ("by_length", "by_M"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.dice_mode not in ("self_adjusting", "eq6_literal"):
            raise ValueError(f"unknown dice_mode {self.dice_mode!r}")

    @classmethod
    def from_json(cls, data: dict) -> "LossConfig":
        known = {
            "base_variant": data.get("base_variant", "CE"),
            "mom_enabled": bool(data.get("mom_enabled", False)),
            "lam": data.get("lambda"),
        }
        for key in ("beta", "gamma", "epsilon", "delta"):
            if key in data:
                known[key] = float(data[key])
        for key in ("normalization", "dice_mode"):
            if key in data:
                known[key] = data[key]
        return cls(**known)

    def to_json(self) -> dict:
        out = {"base_variant": self.base_variant, "mom_enabled": self.mom_enabled}
        if self.lam is not None:
            out["lambda"] = self.lam
        out.update(beta=self.beta, gamma=self.gamma, epsilon=self.epsilon,
                   delta=self.delta, normalization=self.normalization,
                   dice_mode=self.dice_mode)
        return out

    def with_lambda(self, lam: float | None) -> "LossConfig":
        return replace(self, lam=lam, mom_enabled=lam is not None)


def compute_class_weights(stats: CorpusStats, scheme: LabelScheme,
                          variant: str, beta: float = 1.0) -> np.ndarray:
    """Per-class weights from training-split counts.

    WCE1 is inverse class frequency scaled so the mean-weighted scale stays
    near one: s / (K * s_k).  WCE2 is log10((s - s_k) / s_k + beta).
    Classes absent from training get weight 0 (logged) rather than infinity.
    """
    if variant not in WEIGHTED_VARIANTS:
        raise ValueError(f"variant {variant!r} takes no class weights")
    s = stats.total_tokens
    if s == 0:
        raise ValueError("empty training split: no tokens to weight by")
    k = scheme.n_classes
    weights = np.zeros(k)
    missing = []
    for i, name in enumerate(scheme.classes):
        s_k = stats.per_class_counts.get(name, 0)
        if s_k == 0:
            missing.append(name)
            continue
        if variant == "WCE1":
            weights[i] = s / (k * s_k)
        else:
            weights[i] = np.log10((s - s_k) / s_k + beta)
    if missing:
        log.warning("classes absent from training get weight 0: %s", missing)
    return weights


def _pow_where_positive(base: np.ndarray, exponent: float) -> np.ndarray:
    """base**exponent with 0**negative treated as 0 (callers mask those terms)."""
    safe = np.where(base > 0.0, base, 1.0)
    out = safe ** exponent
    return np.where(base > 0.0, out, 0.0)


def _token_core(labels: np.ndarray, probs: np.ndarray, cfg: LossConfig,
                weights: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    """Per-token losses (M,) and their gradients w.r.t. probabilities (M, K)."""
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    m, k = probs.shape
    if labels.shape[0] != m:
        raise ValueError(f"{labels.shape[0]} labels vs {m} probability rows")
    rows = np.arange(m)
    variant = cfg.base_variant

    if variant in ("CE", "WCE1", "WCE2"):
        if variant == "CE":
            w = np.ones(m)
        else:
            if weights is None:
                raise ValueError(f"{variant} requires class weights")
            w = np.asarray(weights, dtype=np.float64)[labels]
        pt = probs[rows, labels]
        ptc = np.maximum(pt, PROB_CLAMP)
        losses = -w * np.log(ptc)
        dprobs = np.zeros_like(probs)
        dprobs[rows, labels] = np.where(pt > PROB_CLAMP, -w / ptc, 0.0)
        return losses, dprobs

    if variant == "FL":
        gamma = cfg.gamma
        # one-vs-rest: q is the probability assigned to the true binary outcome
        q = 1.0 - probs
        q[rows, labels] = probs[rows, labels]
        qc = np.maximum(q, PROB_CLAMP)
        omq = np.maximum(1.0 - q, 0.0)
        logq = np.log(qc)
        focal = omq ** gamma
        losses = (-(focal * logq)).sum(axis=1)
        if gamma == 0.0:
            dterm = -1.0 / qc
        else:
            dterm = gamma * _pow_where_positive(omq, gamma - 1.0) * logq - focal / qc
        sign = np.full_like(probs, -1.0)
        sign[rows, labels] = 1.0
        dprobs = dterm * sign
        return losses, dprobs

    # DL: dice loss evaluated at the true class of each token
    eps, delta = cfg.epsilon, cfg.delta
    pt = probs[rows, labels]
    omp = np.maximum(1.0 - pt, 0.0)
    focal = omp ** eps
    f = focal * pt
    dfdp = focal - eps * _pow_where_positive(omp, eps - 1.0) * pt
    num = 2.0 * f + delta
    if cfg.dice_mode == "self_adjusting":
        den = f + 1.0 + delta
        ddsc = ((2.0 + delta) / (den * den)) * dfdp
    else:  # eq6_literal: denominator omits the probability factor
        den = focal + 1.0 + delta
        dden = -eps * _pow_where_positive(omp, eps - 1.0)
        ddsc = (2.0 * dfdp * den - num * dden) / (den * den)
    losses = 1.0 - num / den
    dprobs = np.zeros_like(probs)
    dprobs[rows, labels] = -ddsc
    return losses, dprobs


def _token_losses(labels, probs, cfg, weights=None) -> np.ndarray:
    return _token_core(labels, probs, cfg, weights)[0]


def token_loss(y_onehot: Sequence[float], p_row: Sequence[float],
               cfg: LossConfig, weights: np.ndarray | None = None) -> float:
    """Loss of a single token given its one-hot gold label."""
    y = np.asarray(y_onehot, dtype=np.float64)
    if y.ndim != 1 or not np.all(np.isin(y, (0.0, 1.0))) or y.sum() != 1.0:
        raise ValueError("y must be a one-hot vector")
    label = int(np.argmax(y))
    p = np.asarray(p_row, dtype=np.float64).reshape(1, -1)
    return float(_token_losses(np.array([label]), p, cfg, weights)[0])


def _denominator(cfg: LossConfig, n_tokens: int, max_len: int | None) -> float:
    if cfg.normalization == "by_length":
        return float(n_tokens)
    if max_len is None:
        raise ValueError("by_M normalization requires max_len")
    return float(max_len)


def sentence_base_loss(labels, probs, cfg: LossConfig, weights=None,
                       max_len: int | None = None) -> float:
    """Per-token loss summed over all real tokens, divided by the denominator."""
    losses = _token_losses(labels, probs, cfg, weights)
    return float(losses.sum() / _denominator(cfg, losses.shape[0], max_len))


def mom_loss(labels, probs, cfg: LossConfig, weights=None,
             max_len: int | None = None, majority_index: int = 0) -> float:
    """Per-token loss summed over majority-class tokens only, same denominator."""
    labels = np.asarray(labels, dtype=np.int64)
    losses = _token_losses(labels, probs, cfg, weights)
    majority_sum = losses[labels == majority_index].sum()
    return float(majority_sum / _denominator(cfg, losses.shape[0], max_len))


def sentence_loss(labels, probs, cfg: LossConfig, weights=None,
                  max_len: int | None = None, majority_index: int = 0) -> float:
    """lambda-mixture of the full-token loss and the majority-only loss."""
    base = sentence_base_loss(labels, probs, cfg, weights, max_len)
    if not cfg.mom_enabled:
        return base
    mom = mom_loss(labels, probs, cfg, weights, max_len, majority_index)
    return cfg.lam * base + (1.0 - cfg.lam) * mom


def model_loss(labels_per_sentence, probs_per_sentence, cfg: LossConfig,
               weights=None, max_len: int | None = None,
               majority_index: int = 0) -> float:
    """Mean sentence loss over the dataset."""
    n = len(labels_per_sentence)
    if n == 0:
        raise ValueError("model loss of an empty dataset")
    if n != len(probs_per_sentence):
        raise ValueError("labels and predictions differ in sentence count")
    total = 0.0
    for labels, probs in zip(labels_per_sentence, probs_per_sentence):
        total += sentence_loss(labels, probs, cfg, weights, max_len, majority_index)
    return total / n


def loss_gradient(labels, probs, cfg: LossConfig, weights=None,
                  max_len: int | None = None,
                  majority_index: int = 0) -> tuple[float, np.ndarray]:
    """Sentence loss and its gradient w.r.t. the pre-softmax logits.

    Returns (loss, dlogits) with dlogits of shape (M, K).  Probabilities are
    assumed to come from a per-token softmax over the same logits.
    """
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    losses, dprobs = _token_core(labels, probs, cfg, weights)
    denom = _denominator(cfg, losses.shape[0], max_len)
    if cfg.mom_enabled:
        is_majority = (labels == majority_index).astype(np.float64)
        coeff = (cfg.lam + (1.0 - cfg.lam) * is_majority) / denom
    else:
        coeff = np.full(losses.shape[0], 1.0 / denom)
    loss = float((coeff * losses).sum())
    dldp = coeff[:, None] * dprobs
    inner = (dldp * probs).sum(axis=1, keepdims=True)
    dlogits = probs * (dldp - inner)
    return loss, dlogits


# ---------------------------------------------------------------------------
# binary losses for the start/end span-detection setting
# ---------------------------------------------------------------------------

def binary_token_core(targets: np.ndarray, probs: np.ndarray,
                      cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise binary losses and gradients w.r.t. the probabilities.

    ``targets`` are 0/1, ``probs`` the predicted probability of class 1.
    Only CE, FL and DL translate to the binary setting; the class-frequency
    weighted variants do not.
    """
    if cfg.base_variant in WEIGHTED_VARIANTS:
        raise ValueError(f"{cfg.base_variant} is not defined for binary heads")
    targets = np.asarray(targets, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    q = np.where(targets == 1.0, probs, 1.0 - probs)
    sign = np.where(targets == 1.0, 1.0, -1.0)
    qc = np.maximum(q, PROB_CLAMP)

    if cfg.base_variant == "CE":
        losses = -np.log(qc)
        dq = np.where(q > PROB_CLAMP, -1.0 / qc, 0.0)
    elif cfg.base_variant == "FL":
        gamma = cfg.gamma
        omq = np.maximum(1.0 - q, 0.0)
        focal = omq ** gamma
        logq = np.log(qc)
        losses = -(focal * logq)
        if gamma == 0.0:
            dq = -1.0 / qc
        else:
            dq = gamma * _pow_where_positive(omq, gamma - 1.0) * logq - focal / qc
    else:  # DL
        eps, delta = cfg.epsilon, cfg.delta
        omq = np.maximum(1.0 - q, 0.0)
        focal = omq ** eps
        f = focal * q
        dfdq = focal - eps * _pow_where_positive(omq, eps - 1.0) * q
        num = 2.0 * f + delta
        if cfg.dice_mode == "self_adjusting":
            den = f + 1.0 + delta
            ddsc = ((2.0 + delta) / (den * den)) * dfdq
        else:
            den = focal + 1.0 + delta
            dden = -eps * _pow_where_positive(omq, eps - 1.0)
            ddsc = (2.0 * dfdq * den - num * dden) / (den * den)
        losses = 1.0 - num / den
        dq = -ddsc
    return losses, dq * sign
