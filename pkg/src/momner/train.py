"""Training loops for the sequence tagger and the span-detection model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .corpus import LabeledCorpus, Vocabulary
from .losses import LossConfig, loss_gradient
from .metrics import MetricsReport, bio_to_spans, evaluate_sequence_predictions, \
    span_f1_corpus
from .model import (ModelConfig, ModelParameters, adam_step, forward_cached,
                    init_adam, init_params, predict_labels, zeros_like_params)
from .mrc import (MrcExample, MrcModelConfig, MrcParameters, decode_spans,
                  init_mrc_params, mrc_forward, mrc_forward_cached,
                  mrc_loss_gradient)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def encode_corpus(corpus: LabeledCorpus, vocab: Vocabulary,
                  max_len: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Encode sentences to (ids, labels) arrays, truncating at max_len."""
    encoded = []
    truncated = 0
    for sent in corpus.sentences:
        ids = vocab.encode(sent.tokens)
        labels = np.asarray(sent.labels, dtype=np.int64)
        if ids.shape[0] > max_len:
            ids = ids[:max_len]
            labels = labels[:max_len]
            truncated += 1
        encoded.append((ids, labels))
    if truncated:
        log.warning("truncated %d/%d sentences to max_len=%d",
                    truncated, len(encoded), max_len)
    return encoded


def _shuffle_rng(seed: int) -> np.random.Generator:
    # distinct stream from parameter init, still fully determined by the seed
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))


def train_sequence_model(corpus: LabeledCorpus, vocab: Vocabulary,
                         model_cfg: ModelConfig, loss_cfg: LossConfig,
                         weights: np.ndarray | None = None,
                         settings: TrainSettings = TrainSettings(),
                         ) -> tuple[ModelParameters, list[float]]:
    """Fixed-epoch minibatch Adam training; returns params and the per-epoch
    mean sentence loss."""
    cfg = replace(model_cfg, seed=settings.seed)
    params = init_params(cfg)
    grads = zeros_like_params(params)
    state = init_adam(params, learning_rate=settings.learning_rate)
    encoded = encode_corpus(corpus, vocab, cfg.max_len)
    majority = corpus.scheme.majority_index
    max_len = cfg.max_len if loss_cfg.normalization == "by_M" else None
    rng = _shuffle_rng(settings.seed)

    trace = []
    n = len(encoded)
    for _ in range(settings.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, settings.batch_size):
            batch = order[lo:lo + settings.batch_size]
            grads.zero_()
            scale = 1.0 / batch.size
            for idx in batch:
                ids, labels = encoded[idx]
                probs, hidden, feats = forward_cached(
                    params, ids, cfg.context_radius, vocab.pad_id)
                loss, dlogits = loss_gradient(
                    labels, probs, loss_cfg, weights,
                    max_len=max_len, majority_index=majority)
                epoch_loss += loss
                kernels.sentence_backward(
                    ids, feats, hidden, dlogits * scale, params.w1, params.w2,
                    cfg.context_radius, vocab.pad_id,
                    grads.embedding, grads.w1, grads.b1, grads.w2, grads.b2)
            adam_step(params, grads, state)
        trace.append(epoch_loss / n)
    return params, trace


def predict_corpus(params: ModelParameters, corpus: LabeledCorpus,
                   vocab: Vocabulary, model_cfg: ModelConfig) -> list[np.ndarray]:
    """Per-sentence predicted label indices (truncated tails fall back to
    the majority class so predictions stay aligned with the gold corpus)."""
    preds = []
    majority = corpus.scheme.majority_index
    for sent in corpus.sentences:
        ids = vocab.encode(sent.tokens)
        if ids.shape[0] > model_cfg.max_len:
            head = ids[:model_cfg.max_len]
            probs = forward_cached(params, head, model_cfg.context_radius,
                                   vocab.pad_id)[0]
            labels = np.full(ids.shape[0], majority, dtype=np.int64)
            labels[:model_cfg.max_len] = predict_labels(probs)
        else:
            probs = forward_cached(params, ids, model_cfg.context_radius,
                                   vocab.pad_id)[0]
            labels = predict_labels(probs)
        preds.append(labels)
    return preds


def evaluate_sequence_model(params: ModelParameters, corpus: LabeledCorpus,
                            vocab: Vocabulary,
                            model_cfg: ModelConfig) -> MetricsReport:
    return evaluate_sequence_predictions(
        corpus, predict_corpus(params, corpus, vocab, model_cfg))


# ---------------------------------------------------------------------------
# span-detection training
# ---------------------------------------------------------------------------

def encode_mrc_examples(examples: Sequence[MrcExample], vocab: Vocabulary,
                        max_len: int):
    """(ids, category_index, starts, ends) arrays per example."""
    encoded = []
    truncated = 0
    for ex in examples:
        ids = vocab.encode(ex.tokens)
        starts = np.asarray(ex.start_labels, dtype=np.float64)
        ends = np.asarray(ex.end_labels, dtype=np.float64)
        if ids.shape[0] > max_len:
            ids, starts, ends = ids[:max_len], starts[:max_len], ends[:max_len]
            truncated += 1
        encoded.append((ids, ex.category_index, starts, ends))
    if truncated:
        log.warning("truncated %d/%d span examples to max_len=%d",
                    truncated, len(encoded), max_len)
    return encoded


def train_mrc_model(examples: Sequence[MrcExample], vocab: Vocabulary,
                    mrc_cfg: MrcModelConfig, loss_cfg: LossConfig,
                    settings: TrainSettings = TrainSettings(),
                    ) -> tuple[MrcParameters, list[float]]:
    """Minibatch Adam over uniformly shuffled (sentence, category) examples."""
    cfg = replace(mrc_cfg, seed=settings.seed)
    params = init_mrc_params(cfg)
    core_grads = zeros_like_params(params.core)
    cat_grads = np.zeros_like(params.category_embedding)
    state = init_adam(params.core, learning_rate=settings.learning_rate)
    cat_m = np.zeros_like(cat_grads)
    cat_v = np.zeros_like(cat_grads)
    encoded = encode_mrc_examples(examples, vocab, cfg.max_len)
    max_len = cfg.max_len if loss_cfg.normalization == "by_M" else None
    rng = _shuffle_rng(settings.seed)

    trace = []
    n = len(encoded)
    for _ in range(settings.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, settings.batch_size):
            batch = order[lo:lo + settings.batch_size]
            core_grads.zero_()
            cat_grads.fill(0.0)
            scale = 1.0 / batch.size
            for idx in batch:
                ids, ci, starts, ends = encoded[idx]
                start_p, end_p, hidden, feats = mrc_forward_cached(
                    params, ids, ci, cfg.context_radius, vocab.pad_id)
                loss, dlogits = mrc_loss_gradient(
                    starts, ends, start_p, end_p, loss_cfg, max_len=max_len)
                epoch_loss += loss
                dextra = kernels.sentence_backward(
                    ids, feats, hidden, dlogits * scale,
                    params.core.w1, params.core.w2,
                    cfg.context_radius, vocab.pad_id,
                    core_grads.embedding, core_grads.w1, core_grads.b1,
                    core_grads.w2, core_grads.b2)
                cat_grads[ci] += dextra
            adam_step(params.core, core_grads, state)
            kernels.adam_update(
                params.category_embedding.reshape(-1), cat_grads.reshape(-1),
                cat_m.reshape(-1), cat_v.reshape(-1), state.step,
                state.learning_rate, state.beta1, state.beta2, state.eps)
        trace.append(epoch_loss / n)
    return params, trace


def evaluate_mrc_model(params: MrcParameters, corpus: LabeledCorpus,
                       vocab: Vocabulary, mrc_cfg: MrcModelConfig,
                       threshold: float = 0.5):
    """Decode spans for every (sentence, category) and score against gold.

    Returns (per_category_scores, macro_scores).
    """
    categories = corpus.scheme.entity_categories
    gold_spans = []
    pred_spans = []
    for sent in corpus.sentences:
        ids = vocab.encode(sent.tokens)[:mrc_cfg.max_len]
        gold = bio_to_spans(sent.labels, corpus.scheme)
        gold_spans.append([s for s in gold if s.end < mrc_cfg.max_len])
        preds = []
        for ci, cat in enumerate(categories):
            start_p, end_p = mrc_forward(params, ids, ci,
                                         mrc_cfg.context_radius, vocab.pad_id)
            preds.extend(p.as_span() for p in decode_spans(
                start_p, end_p, threshold=threshold, category=cat))
        pred_spans.append(preds)
    return span_f1_corpus(gold_spans, pred_spans)
