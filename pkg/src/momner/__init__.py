"""Majority-or-minority cost-sensitive learning for BIO sequence labeling.

The package trains a small context-window token classifier under a family
of imbalance-aware losses (plain and weighted cross-entropy, focal, dice)
plus a majority-or-minority mixture term, in both the per-token multiclass
framing and the per-category start/end span-detection framing, and ships
the experiment protocol used to compare them: multi-seed averaging, paired
t-tests, validation grid search, and undersampling sweeps.
"""

from .corpus import (CorpusStats, LabeledCorpus, LabelScheme, Sentence,
                     Vocabulary, bin_by_length, build_vocab, compute_stats,
                     oversample, parse_conll, serialize_conll, undersample,
                     validate_bio)
from .kernels import BACKEND
from .losses import LossConfig, compute_class_weights, loss_gradient, \
    model_loss, mom_loss, sentence_base_loss, sentence_loss, token_loss
from .metrics import (MetricsReport, Scores, Span, bio_to_spans, merge_bi,
                      sentence_accuracy, span_f1, token_scores, word_accuracy)
from .model import (AdamState, ModelConfig, ModelParameters, adam_step,
                    forward, init_params, predict_labels)
from .mrc import MrcExample, SpanPrediction, convert_bio_to_mrc, decode_spans, \
    mrc_forward, mrc_loss
from .stats import SeedAggregate, TTestResult, aggregate, paired_t_test
from .synthgen import SynthConfig, generate_corpus

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AdamState",
    "CorpusStats",
    "LabelScheme",
    "LabeledCorpus",
    "LossConfig",
    "MetricsReport",
    "ModelConfig",
    "ModelParameters",
    "MrcExample",
    "Scores",
    "SeedAggregate",
    "Sentence",
    "Span",
    "SpanPrediction",
    "SynthConfig",
    "TTestResult",
    "Vocabulary",
    "adam_step",
    "aggregate",
    "bin_by_length",
    "bio_to_spans",
    "build_vocab",
    "compute_class_weights",
    "compute_stats",
    "convert_bio_to_mrc",
    "decode_spans",
    "forward",
    "generate_corpus",
    "init_params",
    "loss_gradient",
    "merge_bi",
    "model_loss",
    "mom_loss",
    "mrc_forward",
    "mrc_loss",
    "oversample",
    "paired_t_test",
    "parse_conll",
    "predict_labels",
    "sentence_accuracy",
    "sentence_base_loss",
    "sentence_loss",
    "serialize_conll",
    "span_f1",
    "token_loss",
    "token_scores",
    "undersample",
    "validate_bio",
    "word_accuracy",
]
