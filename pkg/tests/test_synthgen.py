import numpy as np
import pytest

from momner.corpus import compute_stats, parse_conll, serialize_conll, validate_bio
from momner.synthgen import SynthConfig, generate_corpus


def test_rho_close_to_target():
    for n in (1000, 2000):
        cfg = SynthConfig(n_sentences=n, target_rho_majority=0.90, seed=13)
        stats = compute_stats(generate_corpus(cfg))
        assert 0.88 <= stats.rho_majority <= 0.92


def test_rho_converges_large():
    cfg = SynthConfig(n_sentences=10000, target_rho_majority=0.85, seed=1)
    stats = compute_stats(generate_corpus(cfg))
    assert abs(stats.rho_majority - 0.85) < 0.02


def test_bio_valid_for_many_configs():
    rng = np.random.default_rng(7)
    for _ in range(10):
        cfg = SynthConfig(
            n_sentences=int(rng.integers(5, 80)),
            sentence_length_range=(2, int(rng.integers(6, 20))),
            n_entity_categories=int(rng.integers(1, 8)),
            target_rho_majority=float(rng.uniform(0.6, 0.97)),
            entity_length_range=(1, int(rng.integers(1, 4))),
            vocab_size=int(rng.integers(40, 300)),
            trigger_strength=float(rng.uniform(0.0, 1.0)),
            seed=int(rng.integers(0, 1000)),
        )
        assert validate_bio(generate_corpus(cfg)) == []


def test_deterministic():
    cfg = SynthConfig(n_sentences=50, seed=21)
    assert generate_corpus(cfg).sentences == generate_corpus(cfg).sentences


def test_trigger_strength_one_uses_category_pools():
    cfg = SynthConfig(n_sentences=300, trigger_strength=1.0, seed=3)
    corpus = generate_corpus(cfg)
    for sent in corpus.sentences:
        for tok, lab in zip(sent.tokens, sent.labels):
            prefix, cat = corpus.scheme.prefix_category(lab)
            if prefix == "O":
                continue
            cat_index = corpus.scheme.entity_categories.index(cat)
            assert tok.startswith(f"c{cat_index}w")


def test_long_tail_monotone_counts():
    cfg = SynthConfig(n_sentences=2000, n_entity_categories=6, seed=5)
    corpus = generate_corpus(cfg)
    counts = []
    for cat in corpus.scheme.entity_categories:
        b = corpus.scheme.index(f"B-{cat}")
        counts.append(sum(1 for s in corpus.sentences for lab in s.labels
                          if lab == b))
    assert counts == sorted(counts, reverse=True)


def test_infeasible_entity_length():
    with pytest.raises(ValueError, match="unreachable"):
        SynthConfig(sentence_length_range=(2, 4), entity_length_range=(5, 6))


def test_vocab_size_floor():
    with pytest.raises(ValueError):
        SynthConfig(n_entity_categories=10, vocab_size=19)


def test_serialize_parse_roundtrip():
    cfg = SynthConfig(n_sentences=40, seed=9)
    corpus = generate_corpus(cfg)
    again = parse_conll(serialize_conll(corpus))
    assert again.scheme == corpus.scheme
    assert again.sentences == corpus.sentences
