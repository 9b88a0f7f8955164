"""Synthetic long-tail BIO corpora with a controllable majority-token ratio.

Each entity category owns a disjoint trigger sub-vocabulary; an entity token
is drawn from it with probability ``trigger_strength`` (else from the shared
pool), which makes the tagging task learnable by a small context-window
model while leaving genuine ambiguity.  Category frequencies decay
geometrically, producing one dominant non-entity class and a long tail of
small entity classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LabeledCorpus, LabelScheme, Sentence

# ratio between successive category frequencies (long-tail shape)
CATEGORY_DECAY = 0.6


@dataclass(frozen=True)
class SynthConfig:
    n_sentences: int = 1000
    sentence_length_range: tuple[int, int] = (6, 16)
    n_entity_categories: int = 6
    target_rho_majority: float = 0.90
    entity_length_range: tuple[int, int] = (1, 3)
    vocab_size: int = 600
    trigger_strength: float = 0.9
    seed: int = 0

    def __post_init__(self):
        smin, smax = self.sentence_length_range
        emin, emax = self.entity_length_range
        if self.n_sentences < 1:
            raise ValueError("n_sentences must be >= 1")
        if not (1 <= smin <= smax):
            raise ValueError("bad sentence_length_range")
        if not (1 <= emin <= emax):
            raise ValueError("bad entity_length_range")
        if not 0.0 < self.target_rho_majority < 1.0:
            raise ValueError("target_rho_majority must be in (0, 1)")
        if not 0.0 <= self.trigger_strength <= 1.0:
            raise ValueError("trigger_strength must be in [0, 1]")
        if self.n_entity_categories < 1:
            raise ValueError("need at least one entity category")
        if self.vocab_size < 2 * self.n_entity_categories:
            raise ValueError("vocab_size must be >= 2 * n_entity_categories")
        if emin > smax:
            raise ValueError(
                f"entities of length >= {emin} cannot fit in sentences of "
                f"length <= {smax}; target rho unreachable")


def _category_quotas(total: int, n_categories: int) -> list[int]:
    """Split `total` entities over categories by geometric weights.

    Largest-remainder apportionment of strictly decreasing quotas keeps the
    counts monotonically non-increasing in category index.
    """
    weights = np.array([CATEGORY_DECAY ** j for j in range(n_categories)])
    quotas = total * weights / weights.sum()
    counts = np.floor(quotas).astype(int)
    remainder = quotas - counts
    short = total - counts.sum()
    for j in np.argsort(-remainder, kind="stable")[:short]:
        counts[j] += 1
    return counts.tolist()


def generate_corpus(cfg: SynthConfig, split_tag: str = "train") -> LabeledCorpus:
    """Deterministically generate a BIO-valid corpus matching the config."""
    rng = np.random.default_rng(cfg.seed)
    smin, smax = cfg.sentence_length_range
    emin, emax = cfg.entity_length_range
    n_cats = cfg.n_entity_categories

    # entity-start probability per position such that the expected share of
    # entity tokens is 1 - rho (renewal argument: a step is either one O
    # token or one whole entity of mean length)
    mean_entity_len = 0.5 * (emin + emax)
    rho = cfg.target_rho_majority
    q = (1.0 - rho) / (mean_entity_len * rho + (1.0 - rho))

    # token surfaces: shared pool plus one disjoint trigger pool per category
    per_cat = max(1, cfg.vocab_size // (2 * n_cats))
    n_shared = cfg.vocab_size - per_cat * n_cats
    shared_pool = [f"w{i}" for i in range(n_shared)]
    trigger_pools = [[f"c{j}w{i}" for i in range(per_cat)] for j in range(n_cats)]

    categories = [f"C{j:02d}" for j in range(n_cats)]
    scheme = LabelScheme.from_categories(categories)

    # first pass: sentence lengths and entity slots (category assigned later)
    lengths = rng.integers(smin, smax + 1, size=cfg.n_sentences)
    slots: list[tuple[int, int, int]] = []  # (sentence, start, length)
    for si in range(cfg.n_sentences):
        length = int(lengths[si])
        pos = 0
        while pos < length:
            if rng.random() < q:
                ell = min(int(rng.integers(emin, emax + 1)), length - pos)
                slots.append((si, pos, ell))
                pos += ell
            else:
                pos += 1

    # second pass: apportion categories geometrically, then shuffle
    quotas = _category_quotas(len(slots), n_cats)
    slot_cats = np.repeat(np.arange(n_cats), quotas)
    rng.shuffle(slot_cats)

    token_rows = [[None] * int(lengths[si]) for si in range(cfg.n_sentences)]
    label_rows = [[0] * int(lengths[si]) for si in range(cfg.n_sentences)]
    for (si, start, ell), cat in zip(slots, slot_cats):
        b_index = scheme.index(f"B-{categories[cat]}")
        for k in range(ell):
            label_rows[si][start + k] = b_index if k == 0 else b_index + 1
            if rng.random() < cfg.trigger_strength:
                pool = trigger_pools[cat]
            else:
                pool = shared_pool
            token_rows[si][start + k] = pool[int(rng.integers(len(pool)))]

    sentences = []
    for si in range(cfg.n_sentences):
        toks = token_rows[si]
        for i in range(len(toks)):
            if toks[i] is None:
                toks[i] = shared_pool[int(rng.integers(n_shared))]
        sentences.append(Sentence(tokens=tuple(toks), labels=tuple(label_rows[si])))
    return LabeledCorpus(scheme=scheme, sentences=tuple(sentences), split_tag=split_tag)
