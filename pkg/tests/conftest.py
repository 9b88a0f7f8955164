import numpy as np
import pytest

from momner.corpus import LabeledCorpus, LabelScheme, Sentence


@pytest.fixture
def scheme3():
    return LabelScheme.from_categories(["LOC", "PER"])


def random_scheme(rng: np.random.Generator) -> LabelScheme:
    n_cats = int(rng.integers(1, 4))
    return LabelScheme.from_categories([f"C{j}" for j in range(n_cats)])


def random_bio_labels(rng: np.random.Generator, scheme: LabelScheme,
                      length: int) -> list[int]:
    """A BIO-valid label sequence of the given length."""
    labels = []
    pos = 0
    categories = scheme.entity_categories
    while pos < length:
        if categories.__len__() and rng.random() < 0.35:
            cat = categories[int(rng.integers(len(categories)))]
            b = scheme.index(f"B-{cat}")
            span_len = min(int(rng.integers(1, 4)), length - pos)
            labels.append(b)
            labels.extend([b + 1] * (span_len - 1))
            pos += span_len
        else:
            labels.append(scheme.majority_index)
            pos += 1
    return labels


def random_corpus(rng: np.random.Generator, n_sentences: int,
                  scheme: LabelScheme | None = None,
                  max_sentence_len: int = 12) -> LabeledCorpus:
    scheme = scheme or random_scheme(rng)
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(1, max_sentence_len + 1))
        labels = random_bio_labels(rng, scheme, length)
        tokens = tuple(f"tok{int(rng.integers(30))}" for _ in range(length))
        sentences.append(Sentence(tokens=tokens, labels=tuple(labels)))
    return LabeledCorpus(scheme=scheme, sentences=tuple(sentences))


def random_prob_rows(rng: np.random.Generator, m: int, k: int) -> np.ndarray:
    """Softmax of random logits: strictly positive rows summing to one."""
    logits = rng.normal(scale=2.0, size=(m, k))
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)
