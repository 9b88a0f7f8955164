"""CoNLL-format BIO corpora: parsing, validation, statistics, resampling."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, TextIO

import numpy as np

DOCSTART = "-DOCSTART-"

BIN_LABELS = ("1-5", "6-10", "11-15", "16-20", "21-25", "26-30", "31-35", "36-")


class ConllParseError(ValueError):
    """Malformed CoNLL input; carries the offending line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class LabelScheme:
    """The label set: a majority class plus B-/I- pairs per entity category."""

    classes: tuple[str, ...]
    majority_class: str = "O"

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("label names must be unique")
        if self.majority_class not in self.classes:
            raise ValueError(
                f"majority class {self.majority_class!r} not in classes")
        for name in self.classes:
            if name == self.majority_class:
                continue
            if not (name.startswith("B-") or name.startswith("I-")) or len(name) <= 2:
                raise ValueError(f"non-majority label {name!r} is not B-*/I-*")
            if name.startswith("I-") and f"B-{name[2:]}" not in self.classes:
                raise ValueError(f"{name!r} has no matching B-{name[2:]}")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def majority_index(self) -> int:
        return self.classes.index(self.majority_class)

    @property
    def entity_categories(self) -> tuple[str, ...]:
        seen: list[str] = []
        for name in self.classes:
            if name.startswith("B-") and name[2:] not in seen:
                seen.append(name[2:])
        return tuple(seen)

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise KeyError(f"unknown label {label!r}") from None

    def prefix_category(self, index: int) -> tuple[str, str | None]:
        """Return (prefix, category) for a class index; ('O', None) for majority."""
        name = self.classes[index]
        if name == self.majority_class:
            return "O", None
        return name[0], name[2:]

    @classmethod
    def from_categories(cls, categories: Sequence[str], majority: str = "O") -> "LabelScheme":
        classes = [majority]
        for cat in categories:
            classes += [f"B-{cat}", f"I-{cat}"]
        return cls(classes=tuple(classes), majority_class=majority)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ValueError("empty sentence")
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"{len(self.tokens)} tokens vs {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class LabeledCorpus:
    scheme: LabelScheme
    sentences: tuple[Sentence, ...]
    split_tag: str = "train"

    def __post_init__(self):
        n = self.scheme.n_classes
        for i, sent in enumerate(self.sentences):
            for lab in sent.labels:
                if not 0 <= lab < n:
                    raise ValueError(
                        f"sentence {i}: label index {lab} out of range for "
                        f"{n}-class scheme")

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    @property
    def total_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    per_class_counts: dict[str, int]
    total_tokens: int
    n_majority: int
    n_entity: int
    rho_majority: float


@dataclass(frozen=True)
class Vocabulary:
    """Deterministic token-to-id map with reserved PAD and UNK ids."""

    tokens: tuple[str, ...]  # ids 2, 3, ... in order
    min_frequency: int = 1
    pad_id: int = field(default=0, init=False)
    unk_id: int = field(default=1, init=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i + 2 for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens) + 2

    def id_of(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.id_of(t) for t in tokens], dtype=np.int64)


class BioViolation(NamedTuple):
    sentence_index: int
    token_index: int
    reason: str


def _split_columns(line: str) -> list[str]:
    return line.split()


def _infer_scheme(label_names: Iterable[str], majority: str = "O") -> LabelScheme:
    categories = set()
    for name in label_names:
        if name == majority:
            continue
        if not (name.startswith("B-") or name.startswith("I-")) or len(name) <= 2:
            raise ValueError(f"cannot infer scheme: label {name!r} is not O/B-*/I-*")
        categories.add(name[2:])
    return LabelScheme.from_categories(sorted(categories), majority=majority)


def parse_conll(source: str | TextIO | Iterable[str],
                scheme: LabelScheme | None = None,
                split_tag: str = "train") -> LabeledCorpus:
    """Parse whitespace-column CoNLL text into a labeled corpus.

    Token is the first column, label the last; blank lines separate
    sentences; ``-DOCSTART-`` marker lines are skipped.  When ``scheme``
    is None it is inferred from the labels seen (majority first, then
    B-/I- pairs sorted by category name).
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = (line.rstrip("\r\n") for line in source)

    raw_sentences: list[tuple[list[str], list[str]]] = []
    tokens: list[str] = []
    labels: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            if tokens:
                raw_sentences.append((tokens, labels))
                tokens, labels = [], []
            continue
        cols = _split_columns(stripped)
        if cols[0] == DOCSTART:
            continue
        if len(cols) < 2:
            raise ConllParseError(lineno, f"expected token and label, got {stripped!r}")
        tokens.append(cols[0])
        labels.append(cols[-1])
    if tokens:
        raw_sentences.append((tokens, labels))

    if scheme is None:
        observed = {lab for _, labs in raw_sentences for lab in labs}
        try:
            scheme = _infer_scheme(observed)
        except ValueError as exc:
            raise ConllParseError(0, str(exc)) from None

    sentences = []
    for toks, labs in raw_sentences:
        try:
            indices = tuple(scheme.index(lab) for lab in labs)
        except KeyError as exc:
            raise ValueError(f"label not in scheme: {exc.args[0]}") from None
        sentences.append(Sentence(tokens=tuple(toks), labels=indices))
    return LabeledCorpus(scheme=scheme, sentences=tuple(sentences), split_tag=split_tag)


def serialize_conll(corpus: LabeledCorpus) -> str:
    """Render a corpus back to two-column CoNLL text (round-trips parse_conll)."""
    blocks = []
    for sent in corpus.sentences:
        lines = [f"{tok} {corpus.scheme.classes[lab]}"
                 for tok, lab in zip(sent.tokens, sent.labels)]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_conll(corpus: LabeledCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_conll(corpus))


def read_conll(path, scheme: LabelScheme | None = None,
               split_tag: str = "train") -> LabeledCorpus:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_conll(fh, scheme=scheme, split_tag=split_tag)


def sentence_bio_violations(labels: Sequence[int], scheme: LabelScheme) -> list[tuple[int, str]]:
    """Positions where an I- label lacks a compatible preceding B-/I- label."""
    out = []
    for i, lab in enumerate(labels):
        prefix, cat = scheme.prefix_category(lab)
        if prefix != "I":
            continue
        if i == 0:
            out.append((i, f"I-{cat} at sentence start"))
            continue
        prev_prefix, prev_cat = scheme.prefix_category(labels[i - 1])
        if prev_prefix == "O" or prev_cat != cat:
            prev_name = scheme.classes[labels[i - 1]]
            out.append((i, f"I-{cat} after {prev_name}"))
    return out


def validate_bio(corpus: LabeledCorpus) -> list[BioViolation]:
    """Report-only BIO check; empty result iff the corpus is BIO-valid."""
    violations = []
    for si, sent in enumerate(corpus.sentences):
        for ti, reason in sentence_bio_violations(sent.labels, corpus.scheme):
            violations.append(BioViolation(si, ti, reason))
    return violations


def compute_stats(corpus: LabeledCorpus) -> CorpusStats:
    if corpus.n_sentences == 0 or corpus.total_tokens == 0:
        raise ValueError("cannot compute statistics of an empty corpus")
    counts: Counter[int] = Counter()
    for sent in corpus.sentences:
        counts.update(sent.labels)
    per_class = {name: counts.get(i, 0) for i, name in enumerate(corpus.scheme.classes)}
    total = sum(per_class.values())
    n_majority = per_class[corpus.scheme.majority_class]
    return CorpusStats(
        n_sentences=corpus.n_sentences,
        per_class_counts=per_class,
        total_tokens=total,
        n_majority=n_majority,
        n_entity=total - n_majority,
        rho_majority=n_majority / total,
    )


def stats_tsv(stats: CorpusStats) -> str:
    """TSV with columns (class, count, share)."""
    lines = ["class\tcount\tshare"]
    for name, count in stats.per_class_counts.items():
        lines.append(f"{name}\t{count}\t{count / stats.total_tokens:.6f}")
    return "\n".join(lines) + "\n"


def build_vocab(corpus: LabeledCorpus, min_frequency: int = 1) -> Vocabulary:
    """Ids by descending frequency, ties lexicographic; rare tokens map to UNK."""
    freq: Counter[str] = Counter()
    for sent in corpus.sentences:
        freq.update(sent.tokens)
    kept = [t for t, c in freq.items() if c >= min_frequency]
    kept.sort(key=lambda t: (-freq[t], t))
    return Vocabulary(tokens=tuple(kept), min_frequency=min_frequency)


def undersample(corpus: LabeledCorpus, fraction: float, seed: int) -> LabeledCorpus:
    """Keep round(fraction*N) whole sentences, sampled uniformly without replacement."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    n = corpus.n_sentences
    k = round(fraction * n)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=k, replace=False))
    return LabeledCorpus(
        scheme=corpus.scheme,
        sentences=tuple(corpus.sentences[i] for i in chosen),
        split_tag=corpus.split_tag,
    )


def oversample(corpus: LabeledCorpus, factor: float, seed: int) -> LabeledCorpus:
    """Append duplicates of random entity-bearing sentences until N' = round(factor*N)."""
    if factor < 1.0:
        raise ValueError(f"factor must be >= 1, got {factor}")
    n = corpus.n_sentences
    target = round(factor * n)
    extra = target - n
    if extra == 0:
        return corpus
    majority = corpus.scheme.majority_index
    entity_idx = [i for i, s in enumerate(corpus.sentences)
                  if any(lab != majority for lab in s.labels)]
    if not entity_idx:
        raise ValueError("corpus has no entity-bearing sentences to oversample")
    rng = np.random.default_rng(seed)
    picks = rng.choice(np.array(entity_idx), size=extra, replace=True)
    sentences = list(corpus.sentences) + [corpus.sentences[i] for i in picks]
    return LabeledCorpus(scheme=corpus.scheme, sentences=tuple(sentences),
                         split_tag=corpus.split_tag)


def bin_label_for_length(length: int) -> str:
    if length >= 36:
        return BIN_LABELS[-1]
    return BIN_LABELS[(length - 1) // 5]


def bin_by_length(corpus: LabeledCorpus) -> dict[str, list[int]]:
    """Partition sentence indices into 5-word bins: 1-5, 6-10, ..., 36-."""
    bins: dict[str, list[int]] = {label: [] for label in BIN_LABELS}
    for i, sent in enumerate(corpus.sentences):
        bins[bin_label_for_length(len(sent))].append(i)
    return bins
