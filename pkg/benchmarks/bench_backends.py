#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the per-sentence forward/backward kernels, the Adam update, and a
short end-to-end training run under both backends, checking that the two
paths agree numerically.  Run:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

from momner import kernels
from momner.corpus import build_vocab
from momner.losses import LossConfig
from momner.model import ModelConfig
from momner.synthgen import SynthConfig, generate_corpus
from momner.train import TrainSettings, train_sequence_model


def time_fn(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(n_calls=2000):
    rng = np.random.default_rng(0)
    v, e, r, h, k = 400, 32, 2, 64, 13
    width = 2 * r + 1
    emb = rng.normal(size=(v, e))
    w1 = rng.normal(size=(width * e, h))
    b1 = rng.normal(size=h)
    w2 = rng.normal(size=(h, k))
    b2 = rng.normal(size=k)
    extra = np.zeros(width * e)
    sentences = [rng.integers(0, v, size=int(rng.integers(5, 25)))
                 for _ in range(n_calls)]

    results = {}
    for backend in available_backends():
        kernels.set_backend(backend)
        # warm up the JIT before timing
        kernels.sentence_forward(emb, w1, b1, w2, b2, sentences[0], extra,
                                 r, 0, False)

        def forward_all():
            for ids in sentences:
                kernels.sentence_forward(emb, w1, b1, w2, b2, ids, extra,
                                         r, 0, False)

        def backward_all():
            demb = np.zeros_like(emb)
            dw1 = np.zeros_like(w1)
            db1 = np.zeros_like(b1)
            dw2 = np.zeros_like(w2)
            db2 = np.zeros_like(b2)
            for ids in sentences:
                probs, hidden, feats = kernels.sentence_forward(
                    emb, w1, b1, w2, b2, ids, extra, r, 0, False)
                kernels.sentence_backward(ids, feats, hidden, probs, w1, w2,
                                          r, 0, demb, dw1, db1, dw2, db2)

        results[backend, "forward"] = time_fn(forward_all) / n_calls
        results[backend, "forward+backward"] = time_fn(backward_all) / n_calls

        p = rng.normal(size=50000)
        g = rng.normal(size=50000)
        m1 = np.zeros_like(p)
        m2 = np.zeros_like(p)
        kernels.adam_update(p, g, m1, m2, 1, 1e-3, 0.9, 0.999, 1e-8)

        def adam_many():
            for step in range(2, 102):
                kernels.adam_update(p, g, m1, m2, step, 1e-3, 0.9, 0.999, 1e-8)

        results[backend, "adam (50k params)"] = time_fn(adam_many) / 100
    return results


def bench_training():
    corpus = generate_corpus(SynthConfig(n_sentences=400, vocab_size=120,
                                         n_entity_categories=4, seed=1))
    vocab = build_vocab(corpus)
    cfg = ModelConfig(vocab_size=vocab.size, n_classes=corpus.scheme.n_classes)
    settings = TrainSettings(epochs=3, seed=0, learning_rate=5e-3)

    results = {}
    traces = {}
    for backend in available_backends():
        kernels.set_backend(backend)
        train_sequence_model(corpus, vocab, cfg, LossConfig(),
                             settings=TrainSettings(epochs=1, seed=0))  # warm up
        t0 = time.perf_counter()
        _, trace = train_sequence_model(corpus, vocab, cfg, LossConfig(),
                                        settings=settings)
        results[backend] = time.perf_counter() - t0
        traces[backend] = trace
    if len(traces) == 2:
        a, b = traces.values()
        assert np.allclose(a, b, rtol=1e-9), "backends diverged during training"
        print("backend agreement on training loss trace: OK")
    return results


def available_backends():
    return ("numpy", "numba") if kernels.HAVE_NUMBA else ("numpy",)


def main():
    print(f"numba available: {kernels.HAVE_NUMBA} "
          f"(active backend: {kernels.BACKEND})\n")
    kernel_times = bench_kernels()
    names = sorted({name for _, name in kernel_times})
    print(f"{'kernel':24s} " + "".join(f"{b:>12s}" for b in available_backends())
          + ("     speedup" if kernels.HAVE_NUMBA else ""))
    for name in names:
        row = f"{name:24s} "
        for backend in available_backends():
            row += f"{kernel_times[backend, name] * 1e6:10.1f}us"
        if kernels.HAVE_NUMBA:
            ratio = kernel_times["numpy", name] / kernel_times["numba", name]
            row += f"{ratio:10.1f}x"
        print(row)

    print()
    training = bench_training()
    for backend, seconds in training.items():
        print(f"training (3 epochs x 400 sentences) [{backend}]: {seconds:.2f}s")
    if len(training) == 2:
        print(f"speedup: {training['numpy'] / training['numba']:.1f}x")


if __name__ == "__main__":
    main()
