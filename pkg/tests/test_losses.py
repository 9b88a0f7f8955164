import math

import numpy as np
import pytest

from momner.corpus import CorpusStats, LabelScheme
from momner.losses import (LossConfig, binary_token_core, compute_class_weights,
                           loss_gradient, model_loss, mom_loss,
                           sentence_base_loss, sentence_loss, token_loss)
from conftest import random_prob_rows


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _stats(per_class: dict[str, int]) -> CorpusStats:
    total = sum(per_class.values())
    majority = per_class.get("O", 0)
    return CorpusStats(n_sentences=1, per_class_counts=per_class,
                       total_tokens=total, n_majority=majority,
                       n_entity=total - majority,
                       rho_majority=majority / total if total else 0.0)


class TestLossConfig:
    def test_lambda_requires_mom(self):
        with pytest.raises(ValueError):
            LossConfig(lam=0.5)
        with pytest.raises(ValueError):
            LossConfig(mom_enabled=True)
        with pytest.raises(ValueError):
            LossConfig(mom_enabled=True, lam=1.5)

    def test_hyperparameter_ranges(self):
        with pytest.raises(ValueError):
            LossConfig(beta=0.5)
        with pytest.raises(ValueError):
            LossConfig(gamma=-1.0)
        with pytest.raises(ValueError):
            LossConfig(delta=0.0)
        with pytest.raises(ValueError):
            LossConfig(base_variant="XX")

    def test_json_roundtrip(self):
        cfg = LossConfig(base_variant="FL", gamma=3.0, mom_enabled=True, lam=0.25)
        again = LossConfig.from_json(cfg.to_json())
        assert again == cfg


class TestClassWeights:
    def test_wce2_example(self):
        scheme = LabelScheme.from_categories(["X"])
        stats = _stats({"O": 90, "B-X": 10, "I-X": 0})
        w = compute_class_weights(stats, scheme, "WCE2", beta=1.0)
        assert w[scheme.index("B-X")] == pytest.approx(1.0)  # log10(90/10 + 1)

    def test_wce1_example(self):
        # s=100 tokens over a 4-class scheme; s_k=10 gives 100/(4*10) = 2.5
        scheme = LabelScheme(classes=("O", "B-X", "I-X", "B-Y"))
        stats = _stats({"O": 80, "B-X": 10, "I-X": 5, "B-Y": 5})
        w = compute_class_weights(stats, scheme, "WCE1")
        assert w[1] == pytest.approx(2.5)

    def test_single_class_degenerate(self):
        scheme = LabelScheme(classes=("O",))
        stats = _stats({"O": 100})
        w = compute_class_weights(stats, scheme, "WCE2", beta=1.0)
        assert w[0] == pytest.approx(0.0)  # log10(0/s_k + 1) = 0

    def test_absent_class_gets_zero(self):
        scheme = LabelScheme.from_categories(["X"])
        stats = _stats({"O": 90, "B-X": 10, "I-X": 0})
        w = compute_class_weights(stats, scheme, "WCE1")
        assert w[scheme.index("I-X")] == 0.0

    def test_empty_split_errors(self):
        scheme = LabelScheme(classes=("O",))
        stats = CorpusStats(n_sentences=0, per_class_counts={"O": 0},
                            total_tokens=0, n_majority=0, n_entity=0,
                            rho_majority=0.0)
        with pytest.raises(ValueError):
            compute_class_weights(stats, scheme, "WCE1")


class TestTokenLoss:
    def test_ce(self):
        loss = token_loss([0, 1, 0], [0.1, 0.8, 0.1], LossConfig())
        assert loss == pytest.approx(-math.log(0.8), abs=1e-12)

    def test_non_one_hot_errors(self):
        for bad in ([0, 0, 0], [1, 1, 0], [0.5, 0.5, 0.0]):
            with pytest.raises(ValueError):
                token_loss(bad, [0.2, 0.3, 0.5], LossConfig())

    def test_fl_binary_example(self):
        # gamma=2, p_true=0.9: true-class term is 0.1^2 * (-ln 0.9); the other
        # class contributes the same term since q = 1 - 0.1 = 0.9
        cfg = LossConfig(base_variant="FL", gamma=2.0)
        loss = token_loss([1, 0], [0.9, 0.1], cfg)
        term = (0.1 ** 2) * (-math.log(0.9))
        assert term == pytest.approx(0.0010536, abs=1e-7)
        assert loss == pytest.approx(2 * term, abs=1e-12)

    def test_dl_example(self):
        cfg = LossConfig(base_variant="DL", epsilon=1.0, delta=0.01)
        loss = token_loss([1, 0], [0.5, 0.5], cfg)
        dsc = (2 * 0.5 * 0.5 + 0.01) / (0.5 * 0.5 + 1 + 0.01)
        assert dsc == pytest.approx(0.40476, abs=1e-5)
        assert loss == pytest.approx(1 - dsc, abs=1e-12)
        assert loss == pytest.approx(0.59524, abs=1e-5)

    def test_dl_literal_mode_differs(self):
        base = LossConfig(base_variant="DL", epsilon=1.0, delta=0.01)
        literal = LossConfig(base_variant="DL", epsilon=1.0, delta=0.01,
                             dice_mode="eq6_literal")
        p = [0.7, 0.3]
        dsc_literal = (2 * 0.3 * 0.7 + 0.01) / (0.3 + 1 + 0.01)
        assert token_loss([1, 0], p, literal) == pytest.approx(1 - dsc_literal)
        assert token_loss([1, 0], p, base) != token_loss([1, 0], p, literal)

    def test_wce_all_ones_equals_ce(self):
        rng = np.random.default_rng(0)
        cfg_ce = LossConfig()
        cfg_w = LossConfig(base_variant="WCE1")
        ones = np.ones(4)
        for _ in range(50):
            p = random_prob_rows(rng, 1, 4)[0]
            y = np.zeros(4)
            y[rng.integers(4)] = 1.0
            assert token_loss(y, p, cfg_w, ones) == token_loss(y, p, cfg_ce)

    def test_fl_gamma_zero_is_ovr_binary_ce(self):
        rng = np.random.default_rng(1)
        cfg = LossConfig(base_variant="FL", gamma=0.0)
        for _ in range(50):
            p = random_prob_rows(rng, 1, 5)[0]
            t = int(rng.integers(5))
            y = np.zeros(5)
            y[t] = 1.0
            expected = -math.log(p[t]) - sum(
                math.log(1 - p[k]) for k in range(5) if k != t)
            assert token_loss(y, p, cfg) == pytest.approx(expected, rel=1e-12)


class TestSentenceLosses:
    CFG = LossConfig()

    def _probs(self):
        # two tokens, true-class probabilities 0.8 and 0.6
        return np.array([[0.8, 0.1, 0.1], [0.2, 0.6, 0.2]])

    def test_base_loss_example(self):
        loss = sentence_base_loss([0, 1], self._probs(), self.CFG)
        assert loss == pytest.approx(0.36699, abs=1e-5)

    def test_perfect_prediction(self):
        probs = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert sentence_base_loss([0, 0], probs, self.CFG) == 0.0

    def test_single_token_equals_token_loss(self):
        p = np.array([[0.3, 0.7]])
        assert sentence_base_loss([1], p, self.CFG) == token_loss([0, 1], p[0], self.CFG)

    def test_by_m_mode(self):
        cfg = LossConfig(normalization="by_M")
        loss = sentence_base_loss([0, 1], self._probs(), cfg, max_len=8)
        by_len = sentence_base_loss([0, 1], self._probs(), self.CFG)
        assert loss == pytest.approx(by_len * 2 / 8)
        with pytest.raises(ValueError):
            sentence_base_loss([0, 1], self._probs(), cfg)

    def test_mom_loss_example(self):
        loss = mom_loss([0, 1], self._probs(), self.CFG, majority_index=0)
        assert loss == pytest.approx(0.11157, abs=1e-5)

    def test_mom_loss_no_majority_tokens(self):
        assert mom_loss([1, 2], self._probs(), self.CFG, majority_index=0) == 0.0

    def test_mom_equals_base_when_all_majority(self):
        probs = self._probs()
        base = sentence_base_loss([0, 0], probs, self.CFG)
        mom = mom_loss([0, 0], probs, self.CFG, majority_index=0)
        assert mom == base

    def test_sentence_loss_example(self):
        cfg = LossConfig(mom_enabled=True, lam=0.5)
        loss = sentence_loss([0, 1], self._probs(), cfg, majority_index=0)
        assert loss == pytest.approx(0.23928, abs=1e-5)

    def test_lambda_one_endpoint(self):
        rng = np.random.default_rng(2)
        cfg = LossConfig(mom_enabled=True, lam=1.0)
        for _ in range(100):
            m, k = int(rng.integers(1, 8)), int(rng.integers(2, 6))
            probs = random_prob_rows(rng, m, k)
            labels = rng.integers(0, k, size=m)
            full = sentence_loss(labels, probs, cfg, majority_index=0)
            base = sentence_base_loss(labels, probs, LossConfig())
            assert abs(full - base) < 1e-12

    def test_lambda_zero_all_entity_sentence(self):
        cfg = LossConfig(mom_enabled=True, lam=0.0)
        assert sentence_loss([1, 2], self._probs(), cfg, majority_index=0) == 0.0

    def test_no_majority_scales_by_lambda(self):
        rng = np.random.default_rng(3)
        for lam in (0.0, 0.3, 0.8):
            cfg = LossConfig(mom_enabled=True, lam=lam)
            probs = random_prob_rows(rng, 3, 4)
            labels = [1, 2, 3]
            combined = sentence_loss(labels, probs, cfg, majority_index=0)
            base = sentence_base_loss(labels, probs, LossConfig())
            assert combined == pytest.approx(lam * base, abs=1e-15)

    def test_all_majority_lambda_invariant(self):
        rng = np.random.default_rng(4)
        probs = random_prob_rows(rng, 4, 3)
        labels = [0, 0, 0, 0]
        values = {sentence_loss(labels, probs,
                                LossConfig(mom_enabled=True, lam=lam),
                                majority_index=0)
                  for lam in (0.0, 0.25, 0.5, 1.0)}
        assert max(values) - min(values) < 1e-12


class TestModelLoss:
    def test_mean_and_duplication(self):
        rng = np.random.default_rng(5)
        cfg = LossConfig()
        labels = [[0, 1], [1]]
        probs = [random_prob_rows(rng, 2, 3), random_prob_rows(rng, 1, 3)]
        base = model_loss(labels, probs, cfg)
        doubled = model_loss(labels * 2, probs * 2, cfg)
        assert doubled == pytest.approx(base, rel=1e-15)

    def test_two_sentence_mean(self):
        # engineered so the two sentence losses are -ln(0.8) and -ln(0.4)
        cfg = LossConfig()
        probs_a = np.array([[0.8, 0.2]])
        probs_b = np.array([[0.4, 0.6]])
        expected = (-math.log(0.8) - math.log(0.4)) / 2
        assert model_loss([[0], [0]], [probs_a, probs_b], cfg) == \
            pytest.approx(expected, rel=1e-12)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            model_loss([], [], LossConfig())


def _fd_logit_gradient(labels, logits, cfg, weights, majority_index, step=1e-6):
    fd = np.zeros_like(logits)
    for i in range(logits.shape[0]):
        for j in range(logits.shape[1]):
            for sign in (1.0, -1.0):
                bumped = logits.copy()
                bumped[i, j] += sign * step
                loss = sentence_loss(labels, _softmax(bumped), cfg, weights,
                                     majority_index=majority_index)
                fd[i, j] += sign * loss
    return fd / (2 * step)


ALL_VARIANT_CONFIGS = [
    ("CE", dict()),
    ("WCE1", dict(base_variant="WCE1")),
    ("WCE2", dict(base_variant="WCE2")),
    ("FL", dict(base_variant="FL", gamma=2.0)),
    ("FL-frac", dict(base_variant="FL", gamma=0.5)),
    ("DL", dict(base_variant="DL", epsilon=1.0, delta=0.01)),
    ("DL-lit", dict(base_variant="DL", epsilon=2.0, delta=0.1,
                    dice_mode="eq6_literal")),
]


class TestLossGradient:
    def test_ce_gradient_identity(self):
        # with plain CE the logit gradient is (p - y) / n_tokens
        rng = np.random.default_rng(6)
        probs = random_prob_rows(rng, 4, 5)
        labels = rng.integers(0, 5, size=4)
        _, dlogits = loss_gradient(labels, probs, LossConfig())
        onehot = np.eye(5)[labels]
        np.testing.assert_allclose(dlogits, (probs - onehot) / 4, atol=1e-12)

    def test_lambda_one_matches_base_gradient(self):
        rng = np.random.default_rng(7)
        probs = random_prob_rows(rng, 5, 4)
        labels = rng.integers(0, 4, size=5)
        cfg = LossConfig(mom_enabled=True, lam=1.0)
        _, g_mom = loss_gradient(labels, probs, cfg, majority_index=0)
        _, g_base = loss_gradient(labels, probs, LossConfig())
        np.testing.assert_array_equal(g_mom, g_base)

    def test_mom_token_coefficients(self):
        # majority rows keep weight 1, entity rows scale by lambda
        rng = np.random.default_rng(8)
        probs = random_prob_rows(rng, 4, 3)
        labels = np.array([0, 1, 0, 2])
        lam = 0.3
        cfg = LossConfig(mom_enabled=True, lam=lam)
        _, g_mom = loss_gradient(labels, probs, cfg, majority_index=0)
        _, g_base = loss_gradient(labels, probs, LossConfig())
        for i, lab in enumerate(labels):
            factor = 1.0 if lab == 0 else lam
            np.testing.assert_allclose(g_mom[i], factor * g_base[i], atol=1e-15)

    @pytest.mark.parametrize("name,kwargs", ALL_VARIANT_CONFIGS)
    @pytest.mark.parametrize("mom", [False, True])
    def test_matches_finite_differences(self, name, kwargs, mom):
        rng = np.random.default_rng(abs(hash((name, mom))) % 2 ** 32)
        failures = 0
        for _ in range(30):
            m = int(rng.integers(1, 7))
            k = int(rng.integers(2, 6))
            logits = rng.normal(scale=2.0, size=(m, k))
            labels = rng.integers(0, k, size=m)
            weights = np.abs(rng.normal(1.0, 0.5, size=k)) + 0.05 \
                if name.startswith("WCE") else None
            cfg = LossConfig(mom_enabled=mom, lam=float(rng.uniform(0, 1)) if mom else None,
                             **kwargs)
            probs = _softmax(logits)
            _, analytic = loss_gradient(labels, probs, cfg, weights,
                                        majority_index=0)
            fd = _fd_logit_gradient(labels, logits, cfg, weights, 0)
            err = np.linalg.norm(analytic - fd) / max(
                np.linalg.norm(analytic), np.linalg.norm(fd), 1e-12)
            if err > 1e-4:
                failures += 1
        assert failures == 0


class TestNonNegativity:
    @pytest.mark.parametrize("name,kwargs", ALL_VARIANT_CONFIGS)
    def test_losses_non_negative(self, name, kwargs):
        rng = np.random.default_rng(abs(hash(name)) % 2 ** 32)
        weights = np.abs(rng.normal(1, 0.5, size=5)) + 0.01 \
            if name.startswith("WCE") else None
        cfg = LossConfig(**kwargs)
        for _ in range(200):
            p = random_prob_rows(rng, 1, 5)[0]
            t = int(rng.integers(5))
            y = np.zeros(5)
            y[t] = 1.0
            assert token_loss(y, p, cfg, weights) >= 0.0

    def test_zero_at_certain_prediction(self):
        # CE/WCE/FL vanish when the full mass is on the true class
        y = np.array([0.0, 1.0, 0.0])
        p = np.array([0.0, 1.0, 0.0])
        assert token_loss(y, p, LossConfig()) == 0.0
        assert token_loss(y, p, LossConfig(base_variant="WCE1"),
                          np.array([2.0, 3.0, 4.0])) == 0.0
        assert token_loss(y, p, LossConfig(base_variant="FL", gamma=2.0)) == 0.0


class TestBinaryCore:
    def test_ce_value(self):
        losses, _ = binary_token_core(np.array([1.0, 0.0]),
                                      np.array([0.5, 0.5]), LossConfig())
        np.testing.assert_allclose(losses, math.log(2))

    def test_weighted_variants_rejected(self):
        with pytest.raises(ValueError):
            binary_token_core(np.array([1.0]), np.array([0.5]),
                              LossConfig(base_variant="WCE1"))

    @pytest.mark.parametrize("kwargs", [
        dict(), dict(base_variant="FL", gamma=3.0),
        dict(base_variant="DL", epsilon=1.0, delta=0.01)])
    def test_gradients_match_fd(self, kwargs):
        rng = np.random.default_rng(9)
        cfg = LossConfig(**kwargs)
        step = 1e-6
        for _ in range(60):
            n = int(rng.integers(1, 9))
            y = (rng.random(n) < 0.3).astype(float)
            p = rng.uniform(0.02, 0.98, size=n)
            _, grad = binary_token_core(y, p, cfg)
            fd = np.zeros(n)
            for i in range(n):
                hi = p.copy(); hi[i] += step
                lo = p.copy(); lo[i] -= step
                fd[i] = (binary_token_core(y, hi, cfg)[0].sum()
                         - binary_token_core(y, lo, cfg)[0].sum()) / (2 * step)
            err = np.linalg.norm(grad - fd) / max(np.linalg.norm(grad),
                                                  np.linalg.norm(fd), 1e-12)
            assert err < 1e-4
