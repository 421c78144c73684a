import math

import numpy as np
import pytest

from milslide import (
    AdamState,
    MilError,
    MilModel,
    adam_step,
    bag_cross_entropy,
    forward,
    init_model,
    instance_loss,
    load_model,
    loss_and_backward,
    save_model,
)
from milslide.milnet import PARAM_NAMES, xavier_bound

from conftest import random_bag


def naive_forward(model, features):
    """Reference forward pass in plain Python loops over float() scalars."""
    d, h, a = model.dims
    n = len(features)
    hidden = [[max(0.0, sum(model.w_proj[j][k] * features[i][k] for k in range(d)) + model.b_proj[j]) for j in range(h)] for i in range(n)]
    scores = []
    for i in range(n):
        s = model.b_w[0]
        for j in range(a):
            t = math.tanh(sum(model.v_attn[j][k] * hidden[i][k] for k in range(h)) + model.b_v[j])
            g = 1.0 / (1.0 + math.exp(-(sum(model.u_attn[j][k] * hidden[i][k] for k in range(h)) + model.b_u[j])))
            s += model.w_attn[j] * t * g
        scores.append(s)
    mx = max(scores)
    es = [math.exp(s - mx) for s in scores]
    attention = [e / sum(es) for e in es]
    z = [sum(attention[i] * hidden[i][j] for i in range(n)) for j in range(h)]
    logits = [sum(model.w_cls[c][j] * z[j] for j in range(h)) + model.b_cls[c] for c in range(2)]
    lmx = max(logits)
    el = [math.exp(l - lmx) for l in logits]
    probs = [e / sum(el) for e in el]
    return attention, z, logits, probs


def finite_difference_check(model, bag, label, **kwargs):
    _, grads = loss_and_backward(model, bag, label, **kwargs)
    eps = 1e-5
    worst = 0.0
    for name, p in model.params().items():
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            up, _ = loss_and_backward(model, bag, label, **kwargs)
            p[idx] = orig - eps
            down, _ = loss_and_backward(model, bag, label, **kwargs)
            p[idx] = orig
            fd = (up - down) / (2 * eps)
            an = grads[name][idx]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-6))
    return worst


class TestInit:
    def test_bitwise_deterministic(self):
        m1 = init_model(768, 512, 256, seed=42)
        m2 = init_model(768, 512, 256, seed=42)
        for name in PARAM_NAMES:
            assert np.array_equal(getattr(m1, name), getattr(m2, name))

    def test_different_seed_differs(self):
        m1 = init_model(8, 4, 2, seed=1)
        m2 = init_model(8, 4, 2, seed=2)
        assert not np.array_equal(m1.w_proj, m2.w_proj)

    def test_xavier_bounds_and_zero_biases(self):
        m = init_model(20, 10, 5, seed=3)
        assert np.abs(m.w_proj).max() <= xavier_bound(20, 10)
        assert np.abs(m.v_attn).max() <= xavier_bound(10, 5)
        assert np.abs(m.w_cls).max() <= xavier_bound(10, 2)
        assert np.abs(m.w_proj).max() > 0.01  # actually spread out
        for b in (m.b_proj, m.b_v, m.b_u, m.b_w, m.b_cls):
            assert not b.any()

    def test_bad_dims(self):
        with pytest.raises(MilError):
            init_model(0, 4, 2, seed=1)


class TestForward:
    def test_matches_naive_loop_oracle(self, rng):
        for _ in range(5):
            bag = random_bag(rng, int(rng.integers(1, 7)), 4)
            model = init_model(4, 5, 3, seed=int(rng.integers(1000)))
            out = forward(model, bag)
            attention, z, logits, probs = naive_forward(model, bag.features.tolist())
            assert out.attention == pytest.approx(attention, abs=1e-12)
            assert out.bag_embedding == pytest.approx(z, abs=1e-12)
            assert out.logits == pytest.approx(logits, abs=1e-12)
            assert out.probs == pytest.approx(probs, abs=1e-12)

    def test_attention_sums_to_one(self, rng):
        for n in [1, 2, 50, 1000]:
            bag = random_bag(rng, n, 6)
            out = forward(init_model(6, 4, 3, seed=0), bag)
            assert abs(out.attention.sum() - 1.0) < 1e-9

    def test_single_instance_attention_exact(self, rng):
        bag = random_bag(rng, 1, 6)
        out = forward(init_model(6, 4, 3, seed=0), bag)
        assert out.attention.tolist() == [1.0]

    def test_permutation_invariance(self, rng):
        from milslide import FeatureBag

        bag = random_bag(rng, 12, 5)
        model = init_model(5, 6, 3, seed=9)
        base = forward(model, bag)
        perm = rng.permutation(12)
        shuffled = FeatureBag(
            slide_id=bag.slide_id,
            patch_size=bag.patch_size,
            coords=bag.coords,
            features=bag.features[perm],
        )
        out = forward(model, shuffled)
        assert out.logits == pytest.approx(base.logits, abs=1e-12)
        assert out.attention[np.argsort(perm)] == pytest.approx(base.attention, abs=1e-12)

    def test_dim_mismatch(self, rng):
        with pytest.raises(MilError, match="D="):
            forward(init_model(4, 3, 2, seed=0), random_bag(rng, 2, 5))

    def test_probs_are_softmax_of_logits(self, rng):
        out = forward(init_model(3, 4, 2, seed=1), random_bag(rng, 4, 3))
        e = np.exp(out.logits - out.logits.max())
        assert out.probs == pytest.approx(e / e.sum(), abs=1e-15)
        assert bag_cross_entropy(out, 1) == pytest.approx(-math.log(out.probs[1]), abs=1e-15)


class TestBackward:
    def test_gradients_match_finite_differences(self, rng):
        for i, kwargs in enumerate([
            {},
            {"weight_decay": 1e-3},
            {"instance_weight": 0.3, "instance_k": 2},
            {"weight_decay": 1e-4, "instance_weight": 0.5, "instance_k": 1},
        ]):
            bag = random_bag(rng, 6, 4, slide_id=f"g{i}")
            model = init_model(4, 5, 3, seed=100 + i)
            worst = finite_difference_check(model, bag, i % 2, **kwargs)
            assert worst < 1e-4, f"config {kwargs}: max rel err {worst}"

    def test_loss_includes_decay_term(self, rng):
        bag = random_bag(rng, 3, 4)
        model = init_model(4, 5, 2, seed=7)
        plain, _ = loss_and_backward(model, bag, 0)
        decayed, _ = loss_and_backward(model, bag, 0, weight_decay=0.1)
        w2 = sum(float(np.sum(getattr(model, n) ** 2)) for n in ("w_proj", "v_attn", "u_attn", "w_attn", "w_cls"))
        assert decayed - plain == pytest.approx(0.05 * w2, rel=1e-12)

    def test_bad_label(self, rng):
        with pytest.raises(MilError, match="label"):
            loss_and_backward(init_model(3, 2, 2, seed=0), random_bag(rng, 2, 3), 2)


class TestInstanceLoss:
    def naive(self, model, out, label, k):
        n = len(out.attention)
        k_eff = min(k, n // 2)
        if k_eff < 1:
            return 0.0
        order = np.argsort(out.attention, kind="stable")
        total = 0.0
        pairs = [(i, label) for i in order[-k_eff:]] + [(i, 0) for i in order[:k_eff]]
        for i, target in pairs:
            logits = model.w_cls @ out.hidden[i] + model.b_cls
            e = np.exp(logits - logits.max())
            total += -math.log(e[target] / e.sum())
        return total / (2 * k_eff)

    def test_matches_naive(self, rng):
        model = init_model(4, 5, 3, seed=3)
        for n, k in [(8, 2), (10, 8), (4, 1)]:
            bag = random_bag(rng, n, 4)
            out = forward(model, bag)
            loss, _ = instance_loss(model, out, 1, k)
            assert loss == pytest.approx(self.naive(model, out, 1, k), abs=1e-12)

    def test_single_instance_contributes_nothing(self, rng):
        model = init_model(4, 5, 3, seed=3)
        bag = random_bag(rng, 1, 4)
        loss, grads = instance_loss(model, forward(model, bag), 1, 8)
        assert loss == 0.0
        assert not grads["w_cls"].any() and not grads["hidden"].any()


class ScalarAdam:
    """Reference single-parameter Adam, textbook form."""

    def __init__(self, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = 0.0
        self.t = 0

    def step(self, theta, g):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return theta - self.lr * m_hat / (math.sqrt(v_hat) + self.eps)


class TestAdam:
    def make_unit_model(self):
        # A=1 so w_attn is a single scalar we can track
        return init_model(1, 1, 1, seed=5)

    def test_first_step_matches_hand_derivation(self):
        model = self.make_unit_model()
        start = float(model.w_attn[0])
        state = AdamState.for_model(model, lr=0.1)
        grads = {name: np.zeros_like(arr) for name, arr in model.params().items()}
        grads["w_attn"] = np.ones(1)
        adam_step(model, grads, state)
        expected = start - 0.1 * 1.0 / (1.0 + 1e-8)
        assert float(model.w_attn[0]) == pytest.approx(expected, abs=1e-18)

    def test_matches_scalar_reference_over_many_steps(self):
        model = self.make_unit_model()
        state = AdamState.for_model(model, lr=0.05, beta1=0.8, beta2=0.99, eps=1e-8)
        ref = ScalarAdam(lr=0.05, beta1=0.8, beta2=0.99, eps=1e-8)
        theta = float(model.w_attn[0])
        rng = np.random.default_rng(6)
        for _ in range(25):
            g = float(rng.standard_normal())
            grads = {name: np.zeros_like(arr) for name, arr in model.params().items()}
            grads["w_attn"] = np.array([g])
            adam_step(model, grads, state)
            theta = ref.step(theta, g)
            assert float(model.w_attn[0]) == pytest.approx(theta, abs=1e-15)

    def test_zero_grad_leaves_param_unchanged(self):
        model = self.make_unit_model()
        before = model.clone()
        state = AdamState.for_model(model)
        grads = {name: np.zeros_like(arr) for name, arr in model.params().items()}
        adam_step(model, grads, state)
        for name in PARAM_NAMES:
            assert np.array_equal(getattr(model, name), getattr(before, name))

    def test_shape_mismatch_rejected(self):
        model = self.make_unit_model()
        state = AdamState.for_model(model)
        grads = {name: np.zeros_like(arr) for name, arr in model.params().items()}
        grads["w_cls"] = np.zeros((3, 3))
        with pytest.raises(MilError, match="shape"):
            adam_step(model, grads, state)


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, tmp_path, rng):
        for i in range(10):
            d, h, a = (int(rng.integers(1, 9)) for _ in range(3))
            model = init_model(d, h, a, seed=int(rng.integers(10000)))
            p1 = tmp_path / "m1.milm"
            p2 = tmp_path / "m2.milm"
            save_model(model, p1)
            save_model(load_model(p1), p2)
            assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_model_scores_identically(self, tmp_path, rng):
        model = init_model(6, 5, 3, seed=11)
        bag = random_bag(rng, 7, 6)
        p = tmp_path / "m.milm"
        save_model(model, p)
        restored = load_model(p)
        assert restored.seed == 11
        assert np.array_equal(forward(restored, bag).logits, forward(model, bag).logits)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.milm"
        save_model(init_model(2, 2, 1, seed=0), p)
        blob = bytearray(p.read_bytes())
        blob[:4] = b"XXXX"
        p.write_bytes(bytes(blob))
        with pytest.raises(MilError, match="magic"):
            load_model(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "m.milm"
        save_model(init_model(2, 2, 1, seed=0), p)
        blob = bytearray(p.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        p.write_bytes(bytes(blob))
        with pytest.raises(MilError, match="version"):
            load_model(p)

    def test_truncation(self, tmp_path):
        p = tmp_path / "m.milm"
        save_model(init_model(2, 2, 1, seed=0), p)
        blob = p.read_bytes()
        for cut in [2, 20, len(blob) - 7]:
            p.write_bytes(blob[:cut])
            with pytest.raises(MilError):
                load_model(p)

    def test_trailing_bytes_rejected(self, tmp_path):
        p = tmp_path / "m.milm"
        save_model(init_model(2, 2, 1, seed=0), p)
        p.write_bytes(p.read_bytes() + b"x")
        with pytest.raises(MilError, match="oversized"):
            load_model(p)

    def test_validate_catches_nan(self):
        model = init_model(2, 2, 1, seed=0)
        model.w_cls[0, 0] = np.nan
        with pytest.raises(MilError, match="non-finite"):
            model.validate()
