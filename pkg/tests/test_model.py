import math

import numpy as np
import pytest

from oodtune import autodiff as ad
from oodtune.autodiff import Tensor, backward, grad_check
from oodtune.model import (
    Discriminator,
    EnergyConfig,
    EnergyOverflowError,
    confidence,
    cross_entropy_t,
    energy,
    energy_t,
    generator_score,
    mean_entropy_t,
    shannon_entropy,
    softmax_probs,
)


def tiny_model(dims=(2, 4, 2), seed=0):
    return Discriminator(dims, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def test_zero_parameters_give_zero_logits():
    m = tiny_model((3, 2))
    for p in m.parameters():
        p.data = np.zeros_like(p.data)
    out = m.logits(np.array([[0.3, -0.4, 2.0]]), params_on_tape=False)
    np.testing.assert_allclose(out.data, np.zeros((1, 2)))


def test_identity_single_layer():
    m = tiny_model((2, 2))
    m.weights[0].data = np.eye(2)
    m.biases[0].data = np.zeros(2)
    out = m.logits(np.array([[1.0, 2.0]]), params_on_tape=False)
    np.testing.assert_allclose(out.data, [[1.0, 2.0]])


def test_duplicated_rows_get_identical_logits():
    m = tiny_model((4, 8, 3), seed=5)
    rng = np.random.default_rng(1)
    row = rng.normal(size=4)
    batch = np.vstack([row, rng.normal(size=4), row])
    out = m.logits(batch, params_on_tape=False).data
    np.testing.assert_array_equal(out[0], out[2])


def test_width_mismatch_rejected():
    m = tiny_model((2, 2))
    with pytest.raises(ValueError, match="width"):
        m.logits(np.ones((1, 3)))


def test_detached_forward_never_grads_params():
    m = tiny_model()
    x = Tensor(np.array([[0.1, -0.2]]), requires_grad=True)
    backward(ad.reduce_sum(m.logits(x, params_on_tape=False)))
    assert x.grad is not None and np.abs(x.grad).sum() > 0
    for p in m.parameters():
        np.testing.assert_allclose(p.grad, 0.0)


def test_constructor_validates_dims():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        Discriminator([3], rng)
    with pytest.raises(ValueError):
        Discriminator([3, 1], rng)
    with pytest.raises(ValueError):
        Discriminator([0, 2], rng)


def test_copy_is_independent():
    m = tiny_model()
    dup = m.copy()
    assert dup.param_digest() == m.param_digest()
    dup.weights[0].data = dup.weights[0].data + 1.0
    assert dup.param_digest() != m.param_digest()


# ---------------------------------------------------------------------------
# softmax / entropy / confidence
# ---------------------------------------------------------------------------

def test_softmax_symmetric_pair():
    np.testing.assert_allclose(softmax_probs([0.0, 0.0]), [0.5, 0.5])


def test_softmax_log2_case():
    np.testing.assert_allclose(
        softmax_probs([math.log(2.0), 0.0]), [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)


def test_softmax_survives_huge_logit():
    p = softmax_probs([1000.0, 0.0])
    assert np.isfinite(p).all()
    np.testing.assert_allclose(p, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(p.sum(), 1.0, atol=1e-9)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(3)
    for _ in range(50):
        z = rng.normal(scale=4.0, size=6)
        k = rng.normal(scale=10.0)
        np.testing.assert_allclose(
            softmax_probs(z + k), softmax_probs(z), atol=1e-10)


def test_entropy_reference_points():
    assert shannon_entropy(np.full(10, 0.1)) == pytest.approx(math.log(10.0))
    assert shannon_entropy([1.0] + [0.0] * 9) == 0.0
    assert shannon_entropy([0.5, 0.5]) == pytest.approx(math.log(2.0))


def test_entropy_bounds_fuzz():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        c = rng.integers(2, 12)
        p = rng.dirichlet(np.ones(c) * rng.uniform(0.1, 5.0))
        h = shannon_entropy(p)
        assert -1e-12 <= h <= math.log(c) + 1e-12


def test_confidence_values():
    assert confidence(np.full(10, 0.1)) == pytest.approx(0.1)
    assert confidence([0.7, 0.2, 0.1]) == pytest.approx(0.7)
    assert confidence([0.0, 1.0, 0.0]) == 1.0


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def test_energy_zero_logits():
    assert energy(np.zeros(10), EnergyConfig(c_scale=5.0)) == 0.0


def test_energy_single_active_logit():
    z = np.zeros(10)
    z[0] = 5.0
    val = energy(z, EnergyConfig(c_scale=5.0))
    assert val == pytest.approx(1.0 - math.e, abs=1e-6)
    assert val == pytest.approx(-1.718282, abs=1e-6)


def test_energy_two_equal_logits_raw_scale():
    val = energy(np.array([1.0, 1.0]), EnergyConfig(c_scale=1.0))
    assert val == pytest.approx(2.0 * (1.0 - math.e), abs=1e-6)


def test_energy_overflow_names_logit():
    with pytest.raises(EnergyOverflowError, match="logit 1"):
        energy(np.array([0.0, 1e6]), EnergyConfig(c_scale=1.0))


def test_energy_raw_scale_matches_term_loop_exactly():
    # independent oracle: the raw formula accumulated term by term
    rng = np.random.default_rng(23)
    cfg = EnergyConfig(c_scale=1.0)
    for _ in range(200):
        z = rng.normal(scale=2.0, size=rng.integers(2, 9))
        expected = 0.0
        for f in z:
            expected += (f / 1.0) * (1.0 - math.exp(f / 1.0))
        assert energy(z, cfg) == expected


def test_energy_config_validation():
    with pytest.raises(ValueError):
        EnergyConfig(c_scale=0.0)


# ---------------------------------------------------------------------------
# generator score
# ---------------------------------------------------------------------------

def test_generator_score_uniform_boundary():
    c = 10
    assert generator_score(np.zeros(c), math.log(c)) == pytest.approx(0.0, abs=1e-12)


def test_generator_score_one_hot_limit():
    c = 10
    z = np.zeros(c)
    z[3] = 500.0
    assert generator_score(z, math.log(c)) == pytest.approx(math.log(c), abs=1e-9)


def test_generator_score_half_half():
    got = generator_score(np.array([2.0, 2.0]), 1.0)
    assert got == pytest.approx(1.0 - math.log(2.0), abs=1e-12)


def test_generator_score_offset_precondition():
    with pytest.raises(ValueError, match="c_offset"):
        generator_score(np.zeros(4), 0.5)


def test_log_bound_on_exp_offset_over_partition():
    # log u <= u / e for u = exp(c) / sum(exp(logits)), any logits, any c >= 0
    rng = np.random.default_rng(17)
    for _ in range(2000):
        z = rng.normal(scale=3.0, size=rng.integers(2, 11))
        c = rng.uniform(0.0, 6.0)
        u = math.exp(c) / np.exp(z).sum()
        assert u > 0.0
        assert math.log(u) <= u / math.e + 1e-12


# ---------------------------------------------------------------------------
# tape composites
# ---------------------------------------------------------------------------

def test_mean_entropy_t_matches_array_path():
    rng = np.random.default_rng(2)
    z = rng.normal(scale=2.0, size=(5, 4))
    got = mean_entropy_t(Tensor(z)).item()
    want = shannon_entropy(softmax_probs(z)).mean()
    assert got == pytest.approx(want, abs=1e-12)


def test_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(5):
        z = Tensor(rng.normal(scale=2.0, size=(1, 6)))
        assert grad_check(mean_entropy_t, z) <= 1e-4


def test_energy_t_matches_array_path():
    rng = np.random.default_rng(6)
    cfg = EnergyConfig(c_scale=5.0)
    z = rng.normal(scale=3.0, size=(3, 4))
    got = energy_t(Tensor(z), cfg).item()
    assert got == pytest.approx(float(np.sum(energy(z, cfg))), rel=1e-12)


def test_cross_entropy_matches_manual():
    rng = np.random.default_rng(8)
    z = rng.normal(size=(4, 3))
    labels = np.array([0, 2, 1, 2])
    got = cross_entropy_t(Tensor(z), labels).item()
    p = softmax_probs(z)
    want = -np.mean(np.log(p[np.arange(4), labels]))
    assert got == pytest.approx(want, abs=1e-12)


def test_cross_entropy_label_validation():
    z = Tensor(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        cross_entropy_t(z, np.array([0, 3]))
    with pytest.raises(ValueError):
        cross_entropy_t(z, np.array([0]))


def test_mlp_entropy_grad_check():
    m = tiny_model((3, 4, 4, 3), seed=9)
    rng = np.random.default_rng(10)

    def fn(x):
        return mean_entropy_t(m.logits(x, params_on_tape=False))

    for _ in range(5):
        x = Tensor(rng.uniform(-1.0, 1.0, size=(1, 3)))
        assert grad_check(fn, x) <= 1e-4


def test_mlp_energy_grad_check():
    m = tiny_model((2, 8, 2), seed=12)
    cfg = EnergyConfig(c_scale=5.0)
    rng = np.random.default_rng(13)

    def fn(x):
        return energy_t(m.logits(x, params_on_tape=False), cfg)

    for _ in range(5):
        x = Tensor(rng.uniform(-1.0, 1.0, size=(1, 2)))
        assert grad_check(fn, x) <= 1e-4
