import math

import numpy as np
import pytest

from hire.models.configs import DistillConfig
from hire.models.params import AttentionParams
from hire.services.distill_service import DistillService
from hire.services.rgcn_service import RgcnService
from hire.utils import tensor as T
from hire.utils.errors import ConfigError, DegenerateInputError, SchemaMismatchError, ValidationError
from hire.utils.tensor import Tape, Tensor
from tests.conftest import leaf


def _attention(weight, bias, query):
    return AttentionParams(leaf(weight), leaf(bias), leaf(query))


# -------------------------
# Node level
# -------------------------

def test_cross_entropy_examples():
    assert DistillService.cross_entropy(Tensor([[10.0, -10.0]]), [0]).item() < 1e-6
    assert DistillService.cross_entropy(T.zeros(1, 3), [2]).item() == pytest.approx(math.log(3), abs=1e-12)
    logits = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    labels = [0, 3, 1]
    doubled = T.concat_rows([logits, logits])
    assert DistillService.cross_entropy(doubled, labels * 2).item() == pytest.approx(
        DistillService.cross_entropy(logits, labels).item(), abs=1e-14
    )


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValidationError):
        DistillService.cross_entropy(T.zeros(2, 3), [0, 3])
    with pytest.raises(DegenerateInputError):
        DistillService.cross_entropy(T.zeros(0, 3), [])


def test_nkd_with_zero_alpha_is_cross_entropy():
    rng = np.random.default_rng(1)
    s, t = Tensor(rng.normal(size=(5, 3))), Tensor(rng.normal(size=(5, 3)))
    labels = [0, 1, 2, 1, 0]
    assert DistillService.nkd_loss(s, t, labels, 0.0, 4.0).item() == DistillService.cross_entropy(s, labels).item()


def test_nkd_with_identical_logits_and_full_alpha_is_zero():
    z = Tensor(np.random.default_rng(2).normal(size=(4, 3)))
    assert abs(DistillService.nkd_loss(z, z, [0, 1, 2, 0], 1.0, 3.0).item()) < 1e-12


def test_nkd_single_row_kl():
    # KL([0.731059, 0.268941] || [0.5, 0.5])
    value = DistillService.nkd_loss(Tensor([[0.0, 0.0]]), Tensor([[1.0, 0.0]]), [0], 1.0, 1.0).item()
    p = 1 / (1 + math.exp(-1))
    expected = p * math.log(2 * p) + (1 - p) * math.log(2 * (1 - p))
    assert value == pytest.approx(expected, abs=1e-12)
    assert value == pytest.approx(0.110944, abs=1e-6)


def test_nkd_scales_with_tau_squared():
    s, t = Tensor([[0.3, -0.2]]), Tensor([[1.0, 0.0]])
    kd = DistillService.soft_label_divergence(s, t, 2.0).item()
    p_t = T.softmax_rows(t, 2.0).data
    p_s = T.softmax_rows(s, 2.0).data
    assert kd == pytest.approx(4.0 * float(np.sum(p_t * np.log(p_t / p_s))), abs=1e-12)


# -------------------------
# Relation level
# -------------------------

def test_type_mean_embeddings():
    hidden = {"a": Tensor([[1.0, 0.0], [0.0, 1.0]]), "b": Tensor([[2.0, 3.0]])}
    H = DistillService.type_mean_embeddings(hidden, ["a", "b"])
    np.testing.assert_array_equal(H.data, [[0.5, 0.5], [2.0, 3.0]])
    with pytest.raises(DegenerateInputError, match="'c'"):
        DistillService.type_mean_embeddings({"c": T.zeros(0, 2)}, ["c"])


def test_rbf_similarity_examples():
    x = [0.3, -1.2]
    assert DistillService.rbf_similarity(x, x, 0.7, "exact") == 1.0
    assert DistillService.rbf_similarity(x, x, 0.7, "taylor2") == 1.0
    sigma = 1.5
    y = [0.3 + math.sqrt(2) * sigma, -1.2]  # ||x - y||^2 = 2 sigma^2
    assert DistillService.rbf_similarity(x, y, sigma, "exact") == pytest.approx(math.exp(-1), abs=1e-12)
    assert DistillService.rbf_similarity(x, y, sigma, "taylor2") == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ConfigError):
        DistillService.rbf_similarity(x, y, 0.0)


def test_metacorr_examples():
    np.testing.assert_array_equal(DistillService.metacorr(Tensor([[1.0, 2.0]]), 1.0).data, [[1.0]])
    np.testing.assert_array_equal(DistillService.metacorr(Tensor([[1.0, 2.0], [1.0, 2.0]]), 1.0).data, np.ones((2, 2)))
    corr = DistillService.metacorr(Tensor([[0.0, 0.0], [2.0, 0.0]]), 1.0, "exact").data
    assert corr[0, 1] == pytest.approx(math.exp(-2), abs=1e-12)


@pytest.mark.parametrize("mode", ["exact", "taylor2"])
def test_metacorr_is_symmetric(mode):
    H = Tensor(np.random.default_rng(3).normal(scale=0.4, size=(5, 4)))
    corr = DistillService.metacorr(H, 1.3, mode).data
    np.testing.assert_allclose(corr, corr.T, atol=1e-12)
    if mode == "exact":
        np.testing.assert_array_equal(np.diag(corr), np.ones(5))
        assert np.all(corr > 0) and np.all(corr <= 1)


def test_metacorr_matches_pairwise_rbf():
    H = np.random.default_rng(4).normal(size=(3, 2))
    corr = DistillService.metacorr(Tensor(H), 0.8, "taylor2").data
    for i in range(3):
        for j in range(3):
            assert corr[i, j] == pytest.approx(DistillService.rbf_similarity(H[i], H[j], 0.8, "taylor2"), abs=1e-12)


def test_taylor_remainder_bound():
    for s in np.linspace(-0.5, 0.0, 1000):
        taylor = 1 + s + 0.5 * s * s
        assert abs(taylor - math.exp(s)) <= abs(s) ** 3 / 6 + 1e-15
        assert abs(s) ** 3 / 6 <= 0.0209


def test_type_attention_examples():
    att = _attention([[1.0]], [[0.0]], [[1.0]])
    coeffs = DistillService.type_attention(Tensor([[0.0], [10.0]]), att).data
    np.testing.assert_allclose(coeffs, [[0.2689414, 0.7310586]], atol=1e-6)

    rng = np.random.default_rng(0)
    att = DistillService.init_attention(4, rng)
    same = DistillService.type_attention(Tensor(np.tile(rng.normal(size=(1, 4)), (3, 1))), att).data
    np.testing.assert_allclose(same, np.full((1, 3), 1 / 3), atol=1e-15)
    mixed = DistillService.type_attention(Tensor(rng.normal(size=(3, 4))), att).data
    assert mixed.sum() == pytest.approx(1.0, abs=1e-12) and np.all((mixed > 0) & (mixed < 1))


def test_rkd_zero_for_matching_embeddings():
    rng = np.random.default_rng(5)
    hidden = {"a": Tensor(rng.normal(size=(3, 4))), "b": Tensor(rng.normal(size=(2, 4)))}
    att = DistillService.init_attention(4, rng)
    assert abs(DistillService.rkd_loss(hidden, hidden, att, DistillConfig()).item()) < 1e-12
    single = {"a": hidden["a"]}
    other = {"a": Tensor(rng.normal(size=(3, 4)))}
    assert DistillService.rkd_loss(single, other, att, DistillConfig(kernel_mode="exact")).item() == 0.0


def test_rkd_hand_expansion():
    # symmetric scores (zero attention weight) give alpha = [0.5, 0.5]
    att = _attention(np.zeros((2, 1)), np.zeros((1, 2)), [[1.0], [1.0]])
    gap = math.sqrt(2 * math.log(2))  # exp(-gap^2 / 2) = 0.5
    hidden_s = {"a": Tensor([[0.0]]), "b": Tensor([[gap]])}
    hidden_t = {"a": Tensor([[0.0]]), "b": Tensor([[0.0]])}
    teacher_corr = Tensor([[1.0, 0.9], [0.9, 1.0]])
    loss = DistillService.rkd_loss(hidden_s, hidden_t, att, DistillConfig(sigma=1.0), teacher_corr).item()
    assert loss == pytest.approx(0.16, abs=1e-12)


def test_rkd_rejects_mismatched_types():
    att = DistillService.init_attention(2, np.random.default_rng(0))
    with pytest.raises(SchemaMismatchError):
        DistillService.rkd_loss({"a": T.zeros(1, 2)}, {"b": T.zeros(1, 2)}, att, DistillConfig())


# -------------------------
# Combined objective
# -------------------------

def _outputs(graph, seed, hidden_dim=3):
    student = RgcnService.init_params(graph, np.random.default_rng(seed), hidden_dim)
    teacher = RgcnService.init_params(graph, np.random.default_rng(seed + 100), hidden_dim)
    att = DistillService.init_attention(hidden_dim, np.random.default_rng(seed + 200))
    return student, teacher, att


def _loss(graph, student, teacher, att, cfg):
    train = graph.splits.train
    s_out = RgcnService.forward(graph, student)
    t_out = RgcnService.forward(graph, teacher)
    return DistillService.hire_loss(
        T.index_rows(s_out.logits, train), s_out.hidden,
        T.index_rows(t_out.logits, train), t_out.hidden,
        graph.labels[train], att, cfg,
    )


def test_degeneracy_ladder(tiny_graph):
    student, teacher, att = _outputs(tiny_graph, 0)
    ce = _loss(tiny_graph, student, teacher, att, DistillConfig(variant="CE"))
    nkd = _loss(tiny_graph, student, teacher, att, DistillConfig(variant="NKD", alpha=0.4, tau=3.0))
    hire_no_beta = _loss(tiny_graph, student, teacher, att, DistillConfig(variant="HIRE", alpha=0.4, beta=0.0, tau=3.0))
    hire_zero = _loss(tiny_graph, student, teacher, att, DistillConfig(variant="HIRE", alpha=0.0, beta=0.0))
    rkd_zero = _loss(tiny_graph, student, teacher, att, DistillConfig(variant="RKD", beta=0.0))

    assert ce[0].item() == ce[1].ce
    assert hire_no_beta[0].item() == nkd[0].item()
    assert abs(hire_zero[0].item() - ce[0].item()) <= 1e-12
    assert rkd_zero[0].item() == ce[0].item()


@pytest.mark.parametrize("variant", ["CE", "NKD", "RKD", "HIRE"])
@pytest.mark.parametrize("mode", ["exact", "taylor2"])
def test_parts_add_up(tiny_graph, variant, mode):
    student, teacher, att = _outputs(tiny_graph, 1)
    cfg = DistillConfig(variant=variant, alpha=0.3, beta=2.0, tau=2.0, kernel_mode=mode)
    total, parts = _loss(tiny_graph, student, teacher, att, cfg)
    alpha, beta = cfg.effective()
    assert total.item() == pytest.approx((1 - alpha) * parts.ce + alpha * parts.kd + beta * parts.rkd, abs=1e-12)
    assert total.item() >= 0
    assert sum(parts.attention) == pytest.approx(1.0, abs=1e-12)
    assert sum(parts.teacher_attention) == pytest.approx(1.0, abs=1e-12)


def test_teacher_receives_no_gradient(tiny_graph):
    student, teacher, att = _outputs(tiny_graph, 2)
    with Tape():
        total, _ = _loss(tiny_graph, student, teacher, att, DistillConfig(alpha=0.5, beta=1.0))
    T.backward(total)
    assert all(t.grad is None for _, t in teacher.named_tensors())
    assert any(t.grad is not None for _, t in student.named_tensors())
    assert all(t.grad is not None for _, t in att.named_tensors())


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("mode", ["exact", "taylor2"])
def test_hire_loss_gradients(tiny_graph, gradcheck, mode, seed):
    student, teacher, att = _outputs(tiny_graph, seed)
    cfg = DistillConfig(alpha=0.6, beta=5.0, tau=2.0, sigma=0.7, kernel_mode=mode)
    leaves = [t for _, t in student.named_tensors()] + [t for _, t in att.named_tensors()]
    gradcheck(lambda: _loss(tiny_graph, student, teacher, att, cfg)[0], leaves)


def test_distill_config_ranges_and_gating():
    assert DistillConfig(variant="ce", alpha=0.7, beta=3.0).effective() == (0.0, 0.0)
    assert DistillConfig(variant="NKD", alpha=0.7, beta=3.0).effective() == (0.7, 0.0)
    assert DistillConfig(variant="RKD", alpha=0.7, beta=3.0).effective() == (0.0, 3.0)
    assert DistillConfig(variant="HIRE", alpha=0.7, beta=3.0).effective() == (0.7, 3.0)
    for bad in (dict(alpha=1.2), dict(beta=-1.0), dict(tau=0.5), dict(sigma=0.0), dict(kernel_mode="taylor3"), dict(variant="KD")):
        with pytest.raises(ConfigError):
            DistillConfig(**bad)
