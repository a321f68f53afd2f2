from dataclasses import replace

import numpy as np
import pytest

from hire.models.configs import BENCHMARK_DISTILL, DISTILL_GRIDS, DistillConfig, TrainConfig
from hire.services.eval_service import EvalService
from hire.services.graph_service import GraphService
from hire.services.rgcn_service import RgcnService
from hire.services.trainer_service import Adam, AdamState, TrainerService
from hire.utils.errors import ConfigError, DegenerateInputError, SchemaMismatchError, ShapeError
from tests.conftest import leaf


def _cfg(**overrides):
    fields = dict(epochs=5, hidden_dim=4, learning_rate=0.05, weight_decay=5e-4, seed=0)
    fields.update(overrides)
    return TrainConfig(**fields)


def _bytes(params):
    return [(name, t.data.tobytes()) for name, t in params.named_tensors()]


# -------------------------
# Adam
# -------------------------

def test_adam_first_step():
    p = leaf([[1.0]])
    TrainerService.adam_step({"p": p}, {"p": np.array([[0.5]])}, AdamState(), lr=0.1)
    assert p.item() == pytest.approx(0.9, abs=1e-7)


def test_adam_zero_gradient_leaves_parameters():
    p = leaf([[1.0, -2.0]])
    state = AdamState()
    TrainerService.adam_step({"p": p}, {"p": None}, state, lr=0.1)
    np.testing.assert_array_equal(p.data, [[1.0, -2.0]])
    assert state.step == 1


def test_adam_weight_decay_enters_gradient():
    p = leaf([[1.0]])
    TrainerService.adam_step({"p": p}, {"p": np.zeros((1, 1))}, AdamState(), lr=0.1, weight_decay=0.1)
    assert p.item() == pytest.approx(0.9, abs=1e-6)


def test_adam_identical_inputs_stay_identical():
    rng = np.random.default_rng(0)
    start = rng.normal(size=(3, 2))
    a, b = Adam(0.01), Adam(0.01)
    pa, pb = leaf(start), leaf(start)
    for _ in range(5):
        grad = rng.normal(size=(3, 2))
        pa.grad, pb.grad = grad, grad.copy()
        a.step([("w", pa)])
        b.step([("w", pb)])
    np.testing.assert_array_equal(pa.data, pb.data)


def test_adam_rejects_misshapen_gradient():
    with pytest.raises(ShapeError, match="'p'"):
        TrainerService.adam_step({"p": leaf([[1.0]])}, {"p": np.zeros((2, 1))}, AdamState(), lr=0.1)


# -------------------------
# Teacher pretraining
# -------------------------

def test_single_epoch_history(tiny_graph):
    _, history = TrainerService.pretrain_teacher(tiny_graph, _cfg(epochs=1))
    assert len(history) == 1
    assert history.best_epoch == 0
    assert history.history_header() == ["epoch", "total", "ce", "kd", "rkd", "val_micro_f1"]


def test_pretraining_is_deterministic(tiny_graph):
    first, h1 = TrainerService.pretrain_teacher(tiny_graph, _cfg(dropout=0.3))
    second, h2 = TrainerService.pretrain_teacher(tiny_graph, _cfg(dropout=0.3))
    assert _bytes(first) == _bytes(second)
    assert h1.history_rows() == h2.history_rows()


def test_separable_train_nodes_are_fitted(tiny_graph):
    params, _ = TrainerService.pretrain_teacher(
        tiny_graph, _cfg(epochs=200, weight_decay=0.0, select="last")
    )
    train = tiny_graph.splits.train
    pred = RgcnService.predict(RgcnService.forward(tiny_graph, params).logits)
    np.testing.assert_array_equal(pred[train], tiny_graph.labels[train])


def test_validation_score_follows_the_optimizer_step(tiny_graph):
    params, history = TrainerService.pretrain_teacher(tiny_graph, _cfg(epochs=3, select="last"))
    val = tiny_graph.splits.val
    pred = RgcnService.predict(RgcnService.forward(tiny_graph, params).logits)
    last = EvalService.micro_f1(pred[val], tiny_graph.labels[val], tiny_graph.num_classes)
    assert history.records[-1].val_micro_f1 == last


def test_empty_validation_keeps_last_epoch(tiny_doc):
    tiny_doc["splits"] = {"train": [0, 2], "val": [], "test": [1, 3]}
    g = GraphService.graph_from_doc(tiny_doc)
    _, history = TrainerService.pretrain_teacher(g, _cfg(epochs=3))
    assert history.best_epoch == 2


def test_empty_train_split_is_degenerate(tiny_doc):
    tiny_doc["splits"] = {"train": [], "val": [1], "test": [0, 2, 3]}
    with pytest.raises(DegenerateInputError, match="train"):
        TrainerService.pretrain_teacher(GraphService.graph_from_doc(tiny_doc), _cfg())


# -------------------------
# Distillation
# -------------------------

@pytest.fixture
def teacher(tiny_graph):
    params, _ = TrainerService.pretrain_teacher(tiny_graph, _cfg(epochs=20, seed=3))
    return params


def test_ce_student_matches_teacher_training(tiny_graph, teacher):
    cfg = _cfg(epochs=8, dropout=0.2, seed=5)
    baseline, base_history = TrainerService.pretrain_teacher(tiny_graph, cfg)
    student, _, history = TrainerService.distill_student(tiny_graph, teacher, cfg.with_distill(variant="CE"))
    assert _bytes(student) == _bytes(baseline)
    assert [r.ce for r in history.records] == [r.ce for r in base_history.records]
    assert history.best_epoch == base_history.best_epoch


def test_student_started_at_teacher_has_no_distillation_gap(tiny_graph, teacher):
    cfg = _cfg(epochs=1).with_distill(variant="HIRE", alpha=0.5, beta=1.0)
    _, _, history = TrainerService.distill_student(tiny_graph, teacher, cfg, init=teacher)
    first = history.records[0]
    assert abs(first.kd) < 1e-12
    assert abs(first.rkd) < 1e-12


def test_teacher_is_not_modified(tiny_graph, teacher):
    before = _bytes(teacher)
    TrainerService.distill_student(tiny_graph, teacher, _cfg(epochs=4).with_distill(alpha=0.7, beta=10.0))
    assert _bytes(teacher) == before


@pytest.mark.parametrize("variant", ["NKD", "RKD", "HIRE"])
@pytest.mark.parametrize("mode", ["exact", "taylor2"])
def test_recorded_losses_add_up(tiny_graph, teacher, variant, mode):
    cfg = _cfg(epochs=6).with_distill(variant=variant, alpha=0.4, beta=3.0, tau=2.0, kernel_mode=mode)
    _, att, history = TrainerService.distill_student(tiny_graph, teacher, cfg)
    alpha, beta = cfg.distill.effective()
    assert history.history_header()[5:9] == ["att_paper", "att_author", "tatt_paper", "tatt_author"]
    for r, row in zip(history.records, history.history_rows()):
        assert row[5:9] == [*r.attention, *r.teacher_attention]
        assert abs(r.total - ((1 - alpha) * r.ce + alpha * r.kd + beta * r.rkd)) <= 1e-9
        assert abs(sum(r.attention) - 1.0) <= 1e-9
        assert abs(sum(r.teacher_attention) - 1.0) <= 1e-9
    assert att.weight.shape == (4, 4)


def test_distillation_is_deterministic(tiny_graph, teacher):
    cfg = _cfg(epochs=4, dropout=0.1).with_distill(alpha=0.5, beta=1.0)
    first, att1, h1 = TrainerService.distill_student(tiny_graph, teacher, cfg)
    second, att2, h2 = TrainerService.distill_student(tiny_graph, teacher, cfg)
    assert _bytes(first) == _bytes(second)
    assert att1.weight.data.tobytes() == att2.weight.data.tobytes()
    assert h1.history_rows() == h2.history_rows()


def test_teacher_from_other_schema_is_rejected(small_graph, teacher):
    with pytest.raises(SchemaMismatchError):
        TrainerService.distill_student(small_graph, teacher, _cfg(epochs=1))


def test_train_fraction_restricts_rows(small_graph):
    cfg = _cfg(epochs=1, train_fraction=0.2)
    teacher, _ = TrainerService.pretrain_teacher(small_graph, cfg)
    assert teacher.num_classes == small_graph.num_classes


# -------------------------
# Sweeps
# -------------------------

@pytest.fixture
def fake_cells(monkeypatch):
    calls = []

    def run_cells(fn, tasks, workers=1):
        calls.append(tasks)
        return [[*values, seed, 0.5, 0.5] for _, _, _, values, seed in reversed(tasks)]

    monkeypatch.setattr(TrainerService, "run_cells", staticmethod(run_cells))
    return calls


def test_full_grid_has_550_cells_per_seed(tiny_graph, teacher, fake_cells):
    table = TrainerService.grid_sweep(tiny_graph, teacher, _cfg(), DISTILL_GRIDS, seeds=[0, 1])
    assert len(table.rows) == 2 * 550
    assert table.header == ["tau", "alpha", "beta", "seed", "test_micro_f1", "test_macro_f1"]
    coords = [tuple(row[:4]) for row in table.rows]
    assert coords == sorted(coords)


def test_beta_slice_pins_other_axes(tiny_graph, teacher, fake_cells):
    base = _cfg().with_distill(tau=4.0, alpha=0.3)
    table = TrainerService.grid_sweep(tiny_graph, teacher, base, {"beta": DISTILL_GRIDS["beta"]}, seeds=[7])
    assert len(table.rows) == 5
    assert {(row[0], row[1]) for row in table.rows} == {(4.0, 0.3)}
    cfgs = [task[2] for task in fake_cells[0]]
    assert sorted(c.distill.beta for c in cfgs) == DISTILL_GRIDS["beta"]
    assert all(c.seed == 7 for c in cfgs)


def test_single_cell_grid(tiny_graph, teacher, fake_cells):
    table = TrainerService.grid_sweep(tiny_graph, teacher, _cfg(), {"tau": [2.0]}, seeds=[0, 1, 2])
    assert len(table.rows) == 3


def test_training_axes_become_columns(tiny_graph, teacher, fake_cells):
    table = TrainerService.grid_sweep(tiny_graph, teacher, _cfg(), {"lr": [0.01, 0.1], "alpha": [0.2]})
    assert table.header[:4] == ["tau", "alpha", "beta", "lr"]
    assert len(table.rows) == 2


@pytest.mark.parametrize("grids", [{}, {"beta": []}, {"gamma": [1.0]}])
def test_bad_grids(tiny_graph, teacher, grids):
    with pytest.raises(ConfigError):
        TrainerService.grid_sweep(tiny_graph, teacher, _cfg(), grids)


def test_apply_cell():
    cfg = TrainerService.apply_cell(_cfg(), {"lr": 0.1, "alpha": 0.3, "dropout": 0.2}, seed=4)
    assert cfg.learning_rate == 0.1 and cfg.dropout == 0.2 and cfg.seed == 4
    assert cfg.distill.alpha == 0.3 and cfg.distill.beta == DistillConfig().beta


def test_sweep_cells_run_for_real(tiny_graph, teacher):
    table = TrainerService.grid_sweep(
        tiny_graph, teacher, _cfg(epochs=2), {"tau": [1.0, 2.0]}, seeds=[0]
    )
    assert [row[0] for row in table.rows] == [1.0, 2.0]
    assert all(0.0 <= row[-2] <= 1.0 for row in table.rows)


# -------------------------
# Longer runs
# -------------------------

@pytest.mark.slow
def test_attention_stays_on_the_simplex_for_a_full_run(small_graph):
    cfg = TrainConfig(epochs=200, seed=1)
    teacher, _ = TrainerService.pretrain_teacher(small_graph, replace(cfg, epochs=50))
    _, _, history = TrainerService.distill_student(small_graph, teacher, cfg)
    assert len(history) == 200
    for row in history.records:
        assert abs(sum(row.attention) - 1.0) <= 1e-9
        assert all(0.0 < a < 1.0 for a in row.attention)


@pytest.fixture(scope="module")
def noisy_acm():
    schema = GraphService.load_schema({"preset": "acm-like", "label_noise_rate": 0.15}, scale=0.2)
    return GraphService.generate_synthetic(schema)


@pytest.mark.slow
def test_distillation_ordering_on_noisy_acm(noisy_acm):
    assert noisy_acm.node_counts["paper"] == 805
    scores = {name: [] for name in ("teacher", "NKD", "RKD", "HIRE")}
    for seed in range(5):
        cfg = TrainConfig(seed=seed, train_fraction=0.2).with_distill(**BENCHMARK_DISTILL)
        teacher, _ = TrainerService.pretrain_teacher(noisy_acm, cfg)
        scores["teacher"].append(EvalService.evaluate_model(noisy_acm, teacher, "test", seed=seed).micro_f1)
        for variant in ("NKD", "RKD", "HIRE"):
            student, _, _ = TrainerService.distill_student(noisy_acm, teacher, cfg.with_distill(variant=variant))
            scores[variant].append(EvalService.evaluate_model(noisy_acm, student, "test", seed=seed).micro_f1)

    mean = {name: float(np.mean(values)) for name, values in scores.items()}
    assert np.mean(np.subtract(scores["HIRE"], scores["teacher"])) >= 0.0, mean
    assert mean["HIRE"] >= mean["NKD"], mean
    assert mean["RKD"] >= mean["NKD"], mean


@pytest.mark.slow
def test_student_validation_trends_upward(noisy_acm):
    cfg = TrainConfig(epochs=50, seed=0, train_fraction=0.2).with_distill(**BENCHMARK_DISTILL)
    teacher, _ = TrainerService.pretrain_teacher(noisy_acm, cfg)
    _, _, history = TrainerService.distill_student(noisy_acm, teacher, cfg)
    _, _, again = TrainerService.distill_student(noisy_acm, teacher, cfg)
    assert history.history_rows() == again.history_rows()

    val = np.array([r.val_micro_f1 for r in history.records])
    smoothed = np.maximum.accumulate(np.convolve(val, np.ones(10) / 10, mode="valid"))
    assert len(val) == 50
    assert smoothed[-1] > smoothed[0]
