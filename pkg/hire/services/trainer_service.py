import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from hire.config import Config
from hire.models.configs import DISTILL_GRIDS, TRAINING_GRIDS, TrainConfig
from hire.models.graph import HetGraph
from hire.models.params import AttentionParams, ModelParams
from hire.models.reports import EpochRecord, RunHistory
from hire.services.distill_service import DistillService, LossParts
from hire.services.eval_service import EvalService
from hire.services.graph_service import GraphService
from hire.services.rgcn_service import ForwardOutput, RgcnService
from hire.utils import tensor as T
from hire.utils.errors import ConfigError, DegenerateInputError, ShapeError
from hire.utils.helpers import log_line, rng_streams
from hire.utils.tensor import Tape, Tensor

SWEEP_AXES = tuple(DISTILL_GRIDS) + tuple(TRAINING_GRIDS)


# -------------------------
# Adam
# -------------------------

@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adam over named leaf tensors; weight decay is added to the gradient before the moments."""

    def __init__(self, lr: float, weight_decay: float = 0.0, state: Optional[AdamState] = None):
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = state if state is not None else AdamState()

    def step(self, named: Iterable[Tuple[str, Tensor]]):
        named = list(named)
        TrainerService.adam_step(
            {name: t for name, t in named},
            {name: t.grad for name, t in named},
            self.state,
            self.lr,
            self.weight_decay,
        )


@dataclass
class SweepTable:
    header: List[str]
    rows: List[list]


class TrainerService:
    @staticmethod
    def adam_step(
        params: Dict[str, Tensor],
        grads: Dict[str, Optional[np.ndarray]],
        state: AdamState,
        lr: float,
        weight_decay: float = 0.0,
    ):
        state.step += 1
        bc1 = 1.0 - state.beta1 ** state.step
        bc2 = 1.0 - state.beta2 ** state.step
        for name, param in params.items():
            grad = grads.get(name)
            g = np.zeros(param.shape) if grad is None else np.asarray(grad, dtype=np.float64)
            if g.shape != param.shape:
                raise ShapeError(f"gradient of '{name}' has shape {g.shape}, parameter has {param.shape}")
            if weight_decay:
                g = g + weight_decay * param.data
            if name not in state.m:
                state.m[name] = np.zeros(param.shape)
                state.v[name] = np.zeros(param.shape)
            m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
            v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
            state.m[name], state.v[name] = m, v
            param.assign(param.data - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))

    # -------------------------
    # Training loops
    # -------------------------
    @staticmethod
    def pretrain_teacher(g: HetGraph, cfg: TrainConfig) -> Tuple[ModelParams, RunHistory]:
        g = GraphService.restrict_train(g, cfg.train_fraction)
        train_idx = TrainerService._train_rows(g)
        labels = g.labels[train_idx]
        streams = rng_streams(cfg.seed)
        params = RgcnService.init_params(g, streams["init"], cfg.hidden_dim)

        def loss_fn(out: ForwardOutput):
            ce = DistillService.cross_entropy(T.index_rows(out.logits, train_idx), labels)
            return ce, LossParts(ce=ce.item(), kd=0.0, rkd=0.0, attention=[], teacher_attention=[])

        history = RunHistory(type_names=())
        best, _ = TrainerService._fit(g, cfg, params, None, loss_fn, streams["dropout"], history, "TEACHER")
        return best, history

    @staticmethod
    def distill_student(
        g: HetGraph,
        teacher: ModelParams,
        cfg: TrainConfig,
        init: Optional[ModelParams] = None,
    ) -> Tuple[ModelParams, AttentionParams, RunHistory]:
        teacher.check_compatible(g)
        g = GraphService.restrict_train(g, cfg.train_fraction)
        train_idx = TrainerService._train_rows(g)
        labels = g.labels[train_idx]
        streams = rng_streams(cfg.seed)

        # frozen: computed once, outside any tape
        teacher_out = RgcnService.forward(g, teacher, mode="eval")
        teacher_logits = T.index_rows(teacher_out.logits, train_idx)
        teacher_corr = DistillService.teacher_metacorr(teacher_out.hidden, g.node_types, cfg.distill)

        student = init.clone() if init is not None else RgcnService.init_params(g, streams["init"], cfg.hidden_dim)
        att = DistillService.init_attention(student.hidden_dim, streams["attention"], cfg.distill.attention_dim)

        def loss_fn(out: ForwardOutput):
            return DistillService.hire_loss(
                T.index_rows(out.logits, train_idx),
                out.hidden,
                teacher_logits,
                teacher_out.hidden,
                labels,
                att,
                cfg.distill,
                teacher_corr,
            )

        history = RunHistory(type_names=g.node_types)
        best, best_att = TrainerService._fit(g, cfg, student, att, loss_fn, streams["dropout"], history, "DISTILL")
        return best, best_att, history

    @staticmethod
    def _train_rows(g: HetGraph) -> np.ndarray:
        if g.splits.train.size == 0:
            raise DegenerateInputError("the train split is empty")
        return g.splits.train

    @staticmethod
    def _fit(
        g: HetGraph,
        cfg: TrainConfig,
        params: ModelParams,
        att: Optional[AttentionParams],
        loss_fn: Callable[[ForwardOutput], Tuple[Tensor, LossParts]],
        dropout_rng: np.random.Generator,
        history: RunHistory,
        tag: str,
    ) -> Tuple[ModelParams, Optional[AttentionParams]]:
        optimizer = Adam(cfg.learning_rate, cfg.weight_decay)
        val_idx = g.splits.val
        select = cfg.select
        if select == "best_val" and val_idx.size == 0:
            log_line(tag, "validation split is empty, keeping the last epoch", "warn")
            select = "last"

        best_score, best_params, best_att = -1.0, None, None
        for epoch in range(cfg.epochs):
            params.zero_grad()
            if att is not None:
                att.zero_grad()
            with Tape():
                out = RgcnService.forward(g, params, cfg.dropout, dropout_rng, mode="train")
                total, parts = loss_fn(out)
            T.backward(total)

            named = params.named_tensors() + (att.named_tensors() if att is not None else [])
            optimizer.step(named)

            val_f1 = 0.0
            if val_idx.size:
                pred = RgcnService.predict(RgcnService.forward(g, params, mode="eval").logits)
                val_f1 = EvalService.micro_f1(pred[val_idx], g.labels[val_idx], g.num_classes)

            history.append(EpochRecord(
                epoch=epoch,
                total=total.item(),
                ce=parts.ce,
                kd=parts.kd,
                rkd=parts.rkd,
                attention=parts.attention,
                teacher_attention=parts.teacher_attention,
                val_micro_f1=val_f1,
            ))
            if select == "best_val" and val_f1 > best_score:
                best_score, history.best_epoch = val_f1, epoch
                best_params, best_att = params.clone(), att.clone() if att is not None else None

            if Config.LOG_EVERY and (epoch + 1) % Config.LOG_EVERY == 0:
                log_line(tag, f"epoch={epoch} total={total.item():.6f} val_micro_f1={val_f1:.4f}")

        if select == "last":
            history.best_epoch = cfg.epochs - 1
            return params.clone(), att.clone() if att is not None else None
        return best_params, best_att

    # -------------------------
    # Sweeps
    # -------------------------
    @staticmethod
    def apply_cell(base: TrainConfig, coords: Dict[str, float], seed: int) -> TrainConfig:
        distill = {k: coords[k] for k in DISTILL_GRIDS if k in coords}
        cfg = base.with_distill(**distill) if distill else base
        training = {
            "learning_rate": coords.get("lr", cfg.learning_rate),
            "weight_decay": coords.get("weight_decay", cfg.weight_decay),
            "dropout": coords.get("dropout", cfg.dropout),
            "train_fraction": coords.get("train_fraction", cfg.train_fraction),
        }
        return replace(cfg, seed=int(seed), **training)

    @staticmethod
    def grid_sweep(
        g: HetGraph,
        teacher: ModelParams,
        base_cfg: TrainConfig,
        grids: Dict[str, Sequence[float]],
        seeds: Optional[Sequence[int]] = None,
        workers: int = Config.SWEEP_WORKERS,
    ) -> SweepTable:
        if not grids or any(len(values) == 0 for values in grids.values()):
            raise ConfigError("sweep grids must be non-empty")
        unknown = sorted(set(grids) - set(SWEEP_AXES))
        if unknown:
            raise ConfigError(f"unknown sweep axes {unknown}")

        # distillation axes always appear as columns; absent ones are pinned to the base config
        full = {"tau": [base_cfg.distill.tau], "alpha": [base_cfg.distill.alpha], "beta": [base_cfg.distill.beta]}
        full.update({axis: list(values) for axis, values in grids.items()})
        axes = [axis for axis in SWEEP_AXES if axis in full]
        seeds = list(seeds) if seeds is not None else [base_cfg.seed]

        tasks = []
        for values in itertools.product(*(full[axis] for axis in axes)):
            coords = dict(zip(axes, values))
            for seed in seeds:
                cfg = TrainerService.apply_cell(base_cfg, coords, seed)
                tasks.append((g, teacher, cfg, tuple(values), seed))
        log_line("SWEEP", f"{len(tasks)} runs over axes {axes} with {len(seeds)} seed(s)")

        results = TrainerService.run_cells(_sweep_cell, tasks, workers)
        rows = sorted(results, key=lambda row: tuple(row[:len(axes) + 1]))
        return SweepTable(header=axes + ["seed", "test_micro_f1", "test_macro_f1"], rows=rows)

    @staticmethod
    def run_cells(fn: Callable, tasks: List[tuple], workers: int = 1) -> List:
        """Run independent cells, in-process or on a bounded process pool."""
        if workers <= 1 or len(tasks) <= 1:
            return [fn(task) for task in tasks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))


def _sweep_cell(task) -> list:
    g, teacher, cfg, values, seed = task
    student, _, _ = TrainerService.distill_student(g, teacher, cfg)
    report = EvalService.evaluate_model(g, student, "test", seed=seed)
    return [*values, seed, report.micro_f1, report.macro_f1]
