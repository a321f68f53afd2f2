"""
distill_service.py - Losses for training a student against a frozen teacher.

Node-level: temperature-softened KL(teacher || student) blended with
cross-entropy. Relation-level: RBF correlations between per-type mean
embeddings, matched under learnable type attention.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import xlogy

from hire.models.configs import KERNEL_MODES, DistillConfig
from hire.models.params import AttentionParams
from hire.utils import tensor as T
from hire.utils.errors import ConfigError, DegenerateInputError, SchemaMismatchError, ShapeError, ValidationError
from hire.utils.tensor import Tensor
from hire.utils.validators import validate_choice, validate_range


@dataclass(frozen=True)
class LossParts:
    ce: float
    kd: float
    rkd: float
    attention: List[float]
    teacher_attention: List[float]


def _frozen(t: Tensor) -> Tensor:
    return T.detach(t) if t.requires_grad else t


class DistillService:
    # -------------------------
    # Node level
    # -------------------------
    @staticmethod
    def cross_entropy(logits: Tensor, labels) -> Tensor:
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if logits.rows == 0:
            raise DegenerateInputError("cross-entropy over zero rows")
        if labels.shape != (logits.rows,):
            raise ShapeError(f"{logits.rows} logit rows but {labels.size} labels")
        if labels.min() < 0 or labels.max() >= logits.cols:
            raise ValidationError(f"labels must lie in [0, {logits.cols})")
        picked = T.pick(T.log_softmax_rows(logits, 1.0), labels)
        return T.scale(T.reduce("mean", picked, "all"), -1.0)

    @staticmethod
    def soft_label_divergence(student_logits: Tensor, teacher_logits: Tensor, tau: float) -> Tensor:
        """tau^2 * mean_i KL(p_t^tau || p_s^tau); the teacher side is constant."""
        if student_logits.shape != teacher_logits.shape:
            raise ShapeError(f"student logits {student_logits.shape} vs teacher logits {teacher_logits.shape}")
        p_t = T.softmax_rows(_frozen(teacher_logits), tau).data
        log_p_s = T.log_softmax_rows(student_logits, tau)
        kl_rows = T.sub(
            Tensor(xlogy(p_t, p_t)),
            T.mul(Tensor(p_t), log_p_s),
        )
        per_row = T.reduce("sum", kl_rows, "cols")
        return T.scale(T.reduce("mean", per_row, "all"), tau * tau)

    @staticmethod
    def nkd_loss(student_logits: Tensor, teacher_logits: Tensor, labels, alpha: float, tau: float) -> Tensor:
        loss, _, _ = DistillService._nkd_parts(student_logits, teacher_logits, labels, alpha, tau)
        return loss

    @staticmethod
    def _nkd_parts(student_logits, teacher_logits, labels, alpha, tau) -> Tuple[Tensor, Tensor, Tensor]:
        validate_range("alpha", alpha, 0.0, 1.0)
        ce = DistillService.cross_entropy(student_logits, labels)
        if alpha == 0:
            # the blend collapses to the ce tensor itself
            kd = DistillService.soft_label_divergence(_frozen(student_logits), teacher_logits, tau)
            return ce, ce, kd
        kd = DistillService.soft_label_divergence(student_logits, teacher_logits, tau)
        return T.add(T.scale(ce, 1.0 - alpha), T.scale(kd, alpha)), ce, kd

    # -------------------------
    # Relation level
    # -------------------------
    @staticmethod
    def type_mean_embeddings(hidden_by_type: Dict[str, Tensor], node_types: Sequence[str]) -> Tensor:
        means = []
        for node_type in node_types:
            h = hidden_by_type[node_type]
            if h.rows == 0:
                raise DegenerateInputError(f"node type '{node_type}' has no nodes to average")
            means.append(T.mean_rows(h))
        return T.concat_rows(means)

    @staticmethod
    def rbf_similarity(x, y, sigma: float, mode: str = "exact") -> float:
        validate_range("sigma", sigma, 0.0, low_open=True)
        validate_choice("kernel_mode", mode, KERNEL_MODES)
        x, y = np.asarray(x, dtype=np.float64).ravel(), np.asarray(y, dtype=np.float64).ravel()
        if x.shape != y.shape:
            raise ShapeError(f"rbf_similarity: lengths differ ({x.size} vs {y.size})")
        s = -float(np.sum((x - y) ** 2)) / (2.0 * sigma * sigma)
        if mode == "exact":
            return float(np.exp(s))
        return 1.0 + s + 0.5 * s * s

    @staticmethod
    def metacorr(H: Tensor, sigma: float, mode: str = "exact") -> Tensor:
        validate_range("sigma", sigma, 0.0, low_open=True)
        validate_choice("kernel_mode", mode, KERNEL_MODES)
        s = T.scale(T.pairwise_sq_dists(H), -1.0 / (2.0 * sigma * sigma))
        if mode == "exact":
            return T.exp(s)
        # second-order expansion of e^s about 0
        return T.add(T.add(T.full(H.rows, H.rows, 1.0), s), T.scale(T.mul(s, s), 0.5))

    @staticmethod
    def init_attention(hidden_dim: int, rng: np.random.Generator, attention_dim: Optional[int] = None) -> AttentionParams:
        d_a = attention_dim or hidden_dim
        return AttentionParams(
            weight=T.glorot_init(d_a, hidden_dim, rng),
            bias=T.zeros(1, d_a, requires_grad=True),
            query=T.glorot_init(d_a, 1, rng),
        )

    @staticmethod
    def type_attention(H: Tensor, att: AttentionParams) -> Tensor:
        """1 x K coefficients softmax_k(q . tanh(W H_k + b))."""
        if att.weight.cols != H.cols:
            raise ShapeError(f"attention weight {att.weight.shape} does not fit embeddings of width {H.cols}")
        projected = T.tanh(T.add_row(T.matmul(H, T.transpose(att.weight)), att.bias))
        scores = T.transpose(T.matmul(projected, att.query))
        return T.softmax_rows(scores, 1.0)

    @staticmethod
    def rkd_loss(
        hidden_s: Dict[str, Tensor],
        hidden_t: Dict[str, Tensor],
        att: AttentionParams,
        cfg: DistillConfig,
        teacher_corr: Optional[Tensor] = None,
    ) -> Tensor:
        loss, _ = DistillService._rkd_parts(hidden_s, hidden_t, att, cfg, teacher_corr)
        return loss

    @staticmethod
    def teacher_metacorr(hidden_t: Dict[str, Tensor], node_types: Sequence[str], cfg: DistillConfig) -> Tensor:
        frozen = {t: _frozen(hidden_t[t]) for t in node_types}
        return DistillService.metacorr(DistillService.type_mean_embeddings(frozen, node_types), cfg.sigma, cfg.kernel_mode)

    @staticmethod
    def _rkd_parts(hidden_s, hidden_t, att, cfg, teacher_corr=None) -> Tuple[Tensor, Tensor]:
        if set(hidden_s) != set(hidden_t):
            raise SchemaMismatchError(
                f"student types {sorted(hidden_s)} differ from teacher types {sorted(hidden_t)}"
            )
        node_types = list(hidden_s)
        if teacher_corr is None:
            teacher_corr = DistillService.teacher_metacorr(hidden_t, node_types, cfg)
        H_s = DistillService.type_mean_embeddings(hidden_s, node_types)
        corr_s = DistillService.metacorr(H_s, cfg.sigma, cfg.kernel_mode)
        if corr_s.shape != teacher_corr.shape:
            raise ShapeError(f"student correlations {corr_s.shape} vs teacher {teacher_corr.shape}")
        weights = DistillService.type_attention(H_s, att)
        diff = T.sub(corr_s, _frozen(teacher_corr))
        per_type = T.reduce("sum", T.mul(diff, diff), "cols")  # K x 1
        return T.matmul(weights, per_type), weights

    # -------------------------
    # Combined objective
    # -------------------------
    @staticmethod
    def hire_loss(
        student_logits: Tensor,
        student_hidden: Dict[str, Tensor],
        teacher_logits: Tensor,
        teacher_hidden: Dict[str, Tensor],
        labels,
        att: AttentionParams,
        cfg: DistillConfig,
        teacher_corr: Optional[Tensor] = None,
    ) -> Tuple[Tensor, LossParts]:
        """Total loss and its logged parts. Logits and labels are already restricted to the train rows."""
        if not isinstance(cfg, DistillConfig):
            raise ConfigError("hire_loss needs a DistillConfig")
        alpha, beta = cfg.effective()
        nkd, ce, kd = DistillService._nkd_parts(student_logits, teacher_logits, labels, alpha, cfg.tau)

        if beta > 0:
            rkd, weights = DistillService._rkd_parts(student_hidden, teacher_hidden, att, cfg, teacher_corr)
            total = T.add(nkd, T.scale(rkd, beta))
        else:
            # logged only; nothing here reaches the tape
            frozen_hidden = {t: _frozen(h) for t, h in student_hidden.items()}
            rkd, weights = DistillService._rkd_parts(
                frozen_hidden, teacher_hidden, DistillService._frozen_attention(att), cfg, teacher_corr
            )
            total = nkd

        node_types = list(student_hidden)
        H_t = DistillService.type_mean_embeddings({t: _frozen(teacher_hidden[t]) for t in node_types}, node_types)
        teacher_weights = DistillService.type_attention(H_t, DistillService._frozen_attention(att))

        parts = LossParts(
            ce=ce.item(),
            kd=kd.item(),
            rkd=rkd.item(),
            attention=weights.values,
            teacher_attention=teacher_weights.values,
        )
        return total, parts

    @staticmethod
    def _frozen_attention(att: AttentionParams) -> AttentionParams:
        return AttentionParams(T.detach(att.weight), T.detach(att.bias), T.detach(att.query))
