from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import (
    adjusted_rand_score,
    f1_score,
    normalized_mutual_info_score,
    precision_recall_fscore_support,
)
from sklearn.preprocessing import normalize

from hire.config import Config
from hire.models.configs import CLUSTER_SCOPES
from hire.models.graph import HetGraph
from hire.models.params import ModelParams
from hire.models.reports import MetricsReport, RunHistory
from hire.services.rgcn_service import RgcnService
from hire.utils.errors import DegenerateInputError, ShapeError, ValidationError
from hire.utils.helpers import log_line, rng_streams
from hire.utils.tensor import Tensor
from hire.utils.validators import validate_choice


def _labels(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    if arr.size == 0:
        raise DegenerateInputError(f"{name} is empty")
    return arr


def _paired(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a, b = _labels(a, "first labeling"), _labels(b, "second labeling")
    if a.shape != b.shape:
        raise ShapeError(f"labelings differ in length ({a.size} vs {b.size})")
    return a, b


class EvalService:
    # -------------------------
    # Classification
    # -------------------------
    @staticmethod
    def micro_macro_f1(pred, gold, num_classes: int) -> Tuple[float, float, Dict[str, List[float]]]:
        pred, gold = _paired(pred, gold)
        for name, arr in (("predictions", pred), ("gold labels", gold)):
            if arr.min() < 0 or arr.max() >= num_classes:
                raise ValidationError(f"{name} must lie in [0, {num_classes})")
        labels = list(range(num_classes))
        precision, recall, f1, _ = precision_recall_fscore_support(
            gold, pred, labels=labels, average=None, zero_division=0
        )
        micro = f1_score(gold, pred, labels=labels, average="micro", zero_division=0)
        per_class = {"precision": precision.tolist(), "recall": recall.tolist(), "f1": f1.tolist()}
        return float(micro), float(np.mean(f1)), per_class

    @staticmethod
    def micro_f1(pred, gold, num_classes: int) -> float:
        return EvalService.micro_macro_f1(pred, gold, num_classes)[0]

    # -------------------------
    # Clustering
    # -------------------------
    @staticmethod
    def kmeans(
        embeddings,
        k: int,
        rng: np.random.Generator,
        max_iters: int = Config.KMEANS_MAX_ITERS,
        restarts: int = Config.KMEANS_RESTARTS,
    ) -> np.ndarray:
        """L2-normalise rows (zero rows stay zero), then seeded k-means++ / Lloyd, best of ``restarts``."""
        X = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError(f"kmeans needs an n x d matrix, got shape {X.shape}")
        if k < 1 or X.shape[0] < k:
            raise DegenerateInputError(f"cannot form {k} clusters from {X.shape[0]} points")
        if k == 1:
            return np.zeros(X.shape[0], dtype=np.int64)
        model = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=restarts,
            max_iter=max_iters,
            tol=0.0,
            algorithm="lloyd",
            random_state=int(rng.integers(0, 2**31 - 1)),
        )
        return model.fit_predict(normalize(X, norm="l2")).astype(np.int64)

    @staticmethod
    def nmi(a, b) -> float:
        a, b = _paired(a, b)
        return float(normalized_mutual_info_score(a, b, average_method="arithmetic"))

    @staticmethod
    def ari(a, b) -> float:
        a, b = _paired(a, b)
        return float(adjusted_rand_score(a, b))

    # -------------------------
    # Reports
    # -------------------------
    @staticmethod
    def evaluate_model(
        g: HetGraph,
        params: ModelParams,
        split: str = "test",
        seed: int = 0,
        cluster_nodes: str = "test",
        rng: Optional[np.random.Generator] = None,
    ) -> MetricsReport:
        validate_choice("cluster_nodes", cluster_nodes, CLUSTER_SCOPES)
        params.check_compatible(g)
        idx = g.splits.get(split)
        if idx.size == 0:
            raise DegenerateInputError(f"split '{split}' is empty")

        out = RgcnService.forward(g, params, mode="eval")
        pred = RgcnService.predict(out.logits)
        micro, macro, per_class = EvalService.micro_macro_f1(pred[idx], g.labels[idx], g.num_classes)

        # "test" scope clusters the evaluated split's nodes
        nodes = idx if cluster_nodes == "test" else np.arange(g.node_counts[g.target_type])
        rng = rng if rng is not None else rng_streams(seed)["kmeans"]
        k = min(g.num_classes, int(nodes.size))
        if k < g.num_classes:
            log_line("EVAL", f"only {nodes.size} {split} nodes, clustering into {k} groups", level="warn")
        clusters = EvalService.kmeans(out.hidden[g.target_type].data[nodes], k, rng)
        gold = g.labels[nodes]

        return MetricsReport(
            micro_f1=micro,
            macro_f1=macro,
            nmi=EvalService.nmi(clusters, gold),
            ari=EvalService.ari(clusters, gold),
            precision=per_class["precision"],
            recall=per_class["recall"],
            f1=per_class["f1"],
            split=split,
            seed=seed,
            cluster_nodes=cluster_nodes,
            num_nodes=int(idx.size),
        )

    @staticmethod
    def attention_trace(history: RunHistory) -> List[list]:
        return history.attention_rows()

    @staticmethod
    def summarize(values: Sequence[float]) -> Tuple[float, float]:
        """Mean and population standard deviation."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.size == 0:
            raise DegenerateInputError("nothing to summarize")
        return float(arr.mean()), float(arr.std(ddof=0))
