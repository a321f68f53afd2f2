from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from hire.utils.errors import DegenerateInputError


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    total: float
    ce: float
    kd: float
    rkd: float
    attention: Sequence[float]          # student-side coefficients, one per node type
    teacher_attention: Sequence[float]  # teacher-side coefficients under the same attention weights
    val_micro_f1: float


@dataclass
class RunHistory:
    """Per-epoch training log.

    Loss columns are measured on the parameters entering the epoch; ``val_micro_f1``
    is measured after that epoch's optimizer step, on the parameters a best-epoch
    selection would keep.
    """

    type_names: Sequence[str]
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None

    def __len__(self):
        return len(self.records)

    def append(self, record: EpochRecord):
        self.records.append(record)

    def history_header(self) -> List[str]:
        return (
            ["epoch", "total", "ce", "kd", "rkd"]
            + [f"att_{t}" for t in self.type_names]
            + [f"tatt_{t}" for t in self.type_names]
            + ["val_micro_f1"]
        )

    def history_rows(self) -> List[list]:
        return [
            [r.epoch, r.total, r.ce, r.kd, r.rkd, *r.attention, *r.teacher_attention, r.val_micro_f1]
            for r in self.records
        ]

    def attention_rows(self) -> List[list]:
        """Tidy (epoch, type, coefficient) rows."""
        if not self.records:
            raise DegenerateInputError("attention trace needs at least one epoch")
        return [
            [r.epoch, name, float(coef)]
            for r in self.records
            for name, coef in zip(self.type_names, r.attention)
        ]


@dataclass(frozen=True)
class MetricsReport:
    micro_f1: float
    macro_f1: float
    nmi: float
    ari: float
    precision: Sequence[float]
    recall: Sequence[float]
    f1: Sequence[float]
    split: str
    seed: int
    cluster_nodes: str = "test"
    num_nodes: int = 0

    def to_doc(self) -> dict:
        return {
            "split": self.split,
            "seed": self.seed,
            "num_nodes": self.num_nodes,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "nmi": self.nmi,
            "ari": self.ari,
            "cluster_nodes": self.cluster_nodes,
            "per_class": {
                "precision": list(self.precision),
                "recall": list(self.recall),
                "f1": list(self.f1),
            },
        }

    @staticmethod
    def from_doc(doc: dict) -> "MetricsReport":
        per_class = doc.get("per_class", {})
        return MetricsReport(
            micro_f1=doc["micro_f1"],
            macro_f1=doc["macro_f1"],
            nmi=doc["nmi"],
            ari=doc["ari"],
            precision=per_class.get("precision", []),
            recall=per_class.get("recall", []),
            f1=per_class.get("f1", []),
            split=doc["split"],
            seed=doc["seed"],
            cluster_nodes=doc.get("cluster_nodes", "test"),
            num_nodes=doc.get("num_nodes", 0),
        )
