from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

from hire.config import Config
from hire.utils.errors import ConfigError
from hire.utils.validators import (
    validate_choice,
    validate_known_keys,
    validate_positive_int,
    validate_range,
    validate_train_fraction,
)

VARIANTS = ("CE", "NKD", "RKD", "HIRE")
KERNEL_MODES = ("exact", "taylor2")
SELECTION_MODES = ("best_val", "last")
CLUSTER_SCOPES = ("test", "all")

# Grids searched for the distillation weights
DISTILL_GRIDS = {
    "tau": [float(t) for t in range(1, 11)],
    "alpha": [round(0.1 * i, 1) for i in range(11)],
    "beta": [0.01, 0.1, 1.0, 10.0, 100.0],
}
# Baseline training grids (optional extra sweep axes)
TRAINING_GRIDS = {
    "lr": [0.0001, 0.001, 0.01, 0.1],
    "weight_decay": [0.0001, 0.001, 0.01, 0.1],
    "dropout": [round(0.1 * i, 1) for i in range(10)],
    "train_fraction": [0.2, 0.4, 0.6, 0.8],
}
# Distillation weights for the acm-like noisy-label benchmark; sigma matches the spread of untrained type means
BENCHMARK_DISTILL = {"alpha": 0.5, "beta": 100.0, "tau": 8.0, "sigma": 4.0, "kernel_mode": "exact"}


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 0.5
    beta: float = 1.0
    tau: float = 8.0
    sigma: float = 1.0
    kernel_mode: str = "exact"
    variant: str = "HIRE"
    attention_dim: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", str(self.variant).upper())
        validate_range("alpha", self.alpha, 0.0, 1.0)
        validate_range("beta", self.beta, 0.0)
        validate_range("tau", self.tau, 1.0)
        validate_range("sigma", self.sigma, 0.0, low_open=True)
        validate_choice("kernel_mode", self.kernel_mode, KERNEL_MODES)
        validate_choice("variant", self.variant, VARIANTS)
        if self.attention_dim is not None:
            validate_positive_int("attention_dim", self.attention_dim)

    def effective(self) -> Tuple[float, float]:
        """(alpha, beta) after variant gating."""
        if self.variant == "CE":
            return 0.0, 0.0
        if self.variant == "NKD":
            return float(self.alpha), 0.0
        if self.variant == "RKD":
            return 0.0, float(self.beta)
        return float(self.alpha), float(self.beta)

    def to_doc(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_doc(doc: dict) -> "DistillConfig":
        validate_known_keys("distill", doc, DistillConfig.__dataclass_fields__)
        return DistillConfig(**doc)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.0
    epochs: int = 200
    seed: int = 0
    distill: DistillConfig = field(default_factory=DistillConfig)
    train_fraction: float = 1.0
    hidden_dim: int = Config.HIDDEN_DIM
    select: str = "best_val"

    def __post_init__(self):
        validate_range("learning_rate", self.learning_rate, 0.0, low_open=True)
        validate_range("weight_decay", self.weight_decay, 0.0)
        validate_range("dropout", self.dropout, 0.0, 1.0, high_open=True)
        validate_positive_int("epochs", self.epochs)
        validate_positive_int("seed", self.seed, minimum=0)
        validate_train_fraction(self.train_fraction)
        validate_positive_int("hidden_dim", self.hidden_dim)
        validate_choice("select", self.select, SELECTION_MODES)

    def with_distill(self, **changes) -> "TrainConfig":
        return replace(self, distill=replace(self.distill, **changes))

    def to_doc(self) -> dict:
        doc = asdict(self)
        doc["distill"] = self.distill.to_doc()
        return doc

    @staticmethod
    def from_doc(doc: dict) -> "TrainConfig":
        validate_known_keys("train", doc, TrainConfig.__dataclass_fields__)
        doc = dict(doc)
        if "distill" in doc:
            doc["distill"] = DistillConfig.from_doc(doc["distill"])
        return TrainConfig(**doc)


_EXPERIMENT_KEYS = (
    "dataset", "schema", "scale", "graph_seed", "train", "distill", "out",
    "variants", "seeds", "grids", "cluster_nodes",
)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Optional[str] = None
    schema: Optional[Union[str, dict]] = None
    scale: float = 1.0
    graph_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str = Config.OUT_DIR
    variants: Tuple[str, ...] = VARIANTS
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    grids: Dict[str, List[float]] = field(default_factory=lambda: dict(DISTILL_GRIDS))
    cluster_nodes: str = "test"

    def __post_init__(self):
        if (self.dataset is None) == (self.schema is None):
            raise ConfigError("experiment config needs exactly one of 'dataset' or 'schema'")
        validate_range("scale", self.scale, 0.0, 1.0, low_open=True)
        validate_positive_int("graph_seed", self.graph_seed, minimum=0)
        for variant in self.variants:
            validate_choice("variant", str(variant).upper(), VARIANTS)
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        for axis, values in self.grids.items():
            validate_choice("grid axis", axis, tuple(DISTILL_GRIDS) + tuple(TRAINING_GRIDS))
            if not values:
                raise ConfigError(f"grid '{axis}' is empty")
        validate_choice("cluster_nodes", self.cluster_nodes, CLUSTER_SCOPES)

    @staticmethod
    def from_doc(doc: dict) -> "ExperimentConfig":
        validate_known_keys("experiment config", doc, _EXPERIMENT_KEYS)
        doc = dict(doc)
        train_doc = dict(doc.pop("train", {}))
        if "distill" in doc:
            train_doc["distill"] = doc.pop("distill")
        doc["train"] = TrainConfig.from_doc(train_doc)
        for key in ("variants", "seeds"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "grids" in doc:
            doc["grids"] = {axis: list(values) for axis, values in doc["grids"].items()}
        try:
            return ExperimentConfig(**doc)
        except TypeError as e:
            raise ConfigError(f"invalid experiment config: {e}") from e

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Apply CLI flags; ``None`` values leave the file's setting in place."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        train_keys = {"seed": "seed", "train_fraction": "train_fraction", "epochs": "epochs"}
        distill_keys = {"alpha": "alpha", "beta": "beta", "tau": "tau", "sigma": "sigma",
                        "kernel": "kernel_mode", "variant": "variant"}
        train = self.train
        distill_changes = {distill_keys[k]: v for k, v in overrides.items() if k in distill_keys}
        if distill_changes:
            train = train.with_distill(**distill_changes)
        train_changes = {train_keys[k]: v for k, v in overrides.items() if k in train_keys}
        if train_changes:
            train = replace(train, **train_changes)
        top = {k: v for k, v in overrides.items() if k in ("scale", "out", "cluster_nodes")}
        return replace(self, train=train, **top)
