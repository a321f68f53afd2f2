from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse

from hire.utils.errors import ConfigError, ValidationError
from hire.utils.tensor import Tensor
from hire.utils.validators import validate_index_array, validate_positive_int, validate_range

INVERSE_SUFFIX = "-inv"


def _index_array(values, name: str) -> np.ndarray:
    return validate_index_array(name, values).reshape(-1)


@dataclass(frozen=True, eq=False)
class Relation:
    name: str
    src: str
    dst: str
    edges: np.ndarray  # m x 2 (src_index, dst_index)
    inverse_of: Optional[str] = None

    @staticmethod
    def create(name, src, dst, edges, inverse_of=None) -> "Relation":
        arr = validate_index_array(f"relation '{name}' edges", edges)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError(f"relation '{name}': edges must be [src, dst] pairs")
        arr.setflags(write=False)
        return Relation(name, src, dst, arr, inverse_of)

    @property
    def triple(self) -> Tuple[str, str, str]:
        return (self.src, self.name, self.dst)

    def reversed(self) -> "Relation":
        return Relation.create(self.name + INVERSE_SUFFIX, self.dst, self.src, self.edges[:, ::-1], inverse_of=self.name)

    def to_doc(self) -> dict:
        return {"name": self.name, "src": self.src, "dst": self.dst, "edges": self.edges.tolist()}


@dataclass(frozen=True, eq=False)
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @staticmethod
    def create(train=(), val=(), test=()) -> "Splits":
        return Splits(_index_array(train, "train split"), _index_array(val, "val split"), _index_array(test, "test split"))

    def get(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise ValidationError(f"unknown split '{name}'")
        return getattr(self, name)

    def sizes(self) -> Dict[str, int]:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}

    def to_doc(self) -> dict:
        return {"train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}


@dataclass(frozen=True, eq=False)
class HetGraph:
    node_types: Tuple[str, ...]
    node_counts: Dict[str, int]
    features: Dict[str, Tensor]
    relations: Tuple[Relation, ...]
    target_type: str
    num_classes: int
    labels: np.ndarray
    splits: Splits
    _adjacency: Dict[str, sparse.csr_matrix] = field(default_factory=dict, repr=False, compare=False)

    @property
    def target_index(self) -> int:
        return self.node_types.index(self.target_type)

    @property
    def relation_names(self) -> List[str]:
        return [r.name for r in self.relations]

    def feature_dim(self, node_type: str) -> int:
        return self.features[node_type].cols

    def relation(self, name: str) -> Relation:
        for rel in self.relations:
            if rel.name == name:
                return rel
        raise ValidationError(f"unknown relation '{name}'")

    def incoming(self, node_type: str) -> List[Relation]:
        return [r for r in self.relations if r.dst == node_type]

    def adjacency(self, name: str) -> sparse.csr_matrix:
        """Row-normalised (n_dst x n_src) matrix; row u averages u's in-neighbors with multiplicity."""
        if name not in self._adjacency:
            rel = self.relation(name)
            n_dst, n_src = self.node_counts[rel.dst], self.node_counts[rel.src]
            counts = sparse.coo_matrix(
                (np.ones(len(rel.edges)), (rel.edges[:, 1], rel.edges[:, 0])), shape=(n_dst, n_src)
            ).tocsr()
            degree = np.asarray(counts.sum(axis=1)).ravel()
            inverse = np.divide(1.0, degree, out=np.zeros_like(degree), where=degree > 0)
            self._adjacency[name] = (sparse.diags(inverse) @ counts).tocsr()
        return self._adjacency[name]

    def with_splits(self, splits: Splits) -> "HetGraph":
        return replace(self, splits=splits, _adjacency=dict(self._adjacency))

    def with_relations(self, relations) -> "HetGraph":
        return replace(self, relations=tuple(relations), _adjacency={})

    def base_relations(self) -> List[Relation]:
        return [r for r in self.relations if r.inverse_of is None]

    def schema_doc(self) -> dict:
        return {
            "types": [[name, self.node_counts[name]] for name in self.node_types],
            "relations": [list(r.triple) for r in self.relations],
            "num_classes": self.num_classes,
        }

    def to_doc(self) -> dict:
        return {
            "node_types": [
                {"name": name, "count": self.node_counts[name], "feature_dim": self.feature_dim(name)}
                for name in self.node_types
            ],
            "features": {name: self.features[name].values for name in self.node_types},
            "relations": [r.to_doc() for r in self.base_relations()],
            "target_type": self.target_type,
            "num_classes": self.num_classes,
            "labels": self.labels.tolist(),
            "splits": self.splits.to_doc(),
        }


@dataclass(frozen=True)
class RelationSpec:
    name: str
    src: str
    dst: str
    num_edges: int


@dataclass(frozen=True)
class SyntheticSchema:
    node_counts: Dict[str, int]
    relations: Tuple[RelationSpec, ...]
    num_classes: int
    target_type: str
    feature_dims: Dict[str, int]
    p_in: float = 0.7
    mu: float = 1.0
    label_noise_rate: float = 0.0
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if self.target_type not in self.node_counts:
            raise ConfigError(f"target type '{self.target_type}' is not a node type")
        validate_positive_int("num_classes", self.num_classes)
        for node_type, count in self.node_counts.items():
            validate_positive_int(f"node count of '{node_type}'", count)
            validate_positive_int(f"feature dim of '{node_type}'", self.feature_dims.get(node_type))
        for rel in self.relations:
            if rel.src not in self.node_counts or rel.dst not in self.node_counts:
                raise ConfigError(f"relation '{rel.name}' references an unknown node type")
            validate_positive_int(f"edge count of '{rel.name}'", rel.num_edges, minimum=0)
        validate_range("p_in", self.p_in, 0.0, 1.0, low_open=True, high_open=True)
        validate_range("mu", self.mu, 0.0)
        validate_range("label_noise_rate", self.label_noise_rate, 0.0, 1.0, high_open=True)

    @property
    def node_types(self) -> Tuple[str, ...]:
        return tuple(self.node_counts)

    def scaled(self, factor: float) -> "SyntheticSchema":
        """Shrink counts for quick runs; node counts stay >= num_classes, edge counts >= 1."""
        validate_range("scale", factor, 0.0, 1.0, low_open=True)
        if factor == 1.0:
            return self
        counts = {k: max(self.num_classes, int(v * factor)) for k, v in self.node_counts.items()}
        relations = tuple(
            replace(r, num_edges=min(max(1, int(r.num_edges * factor)), counts[r.src] * counts[r.dst]))
            for r in self.relations
        )
        return replace(self, node_counts=counts, relations=relations)

    def with_seed(self, seed: int) -> "SyntheticSchema":
        return replace(self, seed=int(seed))

    @staticmethod
    def from_doc(doc: dict) -> "SyntheticSchema":
        try:
            node_counts = {t["name"]: int(t["count"]) for t in doc["node_types"]}
            feature_dims = {t["name"]: int(t.get("feature_dim", 16)) for t in doc["node_types"]}
            relations = tuple(
                RelationSpec(r["name"], r["src"], r["dst"], int(r["edges"])) for r in doc["relations"]
            )
            return SyntheticSchema(
                node_counts=node_counts,
                relations=relations,
                num_classes=int(doc["num_classes"]),
                target_type=doc["target_type"],
                feature_dims=feature_dims,
                p_in=float(doc.get("p_in", 0.7)),
                mu=float(doc.get("mu", 1.0)),
                label_noise_rate=float(doc.get("label_noise_rate", 0.0)),
                seed=int(doc.get("seed", 0)),
                name=doc.get("name", "custom"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid schema document: {e!r}") from e

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "node_types": [
                {"name": t, "count": c, "feature_dim": self.feature_dims[t]} for t, c in self.node_counts.items()
            ],
            "relations": [{"name": r.name, "src": r.src, "dst": r.dst, "edges": r.num_edges} for r in self.relations],
            "num_classes": self.num_classes,
            "target_type": self.target_type,
            "p_in": self.p_in,
            "mu": self.mu,
            "label_noise_rate": self.label_noise_rate,
            "seed": self.seed,
        }
