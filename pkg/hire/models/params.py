from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from hire.utils.errors import SchemaMismatchError, ValidationError
from hire.utils.tensor import Tensor


def _copy(t: Tensor) -> Tensor:
    return Tensor(t.data, requires_grad=True)


@dataclass
class RgcnLayerParams:
    relation_weights: Dict[str, Tensor]
    self_weights: Dict[str, Tensor]
    activation: bool = True

    def named_tensors(self, prefix: str) -> List[Tuple[str, Tensor]]:
        named = [(f"{prefix}.rel.{name}", w) for name, w in self.relation_weights.items()]
        named += [(f"{prefix}.self.{name}", w) for name, w in self.self_weights.items()]
        return named

    def clone(self) -> "RgcnLayerParams":
        return RgcnLayerParams(
            {k: _copy(v) for k, v in self.relation_weights.items()},
            {k: _copy(v) for k, v in self.self_weights.items()},
            self.activation,
        )


@dataclass
class ModelParams:
    layer1: RgcnLayerParams
    layer2: RgcnLayerParams
    classifier_weight: Tensor
    classifier_bias: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.classifier_weight.rows

    @property
    def num_classes(self) -> int:
        return self.classifier_weight.cols

    def named_tensors(self) -> List[Tuple[str, Tensor]]:
        return (
            self.layer1.named_tensors("layer1")
            + self.layer2.named_tensors("layer2")
            + [("classifier.weight", self.classifier_weight), ("classifier.bias", self.classifier_bias)]
        )

    def as_dict(self) -> Dict[str, Tensor]:
        return dict(self.named_tensors())

    def clone(self) -> "ModelParams":
        return ModelParams(
            self.layer1.clone(), self.layer2.clone(), _copy(self.classifier_weight), _copy(self.classifier_bias)
        )

    def zero_grad(self):
        for _, t in self.named_tensors():
            t.zero_grad()

    def to_doc(self) -> Dict[str, dict]:
        return {name: {"shape": list(t.shape), "values": t.values} for name, t in self.named_tensors()}

    @staticmethod
    def from_doc(doc: Dict[str, dict]) -> "ModelParams":
        tensors = _tensors_from_doc(doc)
        layers = {}
        for layer in ("layer1", "layer2"):
            relation_weights, self_weights = {}, {}
            for name, t in tensors.items():
                parts = name.split(".", 2)
                if parts[0] != layer or len(parts) != 3:
                    continue
                (relation_weights if parts[1] == "rel" else self_weights)[parts[2]] = t
            layers[layer] = RgcnLayerParams(relation_weights, self_weights, activation=(layer == "layer1"))
        try:
            return ModelParams(
                layers["layer1"], layers["layer2"], tensors["classifier.weight"], tensors["classifier.bias"]
            )
        except KeyError as e:
            raise ValidationError(f"checkpoint parameters are missing {e}") from e

    def check_compatible(self, g) -> None:
        """Raise SchemaMismatchError unless every weight lines up with the graph."""
        for layer_name, layer in (("layer1", self.layer1), ("layer2", self.layer2)):
            if set(layer.relation_weights) != set(g.relation_names):
                raise SchemaMismatchError(f"{layer_name} relation weights do not match the graph's relations")
            if set(layer.self_weights) != set(g.node_types):
                raise SchemaMismatchError(f"{layer_name} self-loop weights do not match the graph's node types")
        for rel in g.relations:
            if self.layer1.relation_weights[rel.name].rows != g.feature_dim(rel.src):
                raise SchemaMismatchError(f"layer1 weight of '{rel.name}' does not fit '{rel.src}' features")
        for node_type in g.node_types:
            if self.layer1.self_weights[node_type].rows != g.feature_dim(node_type):
                raise SchemaMismatchError(f"layer1 self-loop weight of '{node_type}' does not fit its features")
        if self.num_classes != g.num_classes:
            raise SchemaMismatchError(f"classifier has {self.num_classes} outputs, graph has {g.num_classes} classes")


@dataclass
class AttentionParams:
    weight: Tensor  # d_a x d_hidden
    bias: Tensor    # 1 x d_a
    query: Tensor   # d_a x 1

    def named_tensors(self) -> List[Tuple[str, Tensor]]:
        return [("attention.weight", self.weight), ("attention.bias", self.bias), ("attention.query", self.query)]

    def as_dict(self) -> Dict[str, Tensor]:
        return dict(self.named_tensors())

    def clone(self) -> "AttentionParams":
        return AttentionParams(_copy(self.weight), _copy(self.bias), _copy(self.query))

    def zero_grad(self):
        for _, t in self.named_tensors():
            t.zero_grad()

    def to_doc(self) -> Dict[str, dict]:
        return {name: {"shape": list(t.shape), "values": t.values} for name, t in self.named_tensors()}

    @staticmethod
    def from_doc(doc: Dict[str, dict]) -> "AttentionParams":
        tensors = _tensors_from_doc(doc)
        try:
            return AttentionParams(tensors["attention.weight"], tensors["attention.bias"], tensors["attention.query"])
        except KeyError as e:
            raise ValidationError(f"checkpoint attention parameters are missing {e}") from e


def _tensors_from_doc(doc: Dict[str, dict]) -> Dict[str, Tensor]:
    tensors = {}
    for name, entry in doc.items():
        try:
            rows, cols = entry["shape"]
            values = np.asarray(entry["values"], dtype=np.float64).reshape(rows, cols)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"parameter '{name}' is malformed: {e!r}") from e
        tensors[name] = Tensor(values, requires_grad=True)
    return tensors
