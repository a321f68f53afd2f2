from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from hire.config import Config
from hire.models.graph import HetGraph
from hire.models.params import ModelParams, RgcnLayerParams
from hire.utils import tensor as T
from hire.utils.errors import ConfigError
from hire.utils.tensor import Tensor
from hire.utils.validators import validate_choice, validate_range

MODES = ("train", "eval")


@dataclass
class ForwardOutput:
    hidden: Dict[str, Tensor]  # layer-2 embeddings per node type
    logits: Tensor             # target type only


class RgcnService:
    @staticmethod
    def init_params(g: HetGraph, rng: np.random.Generator, hidden_dim: int = Config.HIDDEN_DIM) -> ModelParams:
        """Glorot weights drawn in a fixed order: layer1 relations, layer1 types, layer2, classifier."""
        layers = []
        for layer_index in (1, 2):
            def in_dim(node_type):
                return g.feature_dim(node_type) if layer_index == 1 else hidden_dim

            relation_weights = {r.name: T.glorot_init(in_dim(r.src), hidden_dim, rng) for r in g.relations}
            self_weights = {t: T.glorot_init(in_dim(t), hidden_dim, rng) for t in g.node_types}
            layers.append(RgcnLayerParams(relation_weights, self_weights, activation=(layer_index == 1)))
        classifier_weight = T.glorot_init(hidden_dim, g.num_classes, rng)
        classifier_bias = T.zeros(1, g.num_classes, requires_grad=True)
        return ModelParams(layers[0], layers[1], classifier_weight, classifier_bias)

    @staticmethod
    def rgcn_layer(h_by_type: Dict[str, Tensor], g: HetGraph, params: RgcnLayerParams) -> Dict[str, Tensor]:
        out = {}
        for node_type in g.node_types:
            if node_type not in params.self_weights:
                raise ConfigError(f"no self-loop weight for node type '{node_type}'")
            acc = T.matmul(h_by_type[node_type], params.self_weights[node_type])
            for rel in g.incoming(node_type):
                weight = params.relation_weights.get(rel.name)
                if weight is None:
                    raise ConfigError(f"no weight for relation '{rel.name}'")
                # mean over in-neighbors; rows without neighbors stay zero
                neighbors = T.aggregate(g.adjacency(rel.name), h_by_type[rel.src])
                acc = T.add(acc, T.matmul(neighbors, weight))
            out[node_type] = T.relu(acc) if params.activation else acc
        return out

    @staticmethod
    def forward(
        g: HetGraph,
        params: ModelParams,
        dropout_rate: float = 0.0,
        rng: Optional[np.random.Generator] = None,
        mode: str = "eval",
    ) -> ForwardOutput:
        validate_range("dropout_rate", dropout_rate, 0.0, 1.0, high_open=True)
        validate_choice("mode", mode, MODES)

        h = RgcnService.rgcn_layer(g.features, g, params.layer1)
        if mode == "train" and dropout_rate > 0:
            if rng is None:
                raise ConfigError("train-mode dropout needs an rng")
            keep = 1.0 - dropout_rate
            h = {
                t: T.mul(h[t], Tensor((rng.random(h[t].shape) < keep) / keep))
                for t in g.node_types
            }
        hidden = RgcnService.rgcn_layer(h, g, params.layer2)
        logits = T.add_row(T.matmul(hidden[g.target_type], params.classifier_weight), params.classifier_bias)
        return ForwardOutput(hidden, logits)

    @staticmethod
    def predict(logits) -> np.ndarray:
        values = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
        # np.argmax returns the first maximum
        return np.argmax(values, axis=1)
