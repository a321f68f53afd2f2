import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from hire.models.graph import HetGraph, Relation, Splits, SyntheticSchema
from hire.utils.errors import ConfigError, DegenerateInputError, ValidationError
from hire.utils.helpers import read_json, stable_hash, write_json
from hire.utils.tensor import Tensor
from hire.utils.validators import validate_float_array, validate_index_array, validate_train_fraction

PRESET_DIR = Path(__file__).resolve().parent.parent / "presets"


class GraphService:
    # -------------------------
    # Ingestion
    # -------------------------
    @staticmethod
    def load_graph(path) -> HetGraph:
        doc = read_json(path)
        return GraphService.graph_from_doc(doc)

    @staticmethod
    def save_graph(g: HetGraph, path) -> Path:
        return write_json(path, g.to_doc(), compact=True)

    @staticmethod
    def graph_from_doc(doc: dict) -> HetGraph:
        """Build, validate and inverse-augment a graph from its JSON document."""
        if not isinstance(doc, dict):
            raise ValidationError("graph document must be a JSON object")
        for key in ("node_types", "features", "relations", "target_type", "num_classes", "labels", "splits"):
            if key not in doc:
                raise ValidationError(f"graph document is missing '{key}'")

        if not isinstance(doc["node_types"], list) or not isinstance(doc["features"], dict):
            raise ValidationError("node_types must be a list and features an object keyed by type")
        if not isinstance(doc["relations"], list) or not isinstance(doc["splits"], dict):
            raise ValidationError("relations must be a list and splits an object")

        node_types, node_counts, features = [], {}, {}
        for entry in doc["node_types"]:
            if not isinstance(entry, dict):
                raise ValidationError(f"node_types entries must be objects, got {entry!r}")
            name, count, dim = entry.get("name"), entry.get("count"), entry.get("feature_dim")
            if not isinstance(name, str) or name in node_counts:
                raise ValidationError(f"node type names must be unique strings, got {name!r}")
            if not isinstance(count, int) or count < 0 or not isinstance(dim, int) or dim < 1:
                raise ValidationError(f"node type '{name}' needs count >= 0 and feature_dim >= 1")
            if name not in doc["features"]:
                raise ValidationError(f"features of '{name}' are missing")
            values = validate_float_array(f"features of '{name}'", doc["features"][name])
            if values.size != count * dim:
                raise ValidationError(f"features of '{name}' must hold count*feature_dim = {count * dim} floats")
            node_types.append(name)
            node_counts[name] = count
            features[name] = Tensor(values.reshape(count, dim))

        target = doc["target_type"]
        if isinstance(target, int) and not isinstance(target, bool) and 0 <= target < len(node_types):
            target = node_types[target]
        if target not in node_counts:
            raise ValidationError(f"target_type {doc['target_type']!r} is not a node type")

        relations = []
        for entry in doc["relations"]:
            if not isinstance(entry, dict):
                raise ValidationError(f"relations entries must be objects, got {entry!r}")
            try:
                relations.append(Relation.create(entry["name"], entry["src"], entry["dst"], entry["edges"]))
            except KeyError as e:
                raise ValidationError(f"relation entry is missing {e}") from e

        splits_doc = doc["splits"]
        splits = Splits.create(splits_doc.get("train", ()), splits_doc.get("val", ()), splits_doc.get("test", ()))
        g = HetGraph(
            node_types=tuple(node_types),
            node_counts=node_counts,
            features=features,
            relations=tuple(relations),
            target_type=target,
            num_classes=doc["num_classes"],
            labels=validate_index_array("labels", doc["labels"]).reshape(-1),
            splits=splits,
        )
        GraphService.validate_graph(g)
        return GraphService.add_inverse_relations(g)

    @staticmethod
    def validate_graph(g: HetGraph):
        if not isinstance(g.num_classes, int) or g.num_classes < 1:
            raise ValidationError(f"num_classes must be a positive integer, got {g.num_classes!r}")
        names = set()
        for rel in g.relations:
            if rel.name in names:
                raise ValidationError(f"duplicate relation name '{rel.name}'")
            names.add(rel.name)
            for side, node_type, column in (("src", rel.src, 0), ("dst", rel.dst, 1)):
                if node_type not in g.node_counts:
                    raise ValidationError(f"relation '{rel.name}' {side} type '{node_type}' is unknown")
                column_values = rel.edges[:, column]
                if column_values.size and (column_values.min() < 0 or column_values.max() >= g.node_counts[node_type]):
                    raise ValidationError(
                        f"relation '{rel.name}' has a {side} index outside [0, {g.node_counts[node_type]})"
                    )
        n_target = g.node_counts[g.target_type]
        if len(g.labels) != n_target:
            raise ValidationError(f"labels length {len(g.labels)} != count of target type ({n_target})")
        if g.labels.size and (g.labels.min() < 0 or g.labels.max() >= g.num_classes):
            raise ValidationError(f"labels must lie in [0, {g.num_classes})")
        seen = set()
        for split_name in ("train", "val", "test"):
            idx = g.splits.get(split_name)
            if idx.size and (idx.min() < 0 or idx.max() >= n_target):
                raise ValidationError(f"split '{split_name}' has indices outside the target nodes")
            members = set(idx.tolist())
            if len(members) != len(idx):
                raise ValidationError(f"split '{split_name}' repeats indices")
            if seen & members:
                raise ValidationError(f"split '{split_name}' overlaps another split")
            seen |= members

    @staticmethod
    def add_inverse_relations(g: HetGraph) -> HetGraph:
        relations = list(g.base_relations())
        existing = {r.name for r in relations}
        for rel in g.base_relations():
            inverse = rel.reversed()
            if inverse.name in existing:
                raise ValidationError(f"relation name '{inverse.name}' collides with a generated inverse")
            relations.append(inverse)
        return g.with_relations(relations)

    @staticmethod
    def neighbor_lists(g: HetGraph, relation: str) -> List[List[int]]:
        rel = g.relation(relation)
        lists: List[List[int]] = [[] for _ in range(g.node_counts[rel.dst])]
        for src, dst in rel.edges.tolist():
            lists[dst].append(src)
        return lists

    @staticmethod
    def schema_fingerprint(g: HetGraph) -> str:
        return stable_hash(g.schema_doc())

    # -------------------------
    # Splits
    # -------------------------
    @staticmethod
    def split_target_nodes(g: HetGraph, train_fraction: float, rng: np.random.Generator) -> HetGraph:
        train_fraction = validate_train_fraction(train_fraction)
        n = g.node_counts[g.target_type]
        if n < g.num_classes:
            raise DegenerateInputError(f"{n} target nodes cannot cover {g.num_classes} classes")
        order = rng.permutation(n)
        n_pool, n_val = (2 * n) // 10, n // 10
        pool = order[:n_pool]
        val = order[n_pool:n_pool + n_val]
        test = order[n_pool + n_val:]
        train = pool[:GraphService._fraction_count(train_fraction, n_pool)]
        return g.with_splits(Splits.create(train, val, test))

    @staticmethod
    def restrict_train(g: HetGraph, train_fraction: float) -> HetGraph:
        """Keep the leading fraction of the stored train pool (no reshuffle)."""
        train_fraction = validate_train_fraction(train_fraction)
        if train_fraction == 1.0:
            return g
        pool = g.splits.train
        keep = pool[:GraphService._fraction_count(train_fraction, len(pool))]
        return g.with_splits(Splits.create(keep, g.splits.val, g.splits.test))

    @staticmethod
    def _fraction_count(fraction: float, size: int) -> int:
        return int(math.floor(fraction * size + 1e-9))

    # -------------------------
    # Synthetic generation
    # -------------------------
    @staticmethod
    def load_schema(source: Union[str, dict], scale: float = 1.0, seed: Optional[int] = None) -> SyntheticSchema:
        """Resolve a preset name, a schema file path, or an inline document (optionally {"preset": ...})."""
        if isinstance(source, dict):
            doc = dict(source)
            preset = doc.pop("preset", None)
            if preset is not None:
                base = GraphService._preset_doc(preset)
                base.update(doc)
                doc = base
        elif isinstance(source, str) and (PRESET_DIR / f"{source}.json").is_file():
            doc = GraphService._preset_doc(source)
        else:
            doc = read_json(source)
        schema = SyntheticSchema.from_doc(doc).scaled(scale)
        return schema.with_seed(seed) if seed is not None else schema

    @staticmethod
    def list_presets() -> List[str]:
        return sorted(p.stem for p in PRESET_DIR.glob("*.json"))

    @staticmethod
    def _preset_doc(name: str) -> dict:
        path = PRESET_DIR / f"{name}.json"
        if not path.is_file():
            raise ConfigError(f"unknown schema preset '{name}' (available: {GraphService.list_presets()})")
        return read_json(path)

    @staticmethod
    def generate_synthetic(schema: SyntheticSchema, rng: Optional[np.random.Generator] = None) -> HetGraph:
        rng = rng if rng is not None else np.random.default_rng(schema.seed)
        C = schema.num_classes
        target = schema.target_type

        for rel in schema.relations:
            pairs = schema.node_counts[rel.src] * schema.node_counts[rel.dst]
            if rel.num_edges > pairs:
                raise ConfigError(
                    f"relation '{rel.name}' asks for {rel.num_edges} edges but only {pairs} node pairs exist"
                )

        latent: Dict[str, np.ndarray] = {}
        for node_type, count in schema.node_counts.items():
            if node_type == target:
                latent[node_type] = rng.integers(0, C, size=count)
            else:
                latent[node_type] = rng.permutation(np.arange(count) % C)
        members = {
            t: [np.flatnonzero(latent[t] == c) for c in range(C)] for t in schema.node_types
        }

        relations = []
        for rel in schema.relations:
            anchor_is_dst = rel.dst == target and rel.src != target
            anchor_type, partner_type = (rel.dst, rel.src) if anchor_is_dst else (rel.src, rel.dst)
            anchors = GraphService._draw_anchors(schema.node_counts[anchor_type], rel.num_edges, rng)
            partners = GraphService._draw_partners(
                latent[anchor_type][anchors], members[partner_type], schema.node_counts[partner_type], schema.p_in, rng
            )
            src_idx, dst_idx = (partners, anchors) if anchor_is_dst else (anchors, partners)
            relations.append(Relation.create(rel.name, rel.src, rel.dst, np.stack([src_idx, dst_idx], axis=1)))

        features = GraphService._draw_features(schema, latent, relations, rng)

        labels = latent[target].copy()
        n_target = schema.node_counts[target]
        n_flip = int(round(schema.label_noise_rate * n_target)) if C > 1 else 0
        if n_flip:
            flipped = rng.choice(n_target, size=n_flip, replace=False)
            labels[flipped] = (labels[flipped] + rng.integers(1, C, size=n_flip)) % C

        g = HetGraph(
            node_types=schema.node_types,
            node_counts=dict(schema.node_counts),
            features=features,
            relations=tuple(relations),
            target_type=target,
            num_classes=C,
            labels=labels,
            splits=Splits.create(),
        )
        GraphService.validate_graph(g)
        g = GraphService.add_inverse_relations(g)
        return GraphService.split_target_nodes(g, 1.0, rng)

    @staticmethod
    def _draw_anchors(count: int, num_edges: int, rng: np.random.Generator) -> np.ndarray:
        # every anchor node is used once before repeats
        if num_edges <= count:
            return rng.permutation(count)[:num_edges]
        return np.concatenate([rng.permutation(count), rng.integers(0, count, size=num_edges - count)])

    @staticmethod
    def _draw_partners(anchor_classes, class_members, partner_count, p_in, rng) -> np.ndarray:
        m = len(anchor_classes)
        partners = rng.integers(0, partner_count, size=m)
        aligned = rng.random(m) < p_in
        for c, pool in enumerate(class_members):
            chosen = aligned & (anchor_classes == c)
            if pool.size and chosen.any():
                partners[chosen] = pool[rng.integers(0, pool.size, size=int(chosen.sum()))]
        return partners

    @staticmethod
    def _draw_features(schema, latent, relations, rng) -> Dict[str, Tensor]:
        C = schema.num_classes
        target = schema.target_type
        features = {}
        for node_type in schema.node_types:
            dim, count = schema.feature_dims[node_type], schema.node_counts[node_type]
            means = rng.standard_normal((C, dim))
            means *= schema.mu / np.maximum(np.linalg.norm(means, axis=1, keepdims=True), 1e-12)

            if node_type == target:
                mixture = np.eye(C)[latent[node_type]]
            else:
                mixture = np.zeros((count, C))
                for rel in relations:
                    if rel.src == node_type and rel.dst == target:
                        own, other = rel.edges[:, 0], rel.edges[:, 1]
                    elif rel.dst == node_type and rel.src == target:
                        own, other = rel.edges[:, 1], rel.edges[:, 0]
                    else:
                        continue
                    np.add.at(mixture, (own, latent[target][other]), 1.0)
                isolated = mixture.sum(axis=1) == 0
                mixture[isolated] = np.eye(C)[latent[node_type][isolated]]
                mixture /= mixture.sum(axis=1, keepdims=True)

            noise = rng.standard_normal((count, dim))
            features[node_type] = Tensor(mixture @ means + noise)
        return features
