import numpy as np
import pytest

from hire.models.graph import HetGraph, RelationSpec, Splits, SyntheticSchema
from hire.services.graph_service import GraphService
from hire.utils import tensor as T
from hire.utils.tensor import Tape, Tensor


def tiny_graph_doc():
    """4 papers (dim 3) + 2 authors (dim 2), one 'writes' relation, 2 classes."""
    rng = np.random.default_rng(7)
    return {
        "node_types": [
            {"name": "paper", "count": 4, "feature_dim": 3},
            {"name": "author", "count": 2, "feature_dim": 2},
        ],
        "features": {
            "paper": rng.standard_normal(12).tolist(),
            "author": rng.standard_normal(4).tolist(),
        },
        "relations": [
            {"name": "writes", "src": "author", "dst": "paper", "edges": [[0, 0], [0, 1], [1, 2], [1, 3], [0, 3]]},
        ],
        "target_type": "paper",
        "num_classes": 2,
        "labels": [0, 0, 1, 1],
        "splits": {"train": [0, 2], "val": [1], "test": [3]},
    }


@pytest.fixture
def tiny_doc():
    return tiny_graph_doc()


@pytest.fixture
def tiny_graph():
    return GraphService.graph_from_doc(tiny_graph_doc())


def small_schema(**overrides) -> SyntheticSchema:
    fields = dict(
        node_counts={"paper": 120, "author": 60, "field": 6},
        relations=(
            RelationSpec("paper-author", "paper", "author", 240),
            RelationSpec("paper-field", "paper", "field", 120),
        ),
        num_classes=3,
        target_type="paper",
        feature_dims={"paper": 8, "author": 8, "field": 8},
        p_in=0.8,
        mu=3.0,
        seed=0,
        name="small",
    )
    fields.update(overrides)
    return SyntheticSchema(**fields)


@pytest.fixture
def small_graph():
    return GraphService.generate_synthetic(small_schema())


def single_type_graph(n: int, num_classes: int = 3) -> HetGraph:
    return HetGraph(
        node_types=("paper",),
        node_counts={"paper": n},
        features={"paper": T.zeros(n, 1)},
        relations=(),
        target_type="paper",
        num_classes=num_classes,
        labels=np.arange(n) % num_classes,
        splits=Splits.create(),
    )


def check_gradients(loss_fn, leaves, h=1e-5, rtol=1e-4, atol=1e-7):
    """Compare tape gradients of ``loss_fn()`` with central differences for every leaf."""
    for leaf in leaves:
        leaf.zero_grad()
    with Tape():
        loss = loss_fn()
    T.backward(loss)

    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
        base = leaf.data.copy()
        numeric = np.zeros(leaf.shape)
        for idx in np.ndindex(*leaf.shape):
            shifted = base.copy()
            shifted[idx] += h
            leaf.assign(shifted)
            f_plus = loss_fn().item()
            shifted[idx] -= 2 * h
            leaf.assign(shifted)
            f_minus = loss_fn().item()
            numeric[idx] = (f_plus - f_minus) / (2 * h)
        leaf.assign(base)
        # zero exact gradients leave only finite-difference roundoff
        diff = np.linalg.norm(analytic - numeric)
        scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-8)
        assert diff <= atol or diff / scale < rtol, (analytic, numeric)


@pytest.fixture
def gradcheck():
    return check_gradients


def leaf(values) -> Tensor:
    return Tensor(values, requires_grad=True)
