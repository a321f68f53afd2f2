"""
tensor.py - Dense 2-D tensors with a recorded tape for reverse-mode gradients.

Operations executed inside ``with Tape():`` are recorded when at least one
operand requires a gradient. Outside a tape they only compute values, which is
how eval-mode forwards and the frozen teacher run.
"""
import contextvars
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from hire.utils.errors import ConfigError, ContractError, DegenerateInputError, DomainError, ShapeError

_ACTIVE_TAPE: contextvars.ContextVar = contextvars.ContextVar("hire_active_tape", default=None)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Row-major float64 matrix. Values are read-only once created."""

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_node")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got an array of shape {arr.shape}")
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional["Tape"] = None
        self._node: Optional[int] = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def values(self) -> List[float]:
        return self.data.ravel().tolist()

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def assign(self, values: np.ndarray):
        """Rebind a leaf's values (optimizer updates only)."""
        if not self.is_leaf:
            raise ContractError("only leaf tensors can be reassigned")
        arr = np.array(values, dtype=np.float64)
        if arr.shape != self.shape:
            raise ShapeError(f"cannot assign {arr.shape} values to a {self.shape} tensor")
        arr.setflags(write=False)
        self.data = arr

    def zero_grad(self):
        self.grad = None


@dataclass
class _Node:
    kind: str
    parents: Tuple[Tensor, ...]
    backward: BackwardFn


@dataclass
class Tape:
    """Ordered record of operation nodes; parents always precede children."""

    nodes: List[_Node] = field(default_factory=list)

    def __post_init__(self):
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, kind: str, out: Tensor, parents: Tuple[Tensor, ...], backward: BackwardFn):
        out.requires_grad = True
        out._tape = self
        out._node = len(self.nodes)
        self.nodes.append(_Node(kind, parents, backward))


def _emit(kind: str, out_data: np.ndarray, parents: Tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    out = Tensor(out_data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(kind, out, parents, backward)
    return out


def backward(output: Tensor):
    """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if output.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) output, got {output.shape}")
    tape = output._tape
    if tape is None:
        raise ContractError("output was not recorded on a tape")

    pending: Dict[int, np.ndarray] = {output._node: np.ones((1, 1))}
    for index in range(output._node, -1, -1):
        grad = pending.pop(index, None)
        if grad is None:
            continue
        node = tape.nodes[index]
        for parent, parent_grad in zip(node.parents, node.backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                parent.grad = np.array(parent_grad) if parent.grad is None else parent.grad + parent_grad
            elif parent._tape is tape:
                previous = pending.get(parent._node)
                pending[parent._node] = parent_grad if previous is None else previous + parent_grad


def detach(t: Tensor) -> Tensor:
    return Tensor(t.data)


def _same_shape(kind: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


# -------------------------
# Linear algebra
# -------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    a_data, b_data = a.data, b.data
    return _emit("matmul", a_data @ b_data, (a, b), lambda g: (g @ b_data.T, a_data.T @ g))


def transpose(t: Tensor) -> Tensor:
    return _emit("transpose", t.data.T, (t,), lambda g: (g.T,))


def aggregate(adjacency: sparse.spmatrix, t: Tensor) -> Tensor:
    """Constant sparse matrix times tensor; used for mean neighbor aggregation."""
    if adjacency.shape[1] != t.rows:
        raise ShapeError(f"aggregate: adjacency {adjacency.shape} does not match tensor {t.shape}")
    adj_t = adjacency.T.tocsr()
    out = np.asarray(adjacency @ t.data)
    return _emit("aggregate", out, (t,), lambda g: (np.asarray(adj_t @ g),))


# -------------------------
# Elementwise
# -------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return _emit("mul", a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data))


def scale(t: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _emit("scale", t.data * factor, (t,), lambda g: (g * factor,))


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0
    return _emit("relu", np.where(mask, t.data, 0.0), (t,), lambda g: (g * mask,))


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)
    return _emit("tanh", out, (t,), lambda g: (g * (1.0 - out * out),))


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)
    return _emit("exp", out, (t,), lambda g: (g * out,))


def log(t: Tensor) -> Tensor:
    if np.any(t.data <= 0):
        raise DomainError("log: input has non-positive entries")
    x = t.data
    return _emit("log", np.log(x), (t,), lambda g: (g / x,))


_UNARY = {"relu": relu, "tanh": tanh, "exp": exp, "log": log}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(kind: str, *operands, factor: Optional[float] = None) -> Tensor:
    if kind in _UNARY:
        return _UNARY[kind](*operands)
    if kind in _BINARY:
        return _BINARY[kind](*operands)
    if kind == "scale":
        return scale(operands[0], factor if factor is not None else operands[1])
    raise ConfigError(f"unknown elementwise kind '{kind}'")


def add_row(t: Tensor, row: Tensor) -> Tensor:
    """Broadcast a 1 x cols row onto every row of ``t``."""
    if row.rows != 1 or row.cols != t.cols:
        raise ShapeError(f"add_row: row {row.shape} does not broadcast onto {t.shape}")
    return _emit("add_row", t.data + row.data, (t, row), lambda g: (g, g.sum(axis=0, keepdims=True)))


# -------------------------
# Reductions and gathers
# -------------------------

_AXES = {"rows": 0, "cols": 1, "all": None}


def reduce(kind: str, t: Tensor, axis: str = "all") -> Tensor:
    if kind not in ("sum", "mean"):
        raise ConfigError(f"unknown reduction '{kind}'")
    if axis not in _AXES:
        raise ConfigError(f"unknown reduction axis '{axis}'")
    if t.rows == 0 or t.cols == 0:
        raise DegenerateInputError(f"cannot {kind} an empty {t.shape} tensor")

    np_axis = _AXES[axis]
    shape = t.shape
    extent = t.data.size if np_axis is None else shape[np_axis]
    out = t.data.sum(axis=np_axis, keepdims=True) if np_axis is not None else np.array([[t.data.sum()]])
    divisor = float(extent) if kind == "mean" else 1.0
    if kind == "mean":
        out = out / divisor
    return _emit(f"{kind}_{axis}", out, (t,), lambda g: (np.broadcast_to(g / divisor, shape).copy(),))


def sum_all(t: Tensor) -> Tensor:
    return reduce("sum", t, "all")


def mean_rows(t: Tensor) -> Tensor:
    return reduce("mean", t, "rows")


def index_rows(t: Tensor, index) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)
    shape = t.shape

    def _backward(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _emit("index_rows", t.data[idx], (t,), _backward)


def pick(t: Tensor, columns) -> Tensor:
    """Gather entry ``columns[i]`` of each row i into an n x 1 column."""
    cols = np.asarray(columns, dtype=np.int64)
    if cols.shape != (t.rows,):
        raise ShapeError(f"pick: need one column per row ({t.rows}), got {cols.shape}")
    if cols.size and (cols.min() < 0 or cols.max() >= t.cols):
        raise ShapeError(f"pick: column index outside [0, {t.cols})")
    rows = np.arange(t.rows)
    shape = t.shape

    def _backward(g):
        full = np.zeros(shape)
        full[rows, cols] = g[:, 0]
        return (full,)

    return _emit("pick", t.data[rows, cols].reshape(-1, 1), (t,), _backward)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise DegenerateInputError("concat_rows needs at least one tensor")
    widths = {t.cols for t in tensors}
    if len(widths) != 1:
        raise ShapeError(f"concat_rows: column counts differ {sorted(widths)}")
    bounds = np.cumsum([t.rows for t in tensors])[:-1]
    return _emit("concat_rows", np.vstack([t.data for t in tensors]), tuple(tensors),
                 lambda g: tuple(np.split(g, bounds, axis=0)))


def pairwise_sq_dists(h: Tensor) -> Tensor:
    """K x K matrix of squared Euclidean distances between the rows of ``h``."""
    diff = h.data[:, None, :] - h.data[None, :, :]
    out = (diff * diff).sum(axis=2)

    def _backward(g):
        sym = g + g.T
        return (2.0 * (sym[:, :, None] * diff).sum(axis=1),)

    return _emit("pairwise_sq_dists", out, (h,), _backward)


# -------------------------
# Softmax family
# -------------------------

def _check_tau(tau: float):
    if not tau > 0:
        raise ConfigError(f"temperature must be positive, got {tau}")


def softmax_rows(z: Tensor, tau: float = 1.0) -> Tensor:
    _check_tau(tau)
    scaled = z.data / tau
    shifted = np.exp(scaled - scaled.max(axis=1, keepdims=True))
    out = shifted / shifted.sum(axis=1, keepdims=True)

    def _backward(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner) / tau,)

    return _emit("softmax_rows", out, (z,), _backward)


def log_softmax_rows(z: Tensor, tau: float = 1.0) -> Tensor:
    _check_tau(tau)
    scaled = z.data / tau
    out = scaled - logsumexp(scaled, axis=1, keepdims=True)
    probs = np.exp(out)

    def _backward(g):
        return ((g - probs * g.sum(axis=1, keepdims=True)) / tau,)

    return _emit("log_softmax_rows", out, (z,), _backward)


# -------------------------
# Constructors
# -------------------------

def full(rows: int, cols: int, value: float) -> Tensor:
    return Tensor(np.full((rows, cols), float(value)))


def zeros(rows: int, cols: int, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=requires_grad)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> Tensor:
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"glorot_init needs positive dimensions, got ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)
