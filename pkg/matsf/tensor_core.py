"""dense float64 tensors with reverse-mode differentiation and first-order
optimizers

Graphs are built fresh on every forward pass: each op returns a new
TensorNode that remembers its parents and a closure mapping the upstream
gradient to one gradient per parent. `backward` walks the graph once in
reverse topological order and accumulates into the requires_grad leaves.
"""
from __future__ import annotations
import logging
import threading
from contextlib import contextmanager
from enum import Enum
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union
import numpy as np
from .utils.exceptions import ContractError, DimensionError, DomainError, ConfigError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence, float, int]
GradFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad() -> Iterator[None]:
    """ops inside the block record no graph (per thread)"""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextmanager
def frozen(params: Iterable['TensorNode']) -> Iterator[None]:
    """the given parameters act as constants inside the block"""
    params = list(params)
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


class TensorNode:
    """a dense row-major float64 array participating in a differentiation graph

    :param values: anything np.asarray accepts; 0-d input becomes shape (1,)
    :param requires_grad: whether backward accumulates into `grad`
    :param name: label used in error messages and graph inspection
    """
    __slots__ = ('values', 'grad', 'requires_grad', 'name',
        '_parents', '_grad_fn', 'op')
    __array_priority__ = 1000

    def __init__(self, values: ArrayLike,
        requires_grad: bool=False,
        name: Optional[str]=None):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if 0 in arr.shape:
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        self.values = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple[TensorNode, ...] = ()
        self._grad_fn: Optional[GradFn] = None
        self.op: Optional[str] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_leaf(self) -> bool:
        return self._grad_fn is None

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def backward(self):
        backward(self)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ''
        return f"TensorNode(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other): return add(self, _as_node(other))
    def __radd__(self, other): return add(_as_node(other), self)
    def __sub__(self, other): return sub(self, _as_node(other))
    def __rsub__(self, other): return sub(_as_node(other), self)
    def __mul__(self, other):
        if isinstance(other, (int, float)): return scale(self, other)
        return mul(self, _as_node(other))
    def __rmul__(self, other):
        if isinstance(other, (int, float)): return scale(self, other)
        return mul(_as_node(other), self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, _as_node(other))


def _as_node(x: Union[TensorNode, ArrayLike]) -> TensorNode:
    return x if isinstance(x, TensorNode) else TensorNode(x)


def constant(values: ArrayLike, name: Optional[str]=None) -> TensorNode:
    return TensorNode(values, requires_grad=False, name=name)


def parameter(values: ArrayLike, name: Optional[str]=None) -> TensorNode:
    return TensorNode(values, requires_grad=True, name=name)


def _result(values: np.ndarray, op: str,
    parents: Sequence[TensorNode], grad_fn: GradFn) -> TensorNode:
    out = TensorNode.__new__(TensorNode)
    out.values = values
    out.grad = None
    out.name = None
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
    return out


######################
### shape handling ###
######################

def _broadcast_kind(a: TensorNode, b: TensorNode, op: str) -> str:
    """'same', 'row_b' (b is a row vector over a's rows) or 'row_a'"""
    if a.shape == b.shape:
        return 'same'
    if a.values.ndim == 2 and b.values.ndim == 1 and b.shape[0] == a.shape[1]:
        return 'row_b'
    if b.values.ndim == 2 and a.values.ndim == 1 and a.shape[0] == b.shape[1]:
        return 'row_a'
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are incompatible "
        "(only identical shapes or a row vector broadcast across rows)")


def _reduce(g: np.ndarray, kind: str, side: str) -> np.ndarray:
    if (kind == 'row_b' and side == 'b') or (kind == 'row_a' and side == 'a'):
        return g.sum(axis=0)
    return g


###########################
### elementwise (binary) ###
###########################

def add(a: TensorNode, b: TensorNode) -> TensorNode:
    kind = _broadcast_kind(a, b, 'add')
    def grad_fn(g):
        return _reduce(g, kind, 'a'), _reduce(g, kind, 'b')
    return _result(a.values + b.values, 'add', (a, b), grad_fn)


def sub(a: TensorNode, b: TensorNode) -> TensorNode:
    kind = _broadcast_kind(a, b, 'sub')
    def grad_fn(g):
        return _reduce(g, kind, 'a'), -_reduce(g, kind, 'b')
    return _result(a.values - b.values, 'sub', (a, b), grad_fn)


def mul(a: TensorNode, b: TensorNode) -> TensorNode:
    kind = _broadcast_kind(a, b, 'mul')
    av, bv = a.values, b.values
    def grad_fn(g):
        return _reduce(g * bv, kind, 'a'), _reduce(g * av, kind, 'b')
    return _result(av * bv, 'mul', (a, b), grad_fn)


##########################
### elementwise (unary) ###
##########################

def neg(x: TensorNode) -> TensorNode:
    return _result(-x.values, 'neg', (x,), lambda g: (-g,))


def scale(x: TensorNode, c: float) -> TensorNode:
    c = float(c)
    return _result(x.values * c, 'scale', (x,), lambda g: (g * c,))


def shift(x: TensorNode, c: float) -> TensorNode:
    c = float(c)
    return _result(x.values + c, 'shift', (x,), lambda g: (g,))


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x: TensorNode) -> TensorNode:
    s = _stable_sigmoid(x.values)
    return _result(s, 'sigmoid', (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: TensorNode) -> TensorNode:
    t = np.tanh(x.values)
    return _result(t, 'tanh', (x,), lambda g: (g * (1.0 - t * t),))


def relu(x: TensorNode) -> TensorNode:
    mask = x.values > 0
    return _result(np.where(mask, x.values, 0.0), 'relu', (x,),
        lambda g: (g * mask,))


def log(x: TensorNode) -> TensorNode:
    if np.any(x.values <= 0) or np.any(np.isnan(x.values)):
        raise DomainError(f"log of non-positive input (min={np.nanmin(x.values)!r})")
    v = x.values
    return _result(np.log(v), 'log', (x,), lambda g: (g / v,))


def clip(x: TensorNode, lo: float=-np.inf, hi: float=np.inf) -> TensorNode:
    """clamps values; gradient flows only where the input was inside [lo, hi]"""
    inside = (x.values >= lo) & (x.values <= hi)
    return _result(np.clip(x.values, lo, hi), 'clip', (x,),
        lambda g: (g * inside,))


ELEMENTWISE = {
    'add': add,
    'sub': sub,
    'mul': mul,
    'sigmoid': sigmoid,
    'tanh': tanh,
    'log': log,
    'neg': neg,
}


def elementwise(op: str, *args: TensorNode) -> TensorNode:
    """dispatch by op name: add, sub, mul, sigmoid, tanh, log, neg"""
    fn = ELEMENTWISE.get(op)
    if fn is None:
        raise NotImplementedError(f"unknown elementwise op {op!r}")
    return fn(*args)


##############
### linear ###
##############

def matmul(a: TensorNode, b: TensorNode) -> TensorNode:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    av, bv = a.values, b.values
    def grad_fn(g):
        return g @ bv.T, av.T @ g
    return _result(av @ bv, 'matmul', (a, b), grad_fn)


def transpose(x: TensorNode) -> TensorNode:
    if x.values.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {x.shape}")
    return _result(np.ascontiguousarray(x.values.T), 'transpose', (x,),
        lambda g: (g.T,))


def reshape(x: TensorNode, shape: Sequence[int]) -> TensorNode:
    old = x.shape
    try:
        v = x.values.reshape(tuple(shape))
    except ValueError as e:
        raise DimensionError(f"cannot reshape {old} into {tuple(shape)}") from e
    return _result(v, 'reshape', (x,), lambda g: (g.reshape(old),))


#########################
### structural (axes) ###
#########################

def concat(parts: Sequence[TensorNode], axis: int=0) -> TensorNode:
    parts = list(parts)
    if not parts:
        raise ContractError("concat needs at least one part")
    if len(parts) == 1:
        return parts[0]
    ndim = parts[0].values.ndim
    if not -ndim <= axis < ndim:
        raise DimensionError(f"concat axis {axis} out of range for {ndim}-d parts")
    axis = axis % ndim
    ref = parts[0].shape
    for p in parts[1:]:
        if p.values.ndim != ndim or any(p.shape[k] != ref[k]
            for k in range(ndim) if k != axis):
            raise DimensionError(f"concat along axis {axis}: extents "
                f"{[q.shape for q in parts]} disagree off-axis")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))
    return _result(np.concatenate([p.values for p in parts], axis=axis),
        'concat', parts, grad_fn)


def take(x: TensorNode, start: int, stop: int, axis: int=0) -> TensorNode:
    """the slice [start, stop) along one axis"""
    ndim = x.values.ndim
    axis = axis % ndim
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"take [{start}, {stop}) out of range for extent "
            f"{x.shape[axis]} on axis {axis}")
    index = tuple(slice(start, stop) if k == axis else slice(None)
        for k in range(ndim))
    full = x.shape
    def grad_fn(g):
        out = np.zeros(full)
        out[index] = g
        return (out,)
    return _result(x.values[index].copy(), 'take', (x,), grad_fn)


def split(x: TensorNode, sizes: Sequence[int], axis: int=0) -> List[TensorNode]:
    """inverse of concat: cut x into consecutive pieces of the given extents"""
    if int(np.sum(sizes)) != x.shape[axis % x.values.ndim]:
        raise DimensionError(f"split sizes {list(sizes)} do not sum to extent "
            f"{x.shape[axis % x.values.ndim]}")
    out, start = [], 0
    for s in sizes:
        out.append(take(x, start, start + s, axis=axis))
        start += s
    return out


##################
### reductions ###
##################

def sum(x: TensorNode) -> TensorNode:
    shape = x.shape
    return _result(np.array([x.values.sum()]), 'sum', (x,),
        lambda g: (np.full(shape, g[0]),))


def mean(x: TensorNode) -> TensorNode:
    shape, n = x.shape, x.size
    return _result(np.array([x.values.mean()]), 'mean', (x,),
        lambda g: (np.full(shape, g[0] / n),))


################
### backward ###
################

def topological_order(root: TensorNode) -> List[TensorNode]:
    """nodes reachable from root, parents before children (iterative DFS)"""
    order: List[TensorNode] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: TensorNode):
    """accumulate d(root)/d(leaf) into every requires_grad leaf reachable from root

    Intermediate gradients live only for the duration of the call, so
    calling backward twice on one graph doubles the leaf gradients.
    """
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.values)}
    for node in reversed(topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def zero_grad(params: Iterable[TensorNode]):
    for p in params:
        p.grad = None


def gradcheck(fn: Callable[[], TensorNode], params: Sequence[TensorNode],
    h: float=1e-5) -> float:
    """max relative error between backward() gradients and central
    differences (f(x+h) - f(x-h)) / 2h over every element of every param

    :param fn: closure rebuilding the scalar graph from the current values
    """
    zero_grad(params)
    backward(fn())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.values) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.values)
        flat = p.values.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            with no_grad():
                up = fn().item()
            flat[k] = orig - h
            with no_grad():
                down = fn().item()
            flat[k] = orig
            numeric.reshape(-1)[k] = (up - down) / (2 * h)
        denom = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    zero_grad(params)
    return worst


##################
### optimizers ###
##################

class OptimizerKind(str, Enum):
    SGD = 'sgd'
    ADAM = 'adam'


class OptimizerState:
    """plain SGD or bias-corrected Adam; moment buffers are created lazily
    per parameter and keyed by identity

    :param kind: 'sgd' or 'adam'
    :param learning_rate: step size, > 0
    """
    def __init__(self, kind: Union[str, OptimizerKind]=OptimizerKind.SGD,
        learning_rate: float=1e-3,
        adam_beta1: float=0.9,
        adam_beta2: float=0.999,
        adam_epsilon: float=1e-8):
        try:
            self.kind = OptimizerKind(str(getattr(kind, 'value', kind)).lower())
        except ValueError as e:
            raise ConfigError(f"unknown optimizer {kind!r}; takes 'sgd' or 'adam'") from e
        if not learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {learning_rate}")
        if not (0 <= adam_beta1 < 1 and 0 <= adam_beta2 < 1):
            raise ConfigError(f"adam betas must lie in [0, 1), got {adam_beta1}, {adam_beta2}")
        self.learning_rate = float(learning_rate)
        self.adam_beta1 = float(adam_beta1)
        self.adam_beta2 = float(adam_beta2)
        self.adam_epsilon = float(adam_epsilon)
        self.steps = 0
        self.first_moment: Dict[int, np.ndarray] = {}
        self.second_moment: Dict[int, np.ndarray] = {}

    def step(self, params: Sequence[TensorNode]):
        optimizer_step(self, params)


def optimizer_step(state: OptimizerState, params: Sequence[TensorNode]):
    """update params in place from their grads, then clear the grads"""
    for k, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"parameter {p.name or k!r} has no gradient; "
                "run backward before optimizer_step")
    state.steps += 1
    lr = state.learning_rate
    if state.kind == OptimizerKind.SGD:
        for p in params:
            p.values -= lr * p.grad
    else:
        b1, b2, eps, t = state.adam_beta1, state.adam_beta2, state.adam_epsilon, state.steps
        for p in params:
            key = id(p)
            m = state.first_moment.get(key)
            v = state.second_moment.get(key)
            if m is None:
                m = np.zeros_like(p.values)
                v = np.zeros_like(p.values)
            m = b1 * m + (1 - b1) * p.grad
            v = b2 * v + (1 - b2) * p.grad * p.grad
            state.first_moment[key], state.second_moment[key] = m, v
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
    zero_grad(params)
