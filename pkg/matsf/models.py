"""stacked-LSTM forecasters, the feed-forward discriminator, and checkpoints

Gate blocks are packed as (input, forget, cell, output) along the first
axis of W_gates / U_gates / b_gates. Hidden and cell state start at zero for
every window.
"""
from __future__ import annotations
import io
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
from . import tensor_core as tc
from .tensor_core import TensorNode
from .utils.exceptions import ConfigError, ContractError, DimensionError, InputError
from .utils.utils import STREAM_DISCRIMINATOR, STREAM_FORECASTER, make_rng

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'MATSFCKPT'
CHECKPOINT_VERSION = 1
FORGET_BIAS = 1.0
GATES = ('input', 'forget', 'cell', 'output')


class Activation(str, Enum):
    RELU = 'relu'
    SIGMOID = 'sigmoid'


class LstmLayerParams:
    """one LSTM layer: W_gates [4h x in], U_gates [4h x h], b_gates [4h]"""

    def __init__(self, input_size: int, hidden_size: int,
        W_gates: np.ndarray, U_gates: np.ndarray, b_gates: np.ndarray,
        prefix: str='lstm'):
        self.input_size = int(input_size)
        self.hidden_size = int(hidden_size)
        h4 = 4 * self.hidden_size
        if np.shape(W_gates) != (h4, self.input_size) \
            or np.shape(U_gates) != (h4, self.hidden_size) \
            or np.shape(b_gates) != (h4,):
            raise DimensionError(f"LSTM layer {input_size}->{hidden_size} got W {np.shape(W_gates)}, "
                f"U {np.shape(U_gates)}, b {np.shape(b_gates)}")
        self.W_gates = tc.parameter(W_gates, name=f'{prefix}.W_gates')
        self.U_gates = tc.parameter(U_gates, name=f'{prefix}.U_gates')
        self.b_gates = tc.parameter(b_gates, name=f'{prefix}.b_gates')

    def parameters(self) -> List[TensorNode]:
        return [self.W_gates, self.U_gates, self.b_gates]


class DenseLayer:
    """W [out x in], b [out], followed by relu or sigmoid"""

    def __init__(self, W: np.ndarray, b: np.ndarray,
        activation: Union[str, Activation], prefix: str='dense'):
        if np.ndim(W) != 2 or np.shape(b) != (np.shape(W)[0],):
            raise DimensionError(f"dense layer got W {np.shape(W)} and b {np.shape(b)}")
        self.W = tc.parameter(W, name=f'{prefix}.W')
        self.b = tc.parameter(b, name=f'{prefix}.b')
        self.activation = Activation(activation)

    @property
    def in_size(self) -> int:
        return self.W.shape[1]

    @property
    def out_size(self) -> int:
        return self.W.shape[0]

    def parameters(self) -> List[TensorNode]:
        return [self.W, self.b]


class ForecasterModel:
    """stacked LSTM + linear head

    :param target_index: the variable this model forecasts, or 'all' for the
        multi-output network (then out is the number of variables)
    """
    kind = 'forecaster'

    def __init__(self, layers: List[LstmLayerParams],
        head_W: np.ndarray, head_b: np.ndarray,
        target_index: Union[int, str]=0):
        if not layers:
            raise ConfigError("a forecaster needs at least one LSTM layer")
        for k in range(1, len(layers)):
            if layers[k].input_size != layers[k - 1].hidden_size:
                raise DimensionError(f"layer {k} input_size {layers[k].input_size} != "
                    f"layer {k - 1} hidden_size {layers[k - 1].hidden_size}")
        out = np.shape(head_W)[0]
        if np.shape(head_W) != (out, layers[-1].hidden_size) or np.shape(head_b) != (out,):
            raise DimensionError(f"head got W {np.shape(head_W)} and b {np.shape(head_b)}")
        if target_index != 'all' and out != 1:
            raise ConfigError(f"single-variable forecaster must have out=1, got {out}")
        self.layers = layers
        self.head_W = tc.parameter(head_W, name='head.W')
        self.head_b = tc.parameter(head_b, name='head.b')
        self.out = out
        self.target_index = target_index

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    def parameters(self) -> List[TensorNode]:
        params = [p for layer in self.layers for p in layer.parameters()]
        return params + [self.head_W, self.head_b]

    def architecture(self) -> Dict[str, Any]:
        return dict(kind=self.kind,
            input_size=self.input_size,
            hidden_sizes=[l.hidden_size for l in self.layers],
            out=self.out,
            target_index=self.target_index)

    def forward(self, window: Union[np.ndarray, TensorNode]) -> TensorNode:
        return forecaster_forward(self, window)


class DiscriminatorModel:
    """feed-forward classifier scoring a d-vector as real (1) or forecast (0)"""
    kind = 'discriminator'

    def __init__(self, layers: List[DenseLayer]):
        if not layers:
            raise ConfigError("a discriminator needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].in_size != layers[k - 1].out_size:
                raise DimensionError(f"discriminator layer {k} width {layers[k].in_size} "
                    f"!= previous output {layers[k - 1].out_size}")
        last = layers[-1]
        if last.out_size != 1 or last.activation != Activation.SIGMOID:
            raise ConfigError("the final discriminator layer must be 1 sigmoid unit")
        self.layers = layers

    @property
    def input_size(self) -> int:
        return self.layers[0].in_size

    def parameters(self) -> List[TensorNode]:
        return [p for layer in self.layers for p in layer.parameters()]

    def architecture(self) -> Dict[str, Any]:
        return dict(kind=self.kind,
            input_size=self.input_size,
            hidden_sizes=[l.out_size for l in self.layers[:-1]],
            activations=[l.activation.value for l in self.layers])

    def forward(self, v: Union[np.ndarray, TensorNode]) -> TensorNode:
        return discriminator_forward(self, v)


###############
### forward ###
###############

def _lstm_step(x: TensorNode, h: TensorNode, c: TensorNode,
    Wt: TensorNode, Ut: TensorNode, b: TensorNode, hidden: int
    ) -> Tuple[TensorNode, TensorNode]:
    z = tc.add(tc.add(tc.matmul(x, Wt), tc.matmul(h, Ut)), b)
    i = tc.sigmoid(tc.take(z, 0, hidden, axis=1))
    f = tc.sigmoid(tc.take(z, hidden, 2 * hidden, axis=1))
    g = tc.tanh(tc.take(z, 2 * hidden, 3 * hidden, axis=1))
    o = tc.sigmoid(tc.take(z, 3 * hidden, 4 * hidden, axis=1))
    c_next = tc.add(tc.mul(f, c), tc.mul(i, g))
    h_next = tc.mul(o, tc.tanh(c_next))
    return h_next, c_next


def lstm_cell_forward(x_t: Union[np.ndarray, TensorNode],
    h: Union[np.ndarray, TensorNode],
    c: Union[np.ndarray, TensorNode],
    params: LstmLayerParams) -> Tuple[TensorNode, TensorNode]:
    """one LSTM step; accepts vectors or [batch x size] matrices"""
    x_t, h, c = (tc._as_node(v) for v in (x_t, h, c))
    vector = x_t.values.ndim == 1
    if vector:
        x_t = tc.reshape(x_t, (1, -1))
        h = tc.reshape(h, (1, -1))
        c = tc.reshape(c, (1, -1))
    H = params.hidden_size
    if x_t.shape[-1] != params.input_size or h.shape[-1] != H or c.shape[-1] != H \
        or not (x_t.shape[0] == h.shape[0] == c.shape[0]):
        raise DimensionError(f"lstm_cell_forward: x {x_t.shape}, h {h.shape}, c {c.shape} "
            f"do not match layer {params.input_size}->{H}")
    h_next, c_next = _lstm_step(x_t, h, c,
        tc.transpose(params.W_gates), tc.transpose(params.U_gates),
        params.b_gates, H)
    if vector:
        h_next = tc.reshape(h_next, (H,))
        c_next = tc.reshape(c_next, (H,))
    return h_next, c_next


def forecaster_forward(model: ForecasterModel,
    window: Union[np.ndarray, TensorNode]) -> TensorNode:
    """[batch x lookback x features] -> [batch x out]"""
    values = window.values if isinstance(window, TensorNode) else np.asarray(window, dtype=np.float64)
    if values.ndim != 3 or 0 in values.shape:
        raise ContractError(f"window must be a non-empty [batch x lookback x features] array, "
            f"got shape {values.shape}")
    batch, lookback, features = values.shape
    if features != model.input_size:
        raise DimensionError(f"window has {features} features, model expects {model.input_size}")
    inputs = [tc.constant(values[:, t, :]) for t in range(lookback)]
    for layer in model.layers:
        H = layer.hidden_size
        Wt, Ut = tc.transpose(layer.W_gates), tc.transpose(layer.U_gates)
        h = tc.constant(np.zeros((batch, H)))
        c = tc.constant(np.zeros((batch, H)))
        outputs = []
        for x in inputs:
            h, c = _lstm_step(x, h, c, Wt, Ut, layer.b_gates, H)
            outputs.append(h)
        inputs = outputs
    return tc.add(tc.matmul(inputs[-1], tc.transpose(model.head_W)), model.head_b)


def discriminator_forward(model: DiscriminatorModel,
    v: Union[np.ndarray, TensorNode]) -> TensorNode:
    """[batch x d] -> [batch x 1] scores in (0, 1)"""
    h = tc._as_node(v)
    if h.values.ndim != 2 or h.shape[1] != model.input_size:
        raise DimensionError(f"discriminator expects [batch x {model.input_size}], got {h.shape}")
    for layer in model.layers:
        z = tc.add(tc.matmul(h, tc.transpose(layer.W)), layer.b)
        h = tc.relu(z) if layer.activation == Activation.RELU else tc.sigmoid(z)
    return h


############
### init ###
############

def init_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))"""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape))


def _positive(spec: Dict, *names: str):
    for name in names:
        value = spec.get(name)
        values = value if isinstance(value, (list, tuple)) else [value]
        if value is None or not values or any(
            not isinstance(v, (int, np.integer)) or v <= 0 for v in values):
            raise ConfigError(f"{name} must be positive integer(s), got {value!r}")


def init_model(spec: Dict[str, Any], seed: int
    ) -> Union[ForecasterModel, DiscriminatorModel]:
    """build a model from an architecture description with seeded uniform weights

    :param spec: {'kind': 'forecaster', 'input_size', 'hidden_sizes', 'out',
        'target_index'} or {'kind': 'discriminator', 'input_size',
        'hidden_sizes'}
    :param seed: the run seed; each forecaster draws from the Philox stream
        of its target variable so models are independent of their position
    """
    kind = spec.get('kind', 'forecaster')
    if kind == 'forecaster':
        _positive(spec, 'input_size', 'hidden_sizes')
        spec = dict(spec)
        spec.setdefault('out', 1)
        spec.setdefault('target_index', 0)
        _positive(spec, 'out')
        target = spec['target_index']
        rng = make_rng(seed, STREAM_FORECASTER, target if isinstance(target, int) else 0)
        layers, fan = [], spec['input_size']
        for k, H in enumerate(spec['hidden_sizes']):
            b = init_uniform(rng, (4 * H,), H)
            b[H:2 * H] = FORGET_BIAS
            layers.append(LstmLayerParams(fan, H,
                init_uniform(rng, (4 * H, fan), fan),
                init_uniform(rng, (4 * H, H), H),
                b, prefix=f'layer{k}'))
            fan = H
        head_W = init_uniform(rng, (spec['out'], fan), fan)
        head_b = init_uniform(rng, (spec['out'],), fan)
        return ForecasterModel(layers, head_W, head_b, target_index=target)
    elif kind == 'discriminator':
        _positive(spec, 'input_size')
        hidden = list(spec.get('hidden_sizes', [4 * spec['input_size']] * 2))
        if hidden:
            _positive(dict(hidden_sizes=hidden), 'hidden_sizes')
        rng = make_rng(seed, STREAM_DISCRIMINATOR)
        widths = [spec['input_size']] + hidden + [1]
        layers = []
        for k in range(len(widths) - 1):
            fan, out = widths[k], widths[k + 1]
            act = Activation.SIGMOID if k == len(widths) - 2 else Activation.RELU
            layers.append(DenseLayer(init_uniform(rng, (out, fan), fan),
                init_uniform(rng, (out,), fan), act, prefix=f'dense{k}'))
        return DiscriminatorModel(layers)
    else:
        raise ConfigError(f"unknown model kind {kind!r}")


def state_dict(model: Union[ForecasterModel, DiscriminatorModel]) -> Dict[str, np.ndarray]:
    return {p.name: p.values.copy() for p in model.parameters()}


def load_state_dict(model: Union[ForecasterModel, DiscriminatorModel],
    arrays: Dict[str, np.ndarray]):
    for p in model.parameters():
        if p.name not in arrays:
            raise InputError(f"parameter {p.name} missing from state")
        value = np.asarray(arrays[p.name], dtype=np.float64)
        if value.shape != p.shape:
            raise DimensionError(f"parameter {p.name}: stored {value.shape} vs model {p.shape}")
        p.values = value.copy()


def model_from_architecture(spec: Dict[str, Any],
    arrays: Optional[Dict[str, np.ndarray]]=None
    ) -> Union[ForecasterModel, DiscriminatorModel]:
    model = init_model(spec, seed=0)
    if arrays is not None:
        load_state_dict(model, arrays)
    return model


###################
### checkpoints ###
###################

def save_checkpoint(path: Union[str, Path],
    forecasters: Sequence[ForecasterModel],
    discriminator: Optional[DiscriminatorModel]=None,
    meta: Optional[Dict[str, Any]]=None) -> Path:
    """magic + uint16 version + npz body (parameters and a JSON metadata blob)"""
    path = Path(path)
    meta = dict(meta or {})
    meta['forecasters'] = [m.architecture() for m in forecasters]
    meta['discriminator'] = discriminator.architecture() if discriminator else None
    arrays = {}
    for k, m in enumerate(forecasters):
        arrays.update({f'forecaster{k}/{n}': v for n, v in state_dict(m).items()})
    if discriminator is not None:
        arrays.update({f'discriminator/{n}': v for n, v in state_dict(discriminator).items()})
    arrays['__meta__'] = np.frombuffer(
        json.dumps(meta, sort_keys=True, default=str).encode(), dtype=np.uint8)
    body = io.BytesIO()
    np.savez(body, **arrays)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(CHECKPOINT_MAGIC + np.uint16(CHECKPOINT_VERSION).tobytes() + body.getvalue())
    logger.info(f"checkpoint written to {path} ({len(forecasters)} forecasters)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Dict[str, Any]:
    """returns {'meta', 'forecasters', 'discriminator'}"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as e:
        raise InputError(f"checkpoint {path} does not exist") from e
    head = len(CHECKPOINT_MAGIC)
    if raw[:head] != CHECKPOINT_MAGIC:
        raise InputError(f"{path} is not a matsf checkpoint")
    version = int(np.frombuffer(raw[head:head + 2], dtype=np.uint16)[0])
    if version != CHECKPOINT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    with np.load(io.BytesIO(raw[head + 2:]), allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    meta = json.loads(arrays.pop('__meta__').tobytes().decode())

    def prefixed(prefix: str) -> Dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    forecasters = [model_from_architecture(spec, prefixed(f'forecaster{k}/'))
        for k, spec in enumerate(meta['forecasters'])]
    disc = None
    if meta.get('discriminator'):
        disc = model_from_architecture(meta['discriminator'], prefixed('discriminator/'))
    return dict(meta=meta, forecasters=forecasters, discriminator=disc)


def build_forecasters(input_size: int, hidden_sizes: Sequence[int], n_variables: int,
    seed: int, multi_output: bool=False) -> List[ForecasterModel]:
    """d single-output forecasters, or one network with a d-wide head"""
    if multi_output:
        return [init_model(dict(kind='forecaster', input_size=input_size,
            hidden_sizes=list(hidden_sizes), out=n_variables, target_index='all'), seed)]
    return [init_model(dict(kind='forecaster', input_size=input_size,
        hidden_sizes=list(hidden_sizes), out=1, target_index=i), seed)
        for i in range(n_variables)]


def build_discriminator(n_variables: int, hidden_sizes: Optional[Sequence[int]]=None,
    seed: int=0) -> DiscriminatorModel:
    spec: Dict[str, Any] = dict(kind='discriminator', input_size=n_variables)
    if hidden_sizes is not None:
        spec['hidden_sizes'] = list(hidden_sizes)
    return init_model(spec, seed)
