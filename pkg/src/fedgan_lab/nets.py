"""Small feed-forward network engine: forward, exact backprop, SGD steps.

Parameters are plain float64 numpy arrays held in ``NetworkParameters``;
gradients travel as a list of ``(dW, db)`` pairs shape-congruent with the
network. Everything is deterministic given the caller's RNG stream, and
nothing here mutates its inputs: every step returns fresh parameter
objects so callers can keep histories cheaply.

The adversarial steps follow the alternating minibatch game: the
discriminator ascends ``mean[ln D(x)] + mean[ln(1 - D(G(z)))]`` and the
generator descends ``mean[ln(1 - D(G(z)))]`` (saturating form; a
non-saturating ``-mean[ln D(G(z))]`` variant is available behind a flag
and is not part of the reference procedure).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

RngStream = np.random.Generator

ACTIVATIONS = ("identity", "leaky-relu", "sigmoid", "tanh", "softmax")

# Discriminator probabilities are pulled inside [LOSS_CLIP, 1-LOSS_CLIP]
# within every loss so saturated outputs cannot emit infinities.
LOSS_CLIP = 1e-7

CHECKPOINT_MAGIC = b"FGANLAB-PARAMS\x00\x00"
CHECKPOINT_VERSION = 1
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


class ShapeMismatchError(ValueError):
    """Array shapes do not chain or do not match their network."""


@dataclass(frozen=True)
class Layer:
    """One affine map plus activation: act(x @ W.T + b)."""

    weights: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]
    activation: str
    slope: float = 0.01  # leaky-relu negative slope; ignored otherwise

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ShapeMismatchError(
                f"bad layer shapes: weights {w.shape}, bias {b.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class NetworkParameters:
    """Ordered stack of layers with chained dimensions."""

    layers: tuple[Layer, ...]

    def __init__(self, layers) -> None:
        layers = tuple(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeMismatchError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim


# Gradient of a scalar loss w.r.t. every (weights, bias) pair, in layer order.
GradientSet = list[tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class TrainingHyperparams:
    """Local-training knobs: epochs L, minibatch size k, rate, noise dim."""

    local_epochs: int = 1
    minibatch_size: int = 32
    learning_rate: float = 0.05
    noise_dim: int = 2
    non_saturating: bool = False  # off = reference saturating generator loss
    dropout: float = 0.0  # hidden-layer drop rate, inverted scaling

    def __post_init__(self) -> None:
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be >= 0")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def _activate(name: str, z: np.ndarray, slope: float) -> np.ndarray:
    if name == "identity":
        return z
    if name == "leaky-relu":
        return np.where(z > 0, z, slope * z)
    if name == "sigmoid":
        return _stable_sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "softmax":
        return _softmax(z)
    raise ValueError(f"unknown activation {name!r}")


def _activation_vjp(
    name: str, z: np.ndarray, a: np.ndarray, d_a: np.ndarray, slope: float
) -> np.ndarray:
    """Pull a gradient on activations back to the pre-activations."""
    if name == "identity":
        return d_a
    if name == "leaky-relu":
        return d_a * np.where(z > 0, 1.0, slope)
    if name == "sigmoid":
        return d_a * a * (1.0 - a)
    if name == "tanh":
        return d_a * (1.0 - a * a)
    if name == "softmax":
        return a * (d_a - np.sum(d_a * a, axis=1, keepdims=True))
    raise ValueError(f"unknown activation {name!r}")


def _as_batch(batch, expected_dim: int) -> np.ndarray:
    arr = np.asarray(batch, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ShapeMismatchError("batch must be a non-empty [k x dim] matrix")
    if arr.shape[1] != expected_dim:
        raise ShapeMismatchError(
            f"batch dim {arr.shape[1]} does not match input dim {expected_dim}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("batch entries must be finite")
    return arr


def _forward_trace(
    net: NetworkParameters,
    batch: np.ndarray,
    masks: list[np.ndarray | None] | None = None,
):
    """Run the net keeping per-layer pre-activations, raw activations,
    and the values actually fed forward (raw times dropout mask).

    masks, when given, multiply the corresponding layer's activations
    (inverted-scaling dropout); entries may be None for no mask.
    """
    pre, raw, fed = [], [], []
    a = batch
    for i, layer in enumerate(net.layers):
        z = a @ layer.weights.T + layer.bias
        r = _activate(layer.activation, z, layer.slope)
        a = r if masks is None or masks[i] is None else r * masks[i]
        pre.append(z)
        raw.append(r)
        fed.append(a)
    return pre, raw, fed


def forward(net: NetworkParameters, batch) -> np.ndarray:
    """Push a [k x in_dim] batch through the network."""
    arr = _as_batch(batch, net.in_dim)
    _, _, fed = _forward_trace(net, arr)
    return fed[-1]


def _backprop(
    net: NetworkParameters,
    batch: np.ndarray,
    pre: list[np.ndarray],
    raw: list[np.ndarray],
    fed: list[np.ndarray],
    d_out: np.ndarray,
    masks: list[np.ndarray | None] | None = None,
    d_pre_last: np.ndarray | None = None,
) -> GradientSet:
    """Reverse walk computing (dW, db) per layer from an output gradient.

    d_pre_last, when given, replaces the last layer's activation VJP
    (used for the fused softmax cross-entropy gradient).
    """
    grads: GradientSet = [None] * len(net.layers)  # type: ignore[list-item]
    d_a = d_out
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if i == len(net.layers) - 1 and d_pre_last is not None:
            d_z = d_pre_last
        else:
            if masks is not None and masks[i] is not None:
                d_a = d_a * masks[i]
            d_z = _activation_vjp(layer.activation, pre[i], raw[i], d_a, layer.slope)
        below = fed[i - 1] if i > 0 else batch
        grads[i] = (d_z.T @ below, d_z.sum(axis=0))
        if i > 0:
            d_a = d_z @ layer.weights
    return grads


def _clip_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, LOSS_CLIP, 1.0 - LOSS_CLIP)


def backward(
    net: NetworkParameters,
    batch,
    loss_tag: str,
    *,
    targets=None,
) -> GradientSet:
    """Exact reverse-mode gradients of the tagged scalar loss.

    loss tags:
      disc-loss       ascent objective mean_real[ln D] + mean_fake[ln(1-D)];
                      ``targets`` marks rows 1=real, 0=generated.
      gen-loss        descent loss mean[ln(1-out)] where the net is the
                      generator stacked under a frozen discriminator
                      (see ``stack_networks``); no targets.
      gen-loss-nonsat descent loss -mean[ln out] (non-saturating variant).
      classifier-ce   mean cross-entropy against integer ``targets``;
                      the final layer must be softmax.
    """
    arr = _as_batch(batch, net.in_dim)
    pre, raw, fed = _forward_trace(net, arr)
    out = fed[-1]
    k = arr.shape[0]

    if loss_tag == "disc-loss":
        if targets is None:
            raise ValueError("disc-loss needs 0/1 targets per row")
        t = np.asarray(targets, dtype=float).reshape(-1)
        if t.shape[0] != k:
            raise ShapeMismatchError("targets length must match batch count")
        if net.out_dim != 1:
            raise ShapeMismatchError("disc-loss expects a 1-d output")
        d = out[:, 0]
        inside = (d > LOSS_CLIP) & (d < 1.0 - LOSS_CLIP)
        dc = _clip_probs(d)
        n_real = max(t.sum(), 1.0)
        n_fake = max((1.0 - t).sum(), 1.0)
        d_a = np.where(inside, t / (n_real * dc) - (1.0 - t) / (n_fake * (1.0 - dc)), 0.0)
        return _backprop(net, arr, pre, raw, fed, d_a[:, None])

    if loss_tag in ("gen-loss", "gen-loss-nonsat"):
        if net.out_dim != 1:
            raise ShapeMismatchError("generator losses expect a 1-d output")
        d = out[:, 0]
        inside = (d > LOSS_CLIP) & (d < 1.0 - LOSS_CLIP)
        dc = _clip_probs(d)
        if loss_tag == "gen-loss":
            d_a = np.where(inside, -1.0 / (k * (1.0 - dc)), 0.0)
        else:
            d_a = np.where(inside, -1.0 / (k * dc), 0.0)
        return _backprop(net, arr, pre, raw, fed, d_a[:, None])

    if loss_tag == "classifier-ce":
        if targets is None:
            raise ValueError("classifier-ce needs integer labels")
        if net.layers[-1].activation != "softmax":
            raise ValueError("classifier-ce expects a softmax output layer")
        y = np.asarray(targets, dtype=int).reshape(-1)
        if y.shape[0] != k:
            raise ShapeMismatchError("labels length must match batch count")
        onehot = np.zeros_like(out)
        onehot[np.arange(k), y] = 1.0
        d_pre = (out - onehot) / k
        return _backprop(net, arr, pre, raw, fed, None, d_pre_last=d_pre)

    raise ValueError(f"unknown loss tag {loss_tag!r}")


def sample_noise(rng: RngStream, k: int, dim: int) -> np.ndarray:
    """k i.i.d. standard-Gaussian rows of the given dimension."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return rng.standard_normal((k, dim))


def disc_objective(disc: NetworkParameters, real, fake) -> float:
    """mean[ln D(real)] + mean[ln(1 - D(fake))], probabilities clipped."""
    d_real = _clip_probs(forward(disc, real)[:, 0])
    d_fake = _clip_probs(forward(disc, fake)[:, 0])
    return float(np.mean(np.log(d_real)) + np.mean(np.log(1.0 - d_fake)))


def gen_objective(
    disc: NetworkParameters, gen: NetworkParameters, noise, *, non_saturating: bool = False
) -> float:
    """Generator loss on a noise batch through the frozen discriminator."""
    d_fake = _clip_probs(forward(disc, forward(gen, noise))[:, 0])
    if non_saturating:
        return float(-np.mean(np.log(d_fake)))
    return float(np.mean(np.log(1.0 - d_fake)))


def zeros_like_grads(net: NetworkParameters) -> GradientSet:
    return [
        (np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers
    ]


def grad_l2_norm(grads: GradientSet) -> float:
    """Global L2 norm over every weight and bias entry."""
    total = 0.0
    for dw, db in grads:
        total += float(np.sum(dw * dw)) + float(np.sum(db * db))
    return float(np.sqrt(total))


def scale_grads(grads: GradientSet, factor: float) -> GradientSet:
    return [(dw * factor, db * factor) for dw, db in grads]


def apply_update(
    net: NetworkParameters, grads: GradientSet, step: float
) -> NetworkParameters:
    """Return net with every parameter moved by step * gradient.

    Positive step ascends the differentiated objective; callers pass a
    negative step to descend.
    """
    if len(grads) != len(net.layers):
        raise ShapeMismatchError("gradient set does not match network")
    new_layers = []
    for layer, (dw, db) in zip(net.layers, grads):
        if dw.shape != layer.weights.shape or db.shape != layer.bias.shape:
            raise ShapeMismatchError("gradient shapes do not match network")
        new_layers.append(
            replace(layer, weights=layer.weights + step * dw, bias=layer.bias + step * db)
        )
    return NetworkParameters(new_layers)


def stack_networks(
    lower: NetworkParameters, upper: NetworkParameters
) -> NetworkParameters:
    """Compose upper(lower(x)) as a single network."""
    if lower.out_dim != upper.in_dim:
        raise ShapeMismatchError(
            f"cannot stack: {lower.out_dim} -> {upper.in_dim}"
        )
    return NetworkParameters(lower.layers + upper.layers)


def _dropout_masks(
    net: NetworkParameters,
    k: int,
    rate: float,
    rng: RngStream,
    trainable_layers: int | None = None,
) -> list[np.ndarray | None] | None:
    """Inverted-scaling dropout masks for hidden layers, or None if off."""
    if rate <= 0.0:
        return None
    n = len(net.layers) if trainable_layers is None else trainable_layers
    masks: list[np.ndarray | None] = [None] * len(net.layers)
    for i in range(n - 1):  # never drop the (sub)net output layer
        keep = (rng.random((k, net.layers[i].out_dim)) >= rate).astype(float)
        masks[i] = keep / (1.0 - rate)
    return masks


def discriminator_grads(
    disc: NetworkParameters,
    gen: NetworkParameters,
    real,
    noise,
    *,
    dropout: float = 0.0,
    rng: RngStream | None = None,
) -> tuple[GradientSet, float]:
    """Ascent gradient of the discriminator objective and its value."""
    real_arr = _as_batch(real, disc.in_dim)
    noise_arr = _as_batch(noise, gen.in_dim)
    if real_arr.shape[0] != noise_arr.shape[0]:
        raise ShapeMismatchError("real and noise batch counts must match")
    fake = forward(gen, noise_arr)
    objective = disc_objective(disc, real_arr, fake)

    stacked = np.vstack([real_arr, fake])
    targets = np.concatenate(
        [np.ones(real_arr.shape[0]), np.zeros(fake.shape[0])]
    )
    if dropout > 0.0:
        if rng is None:
            raise ValueError("dropout needs an RNG stream")
        masks = _dropout_masks(disc, stacked.shape[0], dropout, rng)
        grads = _backward_with_masks(disc, stacked, targets, masks)
    else:
        grads = backward(disc, stacked, "disc-loss", targets=targets)
    return grads, objective


def discriminator_step(
    disc: NetworkParameters,
    gen: NetworkParameters,
    real,
    noise,
    learning_rate: float,
    *,
    dropout: float = 0.0,
    rng: RngStream | None = None,
) -> tuple[NetworkParameters, float]:
    """One ascent step of the discriminator on a (real, noise) pair.

    Returns the updated discriminator and the pre-step objective value.
    """
    grads, objective = discriminator_grads(
        disc, gen, real, noise, dropout=dropout, rng=rng
    )
    return apply_update(disc, grads, +learning_rate), objective


def _backward_with_masks(disc, stacked, targets, masks) -> GradientSet:
    # disc-loss gradient with dropout masks threaded through the trace
    pre, raw, fed = _forward_trace(disc, stacked, masks)
    d = fed[-1][:, 0]
    t = targets
    inside = (d > LOSS_CLIP) & (d < 1.0 - LOSS_CLIP)
    dc = _clip_probs(d)
    n_real = max(t.sum(), 1.0)
    n_fake = max((1.0 - t).sum(), 1.0)
    d_a = np.where(inside, t / (n_real * dc) - (1.0 - t) / (n_fake * (1.0 - dc)), 0.0)
    return _backprop(disc, stacked, pre, raw, fed, d_a[:, None], masks=masks)


def generator_grads(
    disc: NetworkParameters,
    gen: NetworkParameters,
    noise,
    *,
    non_saturating: bool = False,
) -> tuple[GradientSet, float]:
    """Descent gradient of the generator loss and its value."""
    noise_arr = _as_batch(noise, gen.in_dim)
    objective = gen_objective(disc, gen, noise_arr, non_saturating=non_saturating)
    stacked = stack_networks(gen, disc)
    tag = "gen-loss-nonsat" if non_saturating else "gen-loss"
    full_grads = backward(stacked, noise_arr, tag)
    return full_grads[: len(gen.layers)], objective


def generator_step(
    disc: NetworkParameters,
    gen: NetworkParameters,
    noise,
    learning_rate: float,
    *,
    non_saturating: bool = False,
) -> tuple[NetworkParameters, float]:
    """One descent step of the generator through the frozen discriminator.

    Returns the updated generator and the pre-step loss; the
    discriminator is untouched.
    """
    gen_grads, objective = generator_grads(
        disc, gen, noise, non_saturating=non_saturating
    )
    return apply_update(gen, gen_grads, -learning_rate), objective


def init_mlp(
    dims: list[int],
    rng: RngStream,
    *,
    hidden_activation: str = "leaky-relu",
    output_activation: str = "identity",
    slope: float = 0.01,
    scale: float | None = None,
) -> NetworkParameters:
    """Gaussian-initialized MLP with dims [in, h1, ..., out]."""
    if len(dims) < 2:
        raise ValueError("dims needs at least input and output sizes")
    layers = []
    for i in range(len(dims) - 1):
        fan_in = dims[i]
        std = scale if scale is not None else 1.0 / np.sqrt(fan_in)
        w = rng.standard_normal((dims[i + 1], fan_in)) * std
        b = np.zeros(dims[i + 1])
        act = output_activation if i == len(dims) - 2 else hidden_activation
        layers.append(Layer(w, b, act, slope))
    return NetworkParameters(layers)


def toy_gan_architecture(
    data_dim: int, noise_dim: int, rng: RngStream, *, hidden: int = 32
) -> tuple[NetworkParameters, NetworkParameters]:
    """Default desk-scale pair: 2 hidden layers of `hidden` units each."""
    disc = init_mlp(
        [data_dim, hidden, hidden, 1],
        rng,
        hidden_activation="leaky-relu",
        output_activation="sigmoid",
    )
    gen = init_mlp(
        [noise_dim, hidden, hidden, data_dim],
        rng,
        hidden_activation="tanh",
        output_activation="identity",
    )
    return disc, gen


def fullscale_gan_architecture(
    rng: RngStream,
) -> tuple[NetworkParameters, NetworkParameters]:
    """Named full-scale preset: 64x64 grayscale inputs, 64-d noise.

    Shipped for documentation and shape experiments; the desk-scale
    suites never train it.
    """
    disc = init_mlp(
        [64 * 64, 128, 128, 128, 128, 128, 1],
        rng,
        hidden_activation="leaky-relu",
        output_activation="sigmoid",
    )
    gen = init_mlp(
        [64, 256, 256, 256, 128, 128, 64 * 64],
        rng,
        hidden_activation="leaky-relu",
        output_activation="tanh",
    )
    return disc, gen


def congruent(a: NetworkParameters, b: NetworkParameters) -> bool:
    """True when the two networks have identical layer shapes and tags."""
    if len(a.layers) != len(b.layers):
        return False
    for la, lb in zip(a.layers, b.layers):
        if la.weights.shape != lb.weights.shape:
            return False
        if la.activation != lb.activation:
            return False
    return True


def params_to_bytes(net: NetworkParameters) -> bytes:
    """Serialize to the flat little-endian checkpoint wire format."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<B", CHECKPOINT_VERSION)]
    parts.append(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        parts.append(
            struct.pack(
                "<IIBd",
                layer.out_dim,
                layer.in_dim,
                _ACT_CODES[layer.activation],
                layer.slope,
            )
        )
    for layer in net.layers:
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def params_from_bytes(blob: bytes) -> NetworkParameters:
    """Parse the checkpoint wire format back into parameters."""
    if len(blob) < len(CHECKPOINT_MAGIC) + 1:
        raise ValueError("checkpoint truncated")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError("bad checkpoint magic")
    offset = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<B", blob, offset)
    offset += 1
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (n_layers,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if n_layers < 1:
        raise ValueError("checkpoint has no layers")
    headers = []
    for _ in range(n_layers):
        out_dim, in_dim, act_code, slope = struct.unpack_from("<IIBd", blob, offset)
        offset += struct.calcsize("<IIBd")
        if act_code >= len(ACTIVATIONS):
            raise ValueError(f"unknown activation code {act_code}")
        headers.append((out_dim, in_dim, ACTIVATIONS[act_code], slope))
    layers = []
    for out_dim, in_dim, act, slope in headers:
        n_w = out_dim * in_dim
        w = np.frombuffer(blob, dtype="<f8", count=n_w, offset=offset).reshape(
            out_dim, in_dim
        )
        offset += n_w * 8
        b = np.frombuffer(blob, dtype="<f8", count=out_dim, offset=offset)
        offset += out_dim * 8
        layers.append(Layer(w.copy(), b.copy(), act, slope))
    if offset != len(blob):
        raise ValueError("trailing bytes after checkpoint payload")
    return NetworkParameters(layers)


def save_params(net: NetworkParameters, path) -> None:
    with open(path, "wb") as fh:
        fh.write(params_to_bytes(net))


def load_params(path) -> NetworkParameters:
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
