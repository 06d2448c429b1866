"""Neural building blocks: embeddings, GRU, pooling, attention, losses.

All layers run on the numerics tape so every gradient in the repo is
produced by the in-house reverse-mode engine and checked against finite
differences.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .errors import DataError
from .numerics import Parameter, Tensor

_MASK_NEG = 1e30  # added negatively to scores at padded positions before max/softmax
_PROB_FLOOR = 1e-7  # probability clip for loss stability


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _valid_mask(lengths: np.ndarray, n_steps: int, dtype) -> np.ndarray:
    """(batch, n_steps) 1.0/0.0 mask of positions inside each valid prefix."""
    lengths = np.asarray(lengths)
    return (np.arange(n_steps)[None, :] < lengths[:, None]).astype(dtype)


class EmbeddingLayer:
    """Token-id lookup table; the padding row stays zero and gets no gradient."""

    def __init__(
        self,
        vocab_size: int,
        dim: int,
        rng: np.random.Generator,
        dtype=np.float32,
        padding_id: int = 0,
        trainable: bool = True,
        init_scale: float = 0.05,
        name: str = "embedding",
    ):
        table = rng.uniform(-init_scale, init_scale, size=(vocab_size, dim)).astype(dtype)
        table[padding_id] = 0.0
        self.table = Parameter(table, name=f"{name}.table", trainable=trainable)
        self.padding_id = padding_id
        self.dim = dim

    def forward(self, ids: np.ndarray) -> Tensor:
        return nm.embedding_gather(self.table, ids, padding_id=self.padding_id)

    def parameters(self) -> list[Parameter]:
        return [self.table]


def load_pretrained_embeddings(layer: EmbeddingLayer, path, token_to_id: dict[str, int]) -> int:
    """Overwrite table rows from a ``token v1 v2 ... vd`` text file.

    Tokens absent from the file keep their random initialization. Returns the
    number of rows covered. The file dimension must match the layer's.
    """
    covered = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                raise DataError(f"{path}: line {lineno}: expected 'token v1 ... vd'")
            tok, values = parts[0], parts[1:]
            if len(values) != layer.dim:
                raise DataError(
                    f"{path}: line {lineno}: {len(values)}-dimensional vector, expected {layer.dim}"
                )
            idx = token_to_id.get(tok)
            if idx is None or idx == layer.padding_id:
                continue
            try:
                layer.table.data[idx] = np.array([float(v) for v in values], dtype=layer.table.data.dtype)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric embedding value")
            covered += 1
    return covered


class GRUCell:
    """Gated recurrent unit: update gate z, reset gate r, candidate state.

    h_t = (1 - z) * h_prev + z * h_tilde, the convention of the original
    encoder-decoder formulation.
    """

    def __init__(self, input_dim: int, hidden_size: int, rng: np.random.Generator, dtype=np.float32, name: str = "gru"):
        self.input_dim = input_dim
        self.hidden_size = hidden_size

        def w(gate):
            return Parameter(glorot_uniform(rng, input_dim, hidden_size, (input_dim, hidden_size), dtype), name=f"{name}.W_{gate}")

        def u(gate):
            return Parameter(glorot_uniform(rng, hidden_size, hidden_size, (hidden_size, hidden_size), dtype), name=f"{name}.U_{gate}")

        def b(gate):
            return Parameter(np.zeros(hidden_size, dtype=dtype), name=f"{name}.b_{gate}")

        self.W_z, self.U_z, self.b_z = w("z"), u("z"), b("z")
        self.W_r, self.U_r, self.b_r = w("r"), u("r"), b("r")
        self.W_h, self.U_h, self.b_h = w("h"), u("h"), b("h")

    def parameters(self) -> list[Parameter]:
        return [self.W_z, self.U_z, self.b_z, self.W_r, self.U_r, self.b_r, self.W_h, self.U_h, self.b_h]

    def input_projections(self, x_seq: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Precompute x @ W_* + b_* for all timesteps at once."""
        return (
            nm.add(nm.matmul(x_seq, self.W_z), self.b_z),
            nm.add(nm.matmul(x_seq, self.W_r), self.b_r),
            nm.add(nm.matmul(x_seq, self.W_h), self.b_h),
        )

    def step(self, xz_t: Tensor, xr_t: Tensor, xh_t: Tensor, h_prev: Tensor, recurrent_mask: Tensor | None = None) -> Tensor:
        """One recurrence step from precomputed input projections.

        ``recurrent_mask`` is the per-sequence dropout mask applied to the
        recurrent connections (gate and candidate paths); the state carry
        (1 - z) * h_prev stays undropped.
        """
        h_rec = nm.mul(h_prev, recurrent_mask) if recurrent_mask is not None else h_prev
        z = nm.sigmoid(nm.add(xz_t, nm.matmul(h_rec, self.U_z)))
        r = nm.sigmoid(nm.add(xr_t, nm.matmul(h_rec, self.U_r)))
        h_tilde = nm.tanh(nm.add(xh_t, nm.matmul(nm.mul(r, h_rec), self.U_h)))
        return nm.add(nm.mul(nm.sub(1.0, z), h_prev), nm.mul(z, h_tilde))


def gru_cell_step(cell: GRUCell, x_t: Tensor, h_prev: Tensor, recurrent_mask: Tensor | None = None) -> Tensor:
    """One recurrence step from raw input vectors."""
    xz = nm.add(nm.matmul(x_t, cell.W_z), cell.b_z)
    xr = nm.add(nm.matmul(x_t, cell.W_r), cell.b_r)
    xh = nm.add(nm.matmul(x_t, cell.W_h), cell.b_h)
    return cell.step(xz, xr, xh, h_prev, recurrent_mask)


def _directional_pass(
    cell: GRUCell,
    embedded: Tensor,
    step_mask: np.ndarray,
    reverse: bool,
    recurrent_mask: Tensor | None,
) -> list[Tensor]:
    batch, n_steps = embedded.shape[0], embedded.shape[1]
    xz, xr, xh = cell.input_projections(embedded)
    h = nm.zeros((batch, cell.hidden_size), dtype=embedded.data.dtype)
    outputs: list[Tensor | None] = [None] * n_steps
    order = range(n_steps - 1, -1, -1) if reverse else range(n_steps)
    for t in order:
        m_t = step_mask[:, t : t + 1]
        h_new = cell.step(nm.select(xz, 1, t), nm.select(xr, 1, t), nm.select(xh, 1, t), h, recurrent_mask)
        out_t = nm.mul(h_new, m_t)
        # Masked update: padded positions emit zeros and leave the state alone,
        # so each direction effectively sees only the valid prefix.
        h = nm.add(out_t, nm.mul(h, 1.0 - m_t))
        outputs[t] = out_t
    return outputs  # type: ignore[return-value]


def bigru_forward(
    forward_cell: GRUCell,
    backward_cell: GRUCell,
    embedded: Tensor,
    lengths: np.ndarray,
    forward_recurrent_mask: Tensor | None = None,
    backward_recurrent_mask: Tensor | None = None,
) -> Tensor:
    """Run both directions over the valid prefix; concat per-timestep states.

    Output shape (batch, steps, 2 * hidden); positions past each example's
    length are exactly zero.
    """
    mask = _valid_mask(lengths, embedded.shape[1], embedded.data.dtype)
    fwd = _directional_pass(forward_cell, embedded, mask, False, forward_recurrent_mask)
    bwd = _directional_pass(backward_cell, embedded, mask, True, backward_recurrent_mask)
    return nm.concat([nm.stack(fwd, axis=1), nm.stack(bwd, axis=1)], axis=2)


def max_pool_time(hidden: Tensor, lengths: np.ndarray) -> Tensor:
    """Per-feature max over valid timesteps; zero vector for empty sequences."""
    dtype = hidden.data.dtype
    mask = _valid_mask(lengths, hidden.shape[1], dtype)
    shield = ((1.0 - mask) * -_MASK_NEG)[:, :, None].astype(dtype)
    pooled = nm.max_over_axis(nm.add(hidden, shield), axis=1)
    nonempty = (np.asarray(lengths)[:, None] > 0).astype(dtype)
    return nm.mul(pooled, nonempty)


def avg_pool_time(hidden: Tensor, lengths: np.ndarray) -> Tensor:
    """Per-feature mean over valid timesteps; zero vector for empty sequences."""
    dtype = hidden.data.dtype
    mask = _valid_mask(lengths, hidden.shape[1], dtype)
    summed = nm.sum_over_axis(nm.mul(hidden, mask[:, :, None]), axis=1)
    inv_len = (1.0 / np.maximum(np.asarray(lengths), 1))[:, None].astype(dtype)
    return nm.mul(summed, inv_len)


class AttentionLayer:
    """Projection + context-vector attention over a hidden sequence.

    u_i = tanh(h_i @ proj + bias); scores u_i . context are softmaxed over
    the valid timesteps and the states are averaged under those weights.
    """

    def __init__(self, input_dim: int, attention_dim: int, rng: np.random.Generator, dtype=np.float32, name: str = "attention"):
        self.proj = Parameter(
            glorot_uniform(rng, input_dim, attention_dim, (input_dim, attention_dim), dtype), name=f"{name}.proj"
        )
        self.bias = Parameter(np.zeros(attention_dim, dtype=dtype), name=f"{name}.bias")
        self.context = Parameter(
            glorot_uniform(rng, attention_dim, 1, (attention_dim,), dtype), name=f"{name}.context"
        )

    def parameters(self) -> list[Parameter]:
        return [self.proj, self.bias, self.context]


def attention_forward(layer: AttentionLayer, hidden: Tensor, lengths: np.ndarray) -> tuple[Tensor, Tensor]:
    """Weighted context vector and the attention weights themselves.

    Padded positions are excluded from the softmax; an all-padding sequence
    yields a zero context vector.
    """
    dtype = hidden.data.dtype
    batch, n_steps = hidden.shape[0], hidden.shape[1]
    u = nm.tanh(nm.add(nm.matmul(hidden, layer.proj), layer.bias))
    scores = nm.sum_over_axis(nm.mul(u, layer.context), axis=2)
    shield = ((1.0 - _valid_mask(lengths, n_steps, dtype)) * -_MASK_NEG).astype(dtype)
    weights = nm.softmax(nm.add(scores, shield), axis=1)
    context = nm.sum_over_axis(nm.mul(hidden, nm.reshape(weights, (batch, n_steps, 1))), axis=1)
    nonempty = (np.asarray(lengths)[:, None] > 0).astype(dtype)
    return nm.mul(context, nonempty), weights


class DenseLayer:
    """Affine map with optional softmax/sigmoid head activation."""

    ACTIVATIONS = ("softmax", "sigmoid", "none")

    def __init__(self, input_dim: int, output_dim: int, activation: str, rng: np.random.Generator, dtype=np.float32, name: str = "dense"):
        if activation not in self.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self.weights = Parameter(
            glorot_uniform(rng, input_dim, output_dim, (input_dim, output_dim), dtype), name=f"{name}.weights"
        )
        self.bias = Parameter(np.zeros(output_dim, dtype=dtype), name=f"{name}.bias")

    def parameters(self) -> list[Parameter]:
        return [self.weights, self.bias]

    def forward(self, x: Tensor) -> Tensor:
        logits = nm.add(nm.matmul(x, self.weights), self.bias)
        if self.activation == "softmax":
            return nm.softmax(logits, axis=-1)
        if self.activation == "sigmoid":
            return nm.sigmoid(logits)
        return logits


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero at ``rate``, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return nm.mul(x, keep)


def dropout_mask(rng: np.random.Generator, shape, rate: float, dtype) -> Tensor | None:
    """Fixed inverted-dropout mask, reused across the timesteps of a sequence."""
    if rate == 0.0:
        return None
    return Tensor(((rng.random(shape) >= rate) / (1.0 - rate)).astype(dtype))


def _check_targets(probs: Tensor, targets: np.ndarray, one_hot: bool) -> np.ndarray:
    t = np.asarray(targets, dtype=probs.data.dtype)
    if t.shape != probs.shape:
        raise nm.ShapeError(f"loss: targets {t.shape} vs probabilities {probs.shape}")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise ValueError("targets must be 0/1 indicator vectors")
    if one_hot and not np.all(t.sum(axis=-1) == 1.0):
        raise ValueError("multi-class targets must be one-hot")
    return t


def categorical_cross_entropy(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over the batch of -sum_j t_j log p_j, with probability clipping."""
    t = _check_targets(probs, targets, one_hot=True)
    p = nm.clip(probs, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    batch = probs.shape[0]
    return nm.mul(nm.sum_over_axis(nm.mul(nm.log(p), t), axis=None), -1.0 / batch)


def binary_cross_entropy(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over batch and classes of the per-class Bernoulli cross-entropy."""
    t = _check_targets(probs, targets, one_hot=False)
    p = nm.clip(probs, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    batch, n_classes = probs.shape
    positive = nm.mul(nm.log(p), t)
    negative = nm.mul(nm.log(nm.sub(1.0, p)), 1.0 - t)
    return nm.mul(nm.sum_over_axis(nm.add(positive, negative), axis=None), -1.0 / (batch * n_classes))
