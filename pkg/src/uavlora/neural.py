"""Small reverse-mode autodiff engine and the recurrent actor/critic networks.

Everything runs in float64 on numpy. A :class:`Tensor` records the op that
produced it; :func:`backward` walks the tape in reverse topological order.
Parameters live in one flat :class:`ParamVector`; leaf tensors created by
:meth:`ParamVector.leaf` are views of it, so gradients land directly in
``ParamVector.grads``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "uavlora.params"
CHECKPOINT_VERSION = 1


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")
    __array_ufunc__ = None  # ndarray (op) Tensor defers to the Tensor's reflected operator

    def __init__(self, data, parents=(), backward_fn=None, requires_grad=False, grad=None):
        self.data = np.asarray(data, dtype=float)
        self.grad = grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.data + b.data, (a, b), fn)


def neg(a) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(a.data * b.data, (a, b), fn)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor(a.data @ b.data, (a, b), fn)


def getitem(a, idx) -> Tensor:
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (slice, int)) for i in parts)

    def fn(g):
        out = np.zeros_like(a.data)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return Tensor(a.data[idx], (a,), fn)


def reshape(a, shape) -> Tensor:
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def relu(a) -> Tensor:
    mask = a.data > 0.0
    return Tensor(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,))


def square(a) -> Tensor:
    return Tensor(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def tsum(a, axis=None) -> Tensor:
    def fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Tensor(a.data.sum(axis=axis), (a,), fn)


def mean(a, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis), 1.0 / n)


def minimum(a, b) -> Tensor:
    """Elementwise min; on ties the gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data

    def fn(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    return Tensor(np.where(take_a, a.data, b.data), (a, b), fn)


def clip(a, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def log_softmax(a, axis=-1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def fn(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return Tensor(out, (a,), fn)


def take(a, index: np.ndarray, axis=-1) -> Tensor:
    """``np.take_along_axis`` with the index's trailing size-1 axis dropped."""
    idx = np.expand_dims(np.asarray(index), axis)

    def fn(g):
        out = np.zeros_like(a.data)
        np.put_along_axis(out, idx, np.expand_dims(g, axis), axis)
        return (out,)

    return Tensor(np.take_along_axis(a.data, idx, axis).squeeze(axis), (a,), fn)


def concat(parts, axis=-1) -> Tensor:
    sizes = np.cumsum([p.data.shape[axis] for p in parts])[:-1]

    def fn(g):
        return tuple(np.split(g, sizes, axis=axis))

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), fn)


def categorical_stats(logits, actions: np.ndarray, mask: np.ndarray, head_sizes) -> Tensor:
    """Fused multi-head categorical: per sample [joint log-prob of ``actions``, summed entropy].

    ``logits`` is (B, slots, sum(head_sizes)); only slots with ``mask`` 1 count.
    Equivalent to :func:`policy_log_prob` / :func:`policy_entropy` over
    :func:`log_softmax` heads, with a hand-written gradient.
    """
    logits = as_tensor(logits)
    z = logits.data
    mask = np.asarray(mask, dtype=float)
    B = z.shape[0]
    logp = np.zeros(B)
    ent = np.zeros(B)
    parts = []
    start = 0
    for k, size in enumerate(head_sizes):
        seg = z[:, :, start : start + size]
        shifted = seg - seg.max(axis=-1, keepdims=True)
        lp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        p = np.exp(lp)
        a = actions[:, :, k : k + 1]
        h = -(p * lp).sum(axis=-1)
        logp += (np.take_along_axis(lp, a, axis=-1)[..., 0] * mask).sum(axis=1)
        ent += (h * mask).sum(axis=1)
        parts.append((start, size, lp, p, a, h))
        start += size

    def fn(g):
        g_lp = g[:, 0][:, None, None] * mask[:, :, None]
        g_h = g[:, 1][:, None, None] * mask[:, :, None]
        out = np.zeros_like(z)
        for start, size, lp, p, a, h in parts:
            d = -p * g_lp
            np.put_along_axis(d, a, np.take_along_axis(d, a, axis=-1) + g_lp, axis=-1)
            d -= g_h * p * (lp + h[..., None])
            out[:, :, start : start + size] = d
        return (out,)

    return Tensor(np.stack([logp, ent], axis=1), (logits,), fn)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every leaf's ``grad`` buffer."""
    if loss.data.size != 1:
        raise ValueError("backward() needs a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for p, pg in zip(node.parents, node.backward_fn(g)):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


class ParamVector:
    """Flat float64 parameters and gradients with a named layout."""

    def __init__(self, layout: dict[str, tuple[int, ...]], values: np.ndarray | None = None):
        self.layout: dict[str, tuple[int, tuple[int, ...]]] = {}
        offset = 0
        for name, shape in layout.items():
            shape = tuple(int(s) for s in shape)
            self.layout[name] = (offset, shape)
            offset += int(np.prod(shape))
        self.size = offset
        self._slices = {
            name: (slice(off, off + int(np.prod(shape))), shape) for name, (off, shape) in self.layout.items()
        }
        self.values = np.zeros(offset) if values is None else np.array(values, dtype=float)
        if self.values.shape != (offset,):
            raise ValueError(f"values have shape {self.values.shape}, layout needs ({offset},)")
        self.grads = np.zeros(offset)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: shape for name, (_, shape) in self.layout.items()}

    def _slice(self, name):
        return self._slices[name]

    def view(self, name: str) -> np.ndarray:
        sl, shape = self._slice(name)
        return self.values[sl].reshape(shape)

    def grad_view(self, name: str) -> np.ndarray:
        sl, shape = self._slice(name)
        return self.grads[sl].reshape(shape)

    def leaf(self, name: str) -> Tensor:
        t = Tensor(self.view(name), requires_grad=True)
        t.grad = self.grad_view(name)
        return t

    def leaves(self) -> dict[str, Tensor]:
        return {name: self.leaf(name) for name in self.layout}

    def zero_grad(self) -> None:
        self.grads[:] = 0.0

    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grads))

    def copy(self) -> "ParamVector":
        out = ParamVector(self.shapes(), self.values.copy())
        out.grads[:] = self.grads
        return out


def glorot_init(params: ParamVector, rng: np.random.Generator) -> None:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) per layer; zero biases.

    Packed recurrent matrices (``gru.w_*``, shape (H, 3H)) are initialised gate
    by gate, each gate being an (H, H) layer.
    """
    for name, (_, shape) in params.layout.items():
        v = params.view(name)
        if len(shape) != 2:
            v[...] = 0.0
        elif name.startswith("gru.w_"):
            fan_in, gate = shape[0], shape[1] // 3
            limit = np.sqrt(6.0 / (fan_in + gate))
            v[...] = rng.uniform(-limit, limit, size=shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            v[...] = rng.uniform(-limit, limit, size=shape)


def linear(x, w, b) -> Tensor:
    """Fused ``x @ w + b`` for a (B, D) batch."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)

    def fn(g):
        gx = g @ w.data.T if x.requires_grad else None
        return gx, x.data.T @ g, g.sum(axis=0)

    return Tensor(x.data @ w.data + b.data, (x, w, b), fn)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru(x, h, w_i, w_h, b_i, b_h) -> Tensor:
    """Fused GRU cell with gates packed as [reset | update | candidate].

    r = s(x Wir + bir + h Whr + bhr), z = s(x Wiz + biz + h Whz + bhz),
    n = tanh(x Win + bin + r * (h Whn + bhn)), h' = (1 - z) * n + z * h.
    """
    x, h, w_i, w_h, b_i, b_h = (as_tensor(t) for t in (x, h, w_i, w_h, b_i, b_h))
    H = h.data.shape[1]
    gi = x.data @ w_i.data + b_i.data
    gh = h.data @ w_h.data + b_h.data
    r = _sigmoid(gi[:, :H] + gh[:, :H])
    z = _sigmoid(gi[:, H : 2 * H] + gh[:, H : 2 * H])
    hn = gh[:, 2 * H :]
    n = np.tanh(gi[:, 2 * H :] + r * hn)
    out = n + z * (h.data - n)

    def fn(g):
        dn = g * (1.0 - z)
        dz = g * (h.data - n)
        dh = g * z
        dpre_n = dn * (1.0 - n * n)
        dr = dpre_n * hn
        dpre_r = dr * r * (1.0 - r)
        dpre_z = dz * z * (1.0 - z)
        d_gi = np.concatenate([dpre_r, dpre_z, dpre_n], axis=1)
        d_gh = np.concatenate([dpre_r, dpre_z, dpre_n * r], axis=1)
        if h.requires_grad:
            dh = dh + d_gh @ w_h.data.T
        else:
            dh = None
        return (
            d_gi @ w_i.data.T if x.requires_grad else None,
            dh,
            x.data.T @ d_gi,
            h.data.T @ d_gh,
            d_gi.sum(axis=0),
            d_gh.sum(axis=0),
        )

    return Tensor(out, (x, h, w_i, w_h, b_i, b_h), fn)


def gru_reference(x, h, w_i, w_h, b_i, b_h) -> Tensor:
    """Same cell as :func:`gru`, composed from primitive ops (slower; used to check it)."""
    H = as_tensor(h).data.shape[1]
    gi = add(matmul(x, w_i), b_i)
    gh = add(matmul(h, w_h), b_h)
    r = sigmoid(add(gi[:, :H], gh[:, :H]))
    z = sigmoid(add(gi[:, H : 2 * H], gh[:, H : 2 * H]))
    n = tanh(add(gi[:, 2 * H :], mul(r, gh[:, 2 * H :])))
    return add(n, mul(z, add(as_tensor(h), neg(n))))


@dataclass(frozen=True)
class RecurrentNet:
    """Dense(ReLU) -> GRU -> linear output head."""

    input_dim: int
    output_dim: int
    hidden: int = 128

    def layout(self) -> dict[str, tuple[int, ...]]:
        H, D = self.hidden, self.input_dim
        return {
            "embed.w": (D, H),
            "embed.b": (H,),
            "gru.w_i": (H, 3 * H),
            "gru.w_h": (H, 3 * H),
            "gru.b_i": (3 * H,),
            "gru.b_h": (3 * H,),
            "out.w": (H, self.output_dim),
            "out.b": (self.output_dim,),
        }

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.layout().values())

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        params = ParamVector(self.layout())
        glorot_init(params, rng)
        return params

    def initial_hidden(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden))

    def forward(self, params: ParamVector, x, h, cell=gru) -> tuple[Tensor, Tensor]:
        x = as_tensor(x)
        if x.data.ndim != 2 or x.data.shape[1] != self.input_dim:
            raise ValueError(f"input shape {x.data.shape} does not match input_dim {self.input_dim}")
        h = as_tensor(h)
        if h.data.shape != (x.data.shape[0], self.hidden):
            raise ValueError(f"hidden shape {h.data.shape} does not match ({x.data.shape[0]}, {self.hidden})")
        if params.size != self.num_params:
            raise ValueError("parameter vector does not match network layout")
        p = params.leaves()
        a = relu(linear(x, p["embed.w"], p["embed.b"]))
        h_new = cell(a, h, p["gru.w_i"], p["gru.w_h"], p["gru.b_i"], p["gru.b_h"])
        out = linear(h_new, p["out.w"], p["out.b"])
        return out, h_new


@dataclass(frozen=True)
class PolicyNet:
    """Recurrent actor with one categorical head per (slot, radio field)."""

    slots: int
    head_sizes: tuple[int, ...] = (6, 5, 3)
    features: int = 4
    hidden: int = 128

    @property
    def body(self) -> RecurrentNet:
        return RecurrentNet(self.slots * self.features, self.slots * sum(self.head_sizes), self.hidden)

    @property
    def input_dim(self) -> int:
        return self.slots * self.features

    def init_params(self, rng) -> ParamVector:
        return self.body.init_params(rng)

    def initial_hidden(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden))

    def logits(self, params, obs, h) -> tuple[Tensor, Tensor]:
        """Raw logits (B, slots, sum(head_sizes)) and the new hidden state."""
        out, h_new = self.body.forward(params, obs, h)
        return reshape(out, (out.data.shape[0], self.slots, sum(self.head_sizes))), h_new

    def forward(self, params, obs, h) -> tuple[list[Tensor], Tensor]:
        """Log-probabilities per head, each (B, slots, size), and the new hidden state."""
        logits, h_new = self.logits(params, obs, h)
        heads, start = [], 0
        for size in self.head_sizes:
            heads.append(log_softmax(logits[:, :, start : start + size], axis=-1))
            start += size
        return heads, h_new

    def meta(self) -> dict:
        return {
            "kind": "policy",
            "slots": self.slots,
            "head_sizes": list(self.head_sizes),
            "features": self.features,
            "hidden": self.hidden,
        }


@dataclass(frozen=True)
class CriticNet:
    state_dim: int
    hidden: int = 128

    @property
    def body(self) -> RecurrentNet:
        return RecurrentNet(self.state_dim, 1, self.hidden)

    def init_params(self, rng) -> ParamVector:
        return self.body.init_params(rng)

    def initial_hidden(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden))

    def forward(self, params, state, h) -> tuple[Tensor, Tensor]:
        out, h_new = self.body.forward(params, state, h)
        return reshape(out, (out.data.shape[0],)), h_new

    def meta(self) -> dict:
        return {"kind": "critic", "state_dim": self.state_dim, "hidden": self.hidden}


def policy_log_prob(heads: list[Tensor], actions: np.ndarray, slot_mask: np.ndarray) -> Tensor:
    """Joint log-probability per sample over valid slots. ``actions`` is (B, slots, 3)."""
    total = None
    mask = np.asarray(slot_mask, dtype=float)
    for k, head in enumerate(heads):
        lp = tsum(mul(take(head, actions[:, :, k], axis=-1), mask), axis=1)
        total = lp if total is None else add(total, lp)
    return total


def policy_entropy(heads: list[Tensor], slot_mask: np.ndarray) -> Tensor:
    """Summed head entropies per sample over valid slots, shape (B,)."""
    total = None
    mask = np.asarray(slot_mask, dtype=float)
    for head in heads:
        ent = neg(tsum(mul(exp(head), head), axis=-1))
        ent = tsum(mul(ent, mask), axis=1)
        total = ent if total is None else add(total, ent)
    return total


class Adam:
    def __init__(self, params: ParamVector, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(params.size)
        self.v = np.zeros(params.size)
        self._buf = np.empty(params.size)
        self.t = 0

    def step(self) -> None:
        self.t += 1
        adam_step(self.params, self.m, self.v, self.t, self.lr, self.beta1, self.beta2, self.eps, self._buf)


def adam_step(params: ParamVector, m, v, t: int, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8,
              scratch: np.ndarray | None = None) -> None:
    """In-place bias-corrected Adam update of ``params.values``; ``m``/``v`` updated in place."""
    g = params.grads
    buf = np.empty_like(g) if scratch is None else scratch
    m *= beta1
    np.multiply(g, 1.0 - beta1, out=buf)
    m += buf
    v *= beta2
    np.multiply(g, g, out=buf)
    buf *= 1.0 - beta2
    v += buf
    # step = lr * m_hat / (sqrt(v_hat) + eps)
    np.sqrt(v, out=buf)
    buf *= 1.0 / np.sqrt(1.0 - beta2**t)
    buf += eps
    np.divide(m, buf, out=buf)
    buf *= lr / (1.0 - beta1**t)
    params.values -= buf


def clip_grad_norm(params: ParamVector, max_norm: float) -> float:
    norm = params.grad_norm()
    if max_norm > 0 and norm > max_norm:
        params.grads *= max_norm / (norm + 1e-12)
    return norm


def save_params(path: str | Path, params: ParamVector, meta: dict | None = None) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layout": [[name, list(shape)] for name, (_, shape) in params.layout.items()],
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), values=params.values)


def load_params(path: str | Path) -> tuple[ParamVector, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        values = data["values"].copy()
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a parameter checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: checkpoint version {header.get('version')} != {CHECKPOINT_VERSION}")
    layout = {name: tuple(shape) for name, shape in header["layout"]}
    return ParamVector(layout, values), header["meta"]
