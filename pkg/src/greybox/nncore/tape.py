"""Reverse-mode differentiation over a recorded operation tape.

Computations are built by pushing primitive operations onto a :class:`Tape`;
every primitive stores its operands and output so the tape can be replayed
forward (bit-identically) or swept backward to accumulate adjoints.  Values
are numpy arrays, normally shaped ``(batch, n)``, and primitives broadcast
like numpy; adjoints are summed back down to the operand shapes.

Trainable leaves are registered with :meth:`Tape.parameter` and keep their
registration order, which defines the flat gradient layout returned by
:func:`loss_gradient`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, ShapeError

__all__ = ["Tape", "loss_gradient", "replay"]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Stable logistic: never exponentiates a positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint down to the shape of the operand it belongs to."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# Each primitive: forward(parent_values, aux) -> value
#                 vjp(adjoint, parent_values, value, aux) -> adjoint per parent


def _fw_add(p, aux):
    return p[0] + p[1]


def _bw_add(g, p, v, aux):
    return _unbroadcast(g, p[0].shape), _unbroadcast(g, p[1].shape)


def _fw_sub(p, aux):
    return p[0] - p[1]


def _bw_sub(g, p, v, aux):
    return _unbroadcast(g, p[0].shape), _unbroadcast(-g, p[1].shape)


def _fw_mul(p, aux):
    return p[0] * p[1]


def _bw_mul(g, p, v, aux):
    return _unbroadcast(g * p[1], p[0].shape), _unbroadcast(g * p[0], p[1].shape)


def _fw_div(p, aux):
    return p[0] / p[1]


def _bw_div(g, p, v, aux):
    return (_unbroadcast(g / p[1], p[0].shape),
            _unbroadcast(-g * v / p[1], p[1].shape))


def _fw_neg(p, aux):
    return -p[0]


def _bw_neg(g, p, v, aux):
    return (-g,)


def _fw_exp(p, aux):
    return np.exp(p[0])


def _bw_exp(g, p, v, aux):
    return (g * v,)


def _fw_softplus(p, aux):
    return np.logaddexp(0.0, p[0])


def _bw_softplus(g, p, v, aux):
    return (g * _sigmoid(p[0]),)


def _fw_scale(p, aux):
    return aux * p[0]


def _bw_scale(g, p, v, aux):
    return (aux * g,)


def _fw_addc(p, aux):
    return p[0] + aux


def _bw_addc(g, p, v, aux):
    return (g,)


def _fw_powc(p, aux):
    return p[0] ** aux


def _bw_powc(g, p, v, aux):
    return (g * aux * p[0] ** (aux - 1.0),)


def _fw_hill(p, aux):
    k, n = aux
    xn = p[0] if n == 1.0 else p[0] ** n
    return xn / (k + xn)


def _bw_hill(g, p, v, aux):
    k, n = aux
    x = p[0]
    xn = x if n == 1.0 else x ** n
    den = (k + xn) ** 2
    dx = k / den if n == 1.0 else n * x ** (n - 1.0) * k / den
    return (g * dx,)


def _fw_affine(p, aux):
    x, w, b = p
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"affine: input {x.shape} incompatible with weights {w.shape}")
    return x @ w + b


def _bw_affine(g, p, v, aux):
    x, w, b = p
    return g @ w.T, x.T @ g, _unbroadcast(g, b.shape)


def _fw_concat(p, aux):
    rows = max(q.shape[0] for q in p)
    parts = [np.broadcast_to(q, (rows, q.shape[1])) for q in p]
    return np.concatenate(parts, axis=1)


def _bw_concat(g, p, v, aux):
    grads = []
    j = 0
    for q in p:
        width = q.shape[1]
        grads.append(_unbroadcast(g[:, j:j + width], q.shape))
        j += width
    return tuple(grads)


def _fw_slice(p, aux):
    j0, j1 = aux
    return p[0][:, j0:j1]


def _bw_slice(g, p, v, aux):
    j0, j1 = aux
    out = np.zeros_like(p[0])
    out[:, j0:j1] = g
    return (out,)


def _fw_mean(p, aux):
    return np.array([[p[0].mean()]])


def _bw_mean(g, p, v, aux):
    return (np.full_like(p[0], g.ravel()[0] / p[0].size),)


_OPS = {
    "add": (_fw_add, _bw_add),
    "sub": (_fw_sub, _bw_sub),
    "mul": (_fw_mul, _bw_mul),
    "div": (_fw_div, _bw_div),
    "neg": (_fw_neg, _bw_neg),
    "exp": (_fw_exp, _bw_exp),
    "softplus": (_fw_softplus, _bw_softplus),
    "scale": (_fw_scale, _bw_scale),
    "addc": (_fw_addc, _bw_addc),
    "powc": (_fw_powc, _bw_powc),
    "hill": (_fw_hill, _bw_hill),
    "affine": (_fw_affine, _bw_affine),
    "concat": (_fw_concat, _bw_concat),
    "slice": (_fw_slice, _bw_slice),
    "mean": (_fw_mean, _bw_mean),
}

_LEAVES = ("const", "param")


class Tape:
    """Ordered record of primitive operations with stored values."""

    __slots__ = ("ops", "parents", "aux", "values", "param_ids")

    def __init__(self):
        self.ops: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.aux: list = []
        self.values: list[np.ndarray] = []
        self.param_ids: list[int] = []

    def __len__(self) -> int:
        return len(self.ops)

    def _push(self, op: str, parents: tuple[int, ...], aux, value) -> int:
        self.ops.append(op)
        self.parents.append(parents)
        self.aux.append(aux)
        self.values.append(np.asarray(value, dtype=float))
        return len(self.ops) - 1

    def constant(self, value) -> int:
        """Record a non-trainable leaf."""
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        return self._push("const", (), None, arr)

    def parameter(self, value) -> int:
        """Record a trainable leaf; order of calls fixes the gradient layout."""
        nid = self.constant(value)
        self.ops[nid] = "param"
        self.param_ids.append(nid)
        return nid

    def apply(self, op: str, *parents: int, aux=None) -> int:
        fw, _ = _OPS[op]
        value = fw([self.values[p] for p in parents], aux)
        return self._push(op, parents, aux, value)

    def value(self, nid: int) -> np.ndarray:
        return self.values[nid]


def loss_gradient(tape: Tape, loss_node: int) -> np.ndarray:
    """Gradient of a scalar tape node with respect to all registered parameters.

    Returns one flat vector in parameter-registration order; parameters with
    no path to the loss contribute zeros.
    """
    loss = tape.values[loss_node]
    if loss.size != 1:
        raise ContractError(
            f"loss node must be scalar, got shape {loss.shape}")

    adjoints: list = [None] * (loss_node + 1)
    adjoints[loss_node] = np.ones_like(loss)
    for nid in range(loss_node, -1, -1):
        g = adjoints[nid]
        if g is None or tape.ops[nid] in _LEAVES:
            continue
        _, bw = _OPS[tape.ops[nid]]
        parent_ids = tape.parents[nid]
        grads = bw(g, [tape.values[p] for p in parent_ids],
                   tape.values[nid], tape.aux[nid])
        for pid, pg in zip(parent_ids, grads):
            if adjoints[pid] is None:
                adjoints[pid] = pg
            else:
                adjoints[pid] = adjoints[pid] + pg

    parts = []
    for pid in tape.param_ids:
        g = adjoints[pid] if pid <= loss_node else None
        if g is None:
            g = np.zeros_like(tape.values[pid])
        parts.append(np.asarray(g, dtype=float).ravel())
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def replay(tape: Tape) -> list[np.ndarray]:
    """Re-execute every recorded primitive; leaves keep their stored values."""
    values: list[np.ndarray] = []
    for nid in range(len(tape)):
        if tape.ops[nid] in _LEAVES:
            values.append(tape.values[nid])
        else:
            fw, _ = _OPS[tape.ops[nid]]
            values.append(fw([values[p] for p in tape.parents[nid]],
                             tape.aux[nid]))
    return values
