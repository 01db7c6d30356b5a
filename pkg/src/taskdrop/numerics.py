"""Dense float64 tensors with tape-based reverse-mode differentiation.

Deliberately small: just enough surface for a GRU encoder, linear classifier
heads and a softmax cross-entropy loss. Ops execute eagerly on numpy arrays
and, while a :class:`Tape` is active, append a pullback closure that is
replayed in reverse by :func:`backward`. Gradients of tensors the loss never
reaches are exactly zero (their accumulators are simply never touched).
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not satisfy the operation's contract."""


class TapeError(RuntimeError):
    """Backward requested for a value the tape never recorded."""


_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


class Tensor:
    """Row-major float64 array plus a lazily allocated gradient accumulator.

    ``requires_grad=False`` marks constants (inputs, masks, plain numbers
    coerced inside expressions): no pullback ever touches them, and ops whose
    operands are all constants skip the tape entirely.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, data={self.data!r})"


class Tape:
    """Ordered record of executed primitives, replayed in reverse by backward().

    Use as a context manager; ops run inside the block are recorded. Tapes may
    nest (the innermost one records) and independent tapes may run in parallel
    threads, but a single tape must not be shared mid-pass.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, Callable]] = []
        self._outputs: set[int] = set()

    def __enter__(self) -> "Tape":
        self._previous = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = self._previous
        return False

    def record(self, out: Tensor, pullback: Callable) -> None:
        self._records.append((out, pullback))
        self._outputs.add(id(out))

    def recorded(self, t: Tensor) -> bool:
        return id(t) in self._outputs

    def __len__(self) -> int:
        return len(self._records)


def backward(tape: Tape, loss: Tensor) -> None:
    """Reverse-accumulate d(loss)/d(tensor) into ``.grad`` for every tensor
    the loss reaches on ``tape``. Call once per tape."""
    if not tape.recorded(loss):
        raise TapeError("loss was not produced while this tape was active")
    if loss.data.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for out, pullback in reversed(tape._records):
        if out.grad is None:
            continue
        pullback(out.grad)


def _accumulate(t: Tensor, g: np.ndarray, owned: bool) -> None:
    # `owned` marks arrays freshly allocated by the caller; unowned arrays are
    # copied so in-place `+=` can never alias another tensor's gradient.
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if owned else g.copy()
    else:
        t.grad += g


def _coerce(x) -> Tensor:
    # Values coerced mid-expression are constants.
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=False)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> tuple[np.ndarray, bool]:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g, False
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g, True


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.data.shape} @ {b.data.shape}")
    needs = a.requires_grad or b.requires_grad
    out = Tensor(a.data @ b.data, requires_grad=needs)
    tape = _active_tape()
    if tape is not None and needs:
        ad, bd = a.data, b.data

        def pullback(g):
            if a.requires_grad:
                _accumulate(a, g @ bd.T, True)
            if b.requires_grad:
                _accumulate(b, ad.T @ g, True)

        tape.record(out, pullback)
    return out


def affine_pair(x: Tensor, w: Tensor, h: Tensor, u: Tensor, b: Tensor) -> Tensor:
    """Fused gate preactivation: ``x @ w + h @ u + b`` in one tape node."""
    x, w, h, u, b = _coerce(x), _coerce(w), _coerce(h), _coerce(u), _coerce(b)
    for mat, name in ((x, "x"), (w, "w"), (h, "h"), (u, "u")):
        if mat.data.ndim != 2:
            raise ShapeError(f"affine_pair operand {name} must be 2-D, got {mat.data.shape}")
    if x.data.shape[1] != w.data.shape[0] or h.data.shape[1] != u.data.shape[0]:
        raise ShapeError(
            f"inner dimensions disagree: {x.data.shape} @ {w.data.shape}, "
            f"{h.data.shape} @ {u.data.shape}"
        )
    if x.data.shape[0] != h.data.shape[0] or w.data.shape[1] != u.data.shape[1]:
        raise ShapeError(
            f"affine_pair terms do not align: {x.data.shape} @ {w.data.shape} vs "
            f"{h.data.shape} @ {u.data.shape}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"bias shape {b.data.shape} does not match width {w.data.shape[1]}")
    needs = any(t.requires_grad for t in (x, w, h, u, b))
    out = Tensor(x.data @ w.data + h.data @ u.data + b.data, requires_grad=needs)
    tape = _active_tape()
    if tape is not None and needs:
        xd, wd, hd, ud = x.data, w.data, h.data, u.data

        def pullback(g):
            if x.requires_grad:
                _accumulate(x, g @ wd.T, True)
            if w.requires_grad:
                _accumulate(w, xd.T @ g, True)
            if h.requires_grad:
                _accumulate(h, g @ ud.T, True)
            if u.requires_grad:
                _accumulate(u, hd.T @ g, True)
            if b.requires_grad:
                _accumulate(b, g.sum(axis=0), True)

        tape.record(out, pullback)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        needs = a.requires_grad or b.requires_grad
        out = Tensor(a.data + b.data, requires_grad=needs)
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.data.shape} and {b.data.shape}") from exc
    tape = _active_tape()
    if tape is not None and needs:

        def pullback(g):
            if a.requires_grad:
                ga, owned_a = _unbroadcast(g, a.data.shape)
                _accumulate(a, ga, owned_a)
            if b.requires_grad:
                gb, owned_b = _unbroadcast(g, b.data.shape)
                _accumulate(b, gb, owned_b)

        tape.record(out, pullback)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        needs = a.requires_grad or b.requires_grad
        out = Tensor(a.data - b.data, requires_grad=needs)
    except ValueError as exc:
        raise ShapeError(f"cannot subtract shapes {a.data.shape} and {b.data.shape}") from exc
    tape = _active_tape()
    if tape is not None and needs:

        def pullback(g):
            if a.requires_grad:
                ga, owned_a = _unbroadcast(g, a.data.shape)
                _accumulate(a, ga, owned_a)
            if b.requires_grad:
                gb, _ = _unbroadcast(g, b.data.shape)
                _accumulate(b, -gb, True)

        tape.record(out, pullback)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        needs = a.requires_grad or b.requires_grad
        out = Tensor(a.data * b.data, requires_grad=needs)
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.data.shape} and {b.data.shape}") from exc
    tape = _active_tape()
    if tape is not None and needs:
        ad, bd = a.data, b.data

        def pullback(g):
            if a.requires_grad:
                ga, _ = _unbroadcast(g * bd, a.data.shape)
                _accumulate(a, ga, True)
            if b.requires_grad:
                gb, _ = _unbroadcast(g * ad, b.data.shape)
                _accumulate(b, gb, True)

        tape.record(out, pullback)
    return out


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    """Dispatch pointwise arithmetic by name ('add' | 'sub' | 'mul')."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(a, b)


def _stable_sigmoid(arr: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(arr))
    return np.where(arr >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    x = _coerce(x)
    out = Tensor(_stable_sigmoid(x.data), requires_grad=x.requires_grad)
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        od = out.data

        def pullback(g):
            _accumulate(x, g * od * (1.0 - od), True)

        tape.record(out, pullback)
    return out


def tanh(x: Tensor) -> Tensor:
    x = _coerce(x)
    out = Tensor(np.tanh(x.data), requires_grad=x.requires_grad)
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        od = out.data

        def pullback(g):
            _accumulate(x, g * (1.0 - od * od), True)

        tape.record(out, pullback)
    return out


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh}


def activation(kind: str, x: Tensor) -> Tensor:
    """Dispatch a pointwise activation by name ('sigmoid' | 'tanh')."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    x = _coerce(x)
    out = Tensor(x.data.sum(), requires_grad=x.requires_grad)
    tape = _active_tape()
    if tape is not None and x.requires_grad:

        def pullback(g):
            _accumulate(x, np.full(x.data.shape, float(g)), True)

        tape.record(out, pullback)
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _coerce(x)
    try:
        out = Tensor(x.data.reshape(shape), requires_grad=x.requires_grad)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.data.shape} to {tuple(shape)}") from exc
    tape = _active_tape()
    if tape is not None and x.requires_grad:

        def pullback(g):
            _accumulate(x, g.reshape(x.data.shape), False)

        tape.record(out, pullback)
    return out


def timestep(x: Tensor, i: int) -> Tensor:
    """Select step ``i`` from a (batch, steps, features) tensor."""
    if x.data.ndim != 3:
        raise ShapeError(f"timestep expects a 3-D tensor, got shape {x.data.shape}")
    if not 0 <= i < x.data.shape[1]:
        raise IndexError(f"timestep {i} out of range for {x.data.shape[1]} steps")
    out = Tensor(x.data[:, i, :], requires_grad=x.requires_grad)
    tape = _active_tape()
    if tape is not None and x.requires_grad:

        def pullback(g):
            buf = np.zeros(x.data.shape)
            buf[:, i, :] = g
            _accumulate(x, buf, True)

        tape.record(out, pullback)
    return out


def embedding_lookup(table: Tensor, tokens) -> Tensor:
    """Gather rows of ``table`` (vocab, dim) by an integer index array."""
    idx = np.asarray(tokens, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got shape {table.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError("token id outside embedding table")
    out = Tensor(table.data[idx], requires_grad=table.requires_grad)
    tape = _active_tape()
    if tape is not None and table.requires_grad:
        dim = table.data.shape[1]

        def pullback(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx.reshape(-1), g.reshape(-1, dim))

        tape.record(out, pullback)
    return out


def gru_step(x: Tensor, h_prev: Tensor,
             w_z: Tensor, u_z: Tensor, b_z: Tensor,
             w_r: Tensor, u_r: Tensor, b_r: Tensor,
             w_h: Tensor, u_h: Tensor, b_h: Tensor) -> Tensor:
    """One fused GRU step recorded as a single tape node.

    Computes z = sig(x w_z + h u_z + b_z), r = sig(x w_r + h u_r + b_r),
    c = tanh(x w_h + (r*h) u_h + b_h) and returns (1-z)*h + z*c for a
    (batch, d) input and (batch, n) state. The pullback is hand-derived;
    the test suite pins it against both an op-composed replica and central
    finite differences.
    """
    xd, hd = x.data, h_prev.data
    z = _stable_sigmoid(xd @ w_z.data + hd @ u_z.data + b_z.data)
    r = _stable_sigmoid(xd @ w_r.data + hd @ u_r.data + b_r.data)
    rh = r * hd
    c = np.tanh(xd @ w_h.data + rh @ u_h.data + b_h.data)
    parents = (x, h_prev, w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h)
    needs = any(t.requires_grad for t in parents)
    out = Tensor((1.0 - z) * hd + z * c, requires_grad=needs)
    tape = _active_tape()
    if tape is not None and needs:

        def pullback(g):
            dz = g * (c - hd) * z * (1.0 - z)
            dc = g * z * (1.0 - c * c)
            drh = dc @ u_h.data.T
            dr = drh * hd * r * (1.0 - r)
            dh = g * (1.0 - z) + drh * r + dr @ u_r.data.T + dz @ u_z.data.T
            if w_h.requires_grad:
                _accumulate(w_h, xd.T @ dc, True)
            if u_h.requires_grad:
                _accumulate(u_h, rh.T @ dc, True)
            if b_h.requires_grad:
                _accumulate(b_h, dc.sum(axis=0), True)
            if w_r.requires_grad:
                _accumulate(w_r, xd.T @ dr, True)
            if u_r.requires_grad:
                _accumulate(u_r, hd.T @ dr, True)
            if b_r.requires_grad:
                _accumulate(b_r, dr.sum(axis=0), True)
            if w_z.requires_grad:
                _accumulate(w_z, xd.T @ dz, True)
            if u_z.requires_grad:
                _accumulate(u_z, hd.T @ dz, True)
            if b_z.requires_grad:
                _accumulate(b_z, dz.sum(axis=0), True)
            if x.requires_grad:
                _accumulate(x, dc @ w_h.data.T + dr @ w_r.data.T + dz @ w_z.data.T, True)
            if h_prev.requires_grad:
                _accumulate(h_prev, dh, True)

        tape.record(out, pullback)
    return out


def cross_entropy_logits(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of ``labels``.

    Stabilized by row-max subtraction so large logits cannot overflow.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ShapeError(f"logits must be (batch, classes), got shape {logits.data.shape}")
    batch, classes = logits.data.shape
    if labels.shape != (batch,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise IndexError(f"label outside [0, {classes})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    rows = np.arange(batch)
    out = Tensor(-log_probs[rows, labels].mean(), requires_grad=logits.requires_grad)
    tape = _active_tape()
    if tape is not None and logits.requires_grad:
        probs = exp / total

        def pullback(g):
            gl = probs.copy()
            gl[rows, labels] -= 1.0
            gl *= float(g) / batch
            _accumulate(logits, gl, True)

        tape.record(out, pullback)
    return out


def finite_difference_check(f: Callable[[], Tensor], params: Iterable[Tensor], h: float = 1e-5) -> float:
    """Max relative gap between tape gradients of ``f`` and central differences.

    ``f`` takes no arguments, reads ``params`` and returns a scalar tensor; it
    is re-evaluated (untraced) with each coordinate nudged by ±h. The reported
    error is |analytic - numeric| / max(1, |analytic|), maximized over every
    coordinate of every parameter.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    params = list(params)
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
    backward(tape, loss)
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        flat_grad = analytic.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            hi = float(f().data)
            flat[i] = saved - h
            lo = float(f().data)
            flat[i] = saved
            numeric = (hi - lo) / (2.0 * h)
            err = abs(flat_grad[i] - numeric) / max(1.0, abs(flat_grad[i]))
            if err > worst:
                worst = err
        p.grad = None
    return worst
