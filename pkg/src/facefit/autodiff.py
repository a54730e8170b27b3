"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tape`` records operations as they execute; ``backward`` replays the
records in reverse, accumulating adjoints for every registered leaf.
All values are float64 ndarrays (scalars are 0-d arrays).

Every function in this module is generic: called on plain ndarrays it
computes with numpy and returns an ndarray, called on ``Var`` it records
the operation. This lets the loss / model code be written once and run
both in plain evaluation and under differentiation.

Gradient conventions at non-smooth points: ``absolute`` uses sign(0)=0,
``relu`` and ``clamp01`` use the zero subgradient on their flat side and
at the boundary.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError


class Var:
    """A node on a tape: a float64 value plus its position in the graph."""

    __slots__ = ("tape", "value", "name")

    # make ndarray <op> Var defer to the reflected Var operators
    __array_ufunc__ = None

    def __init__(self, tape, value, name=None):
        self.tape = tape
        self.value = np.asarray(value, dtype=np.float64)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.value.shape}{tag})"

    # arithmetic sugar; all routed through the generic module functions
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, p):
        return power(self, p)


class GradStore(dict):
    """Mapping leaf-name -> d(loss)/d(leaf) as an ndarray."""


class Tape:
    """Ordered record of operations plus the registry of trainable leaves."""

    def __init__(self):
        self._records = []
        self._leaves = {}

    def leaf(self, value, name):
        """Register a trainable leaf; its gradient appears in GradStore."""
        if name in self._leaves:
            raise InvalidArgumentError(f"duplicate leaf name {name!r}")
        v = Var(self, value, name=name)
        self._leaves[name] = v
        return v

    def constant(self, value):
        """Wrap a value that participates in the graph but gets no gradient."""
        return Var(self, value)

    @property
    def leaves(self):
        return dict(self._leaves)

    def backward(self, loss):
        """Return d(loss)/d(leaf) for every registered leaf.

        ``loss`` must be a scalar Var recorded on this tape. Leaves that do
        not influence the loss get zero gradients.
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise InvalidArgumentError("loss is not a variable on this tape")
        if loss.value.size != 1:
            raise InvalidArgumentError("loss must be a scalar")

        adjoint = {id(loss): np.ones_like(loss.value)}
        for out, parents, backward_fn in reversed(self._records):
            g = adjoint.pop(id(out), None)
            if g is None:
                continue
            for parent, pg in zip(parents, backward_fn(g)):
                if pg is None:
                    continue
                acc = adjoint.get(id(parent))
                adjoint[id(parent)] = pg if acc is None else acc + pg

        store = GradStore()
        for name, leaf in self._leaves.items():
            g = adjoint.get(id(leaf))
            store[name] = np.zeros_like(leaf.value) if g is None else np.asarray(g)
        return store


def backward(tape, loss):
    """Functional alias for Tape.backward."""
    return tape.backward(loss)


# ---------------------------------------------------------------------------
# dispatch plumbing


def is_var(x):
    return isinstance(x, Var)


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _record(tape, value, parents, backward_fn):
    out = Var(tape, value)
    tape._records.append((out, parents, backward_fn))
    return out


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the shape of its source."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    if not (is_var(a) or is_var(b)):
        return np.add(a, b, dtype=np.float64)
    av, bv = value_of(a), value_of(b)
    parents, grads = [], []
    if is_var(a):
        parents.append(a)
        grads.append(lambda g: _unbroadcast(g, av.shape))
    if is_var(b):
        parents.append(b)
        grads.append(lambda g: _unbroadcast(g, bv.shape))
    return _record(_tape_of(a, b), av + bv, tuple(parents),
                   lambda g: tuple(fn(g) for fn in grads))


def subtract(a, b):
    if not (is_var(a) or is_var(b)):
        return np.subtract(a, b, dtype=np.float64)
    av, bv = value_of(a), value_of(b)
    parents, grads = [], []
    if is_var(a):
        parents.append(a)
        grads.append(lambda g: _unbroadcast(g, av.shape))
    if is_var(b):
        parents.append(b)
        grads.append(lambda g: _unbroadcast(-g, bv.shape))
    return _record(_tape_of(a, b), av - bv, tuple(parents),
                   lambda g: tuple(fn(g) for fn in grads))


def multiply(a, b):
    if not (is_var(a) or is_var(b)):
        return np.multiply(a, b, dtype=np.float64)
    av, bv = value_of(a), value_of(b)
    parents, grads = [], []
    if is_var(a):
        parents.append(a)
        grads.append(lambda g: _unbroadcast(g * bv, av.shape))
    if is_var(b):
        parents.append(b)
        grads.append(lambda g: _unbroadcast(g * av, bv.shape))
    return _record(_tape_of(a, b), av * bv, tuple(parents),
                   lambda g: tuple(fn(g) for fn in grads))


def divide(a, b):
    if not (is_var(a) or is_var(b)):
        return np.divide(a, b, dtype=np.float64)
    av, bv = value_of(a), value_of(b)
    parents, grads = [], []
    if is_var(a):
        parents.append(a)
        grads.append(lambda g: _unbroadcast(g / bv, av.shape))
    if is_var(b):
        parents.append(b)
        grads.append(lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape))
    return _record(_tape_of(a, b), av / bv, tuple(parents),
                   lambda g: tuple(fn(g) for fn in grads))


def negative(a):
    if not is_var(a):
        return np.negative(a)
    return _record(a.tape, -a.value, (a,), lambda g: (-g,))


def power(a, p):
    """Elementwise a**p for a constant exponent p."""
    if not is_var(a):
        return np.power(a, p)
    av = a.value
    return _record(a.tape, av ** p, (a,), lambda g: (g * p * av ** (p - 1),))


def sqrt(a):
    if not is_var(a):
        return np.sqrt(a)
    out = np.sqrt(a.value)
    return _record(a.tape, out, (a,), lambda g: (g * 0.5 / out,))


def absolute(a):
    if not is_var(a):
        return np.abs(a)
    s = np.sign(a.value)
    return _record(a.tape, np.abs(a.value), (a,), lambda g: (g * s,))


def relu(a):
    """max(a, 0); zero subgradient where a <= 0."""
    if not is_var(a):
        return np.maximum(a, 0.0)
    mask = a.value > 0.0
    return _record(a.tape, np.maximum(a.value, 0.0), (a,), lambda g: (g * mask,))


def clamp01(a):
    """Clip to [0, 1]; clipped entries get zero gradient."""
    if not is_var(a):
        return np.clip(a, 0.0, 1.0)
    mask = (a.value > 0.0) & (a.value < 1.0)
    return _record(a.tape, np.clip(a.value, 0.0, 1.0), (a,), lambda g: (g * mask,))


def sum_all(a):
    if not is_var(a):
        return np.asarray(np.sum(a), dtype=np.float64)
    shape = a.value.shape
    return _record(a.tape, np.asarray(np.sum(a.value)), (a,),
                   lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a):
    if not is_var(a):
        return np.asarray(np.mean(a), dtype=np.float64)
    shape = a.value.shape
    n = a.value.size
    return _record(a.tape, np.asarray(np.mean(a.value)), (a,),
                   lambda g: (np.broadcast_to(g / n, shape).copy(),))


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a, b):
    if not (is_var(a) or is_var(b)):
        return np.matmul(a, b)
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise InvalidArgumentError("matmul supports 2-D operands only")
    parents, grads = [], []
    if is_var(a):
        parents.append(a)
        grads.append(lambda g: g @ bv.T)
    if is_var(b):
        parents.append(b)
        grads.append(lambda g: av.T @ g)
    return _record(_tape_of(a, b), av @ bv, tuple(parents),
                   lambda g: tuple(fn(g) for fn in grads))


def basis_combine(basis, coeff):
    """Contract a constant (N,3,K) basis with a K coefficient vector.

    BLAS-free on purpose: the forward render path must be bit-stable.
    """
    basis = np.asarray(basis, dtype=np.float64)
    if not is_var(coeff):
        c = np.asarray(coeff, dtype=np.float64)
        if basis.shape[2] != c.shape[0]:
            raise InvalidArgumentError(
                f"coefficient length {c.shape[0]} does not match basis depth {basis.shape[2]}")
        return (basis * c[None, None, :]).sum(axis=2)
    c = coeff.value
    if basis.shape[2] != c.shape[0]:
        raise InvalidArgumentError(
            f"coefficient length {c.shape[0]} does not match basis depth {basis.shape[2]}")
    out = (basis * c[None, None, :]).sum(axis=2)
    return _record(coeff.tape, out, (coeff,),
                   lambda g: ((basis * g[:, :, None]).sum(axis=(0, 1)),))


def gather_rows(a, idx):
    """Take rows (or elements of a 1-D array) at idx, preserving order."""
    idx = np.asarray(idx)
    if not is_var(a):
        return np.asarray(a, dtype=np.float64)[idx]
    av = a.value

    def bw(g):
        ga = np.zeros_like(av)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record(a.tape, av[idx], (a,), bw)


def row_replace(base, rows, idx):
    """Copy of ``base`` with base[idx] = rows."""
    idx = np.asarray(idx)
    if not (is_var(base) or is_var(rows)):
        out = np.array(base, dtype=np.float64, copy=True)
        out[idx] = rows
        return out
    basev, rowsv = value_of(base), value_of(rows)
    out = basev.copy()
    out[idx] = rowsv
    parents, grads = [], []
    if is_var(base):
        def gbase(g):
            gb = g.copy()
            gb[idx] = 0.0
            return gb
        parents.append(base)
        grads.append(gbase)
    if is_var(rows):
        parents.append(rows)
        grads.append(lambda g: g[idx])
    return _record(_tape_of(base, rows), out, tuple(parents),
                   lambda g: tuple(fn(g) for fn in grads))


def scatter_rows(vals, idx, n_rows, fill=0.0):
    """Place rows into a (n_rows, C) array prefilled with ``fill``.

    idx must not contain duplicates.
    """
    idx = np.asarray(idx)
    valsv = value_of(vals)
    out = np.empty((n_rows,) + valsv.shape[1:], dtype=np.float64)
    out[...] = fill
    out[idx] = valsv
    if not is_var(vals):
        return out
    return _record(vals.tape, out, (vals,), lambda g: (g[idx],))


def take_column(a, j):
    if not is_var(a):
        return np.asarray(a, dtype=np.float64)[:, j]
    av = a.value

    def bw(g):
        ga = np.zeros_like(av)
        ga[:, j] = g
        return (ga,)

    return _record(a.tape, av[:, j], (a,), bw)


def stack_columns(cols):
    """Stack 1-D arrays/Vars of equal length into an (N, k) array."""
    tape = _tape_of(*cols)
    vals = [value_of(c) for c in cols]
    out = np.stack(vals, axis=1)
    if tape is None:
        return out
    parents, slots = [], []
    for i, c in enumerate(cols):
        if is_var(c):
            parents.append(c)
            slots.append(i)
    return _record(tape, out, tuple(parents),
                   lambda g: tuple(g[:, i] for i in slots))


def reshape(a, shape):
    if not is_var(a):
        return np.reshape(a, shape)
    old = a.value.shape
    return _record(a.tape, a.value.reshape(shape), (a,),
                   lambda g: (g.reshape(old),))


def transpose(a):
    if not is_var(a):
        return np.transpose(a)
    return _record(a.tape, a.value.T.copy(), (a,), lambda g: (g.T,))


def diff_rows(a):
    """a[1:] - a[:-1] along axis 0."""
    if not is_var(a):
        return np.diff(a, axis=0)
    av = a.value

    def bw(g):
        ga = np.zeros_like(av)
        ga[1:] += g
        ga[:-1] -= g
        return (ga,)

    return _record(a.tape, np.diff(av, axis=0), (a,), bw)


def diff_cols(a):
    """a[:, 1:] - a[:, :-1] along axis 1."""
    if not is_var(a):
        return np.diff(a, axis=1)
    av = a.value

    def bw(g):
        ga = np.zeros_like(av)
        ga[:, 1:] += g
        ga[:, :-1] -= g
        return (ga,)

    return _record(a.tape, np.diff(av, axis=1), (a,), bw)


# ---------------------------------------------------------------------------
# softmax


def softmax_rows(z):
    """Row-wise softmax with max-subtraction for stability."""
    zv = value_of(z)
    shifted = zv - zv.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    w = e / e.sum(axis=1, keepdims=True)
    if not is_var(z):
        return w

    def bw(g):
        inner = (g * w).sum(axis=1, keepdims=True)
        return (w * (g - inner),)

    return _record(z.tape, w, (z,), bw)


# ---------------------------------------------------------------------------
# texture sampling


def bilinear_taps(resolution, uv):
    """Clamped bilinear tap indices and weights for uv points in [0,1]^2.

    Texel (i, j) is centered at u=(j+0.5)/R, v=(i+0.5)/R: u indexes
    columns, v indexes rows, no vertical flip.
    """
    R = int(resolution)
    uv = np.asarray(uv, dtype=np.float64)
    u = np.clip(uv[:, 0], 0.0, 1.0)
    v = np.clip(uv[:, 1], 0.0, 1.0)
    x = u * R - 0.5
    y = v * R - 0.5
    j0 = np.floor(x)
    i0 = np.floor(y)
    fx = x - j0
    fy = y - i0
    j0 = j0.astype(np.intp)
    i0 = i0.astype(np.intp)
    j0c = np.clip(j0, 0, R - 1)
    j1c = np.clip(j0 + 1, 0, R - 1)
    i0c = np.clip(i0, 0, R - 1)
    i1c = np.clip(i0 + 1, 0, R - 1)
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    rows = (i0c, i0c, i1c, i1c)
    cols = (j0c, j1c, j0c, j1c)
    weights = (w00, w10, w01, w11)
    return rows, cols, weights


def bilinear_sample(texture, uv):
    """Bilinearly sample an (R, R, C) texture at (M, 2) uv points.

    Differentiates with respect to the texture; uv is treated as constant
    (sampling positions are frozen per forward pass).
    """
    texv = value_of(texture)
    rows, cols, weights = bilinear_taps(texv.shape[0], uv)
    out = sum(w[:, None] * texv[r, c] for r, c, w in zip(rows, cols, weights))
    if not is_var(texture):
        return out

    def bw(g):
        gt = np.zeros_like(texv)
        for r, c, w in zip(rows, cols, weights):
            np.add.at(gt, (r, c), w[:, None] * g)
        return (gt,)

    return _record(texture.tape, out, (texture,), bw)


# ---------------------------------------------------------------------------
# spherical-harmonics irradiance contraction


def sh_irradiance(basis_vals, light):
    """Contract per-point SH basis values (M, 9) with coefficients (9, 3).

    out[m, c] = sum_b basis_vals[m, b] * light[b, c]. Implemented with
    ufunc reductions (no BLAS) so the render path is bit-stable.
    """
    hv, lv = value_of(basis_vals), value_of(light)
    out = (hv[:, :, None] * lv[None, :, :]).sum(axis=1)
    if not (is_var(basis_vals) or is_var(light)):
        return out
    parents, grads = [], []
    if is_var(basis_vals):
        parents.append(basis_vals)
        grads.append(lambda g: (g[:, None, :] * lv[None, :, :]).sum(axis=2))
    if is_var(light):
        parents.append(light)
        grads.append(lambda g: (hv[:, :, None] * g[:, None, :]).sum(axis=0))
    return _record(_tape_of(basis_vals, light), out, tuple(parents),
                   lambda g: tuple(fn(g) for fn in grads))


# ---------------------------------------------------------------------------
# analytic helpers for rotations
#
# sinc_sq(u)    = sin(sqrt(u)) / sqrt(u)
# versine_sq(u) = (1 - cos(sqrt(u))) / u
#
# Both are analytic functions of u = theta^2, which keeps axis-angle
# rotation smooth through theta = 0. Small-u branches use Taylor series.

_SMALL_U = 1e-6


def _sinc_sq_vals(u):
    u = np.asarray(u, dtype=np.float64)
    small = u < _SMALL_U
    us = np.where(small, 1.0, u)
    s = np.sqrt(us)
    f = np.where(small, 1.0 - u / 6.0 + u * u / 120.0, np.sin(s) / s)
    fp = np.where(small, -1.0 / 6.0 + u / 60.0,
                  (s * np.cos(s) - np.sin(s)) / (2.0 * s ** 3))
    return f, fp


def _versine_sq_vals(u):
    u = np.asarray(u, dtype=np.float64)
    small = u < _SMALL_U
    us = np.where(small, 1.0, u)
    s = np.sqrt(us)
    half = np.sin(0.5 * s)
    f = np.where(small, 0.5 - u / 24.0 + u * u / 720.0, 2.0 * half * half / us)
    fp = np.where(small, -1.0 / 24.0 + u / 360.0,
                  (0.5 * s * np.sin(s) - 2.0 * half * half) / (us * us))
    return f, fp


def sinc_sq(u):
    if not is_var(u):
        return _sinc_sq_vals(u)[0]
    f, fp = _sinc_sq_vals(u.value)
    return _record(u.tape, f, (u,), lambda g: (g * fp,))


def versine_sq(u):
    if not is_var(u):
        return _versine_sq_vals(u)[0]
    f, fp = _versine_sq_vals(u.value)
    return _record(u.tape, f, (u,), lambda g: (g * fp,))


def cross_rows(w, points):
    """Cross product of a 3-vector with every row of an (N, 3) array."""
    wx = gather_rows(w, np.array([0]))
    wy = gather_rows(w, np.array([1]))
    wz = gather_rows(w, np.array([2]))
    px = take_column(points, 0)
    py = take_column(points, 1)
    pz = take_column(points, 2)
    cx = multiply(wy, pz) - multiply(wz, py)
    cy = multiply(wz, px) - multiply(wx, pz)
    cz = multiply(wx, py) - multiply(wy, px)
    return stack_columns([cx, cy, cz])


def rodrigues_rotate(points, axis_angle, pivot=None):
    """Rotate (N, 3) points by an axis-angle 3-vector, optionally about a pivot.

    Uses R v = v + (sin t / t) (w x v) + ((1 - cos t) / t^2) (w x (w x v)),
    with the two coefficients evaluated as analytic functions of t^2 so the
    map stays differentiable at zero rotation. The result is formed as
    points + delta (delta computed about the pivot), so zero rotation
    returns the input bit-exactly instead of rounding through the pivot.
    """
    p = points if pivot is None else subtract(points, pivot)
    u = sum_all(multiply(axis_angle, axis_angle))
    a = sinc_sq(u)
    b = versine_sq(u)
    c1 = cross_rows(axis_angle, p)
    c2 = cross_rows(axis_angle, c1)
    delta = add(multiply(a, c1), multiply(b, c2))
    return add(points, delta)
