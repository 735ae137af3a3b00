"""The closed set of differentiable ops used by the forecasting model.

Every op takes tensors (numbers and arrays are lifted to constants) and
returns a new :class:`DiffTensor`. Gradients are exact analytic expressions.
The single nonlinearity is GELU in its exact erf form, chosen over ReLU
because it is smooth, which keeps finite-difference checks meaningful.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .tensor import DiffTensor, ShapeError, as_tensor, make_result

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` over the axes that broadcasting added or stretched."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_result("add", a.values + b.values, (a, b), bw)


def sub(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_result("sub", a.values - b.values, (a, b), bw)


def mul(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)

    def bw(g):
        ga = unbroadcast(g * b.values, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.values, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result("mul", a.values * b.values, (a, b), bw)


def scale(a, c: float) -> DiffTensor:
    a = as_tensor(a)
    c = float(c)
    return make_result("scale", a.values * c, (a,), lambda g: (g * c,))


def div(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    out = a.values / b.values

    def bw(g):
        ga = unbroadcast(g / b.values, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.values, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result("div", out, (a, b), bw)


# -- elementwise unary -------------------------------------------------------

def exp(x) -> DiffTensor:
    x = as_tensor(x)
    out = np.exp(x.values)
    return make_result("exp", out, (x,), lambda g: (g * out,))


def log(x) -> DiffTensor:
    x = as_tensor(x)
    return make_result("log", np.log(x.values), (x,), lambda g: (g / x.values,))


def absolute(x) -> DiffTensor:
    x = as_tensor(x)
    # Subgradient 0 at 0.
    return make_result("abs", np.abs(x.values), (x,), lambda g: (g * np.sign(x.values),))


def square(x) -> DiffTensor:
    x = as_tensor(x)
    return make_result("square", x.values * x.values, (x,), lambda g: (2.0 * g * x.values,))


def gelu(x) -> DiffTensor:
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.values / _SQRT2))

    def bw(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.values * x.values)
        return (g * (cdf + x.values * pdf),)

    return make_result("gelu", x.values * cdf, (x,), bw)


def softplus(x) -> DiffTensor:
    x = as_tensor(x)

    def bw(g):
        return (g * (0.5 * (1.0 + np.tanh(0.5 * x.values))),)

    return make_result("softplus", np.logaddexp(0.0, x.values), (x,), bw)


# -- reductions and normalisation -------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims: bool = False) -> DiffTensor:  # noqa: A001
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.values.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result("sum", out, (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> DiffTensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.values.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return make_result("mean", out, (x,), bw)


def softmax(x, axis: int = -1) -> DiffTensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError("softmax", x.shape, detail=f"axis {axis} has length 0")
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", out, (x,), bw)


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape, detail="batch dims") from None

    def bw(g):
        ga = unbroadcast(g @ np.swapaxes(b.values, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.values, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result("matmul", a.values @ b.values, (a, b), bw)


def linear_map(x, operator) -> DiffTensor:
    """Right-multiply the last axis of ``x`` by a fixed (dense or sparse) matrix."""
    x = as_tensor(x)
    n_in, n_out = operator.shape
    if x.shape[-1] != n_in:
        raise ShapeError("linear_map", x.shape, operator.shape)
    lead = x.shape[:-1]
    flat = x.values.reshape(-1, n_in)
    if sp.issparse(operator):
        out = np.asarray((operator.T @ flat.T).T)

        def bw(g):
            return (np.asarray((operator @ g.reshape(-1, n_out).T).T).reshape(x.shape),)
    else:
        out = flat @ operator

        def bw(g):
            return ((g.reshape(-1, n_out) @ operator.T).reshape(x.shape),)

    return make_result("linear_map", out.reshape(lead + (n_out,)), (x,), bw)


# -- shape manipulation ------------------------------------------------------

def reshape(x, shape) -> DiffTensor:
    x = as_tensor(x)
    try:
        out = x.values.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    return make_result("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def flatten(x, start_dim: int = 1) -> DiffTensor:
    x = as_tensor(x)
    return reshape(x, x.shape[:start_dim] + (-1,))


def transpose(x, axes=None) -> DiffTensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError("transpose", x.shape, tuple(axes))
    inverse = tuple(np.argsort(axes))
    return make_result("transpose", x.values.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def concat(tensors, axis: int = 1) -> DiffTensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", ref, t.shape)
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=ax))

    return make_result("concat", np.concatenate([t.values for t in tensors], axis=ax), tensors, bw)


def getitem(x, index) -> DiffTensor:
    x = as_tensor(x)

    def bw(g):
        out = np.zeros_like(x.values)
        np.add.at(out, index, g)
        return (out,)

    return make_result("getitem", x.values[index], (x,), bw)


# -- convolution family ------------------------------------------------------

def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> DiffTensor:
    """Cross-correlation of ``x`` (B, Cin, H, W) with ``w`` (Cout, Cin, kh, kw)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError("conv2d", x.shape, w.shape)
    cout, cin, kh, kw = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("conv2d", x.shape, w.shape, detail="kernel dims must be odd")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    bsz, _, h, wd = x.shape
    p, s = padding, stride
    xp = np.pad(x.values, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.values
    ho = (h + 2 * p - kh) // s + 1
    wo = (wd + 2 * p - kw) // s + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d", x.shape, w.shape, detail="kernel larger than padded input")
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, cin * kh * kw)
    wmat = w.values.reshape(cout, -1)
    out = (cols @ wmat.T).reshape(bsz, ho, wo, cout).transpose(0, 3, 1, 2)
    inputs = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError("conv2d", w.shape, b.shape, detail="bias")
        out = out + b.values[None, :, None, None]
        inputs = (x, w, b)

    def bw(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gw = (gm.T @ cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (gm @ wmat).reshape(bsz, ho, wo, cin, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, p:p + h, p:p + wd] if p else gxp
        if b is None:
            return gx, gw
        return gx, gw, gm.sum(axis=0)

    return make_result("conv2d", np.ascontiguousarray(out), inputs, bw)


def conv_transpose2d(x, w, b=None, stride: int = 2) -> DiffTensor:
    """Transposed convolution of ``x`` (B, Cin, H, W) with ``w`` (Cin, Cout, k, k).

    Output spatial size is ``(H - 1) * stride + k`` (no padding).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError("conv_transpose2d", x.shape, w.shape)
    bsz, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    s = stride
    ho, wo = (h - 1) * s + kh, (wd - 1) * s + kw
    xf = x.values.transpose(0, 2, 3, 1).reshape(-1, cin)
    # (B*H*W, Cout*kh*kw) contributions, scattered per kernel tap below.
    contrib = (xf @ w.values.reshape(cin, -1)).reshape(bsz, h, wd, cout, kh, kw)
    out = np.zeros((bsz, cout, ho, wo))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + s * (h - 1) + 1:s, j:j + s * (wd - 1) + 1:s] += (
                contrib[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    inputs = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError("conv_transpose2d", w.shape, b.shape, detail="bias")
        out += b.values[None, :, None, None]
        inputs = (x, w, b)

    def bw(g):
        # Gather each tap's slice back to input resolution: (B, H, W, Cout, kh, kw).
        gt = np.empty((bsz, h, wd, cout, kh, kw))
        for i in range(kh):
            for j in range(kw):
                gt[..., i, j] = g[:, :, i:i + s * (h - 1) + 1:s, j:j + s * (wd - 1) + 1:s].transpose(0, 2, 3, 1)
        gflat = gt.reshape(-1, cout * kh * kw)
        gx = (gflat @ w.values.reshape(cin, -1).T).reshape(bsz, h, wd, cin).transpose(0, 3, 1, 2) if x.requires_grad else None
        gw = (xf.T @ gflat).reshape(w.shape) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return make_result("conv_transpose2d", out, inputs, bw)


def max_pool2d(x) -> DiffTensor:
    """2x2 max pooling with stride 2 over the last two axes of (B, C, H, W)."""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError("max_pool2d", x.shape, detail="need (B, C, H, W) with even H, W")
    bsz, c, h, wd = x.shape
    blocks = x.values.reshape(bsz, c, h // 2, 2, wd // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h // 2, wd // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = gb.reshape(bsz, c, h // 2, wd // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(x.shape)
        return (gx,)

    return make_result("max_pool2d", out, (x,), bw)


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) bilinear interpolation matrix.

    Uses half-pixel centres (``align_corners=False``) with edge clamping.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"bilinear_matrix: sizes must be positive, got {n_in} -> {n_out}")
    m = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for i in range(n_out):
        src = max((i + 0.5) * ratio - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0 if i0 < n_in - 1 else 0.0
        m[i, i0] += 1.0 - frac
        m[i, i1] += frac
    return m


def resize_bilinear(x, size: tuple[int, int]) -> DiffTensor:
    """Bilinearly resize the last two axes of ``x`` to ``size``."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError("resize_bilinear", x.shape, tuple(size))
    rh = bilinear_matrix(x.shape[-2], size[0])
    rw = bilinear_matrix(x.shape[-1], size[1])
    out = rh @ x.values @ rw.T

    def bw(g):
        return (rh.T @ g @ rw,)

    return make_result("resize_bilinear", out, (x,), bw)
