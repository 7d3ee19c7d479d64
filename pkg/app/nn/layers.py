"""
Forward/backward kernels for the fixed layer vocabulary.

All tensors are NHWC (or NF for dense outputs). Reductions run in float64 and the
result is cast back to the activation dtype, except softmax which always yields float64.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, h, wd, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    # (n, h, wd, c, 3, 3) -> rows ordered (ky, kx, c) to match w.reshape(9 * c, cout)
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2))
    cols = cols.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, 9 * c)
    out = cols.astype(np.float64) @ w.reshape(9 * c, -1).astype(np.float64)
    out += b.astype(np.float64)
    return out.reshape(n, h, wd, -1).astype(x.dtype, copy=False), cols


def conv3x3_backward(dy: np.ndarray, cols: np.ndarray, x_shape: tuple, w: np.ndarray,
                     want_params: bool, want_input: bool):
    n, h, wd, c = x_shape
    cout = w.shape[-1]
    dy2 = dy.reshape(-1, cout).astype(np.float64)
    dw = db = dx = None
    if want_params:
        dw = (cols.astype(np.float64).T @ dy2).reshape(w.shape)
        db = dy2.sum(axis=0)
    if want_input:
        dcols = (dy2 @ w.reshape(9 * c, cout).astype(np.float64).T).reshape(n, h, wd, 3, 3, c)
        dxp = np.zeros((n, h + 2, wd + 2, c), dtype=np.float64)
        for i in range(3):
            for j in range(3):
                dxp[:, i:i + h, j:j + wd, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, 1:-1, 1:-1, :]
    return dx, dw, db


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype, copy=False), mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, dy, 0.0)


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    win = x[:, :2 * ho, :2 * wo, :].reshape(n, ho, 2, wo, 2, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., np.newaxis], axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(dy: np.ndarray, arg: np.ndarray, x_shape: tuple) -> np.ndarray:
    n, h, w, c = x_shape
    ho, wo = h // 2, w // 2
    dwin = np.zeros((n, ho, wo, c, 4), dtype=np.float64)
    np.put_along_axis(dwin, arg[..., np.newaxis], dy[..., np.newaxis], axis=-1)
    dwin = dwin.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * ho, 2 * wo, c)
    dx = np.zeros((n, h, w, c), dtype=np.float64)
    dx[:, :2 * ho, :2 * wo, :] = dwin
    return dx


def adaptive_windows(size: int, out: int) -> list[tuple[int, int]]:
    """Contiguous windows [floor(i*size/out), ceil((i+1)*size/out)) covering the axis."""
    return [((i * size) // out, -((-(i + 1) * size) // out)) for i in range(out)]


def adaptive_maxpool_forward(x: np.ndarray, out_h: int, out_w: int) -> tuple[np.ndarray, np.ndarray]:
    n, h, w, c = x.shape
    rows = adaptive_windows(h, out_h)
    cols = adaptive_windows(w, out_w)
    out = np.empty((n, out_h, out_w, c), dtype=x.dtype)
    # flat (n, h, w, c) index of the selected element per output cell
    flat = np.empty((n, out_h, out_w, c), dtype=np.int64)
    n_idx = np.arange(n)[:, np.newaxis]
    c_idx = np.arange(c)[np.newaxis, :]
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            win = x[:, r0:r1, c0:c1, :].reshape(n, -1, c)
            arg = win.argmax(axis=1)
            out[:, i, j, :] = np.take_along_axis(win, arg[:, np.newaxis, :], axis=1)[:, 0, :]
            dr, dc = np.divmod(arg, c1 - c0)
            flat[:, i, j, :] = ((n_idx * h + r0 + dr) * w + c0 + dc) * c + c_idx
    return out, flat


def adaptive_maxpool_backward(dy: np.ndarray, flat: np.ndarray, x_shape: tuple) -> np.ndarray:
    size = int(np.prod(x_shape))
    dx = np.bincount(flat.ravel(), weights=dy.astype(np.float64).ravel(), minlength=size)
    return dx.reshape(x_shape)


def global_maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, h, w, c = x.shape
    flat = x.reshape(n, h * w, c)
    arg = flat.argmax(axis=1)
    return np.take_along_axis(flat, arg[:, np.newaxis, :], axis=1)[:, 0, :], arg


def global_maxpool_backward(dy: np.ndarray, arg: np.ndarray, x_shape: tuple) -> np.ndarray:
    n, h, w, c = x_shape
    dx = np.zeros((n, h * w, c), dtype=np.float64)
    np.put_along_axis(dx, arg[:, np.newaxis, :], dy[:, np.newaxis, :].astype(np.float64), axis=1)
    return dx.reshape(x_shape)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    flat = x.reshape(x.shape[0], -1).astype(np.float64)
    out = flat @ w.astype(np.float64) + b.astype(np.float64)
    return out.astype(x.dtype, copy=False)


def dense_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray, want_params: bool, want_input: bool):
    dy = dy.astype(np.float64)
    dw = db = dx = None
    if want_params:
        dw = x.reshape(x.shape[0], -1).astype(np.float64).T @ dy
        db = dy.sum(axis=0)
    if want_input:
        dx = (dy @ w.astype(np.float64).T).reshape(x.shape)
    return dx, dw, db


def softmax(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
