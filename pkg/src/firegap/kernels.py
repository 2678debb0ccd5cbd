"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Each public function dispatches on :data:`firegap._accel.HAVE_NUMBA`. The
``*_numpy`` and ``*_numba`` variants are importable individually so the
benchmark and the parity tests can call both.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from firegap._accel import HAVE_NUMBA, njit

# (dy, dx) offsets of the 8 Moore neighbours, fixed order.
NEIGHBOUR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


# ---------------------------------------------------------------------------
# im2col / col2im
# ---------------------------------------------------------------------------

def im2col_numpy(xp, k, stride):
    """(N, C, Hp, Wp) padded input -> (C*k*k, N*Ho*Wo) column matrix."""
    n, c, hp, wp = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # win: (N, C, Ho, Wo, k, k)
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * k * k, n * ho * wo)


def col2im_numpy(cols, shape, k, stride):
    n, c, hp, wp = shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    cols6 = cols.reshape(c, k, k, n, ho, wo)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols6[:, i, j].transpose(1, 0, 2, 3)
    return out


@njit
def _im2col_nb(xp, k, stride):
    n, c, hp, wp = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.empty((c * k * k, n * ho * wo), dtype=xp.dtype)
    for ci in range(c):
        for i in range(k):
            for j in range(k):
                row = (ci * k + i) * k + j
                for b in range(n):
                    base = b * ho * wo
                    for y in range(ho):
                        yy = y * stride + i
                        for x in range(wo):
                            out[row, base + y * wo + x] = xp[b, ci, yy, x * stride + j]
    return out


@njit
def _col2im_nb(cols, n, c, hp, wp, k, stride):
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            for ci in range(c):
                row = (ci * k + i) * k + j
                for b in range(n):
                    base = b * ho * wo
                    for y in range(ho):
                        yy = y * stride + i
                        for x in range(wo):
                            out[b, ci, yy, x * stride + j] += cols[row, base + y * wo + x]
    return out


def im2col_numba(xp, k, stride):
    return _im2col_nb(np.ascontiguousarray(xp), k, stride)


def col2im_numba(cols, shape, k, stride):
    n, c, hp, wp = shape
    return _col2im_nb(np.ascontiguousarray(cols), n, c, hp, wp, k, stride)


# ---------------------------------------------------------------------------
# Cellular-automaton spread step
# ---------------------------------------------------------------------------

def spread_step_numpy(burning, susceptible, pmat, u):
    """New ignitions for one CA sub-step.

    ``pmat[d, y, x]`` is the probability that a burning neighbour at offset
    ``NEIGHBOUR_OFFSETS[d]`` ignites cell (y, x). Survival probabilities are
    multiplied in neighbour order; a cell ignites when ``u < 1 - survival``.
    """
    h, w = burning.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.bool_)
    padded[1:-1, 1:-1] = burning
    survive = np.ones((h, w))
    for d, (dy, dx) in enumerate(NEIGHBOUR_OFFSETS):
        nb_burning = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        survive = np.where(nb_burning, survive * (1.0 - pmat[d]), survive)
    return susceptible & (u < 1.0 - survive)


@njit
def _spread_step_nb(burning, susceptible, pmat, u):
    h, w = burning.shape
    out = np.zeros((h, w), dtype=np.bool_)
    dys = (-1, -1, -1, 0, 0, 1, 1, 1)
    dxs = (-1, 0, 1, -1, 1, -1, 0, 1)
    for y in range(h):
        for x in range(w):
            if not susceptible[y, x]:
                continue
            survive = 1.0
            for d in range(8):
                yy = y + dys[d]
                xx = x + dxs[d]
                if 0 <= yy < h and 0 <= xx < w and burning[yy, xx]:
                    survive = survive * (1.0 - pmat[d, y, x])
            out[y, x] = u[y, x] < 1.0 - survive
    return out


def spread_step_numba(burning, susceptible, pmat, u):
    return _spread_step_nb(
        np.ascontiguousarray(burning, dtype=np.bool_),
        np.ascontiguousarray(susceptible, dtype=np.bool_),
        np.ascontiguousarray(pmat, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# Disk dilation
# ---------------------------------------------------------------------------

def disk_offsets(radius):
    r = int(np.floor(radius))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dy * dy + dx * dx <= radius * radius
    return dy[keep].astype(np.int64), dx[keep].astype(np.int64)


def dilate_disk_numpy(binary, radius):
    binary = np.asarray(binary, dtype=np.bool_)
    h, w = binary.shape
    r = int(np.floor(radius))
    padded = np.zeros((h + 2 * r, w + 2 * r), dtype=np.bool_)
    padded[r:r + h, r:r + w] = binary
    out = np.zeros((h, w), dtype=np.bool_)
    for dy, dx in zip(*disk_offsets(radius)):
        out |= padded[r + dy:r + dy + h, r + dx:r + dx + w]
    return out


@njit
def _dilate_nb(binary, dys, dxs):
    h, w = binary.shape
    out = np.zeros((h, w), dtype=np.bool_)
    for y in range(h):
        for x in range(w):
            if not binary[y, x]:
                continue
            for m in range(dys.shape[0]):
                yy = y + dys[m]
                xx = x + dxs[m]
                if 0 <= yy < h and 0 <= xx < w:
                    out[yy, xx] = True
    return out


def dilate_disk_numba(binary, radius):
    dys, dxs = disk_offsets(radius)
    return _dilate_nb(np.ascontiguousarray(binary, dtype=np.bool_), dys, dxs)


# The strided-view copy in im2col_numpy already runs at memory bandwidth and
# beats the compiled loop; only the scatter-add side goes through numba.
im2col = im2col_numpy

if HAVE_NUMBA:
    col2im = col2im_numba
    spread_step = spread_step_numba
    dilate_disk = dilate_disk_numba
else:
    col2im = col2im_numpy
    spread_step = spread_step_numpy
    dilate_disk = dilate_disk_numpy
