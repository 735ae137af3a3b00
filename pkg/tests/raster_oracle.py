"""Brute-force placement oracles that never call the library's index math."""

import numpy as np


def infinite_plane(kernel, pos, psi, O):
    """Drop the kernel on an unbounded plane of width psi, then read it row-major.

    Cell (i, j) sits at plane row ``pos_row + i - (h-1)/2`` and virtual column
    ``pos_col + j - (w-1)/2``; a virtual column outside [0, psi) is simply the
    neighbouring row's time step once the plane is unrolled.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w = kernel.shape
    out = np.zeros(O)
    for t in range(O):
        row, col = divmod(t, psi)
        for i in range(h):
            # the plane row this kernel row lives on, and its column in that frame
            prow = pos[0] + i - (h - 1) // 2
            j = (row - prow) * psi + col - pos[1] + (w - 1) // 2
            if 0 <= j < w:
                out[t] = kernel[i, j]
    return out


def padded_flatten(kernel, pos, psi, O):
    """Literal pad-to-period, row-major flatten, centre-aligned shift."""
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w = kernel.shape
    left = (psi - w) // 2
    padded = np.pad(kernel, ((0, 0), (left, psi - w - left)))
    line = padded.ravel()
    start = pos[0] * psi + pos[1] - (h * psi - 1) // 2
    out = np.zeros(O)
    for t in range(O):
        k = t - start
        if 0 <= k < line.size:
            out[t] = line[k]
    return out
