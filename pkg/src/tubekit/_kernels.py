"""Compiled inner loops."""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def chord_lengths(mask_flat, shape, strides, lo, h, P, D):
    """Length of each line ``P[k] + t D[k]`` inside the voxel mask.

    Exact cell traversal: the line is clipped to the grid box, then walked
    cell by cell, adding the parameter span of every occupied cell.
    ``D`` rows must be unit vectors.
    """
    K, m = P.shape
    out = np.zeros(K)
    idx = np.empty(m, np.int64)
    step = np.empty(m, np.int64)
    tnext = np.empty(m)
    tdelta = np.empty(m)
    for k in range(K):
        t0 = -np.inf
        t1 = np.inf
        miss = False
        for j in range(m):
            d = D[k, j]
            p = P[k, j]
            a = lo[j]
            b = lo[j] + shape[j] * h
            if abs(d) < 1e-300:
                if p < a or p > b:
                    miss = True
                    break
                continue
            ta = (a - p) / d
            tb = (b - p) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
        if miss or not t0 < t1:
            continue
        ts = t0 + 1e-9 * min(h, t1 - t0)
        for j in range(m):
            d = D[k, j]
            c = int(math.floor((P[k, j] + ts * d - lo[j]) / h))
            if c < 0:
                c = 0
            if c >= shape[j]:
                c = shape[j] - 1
            idx[j] = c
            if d > 1e-300:
                step[j] = 1
                tnext[j] = (lo[j] + (c + 1) * h - P[k, j]) / d
                tdelta[j] = h / d
            elif d < -1e-300:
                step[j] = -1
                tnext[j] = (lo[j] + c * h - P[k, j]) / d
                tdelta[j] = -h / d
            else:
                step[j] = 0
                tnext[j] = np.inf
                tdelta[j] = np.inf
        t = t0
        acc = 0.0
        while t < t1:
            jm = 0
            for j in range(1, m):
                if tnext[j] < tnext[jm]:
                    jm = j
            tn = tnext[jm]
            if tn > t1:
                tn = t1
            off = 0
            for j in range(m):
                off += idx[j] * strides[j]
            if mask_flat[off] and tn > t:
                acc += tn - t
            if tn > t:
                t = tn
            idx[jm] += step[jm]
            tnext[jm] += tdelta[jm]
            if idx[jm] < 0 or idx[jm] >= shape[jm]:
                break
        out[k] = acc
    return out


@njit(cache=True)
def _tube_slice_box(c, a, half, R, j, z, g, lo, hi):
    """Cell-index box (excluding axis j) covering the tube's section by x_j = z.

    Returns False when the section is empty.
    """
    n = c.shape[0]
    aj = a[j]
    wj = R * math.sqrt(max(0.0, 1.0 - aj * aj))
    s0 = (z - c[j] - wj) / aj
    s1 = (z - c[j] + wj) / aj
    if s0 > s1:
        s0, s1 = s1, s0
    if s0 < -half:
        s0 = -half
    if s1 > half:
        s1 = half
    if s0 > s1:
        return False
    for i in range(n):
        if i == j:
            continue
        u = c[i] + s0 * a[i]
        v = c[i] + s1 * a[i]
        if u > v:
            u, v = v, u
        lo[i] = int(math.floor((u - R) / g - 0.5))
        hi[i] = int(math.ceil((v + R) / g - 0.5))
    return True


@njit(cache=True)
def tube_cells(C, A, H, R, inflate, g, fill, out_t, out_k):
    """Enumerate cells ``k`` whose centers ``(k + 1/2) g`` lie in each tube
    grown by ``inflate``. With ``fill`` False only the count is returned;
    otherwise ``out_t`` / ``out_k`` receive (tube, cell) rows."""
    N, n = C.shape
    lo = np.zeros(n, np.int64)
    hi = np.zeros(n, np.int64)
    k = np.zeros(n, np.int64)
    x = np.zeros(n)
    R2 = R * R
    count = 0
    for t in range(N):
        c = C[t]
        a = A[t]
        half = H[t] / 2 + inflate
        if half <= 0:
            continue
        j = 0
        for i in range(1, n):
            if abs(a[i]) > abs(a[j]):
                j = i
        ext = half * abs(a[j]) + R * math.sqrt(max(0.0, 1.0 - a[j] * a[j]))
        kj0 = int(math.floor((c[j] - ext) / g - 0.5))
        kj1 = int(math.ceil((c[j] + ext) / g - 0.5))
        for kj in range(kj0, kj1 + 1):
            z = (kj + 0.5) * g
            if not _tube_slice_box(c, a, half, R, j, z, g, lo, hi):
                continue
            lo[j] = kj
            hi[j] = kj
            for i in range(n):
                k[i] = lo[i]
            while True:
                ax = 0.0
                dd = 0.0
                for i in range(n):
                    x[i] = (k[i] + 0.5) * g - c[i]
                    ax += x[i] * a[i]
                    dd += x[i] * x[i]
                if abs(ax) <= half and dd - ax * ax <= R2:
                    if fill:
                        out_t[count] = t
                        for i in range(n):
                            out_k[count, i] = k[i]
                    count += 1
                # odometer over the box
                i = 0
                while i < n:
                    k[i] += 1
                    if k[i] <= hi[i]:
                        break
                    k[i] = lo[i]
                    i += 1
                if i == n:
                    break
    return count
