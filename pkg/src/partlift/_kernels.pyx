# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: splat rasterization and Eq.-1 vote tallies.

Semantics match partlift._kernels_np exactly (see that module for the
contracts); this version runs the inner loops in C.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def splat_rasterize(
    const cnp.int64_t[::1] px,
    const cnp.int64_t[::1] py,
    const cnp.float64_t[::1] z,
    const cnp.int64_t[::1] idx,
    const cnp.int64_t[::1] off_x,
    const cnp.int64_t[::1] off_y,
    int width,
    int height,
    double eps_z,
    int num_points,
):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] depth = np.full((height, width), np.inf)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] owner = np.full((height, width), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] visible = np.zeros(num_points, dtype=np.uint8)
    cdef cnp.float64_t[:, ::1] d = depth
    cdef cnp.int64_t[:, ::1] o = owner
    cdef cnp.uint8_t[::1] v = visible

    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t m = off_x.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t cx, cy
    cdef double zi

    # Ascending point order + strict < makes ties keep the lower index.
    for i in range(n):
        zi = z[i]
        for j in range(m):
            cx = px[i] + off_x[j]
            cy = py[i] + off_y[j]
            if cx < 0 or cx >= width or cy < 0 or cy >= height:
                continue
            if zi < d[cy, cx]:
                d[cy, cx] = zi
                o[cy, cx] = idx[i]

    for i in range(n):
        zi = z[i]
        for j in range(m):
            cx = px[i] + off_x[j]
            cy = py[i] + off_y[j]
            if cx < 0 or cx >= width or cy < 0 or cy >= height:
                continue
            if zi - d[cy, cx] <= eps_z:
                v[idx[i]] = 1
                break

    return depth, owner, visible.view(bool)


def vote_counts(
    const cnp.float64_t[::1] x,
    const cnp.float64_t[::1] y,
    const cnp.uint8_t[::1] visible,
    const cnp.int64_t[::1] assign,
    const cnp.float64_t[:, ::1] boxes,
    const cnp.int64_t[::1] box_cats,
    int num_sp,
    int num_cats,
):
    cdef cnp.ndarray[cnp.int64_t, ndim=2] counts = np.zeros((num_sp, num_cats), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] c = counts
    # stamp[j] == p+1 marks category j already counted for point p
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stamp = np.zeros(num_cats, dtype=np.int64)
    cdef cnp.int64_t[::1] s = stamp

    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nb = boxes.shape[0]
    cdef Py_ssize_t p, b
    cdef double xp, yp
    cdef cnp.int64_t cat

    for p in range(n):
        if not visible[p]:
            continue
        xp = x[p]
        yp = y[p]
        for b in range(nb):
            if boxes[b, 0] <= xp <= boxes[b, 2] and boxes[b, 1] <= yp <= boxes[b, 3]:
                cat = box_cats[b]
                if s[cat] != p + 1:
                    s[cat] = p + 1
                    c[assign[p], cat] += 1
    return counts
