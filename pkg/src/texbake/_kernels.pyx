# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: triangle scan conversion and masked Jacobi fill.

Both functions mirror texbake._pykernels operation for operation so that the
two backends agree to the last bit on the same input.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor, fabs

cnp.import_array()


cdef inline double _edge(double ax, double ay, double bx, double by, double px, double py) nogil:
    # canonical endpoint order: shared edges evaluate to exact negatives
    if ax > bx or (ax == bx and ay > by):
        return -((ax - bx) * (py - by) - (ay - by) * (px - bx))
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


cdef inline bint _owned(double ax, double ay, double bx, double by, double sign) nogil:
    # inward normal of edge a->b; top-left fill rule in y-down pixel space
    cdef double nx = -sign * (by - ay)
    cdef double ny = sign * (bx - ax)
    return nx > 0.0 or (nx == 0.0 and ny > 0.0)


def raster_triangles(double[:, :, ::1] xy, double[:, ::1] z, double[:, :, ::1] attr,
                     long long[::1] face, double[:, ::1] depth, long long[:, ::1] face_id,
                     double[:, :, ::1] bary, bint perspective):
    """Scan-convert triangles into depth / id / attribute buffers in place.

    Returns the number of covered samples rejected by the depth test.
    """
    cdef Py_ssize_t n = xy.shape[0]
    cdef Py_ssize_t height = depth.shape[0]
    cdef Py_ssize_t width = depth.shape[1]
    cdef Py_ssize_t t, i, j, k
    cdef long long rejected = 0
    cdef double x0, y0, x1, y1, x2, y2, area, sign, inv_area
    cdef double px, py, w0, w1, w2, b0, b1, b2, q0, q1, q2, s, d
    cdef bint o0, o1, o2
    cdef long i0, i1, j0, j1

    with nogil:
        for t in range(n):
            x0 = xy[t, 0, 0]; y0 = xy[t, 0, 1]
            x1 = xy[t, 1, 0]; y1 = xy[t, 1, 1]
            x2 = xy[t, 2, 0]; y2 = xy[t, 2, 1]
            area = _edge(x0, y0, x1, y1, x2, y2)
            if fabs(area) < 1e-14:
                continue
            sign = 1.0 if area > 0.0 else -1.0
            inv_area = 1.0 / fabs(area)
            o0 = _owned(x1, y1, x2, y2, sign)
            o1 = _owned(x2, y2, x0, y0, sign)
            o2 = _owned(x0, y0, x1, y1, sign)
            i0 = <long>ceil(min(x0, min(x1, x2)) - 0.5)
            i1 = <long>floor(max(x0, max(x1, x2)) - 0.5)
            j0 = <long>ceil(min(y0, min(y1, y2)) - 0.5)
            j1 = <long>floor(max(y0, max(y1, y2)) - 0.5)
            if i0 < 0:
                i0 = 0
            if j0 < 0:
                j0 = 0
            if i1 > width - 1:
                i1 = width - 1
            if j1 > height - 1:
                j1 = height - 1
            for j in range(j0, j1 + 1):
                py = j + 0.5
                for i in range(i0, i1 + 1):
                    px = i + 0.5
                    w0 = sign * _edge(x1, y1, x2, y2, px, py)
                    w1 = sign * _edge(x2, y2, x0, y0, px, py)
                    w2 = sign * _edge(x0, y0, x1, y1, px, py)
                    if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                        continue
                    if (w0 == 0.0 and not o0) or (w1 == 0.0 and not o1) or (w2 == 0.0 and not o2):
                        continue
                    b0 = w0 * inv_area
                    b1 = w1 * inv_area
                    b2 = w2 * inv_area
                    if perspective:
                        q0 = b0 / z[t, 0]
                        q1 = b1 / z[t, 1]
                        q2 = b2 / z[t, 2]
                        s = q0 + q1 + q2
                        d = 1.0 / s
                        b0 = q0 / s
                        b1 = q1 / s
                        b2 = q2 / s
                    else:
                        d = b0 * z[t, 0] + b1 * z[t, 1] + b2 * z[t, 2]
                    if d < depth[j, i]:
                        depth[j, i] = d
                        face_id[j, i] = face[t]
                        for k in range(3):
                            bary[j, i, k] = b0 * attr[t, 0, k] + b1 * attr[t, 1, k] + b2 * attr[t, 2, k]
                    else:
                        rejected += 1
    return rejected


def jacobi_fill(double[:, ::1] color, cnp.uint8_t[::1] filled, long long[::1] label,
                long long[::1] masked, Py_ssize_t width, Py_ssize_t max_iters, double tol):
    """Label-constrained 4-neighbour averaging over the ``masked`` texels (flat indices).

    ``color``/``filled`` are updated in place. Returns the number of sweeps run.
    """
    cdef Py_ssize_t m = masked.shape[0]
    cdef Py_ssize_t total = color.shape[0]
    cdef Py_ssize_t it, a, k, nb, c, n_local
    cdef long long idx, j
    cdef int cnt
    cdef double acc0, acc1, acc2, delta, worst
    cdef bint grew
    cdef long long[4] cand
    # compact local index space: masked texels first, then the fixed neighbours they read
    local_arr = np.full(total, -1, dtype=np.int64)
    cdef long long[::1] local = local_arr
    for a in range(m):
        local[masked[a]] = a
    nbr_arr = np.full((m, 4), -1, dtype=np.int64)
    cdef long long[:, ::1] nbr = nbr_arr
    extra = []
    n_local = m
    for a in range(m):
        idx = masked[a]
        # same-label neighbours in the order left, right, up, down
        cand[0] = idx - 1 if idx % width != 0 else -1
        cand[1] = idx + 1 if (idx + 1) % width != 0 and idx + 1 < total else -1
        cand[2] = idx - width
        cand[3] = idx + width if idx + width < total else -1
        for k in range(4):
            j = cand[k]
            if j < 0 or label[j] != label[idx]:
                continue
            if local[j] < 0:
                local[j] = n_local
                extra.append(j)
                n_local += 1
            nbr[a, k] = local[j]
    src = np.concatenate([np.asarray(masked, dtype=np.int64), np.asarray(extra, dtype=np.int64)])
    cur_arr = np.ascontiguousarray(np.asarray(color)[src])
    cur_f_arr = np.ascontiguousarray(np.asarray(filled)[src])
    nxt_arr = cur_arr.copy()
    nxt_f_arr = cur_f_arr.copy()
    cdef double[:, ::1] cur = cur_arr
    cdef double[:, ::1] nxt = nxt_arr
    cdef cnp.uint8_t[::1] cur_f = cur_f_arr
    cdef cnp.uint8_t[::1] nxt_f = nxt_f_arr
    cdef double[:, ::1] swap
    cdef cnp.uint8_t[::1] swap_f
    it = 0
    with nogil:
        while it < max_iters:
            it += 1
            grew = False
            worst = 0.0
            for a in range(m):
                cnt = 0
                acc0 = 0.0
                acc1 = 0.0
                acc2 = 0.0
                for k in range(4):
                    nb = nbr[a, k]
                    if nb < 0 or not cur_f[nb]:
                        continue
                    cnt += 1
                    acc0 = acc0 + cur[nb, 0]
                    acc1 = acc1 + cur[nb, 1]
                    acc2 = acc2 + cur[nb, 2]
                if cnt > 0:
                    nxt[a, 0] = acc0 / cnt
                    nxt[a, 1] = acc1 / cnt
                    nxt[a, 2] = acc2 / cnt
                    if cur_f[a]:
                        for c in range(3):
                            delta = fabs(nxt[a, c] - cur[a, c])
                            if delta > worst:
                                worst = delta
                    else:
                        grew = True
                    nxt_f[a] = 1
                else:
                    nxt_f[a] = cur_f[a]
                    for c in range(3):
                        nxt[a, c] = cur[a, c]
            swap = cur
            cur = nxt
            nxt = swap
            swap_f = cur_f
            cur_f = nxt_f
            nxt_f = swap_f
            if not grew and worst < tol:
                break
    for a in range(m):
        idx = masked[a]
        filled[idx] = cur_f[a]
        for c in range(3):
            color[idx, c] = cur[a, c]
    return it
