"""NumPy implementations of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built or ``TEXBAKE_PURE=1`` is set. Each
function vectorises the inner pixel loop but keeps the triangle order and the
arithmetic of the compiled version, so results are bit-identical.
"""

import math

import numpy as np
from scipy.sparse import csr_matrix


def _edge(ax, ay, bx, by, px, py):
    # evaluated from the lexicographically smaller endpoint so that the two
    # triangles sharing an edge get exactly opposite values
    if (ax, ay) > (bx, by):
        return -((ax - bx) * (py - by) - (ay - by) * (px - bx))
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _owned(ax, ay, bx, by, sign):
    nx = -sign * (by - ay)
    ny = sign * (bx - ax)
    return nx > 0.0 or (nx == 0.0 and ny > 0.0)


def raster_triangles(xy, z, attr, face, depth, face_id, bary, perspective):
    height, width = depth.shape
    rejected = 0
    for t in range(len(xy)):
        (x0, y0), (x1, y1), (x2, y2) = xy[t].tolist()
        area = _edge(x0, y0, x1, y1, x2, y2)
        if abs(area) < 1e-14:
            continue
        sign = 1.0 if area > 0.0 else -1.0
        inv_area = 1.0 / abs(area)
        o0 = _owned(x1, y1, x2, y2, sign)
        o1 = _owned(x2, y2, x0, y0, sign)
        o2 = _owned(x0, y0, x1, y1, sign)
        i0 = max(math.ceil(min(x0, x1, x2) - 0.5), 0)
        i1 = min(math.floor(max(x0, x1, x2) - 0.5), width - 1)
        j0 = max(math.ceil(min(y0, y1, y2) - 0.5), 0)
        j1 = min(math.floor(max(y0, y1, y2) - 0.5), height - 1)
        if i1 < i0 or j1 < j0:
            continue
        px = np.arange(i0, i1 + 1, dtype=np.float64)[None, :] + 0.5
        py = np.arange(j0, j1 + 1, dtype=np.float64)[:, None] + 0.5
        w0 = sign * _edge(x1, y1, x2, y2, px, py)
        w1 = sign * _edge(x2, y2, x0, y0, px, py)
        w2 = sign * _edge(x0, y0, x1, y1, px, py)
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not o0:
            inside &= w0 != 0.0
        if not o1:
            inside &= w1 != 0.0
        if not o2:
            inside &= w2 != 0.0
        if not inside.any():
            continue
        jj, ii = np.nonzero(inside)
        b0 = w0[jj, ii] * inv_area
        b1 = w1[jj, ii] * inv_area
        b2 = w2[jj, ii] * inv_area
        z0, z1, z2 = z[t].tolist()
        if perspective:
            q0, q1, q2 = b0 / z0, b1 / z1, b2 / z2
            s = q0 + q1 + q2
            d = 1.0 / s
            b0, b1, b2 = q0 / s, q1 / s, q2 / s
        else:
            d = b0 * z0 + b1 * z1 + b2 * z2
        rows, cols = jj + j0, ii + i0
        win = d < depth[rows, cols]
        rejected += int((~win).sum())
        rows, cols = rows[win], cols[win]
        b0, b1, b2 = b0[win], b1[win], b2[win]
        depth[rows, cols] = d[win]
        face_id[rows, cols] = face[t]
        a = attr[t]
        for k in range(3):
            bary[rows, cols, k] = b0 * a[0, k] + b1 * a[1, k] + b2 * a[2, k]
    return rejected


def _steady(adj, cur, cur_f, has, cnt, m, it, max_iters, tol):
    """Sweeps after the filled set stopped growing: counts are fixed from here on.

    Unfilled texels never feed a sum again, so they are zeroed for the product
    (restored afterwards) and the rows without filled neighbours are dropped.
    """
    rows = np.flatnonzero(has)
    keep = np.repeat(has, np.diff(adj.indptr))
    sub = csr_matrix((adj.data[keep], adj.indices[keep], np.concatenate([[0], np.cumsum(np.diff(adj.indptr)[rows])])),
                     shape=(len(rows), adj.shape[1]))
    dead = np.flatnonzero(cur_f == 0)
    parked = cur[dead].copy()
    cur[dead] = 0.0
    div = cnt[rows][:, None]
    whole = len(rows) == m
    new = np.empty((len(rows), 3))
    diff = np.empty_like(new)
    while it < max_iters:
        it += 1
        np.divide(sub @ cur, div, out=new)
        old = cur[:m] if whole else cur[rows]
        np.subtract(new, old, out=diff)
        np.abs(diff, out=diff)
        worst = float(diff.max()) if len(rows) else 0.0
        if whole:
            cur[:m] = new
        else:
            cur[rows] = new
        if worst < tol:
            break
    cur[dead] = parked
    return it


def jacobi_fill(color, filled, label, masked, width, max_iters, tol):
    total = len(color)
    masked = np.asarray(masked, dtype=np.int64)
    m = len(masked)
    lab = label[masked]
    col = masked % width
    cand = np.stack([
        np.where(col != 0, masked - 1, -1),
        np.where(((masked + 1) % width != 0) & (masked + 1 < total), masked + 1, -1),
        masked - width,
        np.where(masked + width < total, masked + width, -1),
    ], axis=1)
    ok = cand >= 0
    ok[ok] &= label[cand[ok]] == np.repeat(lab, 4).reshape(m, 4)[ok]
    # compact index space: masked texels first, then the fixed neighbours they read
    local = np.full(total, -1, dtype=np.int64)
    local[masked] = np.arange(m)
    outside = np.unique(cand[ok][local[cand[ok]] < 0])
    local[outside] = m + np.arange(len(outside))
    src = np.concatenate([masked, outside])
    # one CSR row per masked texel with its neighbours stored left, right, up, down;
    # scipy sums a row in stored order from zero, which is the compiled loop's order
    indptr = np.concatenate([[0], np.cumsum(ok.sum(axis=1))])
    adj = csr_matrix((np.ones(int(indptr[-1])), local[cand[ok]], indptr), shape=(m, len(src)))

    cur = color[src].copy()
    cur_f = filled[src].astype(np.float64)
    it = 0
    done = False
    while it < max_iters:
        it += 1
        cnt = adj @ cur_f
        acc = adj @ (cur * cur_f[:, None])
        has = cnt > 0
        old = cur[:m]
        was = cur_f[:m] != 0
        new = np.where(has[:, None], acc / np.maximum(cnt, 1)[:, None], old)
        grew = bool((has & ~was).any())
        both = has & was
        worst = float(np.abs(new[both] - old[both]).max()) if both.any() else 0.0
        cur[:m] = new
        cur_f[:m] = np.where(has, 1.0, cur_f[:m])
        if not grew and worst < tol:
            done = True
            break
        if not grew:
            break
    if not done and it < max_iters:
        it = _steady(adj, cur, cur_f, has, cnt, m, it, max_iters, tol)
    color[masked] = cur[:m]
    filled[masked] = cur_f[:m].astype(filled.dtype)
    return it
