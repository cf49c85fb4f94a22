# Compiled implementations of the hot kernels. Semantics must match
# `_pykern` exactly; see that module for the contract. The only tolerated
# divergence is last-ulp float noise from summation order in dot products.

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef unsigned long long FNV_OFFSET = 0xCBF29CE484222325ULL
cdef unsigned long long FNV_PRIME = 0x100000001B3ULL
cdef unsigned char WORD_PREFIX = 0x01
cdef unsigned char TRIGRAM_PREFIX = 0x02
cdef unsigned char PAD_BYTE = 0x23  # b'#'


cdef inline bint _is_ws(unsigned char b) nogil:
    return b == 0x20 or (0x09 <= b <= 0x0D)


cdef inline unsigned long long _fnv_byte(unsigned long long h, unsigned char b) nogil:
    return (h ^ <unsigned long long>b) * FNV_PRIME


def featurize(bytes data, long long hash_dim):
    cdef const unsigned char* buf = data
    cdef Py_ssize_t n = len(data)
    cdef Py_ssize_t cap = 2 * n + 1
    idx_buf = np.empty(cap, dtype=np.int64)
    sgn_buf = np.empty(cap, dtype=np.float64)
    cdef long long[::1] ib = idx_buf
    cdef double[::1] sb = sgn_buf
    cdef Py_ssize_t m = 0, pos = 0, start, wlen, i
    cdef unsigned long long h
    cdef unsigned long long hdim = <unsigned long long>hash_dim
    cdef unsigned char c0, c1, c2
    while pos < n:
        while pos < n and _is_ws(buf[pos]):
            pos += 1
        start = pos
        while pos < n and not _is_ws(buf[pos]):
            pos += 1
        if pos == start:
            continue
        wlen = pos - start
        h = _fnv_byte(FNV_OFFSET, WORD_PREFIX)
        for i in range(wlen):
            h = _fnv_byte(h, buf[start + i])
        ib[m] = <long long>(h % hdim)
        sb[m] = -1.0 if (h >> 63) else 1.0
        m += 1
        # trigrams of b'#' + word + b'#': wlen windows
        for i in range(wlen):
            c0 = PAD_BYTE if i == 0 else buf[start + i - 1]
            c1 = buf[start + i]
            c2 = PAD_BYTE if i + 1 == wlen else buf[start + i + 1]
            h = _fnv_byte(FNV_OFFSET, TRIGRAM_PREFIX)
            h = _fnv_byte(h, c0)
            h = _fnv_byte(h, c1)
            h = _fnv_byte(h, c2)
            ib[m] = <long long>(h % hdim)
            sb[m] = -1.0 if (h >> 63) else 1.0
            m += 1
    if m == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    order = np.argsort(idx_buf[:m])
    cdef long long[::1] ov = order.astype(np.int64, copy=False)
    out_idx = np.empty(m, dtype=np.int64)
    out_val = np.empty(m, dtype=np.float64)
    cdef long long[::1] oi = out_idx
    cdef double[::1] pv = out_val
    cdef Py_ssize_t cnt = 0, j
    cdef long long cur = ib[ov[0]]
    cdef double acc = 0.0
    for j in range(m):
        if ib[ov[j]] != cur:
            if acc != 0.0:
                oi[cnt] = cur
                pv[cnt] = acc
                cnt += 1
            cur = ib[ov[j]]
            acc = 0.0
        acc += sb[ov[j]]
    if acc != 0.0:
        oi[cnt] = cur
        pv[cnt] = acc
        cnt += 1
    return out_idx[:cnt].copy(), out_val[:cnt].copy()


cdef inline void _project(
    double[:, ::1] P,
    long long[::1] idx,
    double[::1] val,
    double* out,
) nogil:
    cdef Py_ssize_t proj_dim = P.shape[0]
    cdef Py_ssize_t nnz = idx.shape[0]
    cdef Py_ssize_t r, j
    cdef double s
    for r in range(proj_dim):
        s = 0.0
        for j in range(nnz):
            s += val[j] * P[r, idx[j]]
        out[r] = s


def embed(double[:, ::1] projection, idx, val):
    cdef long long[::1] iv
    cdef double[::1] vv
    out = np.zeros(projection.shape[0], dtype=np.float64)
    if len(idx) == 0:
        return out
    iv = idx
    vv = val
    cdef double[::1] ov = out
    _project(projection, iv, vv, &ov[0])
    return out


def embed_batch(double[:, ::1] projection, list feats):
    cdef Py_ssize_t n = len(feats)
    out = np.zeros((n, projection.shape[0]), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef long long[::1] iv
    cdef double[::1] vv
    cdef Py_ssize_t i
    for i in range(n):
        idx, val = feats[i]
        if len(idx) == 0:
            continue
        iv = idx
        vv = val
        _project(projection, iv, vv, &ov[i, 0])
    return out


def train_block(
    double[:, ::1] projection,
    double scale,
    list idx_list,
    list val_list,
    long long[::1] pair_a,
    long long[::1] pair_b,
    unsigned char[::1] pair_same,
    long long[::1] order,
    Py_ssize_t batch_size,
    double lr,
    double weight_decay,
    double margin,
):
    cdef Py_ssize_t proj_dim = projection.shape[0]
    cdef Py_ssize_t n = order.shape[0]
    cdef double loss_sum = 0.0
    cdef Py_ssize_t steps = 0
    cdef Py_ssize_t pos = 0, bn, bi, r, j
    cdef long long pid, a, b
    cdef double d, d2, gap, gcoef, coef
    e1_arr = np.empty(proj_dim, dtype=np.float64)
    e2_arr = np.empty(proj_dim, dtype=np.float64)
    g_arr = np.empty((batch_size, proj_dim), dtype=np.float64)
    act_arr = np.zeros(batch_size, dtype=np.uint8)
    aa_arr = np.zeros(batch_size, dtype=np.int64)
    bb_arr = np.zeros(batch_size, dtype=np.int64)
    cdef double[::1] e1 = e1_arr
    cdef double[::1] e2 = e2_arr
    cdef double[:, ::1] g = g_arr
    cdef unsigned char[::1] act = act_arr
    cdef long long[::1] aa = aa_arr
    cdef long long[::1] bb = bb_arr
    cdef long long[::1] iv
    cdef double[::1] vv
    cdef double cg
    while pos < n:
        bn = n - pos
        if bn > batch_size:
            bn = batch_size
        for bi in range(bn):
            pid = order[pos + bi]
            a = pair_a[pid]
            b = pair_b[pid]
            aa[bi] = a
            bb[bi] = b
            act[bi] = 0
            iv = idx_list[a]
            vv = val_list[a]
            _project(projection, iv, vv, &e1[0])
            iv = idx_list[b]
            vv = val_list[b]
            _project(projection, iv, vv, &e2[0])
            d2 = 0.0
            for r in range(proj_dim):
                e1[r] = scale * e1[r]
                e2[r] = scale * e2[r]
                d2 += (e1[r] - e2[r]) * (e1[r] - e2[r])
            d = sqrt(d2)
            if pair_same[pid]:
                loss_sum += d * d
                for r in range(proj_dim):
                    g[bi, r] = 2.0 * (e1[r] - e2[r])
                act[bi] = 1
            else:
                if d < margin:
                    gap = margin - d
                    loss_sum += gap * gap
                    if d > 0.0:
                        gcoef = -2.0 * gap / d
                        for r in range(proj_dim):
                            g[bi, r] = gcoef * (e1[r] - e2[r])
                        act[bi] = 1
        scale *= 1.0 - lr * weight_decay
        coef = -lr / (bn * scale)
        for bi in range(bn):
            if not act[bi]:
                continue
            iv = idx_list[aa[bi]]
            vv = val_list[aa[bi]]
            for r in range(proj_dim):
                cg = coef * g[bi, r]
                for j in range(iv.shape[0]):
                    projection[r, iv[j]] += cg * vv[j]
            iv = idx_list[bb[bi]]
            vv = val_list[bb[bi]]
            for r in range(proj_dim):
                cg = coef * g[bi, r]
                for j in range(iv.shape[0]):
                    projection[r, iv[j]] -= cg * vv[j]
        pos += bn
        steps += 1
    return scale, loss_sum, steps
