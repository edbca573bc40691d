# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in `sdfl._kernels_np`.

Same selection rules (ties to lowest index, sign(0) = -1); the hot decode
loop avoids the temporaries and fancy indexing of the numpy version.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef double _kth_largest_abs(double[::1] buf, Py_ssize_t n, Py_ssize_t s) nogil:
    # Iterative quickselect for the s-th largest value of buf[0:n].
    # buf is scratch (already |v|) and gets permuted in place.
    cdef Py_ssize_t lo = 0, hi = n - 1, target = n - s
    cdef Py_ssize_t i, j, mid
    cdef double pivot, tmp
    while lo < hi:
        mid = lo + (hi - lo) // 2
        # median-of-three pivot, moved to position hi
        if buf[mid] < buf[lo]:
            tmp = buf[mid]; buf[mid] = buf[lo]; buf[lo] = tmp
        if buf[hi] < buf[lo]:
            tmp = buf[hi]; buf[hi] = buf[lo]; buf[lo] = tmp
        if buf[hi] < buf[mid]:
            tmp = buf[hi]; buf[hi] = buf[mid]; buf[mid] = tmp
        pivot = buf[mid]
        tmp = buf[mid]; buf[mid] = buf[hi]; buf[hi] = tmp
        i = lo
        for j in range(lo, hi):
            if buf[j] < pivot:
                tmp = buf[i]; buf[i] = buf[j]; buf[j] = tmp
                i += 1
        tmp = buf[i]; buf[i] = buf[hi]; buf[hi] = tmp
        if i == target:
            return buf[i]
        elif i < target:
            lo = i + 1
        else:
            hi = i - 1
    return buf[lo]


cdef Py_ssize_t _select_top_s(const double[::1] v, Py_ssize_t n, Py_ssize_t s,
                              double[::1] scratch, long long[::1] out) nogil:
    # Writes the ascending indices of the s largest |v| into out[0:s];
    # ties broken toward the lowest index. Returns the count written.
    cdef Py_ssize_t i, g = 0, k = 0
    cdef double kth, a
    if s >= n:
        for i in range(n):
            out[i] = i
        return n
    for i in range(n):
        scratch[i] = v[i] if v[i] >= 0 else -v[i]
    kth = _kth_largest_abs(scratch, n, s)
    for i in range(n):
        a = v[i] if v[i] >= 0 else -v[i]
        if a > kth:
            g += 1
    # strictly-greater entries all kept; fill the rest with the lowest-index
    # entries equal to the threshold
    cdef Py_ssize_t need = s - g
    for i in range(n):
        a = v[i] if v[i] >= 0 else -v[i]
        if a > kth:
            out[k] = i
            k += 1
        elif a == kth and need > 0:
            out[k] = i
            k += 1
            need -= 1
        if k == s:
            break
    return k


def top_s_indices(v, s):
    """Indices (ascending) of the s largest |v| entries, ties to lowest index."""
    cdef cnp.ndarray[double, ndim=1] varr = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = varr.shape[0]
    cdef Py_ssize_t ss = s
    if ss <= 0:
        return np.empty(0, dtype=np.int64)
    if ss > n:
        ss = n
    scratch = np.empty(n, dtype=np.float64)
    out = np.empty(ss, dtype=np.int64)
    cdef double[::1] sview = scratch
    cdef long long[::1] oview = out
    cdef Py_ssize_t k = _select_top_s(varr, n, ss, sview, oview)
    return out[:k]


def biht_solve(phi, bits, s, max_iters, stall_iters, step):
    """Compiled version of `sdfl._kernels_np.biht_solve`; same contract."""
    # const views: the measurement matrix arrives read-only from the cache
    cdef const double[:, ::1] Pv = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(bits, dtype=np.float64)
    cdef Py_ssize_t d = Pv.shape[0], n = Pv.shape[1]
    cdef Py_ssize_t ss = min(<Py_ssize_t> s, n)
    cdef Py_ssize_t cap = max_iters, stall = stall_iters
    cdef double eta = step

    cdef cnp.ndarray[double, ndim=1] a = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] vvals = np.zeros(ss)
    cdef cnp.ndarray[double, ndim=1] best = np.zeros(n)
    cdef cnp.ndarray[long long, ndim=1] idx = np.zeros(ss, dtype=np.int64)
    cdef cnp.ndarray[long long, ndim=1] mism = np.zeros(d, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] scratch = np.zeros(n)

    cdef double[::1] av = a, vv = vvals, bv = best, sv = scratch
    cdef long long[::1] iv = idx, mv = mism

    cdef Py_ssize_t i, j, t, k, nmis, it = 0, best_mis = d + 1, since = 0
    cdef double acc, nv, yp

    # init: correlate the bits, threshold, normalize (row-major streaming)
    with nogil:
        for j in range(n):
            av[j] = 0.0
        for t in range(d):
            acc = cv[t]
            for j in range(n):
                av[j] += acc * Pv[t, j]
    k = _select_top_s(av, n, ss, sv, iv)
    nv = 0.0
    for i in range(k):
        vv[i] = av[iv[i]]
        nv += vv[i] * vv[i]
    if nv == 0.0:
        return np.zeros(n), int(d), 0
    nv = nv ** 0.5
    for i in range(k):
        vv[i] /= nv

    while True:
        with nogil:
            nmis = 0
            for t in range(d):
                acc = 0.0
                for i in range(k):
                    acc += Pv[t, iv[i]] * vv[i]
                yp = 1.0 if acc > 0.0 else -1.0
                if yp != cv[t]:
                    mv[nmis] = t
                    nmis += 1
        if nmis < best_mis:
            best_mis = nmis
            best[:] = 0.0
            for i in range(k):
                bv[iv[i]] = vv[i]
            since = 0
        else:
            since += 1
        if nmis == 0 or since >= stall or it >= cap:
            break
        it += 1
        with nogil:
            for j in range(n):
                av[j] = 0.0
            for i in range(k):
                av[iv[i]] = vv[i]
            for i in range(nmis):
                t = mv[i]
                acc = eta * cv[t]
                for j in range(n):
                    av[j] += acc * Pv[t, j]
        k = _select_top_s(av, n, ss, sv, iv)
        nv = 0.0
        for i in range(k):
            vv[i] = av[iv[i]]
            nv += vv[i] * vv[i]
        if nv == 0.0:
            break
        nv = nv ** 0.5
        for i in range(k):
            vv[i] /= nv
    return best, int(best_mis), int(it)
