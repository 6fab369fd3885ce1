# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: CART tree induction, forest voting, waypoint walk.

Semantics mirror ``atmas._pykernels`` exactly (same RNG stream, same split
scoring order, same tie rules); the test suite checks the two agree.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, sin, cos, sqrt, hypot, M_PI
from libc.stdint cimport uint64_t, int32_t, int8_t
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


cdef inline uint64_t splitmix_next(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct Pair:
    double v
    int8_t label


cdef int cmp_pair(const void* a, const void* b) noexcept nogil:
    cdef double va = (<Pair*>a).v
    cdef double vb = (<Pair*>b).v
    if va < vb:
        return -1
    if va > vb:
        return 1
    return 0


def build_tree(X, y, sample_idx, int max_depth, int mtry, int min_samples_split, seed):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.int8_t, ndim=1, mode="c"] ya = np.ascontiguousarray(y, dtype=np.int8)
    cdef cnp.ndarray[cnp.intp_t, ndim=1, mode="c"] samples = np.array(sample_idx, dtype=np.intp)
    cdef Py_ssize_t n_samp = samples.shape[0]
    cdef int n_feat = Xa.shape[1]
    if mtry > n_feat:
        mtry = n_feat
    if mtry < 1:
        mtry = 1
    cdef uint64_t state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)

    cdef Py_ssize_t cap = 2 * n_samp + 1
    cdef cnp.ndarray[cnp.int32_t, ndim=1] feature = np.full(cap, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] threshold = np.zeros(cap, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] left = np.full(cap, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] right = np.full(cap, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] count0 = np.zeros(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] count1 = np.zeros(cap, dtype=np.int32)

    cdef int* perm = <int*>malloc(n_feat * sizeof(int))
    cdef int* subset = <int*>malloc(n_feat * sizeof(int))
    cdef Pair* pairs = <Pair*>malloc((n_samp + 1) * sizeof(Pair))
    cdef Py_ssize_t* tmp = <Py_ssize_t*>malloc((n_samp + 1) * sizeof(Py_ssize_t))
    # explicit stack: node, start, end, depth
    cdef Py_ssize_t* st_node = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef Py_ssize_t* st_start = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef Py_ssize_t* st_end = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef int* st_depth = <int*>malloc(cap * sizeof(int))
    if not (perm and subset and pairs and tmp and st_node and st_start and st_end and st_depth):
        free(perm); free(subset); free(pairs); free(tmp)
        free(st_node); free(st_start); free(st_end); free(st_depth)
        raise MemoryError()

    cdef Py_ssize_t i, j, r, node, start, end, m, mid, nl_i, k
    cdef int depth, f, c0, c1, a_, best_f, tmpi
    cdef double best_score, score, thr, best_thr, nl, nr, l0, l1, r0, r1, va, vb
    cdef int tot0, tot1, ones, have_best
    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t sp = 0
    cdef cnp.intp_t s

    for i in range(n_feat):
        perm[i] = i

    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_samp
    st_depth[0] = 0
    sp = 1

    with nogil:
        while sp > 0:
            sp -= 1
            node = st_node[sp]
            start = st_start[sp]
            end = st_end[sp]
            depth = st_depth[sp]
            m = end - start
            c1 = 0
            for i in range(start, end):
                c1 += ya[samples[i]]
            c0 = <int>m - c1
            count0[node] = c0
            count1[node] = c1
            if depth >= max_depth or m < min_samples_split or c0 == 0 or c1 == 0:
                continue

            for j in range(mtry):
                r = j + <Py_ssize_t>(splitmix_next(&state) % <uint64_t>(n_feat - j))
                tmpi = perm[j]
                perm[j] = perm[r]
                perm[r] = tmpi
            for j in range(mtry):
                subset[j] = perm[j]
            # insertion sort: subset is tiny
            for j in range(1, mtry):
                tmpi = subset[j]
                k = j - 1
                while k >= 0 and subset[k] > tmpi:
                    subset[k + 1] = subset[k]
                    k -= 1
                subset[k + 1] = tmpi

            have_best = 0
            best_score = 0.0
            best_thr = 0.0
            best_f = -1
            for j in range(mtry):
                f = subset[j]
                for i in range(m):
                    s = samples[start + i]
                    pairs[i].v = Xa[s, f]
                    pairs[i].label = ya[s]
                qsort(pairs, m, sizeof(Pair), cmp_pair)
                tot1 = c1
                tot0 = c0
                ones = 0
                for i in range(m - 1):
                    ones += pairs[i].label
                    if pairs[i].v < pairs[i + 1].v:
                        l1 = <double>ones
                        nl = <double>(i + 1)
                        l0 = nl - l1
                        nr = <double>m - nl
                        r1 = <double>tot1 - l1
                        r0 = <double>tot0 - l0
                        score = (nl - (l0 * l0 + l1 * l1) / nl) + (nr - (r0 * r0 + r1 * r1) / nr)
                        if have_best == 0 or score < best_score:
                            va = pairs[i].v
                            vb = pairs[i + 1].v
                            thr = va + (vb - va) * 0.5
                            if thr >= vb:
                                thr = va
                            best_score = score
                            best_thr = thr
                            best_f = f
                            have_best = 1
            if have_best == 0:
                continue

            # stable partition of samples[start:end]
            k = 0
            for i in range(start, end):
                if Xa[samples[i], best_f] <= best_thr:
                    tmp[k] = samples[i]
                    k += 1
            mid = start + k
            for i in range(start, end):
                if not (Xa[samples[i], best_f] <= best_thr):
                    tmp[k] = samples[i]
                    k += 1
            for i in range(m):
                samples[start + i] = tmp[i]

            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = <int>n_nodes
            right[node] = <int>(n_nodes + 1)
            n_nodes += 2
            st_node[sp] = right[node]
            st_start[sp] = mid
            st_end[sp] = end
            st_depth[sp] = depth + 1
            sp += 1
            st_node[sp] = left[node]
            st_start[sp] = start
            st_end[sp] = mid
            st_depth[sp] = depth + 1
            sp += 1

    free(perm); free(subset); free(pairs); free(tmp)
    free(st_node); free(st_start); free(st_end); free(st_depth)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), count0[:n_nodes].copy(), count1[:n_nodes].copy())


def tree_votes(feature, threshold, left, right, count0, count1, X):
    offsets = np.array([0, len(feature)], dtype=np.int64)
    return forest_votes(offsets, feature, threshold, left, right, count0, count1, X)


def forest_votes(offsets, feature, threshold, left, right, count0, count1, X):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] fe = np.ascontiguousarray(feature, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] th = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] le = np.ascontiguousarray(left, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ri = np.ascontiguousarray(right, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] k0 = np.ascontiguousarray(count0, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] k1 = np.ascontiguousarray(count1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n_rows = Xa.shape[0]
    cdef Py_ssize_t n_trees = off.shape[0] - 1
    cdef cnp.ndarray[cnp.int32_t, ndim=1] total = np.zeros(n_rows, dtype=np.int32)
    cdef Py_ssize_t t, row, base, node
    with nogil:
        for t in range(n_trees):
            base = off[t]
            for row in range(n_rows):
                node = 0
                while fe[base + node] >= 0:
                    if Xa[row, fe[base + node]] <= th[base + node]:
                        node = le[base + node]
                    else:
                        node = ri[base + node]
                if k1[base + node] > k0[base + node]:
                    total[row] += 1
    return total


def waypoint_walk(double x0, double y0, double home_x, double home_y, double roam_km,
                  double lo, double hi, double dt_s, speeds_kmh, heading_noise_rad, waypoint_draws,
                  double rho=0.0):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sp = np.ascontiguousarray(speeds_kmh, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nz = np.ascontiguousarray(heading_noise_rad, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] dr = np.ascontiguousarray(waypoint_draws, dtype=np.float64)
    cdef Py_ssize_t n = sp.shape[0]
    cdef Py_ssize_t k = dr.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pos = np.empty((n + 1, 2), dtype=np.float64)
    cdef double x = x0, y = y0, wx, wy, step, dx, dy, dist, h, rr, th, e = 0.0
    cdef Py_ssize_t i, used = 0
    pos[0, 0] = x
    pos[0, 1] = y

    rr = roam_km * sqrt(dr[used % k, 0])
    th = 2.0 * M_PI * dr[used % k, 1]
    used += 1
    wx = _clamp(home_x + rr * sin(th), lo, hi)
    wy = _clamp(home_y + rr * cos(th), lo, hi)
    with nogil:
        for i in range(n):
            e = rho * e + nz[i]
            step = sp[i] * dt_s / 3600.0
            dx = wx - x
            dy = wy - y
            dist = hypot(dx, dy)
            if step >= dist:
                if step > 0.0:
                    x = wx
                    y = wy
                    rr = roam_km * sqrt(dr[used % k, 0])
                    th = 2.0 * M_PI * dr[used % k, 1]
                    used += 1
                    wx = _clamp(home_x + rr * sin(th), lo, hi)
                    wy = _clamp(home_y + rr * cos(th), lo, hi)
            else:
                h = atan2(dx, dy) + e
                x = _clamp(x + step * sin(h), lo, hi)
                y = _clamp(y + step * cos(h), lo, hi)
            pos[i + 1, 0] = x
            pos[i + 1, 1] = y
    return pos


cdef inline double _clamp(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v
