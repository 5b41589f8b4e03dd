# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled naive-Bayes posterior and proportional-pick kernels.

Mirrors ``_kernels_py`` exactly; keep the two in sync.
"""

from libc.math cimport log, exp, INFINITY, NAN


cdef inline double _log(double x):
    if x > 0.0:
        return log(x)
    return -INFINITY


cdef void _numerators(double prior, object agrees, object pv, object pi,
                      double* a_out, double* b_out) except *:
    cdef Py_ssize_t n = len(agrees)
    cdef Py_ssize_t i
    cdef double a = _log(prior)
    cdef double b = _log(1.0 - prior)
    cdef double v, w
    if len(pv) != n or len(pi) != n:
        n = min(n, len(pv), len(pi))
    for i in range(n):
        v = pv[i]
        w = pi[i]
        if agrees[i]:
            a += _log(v)
            b += _log(w)
        else:
            a += _log(1.0 - v)
            b += _log(1.0 - w)
    a_out[0] = a
    b_out[0] = b


def log_odds_posterior(double prior, agrees, p_agree_valid, p_agree_invalid):
    cdef double a, b
    _numerators(prior, agrees, p_agree_valid, p_agree_invalid, &a, &b)
    return a, b


def posterior(double prior, agrees, p_agree_valid, p_agree_invalid):
    cdef double a, b, d, e
    _numerators(prior, agrees, p_agree_valid, p_agree_invalid, &a, &b)
    if a == -INFINITY and b == -INFINITY:
        return NAN
    if a == -INFINITY:
        return 0.0
    if b == -INFINITY:
        return 1.0
    d = b - a
    if d > 0:
        e = exp(-d)
        return e / (1.0 + e)
    return 1.0 / (1.0 + exp(d))


def weighted_pick(weights, double u):
    cdef Py_ssize_t n = len(weights)
    cdef Py_ssize_t i
    cdef double total = 0.0
    cdef double acc = 0.0
    cdef double target
    for i in range(n):
        total += <double>weights[i]
    target = u * total
    for i in range(n):
        acc += <double>weights[i]
        if target < acc:
            return i
    return n - 1
