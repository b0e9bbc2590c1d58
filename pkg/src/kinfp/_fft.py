"""Thin FFT layer so the worker count is set in one place."""

import scipy.fft as _sfft

_WORKERS = 1


def set_threads(n):
    global _WORKERS
    _WORKERS = max(1, int(n))


def get_threads():
    return _WORKERS


def fftn(a, axes=None):
    return _sfft.fftn(a, axes=axes, workers=_WORKERS)


def ifftn(a, axes=None):
    return _sfft.ifftn(a, axes=axes, workers=_WORKERS)
