"""Exact discretization of linear stochastic systems dx = A x dt + noise."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm


def van_loan(a: np.ndarray, qc: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and integrated noise covariance over a step h.

    Args:
        a: drift matrix (n x n).
        qc: continuous noise intensity (n x n, symmetric PSD).
        h: step length.

    Returns:
        (phi, qd) with phi = exp(a h) and qd = int_0^h phi(s) qc phi(s)^T ds.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -a
    block[:n, n:] = qc
    block[n:, n:] = a.T
    e = expm(block * h)
    phi = e[n:, n:].T
    qd = phi @ e[:n, n:]
    return phi, 0.5 * (qd + qd.T)


def forced_response(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """int_0^h exp(a s) b ds for a constant input b."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    block = np.zeros((n + 1, n + 1))
    block[:n, :n] = a
    block[:n, n] = b
    return expm(block * h)[:n, n]


def noise_factor(qd: np.ndarray) -> np.ndarray:
    """Matrix square root L with L L^T = qd, tolerant of rank deficiency."""
    w, v = np.linalg.eigh(0.5 * (qd + qd.T))
    return v * np.sqrt(np.clip(w, 0.0, None))
