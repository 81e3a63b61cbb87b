"""Embedding diagnostics: covariance spectrum, alignment and uniformity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COLLAPSE_THRESHOLD = 1e-3
UNIFORMITY_T = 2.0


@dataclass(frozen=True)
class SpectrumReport:
    singular_values: np.ndarray  # descending, non-negative
    effective_rank: int

    @property
    def relative(self):
        """Singular values divided by the largest one (all zero for a zero spectrum)."""
        top = self.singular_values[0] if self.singular_values.size else 0.0
        return self.singular_values / top if top > 0 else np.zeros_like(self.singular_values)


def singular_spectrum(Z, threshold=COLLAPSE_THRESHOLD):
    """Singular values of the sample covariance of ``Z`` and how many exceed ``threshold * sigma_1``."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("need a matrix with at least two rows")
    Zc = Z - Z.mean(axis=0)
    cov = Zc.T @ Zc / (Z.shape[0] - 1)
    sig = np.linalg.svd(cov, compute_uv=False)
    sig = np.clip(sig, 0.0, None)
    if not np.any(Zc):
        # constant rows: the covariance is exactly zero
        return SpectrumReport(np.zeros_like(sig), 0)
    return SpectrumReport(sig, int(np.sum(sig > threshold * sig[0])))


def _unit_rows(Z):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ValueError("Z must be a matrix")
    norms = np.linalg.norm(Z, axis=1)
    keep = norms > 0
    if not keep.any():
        raise ValueError("every row has zero norm")
    return Z[keep] / norms[keep, None], keep


def _pair_sq_dists(U, rows=None, cols=None):
    rows = U if rows is None else rows
    cols = U if cols is None else cols
    return np.clip(2.0 - 2.0 * rows @ cols.T, 0.0, 4.0)


def alignment(Z, labels, block=2048):
    """Mean squared distance between unit-normalised rows that share a label.

    Zero-norm rows are dropped first.
    """
    U, keep = _unit_rows(Z)
    labels = np.asarray(labels)[keep]
    total, pairs = 0.0, 0
    for c in np.unique(labels):
        Uc = U[labels == c]
        n = Uc.shape[0]
        if n < 2:
            continue
        for start in range(0, n, block):
            D = _pair_sq_dists(None, Uc[start:start + block], Uc)
            # pairs (i, j) with j > i only
            idx = np.arange(start, min(start + block, n))[:, None]
            total += float(D[np.arange(n)[None, :] > idx].sum())
        pairs += n * (n - 1) // 2
    if pairs == 0:
        raise ValueError("no class has two non-zero rows")
    return total / pairs


def uniformity(Z, t=UNIFORMITY_T, block=2048):
    """Log of the mean of ``exp(-t * |u - v|^2)`` over distinct pairs of unit-normalised rows."""
    U, _ = _unit_rows(Z)
    n = U.shape[0]
    if n < 2:
        raise ValueError("need at least two non-zero rows")
    total = 0.0
    for start in range(0, n, block):
        D = _pair_sq_dists(None, U[start:start + block], U)
        idx = np.arange(start, min(start + block, n))[:, None]
        total += float(np.exp(-t * D)[np.arange(n)[None, :] > idx].sum())
    return float(np.log(total / (n * (n - 1) // 2)))


def diagnose(Z, labels=None):
    """Summary dict: effective rank, both spectra, and the hypersphere metrics when defined."""
    Z = np.asarray(Z, dtype=np.float64)
    spec = singular_spectrum(Z)
    zero_rows = int(np.sum(np.linalg.norm(Z, axis=1) == 0))
    report = {
        "effective_rank": spec.effective_rank,
        "singular_values": spec.singular_values.tolist(),
        "relative_singular_values": spec.relative.tolist(),
        "zero_norm_rows": zero_rows,
        "uniformity": None,
        "alignment": None,
    }
    if zero_rows < Z.shape[0] - 1:
        report["uniformity"] = uniformity(Z)
    if labels is not None:
        try:
            report["alignment"] = alignment(Z, labels)
        except ValueError:
            pass
    return report
