"""Dense 2-D float64 linear algebra and activation kernels.

Everything operates on plain numpy arrays of shape (rows, cols) and is a
pure function of its inputs: the same call is bit-identical across runs.

Matrix products have two modes. The default hands off to BLAS, which is
fast and reproducible per shape but may round the *same* mathematical
sum differently for different matrix shapes (kernel tiling). Inside an
``exact_arithmetic()`` block, products instead accumulate rank-1 terms
strictly in input-channel order, so the rounding of each output element
depends only on the sequence of (a_ik, b_kj) values feeding it - never
on how wide the matrices are. That is the arithmetic under which a
zero-initialised width expansion leaves every pre-existing output
bit-identical, and it is what function-preservation checks run in.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .errors import NumericError, ValidationError

_INV_SQRT_2PI = 0.3989422804014327

_EXACT_MODE = False


@contextmanager
def exact_arithmetic():
    """Shape-stable, channel-ordered summation for every matmul inside."""
    global _EXACT_MODE
    previous = _EXACT_MODE
    _EXACT_MODE = True
    try:
        yield
    finally:
        _EXACT_MODE = previous


def exact_mode_active() -> bool:
    return _EXACT_MODE


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got ndim={a.ndim}")
    return a


def _matmul_channel_ordered(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]))
    tmp = np.empty_like(out)
    for k in range(a.shape[1]):
        np.multiply(a[:, k, None], b[k, None, :], out=tmp)
        out += tmp
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product; see the module docstring for the two modes."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValidationError(
            f"matmul shape mismatch: {a.shape[0]}x{a.shape[1]} @ "
            f"{b.shape[0]}x{b.shape[1]}"
        )
    if _EXACT_MODE:
        return _matmul_channel_ordered(a, b)
    return a @ b


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact-CDF GeLU, x * Phi(x). Maps 0 to 0 bit-exactly."""
    x = np.asarray(x, dtype=np.float64)
    return x * ndtr(x)


def gelu_derivative(x: np.ndarray) -> np.ndarray:
    """d/dx of exact-CDF GeLU: Phi(x) + x * phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    return ndtr(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def softmax_rows(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise softmax with max-subtraction.

    ``mask`` is an optional boolean array of the same shape; False entries
    are excluded and come out exactly 0. A row with nothing allowed is an
    error rather than a NaN.
    """
    x = as_matrix(x, "x")
    if mask is None:
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ValidationError(f"mask shape {mask.shape} != x shape {x.shape}")
    if not mask.any(axis=1).all():
        bad = int(np.flatnonzero(~mask.any(axis=1))[0])
        raise ValidationError(f"softmax row {bad} is fully masked")
    neg = np.where(mask, x, -np.inf)
    shifted = neg - neg.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def causal_mask(n: int) -> np.ndarray:
    """Lower-triangular boolean mask: position i may attend to j <= i."""
    return np.tril(np.ones((n, n), dtype=bool))


def qr_thin(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR with the sign convention diag(r) >= 0.

    Requires rows >= cols and numerically independent columns
    (pivot tolerance 1e-10).
    """
    m = as_matrix(m, "m")
    if m.shape[0] < m.shape[1]:
        raise ValidationError(f"qr_thin needs rows >= cols, got {m.shape}")
    q, r = np.linalg.qr(m, mode="reduced")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    r = r * signs[:, None]
    if np.abs(np.diag(r)).min() < 1e-10:
        raise ValidationError("qr_thin: rank-deficient input (pivot below 1e-10)")
    return q, r


def svd_small(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD for matrices with min(rows, cols) <= 3.

    Returns (u, s, vt) with s descending and u @ diag(s) @ vt == m to
    working precision.
    """
    m = as_matrix(m, "m")
    if min(m.shape) > 3:
        raise ValidationError(f"svd_small limited to min dim 3, got {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u, s, vt


def eig_sym3(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric 3x3 matrix.

    Eigenvalues descending; eigenvectors are the columns of the returned
    matrix, each signed so its largest-magnitude component is positive.
    """
    c = as_matrix(c, "c")
    if c.shape != (3, 3):
        raise ValidationError(f"eig_sym3 needs a 3x3 matrix, got {c.shape}")
    if np.abs(c - c.T).max() > 1e-12:
        raise ValidationError("eig_sym3: input not symmetric within 1e-12")
    vals, vecs = np.linalg.eigh(c)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    for j in range(3):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vals, vecs


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a matrix."""
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    x = as_matrix(x, "x")
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += eps
        fp = float(f(xp))
        xm = x.copy()
        xm[idx] -= eps
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"finite_diff_grad: non-finite f at index {idx}")
        g[idx] = (fp - fm) / (2.0 * eps)
    return g
