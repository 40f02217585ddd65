"""Dense linear algebra, seeded random streams and symmetric matrix functions.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Nothing here
mutates its inputs.
"""

from __future__ import annotations

import hashlib
import math

import numba
import numpy as np

from .errors import DomainError, NumericalError, ShapeError

_MASK64 = (1 << 64) - 1
_TWO_POW_M53 = 1.0 / 9007199254740992.0


def as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with a fixed accumulation order.

    ``c[i, j]`` is accumulated as ``((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)``,
    left to right over the shared index, so the result does not depend on the
    BLAS build. Use it where bit-for-bit portability matters; the layers use
    ``numpy.matmul`` for speed.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: a is {a.shape}, b is {b.shape}")
    c = a[:, 0:1] * b[0:1, :]
    for p in range(1, a.shape[1]):
        c = c + a[:, p : p + 1] * b[p : p + 1, :]
    return c


# --------------------------------------------------------------------------
# Random number generation: xoshiro256** seeded through SplitMix64.
# --------------------------------------------------------------------------


def splitmix64(x: int) -> tuple[int, int]:
    """One SplitMix64 step. Returns ``(new_state, output)``."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def derive_seed(seed: int, *keys) -> int:
    """Derive an independent 64-bit substream seed from ``seed`` and ``keys``."""
    text = repr((int(seed) & _MASK64,) + tuple(keys)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@numba.njit(cache=True)
def _next_block(state, n):
    out = np.empty(n, np.uint64)
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    for i in range(n):
        x = s1 * np.uint64(5)
        out[i] = ((x << np.uint64(7)) | (x >> np.uint64(57))) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return out


class Rng:
    """xoshiro256** generator whose 256-bit state is filled by SplitMix64(seed).

    The stream is fully defined by the seed, so any implementation of the same
    two algorithms reproduces it. Single owner: do not share across threads.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        x = self.seed
        words = []
        for _ in range(4):
            x, z = splitmix64(x)
            words.append(z)
        self._state = np.array(words, dtype=np.uint64)

    def next_u64_array(self, n: int) -> np.ndarray:
        return _next_block(self._state, int(n))

    def next_u64(self) -> int:
        return int(self.next_u64_array(1)[0])

    def next_uniform(self) -> float:
        return float(self.uniform(1)[0])

    def uniform(self, n: int) -> np.ndarray:
        """``n`` draws in [0, 1) using the top 53 bits of each output."""
        return (self.next_u64_array(n) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard normal draws (Box-Muller, cosine branch, two uniforms each)."""
        u = self.uniform(2 * n).reshape(n, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        return radius * np.cos(2.0 * math.pi * u[:, 1])

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def get_state(self) -> list[int]:
        return [int(w) for w in self._state]

    def set_state(self, words) -> None:
        if len(words) != 4:
            raise ShapeError("xoshiro256** state has four 64-bit words")
        self._state = np.array([int(w) & _MASK64 for w in words], dtype=np.uint64)


def rng_uniform_matrix(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Draw a ``rows x cols`` matrix from ``rng`` in row-major order."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"rng_uniform_matrix needs rows, cols >= 1, got {rows}x{cols}")
    return rng.uniform(rows * cols).reshape(rows, cols)


# --------------------------------------------------------------------------
# Symmetric eigendecomposition (cyclic Jacobi) and matrix functions.
# --------------------------------------------------------------------------


def _check_symmetric(s, name) -> np.ndarray:
    s = as_matrix(s, name)
    if s.shape[0] != s.shape[1]:
        raise ShapeError(f"{name} must be square, got {s.shape}")
    scale = max(1.0, float(np.max(np.abs(s))))
    if float(np.max(np.abs(s - s.T))) > 1e-9 * scale:
        raise DomainError(f"{name} is not symmetric within 1e-9")
    return 0.5 * (s + s.T)


def sym_eig(s, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.

    Cyclic Jacobi: every off-diagonal pair (p, q) is annihilated in row order
    once per sweep until the off-diagonal Frobenius norm falls below
    ``1e-12 * ||s||_F``.
    """
    a = _check_symmetric(s, "s").copy()
    n = a.shape[0]
    v = np.eye(n)
    tol = 1e-12 * float(np.linalg.norm(a))

    def off_norm(m):
        return float(np.linalg.norm(m - np.diag(np.diag(m))))

    sweeps = 0
    while off_norm(a) > tol:
        if sweeps == max_sweeps:
            raise NumericalError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-300 * max(abs(diff), 1.0):
                    # rotation angle underflows to zero
                    a[p, q] = a[q, p] = 0.0
                    continue
                tau = diff / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 1.0 / (2.0 * tau)
                else:
                    t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return values[order], v[:, order]


def sym_inv_sqrt(s, eps: float = 1e-10) -> np.ndarray:
    """Inverse principal square root ``V diag(max(lam, eps)^-1/2) V^T``."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    values, vectors = sym_eig(s)
    scale = np.maximum(values, eps) ** -0.5
    m = (vectors * scale) @ vectors.T
    return 0.5 * (m + m.T)
