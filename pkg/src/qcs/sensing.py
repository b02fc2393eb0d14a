"""Sparse binary sensing matrices and bit-budget accounting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, GenerationFailureError, InvalidConfigError

MAX_ATTEMPTS = 1000
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SparseBinaryMatrix:
    """An ``m x n`` 0/1 matrix with exactly two ones per column.

    Only the row indices of the ones are stored (``supports``, shape
    ``(n, 2)``), so storage and multiplication are O(n).
    """

    m: int
    n: int
    supports: np.ndarray
    seed: int = 0

    def __post_init__(self):
        sup = np.array(self.supports, dtype=np.int64)
        if sup.shape != (self.n, 2):
            raise InvalidConfigError(f"supports must have shape ({self.n}, 2), got {sup.shape}")
        if np.any(sup < 0) or np.any(sup >= self.m) or np.any(sup[:, 0] == sup[:, 1]):
            raise InvalidConfigError("each column needs two distinct rows in [0, m)")
        sup.setflags(write=False)
        object.__setattr__(self, "supports", sup)

    @property
    def shape(self):
        return (self.m, self.n)

    def __eq__(self, other):
        if not isinstance(other, SparseBinaryMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.supports, other.supports)

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DataError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return kernels.sparse_matvec(self.supports, x, self.m)

    def rmatvec(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.m,):
            raise DataError(f"expected a vector of length {self.m}, got shape {r.shape}")
        return kernels.sparse_rmatvec(self.supports, r)

    def toarray(self):
        dense = np.zeros((self.m, self.n))
        cols = np.arange(self.n)
        dense[self.supports[:, 0], cols] = 1.0
        dense[self.supports[:, 1], cols] = 1.0
        return dense


def _draw_supports(m, n, rng):
    """Random column supports with balanced row degrees.

    The 2n slots hold every row floor(2n/m) or ceil(2n/m) times, so no row
    is left empty (an empty row can never be full rank).  Columns that drew
    the same row twice swap one slot with a random compatible column, which
    keeps the degrees.
    """
    slots = rng.permutation(np.resize(np.arange(m), 2 * n)).reshape(n, 2)
    for _ in range(4 * n):
        dup = np.flatnonzero(slots[:, 0] == slots[:, 1])
        if dup.size == 0:
            break
        i = dup[0]
        row = slots[i, 0]
        ok = np.flatnonzero((slots[:, 0] != row) & (slots[:, 1] != row))
        if ok.size == 0:
            break
        j = rng.choice(ok)
        slots[i, 1], slots[j, 0] = slots[j, 0], row
    return np.sort(slots, axis=1)


def generate_matrix(m, n, seed=0, max_attempts=MAX_ATTEMPTS):
    """Draw a full-row-rank sparse binary matrix, deterministic in ``seed``.

    Attempt ``k`` uses seed ``seed + k``; the first full-rank draw wins.
    """
    if m < 2:
        raise InvalidConfigError(f"need at least 2 rows to place two ones per column, got m={m}")
    if n < m:
        raise InvalidConfigError(f"need m <= n, got m={m}, n={n}")
    for attempt in range(max_attempts):
        rng = np.random.default_rng(int(seed) + attempt)
        sup = _draw_supports(m, n, rng)
        if np.any(sup[:, 0] == sup[:, 1]):
            continue
        mat = SparseBinaryMatrix(m, n, sup, seed=int(seed))
        if np.linalg.matrix_rank(mat.toarray(), tol=RANK_TOL) == m:
            return mat
    raise GenerationFailureError(
        f"no full-rank {m}x{n} matrix found in {max_attempts} attempts (seed={seed})")


def segment_seed(seed, index):
    """Independent 64-bit matrix seed for segment ``index`` (per-segment mode)."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def compress(phi, x):
    """Compressed measurements ``phi @ x``."""
    if isinstance(phi, SparseBinaryMatrix):
        return phi.matvec(x)
    phi = np.asarray(phi, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (phi.shape[1],):
        raise DataError(f"expected a vector of length {phi.shape[1]}, got shape {x.shape}")
    return phi @ x


def compression_ratio(m, n):
    return (n - m) / n


def bit_compression_ratio(m, n, bits, input_bits):
    """Fraction of the ``n*input_bits`` input budget removed when sending ``m*bits``."""
    return 1.0 - (1.0 - compression_ratio(m, n)) * bits / input_bits
