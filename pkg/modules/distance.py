"""
distance.py

Dissimilarity kernels between univariate series: the lock-step distance, dynamic time
warping (DTW) with an optional Sakoe-Chiba band, a packed batch kernel used to build
dissimilarity matrices, and an exhaustive DTW oracle for tests.

Ground cost is |a_i - b_j| throughout. The step pattern is the symmetric three-way
{(-1,0), (0,-1), (-1,-1)}. On unequal lengths the band follows the rescaled diagonal
joining (0, 0) to (n-1, m-1); a radius too narrow to connect the two corners is widened
to the smallest radius that does.

Functions:
- euclidean(a, b): Sum of absolute point-wise differences.
- dtw(a, b, band): Banded DTW distance.
- dtw_pairs(queries, references, band, n_jobs): All-pairs DTW matrix.
- dtw_bruteforce(a, b): Minimum cost over every warping path (lengths <= 10).
- band_cell_count(n, m, band): Number of DP cells a banded DTW evaluates.
"""

import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from numba import njit

BRUTEFORCE_MAX_LENGTH = 10


@njit(cache=True, nogil=True)
def _resolve_radius(n, m, radius, fraction):
    longest = max(n, m)
    if radius >= 0:
        return radius
    if fraction > 0.0:
        return int(math.ceil(fraction * longest))
    return longest


@njit(cache=True, nogil=True)
def _band_limits(i, n, m, r):
    """Inclusive column range of row i around the rescaled diagonal."""
    if n == 1:
        return 0, m - 1
    if m == 1:
        return 0, 0
    den = n - 1
    num = i * (m - 1)
    lo = -((r * den - num) // den)
    hi = (num + r * den) // den
    if lo < 0:
        lo = 0
    if hi > m - 1:
        hi = m - 1
    return lo, hi


@njit(cache=True, nogil=True)
def _feasible_radius(n, m, r):
    """Smallest radius >= r whose band connects (0, 0) to (n-1, m-1)."""
    if n == 1 or m == 1:
        return r
    while True:
        ok = True
        plo, phi = _band_limits(0, n, m, r)
        for i in range(1, n):
            lo, hi = _band_limits(i, n, m, r)
            if lo > hi or lo > phi + 1:
                ok = False
                break
            plo, phi = lo, hi
        if ok:
            return r
        r += 1


@njit(cache=True, nogil=True)
def _dtw_kernel(a, b, r):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    plo, phi = 0, -1
    for i in range(n):
        lo, hi = _band_limits(i, n, m, r)
        for j in range(lo, hi + 1):
            cost = abs(a[i] - b[j])
            if i == 0 and j == 0:
                cur[j] = cost
                continue
            best = np.inf
            if i > 0:
                if plo <= j <= phi:
                    best = prev[j]
                if plo <= j - 1 <= phi and prev[j - 1] < best:
                    best = prev[j - 1]
            if j > lo and cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = cost + best
        prev, cur = cur, prev
        plo, phi = lo, hi
    return prev[m - 1]


@njit(cache=True, nogil=True)
def _lockstep_kernel(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        total = total + abs(a[i] - b[i])
    return total


@njit(cache=True, nogil=True)
def _dtw_packed(q_values, q_offsets, r_values, r_offsets, radius, fraction, out):
    """Fills out[i, j] with DTW(query i, reference j); series are packed CSR-style."""
    for i in range(q_offsets.shape[0] - 1):
        a = q_values[q_offsets[i]:q_offsets[i + 1]]
        for j in range(r_offsets.shape[0] - 1):
            b = r_values[r_offsets[j]:r_offsets[j + 1]]
            n = a.shape[0]
            m = b.shape[0]
            r = _feasible_radius(n, m, _resolve_radius(n, m, radius, fraction))
            out[i, j] = _dtw_kernel(a, b, r)


@dataclass(frozen=True)
class BandSpec:
    """
    Sakoe-Chiba band. `radius` fixes the width in cells; otherwise `fraction` scales it
    with the longer series; with neither the band is unbounded.
    """

    radius: int = -1
    fraction: float = 0.0

    def __post_init__(self):
        if self.radius < -1:
            raise ValueError(f"Band radius must be non-negative, got {self.radius}")
        if self.fraction < 0.0:
            raise ValueError(f"Band fraction must be non-negative, got {self.fraction}")

    @classmethod
    def unbounded(cls):
        return cls()

    @classmethod
    def parse(cls, text):
        """
        Parses 'unbounded', an integer radius ('5') or a percentage of the longer series ('10%').
        """
        if isinstance(text, BandSpec):
            return text
        if text is None:
            return cls()
        if isinstance(text, (int, np.integer)):
            return cls(radius=int(text))
        text = str(text).strip().lower()
        if text in ('unbounded', 'none', 'inf', ''):
            return cls()
        if text.endswith('%'):
            return cls(fraction=float(text[:-1]) / 100.0)
        return cls(radius=int(text))

    @property
    def is_unbounded(self):
        return self.radius < 0 and self.fraction == 0.0

    def resolve(self, n, m):
        """Effective radius for lengths n and m, widened until the band is connected."""
        return int(_feasible_radius(n, m, _resolve_radius(n, m, self.radius, self.fraction)))

    def __str__(self):
        if self.radius >= 0:
            return str(self.radius)
        if self.fraction > 0.0:
            return f"{self.fraction * 100:g}%"
        return 'unbounded'


UNBOUNDED = BandSpec()


def _as_series(values):
    series = np.ascontiguousarray(values, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError(f"Series must be one-dimensional, got shape {series.shape}")
    if not np.all(np.isfinite(series)):
        raise ValueError("Series must hold finite values only")
    return series


def euclidean(a, b):
    """
    Lock-step distance: the sum over i of sqrt((a_i - b_i)^2), i.e. the sum of absolute
    differences, accumulated left to right like the DTW diagonal path.

    Parameters:
    - a (array-like): First series.
    - b (array-like): Second series of the same length.

    Returns:
    - float: Non-negative distance.
    """
    a, b = _as_series(a), _as_series(b)
    if a.shape != b.shape:
        raise ValueError(f"Lock-step distance needs equal lengths, got {a.size} and {b.size}")
    return float(_lockstep_kernel(a, b))


def dtw(a, b, band=UNBOUNDED):
    """
    DTW distance D(n, m) with D(i,j) = |a_i - b_j| + min(D(i-1,j), D(i,j-1), D(i-1,j-1)).

    Parameters:
    - a (array-like): First series, non-empty.
    - b (array-like): Second series, non-empty.
    - band (BandSpec, int, str or None): Sakoe-Chiba band; unbounded by default.

    Returns:
    - float: Non-negative distance.
    """
    a, b = _as_series(a), _as_series(b)
    if a.size == 0 or b.size == 0:
        raise ValueError("DTW needs non-empty series; impute empty windows first")
    band = BandSpec.parse(band)
    return float(_dtw_kernel(a, b, band.resolve(a.size, b.size)))


def _pack(series_list):
    offsets = np.zeros(len(series_list) + 1, dtype=np.int64)
    for i, s in enumerate(series_list):
        if len(s) == 0:
            raise ValueError("DTW needs non-empty series; impute empty windows first")
        offsets[i + 1] = offsets[i] + len(s)
    values = np.concatenate([np.asarray(s, dtype=np.float64) for s in series_list]) \
        if series_list else np.zeros(0)
    return values, offsets


def dtw_pairs(queries, references, band=UNBOUNDED, n_jobs=1):
    """
    DTW between every query and every reference series.

    Parameters:
    - queries (list): Non-empty 1-D series.
    - references (list): Non-empty 1-D series.
    - band (BandSpec, int, str or None): Sakoe-Chiba band.
    - n_jobs (int): Threads; the result does not depend on it.

    Returns:
    - np.ndarray: Matrix of shape (len(queries), len(references)).
    """
    band = BandSpec.parse(band)
    out = np.zeros((len(queries), len(references)))
    if not len(queries) or not len(references):
        return out
    r_values, r_offsets = _pack(references)

    def run(start, stop):
        q_values, q_offsets = _pack(queries[start:stop])
        _dtw_packed(q_values, q_offsets, r_values, r_offsets, band.radius, band.fraction, out[start:stop])

    if n_jobs <= 1 or len(queries) < 2 * n_jobs:
        run(0, len(queries))
    else:
        bounds = np.linspace(0, len(queries), n_jobs + 1).astype(int)
        Parallel(n_jobs=n_jobs, prefer='threads')(
            delayed(run)(bounds[k], bounds[k + 1]) for k in range(n_jobs) if bounds[k] < bounds[k + 1])
    return out


def band_cell_count(n, m, band=UNBOUNDED):
    """Number of DP cells evaluated by dtw on lengths n and m under `band`."""
    r = BandSpec.parse(band).resolve(n, m)
    total = 0
    for i in range(n):
        lo, hi = _band_limits(i, n, m, r)
        total += hi - lo + 1
    return total


def dtw_bruteforce(a, b):
    """
    Enumerates every monotone, continuous warping path from (0, 0) to (n-1, m-1) and
    returns the smallest accumulated cost. Exponential; for testing only.

    Parameters:
    - a (array-like): First series, 1 to 10 values.
    - b (array-like): Second series, 1 to 10 values.

    Returns:
    - float: Minimum path cost.
    """
    a = [float(v) for v in _as_series(a)]
    b = [float(v) for v in _as_series(b)]
    if not a or not b:
        raise ValueError("DTW needs non-empty series")
    if len(a) > BRUTEFORCE_MAX_LENGTH or len(b) > BRUTEFORCE_MAX_LENGTH:
        raise ValueError(f"Exhaustive DTW is limited to series of length <= {BRUTEFORCE_MAX_LENGTH}")

    n, m = len(a), len(b)
    best = math.inf

    def walk(i, j, total):
        nonlocal best
        if i == n - 1 and j == m - 1:
            if total < best:
                best = total
            return
        if i + 1 < n:
            walk(i + 1, j, total + abs(a[i + 1] - b[j]))
        if j + 1 < m:
            walk(i, j + 1, total + abs(a[i] - b[j + 1]))
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, total + abs(a[i + 1] - b[j + 1]))

    walk(0, 0, abs(a[0] - b[0]))
    return best
