"""Independent reference computations used by the tests.

None of these reuse library code paths: the Green oracles integrate the
Fourier representation, the walk oracle is a separate compiled loop that
counts hits directly, and the graph oracles are plain breadth-first search.
"""

import math
from collections import deque
from itertools import product

import numba
import numpy as np
from scipy import integrate
from scipy.special import gamma


def watson_g0_d3() -> float:
    """Closed form of g(0) on Z^3 in terms of Gamma values."""
    return (math.sqrt(6) / (32 * math.pi ** 3)
            * gamma(1 / 24) * gamma(5 / 24) * gamma(7 / 24) * gamma(11 / 24))


def fourier_g0_d3() -> float:
    """g(0) on Z^3 from its Fourier integral.

    The third angle is integrated in closed form,
    int dc / (A - cos c) = 2 pi / sqrt(A^2 - 1), leaving
    g(0) = 3 / (2 pi)^2 * int int da db / sqrt((3 - cos a - cos b)^2 - 1).
    The remaining 1/r singularity at the origin is removed by polar
    coordinates on the two halves of [0, pi]^2.
    """
    def f(r, theta):
        a, b = r * math.cos(theta), r * math.sin(theta)
        s = 3.0 - math.cos(a) - math.cos(b)
        return r / math.sqrt((s - 1.0) * (s + 1.0))

    total = 0.0
    for lo, hi, rmax in ((0.0, math.pi / 4, lambda t: math.pi / math.cos(t)),
                         (math.pi / 4, math.pi / 2, lambda t: math.pi / math.sin(t))):
        val, _ = integrate.dblquad(f, lo, hi, 0.0, rmax, epsabs=1e-14, epsrel=1e-13)
        total += val
    # symmetric in a -> -a and b -> -b
    return 3.0 / (2 * math.pi) ** 2 * 4.0 * total


@numba.njit(cache=True)
def _hits(starts, inside, offset, radii, seed):
    """For each start, step until the walk is in ``inside`` or leaves each radius.

    ``inside`` is a boolean cube indexed by point + offset.  The first step
    is always taken (escape from K is about returns, so the start may lie
    in K).  Returns, per start and per radius, whether the set was hit
    before the Euclidean radius was reached.
    """
    np.random.seed(seed)
    n, d = starts.shape
    nr = radii.shape[0]
    out = np.zeros((n, nr), dtype=np.bool_)
    side = inside.shape[0]
    pos = np.empty(d, dtype=np.int64)
    for i in range(n):
        for j in range(d):
            pos[j] = starts[i, j]
        level = 0
        while level < nr:
            c = np.random.randint(0, 2 * d)
            pos[c // 2] += 1 if c % 2 == 0 else -1
            r2 = 0
            ok = True
            flat = 0
            for j in range(d):
                r2 += pos[j] * pos[j]
                q = pos[j] + offset
                if q < 0 or q >= side:
                    ok = False
                else:
                    flat = flat * side + q
            if ok and inside.ravel()[flat]:
                for m in range(level, nr):
                    out[i, m] = True
                break
            while level < nr and r2 >= radii[level] * radii[level]:
                level += 1
    return out


def walk_hits(points, starts, radii, seed):
    """Hit indicators of the set ``points`` for walks from ``starts`` (see ``_hits``)."""
    points = np.asarray(points, dtype=np.int64)
    d = points.shape[1]
    offset = int(np.abs(points).max()) + 1
    side = 2 * offset + 1
    inside = np.zeros((side,) * d, dtype=np.bool_)
    inside[tuple((points + offset).T)] = True
    return _hits(np.asarray(starts, dtype=np.int64), inside, offset,
                 np.asarray(radii, dtype=np.float64), seed)


def richardson_hit_estimate(points, start, n, radii, seed):
    """Hit probability of a set from ``start`` with the 1/R truncation bias removed.

    With p(R) the probability of hitting before radius R, p(R) = p + b/R +
    O(R^-2), so (R2 p(R2) - R1 p(R1)) / (R2 - R1) removes the leading term.
    Returns (estimate, standard error), the error from the per-walk
    combination of the two coupled indicators.
    """
    r1, r2 = radii
    h = walk_hits(points, np.tile(np.asarray(start, dtype=np.int64), (n, 1)), [r1, r2], seed)
    x = (r2 * h[:, 1].astype(float) - r1 * h[:, 0]) / (r2 - r1)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))


def flood_fill_labels(mask: np.ndarray, star: bool = False) -> np.ndarray:
    """Component labels by breadth-first search (-1 off the mask)."""
    mask = np.asarray(mask, dtype=bool)
    d = mask.ndim
    if star:
        moves = [m for m in product((-1, 0, 1), repeat=d) if any(m)]
    else:
        moves = []
        for j in range(d):
            for s in (-1, 1):
                m = [0] * d
                m[j] = s
                moves.append(tuple(m))
    lab = np.full(mask.shape, -1, dtype=np.int64)
    nxt = 0
    for site in zip(*np.nonzero(mask)):
        if lab[site] >= 0:
            continue
        lab[site] = nxt
        queue = deque([site])
        while queue:
            cur = queue.popleft()
            for m in moves:
                nb = tuple(c + e for c, e in zip(cur, m))
                if all(0 <= c < s for c, s in zip(nb, mask.shape)) and mask[nb] \
                        and lab[nb] < 0:
                    lab[nb] = nxt
                    queue.append(nb)
        nxt += 1
    return lab


def flood_fill_connects(mask, sources, targets, star=False) -> bool:
    lab = flood_fill_labels(mask, star)
    a = set(lab[np.asarray(sources) & mask].tolist())
    b = set(lab[np.asarray(targets) & mask].tolist())
    return bool(a & b)


def iroot_newton(x: int, k: int) -> int:
    """floor(x ** (1/k)) by integer Newton iteration."""
    if x < 2:
        return x
    r = 1 << ((x.bit_length() + k - 1) // k)
    while True:
        s = ((k - 1) * r + x // r ** (k - 1)) // k
        if s >= r:
            break
        r = s
    while r ** k > x:
        r -= 1
    while (r + 1) ** k <= x:
        r += 1
    return r
