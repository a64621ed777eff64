"""Percolation of the vacant set on sampled windows.

Cluster labelling, the box-crossing events used by the renormalization
scheme, a finite-volume proxy for the percolation probability of the
origin, and a bisection bracket for the critical level.  All Monte Carlo
estimates reuse one leveled sample per trial for every level, so estimates
at different levels are coupled and exactly monotone.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from statsmodels.stats.proportion import proportion_confint

from .errors import PreconditionError
from .green import get_table
from .potential import FiniteSet, equilibrium
from .renorm import build_scales
from .sampler import LeveledOccupancy, occupied_mask, sample_interlacement, vacant_mask

ADJACENCY = ("nn", "star")
MAX_WINDOW_SITES = 2_000_000


@dataclass
class ClusterLabels:
    """Component ids (-1 off the mask, dense from 0 on it) and sizes."""

    labels: np.ndarray
    sizes: np.ndarray
    adjacency: str

    @property
    def count(self) -> int:
        return len(self.sizes)


def label_clusters(mask: np.ndarray, adjacency: str = "nn") -> ClusterLabels:
    """Connected components of a boolean grid.

    ``nn`` joins sites at Euclidean distance 1, ``star`` sites at sup-distance 1.
    """
    if adjacency not in ADJACENCY:
        raise PreconditionError(f"adjacency must be one of {ADJACENCY}")
    mask = np.asarray(mask, dtype=bool)
    conn = 1 if adjacency == "nn" else mask.ndim
    structure = ndimage.generate_binary_structure(mask.ndim, conn)
    lab, n = ndimage.label(mask, structure=structure)
    lab = lab.astype(np.int64) - 1
    sizes = np.bincount(lab[lab >= 0], minlength=n)
    return ClusterLabels(lab, sizes, adjacency)


def _connected(mask: np.ndarray, source: np.ndarray, target: np.ndarray,
               adjacency: str) -> bool:
    lab = label_clusters(mask, adjacency).labels
    a = np.unique(lab[source & mask])
    b = np.unique(lab[target & mask])
    return bool(np.intersect1d(a, b).size)


@dataclass
class CrossingGeometry:
    """Boxes of one renormalization label at scale L (label i = 0).

    The center box is [0, L)^k, its enlargement [-L, 2L)^k, and the target
    is the interior boundary of the enlargement; k = d, or k = 2 for the
    planar variant, whose boxes live in the slice of points with
    coordinates 3..d equal to zero.
    """

    d: int
    level: int
    L: int
    planar: bool = False

    def __post_init__(self):
        if self.L < 1:
            raise PreconditionError("degenerate crossing geometry: L must be >= 1")
        if self.d < 3:
            raise PreconditionError("crossing geometry needs d >= 3")
        if math.prod(self.window_shape) > MAX_WINDOW_SITES:
            raise PreconditionError(f"window of {math.prod(self.window_shape)} sites is too large")

    @classmethod
    def from_scales(cls, d: int, L0: int, level: int, planar: bool = False):
        seq = build_scales(d, L0, level)
        return cls(d, level, int(seq.L[level]), planar)

    @property
    def k(self) -> int:
        return 2 if self.planar else self.d

    @property
    def window_lower(self) -> np.ndarray:
        lo = np.zeros(self.d, dtype=np.int64)
        lo[:self.k] = -self.L
        return lo

    @property
    def window_shape(self) -> tuple:
        return tuple(3 * self.L if j < self.k else 1 for j in range(self.d))

    def window(self) -> FiniteSet:
        return FiniteSet.box(self.d, self.window_lower, self.window_shape)

    def _grid(self) -> tuple[np.ndarray, ...]:
        return np.indices(self.window_shape)

    def inner_mask(self) -> np.ndarray:
        """C_m (resp. D_m) as a mask over the window."""
        idx = self._grid()
        m = np.ones(self.window_shape, dtype=bool)
        for j in range(self.k):
            m &= (idx[j] >= self.L) & (idx[j] < 2 * self.L)
        return m

    def target_mask(self) -> np.ndarray:
        """Interior boundary of the enlarged box (relative to Z^2 when planar)."""
        idx = self._grid()
        m = np.zeros(self.window_shape, dtype=bool)
        for j in range(self.k):
            m |= (idx[j] == 0) | (idx[j] == 3 * self.L - 1)
        return m


def _check_window(occ: LeveledOccupancy, geom: CrossingGeometry):
    if (tuple(occ.shape) != geom.window_shape
            or not np.array_equal(occ.lower, geom.window_lower)):
        raise PreconditionError("the sample window must be exactly the enlarged box")


def vacant_crossing(occ: LeveledOccupancy, u: float, geom: CrossingGeometry) -> bool:
    """Nearest-neighbour vacant path in the enlarged box from C_m to its boundary."""
    if geom.planar:
        raise PreconditionError("vacant_crossing uses the full-dimensional geometry")
    _check_window(occ, geom)
    return _connected(vacant_mask(occ, u), geom.inner_mask(), geom.target_mask(), "nn")


def occupied_planar_crossing(occ: LeveledOccupancy, u: float, geom: CrossingGeometry) -> bool:
    """*-nearest-neighbour occupied path in the planar enlarged box from D_m to its boundary."""
    if not geom.planar:
        raise PreconditionError("occupied_planar_crossing needs the planar geometry")
    _check_window(occ, geom)
    sl = (slice(None), slice(None)) + (0,) * (geom.d - 2)
    return _connected(occupied_mask(occ, u)[sl], geom.inner_mask()[sl],
                      geom.target_mask()[sl], "star")


@dataclass
class CrossingEstimate:
    level: int
    u: float
    trials: int
    successes: int
    lo95: float
    hi95: float
    seeds_digest: str = field(default="", repr=False)

    @property
    def estimate(self) -> float:
        return self.successes / self.trials

    @classmethod
    def make(cls, level, u, trials, successes, digest=""):
        if trials <= 0:
            raise PreconditionError("trials must be positive")
        lo, hi = proportion_confint(successes, trials, alpha=0.05, method="wilson")
        return cls(level, float(u), int(trials), int(successes),
                   float(max(lo, 0.0)), float(min(hi, 1.0)), digest)


def _digest(seed, trials: int) -> str:
    return hashlib.sha256(repr((seed, trials)).encode()).hexdigest()[:16]


def _run_trials(fn, trials: int, workers: int) -> list:
    """fn(t) for t in range(trials), in trial order whatever the worker count."""
    if workers <= 1 or trials <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, range(trials)))


def _default_radius(W: FiniteSet) -> float:
    return max(2.0 * W.circumradius, 1.0)


def estimate_crossing(kind: str, n: int, us, trials: int, seed, *, d: int = 3,
                      L0: int = 10, R: float | None = None, mode: str = "reentry",
                      workers: int = 1) -> list[CrossingEstimate]:
    """Monte Carlo crossing probabilities at scale L_n for each level in ``us``.

    One fresh sample per trial on exactly the enlarged box, at level max(us);
    every level is read off the same sample.
    """
    if kind not in ("vacant", "occupied"):
        raise PreconditionError("kind must be 'vacant' or 'occupied'")
    if trials <= 0:
        raise PreconditionError("trials must be positive")
    us = [float(v) for v in np.atleast_1d(us)]
    if min(us) < 0:
        raise PreconditionError("levels must be nonnegative")
    geom = CrossingGeometry.from_scales(d, L0, n, planar=(kind == "occupied"))
    W = geom.window()
    g = get_table(d)
    eq = equilibrium(W, g)
    R = _default_radius(W) if R is None else R
    u_max = max(us)
    event = vacant_crossing if kind == "vacant" else occupied_planar_crossing

    def trial(t):
        occ = sample_interlacement(W, u_max, R, (*_seed_tuple(seed), t), eq=eq, g=g, mode=mode)
        return [event(occ, u, geom) for u in us]

    hits = np.array(_run_trials(trial, trials, workers), dtype=bool).reshape(trials, len(us))
    digest = _digest(seed, trials)
    return [CrossingEstimate.make(n, u, trials, int(hits[:, i].sum()), digest)
            for i, u in enumerate(us)]


def _seed_tuple(seed) -> tuple:
    return (int(seed),) if isinstance(seed, (int, np.integer)) else tuple(int(s) for s in seed)


def origin_threshold(occ: LeveledOccupancy, M: int) -> float:
    """Level below which the origin's vacant cluster in B(0, M) reaches its boundary.

    The event is nonincreasing in u and piecewise constant between trajectory
    labels, so the threshold is the smallest label at which it fails (inf if
    it never fails up to u_max).
    """
    d = len(occ.shape)
    rel0 = -np.asarray(occ.lower)
    lo = rel0 - M
    hi = rel0 + M + 1
    if np.any(lo < 0) or np.any(hi > np.array(occ.shape)):
        raise PreconditionError(f"B(0, {M}) is not inside the sample window")
    block = occ.levels[tuple(slice(a, b) for a, b in zip(lo, hi))]
    target = np.zeros(block.shape, dtype=bool)
    for j in range(d):
        sl = [slice(None)] * d
        sl[j] = 0
        target[tuple(sl)] = True
        sl[j] = -1
        target[tuple(sl)] = True
    center = (M,) * d

    def event(u):
        vac = block > u
        if not vac[center]:
            return False
        lab = label_clusters(vac, "nn").labels
        return bool(np.any(lab[target] == lab[center]))

    cands = np.unique(block[np.isfinite(block)])
    if cands.size == 0 or event(cands[-1]):
        return math.inf
    i, j = 0, cands.size - 1        # event(cands[j]) is False
    if not event(cands[0]):
        return float(cands[0])
    while j - i > 1:
        mid = (i + j) // 2
        if event(cands[mid]):
            i = mid
        else:
            j = mid
    return float(cands[j])


@dataclass
class EtaSamples:
    """Per-trial origin thresholds for several radii, from shared samples."""

    radii: list[int]
    thresholds: np.ndarray      # shape (trials, len(radii))
    u_max: float
    seeds_digest: str

    def estimate(self, u: float, M: int) -> CrossingEstimate:
        if u > self.u_max or u < 0:
            raise PreconditionError(f"level {u} outside [0, {self.u_max}]")
        col = self.radii.index(M)
        hits = int(np.sum(self.thresholds[:, col] > u))
        return CrossingEstimate.make(-1, u, self.thresholds.shape[0], hits, self.seeds_digest)


def eta_samples(radii, u_max: float, trials: int, seed, *, d: int = 3,
                R: float | None = None, mode: str = "reentry",
                workers: int = 1) -> EtaSamples:
    """Sample B(0, max radii) ``trials`` times at level u_max and record thresholds."""
    if trials <= 0:
        raise PreconditionError("trials must be positive")
    radii = sorted(int(m) for m in np.atleast_1d(radii))
    if radii[0] < 1:
        raise PreconditionError("radius M must be at least 1")
    W = FiniteSet.ball(d, radii[-1])
    g = get_table(d)
    eq = equilibrium(W, g)
    R = _default_radius(W) if R is None else R

    def trial(t):
        occ = sample_interlacement(W, u_max, R, (*_seed_tuple(seed), t), eq=eq, g=g, mode=mode)
        return [origin_threshold(occ, M) for M in radii]

    th = np.array(_run_trials(trial, trials, workers), dtype=float).reshape(trials, len(radii))
    return EtaSamples(radii, th, float(u_max), _digest(seed, trials))


def eta_proxy(u: float, M: int, trials: int, seed, **kw) -> CrossingEstimate:
    """Fraction of trials in which the origin's vacant cluster in B(0, M) reaches ∂_int B(0, M)."""
    return eta_samples([M], u, trials, seed, **kw).estimate(u, M)


@dataclass
class UStarBracket:
    lo: float
    hi: float
    threshold: float
    estimate_lo: CrossingEstimate
    estimate_hi: CrossingEstimate
    M: int
    note: str = "finite-volume proxy; the threshold is a convention"


def bracket_u_star(u_lo: float, u_hi: float, M: int, trials: int, threshold: float, seed,
                   *, iters: int = 8, samples: EtaSamples | None = None,
                   **kw) -> UStarBracket:
    """Bisect the eta proxy at radius M for the level where it crosses ``threshold``."""
    if not u_lo < u_hi:
        raise PreconditionError("need u_lo < u_hi")
    if not 0 < threshold < 1:
        raise PreconditionError("threshold must lie in (0, 1)")
    if samples is None:
        samples = eta_samples([M], u_hi, trials, seed, **kw)
    f_lo, f_hi = samples.estimate(u_lo, M), samples.estimate(u_hi, M)
    if not f_lo.estimate > threshold > f_hi.estimate:
        raise PreconditionError(
            f"bracket violated: proxy({u_lo}) = {f_lo.estimate:.4g}, "
            f"proxy({u_hi}) = {f_hi.estimate:.4g}, threshold {threshold}")
    a, b = u_lo, u_hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if samples.estimate(mid, M).estimate > threshold:
            a = mid
        else:
            b = mid
    return UStarBracket(a, b, threshold, samples.estimate(a, M), samples.estimate(b, M), M)


@dataclass
class CovarianceEstimate:
    value: float
    stderr: float
    samples: int


def empirical_covariance(u: float, x, y, samples: int, seed, *, R: float | None = None,
                         mode: str = "reentry") -> CovarianceEstimate:
    """Sample covariance of the vacancy indicators at x and y.

    The window is the smallest box containing both points; the standard error
    is that of the mean of the centered products.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    lo = np.minimum(x, y)
    W = FiniteSet.box(len(x), lo, np.maximum(x, y) - lo + 1)
    g = get_table(len(x))
    eq = equilibrium(W, g)
    R = _default_radius(W) if R is None else R
    a = np.empty(samples)
    b = np.empty(samples)
    for t in range(samples):
        occ = sample_interlacement(W, u, R, (*_seed_tuple(seed), t), eq=eq, g=g, mode=mode)
        a[t] = occ.level_at(x) > u
        b[t] = occ.level_at(y) > u
    prod = (a - a.mean()) * (b - b.mean())
    value = prod.sum() / (samples - 1)
    se = prod.std(ddof=1) / math.sqrt(samples)
    return CovarianceEstimate(float(value), float(se), samples)


def vacant_cluster_sizes(occ: LeveledOccupancy, u: float) -> np.ndarray:
    """Sizes of the nearest-neighbour vacant clusters of the window at level u."""
    return label_clusters(vacant_mask(occ, u), "nn").sizes
