"""Discrete potential theory on finite subsets of Z^d.

Equilibrium measures, capacities, hitting probabilities and the closed-form
laws of the interlacement vacant set that follow from them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalError, PreconditionError
from .green import GreenTable, get_table

MAX_SET_SIZE = 20000
MAX_OCCUPIED_SIZE = 20
NEGATIVE_WEIGHT_TOL = 1e-8
# above this many (x, y) pairs the residual is checked on a subsample of K
_RESIDUAL_PAIR_BUDGET = 20_000_000


def unit_vectors(dim: int) -> np.ndarray:
    e = np.eye(dim, dtype=np.int64)
    return np.vstack([e, -e])


class FiniteSet:
    """A nonempty finite subset of Z^dim, stored as sorted unique rows."""

    def __init__(self, points, dim: int | None = None):
        pts = np.asarray(points, dtype=np.int64)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1) if pts.size else pts.reshape(0, dim or 0)
        if dim is not None and pts.shape[1] != dim:
            raise DimensionError(f"points have dimension {pts.shape[1]}, expected {dim}")
        if len(pts) == 0:
            raise PreconditionError("FiniteSet must be nonempty")
        self.points = np.unique(pts, axis=0)
        self.points.flags.writeable = False
        self.dim = self.points.shape[1]

    # -- constructors -------------------------------------------------------
    @classmethod
    def ball(cls, dim: int, radius: int, center=None) -> "FiniteSet":
        """Closed sup-norm ball B(center, radius)."""
        c = np.zeros(dim, dtype=np.int64) if center is None else np.asarray(center)
        return cls.box(dim, c - radius, [2 * radius + 1] * dim)

    @classmethod
    def sphere(cls, dim: int, radius: int, center=None) -> "FiniteSet":
        """Sup-norm sphere S(center, radius)."""
        b = cls.ball(dim, radius, center)
        c = np.zeros(dim) if center is None else np.asarray(center)
        keep = np.abs(b.points - c).max(axis=1) == radius
        return cls(b.points[keep], dim)

    @classmethod
    def box(cls, dim: int, lower, shape) -> "FiniteSet":
        """Points lower + [0, shape) in each coordinate."""
        lower = np.broadcast_to(np.asarray(lower, dtype=np.int64), (dim,))
        shape = np.broadcast_to(np.asarray(shape, dtype=np.int64), (dim,))
        grids = np.indices(tuple(shape)).reshape(dim, -1).T
        return cls(grids + lower, dim)

    @classmethod
    def from_file(cls, path, dim: int | None = None) -> "FiniteSet":
        """One point per line, comma-separated integers; '#' starts a comment."""
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if line:
                    rows.append([int(v) for v in line.split(",")])
        return cls(rows, dim)

    # -- basic queries ------------------------------------------------------
    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return (tuple(int(c) for c in p) for p in self.points)

    def __repr__(self):
        return f"FiniteSet(dim={self.dim}, size={len(self)})"

    def __eq__(self, other):
        return (isinstance(other, FiniteSet) and self.points.shape == other.points.shape
                and bool(np.all(self.points == other.points)))

    def __hash__(self):
        return hash(self.points.tobytes())

    @cached_property
    def _keys(self) -> np.ndarray:
        return self._encode(self.points)

    @cached_property
    def _frame(self):
        lo = self.points.min(axis=0) - 2
        span = self.points.max(axis=0) - lo + 3
        return lo, span

    def _encode(self, pts: np.ndarray) -> np.ndarray:
        lo, span = self._frame
        rel = pts - lo
        inside = np.all((rel >= 0) & (rel < span), axis=1)
        strides = np.cumprod(np.concatenate([[1], span[:-1]]))
        keys = np.where(inside, rel @ strides, -1)
        return keys

    def contains(self, pts) -> np.ndarray:
        """Membership test for an array of points of shape (n, dim)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
        keys = self._encode(pts)
        srt = np.sort(self._keys)
        idx = np.clip(np.searchsorted(srt, keys), 0, len(srt) - 1)
        return (srt[idx] == keys) & (keys >= 0)

    def __contains__(self, x) -> bool:
        return bool(self.contains(np.asarray(x).reshape(1, -1))[0])

    def index_of(self, pts) -> np.ndarray:
        """Row index of each point in ``self.points`` (-1 if absent)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
        keys = self._encode(pts)
        order = np.argsort(self._keys)
        srt = self._keys[order]
        pos = np.clip(np.searchsorted(srt, keys), 0, len(srt) - 1)
        hit = (srt[pos] == keys) & (keys >= 0)
        return np.where(hit, order[pos], -1)

    @cached_property
    def interior_boundary_mask(self) -> np.ndarray:
        out = np.zeros(len(self), dtype=bool)
        for e in unit_vectors(self.dim):
            out |= ~self.contains(self.points + e)
        return out

    @cached_property
    def interior_boundary(self) -> "FiniteSet":
        return FiniteSet(self.points[self.interior_boundary_mask], self.dim)

    @cached_property
    def exterior_boundary(self) -> "FiniteSet":
        cand = np.unique(np.concatenate([self.points + e for e in unit_vectors(self.dim)]),
                         axis=0)
        return FiniteSet(cand[~self.contains(cand)], self.dim)

    def union(self, other: "FiniteSet") -> "FiniteSet":
        return FiniteSet(np.concatenate([self.points, other.points]), self.dim)

    @property
    def center(self) -> np.ndarray:
        """Midpoint of the bounding box (may be half-integer)."""
        return 0.5 * (self.points.min(axis=0) + self.points.max(axis=0))

    @property
    def circumradius(self) -> float:
        """Largest Euclidean distance from ``center`` to a point of the set."""
        return float(np.sqrt(((self.points - self.center) ** 2).sum(axis=1).max()))


def as_set(points, dim: int | None = None) -> FiniteSet:
    return points if isinstance(points, FiniteSet) else FiniteSet(points, dim)


@dataclass
class EquilibriumProfile:
    """Equilibrium measure of ``K``; ``weights`` is aligned with ``K.points``."""

    K: FiniteSet
    weights: np.ndarray
    capacity: float
    residual: float
    support: np.ndarray = field(repr=False)   # indices of interior-boundary points
    _factor: tuple = field(repr=False, default=None)
    cache: dict = field(repr=False, default_factory=dict)

    @property
    def support_points(self) -> np.ndarray:
        return self.K.points[self.support]

    @property
    def support_weights(self) -> np.ndarray:
        return self.weights[self.support]

    def entrance_law(self, x, g: GreenTable) -> np.ndarray:
        """First-entrance distribution P_x[H_K < inf, X_{H_K} = y] over the support.

        Strong Markov at H_K gives g(x, y') = sum_y P_x[X_{H_K} = y] g(y, y')
        for y' in K, so the law is g(x, .) times the inverse Green matrix.
        """
        gx = g.values(self.support_points - np.asarray(x, dtype=np.int64))
        return self.entrance_laws(gx[None, :])[0]

    def entrance_laws(self, green_rows: np.ndarray) -> np.ndarray:
        """Entrance laws for several starting points, given rows g(x_i, support)."""
        return scipy.linalg.cho_solve(self._factor, np.asarray(green_rows).T,
                                      check_finite=False).T


def _require_table(K: FiniteSet, g: GreenTable | None) -> GreenTable:
    if g is None:
        return get_table(K.dim)
    if g.dim != K.dim:
        raise DimensionError(f"GreenTable dimension {g.dim} != set dimension {K.dim}")
    return g


def equilibrium(K, g: GreenTable | None = None) -> EquilibriumProfile:
    """Equilibrium measure and capacity of a finite set.

    The system G e = 1 is solved on the interior boundary of K, which carries
    the whole measure: a walk started outside K first enters K there, and a
    walk from any point of K that escapes must last leave through it.
    """
    K = as_set(K)
    g = _require_table(K, g)
    support = np.flatnonzero(K.interior_boundary_mask)
    if support.size > MAX_SET_SIZE:
        raise PreconditionError(f"|interior boundary of K| = {support.size} exceeds the "
                                f"dense-solve guard {MAX_SET_SIZE}")
    S = K.points[support]
    G = g.matrix(S)
    try:
        factor = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Green matrix on K is not positive definite: {exc}") from exc
    w = scipy.linalg.cho_solve(factor, np.ones(len(S)))
    if w.min() < -NEGATIVE_WEIGHT_TOL:
        raise NumericalError(f"negative equilibrium weight {w.min():.3g}", float(-w.min()))
    w = np.clip(w, 0.0, None)
    weights = np.zeros(len(K))
    weights[support] = w

    residual = float(np.abs(G @ w - 1.0).max())
    rest = np.setdiff1d(np.arange(len(K)), support)
    if rest.size:
        if rest.size * len(S) > _RESIDUAL_PAIR_BUDGET:
            n = max(1, _RESIDUAL_PAIR_BUDGET // len(S))
            rest = rest[np.linspace(0, rest.size - 1, n).astype(int)]
        r = g.matrix(K.points[rest], S) @ w
        residual = max(residual, float(np.abs(r - 1.0).max()))
    return EquilibriumProfile(K, weights, float(w.sum()), residual, support, factor)


def capacity(K, g: GreenTable | None = None) -> float:
    return equilibrium(K, g).capacity


def hit_prob(x, K, eq: EquilibriumProfile, g: GreenTable | None = None) -> float:
    """P_x[H_K < inf] for x outside K."""
    K = as_set(K)
    g = _require_table(K, g)
    x = np.asarray(x, dtype=np.int64)
    if x in K:
        raise PreconditionError("hit_prob needs x outside K (the value is 1 inside)")
    return float(g.values(eq.support_points - x) @ eq.support_weights)


def hit_prob_bounds(x, K, g: GreenTable | None = None) -> tuple[float, float]:
    """Two-sided bound on P_x[H_K < inf] from Green sums over K."""
    K = as_set(K)
    g = _require_table(K, g)
    x = np.asarray(x, dtype=np.int64)
    if x in K:
        raise PreconditionError("hit_prob_bounds needs x outside K")
    if len(K) ** 2 > _RESIDUAL_PAIR_BUDGET:
        raise PreconditionError(f"|K| = {len(K)} too large for the Green-sum bounds")
    num = float(g.values(K.points - x).sum())
    rows = g.matrix(K.points).sum(axis=1)
    return num / float(rows.max()), num / float(rows.min())


def vacancy_prob(K, u: float, eq: EquilibriumProfile | None = None) -> float:
    """P[V^u contains K] = exp(-u cap(K))."""
    if u < 0:
        raise PreconditionError("level u must be nonnegative")
    if eq is None:
        eq = equilibrium(K)
    return math.exp(-u * eq.capacity)


def _rows(points) -> np.ndarray | None:
    if points is None:
        return None
    if isinstance(points, FiniteSet):
        return points.points
    arr = np.asarray(points, dtype=np.int64)
    return arr.reshape(-1, arr.shape[-1]) if arr.size else None


def fdd_prob(K_vac, K_occ, u: float, g: GreenTable | None = None) -> float:
    """P[K_vac vacant and every point of K_occ occupied] by inclusion-exclusion."""
    if u < 0:
        raise PreconditionError("level u must be nonnegative")
    vac, occ = _rows(K_vac), _rows(K_occ)
    if vac is None and occ is None:
        return 1.0
    dim = (vac if vac is not None else occ).shape[1]
    vac = np.empty((0, dim), dtype=np.int64) if vac is None else vac
    occ = np.empty((0, dim), dtype=np.int64) if occ is None else np.unique(occ, axis=0)
    if len(occ) > MAX_OCCUPIED_SIZE:
        raise PreconditionError(f"|K_occ| = {len(occ)} exceeds {MAX_OCCUPIED_SIZE}")
    if len(vac) and len(occ) and FiniteSet(vac).contains(occ).any():
        raise PreconditionError("K_vac and K_occ must be disjoint")
    g = get_table(dim) if g is None else g
    total = 0.0
    for r in range(len(occ) + 1):
        for A in itertools.combinations(range(len(occ)), r):
            pts = np.concatenate([vac, occ[list(A)]])
            cap = capacity(FiniteSet(pts, dim), g) if len(pts) else 0.0
            total += (-1) ** r * math.exp(-u * cap)
    return total


def exact_covariance(x, y, u: float, g: GreenTable | None = None) -> float:
    """cov(1{x in V^u}, 1{y in V^u}) from the one- and two-point vacancy laws."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    g = get_table(len(x)) if g is None else g
    g0 = g.value(np.zeros_like(x))
    p = math.exp(-u / g0)
    if np.array_equal(x, y):
        return p * (1.0 - p)
    return math.exp(-2.0 * u / (g0 + g.value(y - x))) - p * p


def covariance_asymptote(x, y, u: float, g: GreenTable | None = None) -> float:
    """Far-field equivalent (2u/g(0)^2) g(y-x) exp(-2u/g(0)) of the covariance."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    g = get_table(len(x)) if g is None else g
    g0 = g.value(np.zeros_like(x))
    return 2.0 * u / g0 ** 2 * g.value(y - x) * math.exp(-2.0 * u / g0)


def separates_sphere(rho: int, K, center=None) -> bool:
    """Whether the sup-norm sphere S(center, rho) separates K from infinity.

    Only decidable here for sphere geometries: this holds iff every point of
    K lies in the closed ball B(center, rho).
    """
    K = as_set(K)
    c = np.zeros(K.dim, dtype=np.int64) if center is None else np.asarray(center)
    return bool(np.abs(K.points - c).max() <= rho)
