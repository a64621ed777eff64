"""Sampling the trace of random interlacements on a finite box window.

At level u the interlacement trajectories that meet a finite set W form a
Poisson cloud of forward walks started from the equilibrium measure of W.
Drawing N ~ Poisson(u_max cap(W)) walks and giving each an independent
uniform label in (0, u_max] realizes every level u <= u_max at once: the
occupied set at level u is the set of sites visited by a walk with label
at most u.

Walks are followed until they reach the sup-norm shell of radius R around
the window.  In the default ``truncate`` mode they stop there, and the
probability that they would have come back is bounded by
:func:`escape_bias_bound`.  In ``reentry`` mode the return is decided
exactly: the walk comes back with probability P_x[H_W < inf] and resumes
from a point drawn from the first-entrance law of W seen from x.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _walk
from .errors import NumericalError, PreconditionError
from .green import GreenTable, get_table
from .potential import EquilibriumProfile, FiniteSet, as_set, equilibrium

STEP_CAP = 10 ** 7
MAX_TRAJECTORIES = 10 ** 9
_BOUND_PAIR_BUDGET = 20_000_000
_BLOCK_BUDGET = 2_000_000       # entries of a precomputed Green block


@dataclass
class Trajectory:
    """Forward walk as simulated for one Poisson point.

    ``steps`` holds direction codes (code c moves coordinate c // 2 by
    +1 if c is even, -1 if odd).  In reentry mode the walk is cut at the
    shell and resumed at an entrance point; ``reentries`` lists
    (position in ``steps``, entrance point) for every resumption.
    ``visits`` are flat window indices in visiting order.
    """

    start: tuple
    label: float
    steps: np.ndarray
    visits: np.ndarray
    termination: str
    reentries: list = field(default_factory=list)

    def points(self) -> list[np.ndarray]:
        """Simulated path segments as integer point arrays."""
        d = len(self.start)
        moves = np.zeros((2 * d, d), dtype=np.int64)
        for c in range(2 * d):
            moves[c, c // 2] = 1 if c % 2 == 0 else -1
        cuts = [0] + [i for i, _ in self.reentries] + [len(self.steps)]
        origins = [np.asarray(self.start)] + [np.asarray(p) for _, p in self.reentries]
        out = []
        for a, b, o in zip(cuts[:-1], cuts[1:], origins):
            incr = moves[self.steps[a:b].astype(np.int64)]
            out.append(np.vstack([o, o + np.cumsum(incr, axis=0)]))
        return out


@dataclass
class LeveledOccupancy:
    """Per-site minimal covering label on a box window (inf if never covered)."""

    lower: np.ndarray
    levels: np.ndarray
    u_max: float
    n_trajectories: int
    radius: float
    mode: str
    bias_bound: float           # sup over the shell of the return-probability bound
    bias_total: float           # bound on the total-variation bias of the field
    seed: tuple
    step_cap_hits: int = 0
    trajectories: list | None = None

    @property
    def shape(self) -> tuple:
        return self.levels.shape

    @property
    def window(self) -> FiniteSet:
        return FiniteSet.box(len(self.shape), self.lower, self.shape)

    def flat_index(self, pts) -> np.ndarray:
        rel = np.atleast_2d(np.asarray(pts, dtype=np.int64)) - self.lower
        if np.any(rel < 0) or np.any(rel >= np.array(self.shape)):
            raise PreconditionError("points outside the sampling window")
        return np.ravel_multi_index(tuple(rel.T), self.shape)

    def level_at(self, x) -> float:
        return float(self.levels.ravel()[self.flat_index(x)[0]])


def _normalize_seed(seed) -> tuple:
    if isinstance(seed, (int, np.integer)):
        seed = (int(seed),)
    seed = tuple(int(s) for s in seed)
    if not seed or any(s < 0 for s in seed):
        raise PreconditionError("seed must be a nonnegative int or tuple of them")
    return seed


def _stream(seed: tuple, *key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def box_geometry(W: FiniteSet) -> tuple[np.ndarray, tuple]:
    """(lower corner, shape) of a box-shaped set; raises otherwise."""
    lo = W.points.min(axis=0)
    shape = tuple(int(v) for v in W.points.max(axis=0) - lo + 1)
    if math.prod(shape) != len(W):
        raise PreconditionError("sampling window must be a box")
    return lo, shape


def shell_layer(W: FiniteSet, R: float) -> np.ndarray:
    """Stopping points of the walk in the positive orthant about W's center.

    These are the lattice points x with max_j |x_j - c_j| >= R that have a
    neighbour strictly inside; by the reflection symmetry of a box the
    orthant holds the supremum of any symmetric functional.
    """
    c = W.center
    d = W.dim
    start = np.ceil(c).astype(np.int64)
    top = np.floor(c + R).astype(np.int64) + 1
    axes = [np.arange(s, t + 1) for s, t in zip(start, top)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    dist = np.abs(grid - c).max(axis=1)
    out = dist >= R
    prev = np.zeros(len(grid), dtype=bool)
    for j in range(d):
        back = grid.copy()
        back[:, j] -= 1
        prev |= np.abs(back - c).max(axis=1) < R
    return grid[out & prev]


def escape_bias_bound(W, R: float, eq: EquilibriumProfile | None = None,
                      g: GreenTable | None = None) -> float:
    """Upper bound on P_x[H_W < inf] over the points where walks are stopped.

    Uses the Green-sum bound sum_y g(x,y) / inf_z sum_y g(z,y) when the
    pair count is affordable; otherwise cap(W) g(delta e_1), with delta the
    sup-distance from the shell to W (g is coordinatewise decreasing).
    """
    W = as_set(W)
    g = get_table(W.dim) if g is None else g
    if R < W.circumradius:
        raise PreconditionError(f"shell radius {R} is below the circumradius "
                                f"{W.circumradius:.3g} of the window")
    c = W.center
    orthant = math.prod(int(t) for t in np.floor(c + R) - np.ceil(c) + 2)
    if orthant > _BOUND_PAIR_BUDGET:
        # too many stopping points to list; the nearest one is x_j = ceil(c_j + R)
        eq = equilibrium(W, g) if eq is None else eq
        hi = W.points.max(axis=0)
        e1 = np.zeros(W.dim, dtype=np.int64)
        e1[0] = int((np.ceil(c + R) - hi).min())
        return float(eq.capacity * g.value(e1))
    layer = shell_layer(W, R)
    if len(W) ** 2 + len(layer) * len(W) <= _BOUND_PAIR_BUDGET:
        inf_row = g.matrix(W.points).sum(axis=1).min()
        sums = np.array([g.values(W.points - x).sum() for x in layer])
        return float(sums.max() / inf_row)
    eq = equilibrium(W, g) if eq is None else eq
    lo, hi = W.points.min(axis=0), W.points.max(axis=0)
    gap = np.maximum(lo - layer, 0) + np.maximum(layer - hi, 0)
    delta = int(gap.max(axis=1).min())
    e1 = np.zeros(W.dim, dtype=np.int64)
    e1[0] = delta
    return float(eq.capacity * g.value(e1))


@dataclass
class _WalkState:
    rng: np.random.Generator
    pos: np.ndarray
    label: float
    start: tuple
    dirs: np.ndarray
    chunk: int
    trace: np.ndarray
    n_trace: int = 0
    n_steps: int = 0
    record: bool = True
    termination: str = "shell"
    steps: list = field(default_factory=list)
    reentries: list = field(default_factory=list)


class _Walker:
    """Runs the trajectories of one sampling call.

    Walks advance independently to the shell; in reentry mode the walks
    standing on the shell are then handled together, so that the entrance
    laws of all returning walks come from one multi-right-hand-side solve.
    Every random draw of a walk comes from its own stream, so the grouping
    does not affect the result.
    """

    _ENTRANCE_BATCH = 256

    def __init__(self, W, lo, shape, R, eq, g, mode, keep, step_cap):
        self.d = W.dim
        self.lo = np.asarray(lo, dtype=np.int64)
        self.shape = np.asarray(shape, dtype=np.int64)
        self.center2 = np.rint(2 * W.center).astype(np.int64)
        self.radius2 = 2.0 * R
        self.eq, self.g = eq, g
        self.mode, self.keep, self.step_cap = mode, keep, step_cap
        self.chunk0 = int(min(max(256, 2 * R * R + 64), 1 << 20))
        self.support = eq.support_points
        self.block = self._green_block(W, R) if mode == "reentry" else None

    def _green_block(self, W, R):
        # stopped walks sit within sup-distance R + 1 of the center
        reach = int(math.ceil(R)) + 2 + int(np.abs(self.support - W.center).max())
        if math.comb(reach + self.d, self.d) > _BLOCK_BUDGET:
            # high dimension: memoized lookups instead
            return lambda disp: self.g.values(disp.reshape(-1, self.d)).reshape(disp.shape[:-1])
        return self.g.block(reach)

    def start(self, seed, index, start, label) -> _WalkState:
        rng = _stream(seed, 1, index)
        dirs = rng.integers(0, 2 * self.d, size=self.chunk0, dtype=np.int8)
        return _WalkState(rng, np.array(start, dtype=np.int64), float(label),
                          tuple(int(c) for c in start), dirs, self.chunk0,
                          np.empty(1024, dtype=np.int64))

    def advance(self, st: _WalkState) -> bool:
        """Run until the shell (True) or the step cap (False)."""
        while True:
            status, k, st.n_trace = _walk.run_walk(
                st.pos, st.dirs, self.lo, self.shape, self.center2, self.radius2,
                st.trace, st.n_trace, st.record)
            if self.keep:
                st.steps.append(st.dirs[:k])
            st.n_steps += k
            st.dirs = st.dirs[k:]
            if status == _walk.STATUS_TRACE_FULL:
                st.trace = np.concatenate([st.trace, np.empty_like(st.trace)])
                st.record = True
            elif status == _walk.STATUS_STARVED:
                if st.n_steps >= self.step_cap:
                    st.termination = "step_cap"
                    return False
                st.chunk = min(2 * st.chunk, 1 << 24, self.step_cap - st.n_steps)
                st.dirs = st.rng.integers(0, 2 * self.d, size=st.chunk, dtype=np.int8)
                st.record = False
            else:
                return True

    def reenter(self, states: list[_WalkState]) -> list[_WalkState]:
        """Send each walk on the shell back into W with probability P_x[H_W < inf].

        The return probability is sum_y g(x, y) e_W(y); a returning walk
        restarts from its first-entrance point, drawn from G_S^{-1} g(x, S).
        """
        back = []
        for s in range(0, len(states), self._ENTRANCE_BATCH):
            batch = states[s:s + self._ENTRANCE_BATCH]
            X = np.array([st.pos for st in batch])
            gx = self.block(X[:, None, :] - self.support[None, :, :])
            h = gx @ self.eq.support_weights
            ret = [i for i, st in enumerate(batch) if st.rng.random() < h[i]]
            if not ret:
                continue
            laws = self.eq.entrance_laws(gx[ret])
            for i, law in zip(ret, laws):
                st = batch[i]
                cdf = np.cumsum(np.clip(law, 0.0, None))
                j = int(np.searchsorted(cdf, st.rng.random() * cdf[-1], side="right"))
                st.pos = self.support[min(j, len(cdf) - 1)].copy()
                if self.keep:
                    st.reentries.append((st.n_steps, tuple(int(c) for c in st.pos)))
                st.record = True
                back.append(st)
        return back

    def finish(self, st: _WalkState, levels: np.ndarray) -> Trajectory | None:
        _walk.min_merge(levels, st.trace, st.n_trace, st.label)
        if not self.keep:
            return None
        steps = np.concatenate(st.steps) if st.steps else np.empty(0, np.int8)
        return Trajectory(st.start, st.label, steps, st.trace[:st.n_trace].copy(),
                          st.termination, st.reentries)


def sample_interlacement(W, u_max: float, R: float, seed, *,
                         eq: EquilibriumProfile | None = None, g: GreenTable | None = None,
                         mode: str = "truncate", keep_paths: bool = False,
                         strict: bool = False, step_cap: int = STEP_CAP,
                         workers: int = 1) -> LeveledOccupancy:
    """Sample the interlacement trace on the box ``W`` for all levels up to ``u_max``.

    Parameters
    ----------
    W : FiniteSet
        Box-shaped window.
    u_max : float
        Largest level represented in the output.
    R : float
        Truncation radius (sup-norm, about the window center); at least
        twice the Euclidean circumradius of W.
    seed : int or tuple of int
        Master seed.  Trajectory i uses its own stream derived from
        (seed, i), so results do not depend on ``workers``.
    mode : {"truncate", "reentry"}
        Whether walks stop at the shell or are sent back exactly.
    keep_paths : bool
        Retain every :class:`Trajectory` (needed for occupation functionals).
    """
    W = as_set(W)
    g = get_table(W.dim) if g is None else g
    if mode not in ("truncate", "reentry"):
        raise PreconditionError(f"unknown sampling mode {mode!r}")
    if u_max < 0:
        raise PreconditionError("u_max must be nonnegative")
    lo, shape = box_geometry(W)
    R = float(R)
    if R < max(2.0 * W.circumradius, 1.0):
        raise PreconditionError(f"shell radius {R} must be at least twice the window "
                                f"circumradius {W.circumradius:.3g} (and >= 1)")
    seed = _normalize_seed(seed)
    eq = equilibrium(W, g) if eq is None else eq
    if eq.K != W:
        raise PreconditionError("equilibrium profile belongs to a different set")

    mean = u_max * eq.capacity
    if mean > MAX_TRAJECTORIES:
        raise PreconditionError(f"expected {mean:.3g} trajectories: level too large")
    head = _stream(seed, 0)
    n = int(head.poisson(mean)) if mean > 0 else 0
    if n > MAX_TRAJECTORIES:
        raise PreconditionError(f"Poisson draw {n} exceeds {MAX_TRAJECTORIES}")
    labels = u_max * (1.0 - head.random(n))
    p = eq.support_weights / eq.support_weights.sum()
    starts = eq.support_points[head.choice(len(p), size=n, p=p)] if n else np.empty((0, W.dim))

    key = ("bias_bound", R)
    if key not in eq.cache:
        eq.cache[key] = escape_bias_bound(W, R, eq, g)
    bound = eq.cache[key]
    bias_total = 0.0 if mode == "reentry" else mean * bound

    walker = _Walker(W, lo, shape, R, eq, g, mode, keep_paths, step_cap)
    states = [walker.start(seed, i, starts[i], labels[i]) for i in range(n)]

    def advance_all(group):
        return [walker.advance(st) for st in group]

    pool = ThreadPoolExecutor(workers) if workers > 1 and n > 1 else None
    try:
        active = states
        while active:
            if pool is None:
                flags = advance_all(active)
            else:
                chunks = [[active[i] for i in idx]
                          for idx in np.array_split(np.arange(len(active)), workers)]
                flags = list(itertools.chain.from_iterable(pool.map(advance_all, chunks)))
            on_shell = [st for st, ok in zip(active, flags) if ok]
            if mode != "reentry":
                break
            active = walker.reenter(on_shell)
    finally:
        if pool is not None:
            pool.shutdown()

    levels = np.full(math.prod(shape), np.inf)
    trajs = [walker.finish(st, levels) for st in states]
    hits = sum(st.termination == "step_cap" for st in states)
    if strict and hits:
        raise NumericalError(f"{hits} trajectories hit the step cap {step_cap}")
    trajs = trajs if keep_paths else None
    return LeveledOccupancy(lo, levels.reshape(shape), float(u_max), n, R, mode,
                            bound, bias_total, seed, hits, trajs)


def vacant_mask(occ: LeveledOccupancy, u: float) -> np.ndarray:
    """Boolean grid of sites vacant at level u (level strictly above u)."""
    if u < 0 or u > occ.u_max:
        raise PreconditionError(f"level {u} outside [0, u_max={occ.u_max}]")
    return occ.levels > u


def occupied_mask(occ: LeveledOccupancy, u: float) -> np.ndarray:
    return ~vacant_mask(occ, u)


def occupation_functional(occ: LeveledOccupancy, A, u: float) -> int:
    """Total number of visits to A by the trajectories with label <= u."""
    if occ.trajectories is None:
        raise PreconditionError("occupation_functional needs keep_paths=True")
    if u < 0 or u > occ.u_max:
        raise PreconditionError(f"level {u} outside [0, u_max={occ.u_max}]")
    idx = occ.flat_index(as_set(A).points)
    return int(sum(np.isin(t.visits, idx).sum() for t in occ.trajectories if t.label <= u))
