"""Lattice Green function of simple random walk on Z^nu, nu >= 3.

The Green function is evaluated through the continuous-time representation

    g(x) = nu * int_0^inf  prod_j exp(-t) I_{x_j}(t)  dt,

with exponentially scaled modified Bessel functions.  The finite part
[0, T] is integrated with Gauss-Legendre rules on dyadic panels, and the
algebraic tail [T, inf) is integrated term by term from the large-argument
expansion of exp(-t) I_k(t).
"""

from __future__ import annotations

import functools
import itertools
import math
import threading

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ive

from .errors import DimensionError, NumericalError

DEFAULT_TOL = 1e-10
DEFAULT_CUTOFF_EXP = 30
DEFAULT_NODES = 32
# orders of 1/t kept in the tail expansion (the next one is the error estimate)
_TAIL_ORDER = 3


def canonical(x) -> tuple[int, ...]:
    """Sorted absolute coordinates, largest first."""
    return tuple(sorted((abs(int(c)) for c in x), reverse=True))


def canonical_array(points: np.ndarray) -> np.ndarray:
    """Row-wise canonical form of an integer point array of shape (n, nu)."""
    a = np.abs(np.asarray(points, dtype=np.int64))
    return -np.sort(-a, axis=1)


def _panel_rule(n_nodes: int, cutoff_exp: int):
    x, w = leggauss(n_nodes)
    edges = np.concatenate([[0.0], 2.0 ** np.arange(0, cutoff_exp + 1)])
    a, b = edges[:-1, None], edges[1:, None]
    t = 0.5 * (b - a) * x + 0.5 * (a + b)
    wt = 0.5 * (b - a) * w
    return t.ravel(), wt.ravel()


def _asymptotic_coeffs(k: int, order: int) -> np.ndarray:
    """Coefficients c_j with exp(-t)I_k(t) ~ (2 pi t)^(-1/2) sum_j c_j t^(-j)."""
    mu = 4.0 * k * k
    c = np.empty(order + 1)
    c[0] = 1.0
    for j in range(1, order + 1):
        c[j] = -c[j - 1] * (mu - (2 * j - 1) ** 2) / (8.0 * j)
    return c


class GreenTable:
    """Memoized Green function of simple random walk on Z^dim.

    Parameters
    ----------
    dim : int
        Lattice dimension, at least 3.
    tol : float
        Absolute error target per value.
    cutoff_exp : int
        The finite quadrature range is [0, 2**cutoff_exp].
    nodes : int
        Gauss-Legendre nodes per dyadic panel.
    """

    def __init__(self, dim: int, tol: float = DEFAULT_TOL,
                 cutoff_exp: int = DEFAULT_CUTOFF_EXP, nodes: int = DEFAULT_NODES):
        if int(dim) != dim or dim < 3:
            raise DimensionError(f"Green function needs dimension >= 3, got {dim}")
        self.dim = int(dim)
        self.tol = float(tol)
        self.cutoff = 2.0 ** cutoff_exp
        self.nodes = int(nodes)
        self._t, self._w = _panel_rule(self.nodes, cutoff_exp)
        # coarser rule on the same panels, used for the error estimate
        self._t_lo, self._w_lo = _panel_rule(max(8, self.nodes - 8), cutoff_exp)
        self._ive = np.empty((0, self._t.size))
        self._ive_lo = np.empty((0, self._t_lo.size))
        self._coef = np.empty((0, _TAIL_ORDER + 2))
        self._block = None
        self._lock = threading.RLock()     # fills are single-writer
        self._memo: dict[tuple[int, ...], float] = {}
        self._err: dict[tuple[int, ...], float] = {}
        self.frozen = False

    @property
    def config(self) -> dict:
        return {"dim": self.dim, "tol": self.tol, "cutoff": self.cutoff,
                "nodes": self.nodes}

    def __len__(self):
        return len(self._memo)

    def freeze(self) -> "GreenTable":
        """Forbid further fills; the table is then safe to share between readers."""
        self.frozen = True
        return self

    def _bessel_rows(self, kmax: int):
        have = self._ive.shape[0]
        if kmax >= have:
            ks = np.arange(have, kmax + 1)[:, None]
            self._ive = np.vstack([self._ive, ive(ks, self._t[None, :])])
            self._ive_lo = np.vstack([self._ive_lo, ive(ks, self._t_lo[None, :])])
        return self._ive, self._ive_lo

    def _tail(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nu, T = self.dim, self.cutoff
        m = _TAIL_ORDER + 2
        kmax = int(keys.max())
        if kmax >= len(self._coef):
            extra = [_asymptotic_coeffs(k, m - 1) for k in range(len(self._coef), kmax + 1)]
            self._coef = np.vstack([self._coef, np.array(extra).reshape(-1, m)])
        # truncated product of the per-coordinate series in 1/t
        poly = np.zeros((len(keys), m))
        poly[:, 0] = 1.0
        for col in range(nu):
            c = self._coef[keys[:, col]]
            new = np.empty_like(poly)
            for j in range(m):
                new[:, j] = (poly[:, :j + 1] * c[:, j::-1]).sum(axis=1)
            poly = new
        j = np.arange(m)
        scale = nu * (2 * math.pi) ** (-nu / 2) * T ** (1 - nu / 2 - j) / (nu / 2 + j - 1)
        terms = poly * scale
        return terms[:, :-1].sum(axis=1), np.abs(terms[:, -1])

    def _compute(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        kmax = int(keys.max())
        if kmax * kmax > self.cutoff * 1e-3:
            raise NumericalError(
                f"coordinate {kmax} too large for cutoff {self.cutoff:g}", None)
        hi, lo = self._bessel_rows(kmax)
        nu = self.dim
        vals = np.empty(len(keys))
        errs = np.empty(len(keys))
        step = max(1, 4_000_000 // (hi.shape[1] * nu))
        for s in range(0, len(keys), step):
            kk = keys[s:s + step]
            f = np.prod(hi[kk], axis=1)
            f_lo = np.prod(lo[kk], axis=1)
            v = nu * f @ self._w
            v_lo = nu * f_lo @ self._w_lo
            vals[s:s + step] = v
            # rounding floor: the two rules can agree to the last bit
            errs[s:s + step] = np.abs(v - v_lo) + 1e-15 * np.abs(v)
        tail, tail_err = self._tail(keys)
        return vals + tail, errs + tail_err

    def _fill(self, keys: list[tuple[int, ...]]):
        if all(k in self._memo for k in keys):
            return
        with self._lock:
            self._fill_locked(keys)

    def _fill_locked(self, keys: list[tuple[int, ...]]):
        missing = sorted({k for k in keys if k not in self._memo})
        if not missing:
            return
        if self.frozen:
            raise KeyError(f"frozen GreenTable has no entry for {missing[0]}")
        vals, errs = self._compute(np.array(missing, dtype=np.int64))
        bad = np.flatnonzero(errs > self.tol)
        if bad.size:
            i = bad[np.argmax(errs[bad])]
            raise NumericalError(
                f"Green quadrature at {missing[i]} reached error estimate "
                f"{errs[i]:.3g} > tol {self.tol:.3g}", float(errs[i]))
        for key, v, e in zip(missing, vals, errs):
            self._err[key] = float(e)
            self._memo[key] = float(v)

    def __call__(self, x) -> float:
        return self.value(x)

    def value(self, x) -> float:
        key = canonical(x)
        if len(key) != self.dim:
            raise DimensionError(f"point {tuple(x)} is not in Z^{self.dim}")
        self._fill([key])
        return self._memo[key]

    def error(self, x) -> float:
        """Error estimate attached to the memoized value at ``x``."""
        key = canonical(x)
        self._fill([key])
        return self._err[key]

    def values(self, points) -> np.ndarray:
        """Vectorized lookup for an integer array of shape (n, dim)."""
        pts = np.asarray(points, dtype=np.int64)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionError(f"expected points of shape (n, {self.dim})")
        if len(pts) == 0:
            return np.empty(0)
        can = canonical_array(pts)
        base = int(can.max()) + 1
        if self.dim * math.log2(base) < 62:
            # pack rows into scalar keys; 1-D unique is much faster than axis=0
            packed = can @ (base ** np.arange(self.dim, dtype=np.int64))
            _, first, inverse = np.unique(packed, return_index=True, return_inverse=True)
            uniq = can[first]
        else:
            uniq, inverse = np.unique(can, axis=0, return_inverse=True)
        keys = [tuple(int(c) for c in row) for row in uniq]
        self._fill(keys)
        table = np.fromiter((self._memo[k] for k in keys), dtype=float, count=len(keys))
        return table[inverse.ravel()]

    def matrix(self, points, others=None) -> np.ndarray:
        """Green matrix g(x_i - y_j) between two point arrays."""
        a = np.asarray(points, dtype=np.int64)
        b = a if others is None else np.asarray(others, dtype=np.int64)
        out = np.empty((len(a), len(b)))
        if len(a) == 0 or len(b) == 0:
            return out
        reach = int(max((a.max(axis=0) - b.min(axis=0)).max(),
                        (b.max(axis=0) - a.min(axis=0)).max()))
        block = self.block(reach) if len(a) * len(b) > 4 * math.comb(reach + self.dim,
                                                                        self.dim) else None
        step = max(1, 2_000_000 // max(1, len(b)))
        for s in range(0, len(a), step):
            diff = a[s:s + step, None, :] - b[None, :, :]
            if block is not None:
                out[s:s + step] = block(diff)
            else:
                out[s:s + step] = self.values(diff.reshape(-1, self.dim)).reshape(-1, len(b))
        return out

    def block(self, radius: int) -> "GreenBlock":
        """Shared :class:`GreenBlock` covering at least ``radius``."""
        with self._lock:
            if self._block is None or self._block.radius < radius:
                self._block = GreenBlock(self, radius)
            return self._block


class GreenBlock:
    """Array lookup of g over every point with sup-norm at most ``radius``.

    Values are stored once per canonical point, ranked by the combinatorial
    number system of the sorted absolute coordinates, so memory grows like
    radius**nu / nu! rather than radius**nu.
    """

    def __init__(self, table: GreenTable, radius: int):
        self.dim = table.dim
        self.radius = int(radius)
        n = self.radius + self.dim + 1
        self._binom = np.array([[math.comb(a, b) for b in range(self.dim + 1)]
                                for a in range(n)], dtype=np.int64)
        asc = np.array(list(itertools.combinations_with_replacement(
            range(self.radius + 1), self.dim)), dtype=np.int64)
        self._vals = np.empty(len(asc))
        self._vals[self._rank(asc)] = table.values(asc)

    def _rank(self, asc: np.ndarray) -> np.ndarray:
        b = asc + np.arange(self.dim)
        return sum(self._binom[b[:, i], i + 1] for i in range(self.dim))

    def __call__(self, disp) -> np.ndarray:
        """g at integer displacements of shape (..., nu)."""
        disp = np.asarray(disp, dtype=np.int64)
        a = np.sort(np.abs(disp), axis=-1).reshape(-1, self.dim)
        if a.size and a[:, -1].max() > self.radius:
            raise ValueError(f"displacement beyond the block radius {self.radius}")
        return self._vals[self._rank(a)].reshape(disp.shape[:-1])


@functools.lru_cache(maxsize=None)
def get_table(dim: int, tol: float = DEFAULT_TOL) -> GreenTable:
    """Process-wide shared table for ``dim`` (not frozen)."""
    return GreenTable(dim, tol=tol)


def green_at(table: GreenTable, x) -> float:
    """g(x) from ``table``; raises NumericalError if the tolerance is missed."""
    return table.value(x)


def return_prob(nu: int, table: GreenTable | None = None) -> float:
    """Return probability to the origin of simple random walk on Z^nu."""
    if table is None:
        table = get_table(nu)
    elif table.dim != nu:
        raise DimensionError(f"table is for dimension {table.dim}, not {nu}")
    return 1.0 - 1.0 / table.value((0,) * nu)
