"""Exponential moment bounds for occupation times of low-dimensional sets and
the Peierls-type dimension condition built on them.

Throughout, m is the dimension of the coordinate subspace containing the
set A (1 <= m <= d - 3) and q(nu) the return probability of simple random
walk on Z^nu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DimensionError, NumericalError, PreconditionError
from .green import get_table, return_prob

LAMBDA_TILDE_TOL = 1e-12


def _check_dims(d: int, m: int):
    if not 1 <= m <= d - 3:
        raise DimensionError(f"need 1 <= m <= d - 3, got d={d}, m={m}")


def chi(d: int, m: int, lam: float) -> float:
    """exp(lam) (m/d + (1 - m/d) q(d - m))."""
    _check_dims(d, m)
    return math.exp(lam) * (m / d + (1 - m / d) * return_prob(d - m))


@dataclass
class BoundParams:
    d: int
    m: int
    lam: float
    chi: float
    lam_tilde: float | None = None

    @classmethod
    def make(cls, d: int, m: int, lam: float) -> "BoundParams":
        if lam <= 0:
            raise PreconditionError("lambda must be positive")
        c = chi(d, m, lam)
        lt = lambda_tilde(d, m, lam) if c < 1 else None
        return cls(d, m, lam, c, lt)


def exp_moment_bound(u: float, capA: float, d: int, m: int, lam: float) -> float:
    """exp(u cap(A) (e^lam - 1) / (1 - chi(lam))), valid when chi(lam) < 1."""
    if u < 0 or capA <= 0:
        raise PreconditionError("need u >= 0 and cap(A) > 0")
    c = chi(d, m, lam)
    if c >= 1:
        raise PreconditionError(f"chi(lambda) = {c:.6g} >= 1: bound not valid")
    return math.exp(u * capA * math.expm1(lam) / (1 - c))


def lambda_tilde(d: int, m: int, lam: float) -> float:
    """The lam' > lam with 1 - chi(lam') = (1 - chi(lam)) / 2.

    chi is c0 e^lam, so the root is explicit; the defining identity is
    re-checked to LAMBDA_TILDE_TOL.
    """
    c0 = chi(d, m, 0.0)
    c = c0 * math.exp(lam)
    if c >= 1:
        raise PreconditionError(f"chi(lambda) = {c:.6g} >= 1")
    root = math.log((1 + c) / (2 * c0))
    resid = (1 - chi(d, m, root)) - (1 - c) / 2
    if abs(resid) > LAMBDA_TILDE_TOL:
        raise NumericalError(f"lambda_tilde residual {resid:.3g}", abs(resid))
    return root


def u1_threshold(d: int, m: int, lam: float) -> float:
    """Largest u for which the capacity bound cap(A) <= |A|/g(0) closes the
    exponential estimate P[I^u contains A] <= exp(-lam |A|)."""
    if lam <= 0:
        raise PreconditionError("lambda must be positive")
    lt = lambda_tilde(d, m, lam)
    g0 = get_table(d).value((0,) * d)
    return (lt - lam) * g0 * (1 - chi(d, m, lt)) / math.expm1(lt)


def peierls_condition(d: int) -> tuple[float, bool]:
    """7 (2/d + (1 - 2/d) q(d - 2)) and whether it is below 1."""
    if d < 5:
        raise DimensionError(f"the Peierls condition needs d >= 5, got {d}")
    value = 7 * (2 / d + (1 - 2 / d) * return_prob(d - 2))
    return value, value < 1
