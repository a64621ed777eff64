"""Scale and level sequences of the multiscale renormalization, and checks of
the conditional induction steps for the crossing probabilities.

Length scales are exact integers: L_{n+1} = l_n L_n with
l_n = 100 * floor(L_n ** a) and a = 1/(100 d).  The floor of the rational
power is an integer root, never a floating-point pow.

The induction checks take the unspecified constants (c_1 ... c_6) as inputs
and report, step by step, which of the conditional inequalities hold.
Comparisons are carried out on logarithms because the scales overflow
floating point quickly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DimensionError, PreconditionError

# relative slack under which an inequality is reported as an equality
EQUALITY_RTOL = 1e-12


def integer_root(x: int, k: int) -> int:
    """floor(x ** (1/k)) for integers x >= 0, k >= 1, by bisection on k-th powers."""
    if x < 0 or k < 1:
        raise ValueError("integer_root needs x >= 0 and k >= 1")
    if x < 2 or k == 1:
        return x
    lo, hi = 1, 1 << (x.bit_length() // k + 1)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid ** k <= x:
            lo = mid
        else:
            hi = mid - 1
    return lo


@dataclass
class LevelTrack:
    u0: float
    r: int
    c1: float
    u: list[float]
    u_inf: float
    tail_bound: float     # bound on u_inf / u_{n_max} - 1 from the untabulated factors


@dataclass
class ScaleLevelSequence:
    d: int
    L0: int
    L: list[int]
    ell: list[int]
    levels: LevelTrack | None = field(default=None)

    @property
    def a(self) -> Fraction:
        return Fraction(1, 100 * self.d)

    @property
    def n_max(self) -> int:
        return len(self.L) - 1

    def as_dict(self) -> dict:
        out = {"d": self.d, "L0": self.L0, "a": str(self.a),
               "L": [str(v) for v in self.L], "ell": self.ell}
        if self.levels is not None:
            lv = self.levels
            out.update(u0=lv.u0, r=lv.r, c1=lv.c1, u=lv.u, u_inf=lv.u_inf,
                       u_inf_tail_bound=lv.tail_bound)
        return out


def build_scales(d: int, L0: int, n_max: int) -> ScaleLevelSequence:
    """Tabulate (L_n, l_n) for n = 0..n_max; l_n is tabulated up to n_max."""
    if d < 3:
        raise DimensionError(f"scales need d >= 3, got {d}")
    if L0 < 2:
        raise PreconditionError(f"L0 must be at least 2, got {L0}")
    if n_max < 0:
        raise PreconditionError("n_max must be nonnegative")
    k = 100 * d
    L, ell = [int(L0)], []
    for _ in range(n_max + 1):
        ell.append(100 * integer_root(L[-1], k))
        L.append(ell[-1] * L[-1])
    L.pop()
    seq = ScaleLevelSequence(d, int(L0), L, ell)
    bad = [n for n, ok in enumerate(scale_growth_holds(seq)) if not ok]
    if bad:
        raise AssertionError(f"scale growth bound fails at n = {bad}")
    return seq


def _power_geq(x: int, m: int, y: int, n: int) -> bool:
    """x**m >= y**n for positive integers, decided through logs with an exact fallback."""
    lhs, rhs = m * math.log(x), n * math.log(y)
    if abs(lhs - rhs) > 1e-9 * max(abs(lhs), abs(rhs), 1.0):
        return lhs > rhs
    return x ** m >= y ** n


def scale_growth_holds(seq: ScaleLevelSequence) -> list[bool]:
    """Per-n verdicts of L_n >= L0^((1+a)^n), decided exactly."""
    # L_n >= L0^((1+a)^n)  <=>  L_n^(q^n) >= L0^(p^n), with 1 + a = p/q
    a = seq.a
    p, q = (1 + a).numerator, (1 + a).denominator
    return [_power_geq(Ln, q ** n, seq.L0, p ** n) for n, Ln in enumerate(seq.L)]


def build_levels(seq: ScaleLevelSequence, u0: float, r: int, c1: float) -> LevelTrack:
    """u_n = u0 prod_{n' < n} (1 + c1 l_{n'}^{-(d-2)})^{r+1} and its limit u_inf.

    u_inf continues the exact scale recursion past the table until the
    factors reach 1 to double precision; ``tail_bound`` bounds the relative
    contribution of all factors after that point, using
    L_{N+m} >= L_N^{(1+a)^m} and floor(y) >= y/2 for y >= 1.
    """
    if u0 <= 0 or r < 1 or c1 < 0:
        raise PreconditionError("need u0 > 0, r >= 1, c1 >= 0")
    d, a = seq.d, float(seq.a)
    k = 100 * d
    u = [float(u0)]
    log_u = math.log(u0)
    for n in range(seq.n_max):
        log_u += (r + 1) * math.log1p(c1 * float(seq.ell[n]) ** -(d - 2))
        u.append(math.exp(log_u))

    L, ell = seq.L[-1], seq.ell[-1]
    log_inf = log_u
    for _ in range(100_000):
        term = c1 * float(ell) ** -(d - 2)
        log_inf += (r + 1) * math.log1p(term)
        L = L * ell
        ell = 100 * integer_root(L, k)
        if term < 1e-17:
            break
    # sum over m >= 0 of c1 (50 L^{a (1+a)^m})^{-(d-2)} bounds the rest
    logL = math.log(L)
    tail, m = 0.0, 0
    while m < 1_000_000:
        log_t = math.log(c1) - (d - 2) * (math.log(50.0) + a * (1 + a) ** m * logL) \
            if c1 > 0 else -math.inf
        t = math.exp(log_t) if log_t > -745 else 0.0
        tail += t
        if t <= 1e-30 * max(tail, 1e-300) or t == 0.0:
            break
        m += 1
    track = LevelTrack(float(u0), int(r), float(c1), u, math.exp(log_inf),
                       math.expm1((r + 1) * tail))
    seq.levels = track
    return track


@dataclass
class InductionStep:
    n: int
    checks: dict          # name -> "holds" | "holds with equality" | "fails"
    propagates: bool


@dataclass
class InductionReport:
    kind: str
    constants: dict
    condition_r: str | None
    steps: list[InductionStep]

    @property
    def all_hold(self) -> bool:
        ok = self.condition_r in (None, "holds", "holds with equality")
        return ok and all(s.propagates for s in self.steps)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "constants": self.constants,
                "condition_r": self.condition_r, "all_hold": self.all_hold,
                "steps": [{"n": s.n, "checks": s.checks, "propagates": s.propagates}
                          for s in self.steps]}


def _compare_log(lhs: float, rhs: float) -> str:
    """Verdict for exp(lhs) <= exp(rhs); -inf stands for zero."""
    if lhs == -math.inf:
        return "holds"
    diff = lhs - rhs
    if abs(diff) <= EQUALITY_RTOL * max(1.0, abs(rhs)):
        return "holds with equality"
    return "holds" if diff < 0 else "fails"


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _ok(verdict: str) -> bool:
    return verdict != "fails"


def verify_induction_vacant(seq: ScaleLevelSequence, p: dict | list, c2: float, c3: float,
                            u: list[float] | LevelTrack | None = None,
                            r: int | None = None, c4: float = 1.0) -> InductionReport:
    """Check the conditional induction for the vacant crossing probabilities.

    Parameters
    ----------
    p : mapping n -> p_n(u_n) (or a list indexed by n)
        Measured or synthetic crossing probabilities at the levels u_n.
    u : level track (or list u_n); defaults to ``seq.levels``.
    r : the sprinkling exponent; defaults to the level track's r.

    For each tabulated n the report states whether
    (i) a_n <= 1/L_n with a_n = c2 l_n^{2(d-1)} p_n,
    (ii) u_n <= L_n^{(d-2) a r / 2},
    and whether the recursion bound
    c4 a_n (L_n^{2(d-1)a^2} a_n + L_n^{2(d-1)a(1+a)} u_n c3^r L_n^{(d-2)(1-ar)})
    is at most 1/L_{n+1}, i.e. whether (i) propagates to n+1.
    """
    d = seq.d
    a = float(seq.a)
    track = u if isinstance(u, LevelTrack) else seq.levels
    u_list = u if isinstance(u, list) else (track.u if track is not None else None)
    if u_list is None:
        raise PreconditionError("a level track u_n is required")
    if r is None:
        if track is None:
            raise PreconditionError("r is required when no level track is given")
        r = track.r
    p_map = dict(enumerate(p)) if isinstance(p, (list, tuple)) else dict(p)
    n_range = range(min(len(seq.L), len(u_list)))
    missing = [n for n in n_range if n not in p_map]
    if missing:
        raise PreconditionError(f"missing p_n for n = {missing}")

    cond_r = _compare_log(math.log(4 * d), math.log((d - 2) * a * r))
    steps = []
    for n in n_range:
        logL = math.log(seq.L[n])
        pn = float(p_map[n])
        log_an = _log(c2) + 2 * (d - 1) * math.log(seq.ell[n]) + _log(pn)
        checks = {
            "i": _compare_log(log_an, -logL),
            "ii": _compare_log(math.log(u_list[n]), (d - 2) * a * r / 2 * logL),
        }
        if n + 1 < len(seq.L):
            log_next = -math.log(seq.L[n + 1])
        else:
            log_next = -(logL + math.log(seq.ell[n]))
        t1 = 2 * (d - 1) * a * a * logL + log_an
        t2 = (2 * (d - 1) * a * (1 + a) * logL + math.log(u_list[n])
              + r * _log(c3) + (d - 2) * (1 - a * r) * logL)
        log_bound = _log(c4) + log_an + _logaddexp(t1, t2)
        checks["recursion"] = _compare_log(log_bound, log_next)
        propagates = all(_ok(v) for v in checks.values()) and _ok(cond_r)
        steps.append(InductionStep(n, checks, propagates))
    return InductionReport("vacant", {"c2": c2, "c3": c3, "c4": c4, "r": r}, cond_r, steps)


def verify_induction_planar(seq: ScaleLevelSequence, q: dict | list, c5: float,
                            c6: float) -> InductionReport:
    """Check the conditional induction for the planar occupied crossings (d >= 7).

    With b_n = c5 l_n^2 q_n the report states whether b_n <= L_n^{-1/2} and
    whether c6 L_n^{2a^2} (b_n^2 + 1/L_n) <= L_{n+1}^{-1/2}.
    """
    d = seq.d
    if d < 7:
        raise DimensionError(f"the planar induction needs d >= 7, got {d}")
    a = float(seq.a)
    q_map = dict(enumerate(q)) if isinstance(q, (list, tuple)) else dict(q)
    n_range = range(len(seq.L))
    missing = [n for n in n_range if n not in q_map]
    if missing:
        raise PreconditionError(f"missing q_n for n = {missing}")
    steps = []
    for n in n_range:
        logL = math.log(seq.L[n])
        log_bn = _log(c5) + 2 * math.log(seq.ell[n]) + _log(float(q_map[n]))
        checks = {"b_n": _compare_log(log_bn, -0.5 * logL)}
        log_next_L = (math.log(seq.L[n + 1]) if n + 1 < len(seq.L)
                      else logL + math.log(seq.ell[n]))
        log_bound = _log(c6) + 2 * a * a * logL + _logaddexp(2 * log_bn, -logL)
        checks["recursion"] = _compare_log(log_bound, -0.5 * log_next_L)
        steps.append(InductionStep(n, checks, all(_ok(v) for v in checks.values())))
    return InductionReport("planar", {"c5": c5, "c6": c6}, None, steps)


def _logaddexp(x: float, y: float) -> float:
    if x == -math.inf:
        return y
    if y == -math.inf:
        return x
    m = max(x, y)
    return m + math.log(math.exp(x - m) + math.exp(y - m))
