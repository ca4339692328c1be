"""Exact rational arithmetic for Strichartz exponents of the 2-d wave equation.

Exponents are handled through their reciprocals ``a = 1/r``, ``b = 1/rd``,
``A = 1/q``, ``B = 1/qd``, in which every constraint is linear:

* scaling: ``A = 1 - s - 2a`` and ``B = 3 - s - 2b``;
* ``(q, r)`` is s-admissible iff ``0 <= A < 1/2``, ``0 < a <= 1/2`` and
  ``2A + a <= 1/2``;
* ``(qd, rd)`` is dual s-admissible iff ``1/2 < B <= 1``, ``1/2 <= b < 1`` and
  ``2B + b >= 5/2``.

``q = inf`` is the symbolic value ``A = 0``. Real inputs are converted to
fractions with denominators capped at ``MAX_DENOMINATOR``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

MAX_DENOMINATOR = 10 ** 12
INF = math.inf


def as_fraction(x):
    """Exact fraction for ints, Fractions and decimal strings; floats are
    rationalized with denominator at most ``MAX_DENOMINATOR``."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    return Fraction(x).limit_denominator(MAX_DENOMINATOR)


def _check_s(s):
    s = as_fraction(s)
    if not 0 < s < 1:
        raise ValueError(f"regularity s must lie in (0, 1), got {s}")
    return s


def s_crit(k):
    """Critical regularity for the power ``k >= 2``.

    Integer ``k``: ``max(1 - 2/(k-1), 3/4 - 1/(k-1), 0)``. Non-integer ``k``
    adds the branch ``3/4 - 3/(2k)``. Rational in, rational out.
    """
    kf = as_fraction(k)
    if kf < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    scaling = 1 - Fraction(2) / (kf - 1)
    conformal = Fraction(3, 4) - 1 / (kf - 1)
    if kf.denominator == 1:
        return max(scaling, conformal, Fraction(0))
    return max(scaling, conformal, Fraction(3, 4) - Fraction(3) / (2 * kf))


def _recip(x):
    """1/x for a positive exponent, with 1/inf = 0."""
    if x == INF:
        return Fraction(0)
    x = as_fraction(x)
    if x <= 0:
        raise ValueError("exponents must be positive")
    return 1 / x


def is_admissible(s, q, r):
    """Whether ``(q, r)`` is s-admissible (exact)."""
    s = _check_s(s)
    if r == INF:
        return False
    A, a = _recip(q), _recip(r)
    return A + 2 * a == 1 - s and 0 <= A < Fraction(1, 2) and 0 < a <= Fraction(1, 2) and 2 * A + a <= Fraction(1, 2)


def is_dual_admissible(s, qd, rd):
    """Whether ``(qd, rd)`` is dual s-admissible (exact; ``rd > 1`` strictly)."""
    s = _check_s(s)
    B, b = _recip(qd), _recip(rd)
    return (B + 2 * b == 3 - s and Fraction(1, 2) < B <= 1 and Fraction(1, 2) <= b < 1
            and 2 * B + b >= Fraction(5, 2))


def K_bounds(s):
    """``K(s)`` as ``(r_lo, r_hi, rd_lo, rd_hi)``; ``r_hi`` may be ``inf``."""
    s = _check_s(s)
    r_hi = Fraction(6) / (3 - 4 * s) if s < Fraction(3, 4) else INF
    return Fraction(2), r_hi, max(Fraction(1), Fraction(6) / (7 - 4 * s)), Fraction(2) / (2 - s)


def in_K(s, r, rd):
    r_lo, r_hi, rd_lo, rd_hi = K_bounds(s)
    return r_lo <= r <= r_hi and rd_lo <= rd <= rd_hi


def J_value(s, r, rd):
    """``(r/rd) min{1, ((3-s) rd - 2)/((1-s) r - 2)}`` on ``K(s)``.

    Equals ``min(r/rd, q/qd)`` for the exponents fixed by scaling; a vanishing
    denominator (``q = inf``) makes the second argument infinite. Returns a
    Fraction for rational input (``inf`` possible when ``r = inf``).
    """
    s = _check_s(s)
    if r != INF:
        r = as_fraction(r)
    rd = as_fraction(rd)
    if not in_K(s, r, rd):
        raise ValueError(f"(r, rd) = ({r}, {rd}) lies outside K({s})")
    a, b = _recip(r), _recip(rd)
    A = 1 - s - 2 * a
    B = 3 - s - 2 * b
    first = b / a if a > 0 else INF
    second = B / A if A != 0 else INF
    return min(first, second)


@dataclass(frozen=True)
class MaxJ:
    """Closed-form maximum of ``J`` with its attaining set.

    ``case`` is ``"i"``, ``"ii"`` or ``"iii"``. For cases i and ii the set is
    the single point ``r_range[0], rd``; in case iii it is the segment
    ``r_lo <= r <= r_hi`` on the ray ``rd = (1-s)/(3-s) r``.
    """

    s: Fraction
    value: Fraction
    case: str
    r_range: tuple
    rd_range: tuple

    def contains(self, r, rd, tol=0.0):
        r_lo, r_hi = (float(x) for x in self.r_range)
        if not r_lo - tol <= r <= r_hi + tol:
            return False
        if self.case == "iii":
            ratio = float((1 - self.s) / (3 - self.s))
            return abs(rd - ratio * r) <= tol * (1 + ratio)
        return abs(rd - float(self.rd_range[0])) <= tol


def max_J(s):
    s = _check_s(s)
    q4, q2 = Fraction(1, 4), Fraction(1, 2)
    if s <= q4:
        r = Fraction(6) / (3 - 4 * s)
        return MaxJ(s, r, "i", (r, r), (Fraction(1), Fraction(1)))
    if s <= q2:
        r, rd = Fraction(6) / (3 - 4 * s), Fraction(6) / (7 - 4 * s)
        return MaxJ(s, (7 - 4 * s) / (3 - 4 * s), "ii", (r, r), (rd, rd))
    ratio = (3 - s) / (1 - s)
    r_lo = Fraction(6) / (7 - 4 * s) * ratio
    # s <= 3 - sqrt(6)  <=>  (3 - s)^2 >= 6
    if (3 - s) ** 2 >= 6:
        r_hi = Fraction(6) / (3 - 4 * s)
    else:
        r_hi = Fraction(2) / (2 - s) * ratio
    return MaxJ(s, ratio, "iii", (r_lo, r_hi), (r_lo / ratio, r_hi / ratio))


@dataclass(frozen=True)
class PairSpec:
    """An s-admissible pair and a dual s-admissible pair, stored reciprocally."""

    s: Fraction
    inv_q: Fraction
    inv_r: Fraction
    inv_qd: Fraction
    inv_rd: Fraction
    k: int

    @property
    def q(self):
        return INF if self.inv_q == 0 else 1 / self.inv_q

    @property
    def r(self):
        return 1 / self.inv_r

    @property
    def qd(self):
        return 1 / self.inv_qd

    @property
    def rd(self):
        return 1 / self.inv_rd

    @property
    def ratios(self):
        """``(q/qd, r/rd)``."""
        q_ratio = INF if self.inv_q == 0 else self.inv_qd / self.inv_q
        return q_ratio, self.inv_rd / self.inv_r

    @property
    def time_exponent(self):
        """Power of ``T`` gained by Hoelder: ``1/qd - k/q``."""
        return self.inv_qd - self.k * self.inv_q

    def check(self):
        """All scaling, admissibility and ratio relations, exactly."""
        s = self.s
        return (is_admissible(s, self.q, self.r) and is_dual_admissible(s, self.qd, self.rd)
                and _ratios_ok(self.inv_r, self.inv_rd, s, self.k))


def _strict(k):
    return k <= 3


def _ratios_ok(a, b, s, k):
    # r >= k rd  <=>  b >= k a ;  q >= k qd  <=>  B >= k A  <=>  b - k a <= D
    d = b - k * a
    D = (3 - s - k * (1 - s)) / 2
    if _strict(k):
        return 0 < d < D
    return 0 <= d <= D


def _intervals(s):
    """Allowed ranges of ``a = 1/r`` and ``b = 1/rd`` as (lo, lo_closed, hi, hi_closed)."""
    a_lo = max(Fraction(0), (3 - 4 * s) / 6)
    a_range = (a_lo, a_lo > 0, (1 - s) / 2, True)
    # 1 <= qd < 2 gives (2 - s)/2 <= b < (5/2 - s)/2; dual admissibility caps b
    b_hi = min(Fraction(1), (7 - 4 * s) / 6)
    b_range = ((2 - s) / 2, True, b_hi, b_hi < 1)
    # A < 1/2 gives a > (1/2 - s)/2; redundant with 2A + a <= 1/2 for s > 0
    return a_range, b_range


def _point_ok(s, a, b, k):
    (alo, alc, ahi, ahc), (blo, blc, bhi, bhc) = _intervals(s)
    in_a = (alo <= a if alc else alo < a) and (a <= ahi if ahc else a < ahi)
    in_b = (blo <= b if blc else blo < b) and (b <= bhi if bhc else b < bhi)
    return in_a and in_b and _ratios_ok(a, b, s, k)


def feasible(k, s):
    """Whether a pair satisfying the Hoelder ratios exists at regularity ``s``."""
    s = _check_s(s)
    return _d_window(k, s) is not None


def _intersect(lows, highs):
    """Intersect bounds given as ``(value, closed)``; None when empty."""
    lo = max(v for v, _ in lows)
    lo_c = all(c for v, c in lows if v == lo)
    hi = min(v for v, _ in highs)
    hi_c = all(c for v, c in highs if v == hi)
    if lo < hi or (lo == hi and lo_c and hi_c):
        return lo, lo_c, hi, hi_c
    return None


def _d_window(k, s):
    """Feasible values of ``d = b - k a`` as (lo, lo_closed, hi, hi_closed) or None."""
    (alo, alc, ahi, ahc), (blo, blc, bhi, bhc) = _intervals(s)
    D = (3 - s - k * (1 - s)) / 2
    tight = not _strict(k)
    return _intersect([(blo - k * ahi, blc and ahc), (Fraction(0), tight)],
                      [(bhi - k * alo, bhc and alc), (D, tight)])


def _b_window(k, s, a):
    """Feasible ``b`` for fixed ``a`` as (lo, lo_closed, hi, hi_closed) or None."""
    _, (blo, blc, bhi, bhc) = _intervals(s)
    D = (3 - s - k * (1 - s)) / 2
    tight = not _strict(k)
    return _intersect([(blo, blc), (k * a, tight)], [(bhi, bhc), (k * a + D, tight)])


def _pick(lo, lo_c, hi, hi_c, prefer):
    if prefer == "hi" and hi_c:
        return hi
    if prefer == "lo" and lo_c:
        return lo
    return (lo + hi) / 2


class Infeasible(ValueError):
    pass


def choose_pair(k, s):
    """Exponents with ``q >= k qd`` and ``r >= k rd`` (strict for ``k <= 3``).

    The pair is the attaining point of the maximization of ``J`` with the
    smallest ``r``. When that point is not admissible (it has ``rd = 1`` for
    ``s <= 1/4``) ``r`` is kept and ``1/rd`` is moved to the midpoint of its
    feasible window. Raises :class:`Infeasible` below the threshold.
    """
    k = int(k)
    if k < 2:
        raise ValueError("k must be >= 2")
    s = _check_s(s)
    if not feasible(k, s):
        raise Infeasible(f"no pair for k={k} at s={s}")
    m = max_J(s)
    a = 1 / m.r_range[0]
    b = 1 / m.rd_range[0]
    if not _point_ok(s, a, b, k):
        win = _b_window(k, s, a)
        if win is not None:
            b = _pick(*win, prefer="hi")
        else:
            d = _pick(*_d_window(k, s), prefer="mid")
            (alo, alc, ahi, ahc), (blo, blc, bhi, bhc) = _intervals(s)
            # a compatible with b = d + k a inside the b interval
            win = _intersect([(alo, alc), ((blo - d) / k, blc)], [(ahi, ahc), ((bhi - d) / k, bhc)])
            a = _pick(*win, prefer="lo")
            b = d + k * a
    if not _point_ok(s, a, b, k):  # pragma: no cover - guarded by feasible()
        raise Infeasible(f"pair selection failed for k={k} at s={s}")
    return PairSpec(s, 1 - s - 2 * a, a, 3 - s - 2 * b, b, k)


def feasibility_threshold(k, lo=1e-9, hi=1 - 1e-9, tol=1e-7):
    """Smallest feasible ``s`` by bisection on :func:`feasible`."""
    if not feasible(k, as_fraction(hi)):
        raise Infeasible(f"k={k} infeasible on the whole range")
    lo_f, hi_f = lo, hi
    while hi_f - lo_f > tol:
        mid = 0.5 * (lo_f + hi_f)
        if feasible(k, as_fraction(mid)):
            hi_f = mid
        else:
            lo_f = mid
    return hi_f


def scrit_table(ks=(2, 3, 4, 5, 6, 7, 8)):
    return [(k, s_crit(k)) for k in ks]


def max_j_table(ss):
    rows = []
    for s in ss:
        m = max_J(s)
        rows.append((m.s, m.value, m.case, m.r_range[0], m.r_range[1], m.rd_range[0], m.rd_range[1]))
    return rows


def figure_data(points=200):
    """``(1/k, s_crit(k))`` for ``1/k`` evenly spaced in ``(0, 1/2]``."""
    out = []
    for i in range(1, points + 1):
        x = Fraction(i, 2 * points)
        out.append((x, s_crit(1 / x)))
    return out


def J_grid_max(s, step=1e-3, r_cap=None):
    """Brute-force maximum of ``J`` on a grid over ``K(s)`` (floating point).

    Returns ``(value, r, rd)``. For ``s >= 3/4`` the unbounded ``r`` range is
    truncated at ``r_cap`` (default: 1.5 times the largest attaining ``r``).
    """
    import numpy as np

    s_f = float(s)
    r_lo, r_hi, rd_lo, rd_hi = (float(x) for x in K_bounds(s))
    if r_hi == INF:
        r_hi = r_cap or 1.5 * float(max_J(s).r_range[1])
    rs = np.linspace(r_lo, r_hi, max(2, int(round((r_hi - r_lo) / step)) + 1))
    rds = np.linspace(rd_lo, rd_hi, max(2, int(round((rd_hi - rd_lo) / step)) + 1))
    R, RD = np.meshgrid(rs, rds, indexing="ij")
    den = (1 - s_f) * R - 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        second = np.where(den == 0, np.inf, ((3 - s_f) * RD - 2.0) / den)
    J = R / RD * np.minimum(1.0, second)
    i = np.unravel_index(np.argmax(J), J.shape)
    return float(J[i]), float(R[i]), float(RD[i])
