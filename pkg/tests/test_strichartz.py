"""Exact exponent arithmetic: critical regularity, admissible pairs, max of J."""
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from snlw.strichartz import (
    INF, Infeasible, J_grid_max, J_value, K_bounds, PairSpec, as_fraction, choose_pair, feasibility_threshold,
    feasible, figure_data, is_admissible, is_dual_admissible, max_J, max_j_table, s_crit, scrit_table,
)

fractions_01 = st.fractions(min_value=F(1, 1000), max_value=F(999, 1000), max_denominator=1000)


def j_oracle(s, r, rd):
    # the defining formula, with a vanishing denominator read as +inf
    den = (1 - s) * r - 2
    second = INF if den == 0 else ((3 - s) * rd - 2) / den
    return (r / rd) * min(1, second)


class TestScrit:
    @pytest.mark.parametrize("k,expected", [(2, F(0)), (3, F(1, 4)), (4, F(5, 12)), (5, F(1, 2)),
                                            (F(5, 2), F(3, 20))])
    def test_examples(self, k, expected):
        assert s_crit(k) == expected

    def test_non_integer_branch_dominates(self):
        k = F(5, 2)
        assert F(3, 4) - F(3) / (2 * k) > max(1 - 2 / (k - 1), F(3, 4) - 1 / (k - 1))

    def test_rejects(self):
        with pytest.raises(ValueError):
            s_crit(F(3, 2))

    @given(st.integers(2, 200))
    def test_integer_formula(self, k):
        assert s_crit(k) == max(1 - F(2, k - 1), F(3, 4) - F(1, k - 1), 0)
        assert 0 <= s_crit(k) < 1

    def test_tables(self):
        assert dict(scrit_table())[6] == F(3, 5)
        fig = figure_data(200)
        assert len(fig) == 200 and fig[-1] == (F(1, 2), F(0))
        assert fig[0][0] == F(1, 400)


class TestAdmissible:
    def test_examples(self):
        h = F(1, 2)
        assert is_admissible(h, 6, 6)
        assert not is_admissible(h, 12, 8)
        assert is_dual_admissible(h, 1, F(4, 3))

    def test_dual_open_at_one(self):
        # 1/qd + 2/rd = 3 - s with rd = 1 forces qd = 1/(1 - s)
        s = F(1, 5)
        assert not is_dual_admissible(s, 1 / (1 - s), 1)

    def test_infinite_q(self):
        s = F(1, 2)
        assert is_admissible(s, INF, 4)
        assert not is_admissible(s, 4, INF)

    def test_s_range(self):
        with pytest.raises(ValueError):
            is_admissible(0, 6, 6)
        with pytest.raises(ValueError):
            is_admissible(1, 6, 6)

    def test_fraction_conversion(self):
        assert as_fraction("0.1") == F(1, 10)
        assert as_fraction(0.1) == F(1, 10)
        assert as_fraction(1 / 3) == F(1, 3)


class TestJ:
    def test_examples(self):
        assert J_value(F(1, 2), 6, F(6, 5)) == 5
        assert J_value(F(1, 10), F(60, 26), 1) == F(30, 13)
        assert float(J_value(F(1, 10), F(60, 26), 1)) == pytest.approx(2.30769, abs=1e-5)

    def test_outside_K(self):
        with pytest.raises(ValueError):
            J_value(F(1, 2), 7, F(6, 5))

    @given(fractions_01, st.fractions(0, 1, max_denominator=50), st.fractions(0, 1, max_denominator=50))
    def test_formula_oracle(self, s, x, y):
        r_lo, r_hi, rd_lo, rd_hi = K_bounds(s)
        if r_hi == INF:
            r_hi = F(40)
        r = r_lo + x * (r_hi - r_lo)
        rd = rd_lo + y * (rd_hi - rd_lo)
        assert J_value(s, r, rd) == j_oracle(s, r, rd)

    @given(fractions_01)
    def test_ray_value(self, s):
        m = max_J(s)
        if m.case == "iii":
            r = m.r_range[0]
            assert J_value(s, r, r * (1 - s) / (3 - s)) == (3 - s) / (1 - s)


class TestMaxJ:
    def test_examples(self):
        assert max_J(F(1, 2)).value == 5
        assert max_J(F(1, 4)).value == 3

    def test_branch_continuity(self):
        q, h = F(1, 4), F(1, 2)
        assert 6 / (3 - 4 * q) == (7 - 4 * q) / (3 - 4 * q)
        assert (7 - 4 * h) / (3 - 4 * h) == (3 - h) / (1 - h)

    @given(fractions_01)
    def test_attained(self, s):
        m = max_J(s)
        assert J_value(s, m.r_range[0], m.rd_range[0]) == m.value
        assert J_value(s, m.r_range[1], m.rd_range[1]) == m.value

    def test_breakpoint(self):
        b = 3 - math.sqrt(6)
        below, above = max_J(b - 0.01), max_J(b + 0.01)
        assert below.r_range[1] == 6 / (3 - 4 * below.s)
        assert above.r_range[1] == 2 / (2 - above.s) * (3 - above.s) / (1 - above.s)

    @pytest.mark.parametrize("s", [F(i, 10) for i in range(1, 10)])
    def test_grid_search(self, s):
        val, r, rd = J_grid_max(s, step=1e-3)
        m = max_J(s)
        assert abs(val - float(m.value)) <= 2e-3
        assert m.contains(r, rd, tol=2e-3)

    def test_table(self):
        rows = max_j_table([F(1, 2)])
        assert rows[0][1] == 5 and rows[0][2] == "ii"


class TestChoosePair:
    def test_worked_example(self):
        p = choose_pair(4, F(5, 12))
        assert (p.r, p.rd, p.q, p.qd) == (F(9, 2), F(9, 8), F(36, 5), F(36, 29))
        assert p.ratios == (F(29, 5), F(4))
        assert p.time_exponent == F(1, 4)
        assert p.check()

    def test_endpoint_excluded(self):
        with pytest.raises(Infeasible):
            choose_pair(3, F(1, 4))

    def test_quadratic_strict(self):
        p = choose_pair(2, F(1, 5))
        qr, rr = p.ratios
        assert qr > 2 and rr > 2 and p.check()

    @given(st.integers(2, 8), fractions_01)
    def test_outputs_exact(self, k, s):
        if not feasible(k, s):
            with pytest.raises(Infeasible):
                choose_pair(k, s)
            return
        p = choose_pair(k, s)
        assert isinstance(p, PairSpec)
        assert p.inv_q + 2 * p.inv_r == 1 - s
        assert p.inv_qd + 2 * p.inv_rd == 3 - s
        assert 2 * p.inv_q + p.inv_r <= F(1, 2)
        assert 2 * p.inv_qd + p.inv_rd >= F(5, 2)
        assert 1 <= p.qd < 2 < p.q and 1 < p.rd <= 2 <= p.r
        qr, rr = p.ratios
        assert min(qr, rr) >= k
        if k <= 3:
            assert min(qr, rr) > k

    @pytest.mark.parametrize("k", [4, 5, 6, 7, 8])
    def test_threshold_is_scrit(self, k):
        assert abs(feasibility_threshold(k, tol=1e-7) - float(s_crit(k))) <= 1e-6
        assert feasible(k, s_crit(k))

    @pytest.mark.parametrize("k", [2, 3])
    def test_strict_threshold(self, k):
        sc = s_crit(k)
        for ds in (F(1, 10 ** 6), F(1, 1000), F(1, 10), F(1, 2)):
            if sc + ds < 1:
                assert feasible(k, sc + ds)
        if sc > 0:
            assert not feasible(k, sc)
        assert feasibility_threshold(k) <= float(sc) + 1e-6
