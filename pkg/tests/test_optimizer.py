import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grantfree.analytic import SystemConfig, ase_derivatives, average_se, spectral_efficiency
from grantfree.optimizer import (
    REPORT_COLUMNS,
    golden_section_max,
    grid_oracle,
    optimize_grant_free,
    optimize_granted,
)

TABLE1 = SystemConfig(100, 10, 200, 0.0)


class TestGridOracle:
    def test_constant_returns_lo(self):
        assert grid_oracle(lambda x: 1.0, 3.0, 9.0, 0.5) == (3.0, 1.0)

    def test_parabola(self):
        x, y = grid_oracle(lambda x: -(x - 50) ** 2, 1, 200, 0.01)
        assert x == pytest.approx(50, abs=1e-9)
        assert y == pytest.approx(0, abs=1e-12)

    def test_includes_upper_end(self):
        x, _ = grid_oracle(lambda x: x, 0.0, 1.05, 0.1)
        assert x == 1.05

    def test_vectorized_matches_scalar(self):
        f = lambda x: average_se(TABLE1, x)
        assert grid_oracle(f, 1, 200, 0.1) == grid_oracle(f, 1, 200, 0.1, vectorized=True)

    @pytest.mark.parametrize("lo,hi,res", [(2, 1, 0.1), (1, 1, 0.1), (1, 2, 0), (1, 2, -1)])
    def test_rejects_bad_ranges(self, lo, hi, res):
        with pytest.raises(ValueError):
            grid_oracle(lambda x: x, lo, hi, res)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            grid_oracle(lambda x: math.inf if x > 1.5 else 0.0, 1, 2, 0.1)

    def test_certifies_grant_free_optimum(self):
        x, y = grid_oracle(lambda p: average_se(TABLE1, p), 1, 200, 0.01, vectorized=True)
        report = optimize_grant_free(TABLE1)
        assert abs(x - report.p_star) <= 0.01
        assert report.ase_at_star >= y - 1e-8


def test_golden_section_on_parabola():
    assert golden_section_max(lambda x: -(x - 2.5) ** 2, 0, 10, 1e-10) == pytest.approx(2.5, abs=1e-9)


class TestGranted:
    def test_high_snr_hits_lower_bound(self):
        cfg = TABLE1.replace(snr_db=40)
        assert optimize_granted(cfg) == 10.0
        x, _ = grid_oracle(lambda p: spectral_efficiency(cfg, p), 10, 200, 0.001, vectorized=True)
        assert x == 10.0

    def test_low_snr_interior(self):
        cfg = TABLE1.replace(snr_db=-20)
        p = optimize_granted(cfg)
        assert 10 < p < 200
        xs = np.linspace(10, 200, 100001)
        oracle = xs[np.argmax(spectral_efficiency(cfg, xs))]
        assert p == pytest.approx(oracle, abs=1e-3)
        se = lambda x: spectral_efficiency(cfg, x)
        assert se(p) >= se(p - 1e-3) and se(p) >= se(p + 1e-3)

    @settings(max_examples=40, deadline=None)
    @given(m=st.integers(100, 500), snr=st.floats(-20, 10))
    def test_beats_endpoints(self, m, snr):
        cfg = TABLE1.replace(m_antennas=m, snr_db=snr)
        p = optimize_granted(cfg)
        assert 10 <= p <= 200
        assert spectral_efficiency(cfg, p) >= spectral_efficiency(cfg, 10)
        assert spectral_efficiency(cfg, p) >= spectral_efficiency(cfg, 200)

    def test_rejects_n_above_l(self):
        with pytest.raises(ValueError):
            optimize_granted(SystemConfig(10, 50, 20, 0))


class TestGrantFree:
    def test_table1(self):
        r = optimize_grant_free(TABLE1)
        assert r.converged
        assert r.p1 == pytest.approx(38.6146, abs=1e-4)
        assert abs(r.p_star - r.p1) <= 1
        x, _ = grid_oracle(lambda p: average_se(TABLE1, p), 1, 200, 0.01, vectorized=True)
        assert r.p_star == pytest.approx(x, abs=0.01)
        assert r.p_star == pytest.approx(39.3592, abs=1e-3)
        assert r.residual <= 1e-12 * max(1.0, abs(ase_derivatives(TABLE1, r.p_star)[1]))
        assert r.p_star_int == 39

    def test_single_ue_reduces_to_granted(self):
        cfg = TABLE1.replace(n_ues=1)
        r = optimize_grant_free(cfg)
        assert r.p_star == r.p_hat_star
        assert r.ase_at_star == pytest.approx(r.se_at_hat_star)
        x, _ = grid_oracle(lambda p: spectral_efficiency(cfg, p), 1, 200, 0.001, vectorized=True)
        assert r.p_star == pytest.approx(x, abs=1e-3)

    def test_low_snr(self):
        cfg = TABLE1.replace(snr_db=-20)
        r = optimize_grant_free(cfg)
        assert r.p_star > r.p1
        assert r.p_star > r.p_hat_star
        x, _ = grid_oracle(lambda p: average_se(cfg, p), 1, 200, 0.01, vectorized=True)
        assert abs(x - r.p_star) <= 0.01

    def test_integer_choice_prefers_better_neighbour(self):
        r = optimize_grant_free(TABLE1)
        lo, hi = math.floor(r.p_star), math.ceil(r.p_star)
        best = lo if average_se(TABLE1, lo) >= average_se(TABLE1, hi) else hi
        assert r.p_star_int == best

    def test_reports_non_convergence(self):
        r = optimize_grant_free(TABLE1.replace(snr_db=-20), max_iter=1)
        assert not r.converged
        assert r.iterations == 1
        assert r.p1 <= r.p_star <= 200

    @settings(max_examples=60, deadline=None)
    @given(m=st.integers(1, 1000), n=st.integers(2, 60), big_l=st.integers(60, 600),
           snr=st.floats(-25, 20))
    def test_localization_and_optimality(self, m, n, big_l, snr):
        cfg = SystemConfig(m, n, big_l, snr)
        r = optimize_grant_free(cfg)
        assert r.converged and r.iterations <= 30
        assert r.p_star >= r.p1 - 1e-9
        assert r.p_star <= big_l
        xs = np.linspace(1, big_l, 4001)
        assert r.ase_at_star >= np.max(average_se(cfg, xs)) - 1e-12

    @settings(max_examples=40, deadline=None)
    @given(m=st.integers(100, 500), snr=st.floats(-20, 10))
    def test_grant_free_needs_longer_preamble(self, m, snr):
        r = optimize_grant_free(TABLE1.replace(m_antennas=m, snr_db=snr))
        assert r.p_star >= r.p_hat_star
        assert 10 <= r.p_hat_star <= 200

    @pytest.mark.parametrize("m", [100, 200, 300, 400, 500])
    @pytest.mark.parametrize("snr", [0, 5, 10])
    def test_high_snr_plateau_near_p1(self, m, snr):
        r = optimize_grant_free(TABLE1.replace(m_antennas=m, snr_db=snr))
        assert abs(r.p_star - r.p1) <= 1

    def test_serialization(self):
        r = optimize_grant_free(TABLE1)
        row = r.row()
        assert tuple(row) == REPORT_COLUMNS
        assert r.csv_row() == [row[c] for c in REPORT_COLUMNS]
        doc = json.loads(json.dumps(r.to_json()))
        assert doc["p1"] == pytest.approx(38.61455150532503)
