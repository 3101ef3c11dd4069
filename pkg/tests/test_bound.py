"""Moduli of continuity, psi/phi, the main bound, and gap-based variants."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from wgbound import bound, fourier, groups, smoothing, transport

from conftest import random_measure

G_T1 = groups.descriptor("torus(1)")
G_SU2 = groups.descriptor("su2")
LINEAR = bound.ModulusOfContinuity.power(1.0)


def zero_modulus():
    return bound.ModulusOfContinuity.table([1.0], [0.0])


class TestModulus:
    def test_power_validation(self):
        for bad in (0.0, -0.3, 1.2):
            with pytest.raises(ValueError):
                bound.ModulusOfContinuity.power(bad)
        g = bound.ModulusOfContinuity.power(0.5)
        assert g(4.0) == pytest.approx(2.0)
        assert g(0.0) == 0.0
        assert g.descriptor() == "power:0.5"

    def test_table_evaluation(self):
        g = bound.ModulusOfContinuity.table([0.5, 1.0, 2.0], [0.3, 0.5, 0.8])
        assert g(0.0) == 0.0
        assert g(0.25) == pytest.approx(0.15)
        assert g(1.5) == pytest.approx(0.65)
        assert g(10.0) == pytest.approx(0.8)  # constant beyond last knot
        assert g.descriptor().startswith("table:")

    def test_table_validation(self):
        T = bound.ModulusOfContinuity.table
        with pytest.raises(ValueError, match="increasing"):
            T([1.0, 1.0], [0.1, 0.2])
        with pytest.raises(ValueError, match="nonnegative|nondecreasing"):
            T([1.0, 2.0], [0.3, 0.2])
        with pytest.raises(ValueError, match="subadditive"):
            T([1.0, 2.0], [0.1, 1.0])

    def test_initial_slope(self):
        assert LINEAR.initial_slope() == 1.0
        assert bound.ModulusOfContinuity.power(0.5).initial_slope() is None
        g = bound.ModulusOfContinuity.table([0.5, 1.0], [0.25, 0.4])
        assert g.initial_slope() == pytest.approx(0.5)

    def test_zero_table_flag(self):
        assert zero_modulus().is_zero
        assert not LINEAR.is_zero

    @given(st.floats(0.01, 1.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
    @settings(max_examples=80, deadline=None)
    def test_power_subadditive_monotone(self, p, t, u):
        g = bound.ModulusOfContinuity.power(p)
        assert g(t + u) <= g(t) + g(u) + 1e-12
        assert g(max(t, u)) + 1e-15 >= g(min(t, u))


class TestPsi:
    def test_below_threshold_raises(self, any_group):
        with pytest.raises(ValueError, match="admissibility"):
            bound.psi(any_group, LINEAR, any_group.admissibility_threshold - 0.1)

    def test_zero_modulus_gives_zero(self, any_group):
        t = 3.0 * any_group.admissibility_threshold
        assert bound.psi(any_group, zero_modulus(), t) == 0.0

    def test_positive_and_scaling_band(self):
        for p in (0.5, 1.0):
            g = bound.ModulusOfContinuity.power(p)
            vals = [bound.psi(G_SU2, g, M) * M ** p for M in (10, 20, 40, 80)]
            assert all(v > 0 for v in vals)
            assert max(vals) / min(vals) < 3.0

    def test_step_monotone_in_kernel_degree(self, any_group):
        thr = any_group.admissibility_threshold
        vals = [bound.psi(any_group, LINEAR, k * thr + 1e-9) for k in (1, 2, 4, 8)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_independent_quadrature_torus1(self):
        # reference route: adaptive quadrature with panels split at the
        # sign changes of the transform, plus the same certified tail
        g = bound.ModulusOfContinuity.power(1.0)
        t = 7.0
        m0 = int(t / math.pi)
        tf = smoothing.bump_transform("paper_bump", 1)
        zeros = bound._f_sign_changes(tf, math.pi, 80.0)

        def integrand(x):
            return g(2 * math.pi * x / m0) * math.pi \
                * abs(tf.evaluate(np.array([math.pi * x]))[0])

        ref, _ = integrate.quad(integrand, 0.0, 80.0, limit=800,
                                points=list(zeros[:80]))
        ref *= 4.0  # both half-lines, times the outer factor 2
        detail = bound.psi_detailed(G_T1, g, t)
        assert detail["main"] == pytest.approx(ref, rel=1e-6)
        assert detail["value"] >= detail["main"]

    def test_detail_fields(self):
        d = bound.psi_detailed(G_SU2, LINEAR, 9.0)
        assert d["value"] == pytest.approx(d["main"] + d["tail"])
        assert d["tail"] >= 0 and d["quad_error"] >= 0
        assert d["m0"] == 6
        assert not d["tail_warning"]


class TestPhi:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_linear_modulus_is_sqrt_n(self, n):
        for t in (0.3, 1.0, 3.7, 10.0, 120.0):
            assert bound.phi(n, LINEAR, t) == pytest.approx(math.sqrt(n), abs=1e-10)

    @pytest.mark.parametrize("p", [0.3, 0.5, 0.8])
    def test_power_scale_law(self, p):
        g = bound.ModulusOfContinuity.power(p)
        ref = bound.phi(3, g, 1.0)
        for t in (0.5, 2.0, 17.0, 300.0):
            assert bound.phi(3, g, t) * t ** (p - 1.0) \
                == pytest.approx(ref, abs=1e-10 * ref)

    def test_table_modulus_finite(self):
        g = bound.ModulusOfContinuity.table([0.5, 1.0], [0.25, 0.4])
        v = bound.phi(3, g, 5.0)
        assert 0.0 < v < math.inf


class TestWgBound:
    def test_identical_measures_short_circuit(self, any_group):
        nu = random_measure(any_group, 5, 77)
        M = 4.0 * any_group.admissibility_threshold
        rep = bound.wg_bound(any_group, LINEAR, nu, nu, M)
        assert rep.fourier_sum == 0.0
        assert rep.total == rep.psi
        assert rep.variant == "exact"

    def test_report_invariants(self, any_group):
        nu1 = random_measure(any_group, 6, 78)
        nu2 = random_measure(any_group, 4, 79)
        M = 5.0 * any_group.admissibility_threshold
        rep = bound.wg_bound(any_group, LINEAR, nu1, nu2, M)
        assert rep.total >= rep.psi >= 0
        assert rep.fourier_sum >= 0
        assert rep.total == pytest.approx(
            rep.psi + rep.phi * math.sqrt(rep.fourier_sum))
        assert rep.tolerance == rep.tolerances["total"] > 0
        assert rep.irreps_used == len(groups.enumerate_irreps(any_group, M))
        d = rep.as_json_dict()
        assert d["total"] == rep.total and d["M0"] == rep.m0
        row = rep.csv_row(seed=3)
        assert len(row) == len(bound.CSV_HEADER)

    def test_admissibility_raises(self):
        nu = random_measure(G_SU2, 3, 1)
        with pytest.raises(ValueError, match="admissibility"):
            bound.wg_bound(G_SU2, LINEAR, nu, None, 1.2)

    def test_hs_data_fast_path_matches(self, any_group):
        nu1 = random_measure(any_group, 6, 80)
        nu2 = random_measure(any_group, 5, 81)
        top = 6.0 * any_group.admissibility_threshold
        irreps = groups.enumerate_irreps(any_group, top)
        hs = fourier.hs_profile(any_group, nu1, nu2, irreps)
        for M in (0.5 * top, top):
            a = bound.wg_bound(any_group, LINEAR, nu1, nu2, M)
            b = bound.wg_bound(any_group, LINEAR, nu1, nu2, M,
                               hs_data=(irreps, hs))
            assert a.total == pytest.approx(b.total, abs=1e-12)
            assert a.fourier_sum == pytest.approx(b.fourier_sum, abs=1e-14)

    def test_dominates_circle_oracle_trials(self):
        g = LINEAR
        for trial in range(50):
            rng = np.random.default_rng(1000 + trial)
            nu1 = random_measure(G_T1, int(rng.integers(2, 17)), 2000 + trial)
            nu2 = random_measure(G_T1, int(rng.integers(2, 17)), 3000 + trial)
            w1 = transport.circle_w1(nu1, nu2)
            for M in (4.0, 12.0, 45.0):
                rep = bound.wg_bound(G_T1, g, nu1, nu2, M)
                assert rep.total + rep.tolerance >= w1

    def test_constant_times_shape_recovery(self):
        # linear-in-M^{-p} + sqrt-sum shape with a finite constant
        p = 0.5
        g = bound.ModulusOfContinuity.power(p)
        nu1 = random_measure(G_SU2, 8, 90)
        nu2 = random_measure(G_SU2, 8, 91)
        Ms = [4.0, 8.0, 16.0, 32.0]
        reps = [bound.wg_bound(G_SU2, g, nu1, nu2, M) for M in Ms]
        c_g = max(max(r.psi * r.M ** p for r in reps),
                  max(r.phi * r.M ** (p - 1.0) for r in reps))
        assert math.isfinite(c_g)
        for r in reps:
            shape = c_g * (r.M ** -p + r.M ** (1 - p) * math.sqrt(r.fourier_sum))
            assert r.total <= shape + 1e-12


class TestOptimizeM:
    def test_singleton_grid(self):
        nu = random_measure(G_SU2, 4, 11)
        m, rep = bound.optimize_M(G_SU2, LINEAR, nu, None, M_grid=[7.0])
        assert m == 7.0 and rep.M == 7.0

    def test_argmin_definition(self):
        nu1 = random_measure(G_SU2, 6, 12)
        nu2 = random_measure(G_SU2, 3, 13)
        grid = bound.default_m_grid(G_SU2, cap=40.0)
        m, rep = bound.optimize_M(G_SU2, LINEAR, nu1, nu2, M_grid=grid)
        totals = [bound.wg_bound(G_SU2, LINEAR, nu1, nu2, float(M)).total
                  for M in grid]
        assert rep.total == pytest.approx(min(totals), abs=1e-12)
        assert m == pytest.approx(grid[int(np.argmin(totals))])

    def test_empty_grid_raises(self):
        nu = random_measure(G_SU2, 3, 14)
        with pytest.raises(ValueError):
            bound.optimize_M(G_SU2, LINEAR, nu, None, M_grid=[0.5, 1.0])

    def test_default_grid_properties(self, any_group):
        grid = bound.default_m_grid(any_group)
        assert grid[0] >= any_group.admissibility_threshold
        assert np.all(np.diff(grid) > 0)
        capped = bound.default_m_grid(any_group, cap=20.0)
        assert capped[-1] <= 20.0

    def test_best_cutoff_grows_with_sample_size(self):
        grid = bound.default_m_grid(G_SU2, cap=64.0)
        med = []
        for N in (64, 256, 1024):
            ms = []
            for s in range(6):
                atoms = groups.haar_sample(G_SU2, 5000 + 97 * s + N, N)
                nu = fourier.DiscreteMeasure.uniform(G_SU2, atoms)
                m, _ = bound.optimize_M(G_SU2, LINEAR, nu, None, M_grid=grid)
                ms.append(m)
            med.append(float(np.median(ms)))
        assert med[0] < med[-1]


class TestGapBounds:
    def test_relaxed_dominates_exact(self, any_group):
        nu = random_measure(any_group, 6, 21, weighted=False)
        M = 5.0 * any_group.admissibility_threshold
        gb = bound.haar_bound_from_gap(any_group, LINEAR, nu, M)
        assert gb.relaxed.total >= gb.exact.total - 1e-12
        assert gb.relaxed.variant == "gap_relaxed"
        assert 0.0 <= gb.q <= 1.0 + 1e-12
        d = gb.as_json_dict()
        assert d["q"] == gb.q and d["exact"]["total"] == gb.exact.total

    def test_q_override_without_measure(self):
        gb = bound.haar_bound_from_gap(G_SU2, LINEAR, None, 8.0, q_override=0.5)
        assert gb.exact is None
        assert gb.q == 0.5
        with pytest.raises(ValueError):
            bound.haar_bound_from_gap(G_SU2, LINEAR, None, 8.0)

    def test_optimized_gap_bound_monotone_in_q(self):
        totals = [bound.optimized_gap_bound(G_SU2, LINEAR, q)[1].total
                  for q in (0.9, 0.5, 0.1)]
        assert totals[0] > totals[1] > totals[2]

    def test_optimized_gap_bound_beats_fixed_m(self):
        q = 0.3
        m_star, rep = bound.optimized_gap_bound(G_SU2, LINEAR, q)
        assert rep.M == m_star
        for M in (2.0, 10.0, 50.0):
            fixed = bound.haar_bound_from_gap(G_SU2, LINEAR, None, M,
                                              q_override=q).relaxed
            assert rep.total <= fixed.total + 1e-9


class TestWalkRatePrediction:
    def test_plug_in_limit(self):
        v = bound.walk_rate_prediction(3, 1.0, 4, 2.0, 4.0 + 1e-12)
        assert v == pytest.approx(4.0 ** (1.0 / 3.0), rel=1e-4)

    def test_cube_root_decay_exponent(self):
        n, b, m, A = 3, 1.0, 2, 2.0
        ks = np.array([1e4, 8e4])
        vals = [bound.walk_rate_prediction(n, b, m, A, k) for k in ks]
        # log v ~ -(n/2) (b k/(2 m n))^{1/3}: doubling k^(1/3) doubles the exponent
        lr = [math.log(v) - math.log(k) / 3.0 for v, k in zip(vals, ks)]
        assert lr[1] / lr[0] == pytest.approx(2.0, rel=2e-3)

    def test_eventually_decreasing(self):
        ks = np.linspace(30.0, 3000.0, 200)
        vals = [bound.walk_rate_prediction(3, 0.5, 3, 1.5, k) for k in ks]
        assert all(a > b for a, b in zip(vals[50:], vals[51:]))

    def test_domain_violations(self):
        f = bound.walk_rate_prediction
        for args in ((3, -1.0, 2, 2.0, 5.0), (3, 1.0, 0, 2.0, 5.0),
                     (3, 1.0, 2, 3.0, 5.0), (3, 1.0, 2, 2.0, 2.0)):
            with pytest.raises(ValueError):
                f(*args)
