import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from hawkesclt import (InvalidKernelError, Kernel, OutOfRangeError, StabilityError, kernel_l1,
                       mean_compensator, mean_intensity, solve_psi, stability_check)


def erlang_psi(alpha, beta, t):
    # phi^{*n} is alpha^n t^{2n-1} e^{-beta t} / (2n-1)!, which sums to a sinh
    r = math.sqrt(alpha)
    return 0.5 * r * (np.exp(-(beta - r) * t) - np.exp(-(beta + r) * t))


def series_psi(phi, h, n_terms):
    """Independent oracle: truncated sum of trapezoid convolution powers, O(N^2)."""
    n = phi.size
    term = phi.copy()
    total = phi.copy()
    for _ in range(n_terms - 1):
        nxt = np.zeros(n)
        for k in range(1, n):
            prod = phi[: k + 1] * term[k::-1]
            nxt[k] = h * (prod.sum() - 0.5 * (prod[0] + prod[-1]))
        term = nxt
        total += term
    return total


class TestConstruction:
    def test_closed_form_norms(self):
        assert kernel_l1(Kernel.exponential(1.0, 2.0)) == pytest.approx(0.5)
        assert kernel_l1(Kernel.erlang(1.0, 2.0)) == pytest.approx(0.25)
        assert kernel_l1(Kernel.zero()) == 0.0

    def test_tabulated_norm_is_exact_trapezoid(self):
        k = Kernel.tabulated(0.5, [1.0, 0.5, 0.0])
        assert k.l1() == pytest.approx(0.5 * (1.0 + 0.5) / 2 + 0.5 * (0.5 + 0.0) / 2)

    @pytest.mark.parametrize("args", [(-1.0, 2.0), (1.0, 0.0), (1.0, -1.0)])
    def test_invalid_parameters(self, args):
        with pytest.raises(InvalidKernelError):
            Kernel.exponential(*args)

    def test_tabulated_rejects_negative_values(self):
        with pytest.raises(InvalidKernelError):
            Kernel.tabulated(0.1, [0.2, -0.1, 0.0])

    def test_from_dict_strict(self):
        with pytest.raises(InvalidKernelError):
            Kernel.from_dict({"family": "exponential", "alpha": 1.0, "beta": 2.0, "gamma": 1})
        with pytest.raises(InvalidKernelError):
            Kernel.from_dict({"family": "nope"})

    @pytest.mark.parametrize("k", [Kernel.zero(), Kernel.exponential(0.3, 1.1),
                                   Kernel.erlang(0.7, 2.5), Kernel.tabulated(0.2, [0, 1, 0.5, 0])])
    def test_dict_round_trip(self, k):
        k2 = Kernel.from_dict(k.to_dict())
        assert k2.to_dict() == k.to_dict()


class TestValuesAndIntegrals:
    @pytest.mark.parametrize("k", [Kernel.exponential(0.8, 1.3), Kernel.erlang(1.0, 2.0),
                                   Kernel.tabulated(0.25, [0.0, 0.4, 0.3, 0.1, 0.0])])
    def test_integral_matches_quadrature(self, k):
        for u in (0.1, 0.6, 2.0, 7.5):
            ref, _ = integrate.quad(lambda s: float(k.value(s)), 0.0, u, limit=200,
                                    points=[x for x in (0.25, 0.5, 0.75) if x < u] or None)
            assert float(k.integral(u)) == pytest.approx(ref, abs=1e-9)

    def test_first_moment(self):
        ref, _ = integrate.quad(lambda s: s * float(Kernel.erlang(1.0, 2.0).value(s)), 0, np.inf)
        assert Kernel.erlang(1.0, 2.0).first_moment() == pytest.approx(ref)

    @given(u=st.floats(0.0, 20.0), v=st.floats(0.0, 20.0))
    @settings(max_examples=200, deadline=None)
    def test_tail_majorant_dominates_future_values(self, u, v):
        for k in (Kernel.exponential(1.0, 2.0), Kernel.erlang(1.0, 2.0),
                  Kernel.tabulated(0.5, [0.0, 1.0, 0.2, 0.6, 0.0])):
            lo, hi = min(u, v), max(u, v)
            assert float(k.tail_majorant(lo)) >= float(k.value(hi)) - 1e-15
            assert float(k.tail_majorant(lo)) >= float(k.tail_majorant(hi)) - 1e-15


class TestStability:
    def test_report_fields(self):
        r = stability_check(Kernel.exponential(1.0, 2.0))
        assert r.ok and r.l1 == pytest.approx(0.5)

    @pytest.mark.parametrize("k", [Kernel.exponential(2.0, 2.0), Kernel.erlang(4.0, 2.0)])
    def test_supercritical_rejected(self, k):
        assert not stability_check(k)
        with pytest.raises(StabilityError):
            solve_psi(k)


class TestSolvePsi:
    def test_exponential_closed_form(self):
        # psi = alpha exp(-(beta - alpha) t)
        psi = solve_psi(Kernel.exponential(1.0, 2.0), horizon=20.0)
        t = psi.times
        assert np.max(np.abs(psi.values - np.exp(-t))) < 1e-4
        assert psi.l1_estimate == pytest.approx(1.0, abs=1e-3)

    def test_erlang_closed_form(self):
        psi = solve_psi(Kernel.erlang(1.0, 2.0), horizon=30.0)
        ref = erlang_psi(1.0, 2.0, psi.times)
        assert np.max(np.abs(psi.values - ref)) < 1e-5
        # ||psi||_1 = l1 / (1 - l1) = 1/3
        assert psi.l1_estimate + psi.tail_bound == pytest.approx(1.0 / 3.0, abs=1e-4)

    def test_matches_series_oracle_on_tabulated_kernel(self):
        k = Kernel.tabulated(0.05, np.linspace(0.6, 0.0, 21))
        psi = solve_psi(k, step=0.05, horizon=6.0, tol=1e-13)
        ref = series_psi(k.value(psi.times), 0.05, 60)
        assert np.max(np.abs(psi.values - ref)) < 1e-10

    def test_zero_kernel(self):
        psi = solve_psi(Kernel.zero())
        assert np.all(psi.values == 0.0)
        assert psi.l1_estimate == 0.0

    @pytest.mark.parametrize("k", [Kernel.exponential(1.6, 2.0), Kernel.erlang(2.0, 2.0)])
    def test_tail_bound_is_an_upper_bound(self, k):
        horizon = 10.0
        psi = solve_psi(k, horizon=horizon)
        if k.family == "exponential":
            true_tail = (k.alpha / (k.beta - k.alpha)) * math.exp(-(k.beta - k.alpha) * horizon)
        else:
            true_tail, _ = integrate.quad(lambda s: erlang_psi(k.alpha, k.beta, s), horizon, np.inf)
        assert psi.tail_bound >= true_tail

    def test_mass_identity_for_near_critical_kernel(self):
        k = Kernel.exponential(1.6, 2.0)
        psi = solve_psi(k, horizon=60.0)
        assert psi.l1_estimate + psi.tail_bound == pytest.approx(4.0, abs=5e-3)

    def test_fast(self):
        t = time.perf_counter()
        solve_psi(Kernel.exponential(1.0, 2.0))
        assert time.perf_counter() - t < 1.0

    def test_csv(self, tmp_path):
        psi = solve_psi(Kernel.exponential(1.0, 2.0), horizon=1.0)
        psi.to_csv(tmp_path / "psi.csv")
        rows = (tmp_path / "psi.csv").read_text().splitlines()
        assert rows[0] == "t,psi"
        assert len(rows) == psi.values.size + 1


class TestMeans:
    def test_mean_intensity_closed_form(self):
        k = Kernel.exponential(1.0, 2.0)
        psi = solve_psi(k, horizon=20.0)
        for t in (0.0, 1.0, 5.0, 20.0):
            ref = 1.0 * (1.0 + (1.0 - math.exp(-t)))
            assert mean_intensity(k, 1.0, psi, t) == pytest.approx(ref, abs=1e-4)

    def test_mean_compensator_closed_form(self):
        k = Kernel.exponential(1.0, 2.0)
        psi = solve_psi(k, horizon=100.0)
        ref = 100.0 + (100.0 - 1.0 + math.exp(-100.0))
        assert mean_compensator(k, 1.0, psi, 100.0) == pytest.approx(ref, rel=1e-5)

    def test_out_of_range(self):
        k = Kernel.exponential(1.0, 2.0)
        psi = solve_psi(k, horizon=5.0)
        with pytest.raises(OutOfRangeError):
            mean_intensity(k, 1.0, psi, 6.0)
