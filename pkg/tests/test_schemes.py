import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from illposed_iter.schemes import (
    FIRST_KIND_VARIANTS,
    AdmissibilityError,
    RateUnavailableError,
    SchemeSpec,
    Variant,
    check_admissibility,
    fit_power_law,
    format_scheme,
    gamma_asymptotic,
    gamma_n_closed_form,
    gamma_n_numeric,
    gamma_n_on_spectrum,
    parse_scheme,
    phi,
    psi,
    required_interval,
)
from illposed_iter.spectral import OperatorKind, Power, SpectralOperator

EP, EM, IE, IC, IS = FIRST_KIND_VARIANTS


class TestFilters:
    def test_phi_examples(self):
        assert phi(SchemeSpec(EP, 1.0, 1), 0.0) == 1.0
        assert phi(SchemeSpec(EP, 1.0, 2), 0.5) == 0.25
        assert phi(SchemeSpec(IC, 1.0, 1), 1.0) == 0.0

    def test_psi_examples(self):
        # limit of (1 - (1 - a lam)^k) / lam at 0 is a k
        assert psi(SchemeSpec(EP, 0.5, 3), 0.0) == 1.5
        lam = np.array([-3.0, 0.0, 0.7, 12.0])
        np.testing.assert_array_equal(psi(SchemeSpec(EM, 2.0, 1), lam), 2.0)

    def test_direct_filters(self):
        d = SchemeSpec(Variant.SECOND_KIND_DIRECT)
        assert d.operator_kind is OperatorKind.SECOND_KIND
        assert phi(d, 0.3) == 0.3 and psi(d, 0.3) == 1.0

    @pytest.mark.parametrize("variant", FIRST_KIND_VARIANTS)
    def test_condition_a_at_point(self, variant):
        s = SchemeSpec(variant, 1.0, 1)
        assert 1.0 - 0.3 * psi(s, 0.3) == pytest.approx(phi(s, 0.3), abs=4e-16)

    def test_scalar_in_scalar_out(self):
        assert isinstance(phi(SchemeSpec(IS, 1.0, 2), 0.5), float)
        assert phi(SchemeSpec(IS, 1.0, 2), np.array([0.5])).shape == (1,)

    @pytest.mark.parametrize("alpha,k", [(0.0, 1), (-1.0, 1), (1.0, 0), (math.inf, 1)])
    def test_rejects_bad_parameters(self, alpha, k):
        with pytest.raises(ValueError):
            SchemeSpec(EP, alpha, k)


@settings(max_examples=200)
@given(st.sampled_from(FIRST_KIND_VARIANTS), st.floats(0.1, 2.0), st.integers(1, 3),
       st.floats(0.0, 1.0))
def test_condition_a_identity(variant, alpha, k, t):
    scheme = SchemeSpec(variant, alpha, k)
    lo, hi = required_interval(scheme)
    hi = min(hi, 10.0)
    lam = lo + t * (hi - lo) if math.isfinite(lo) else -10.0 + t * (hi + 10.0)
    resid = phi(scheme, lam) + lam * psi(scheme, lam) - 1.0
    assert abs(resid) <= 4 * np.finfo(float).eps * max(1.0, abs(lam * psi(scheme, lam)))


class TestAdmissibility:
    def test_power_ok(self):
        rep = check_admissibility(SchemeSpec(EP, 1.0, 1), SpectralOperator([0.0, 0.5, 1.0]))
        assert rep.ok and rep.condition_a_ok and rep.condition_b_ok and rep.condition_c_ok

    def test_power_condition_b(self):
        rep = check_admissibility(SchemeSpec(EP, 1.0, 1), SpectralOperator([0.5, 2.5]))
        assert not rep.condition_b_ok
        assert 2.5 in rep.offending_lambdas
        with pytest.raises(AdmissibilityError, match="2.5"):
            rep.raise_if_failed()

    def test_power_condition_c(self):
        rep = check_admissibility(SchemeSpec(EP, 1.0, 1), SpectralOperator([0.5, 2.0]))
        assert rep.condition_b_ok and not rep.condition_c_ok
        assert rep.offending_lambdas == (2.0,)

    def test_monomial_even_k_symmetric(self):
        assert check_admissibility(SchemeSpec(EM, 1.0, 2), SpectralOperator([-1.0, 1.0])).ok

    def test_odd_k_negative_spectrum(self):
        rep = check_admissibility(SchemeSpec(IE, 1.0, 1), SpectralOperator([-0.5, 0.5]))
        assert not rep.ok and -0.5 in rep.offending_lambdas

    def test_implicit_even_k_whole_line(self):
        A = SpectralOperator([-50.0, -1.0, 0.0, 1.0, 50.0])
        for v in (IE, IC, IS):
            assert check_admissibility(SchemeSpec(v, 1.0, 2), A).ok

    def test_required_intervals(self):
        assert required_interval(SchemeSpec(EP, 0.5, 3)) == (0.0, 4.0)
        lo, hi = required_interval(SchemeSpec(EM, 2.0, 2))
        assert (lo, hi) == (-1.0, 1.0)
        assert required_interval(SchemeSpec(IC, 1.0, 2)) == (-math.inf, math.inf)


class TestGamma:
    theta = Power(1.0)

    def test_n0_is_max_theta(self):
        assert gamma_n_numeric(SchemeSpec(EP), self.theta, (0.0, 1.0), 0) == 1.0

    def test_n1_spot_value(self):
        s = SchemeSpec(EP, 1.0, 1)
        assert gamma_n_numeric(s, self.theta, (0, 1), 1) == pytest.approx(0.25, rel=1e-12)
        assert gamma_n_closed_form(s, 1.0, 1.0, 1) == 0.25

    def test_n9_closed_form(self):
        s = SchemeSpec(EP, 1.0, 1)
        expected = 0.1 * 0.9**9
        assert gamma_n_closed_form(s, 1.0, 1.0, 9) == pytest.approx(expected, rel=1e-14)
        assert gamma_n_numeric(s, self.theta, (0, 1), 9) == pytest.approx(expected, rel=1e-10)

    def test_frozen_values(self):
        # (1/51) (50/51)^50 and the k=2 monomial peak, from exact rational arithmetic
        s = SchemeSpec(EP, 1.0, 1)
        assert gamma_n_closed_form(s, 1.0, 1.0, 50) == pytest.approx(0.007284860433862, rel=1e-12)
        m = SchemeSpec(EM, 1.0, 2)
        expected = (1 / 21) ** 0.5 * (20 / 21) ** 10
        assert gamma_n_closed_form(m, 1.0, 1.0, 10) == pytest.approx(expected, rel=1e-14)
        assert gamma_n_numeric(m, self.theta, (0, 1), 10) == pytest.approx(expected, rel=1e-10)

    def test_closed_form_endpoint_branch(self):
        # peak lies beyond M: the maximum sits at the endpoint
        s = SchemeSpec(EP, 1.0, 1)
        assert gamma_n_closed_form(s, 1.0, 0.1, 1) == pytest.approx(0.1 * 0.9)
        assert gamma_n_numeric(s, self.theta, (0, 0.1), 1) == pytest.approx(0.09, rel=1e-12)

    @pytest.mark.parametrize("variant", [IE, IC, IS, Variant.SECOND_KIND_DIRECT])
    def test_closed_form_unavailable(self, variant):
        with pytest.raises(RateUnavailableError):
            gamma_n_closed_form(SchemeSpec(variant), 1.0, 1.0, 3)

    def test_on_spectrum_below_interval_max(self):
        s = SchemeSpec(IC, 1.0, 1)
        A = SpectralOperator(np.linspace(0.01, 1.0, 30))
        for n in (1, 5, 40):
            assert gamma_n_on_spectrum(s, self.theta, A, n) <= \
                gamma_n_numeric(s, self.theta, (0, 1), n) * (1 + 1e-12)

    def test_asymptotic_constants(self):
        C, p = gamma_asymptotic(SchemeSpec(EP, 1.0, 1), 1.0)
        assert (C, p) == (pytest.approx(1 / math.e), 1.0)
        C, p = gamma_asymptotic(SchemeSpec(IC, 1.0, 2), 2.0)
        assert C == pytest.approx(1 / (2 * math.e)) and p == 1.0
        assert gamma_asymptotic(SchemeSpec(EP, 1.0, 2), 1.0)[1] > \
            gamma_asymptotic(SchemeSpec(EM, 1.0, 2), 1.0)[1]
        with pytest.raises(RateUnavailableError):
            gamma_asymptotic(SchemeSpec(Variant.SECOND_KIND_DIRECT), 1.0)

    def test_fit_power_law_exact(self):
        ns = np.geomspace(10, 1000, 7)
        C, p = fit_power_law(ns, 3.0 * ns**-0.75)
        assert C == pytest.approx(3.0, rel=1e-12) and p == pytest.approx(0.75, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(FIRST_KIND_VARIANTS), st.integers(1, 2), st.floats(0.5, 2.0),
       st.integers(0, 200))
def test_gamma_monotone_in_n(variant, k, s, n):
    scheme = SchemeSpec(variant, 1.0, k)
    theta = Power(s)
    g0 = gamma_n_numeric(scheme, theta, (0.0, 1.0), n)
    g1 = gamma_n_numeric(scheme, theta, (0.0, 1.0), n + 1)
    assert g1 <= g0 * (1 + 1e-9)


@pytest.mark.parametrize("token", ["explicit-power alpha=0.5 k=2", "implicit-squared alpha=1.0 k=1",
                                   "second-kind"])
def test_scheme_token_roundtrip(token):
    assert format_scheme(parse_scheme(token)) == token


@pytest.mark.parametrize("token", ["", "landweber", "explicit-power beta=1", "second-kind k=2"])
def test_bad_scheme_tokens(token):
    with pytest.raises(ValueError):
        parse_scheme(token)
