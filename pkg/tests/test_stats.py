import numpy as np
import pytest
from scipy.integrate import quad

from fermiwait.model import (
    CHANNEL_ORDER,
    channels,
    derive_single_particle,
    steady_state,
    vacuum_state,
)
from fermiwait.stats import (
    ChannelStats,
    QuadratureError,
    channel_probability,
    channel_stats,
    conditional_moments,
    integrate_semiinfinite,
    jump_frequencies,
    natd,
    natd_moments,
    normalization_audit,
)
from fermiwait.wtd import wtd_density, wtd_density_matrix

from conftest import generic_spec


def analytic_natd(t, gamma=0.1, hop=1.0):
    """Closed-form two-site activity density at the reference working point."""
    omega = np.sqrt(4 * hop**2 - gamma**2)
    return (
        gamma
        / (2 * (gamma**2 - 4 * hop**2))
        * np.exp(-gamma * t)
        * (gamma**2 - 8 * hop**2 + 4 * hop**2 * np.cos(t * omega))
    )


class TestQuadrature:
    def test_normalized_exponential(self):
        g = 0.37
        res = integrate_semiinfinite(lambda t: g * np.exp(-g * t), 1e-8, decay_rate=g)
        assert res.value == pytest.approx(1.0, abs=1e-8)
        assert res.truncation_tail_bound <= 1e-9
        assert res.evaluations > 0

    def test_first_moment_of_exponential(self):
        g = 0.25
        res = integrate_semiinfinite(
            lambda t: t * g * np.exp(-g * t), 1e-8, decay_rate=g, poly_degree=1
        )
        assert res.value == pytest.approx(1.0 / g, rel=1e-7)

    def test_no_decay_scale_is_an_error(self):
        with pytest.raises(QuadratureError, match="decay scale"):
            integrate_semiinfinite(lambda t: np.exp(-t), 1e-8, decay_rate=0.0)

    def test_fixed_cutoff_reports_lost_mass(self):
        g = 0.5
        res = integrate_semiinfinite(
            lambda t: g * np.exp(-g * t), 1e-8, decay_rate=g, t_cut=10.0
        )
        assert res.t_cut == 10.0
        assert res.value < 1.0 - 1e-3
        assert res.truncation_tail_bound > 1e-3

    def test_oscillatory_integrand(self):
        res = integrate_semiinfinite(
            lambda t: np.exp(-0.1 * t) * np.cos(2.0 * t) ** 2, 1e-8, decay_rate=0.1
        )
        # integral of e^{-gt} cos^2(wt) = 1/(2g) + g/(2(g^2+4w^2))
        expected = 0.5 / 0.1 + 0.1 / (2 * (0.01 + 16.0))
        assert res.value == pytest.approx(expected, abs=1e-7)

    def test_subdivision_cap_is_an_error(self):
        with pytest.raises(QuadratureError, match="refinement"):
            integrate_semiinfinite(
                lambda t: np.exp(-0.01 * t) * np.cos(40.0 * t) ** 2,
                1e-10,
                decay_rate=0.01,
                limit=2,
            )


class TestChannelProbability:
    def test_blocked_channel_has_zero_probability(self, sv_spec, sv_sp, sv_channels):
        st = steady_state(sv_spec)
        for ql in ("1+", "L-"):
            p = channel_probability(sv_channels["1-"], sv_channels[ql], st, sv_sp)
            assert p == 0.0

    def test_against_integrated_brute_force(self, sv_spec, sv_sp, sv_channels, sv_oracle):
        st = steady_state(sv_spec)
        rho = sv_oracle.steady_state()
        p = channel_probability(sv_channels["L-"], sv_channels["1+"], st, sv_sp)
        ref = quad(
            lambda t: sv_oracle.wtd(t, "L-", "1+", rho), 0.0, 400.0, limit=400
        )[0]
        assert p == pytest.approx(ref, abs=1e-6)

    def test_probabilities_bounded(self, sv_spec, sv_sp, sv_channels):
        st = steady_state(sv_spec)
        for ql in ("1+", "L-"):
            for kl in CHANNEL_ORDER:
                p = channel_probability(sv_channels[kl], sv_channels[ql], st, sv_sp)
                assert 0.0 <= p <= 1.0


class TestConditionalMoments:
    def test_bayes_normalization(self, sv_spec, sv_sp, sv_channels):
        st = steady_state(sv_spec)
        k, q = sv_channels["L-"], sv_channels["1+"]
        p = channel_probability(k, q, st, sv_sp)
        res = integrate_semiinfinite(
            lambda t: wtd_density(t, k, q, st, sv_sp) / p,
            1e-8,
            decay_rate=sv_sp.gamma_total,
        )
        assert res.value == pytest.approx(1.0, abs=1e-6)

    def test_mean_against_brute_force(self, sv_spec, sv_sp, sv_channels, sv_oracle):
        st = steady_state(sv_spec)
        rho = sv_oracle.steady_state()
        mean, var = conditional_moments(sv_channels["L-"], sv_channels["1+"], st, sv_sp)
        p_ref = quad(lambda t: sv_oracle.wtd(t, "L-", "1+", rho), 0, 400, limit=400)[0]
        m_ref = quad(
            lambda t: t * sv_oracle.wtd(t, "L-", "1+", rho), 0, 400, limit=400
        )[0]
        assert mean == pytest.approx(m_ref / p_ref, abs=1e-6)
        assert var >= 0.0

    @pytest.mark.parametrize("L", [2, 4, 7])
    def test_variance_nonnegative_across_channels(self, L):
        spec = generic_spec(L)
        sp = derive_single_particle(spec)
        ch = channels(spec)
        st = steady_state(spec)
        for ql in ("1+", "L-"):
            for kl in ("1+", "L-"):
                _, var = conditional_moments(ch[kl], ch[ql], st, sp)
                assert var >= 0.0

    def test_impossible_sequence_rejected(self, sv_spec, sv_sp, sv_channels):
        st = steady_state(sv_spec)
        with pytest.raises(ValueError, match="undefined"):
            conditional_moments(sv_channels["1-"], sv_channels["1+"], st, sv_sp)


class TestJumpFrequencies:
    def test_reference_point_splits_evenly(self, sv_spec, sv_sp):
        st = steady_state(sv_spec)
        p_q = jump_frequencies(st, sv_sp)
        assert p_q.sum() == pytest.approx(1.0, abs=1e-12)
        # only injection on the left and extraction on the right click
        assert p_q[CHANNEL_ORDER.index("1-")] == 0.0
        assert p_q[CHANNEL_ORDER.index("L+")] == 0.0
        assert p_q[CHANNEL_ORDER.index("1+")] == pytest.approx(0.5, abs=1e-9)
        assert p_q[CHANNEL_ORDER.index("L-")] == pytest.approx(0.5, abs=1e-9)


class TestNatd:
    def test_matches_analytic_two_site_form(self, sv_spec, sv_sp):
        st = steady_state(sv_spec)
        for t in np.linspace(0.0, 50.0, 26):
            assert natd(float(t), st, sv_sp) == pytest.approx(
                analytic_natd(t), abs=1e-8
            )

    def test_mean_matches_analytic_value(self, sv_spec, sv_sp):
        st = steady_state(sv_spec)
        mean, var = natd_moments(st, sv_sp)
        assert mean == pytest.approx(1.0 / 0.1 + 0.1 / 4.0, abs=1e-4)
        assert var >= 0.0

    def test_is_mixture_of_channel_densities(self, sv_spec, sv_sp):
        st = steady_state(sv_spec)
        p_q = jump_frequencies(st, sv_sp)
        for t in (0.0, 0.7, 3.0, 11.0):
            direct = natd(t, st, sv_sp)
            m = wtd_density_matrix(t, st, sv_sp)
            mixture = float(m.sum(axis=0) @ p_q)
            assert abs(direct - mixture) < 1e-12

    def test_total_expectation_consistency(self):
        spec = generic_spec(2)
        sp = derive_single_particle(spec)
        st = steady_state(spec)
        table = channel_stats(st, sp)
        mean, _ = natd_moments(st, sp)
        mix = 0.0
        for b in range(4):
            for a in range(4):
                if np.isnan(table.p_kq[a, b]) or table.p_kq[a, b] <= 1e-12:
                    continue
                mix += table.p_q[b] * table.p_kq[a, b] * table.mean[a, b]
        assert mean == pytest.approx(mix, abs=1e-6)

    def test_requires_steady_state(self, sv_sp):
        with pytest.raises(ValueError, match="steady"):
            natd(1.0, vacuum_state(2), sv_sp)
        with pytest.raises(ValueError, match="steady"):
            natd_moments(vacuum_state(2), sv_sp)


class TestNormalizationAudit:
    def test_steady_and_vacuum_audits(self, sv_spec, sv_sp, sv_channels):
        st = steady_state(sv_spec)
        for ql in ("1+", "L-"):
            assert normalization_audit(sv_channels[ql], st, sv_sp) == pytest.approx(
                1.0, abs=1e-6
            )
        vac = vacuum_state(2)
        assert normalization_audit(sv_channels["1+"], vac, sv_sp) == pytest.approx(
            1.0, abs=1e-6
        )

    def test_truncation_is_detected(self, sv_spec, sv_sp, sv_channels):
        st = steady_state(sv_spec)
        full = normalization_audit(sv_channels["1+"], st, sv_sp)
        truncated = normalization_audit(sv_channels["1+"], st, sv_sp, t_cut=104.0)
        assert truncated < full
        assert truncated < 1.0 - 1e-6

    def test_silent_channel_rejected(self, sv_spec, sv_sp, sv_channels):
        st = steady_state(sv_spec)
        with pytest.raises(ValueError, match="never clicks"):
            normalization_audit(sv_channels["1-"], st, sv_sp)
        with pytest.raises(ValueError, match="vacuum"):
            normalization_audit(sv_channels["L-"], vacuum_state(2), sv_sp)


class TestChannelStatsTable:
    def test_reference_point_table(self, sv_spec, sv_sp):
        st = steady_state(sv_spec)
        table = channel_stats(st, sv_sp)
        assert isinstance(table, ChannelStats)
        i_1p = CHANNEL_ORDER.index("1+")
        i_lm = CHANNEL_ORDER.index("L-")
        for col in (i_1p, i_lm):
            assert np.nansum(table.p_kq[:, col]) == pytest.approx(1.0, abs=1e-6)
        for col in (CHANNEL_ORDER.index("1-"), CHANNEL_ORDER.index("L+")):
            assert np.all(np.isnan(table.p_kq[:, col]))
        assert np.all(np.isnan(table.variance) | (table.variance >= 0.0))

    def test_vacuum_table_has_injection_columns_only(self, sv_spec, sv_sp):
        vac = vacuum_state(2)
        table = channel_stats(vac, sv_sp)
        assert np.nansum(table.p_kq[:, CHANNEL_ORDER.index("1+")]) == pytest.approx(
            1.0, abs=1e-6
        )
        assert np.all(np.isnan(table.p_kq[:, CHANNEL_ORDER.index("L-")]))
