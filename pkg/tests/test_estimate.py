"""Estimator identities against brute-force dummy-variable oracles,
hand-computed IV ratios, published elasticity arithmetic, and the typed
failure modes."""

import numpy as np
import pandas as pd
import pytest

from taxdid.estimate import (
    EstimationError,
    TotResult,
    elasticity,
    event_study,
    tot_iv,
)

from oracles import dummy_event_study, dummy_tot_iv, random_toy_panel


def panel_from_grid(values: dict[int, dict[int, float]]) -> pd.DataFrame:
    """{id: {year: y}} -> long panel frame."""
    rows = [
        {"id": pid, "year": year, "y": y}
        for pid, by_year in values.items()
        for year, y in by_year.items()
    ]
    return pd.DataFrame(rows)


def treated_series(mapping: dict[int, bool]) -> pd.Series:
    return pd.Series(mapping, name="treated").rename_axis("id")


@pytest.fixture
def six_person_panel(rng):
    years = [1984, 1985, 1986, 1987]
    rows = []
    for pid in range(6):
        for year in years:
            rows.append({"id": pid, "year": year, "y": rng.normal() + 0.1 * pid})
    return pd.DataFrame(rows), treated_series({i: i < 3 for i in range(6)})


class TestEventStudy:
    def test_constant_outcome_gives_zero_effects(self):
        panel = panel_from_grid(
            {i: {y: 2.5 for y in (1985, 1986, 1987)} for i in range(4)}
        )
        res = event_study(panel, "y", treated_series({0: True, 1: True, 2: False, 3: False}))
        assert np.allclose(res.beta, 0.0, atol=1e-12)

    def test_matches_dummy_ols_on_toy_panel(self, six_person_panel):
        panel, treated = six_person_panel
        res = event_study(panel, "y", treated)
        years, beta, se = dummy_event_study(panel, "y", treated)
        assert np.array_equal(res.years, years)
        assert np.allclose(res.beta, beta, atol=1e-8)
        assert np.allclose(res.se, se, atol=1e-8)

    def test_matches_dummy_ols_on_random_panels(self, rng):
        for _ in range(25):
            sub, treated, ref_year = random_toy_panel(rng)
            res = event_study(sub, "y", treated, ref_year=ref_year)
            years, beta, se = dummy_event_study(sub, "y", treated, ref_year)
            assert np.allclose(res.beta, beta, atol=1e-8)
            assert np.allclose(res.se, se, atol=1e-8)

    def test_constant_shift_leaves_coefficients_unchanged(self, six_person_panel):
        panel, treated = six_person_panel
        shifted = panel.assign(y=panel["y"] + 17.3)
        a = event_study(panel, "y", treated)
        b = event_study(shifted, "y", treated)
        assert np.allclose(a.beta, b.beta, atol=1e-10)
        assert np.allclose(a.se, b.se, atol=1e-10)

    def test_cluster_relabeling_invariance(self, six_person_panel):
        panel, treated = six_person_panel
        relabeled = panel.assign(id=panel["id"].map({0: 60, 1: 51, 2: 42, 3: 33, 4: 24, 5: 15}))
        retreated = treated_series({60: True, 51: True, 42: True, 33: False, 24: False, 15: False})
        a = event_study(panel, "y", treated)
        b = event_study(relabeled, "y", retreated)
        assert np.allclose(np.sort(a.beta), np.sort(b.beta), atol=1e-10)
        assert np.allclose(a.beta, b.beta, atol=1e-10)

    def test_missing_outcomes_drop_rowwise(self, six_person_panel):
        panel, treated = six_person_panel
        panel = panel.copy()
        panel.loc[(panel.id == 0) & (panel.year == 1985), "y"] = np.nan
        res = event_study(panel, "y", treated)
        assert res.n_obs == len(panel) - 1

    def test_start_year_excludes_early_years(self, six_person_panel):
        panel, treated = six_person_panel
        res = event_study(panel, "y", treated, start_year=1985)
        assert list(res.years) == [1985, 1987]

    def test_singletons_dropped_and_counted(self, six_person_panel):
        panel, treated = six_person_panel
        extra = pd.DataFrame([{"id": 99, "year": 1986, "y": 1.0}])
        res = event_study(pd.concat([panel, extra], ignore_index=True), "y",
                          treated_series({**{i: i < 3 for i in range(6)}, 99: False}))
        assert res.dropped_singletons == 1
        assert res.n_clusters == 6

    def test_all_treated_sample_is_collinear(self, six_person_panel):
        panel, treated = six_person_panel
        all_treated = treated_series({i: True for i in range(6)})
        with pytest.raises(EstimationError, match="collinear"):
            event_study(panel, "y", all_treated)

    def test_fewer_than_two_clusters_rejected(self):
        panel = panel_from_grid({0: {1985: 1.0, 1986: 2.0}})
        with pytest.raises(EstimationError, match="clusters"):
            event_study(panel, "y", treated_series({0: True}))

    def test_ci_is_beta_plus_minus_196_se(self, six_person_panel):
        panel, treated = six_person_panel
        res = event_study(panel, "y", treated)
        assert np.allclose(res.ci_hi - res.beta, 1.96 * res.se)
        assert np.allclose(res.beta - res.ci_lo, 1.96 * res.se)


def bracket_series(frame: pd.DataFrame, value=1.0) -> pd.Series:
    idx = pd.MultiIndex.from_frame(frame[["id", "year"]])
    return pd.Series(value, index=idx)


class TestTotIv:
    def iv_panel(self, rng, n_ids=30, compliance=0.7):
        years = range(1984, 1994)
        treated = treated_series({i: i < n_ids // 2 for i in range(n_ids)})
        rows = []
        m_rows = {}
        for pid in range(n_ids):
            for year in years:
                post = year >= 1987
                m = float(post and (rng.random() < (compliance if treated[pid] else 0.15)))
                m_rows[(pid, year)] = m
                y = 0.5 * m * post + 0.05 * (year - 1986) + rng.normal(0, 0.3) + 0.2 * pid
                rows.append({"id": pid, "year": year, "y": y})
        panel = pd.DataFrame(rows)
        m = pd.Series(m_rows)
        m.index.names = ["id", "year"]
        return panel, treated, m

    def test_just_identified_identity(self, rng):
        panel, treated, m = self.iv_panel(rng)
        res = tot_iv(panel, "y", treated, m)
        assert res.beta == pytest.approx(res.reduced_form / res.first_stage, abs=1e-10)

    def test_matches_brute_force_dummy_iv(self, rng):
        panel, treated, m = self.iv_panel(rng, n_ids=16)
        res = tot_iv(panel, "y", treated, m)
        m_col = m.reindex(pd.MultiIndex.from_frame(panel[["id", "year"]])).to_numpy()
        beta, se = dummy_tot_iv(panel, "y", treated, m_col)
        assert res.beta == pytest.approx(beta, abs=1e-8)
        assert res.se == pytest.approx(se, abs=1e-8)

    def test_hand_computed_ratio_under_full_compliance(self):
        # Perfect compliance: Post*M == Post*Treated, so the IV equals the
        # reduced form and both equal the post-reform DID gap.
        base = {1984: 1.0, 1985: 1.0, 1986: 1.0}
        panel = panel_from_grid(
            {
                0: {**base, 1987: 1.0 - 0.2, 1988: 1.0 - 0.2},   # treated
                1: {**base, 1987: 1.2 - 0.2, 1988: 1.4 - 0.2},
                2: {**base, 1987: 1.0, 1988: 1.0},               # control
                3: {**base, 1987: 1.2, 1988: 1.4},
            }
        )
        treated = treated_series({0: True, 1: True, 2: False, 3: False})
        post_rows = panel[panel.year >= 1987]
        m = bracket_series(post_rows, value=(post_rows.id <= 1).astype(float).to_numpy())
        res = tot_iv(panel, "y", treated, m)
        assert res.first_stage == pytest.approx(1.0, abs=1e-12)
        assert res.beta == pytest.approx(-0.2, abs=1e-10)
        assert res.f_stat > 104.7 or np.isinf(res.f_stat)

    def test_f_stat_is_squared_t(self, rng):
        panel, treated, m = self.iv_panel(rng)
        res = tot_iv(panel, "y", treated, m)
        assert res.f_stat == pytest.approx((res.first_stage / res.first_stage_se) ** 2)

    def test_missing_post_brackets_drop_rows(self, rng):
        panel, treated, m = self.iv_panel(rng)
        m_gappy = m.drop((0, 1990))
        res_full = tot_iv(panel, "y", treated, m)
        res_gap = tot_iv(panel, "y", treated, m_gappy)
        assert res_gap.n_obs == res_full.n_obs - 1

    def test_zero_first_stage_error(self, rng):
        panel, treated, _ = self.iv_panel(rng)
        flat = bracket_series(panel, value=0.0)
        with pytest.raises(EstimationError, match="first-stage"):
            tot_iv(panel, "y", treated, flat)


class TestElasticity:
    def tot(self, beta, se=0.008):
        return TotResult(beta=beta, se=se, first_stage=0.23, first_stage_se=0.003,
                         f_stat=5000.0, reduced_form=beta * 0.23, n_obs=100,
                         n_clusters=10, dropped_singletons=0)

    def test_low_income_wage_row(self):
        res = elasticity(self.tot(-0.044), [-0.164], [-0.044])
        assert res.epsilon == pytest.approx(0.367, abs=0.003)
        assert res.se == pytest.approx(0.067, abs=0.003)

    def test_medium_income_wage_row(self):
        res = elasticity(self.tot(-0.015, se=0.012), [-0.175], [-0.043])
        assert res.epsilon == pytest.approx(0.114, abs=0.003)

    def test_zero_tot_gives_zero_elasticity(self):
        res = elasticity(self.tot(0.0), [-0.164], [-0.044])
        assert res.epsilon == 0.0

    def test_tiny_contrast_rejected(self):
        with pytest.raises(EstimationError, match="contrast"):
            elasticity(self.tot(-0.044), [-0.1], [-0.1])

    def test_arm_dispersion_reported(self, rng):
        mech_t = rng.normal(-0.164, 1e-4, 50)
        mech_c = rng.normal(-0.044, 1e-4, 50)
        res = elasticity(self.tot(-0.044), mech_t, mech_c)
        assert res.mech_treated_sd == pytest.approx(1e-4, rel=0.5)
        assert res.contrast == pytest.approx(-0.12, abs=1e-3)
