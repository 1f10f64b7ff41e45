"""Sample selection, treatment assignment, stratification, placebo and
balance-table tests, including the hand-derived counterfactual-bracket
classification under the 1.02 deflation factor."""

import numpy as np
import pandas as pd
import pytest

from taxdid.design import (
    DesignError,
    Group,
    GroupBounds,
    PlaceboStatus,
    Status,
    assign_placebo,
    assign_treatment,
    balance_table,
    normalized_difference,
    select_sample,
    stratify_income,
    validate_assignments,
)
from taxdid.tax import SYSTEM_1986, SYSTEM_1987, deflate_system

from conftest import make_panel, make_row

ADJ_1987 = deflate_system(SYSTEM_1987, 1.02)


class TestSelectSample:
    def test_restrictions(self):
        rows = [
            make_row(1, 1986, age=36),                      # eligible
            make_row(2, 1986, age=50),                      # age boundary: excluded
            make_row(3, 1986, age=49),                      # eligible
            make_row(4, 1986, employed=False),              # not employed
            make_row(5, 1986, married=False),               # single
            make_row(6, 1986, li_w=0.0),                    # wife without labor income
        ]
        ids = select_sample(make_panel(rows))
        assert list(ids) == [1, 3]


class TestAssignTreatment:
    def test_worked_example_treated(self):
        # 1986 taxable 145000-30000-10000 = 105000 -> bottom.
        # Adjusted-1987 middle base 145000; spouse allowance
        # 127450.98-120000 = 7450.98; adjusted base 137549.02 > 127450.98
        # -> counterfactual middle -> treated.
        panel = make_panel([make_row(1, 1986, li=145_000, li_w=120_000)])
        a = assign_treatment(panel, SYSTEM_1986, ADJ_1987)
        assert a.loc[1, "status"] == Status.TREATED.value
        assert a.loc[1, "b86"] == "BOTTOM"
        assert a.loc[1, "b87_counterfactual"] == "MIDDLE"

    def test_worked_example_control(self):
        # Wife at 60000 leaves allowance 67450.98; adjusted base 77549.02
        # stays under the cutoff -> control.
        panel = make_panel([make_row(1, 1986, li=145_000, li_w=60_000)])
        a = assign_treatment(panel, SYSTEM_1986, ADJ_1987)
        assert a.loc[1, "status"] == Status.CONTROL.value
        assert a.loc[1, "b87_counterfactual"] == "BOTTOM"

    def test_middle_in_1986_excluded(self):
        # taxable 150000 in 1986 is above the 113400 middle cutoff
        panel = make_panel([make_row(1, 1986, li=150_000, ci=0.0, d=0.0)])
        a = assign_treatment(panel, SYSTEM_1986, ADJ_1987)
        assert a.loc[1, "status"] == Status.EXCLUDED.value
        assert a.loc[1, "b86"] == "MIDDLE"

    def test_row_order_invariance(self, toy_panel):
        shuffled = toy_panel.sample(frac=1.0, random_state=3).reset_index(drop=True)
        a = assign_treatment(toy_panel, SYSTEM_1986, ADJ_1987)
        b = assign_treatment(shuffled, SYSTEM_1986, ADJ_1987)
        pd.testing.assert_frame_equal(a, b)

    def test_raising_wife_income_moves_toward_treatment(self):
        statuses = []
        for li_w in (40_000, 90_000, 115_000, 130_000):
            panel = make_panel([make_row(1, 1986, li=145_000, li_w=li_w)])
            a = assign_treatment(panel, SYSTEM_1986, ADJ_1987)
            statuses.append(a.loc[1, "status"])
        ranks = [0 if s == Status.CONTROL.value else 1 for s in statuses]
        assert ranks == sorted(ranks)

    def test_incomplete_income_rejected(self):
        panel = make_panel([make_row(1, 1986)])
        panel.loc[0, "ci"] = np.nan
        with pytest.raises(DesignError, match="1986 income incomplete"):
            assign_treatment(panel, SYSTEM_1986, ADJ_1987, ids=np.array([1]))

    def test_invariants_hold(self, toy_panel):
        a = assign_treatment(toy_panel, SYSTEM_1986, ADJ_1987)
        a, _ = stratify_income(a)
        a = assign_placebo(a) if (a["status"] == "control").sum() >= 4 else a
        validate_assignments(a)


def _assignments(rows):
    """Assignment frame from (id, status, li86, li_w86) tuples."""
    return pd.DataFrame(
        {
            "status": [r[1] for r in rows],
            "b86": "BOTTOM",
            "b87_counterfactual": [
                "MIDDLE" if r[1] == "treated" else "BOTTOM" for r in rows
            ],
            "li86": [float(r[2]) for r in rows],
            "li_w86": [float(r[3]) if len(r) > 3 else 90_000.0 for r in rows],
        },
        index=pd.Index([r[0] for r in rows], name="id"),
    )


class TestStratifyIncome:
    def test_group_bounds(self):
        rows = [(1, "treated", 148_596), (2, "control", 142_386),
                (3, "treated", 185_462), (4, "control", 181_446),
                (5, "control", 300_000), (6, "treated", 310_000),
                (7, "excluded", 150_000)]
        out, _ = stratify_income(_assignments(rows))
        assert out.loc[1, "group"] == Group.LOW.value
        assert out.loc[2, "group"] == Group.LOW.value
        assert out.loc[3, "group"] == Group.MEDIUM.value
        assert out.loc[4, "group"] == Group.MEDIUM.value
        assert out.loc[5, "group"] == Group.OUT.value   # outside bounds, bin ok
        assert out.loc[7, "group"] == Group.OUT.value   # excluded from the design

    def test_trimming_below_ten_percent(self):
        # 1 treated vs 19 controls in the [100k, 120k) bin: share 0.05
        rows = [(1, "treated", 110_000)] + [
            (i, "control", 100_000 + 500 * i) for i in range(2, 21)
        ]
        # keep a healthy bin alongside
        rows += [(100 + i, "treated" if i % 2 else "control", 140_000 + 10 * i)
                 for i in range(10)]
        out, bins = stratify_income(_assignments(rows))
        assert out.loc[1, "group"] == Group.TRIMMED.value
        assert out.loc[2, "group"] == Group.TRIMMED.value
        low_bin = bins[bins.bin_lo == 100_000].iloc[0]
        assert low_bin.treated_share == 0.05
        assert low_bin.trimmed
        assert out.loc[101, "group"] == Group.LOW.value

    def test_boundary_membership_half_open(self):
        rows = [(1, "control", 120_000), (2, "control", 159_999.99),
                (3, "control", 160_000), (4, "control", 280_000)]
        out, _ = stratify_income(_assignments(rows), trim_range=(0.0, 1.0))
        assert out.loc[1, "group"] == Group.LOW.value
        assert out.loc[2, "group"] == Group.LOW.value
        assert out.loc[3, "group"] == Group.MEDIUM.value
        assert out.loc[4, "group"] == Group.OUT.value

    def test_robustness_variant_bounds(self):
        rows = [(1, "control", 117_000)]
        out, _ = stratify_income(
            _assignments(rows),
            bounds=GroupBounds(low=(115_000, 160_000)),
            trim_range=(0.0, 1.0),
        )
        assert out.loc[1, "group"] == Group.LOW.value

    def test_overlapping_bounds_rejected(self):
        with pytest.raises(DesignError, match="overlap"):
            GroupBounds(low=(120_000, 170_000), medium=(160_000, 280_000))


class TestAssignPlacebo:
    def test_quartile_split(self):
        # 8 low-income controls with wife income 10k..80k:
        # median-unbiased Q1 = 26.67k, Q2 = 45k
        rows = [(i, "control", 140_000, 10_000 * i) for i in range(1, 9)]
        rows.append((9, "treated", 140_000, 120_000))
        out, _ = stratify_income(_assignments(rows))
        out = assign_placebo(out)
        q1, q2 = out.attrs["placebo_q1"], out.attrs["placebo_q2"]
        assert q1 == pytest.approx(
            np.quantile(np.arange(1, 9) * 10_000.0, 0.25, method="median_unbiased")
        )
        wives = out["li_w86"]
        for pid in range(1, 9):
            expected = (
                PlaceboStatus.P_CONTROL.value
                if wives[pid] < q1
                else PlaceboStatus.P_TREATED.value
                if wives[pid] < q2
                else PlaceboStatus.NONE.value
            )
            assert out.loc[pid, "placebo_status"] == expected
        assert out.loc[9, "placebo_status"] == PlaceboStatus.NONE.value
        validate_assignments(out)

    def test_degenerate_wife_income_rejected(self):
        # healthy bin (half treated) so the controls stay in LOW
        rows = [(i, "control", 140_000, 50_000) for i in range(1, 9)]
        rows += [(i, "treated", 140_000, 120_000) for i in range(10, 18)]
        out, _ = stratify_income(_assignments(rows))
        with pytest.raises(DesignError, match="degenerate"):
            assign_placebo(out)

    def test_too_few_controls_rejected(self):
        rows = [(1, "control", 140_000, 50_000)]
        out, _ = stratify_income(_assignments(rows))
        with pytest.raises(DesignError, match="too few"):
            assign_placebo(out)


def two_point_sample(mean, sd):
    """Two observations with exactly the requested mean and ddof=1 sd."""
    return np.array([mean - sd / np.sqrt(2), mean + sd / np.sqrt(2)])


class TestBalance:
    def test_published_labor_income_row(self):
        # means 148596/142386, sds 8202/10625 -> 0.654
        nd = normalized_difference(
            two_point_sample(148_596, 8_202), two_point_sample(142_386, 10_625)
        )
        assert nd == pytest.approx(0.654, abs=1e-3)

    def test_published_wife_labor_income_row(self):
        nd = normalized_difference(
            two_point_sample(119_978, 26_352), two_point_sample(83_925, 37_209)
        )
        assert nd == pytest.approx(1.12, abs=1e-2)

    def test_equal_means_give_zero(self):
        nd = normalized_difference(two_point_sample(5.0, 1.0), two_point_sample(5.0, 2.0))
        assert nd == pytest.approx(0.0, abs=1e-12)

    def test_zero_variance_reported_as_nan(self):
        assert np.isnan(normalized_difference(np.array([1.0, 1.0]), np.array([1.0, 1.0])))

    def test_affine_invariance(self, rng):
        a, b = rng.normal(3, 2, 40), rng.normal(1, 2, 40)
        assert normalized_difference(a, b) == pytest.approx(
            normalized_difference(a * 7 - 3, b * 7 - 3)
        )

    def test_balance_table_shape(self, toy_panel):
        a = assign_treatment(toy_panel, SYSTEM_1986, ADJ_1987)
        a, _ = stratify_income(a)
        table = balance_table(
            toy_panel,
            a.index[a.status == "treated"].to_numpy(),
            a.index[a.status == "control"].to_numpy(),
        )
        assert "labor income (wife)" in set(table.covariate)
        li_row = table[table.covariate == "labor income"].iloc[0]
        assert li_row.mean_a > li_row.mean_b  # treated have higher own income here

    def test_needs_two_observations_per_arm(self, toy_panel):
        with pytest.raises(DesignError, match="at least 2"):
            balance_table(toy_panel, np.array([1]), np.array([2, 3]))
