"""Research design: sample selection, treatment assignment from
counterfactual bracket movements, income-group stratification with
overlap trimming, placebo arms, and covariate balance tables.

Treatment is a deterministic function of 1986 income: a man liable only
for bottom taxes in 1986 is treated if, holding his 1986 income fixed,
the inflation-adjusted post-reform system (with the spousal allowance
transfer active) pushes him into the middle bracket, and control if he
stays in the bottom bracket.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import pandas as pd

from taxdid.tax import (
    BracketLocation,
    IncomeRecord,
    TaxSystem,
    bracket_location,
    mechanical_ntr_change,
)

DEFAULT_LOW_BOUNDS = (120_000.0, 160_000.0)
DEFAULT_MEDIUM_BOUNDS = (160_000.0, 280_000.0)
DEFAULT_TRIM_RANGE = (0.1, 0.9)
PROPENSITY_BIN_WIDTH = 20_000.0
MAX_SAMPLE_AGE = 50


class Status(enum.Enum):
    TREATED = "treated"
    CONTROL = "control"
    EXCLUDED = "excluded"


class PlaceboStatus(enum.Enum):
    P_TREATED = "p_treated"
    P_CONTROL = "p_control"
    NONE = "none"


class Group(enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    TRIMMED = "trimmed"
    OUT = "out"


class DesignError(ValueError):
    """Raised when a design step cannot be computed from the data."""


@dataclass
class GroupBounds:
    """Half-open labor-income bounds [lo, hi) for the two income groups."""

    low: tuple[float, float] = DEFAULT_LOW_BOUNDS
    medium: tuple[float, float] = DEFAULT_MEDIUM_BOUNDS

    def __post_init__(self) -> None:
        for lo, hi in (self.low, self.medium):
            if not lo < hi:
                raise DesignError(f"group bounds must satisfy lo < hi, got [{lo}, {hi})")
        overlap = max(self.low[0], self.medium[0]) < min(self.low[1], self.medium[1])
        if overlap:
            raise DesignError(f"income groups overlap: {self.low} vs {self.medium}")


def baseline_rows(panel: pd.DataFrame) -> pd.DataFrame:
    """The 1986 cross-section, indexed by id."""
    rows = panel[panel["year"] == 1986]
    return rows.set_index(rows["id"])


def select_sample(panel: pd.DataFrame) -> np.ndarray:
    """Ids satisfying the 1986 restrictions: age < 50, employed on the
    November reference date, married, wife with strictly positive labor
    income."""
    base = baseline_rows(panel)
    keep = (
        (base["age"] < MAX_SAMPLE_AGE)
        & base["employed"]
        & (base["married"] == 1.0)
        & (base["li_w"] > 0)
    )
    return np.asarray(sorted(base.index[keep.fillna(False)]))


def _records_1986(base: pd.DataFrame) -> IncomeRecord:
    regional = None
    if "regional_rate" in base.columns and base["regional_rate"].notna().any():
        regional = base["regional_rate"].to_numpy(dtype=float)
    return IncomeRecord(
        li=base["li"].to_numpy(dtype=float),
        ci=base["ci"].to_numpy(dtype=float),
        d=base["d"].to_numpy(dtype=float),
        li_w=np.nan_to_num(base["li_w"].to_numpy(dtype=float)),
        ci_w=np.nan_to_num(base["ci_w"].to_numpy(dtype=float)),
        d_w=np.nan_to_num(base["d_w"].to_numpy(dtype=float)),
        married=(base["married"] == 1.0).to_numpy(),
        regional_rate=regional,
    )


def assign_treatment(
    panel: pd.DataFrame,
    sys86: TaxSystem,
    sys87adj: TaxSystem,
    ids: np.ndarray | None = None,
) -> pd.DataFrame:
    """Classify each sample id from its 1986 and counterfactual brackets.

    Income is frozen at the 1986 record (including the 1986 spouse); the
    joint transfer is active only where the system's middle bracket is
    jointly taxed.  Returns a frame indexed by id with columns ``status``,
    ``b86``, ``b87_counterfactual`` and ``li86``/``li_w86`` carried along
    for stratification.
    """
    if ids is None:
        ids = select_sample(panel)
    base = baseline_rows(panel).loc[ids]
    if base[["li", "ci", "d"]].isna().any().any():
        bad = base.index[base[["li", "ci", "d"]].isna().any(axis=1)]
        raise DesignError(f"1986 income incomplete for ids {list(bad[:5])}")

    rec = _records_1986(base)
    b86 = bracket_location(rec, sys86)
    b87 = bracket_location(rec, sys87adj)

    status = np.full(len(base), Status.EXCLUDED.value, dtype=object)
    in_bottom_86 = b86 == int(BracketLocation.BOTTOM)
    status[in_bottom_86 & (b87 == int(BracketLocation.MIDDLE))] = Status.TREATED.value
    status[in_bottom_86 & (b87 == int(BracketLocation.BOTTOM))] = Status.CONTROL.value

    return pd.DataFrame(
        {
            "status": status,
            "b86": [BracketLocation(c).name for c in b86],
            "b87_counterfactual": [BracketLocation(c).name for c in b87],
            "li86": rec.li,
            "li_w86": rec.li_w,
        },
        index=pd.Index(ids, name="id"),
    )


def stratify_income(
    assignments: pd.DataFrame,
    bounds: GroupBounds | None = None,
    trim_range: tuple[float, float] = DEFAULT_TRIM_RANGE,
    bin_width: float = PROPENSITY_BIN_WIDTH,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Label income groups and trim bins with poor overlap.

    Bins of ``bin_width`` DKK over 1986 labor income (anchored at zero)
    act as coarse propensity scores: any bin whose treated share falls
    outside ``trim_range`` is discarded, overriding the group label.
    Returns the assignments with a ``group`` column added plus the
    per-bin diagnostic table.
    """
    bounds = bounds or GroupBounds()
    out = assignments.copy()
    li = out["li86"].to_numpy(dtype=float)
    in_design = out["status"].isin([Status.TREATED.value, Status.CONTROL.value]).to_numpy()

    bin_idx = np.floor(li / bin_width).astype(int)
    table_rows = []
    trimmed_bins = set()
    for b in sorted(set(bin_idx[in_design])):
        members = in_design & (bin_idx == b)
        n_treated = int((out["status"].to_numpy()[members] == Status.TREATED.value).sum())
        n_total = int(members.sum())
        share = n_treated / n_total
        trimmed = not (trim_range[0] <= share <= trim_range[1])
        if trimmed:
            trimmed_bins.add(b)
        table_rows.append(
            {
                "bin_lo": b * bin_width,
                "bin_hi": (b + 1) * bin_width,
                "n_treated": n_treated,
                "n_control": n_total - n_treated,
                "treated_share": share,
                "trimmed": trimmed,
            }
        )

    group = np.full(len(out), Group.OUT.value, dtype=object)
    low = (li >= bounds.low[0]) & (li < bounds.low[1])
    medium = (li >= bounds.medium[0]) & (li < bounds.medium[1])
    group[low] = Group.LOW.value
    group[medium] = Group.MEDIUM.value
    in_trimmed_bin = np.isin(bin_idx, sorted(trimmed_bins))
    group[in_design & in_trimmed_bin] = Group.TRIMMED.value
    group[~in_design] = Group.OUT.value
    out["group"] = group
    return out, pd.DataFrame(table_rows)


def assign_placebo(assignments: pd.DataFrame) -> pd.DataFrame:
    """Split low-income controls into placebo arms by wife's 1986 income.

    Placebo-control: wife income below the first quartile of low-income
    controls' wife income; placebo-treated: between the first and second
    quartiles.  Quartiles use the median-unbiased estimator.
    """
    out = assignments.copy()
    controls = (out["status"] == Status.CONTROL.value) & (out["group"] == Group.LOW.value)
    wife = out.loc[controls, "li_w86"].to_numpy(dtype=float)
    if len(wife) < 4:
        raise DesignError("too few low-income controls to form placebo quartiles")
    if np.ptp(wife) == 0:
        raise DesignError("degenerate wife labor income: all values equal")
    q1, q2 = np.quantile(wife, [0.25, 0.50], method="median_unbiased")

    status = np.full(len(out), PlaceboStatus.NONE.value, dtype=object)
    wife_all = out["li_w86"].to_numpy(dtype=float)
    status[controls & (wife_all < q1)] = PlaceboStatus.P_CONTROL.value
    status[controls & (wife_all >= q1) & (wife_all < q2)] = PlaceboStatus.P_TREATED.value
    out["placebo_status"] = status
    out.attrs["placebo_q1"] = float(q1)
    out.attrs["placebo_q2"] = float(q2)
    return out


def mechanical_changes(
    panel: pd.DataFrame,
    ids: np.ndarray,
    sys86: TaxSystem,
    sys87adj: TaxSystem,
) -> pd.Series:
    """Per-person mechanical log net-of-tax change at frozen 1986 income."""
    base = baseline_rows(panel).loc[np.asarray(sorted(ids))]
    rec = _records_1986(base)
    return pd.Series(
        mechanical_ntr_change(rec, sys86, sys87adj),
        index=pd.Index(base.index, name="id"),
    )


TABLE_COVARIATES = [
    ("li", "labor income"),
    ("age", "age"),
    ("n_children", "number of children"),
    ("edu_low", "low education"),
    ("edu_middle", "middle education"),
    ("edu_high", "high education"),
    ("full_time", "full-time job"),
    ("private_sector", "private-sector job"),
    ("ci", "capital income"),
    ("d", "deductions"),
    ("ci_w", "capital income (wife)"),
    ("d_w", "deductions (wife)"),
    ("li_w", "labor income (wife)"),
]


def normalized_difference(a: np.ndarray, b: np.ndarray) -> float:
    """Mean gap over the pooled standard deviation, sqrt((sa^2+sb^2)/2)."""
    sa, sb = np.nanstd(a, ddof=1), np.nanstd(b, ddof=1)
    pooled = np.sqrt((sa**2 + sb**2) / 2.0)
    if pooled == 0:
        return np.nan
    return float((np.nanmean(a) - np.nanmean(b)) / pooled)


def balance_table(
    panel: pd.DataFrame,
    ids_a: np.ndarray,
    ids_b: np.ndarray,
    covariates: list[tuple[str, str]] | None = None,
    year: int = 1986,
) -> pd.DataFrame:
    """Covariate means, standard deviations, and normalized differences.

    Compares the ``year`` cross-section between two id sets: treated vs
    control arms, or employed-in-1986 vs employed-in-1993 within an arm.
    Education dummies are derived from the tiered ``education`` column.
    """
    if len(ids_a) < 2 or len(ids_b) < 2:
        raise DesignError("balance table needs at least 2 observations per arm")
    covariates = covariates or TABLE_COVARIATES
    rows = panel[panel["year"] == year].set_index("id")
    for tier, name in enumerate(["edu_low", "edu_middle", "edu_high"]):
        rows[name] = (rows["education"] == tier).astype(float).where(rows["education"].notna())

    out = []
    for column, label in covariates:
        a = rows.loc[rows.index.intersection(ids_a), column].to_numpy(dtype=float)
        b = rows.loc[rows.index.intersection(ids_b), column].to_numpy(dtype=float)
        out.append(
            {
                "covariate": label,
                "mean_a": np.nanmean(a),
                "mean_b": np.nanmean(b),
                "sd_a": np.nanstd(a, ddof=1),
                "sd_b": np.nanstd(b, ddof=1),
                "normalized_difference": normalized_difference(a, b),
            }
        )
    return pd.DataFrame(out)


def arm_ids(assignments: pd.DataFrame, group: Group, status: Status) -> np.ndarray:
    mask = (assignments["group"] == group.value) & (assignments["status"] == status.value)
    return assignments.index[mask].to_numpy()


def placebo_ids(assignments: pd.DataFrame, status: PlaceboStatus) -> np.ndarray:
    return assignments.index[assignments["placebo_status"] == status.value].to_numpy()


def validate_assignments(assignments: pd.DataFrame) -> None:
    """Assert the structural invariants of a finished assignment table."""
    designed = assignments["status"] != Status.EXCLUDED.value
    if not (assignments.loc[designed, "b86"] == "BOTTOM").all():
        raise DesignError("non-excluded individual outside the 1986 bottom bracket")
    treated = assignments["status"] == Status.TREATED.value
    if not (assignments.loc[treated, "b87_counterfactual"] == "MIDDLE").all():
        raise DesignError("treated individual without counterfactual middle bracket")
    control = assignments["status"] == Status.CONTROL.value
    if not (assignments.loc[control, "b87_counterfactual"] == "BOTTOM").all():
        raise DesignError("control individual outside counterfactual bottom bracket")
    if "placebo_status" in assignments.columns:
        has_placebo = assignments["placebo_status"] != PlaceboStatus.NONE.value
        ok = control & (assignments["group"] == Group.LOW.value)
        if (has_placebo & ~ok).any():
            raise DesignError("placebo status outside low-income controls")
