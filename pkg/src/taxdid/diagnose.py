"""Outcome construction and identification diagnostics: job-to-job
transitions, promotion dummies, kernel densities, the bunching histogram
around the middle-bracket cutoff, and employment/composition series.

All real-valued outcomes are deflated to 1986 prices before taking logs.
Occupational ranks are a six-level ordered scale (0 unskilled, 1 skilled,
2 low-level white-collar, 3-5 higher); "skilled" means rank >= 1 and
"white-collar" means rank >= 2, so white-collar implies skilled.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from taxdid.tax import IncomeRecord, TaxSystem, joint_middle_transfer

SKILLED_RANK = 1
WHITE_COLLAR_RANK = 2

BUNCHING_HALF_WIDTH = 20_500.0
BUNCHING_BIN_WIDTH = 1_000.0


class DiagnosticError(ValueError):
    """Raised when a diagnostic cannot be computed from the inputs."""


def _log_deflated(values: pd.Series, years: pd.Series, cpi: pd.Series) -> pd.Series:
    """log(value / cpi_year); non-positive or missing values stay missing."""
    index = years.map(cpi)
    if index.isna().any():
        missing = sorted(years[index.isna()].unique())
        raise DiagnosticError(f"deflator has no index for years {missing}")
    real = values / index
    return pd.Series(np.where(real > 0, np.log(real.where(real > 0)), np.nan),
                     index=values.index)


def build_outcomes(panel: pd.DataFrame, cpi: pd.Series) -> pd.DataFrame:
    """Per person-year outcome set for the estimators.

    Returns a frame aligned with ``panel`` carrying id, year, employment,
    deflated log outcomes, the two promotion dummies, and the cumulative
    job-to-job-transition indicator.  A JJT between t-1 and t requires a
    workplace change, a strictly higher real wage, and no unemployment-
    benefit receipt in either year; missing inputs yield no transition.
    """
    df = panel.sort_values(["id", "year"], kind="stable").reset_index(drop=True)
    out = df[["id", "year"]].copy()
    out["employed"] = df["employed"].astype(float)

    out["log_real_wage"] = df["log_wage"] - np.log(df["year"].map(cpi).to_numpy(dtype=float))
    out["log_real_earn"] = _log_deflated(df["earn_nov"], df["year"], cpi)
    out["log_hours_daily"] = np.log(df["hours_daily"].where(df["hours_daily"] > 0))
    out["log_hours_annual"] = np.log(df["hours_annual"].where(df["hours_annual"] > 0))

    out["skilled"] = (df["occ_rank"] >= SKILLED_RANK).astype(float).where(df["occ_rank"].notna())
    out["white_collar"] = (
        (df["occ_rank"] >= WHITE_COLLAR_RANK).astype(float).where(df["occ_rank"].notna())
    )

    grouped = df.groupby("id", sort=False)
    prev_wp = grouped["workplace_id"].shift(1)
    prev_wage = grouped["log_wage"].shift(1)
    prev_year = grouped["year"].shift(1)
    prev_ui = grouped["ui_benefit"].shift(1)

    consecutive = df["year"] - prev_year == 1
    changed = df["workplace_id"].notna() & prev_wp.notna() & (df["workplace_id"] != prev_wp)
    # deflation is a common per-year factor, so the strict real-wage
    # comparison is a log-wage comparison adjusted by the CPI ratio
    cpi_now = df["year"].map(cpi).to_numpy(dtype=float)
    cpi_prev = (df["year"] - 1).map(cpi).to_numpy(dtype=float)
    gained = (df["log_wage"] - np.log(cpi_now)) > (prev_wage - np.log(cpi_prev))
    no_ui = (df["ui_benefit"] == 0.0) & (prev_ui == 0.0)
    jjt = (consecutive & changed & gained & no_ui).astype(float)
    out["jjt_cum"] = jjt.groupby(df["id"]).cummax()
    return out


def kernel_density(values: np.ndarray, grid: np.ndarray,
                   bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density with the Silverman rule-of-thumb bandwidth
    0.9 * min(sd, IQR/1.34) * n^(-1/5)."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if len(np.unique(values)) < 2:
        raise DiagnosticError("kernel density needs at least 2 distinct values")
    if bandwidth is None:
        sd = values.std(ddof=1)
        iqr = np.subtract(*np.percentile(values, [75, 25]))
        spread = min(sd, iqr / 1.34) if iqr > 0 else sd
        bandwidth = 0.9 * spread * len(values) ** (-0.2)
    if bandwidth <= 0:
        raise DiagnosticError("bandwidth must be positive")
    grid = np.asarray(grid, dtype=float)
    z = (grid[:, None] - values[None, :]) / bandwidth
    return np.exp(-0.5 * z**2).sum(axis=1) / (len(values) * bandwidth * np.sqrt(2 * np.pi))


def bunching_edges() -> np.ndarray:
    """The 42 edges of the 41 DKK-1,000 bins centred on the cutoff:
    [-20.5k, -19.5k), ..., [-500, 500), ..., [19.5k, 20.5k)."""
    return np.arange(-BUNCHING_HALF_WIDTH, BUNCHING_HALF_WIDTH + 1.0, BUNCHING_BIN_WIDTH)


def bunching_counts(distances: np.ndarray) -> pd.DataFrame:
    """Histogram of cutoff distances over the 41 canonical bins.

    Distances on or beyond the outer edges are excluded.
    """
    edges = bunching_edges()
    d = np.asarray(distances, dtype=float)
    d = d[np.isfinite(d) & (d >= edges[0]) & (d < edges[-1])]
    counts, _ = np.histogram(d, bins=edges)
    return pd.DataFrame(
        {
            "bin_lo": edges[:-1],
            "bin_hi": edges[1:],
            "center": (edges[:-1] + edges[1:]) / 2.0,
            "count": counts,
        }
    )


def middle_base_distances(
    panel: pd.DataFrame,
    systems_by_year: dict[int, TaxSystem],
    cpi: pd.Series,
    ids: np.ndarray,
    years: tuple[int, int] = (1987, 1993),
) -> np.ndarray:
    """Deflated joint-adjusted middle-bracket base minus deflated cutoff,
    pooled over person-years."""
    rows = panel[panel["id"].isin(np.asarray(ids)) & panel["year"].between(*years)]
    rows = rows[rows[["li", "ci", "d"]].notna().all(axis=1)]
    out = []
    for year, sub in rows.groupby("year"):
        sys = systems_by_year[int(year)]
        rec = IncomeRecord(
            li=sub["li"].to_numpy(dtype=float),
            ci=sub["ci"].to_numpy(dtype=float),
            d=sub["d"].to_numpy(dtype=float),
            li_w=np.nan_to_num(sub["li_w"].to_numpy(dtype=float)),
            ci_w=np.nan_to_num(sub["ci_w"].to_numpy(dtype=float)),
            d_w=np.nan_to_num(sub["d_w"].to_numpy(dtype=float)),
            married=(sub["married"] == 1.0).to_numpy(),
        )
        base = joint_middle_transfer(rec, sys)
        deflator = float(cpi.loc[int(year)])
        out.append((base - sys.middle.cutoff) / deflator)
    if not out:
        return np.array([])
    return np.concatenate(out)


def bunching_histogram(
    panel: pd.DataFrame,
    systems_by_year: dict[int, TaxSystem],
    cpi: pd.Series,
    ids: np.ndarray,
    years: tuple[int, int] = (1987, 1993),
) -> pd.DataFrame:
    """Fig-10-style histogram: distance of the post-reform middle-bracket
    base to the cutoff (1986 prices), pooled over 1987-1993."""
    return bunching_counts(middle_base_distances(panel, systems_by_year, cpi, ids, years))


def employment_series(panel: pd.DataFrame, arms: dict[str, np.ndarray]) -> pd.DataFrame:
    """Mean employment by arm and year; expects a quasi-balanced panel."""
    out = []
    for arm, ids in arms.items():
        sub = panel[panel["id"].isin(np.asarray(ids))]
        rates = sub.groupby("year")["employed"].mean()
        out.append(pd.DataFrame({"arm": arm, "year": rates.index, "rate": rates.to_numpy()}))
    return pd.concat(out, ignore_index=True)


def composition_series(panel: pd.DataFrame, arms: dict[str, np.ndarray]) -> pd.DataFrame:
    """Mean 1986 log wage among workers employed in year t, by arm,
    normalized to zero in 1986."""
    base_wage = panel.loc[panel["year"] == 1986].set_index("id")["log_wage"]
    out = []
    for arm, ids in arms.items():
        ids = np.asarray(ids)
        sub = panel[panel["id"].isin(ids) & panel["employed"].astype(bool)]
        wages_86 = sub["id"].map(base_wage)
        series = wages_86.groupby(sub["year"]).mean()
        norm = series - series.loc[1986]
        out.append(pd.DataFrame({"arm": arm, "year": norm.index, "value": norm.to_numpy()}))
    return pd.concat(out, ignore_index=True)


def bracket_share_series(
    panel: pd.DataFrame,
    systems_by_year: dict[int, TaxSystem],
    arms: dict[str, np.ndarray],
    years: tuple[int, int] = (1984, 1993),
) -> pd.DataFrame:
    """Fraction of each arm located in each bracket by year."""
    from taxdid.tax import BracketLocation, bracket_location

    rows = panel[panel["year"].between(*years)]
    rows = rows[rows[["li", "ci", "d"]].notna().all(axis=1)]
    out = []
    for arm, ids in arms.items():
        sub_arm = rows[rows["id"].isin(np.asarray(ids))]
        for year, sub in sub_arm.groupby("year"):
            rec = IncomeRecord(
                li=sub["li"].to_numpy(dtype=float),
                ci=sub["ci"].to_numpy(dtype=float),
                d=sub["d"].to_numpy(dtype=float),
                li_w=np.nan_to_num(sub["li_w"].to_numpy(dtype=float)),
                ci_w=np.nan_to_num(sub["ci_w"].to_numpy(dtype=float)),
                d_w=np.nan_to_num(sub["d_w"].to_numpy(dtype=float)),
                married=(sub["married"] == 1.0).to_numpy(),
            )
            loc = bracket_location(rec, systems_by_year[int(year)])
            for bracket in BracketLocation:
                out.append(
                    {
                        "arm": arm,
                        "year": int(year),
                        "bracket": bracket.name,
                        "share": float(np.mean(loc == int(bracket))),
                    }
                )
    return pd.DataFrame(out)
