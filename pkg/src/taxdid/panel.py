"""Panel data model: CSV ingestion with hard validation, the
quasi-balanced-panel transformation, and CPI deflator handling.

The canonical unit of observation is the person-year.  Non-employed
person-years keep their row but carry no job outcomes; person-years
absent from the file entirely (attrition) are filled in by
``quasi_balance`` with only (id, year, employed=False) populated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

YEARS = tuple(range(1981, 1994))

# Column order of the panel CSV.  Booleans are encoded 0/1, missing values
# as empty cells.  regional_rate, personal_income and stock_income are
# optional pass-through columns.
ID_COLUMNS = ["id", "year", "employed"]
INCOME_COLUMNS = ["li", "ci", "d", "li_w", "ci_w", "d_w"]
OUTCOME_COLUMNS = ["log_wage", "earn_nov", "hours_daily", "hours_annual",
                   "occ_rank", "workplace_id"]
COVARIATE_COLUMNS = ["married", "age", "n_children", "education",
                     "full_time", "private_sector", "ui_benefit"]
OPTIONAL_COLUMNS = ["regional_rate", "personal_income", "stock_income"]
PANEL_COLUMNS = ID_COLUMNS + COVARIATE_COLUMNS + INCOME_COLUMNS + OUTCOME_COLUMNS

BOOL_COLUMNS = ["employed", "married", "full_time", "private_sector", "ui_benefit"]

_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no", ""}


class PanelFormatError(ValueError):
    """Raised when a panel CSV violates the schema or its invariants."""


@dataclass
class LoadReport:
    """Row counts and missingness summary produced by ``load_panel``."""

    path: str
    n_rows: int
    n_ids: int
    year_range: tuple[int, int]
    missing: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> str:
        lines = [
            f"panel: {self.path}",
            f"rows: {self.n_rows}  individuals: {self.n_ids}  "
            f"years: {self.year_range[0]}-{self.year_range[1]}",
        ]
        gaps = {k: v for k, v in self.missing.items() if v}
        if gaps:
            lines.append("missing cells: " + ", ".join(f"{k}={v}" for k, v in sorted(gaps.items())))
        lines.extend(self.warnings)
        return "\n".join(lines)


def _file_rows(index: pd.Index) -> str:
    # data row i sits on file line i+2 (1-based, after the header)
    lines = [str(i + 2) for i in index[:8]]
    suffix = ", ..." if len(index) > 8 else ""
    return ", ".join(lines) + suffix


def _parse_bool(raw: pd.Series, column: str) -> pd.Series:
    text = raw.fillna("").astype(str).str.strip().str.lower()
    text = text.replace({"1.0": "1", "0.0": "0"})
    bad = ~(text.isin(_TRUE) | text.isin(_FALSE))
    if bad.any():
        raise PanelFormatError(
            f"column {column!r}: non-boolean values on rows {_file_rows(raw.index[bad])}"
        )
    out = pd.Series(np.nan, index=raw.index, dtype=float)
    out[text.isin(_TRUE)] = 1.0
    out[text.isin(_FALSE) & (text != "")] = 0.0
    return out


def _parse_numeric(raw: pd.Series, column: str) -> pd.Series:
    # pd.to_numeric only flags malformed cells; the value conversion goes
    # through numpy's correctly-rounded parser so CSV round trips are
    # bit-exact
    check = pd.to_numeric(raw, errors="coerce")
    malformed = check.isna() & raw.notna() & (raw.astype(str).str.strip() != "")
    if malformed.any():
        raise PanelFormatError(
            f"column {column!r}: malformed numeric values on rows "
            f"{_file_rows(raw.index[malformed])}"
        )
    text = raw.fillna("nan").astype(str).str.strip().replace("", "nan")
    values = np.asarray(text.to_numpy(), dtype=np.float64)
    return pd.Series(values, index=raw.index)


def load_panel(path: str | Path) -> tuple[pd.DataFrame, LoadReport]:
    """Read and validate a panel CSV.

    Returns the typed panel (sorted by id, year) and a ``LoadReport``.
    Raises ``PanelFormatError`` naming offending rows for malformed
    numerics, duplicate (id, year) keys, or invariant breaches such as an
    employed row without a wage.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"panel file not found: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""])
    missing_cols = [c for c in PANEL_COLUMNS if c not in raw.columns]
    if missing_cols:
        raise PanelFormatError(f"{path}: missing required columns {missing_cols}")

    df = pd.DataFrame(index=raw.index)
    for column in raw.columns:
        if column in ("id", "year"):
            values = _parse_numeric(raw[column], column)
            if values.isna().any():
                raise PanelFormatError(
                    f"column {column!r}: missing values on rows "
                    f"{_file_rows(raw.index[values.isna()])}"
                )
            if (values != values.round()).any():
                raise PanelFormatError(f"column {column!r}: non-integer values")
            df[column] = values.astype(np.int64)
        elif column in BOOL_COLUMNS:
            df[column] = _parse_bool(raw[column], column)
        else:
            df[column] = _parse_numeric(raw[column], column)

    _validate_panel(df, str(path))
    df = df.sort_values(["id", "year"], kind="stable").reset_index(drop=True)
    df["employed"] = df["employed"].astype(bool)

    report = LoadReport(
        path=str(path),
        n_rows=len(df),
        n_ids=df["id"].nunique(),
        year_range=(int(df["year"].min()), int(df["year"].max())) if len(df) else (0, 0),
        missing={c: int(df[c].isna().sum()) for c in df.columns if df[c].isna().any()},
    )
    return df, report


def _validate_panel(df: pd.DataFrame, origin: str) -> None:
    dupes = df.duplicated(subset=["id", "year"], keep=False)
    if dupes.any():
        keys = df.loc[dupes, ["id", "year"]].drop_duplicates().itertuples(index=False)
        shown = "; ".join(f"(id={k.id}, year={k.year})" for k in list(keys)[:5])
        raise PanelFormatError(f"{origin}: duplicate (id, year) keys: {shown}")

    out_of_range = ~df["year"].isin(YEARS)
    if out_of_range.any():
        raise PanelFormatError(
            f"{origin}: years outside {YEARS[0]}-{YEARS[-1]} on rows "
            f"{_file_rows(df.index[out_of_range])}"
        )

    if df["employed"].isna().any():
        raise PanelFormatError(
            f"{origin}: employed flag missing on rows "
            f"{_file_rows(df.index[df['employed'].isna()])}"
        )

    employed = df["employed"] == 1.0
    no_wage = employed & df["log_wage"].isna()
    if no_wage.any():
        raise PanelFormatError(
            f"{origin}: employed rows with missing wage on rows {_file_rows(df.index[no_wage])}"
        )
    for column in OUTCOME_COLUMNS:
        stray = ~employed & df[column].notna()
        if stray.any():
            raise PanelFormatError(
                f"{origin}: non-employed rows carry {column!r} on rows "
                f"{_file_rows(df.index[stray])}"
            )

    if not np.isfinite(df.loc[df["log_wage"].notna(), "log_wage"]).all():
        raise PanelFormatError(f"{origin}: non-finite log_wage values")

    for column in ("d", "d_w"):
        negative = df[column].notna() & (df[column] < 0)
        if negative.any():
            raise PanelFormatError(
                f"{origin}: negative deductions in {column!r} on rows "
                f"{_file_rows(df.index[negative])}"
            )

    married = df["married"] == 1.0
    for column in ("li_w", "ci_w", "d_w"):
        gap = married & df[column].isna()
        if gap.any():
            raise PanelFormatError(
                f"{origin}: married rows missing {column!r} on rows "
                f"{_file_rows(df.index[gap])}"
            )
        stray = (df["married"] == 0.0) & df[column].notna()
        if stray.any():
            raise PanelFormatError(
                f"{origin}: unmarried rows carry {column!r} on rows "
                f"{_file_rows(df.index[stray])}"
            )


def write_panel(df: pd.DataFrame, path: str | Path) -> None:
    """Write a panel CSV in the canonical column order (0/1 booleans)."""
    out = df.copy()
    for column in BOOL_COLUMNS:
        if column in out.columns:
            if out[column].dtype == bool:
                out[column] = out[column].astype(int)
            else:
                out[column] = out[column].astype("Int64")
    columns = [c for c in PANEL_COLUMNS + OPTIONAL_COLUMNS if c in out.columns]
    out[columns].to_csv(path, index=False)


def quasi_balance(
    df: pd.DataFrame,
    ids: np.ndarray | None = None,
    years: tuple[int, ...] = YEARS,
) -> pd.DataFrame:
    """Complete the panel so every id has one row per year.

    Inserted rows carry only (id, year, employed=False); everything else
    is missing.  Existing rows are untouched.  An already balanced panel
    is returned unchanged (up to canonical ordering).
    """
    if ids is None:
        ids = df["id"].unique()
    ids = np.asarray(sorted(ids))
    if len(ids) == 0:
        return df.iloc[0:0].copy()

    full = pd.MultiIndex.from_product([ids, years], names=["id", "year"])
    existing = pd.MultiIndex.from_frame(df[["id", "year"]])
    gaps = full.difference(existing)

    subset = df[df["id"].isin(ids)].copy()
    if len(gaps) == 0:
        return subset.sort_values(["id", "year"], kind="stable").reset_index(drop=True)

    filler = pd.DataFrame(
        {"id": gaps.get_level_values("id"), "year": gaps.get_level_values("year")}
    )
    filler["employed"] = False
    balanced = pd.concat([subset, filler], ignore_index=True)
    balanced["employed"] = balanced["employed"].astype(bool)
    return balanced.sort_values(["id", "year"], kind="stable").reset_index(drop=True)


def unit_deflator(years: tuple[int, ...] = YEARS) -> pd.Series:
    """CPI index identically 1.0 (constant-price data)."""
    return pd.Series(1.0, index=pd.Index(years, name="year"), name="index")


def default_deflator() -> pd.Series:
    """CPI series shipped with the package (1986 = 1, 2%/year geometric)."""
    with resources.files("taxdid.data").joinpath("cpi_default.csv").open() as fh:
        return _deflator_from_frame(pd.read_csv(fh), "<package data>")


def load_deflator(path: str | Path) -> pd.Series:
    """Read a (year, index) CSV mapping years to CPI levels (1986 = 1)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"deflator file not found: {path}")
    return _deflator_from_frame(pd.read_csv(path), str(path))


def _deflator_from_frame(frame: pd.DataFrame, origin: str) -> pd.Series:
    if not {"year", "index"} <= set(frame.columns):
        raise PanelFormatError(f"{origin}: deflator needs 'year' and 'index' columns")
    if (frame["index"] <= 0).any():
        raise PanelFormatError(f"{origin}: deflator indices must be positive")
    series = frame.set_index(frame["year"].astype(int))["index"].astype(float)
    series.index.name = "year"
    return series
