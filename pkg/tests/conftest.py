"""Shared builders for small hand-constructed panels."""

import numpy as np
import pandas as pd
import pytest

from taxdid.panel import PANEL_COLUMNS


def make_row(id, year, employed=True, married=True, li=145_000.0, ci=-30_000.0,
             d=10_000.0, li_w=120_000.0, ci_w=0.0, d_w=0.0, log_wage=4.8,
             earn_nov=140_000.0, hours_daily=7.4, hours_annual=1_700.0,
             occ_rank=1.0, workplace_id=10.0, ui_benefit=False, age=36,
             n_children=2, education=1, full_time=True, private_sector=True):
    """One person-year dict; pass None to blank a field."""
    if not employed:
        log_wage = earn_nov = hours_daily = hours_annual = None
        occ_rank = workplace_id = None
    if not married:
        li_w = ci_w = d_w = None
    return dict(
        id=id, year=year, employed=employed, married=married, age=age,
        n_children=n_children, education=education, full_time=full_time,
        private_sector=private_sector, ui_benefit=ui_benefit, li=li, ci=ci,
        d=d, li_w=li_w, ci_w=ci_w, d_w=d_w, log_wage=log_wage,
        earn_nov=earn_nov, hours_daily=hours_daily, hours_annual=hours_annual,
        occ_rank=occ_rank, workplace_id=workplace_id,
    )


def make_panel(rows):
    df = pd.DataFrame(rows, columns=PANEL_COLUMNS)
    for flag in ("employed", "married", "full_time", "private_sector", "ui_benefit"):
        df[flag] = df[flag].astype(float) if df[flag].isna().any() else df[flag].astype(bool)
    df["employed"] = df["employed"].astype(bool)
    for flag in ("married", "full_time", "private_sector", "ui_benefit"):
        if df[flag].dtype == bool:
            df[flag] = df[flag].astype(float)
    return df.sort_values(["id", "year"]).reset_index(drop=True)


@pytest.fixture
def toy_panel():
    """Six men observed 1985-1987, all eligible in 1986."""
    rows = []
    configs = [
        (1, 145_000.0, 120_000.0),   # treated-like
        (2, 145_000.0, 60_000.0),    # control-like
        (3, 150_000.0, 110_000.0),
        (4, 130_000.0, 95_000.0),
        (5, 152_000.0, 125_000.0),
        (6, 128_000.0, 40_000.0),
    ]
    for pid, li, li_w in configs:
        for year in (1985, 1986, 1987):
            rows.append(make_row(pid, year, li=li, li_w=li_w,
                                 log_wage=4.8 + 0.01 * (year - 1986) + 0.001 * pid))
    return make_panel(rows)


@pytest.fixture
def rng():
    return np.random.default_rng(20_250_301)
