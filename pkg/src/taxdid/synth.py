"""Synthetic household-panel generator with a known wage response.

The data-generating process lives at constant 1986 prices: pre-reform
years face the 1986 tax system and post-reform years the inflation-
adjusted 1987 system, so the reform's only cross-sectional variation is
the joint-taxation bracket movement.  Log hourly wages follow

    w_it = a_i + g_t + gamma * sum_{87 <= s <= t} log(1 - tau_is) + noise,

with tau_is the effective marginal tax rate of the evolving income record
in year s.  A per-year structural response ``gamma`` therefore implies a
long-run elasticity of gamma times the mean post-reform exposure length
(4.0 for the 1987-1993 horizon); ``true_elasticity`` returns it and
``DgpConfig.for_elasticity`` inverts it.

Year effects absorb the cross-sectional mean of the cumulative tax term,
so the aggregate wage path tracks the configured trend for any gamma;
differences between treatment arms are untouched by this normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
import pandas as pd

from taxdid.panel import PANEL_COLUMNS
from taxdid.tax import (
    DEFAULT_DEFLATION_FACTOR,
    IncomeRecord,
    SYSTEM_1986,
    SYSTEM_1987,
    TaxSystem,
    deflate_system,
    effective_mtr,
)

REFORM_YEAR = 1987

# 1986 occupational-rank shares: unskilled, skilled, low-level
# white-collar, three higher ranks.
OCC_RANK_SHARES = (0.34, 0.29, 0.25, 0.05, 0.04, 0.03)


class DgpError(ValueError):
    """Raised for invalid generator configurations."""


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the synthetic panel's data-generating process.

    Monetary quantities are 1986 DKK.  Own capital income is implied:
    a taxable-income anchor is drawn per person and CI is set to
    anchor + D - LI, reproducing the strongly negative capital income of
    the study population.  ``income_drift_sd``/``income_drift_rho``
    control the stationary log-income deviations around the 1986 anchor
    that generate realistic bracket non-compliance after the reform.
    """

    n_individuals: int = 40_000
    start_year: int = 1981
    end_year: int = 1993
    gamma: float = 0.1
    deflation_factor: float = DEFAULT_DEFLATION_FACTOR
    seed: int = 0

    own_li_mean: float = 150_000.0
    own_li_sd: float = 30_000.0
    own_li_floor: float = 30_000.0
    taxable86_mean: float = 100_000.0
    taxable86_sd: float = 14_000.0
    deductions_mean: float = 11_000.0
    deductions_sd: float = 7_000.0
    wife_li_median: float = 90_000.0
    wife_li_sigma: float = 0.35
    wife_ci_mean: float = -5_500.0
    wife_ci_sd: float = 12_000.0
    wife_d_mean: float = 8_000.0
    wife_d_sd: float = 6_000.0
    income_drift_sd: float = 0.05
    income_drift_rho: float = 0.7

    wage_base_log: float = float(np.log(120.0))
    wage_person_sd: float = 0.25
    wage_trend: float = 0.02
    year_effect_sd: float = 0.002
    measurement_noise_sd: float = 0.06

    hours_gamma: float = 0.0
    log_hours_mean: float = float(np.log(1_650.0))
    hours_person_sd: float = 0.15
    hours_noise_sd: float = 0.04
    work_days_mean: float = 225.0
    work_days_noise_sd: float = 0.03
    daily_hours_start_year: int = 1985

    attrition_hazard: float = 0.0032
    employment_exit_hazard: float = 0.08
    ui_rate: float = 0.03

    promo_base: float = 0.04
    promo_gain: float = 1.2
    jjt_base: float = 0.10
    jjt_gain: float = 0.8

    single_share: float = 0.05
    wife_no_li_share: float = 0.04
    nonemployed_86_share: float = 0.03
    age_min: int = 25
    age_max: int = 59
    occ_rank_shares: tuple[float, ...] = OCC_RANK_SHARES
    # optional municipal regional-rate override applied to every record
    regional_rate: float | None = None

    def __post_init__(self) -> None:
        if self.n_individuals <= 0:
            raise DgpError("n_individuals must be positive")
        if not (self.start_year <= 1986 < self.end_year <= 1993 and self.start_year >= 1981):
            raise DgpError("years must satisfy 1981 <= start <= 1986 < end <= 1993")
        for name in ("attrition_hazard", "employment_exit_hazard", "ui_rate",
                     "single_share", "wife_no_li_share", "nonemployed_86_share"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise DgpError(f"{name} must lie in [0, 1), got {value}")
        for name in ("own_li_sd", "taxable86_sd", "deductions_sd", "wife_li_sigma",
                     "income_drift_sd", "wage_person_sd", "year_effect_sd",
                     "measurement_noise_sd", "hours_person_sd", "hours_noise_sd",
                     "work_days_noise_sd"):
            if getattr(self, name) < 0:
                raise DgpError(f"{name} must be non-negative")
        if not -1.0 < self.income_drift_rho < 1.0:
            raise DgpError("income_drift_rho must lie in (-1, 1)")
        if not np.isfinite(self.gamma):
            raise DgpError("gamma must be finite")
        if abs(sum(self.occ_rank_shares) - 1.0) > 1e-9 or len(self.occ_rank_shares) != 6:
            raise DgpError("occ_rank_shares must be six probabilities summing to 1")

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.end_year + 1)

    @property
    def post_years(self) -> np.ndarray:
        return np.arange(REFORM_YEAR, self.end_year + 1)

    @property
    def mean_exposure(self) -> float:
        """Average number of post-reform years a post-reform observation
        has been exposed to the new tax rates (4.0 for 1987-1993)."""
        return float(np.mean(self.post_years - (REFORM_YEAR - 1)))

    @classmethod
    def for_elasticity(cls, eps_star: float, **kwargs) -> "DgpConfig":
        """Config whose implied long-run elasticity equals ``eps_star``."""
        probe = cls(gamma=0.0, **kwargs)
        return replace(probe, gamma=eps_star / probe.mean_exposure)


def true_elasticity(cfg: DgpConfig) -> float:
    """Long-run elasticity implied by the per-year response.

    The cumulative response after k post-reform years is gamma * k per
    unit of log net-of-tax contrast; averaging over the post-reform
    window gives gamma * mean_exposure.
    """
    return cfg.gamma * cfg.mean_exposure


def system_for_year(year: int, cfg: DgpConfig) -> TaxSystem:
    """Tax system the synthetic economy faces in a given year."""
    if year < REFORM_YEAR:
        return SYSTEM_1986
    return deflate_system(SYSTEM_1987, cfg.deflation_factor)


def _ar1_anchored(rng: np.random.Generator, n: int, t_anchor: int, n_periods: int,
                  sd: float, rho: float) -> np.ndarray:
    """AR(1) deviations anchored at zero in the anchor period.

    The first step away from the anchor draws the full stationary sd and
    subsequent steps use stationary transitions, so every non-anchor year
    has marginal sd ``sd``.  Keeping the variance path flat keeps the
    post-reform bracket-compliance gap stable across years, which is what
    makes the implied long-run elasticity recoverable without bias.
    """
    dev = np.zeros((n, n_periods))
    innov_sd = sd * np.sqrt(1.0 - rho**2)
    for t in range(t_anchor + 1, n_periods):
        step_sd = sd if t == t_anchor + 1 else innov_sd
        dev[:, t] = rho * dev[:, t - 1] + step_sd * rng.standard_normal(n)
    for t in range(t_anchor - 1, -1, -1):
        step_sd = sd if t == t_anchor - 1 else innov_sd
        dev[:, t] = rho * dev[:, t + 1] + step_sd * rng.standard_normal(n)
    return dev


def generate_panel(cfg: DgpConfig) -> pd.DataFrame:
    """Simulate the household panel; deterministic given the seed.

    Output is a long frame in the canonical panel schema, sorted by
    (id, year).  Attrited person-years are absent entirely; non-employed
    person-years keep the row with job outcomes missing.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_individuals
    years = cfg.years
    n_years = len(years)
    i86 = int(np.where(years == 1986)[0][0])

    # --- person-level draws -------------------------------------------------
    li86 = np.maximum(rng.normal(cfg.own_li_mean, cfg.own_li_sd, n), cfg.own_li_floor)
    d86 = np.abs(rng.normal(cfg.deductions_mean, cfg.deductions_sd, n))
    taxable86 = rng.normal(cfg.taxable86_mean, cfg.taxable86_sd, n)
    ci86 = taxable86 + d86 - li86

    married = rng.random(n) >= cfg.single_share
    wife_li86 = np.exp(rng.normal(np.log(cfg.wife_li_median), cfg.wife_li_sigma, n))
    wife_li86[rng.random(n) < cfg.wife_no_li_share] = 0.0
    wife_ci86 = rng.normal(cfg.wife_ci_mean, cfg.wife_ci_sd, n)
    wife_d86 = np.abs(rng.normal(cfg.wife_d_mean, cfg.wife_d_sd, n))

    age86 = rng.integers(cfg.age_min, cfg.age_max + 1, n)
    education = rng.choice(3, size=n, p=[0.37, 0.57, 0.06])
    n_children = np.minimum(rng.poisson(1.4, n), 6)
    full_time = rng.random(n) < 0.47
    private_sector = rng.random(n) < 0.70
    employed86 = rng.random(n) >= cfg.nonemployed_86_share

    a_i = rng.normal(cfg.wage_base_log, cfg.wage_person_sd, n)
    h_i = rng.normal(cfg.log_hours_mean, cfg.hours_person_sd, n)

    # --- income paths -------------------------------------------------------
    own_dev = _ar1_anchored(rng, n, i86, n_years, cfg.income_drift_sd, cfg.income_drift_rho)
    wife_dev = _ar1_anchored(rng, n, i86, n_years, cfg.income_drift_sd, cfg.income_drift_rho)
    li = li86[:, None] * np.exp(own_dev)
    wife_li = wife_li86[:, None] * np.exp(wife_dev)

    # --- tax rates and the structural response ------------------------------
    tau = np.empty((n, n_years))
    for t, year in enumerate(years):
        rec = IncomeRecord(
            li=li[:, t], ci=ci86, d=d86,
            li_w=wife_li[:, t], ci_w=wife_ci86, d_w=wife_d86,
            married=married, regional_rate=cfg.regional_rate,
        )
        tau[:, t] = effective_mtr(rec, system_for_year(int(year), cfg))
    if np.any(tau >= 1.0):
        raise DgpError("configuration produces marginal tax rates at or above 100%")
    log_net = np.log1p(-tau)

    cum_response = np.zeros((n, n_years))
    for t, year in enumerate(years):
        if year >= REFORM_YEAR:
            cum_response[:, t] = cum_response[:, t - 1] + log_net[:, t]

    year_noise = rng.normal(0.0, cfg.year_effect_sd, n_years)
    year_noise[i86] = 0.0
    g_t = (
        cfg.wage_trend * (years - 1986)
        + year_noise
        - cfg.gamma * cum_response.mean(axis=0)
    )

    log_wage = (
        a_i[:, None]
        + g_t[None, :]
        + cfg.gamma * cum_response
        + rng.normal(0.0, cfg.measurement_noise_sd, (n, n_years))
    )
    log_hours = (
        h_i[:, None]
        + rng.normal(0.0, cfg.hours_noise_sd, (n, n_years))
        + cfg.hours_gamma * cum_response
    )
    hours_annual = np.exp(log_hours)
    earn_nov = np.exp(log_wage + log_hours)
    work_days = cfg.work_days_mean * np.exp(
        rng.normal(0.0, cfg.work_days_noise_sd, (n, n_years))
    )
    hours_daily = hours_annual / work_days

    # --- promotions and job changes on latent wage growth -------------------
    increment = np.where(years[None, :] >= REFORM_YEAR, cfg.gamma * log_net, 0.0)
    centered = increment - increment.mean(axis=0, keepdims=True)

    occ_rank = np.empty((n, n_years), dtype=np.int64)
    occ_rank[:, 0] = rng.choice(6, size=n, p=list(cfg.occ_rank_shares))
    workplace = np.empty((n, n_years), dtype=np.int64)
    workplace[:, 0] = rng.integers(0, 10 * n, n)
    for t in range(1, n_years):
        p_promo = np.clip(cfg.promo_base + cfg.promo_gain * centered[:, t], 0.0, 1.0)
        occ_rank[:, t] = np.minimum(occ_rank[:, t - 1] + (rng.random(n) < p_promo), 5)
        p_move = np.clip(cfg.jjt_base + cfg.jjt_gain * centered[:, t], 0.0, 1.0)
        moves = rng.random(n) < p_move
        workplace[:, t] = np.where(moves, rng.integers(0, 10 * n, n), workplace[:, t - 1])

    ui_benefit = rng.random((n, n_years)) < cfg.ui_rate

    # --- employment and attrition -------------------------------------------
    employed = rng.random((n, n_years)) >= cfg.employment_exit_hazard
    employed[:, i86] = employed86
    attrition_draws = rng.random((n, n_years)) < cfg.attrition_hazard
    attrition_draws[:, : i86 + 1] = False
    attrited = np.cumsum(attrition_draws, axis=1) > 0

    # --- assemble the long frame ---------------------------------------------
    ids = np.arange(n)
    frame = pd.DataFrame(
        {
            "id": np.repeat(ids, n_years),
            "year": np.tile(years, n),
            "employed": employed.ravel(),
            "married": np.repeat(married, n_years).astype(float),
            "age": (age86[:, None] + (years - 1986)[None, :]).ravel(),
            "n_children": np.repeat(n_children, n_years).astype(float),
            "education": np.repeat(education, n_years).astype(float),
            "full_time": np.repeat(full_time, n_years).astype(float),
            "private_sector": np.repeat(private_sector, n_years).astype(float),
            "ui_benefit": ui_benefit.ravel().astype(float),
            "li": li.ravel(),
            "ci": np.repeat(ci86, n_years),
            "d": np.repeat(d86, n_years),
            "li_w": wife_li.ravel(),
            "ci_w": np.repeat(wife_ci86, n_years),
            "d_w": np.repeat(wife_d86, n_years),
            "log_wage": log_wage.ravel(),
            "earn_nov": earn_nov.ravel(),
            "hours_daily": hours_daily.ravel(),
            "hours_annual": hours_annual.ravel(),
            "occ_rank": occ_rank.ravel().astype(float),
            "workplace_id": workplace.ravel().astype(float),
        }
    )

    single = frame["married"] == 0.0
    frame.loc[single, ["li_w", "ci_w", "d_w"]] = np.nan
    not_working = ~frame["employed"].to_numpy()
    frame.loc[not_working, ["log_wage", "earn_nov", "hours_daily", "hours_annual",
                            "occ_rank", "workplace_id"]] = np.nan
    frame.loc[frame["year"] < cfg.daily_hours_start_year, "hours_daily"] = np.nan
    frame = frame[~attrited.ravel()]

    return frame[PANEL_COLUMNS].reset_index(drop=True)


def mechanical_changes(
    cfg: DgpConfig, panel: pd.DataFrame, ids: Iterable[int]
) -> pd.Series:
    """Per-person mechanical log net-of-tax change at frozen 1986 income,
    under the synthetic economy's system pair."""
    from taxdid.design import mechanical_changes as design_mechanical_changes

    return design_mechanical_changes(
        panel,
        np.asarray(list(ids)),
        SYSTEM_1986,
        deflate_system(SYSTEM_1987, cfg.deflation_factor),
    )
