"""Brute-force estimation oracles.

Everything here builds explicit dummy matrices and textbook sandwich
formulas with no code shared with the production estimators, so that
agreement is a genuine two-route check.
"""

import numpy as np
import pandas as pd


def explicit_design(sub: pd.DataFrame, outcome: str, treated: pd.Series, ref_year: int):
    """Full dummy design: [id dummies | year dummies | year x treated]."""
    ids = np.array(sorted(sub["id"].unique()))
    years = np.array(sorted(sub["year"].unique()))
    keep_years = years[years != ref_year]

    id_mat = (sub["id"].to_numpy()[:, None] == ids[None, :]).astype(float)
    yr_mat = (sub["year"].to_numpy()[:, None] == keep_years[None, :]).astype(float)
    t_row = treated.reindex(sub["id"]).to_numpy(dtype=float)
    X = np.hstack([id_mat, yr_mat, yr_mat * t_row[:, None]])
    y = sub[outcome].to_numpy(dtype=float)
    codes = np.searchsorted(ids, sub["id"].to_numpy())
    return X, y, codes, len(ids), keep_years


def sandwich(X: np.ndarray, resid: np.ndarray, codes: np.ndarray, n_groups: int,
             n_params: int) -> np.ndarray:
    """Cluster sandwich with factor G/(G-1) * (N-1)/(N-K), direct loop."""
    n = len(resid)
    bread = np.linalg.pinv(X.T @ X)
    meat = np.zeros((X.shape[1], X.shape[1]))
    for g in range(n_groups):
        rows = codes == g
        s = X[rows].T @ resid[rows]
        meat += np.outer(s, s)
    factor = (n_groups / (n_groups - 1)) * ((n - 1) / (n - n_params))
    return factor * bread @ meat @ bread


def dummy_event_study(sub: pd.DataFrame, outcome: str, treated: pd.Series,
                      ref_year: int = 1986):
    """Event study by brute-force OLS on the full dummy matrix."""
    X, y, codes, n_groups, keep_years = explicit_design(sub, outcome, treated, ref_year)
    beta_full, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta_full
    vcov = sandwich(X, resid, codes, n_groups, X.shape[1])
    k = len(keep_years)
    # interaction block sits at the end
    return keep_years, beta_full[-k:], np.sqrt(np.diag(vcov)[-k:])


def dummy_tot_iv(sub: pd.DataFrame, outcome: str, treated: pd.Series,
                 m: np.ndarray, ref_year: int = 1986):
    """Just-identified 2SLS on the full dummy system.

    X = [id dummies | year dummies | Post*M], Z swaps the endogenous
    column for Post*Treated.  Returns (beta, cluster se) for Post*M.
    """
    ids = np.array(sorted(sub["id"].unique()))
    years = np.array(sorted(sub["year"].unique()))
    keep_years = years[years != ref_year]
    id_mat = (sub["id"].to_numpy()[:, None] == ids[None, :]).astype(float)
    yr_mat = (sub["year"].to_numpy()[:, None] == keep_years[None, :]).astype(float)
    post = (sub["year"].to_numpy() >= 1987).astype(float)
    t_row = treated.reindex(sub["id"]).to_numpy(dtype=float)

    X = np.hstack([id_mat, yr_mat, (post * m)[:, None]])
    Z = np.hstack([id_mat, yr_mat, (post * t_row)[:, None]])
    y = sub[outcome].to_numpy(dtype=float)

    beta_full = np.linalg.solve(Z.T @ X, Z.T @ y)
    resid = y - X @ beta_full
    codes = np.searchsorted(ids, sub["id"].to_numpy())

    n, k = X.shape
    n_groups = len(ids)
    zx_inv = np.linalg.inv(Z.T @ X)
    meat = np.zeros((k, k))
    for g in range(n_groups):
        rows = codes == g
        s = Z[rows].T @ resid[rows]
        meat += np.outer(s, s)
    factor = (n_groups / (n_groups - 1)) * ((n - 1) / (n - k))
    vcov = factor * zx_inv @ meat @ zx_inv.T
    return beta_full[-1], float(np.sqrt(vcov[-1, -1]))


def random_toy_panel(rng: np.random.Generator, max_ids: int = 50):
    """Random small panel with both arms populated and no singletons."""
    n_ids = int(rng.integers(4, max_ids + 1))
    n_years = int(rng.integers(4, 14))
    start = int(rng.integers(1981, 1995 - n_years))
    years = np.arange(start, start + n_years)
    ref_year = int(years[rng.integers(0, n_years)])

    treated_flags = rng.random(n_ids) < 0.5
    treated_flags[0] = False
    treated_flags[1] = True

    rows = []
    for pid in range(n_ids):
        # ids 0 and 1 are fully observed so every year has both arms,
        # keeping the year x treated design full rank
        kept = years if pid < 2 else years[rng.random(n_years) > 0.15]
        if len(kept) < 2:
            kept = years[:2]
        for year in kept:
            rows.append({"id": pid, "year": int(year), "y": rng.normal()})
    sub = pd.DataFrame(rows)
    treated = pd.Series(treated_flags, index=pd.Index(range(n_ids), name="id"))
    return sub, treated, ref_year
