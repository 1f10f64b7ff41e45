"""End-to-end pipeline: acquire a panel (synthetic or file), assign the
design, produce balance tables, estimate every configured outcome, run
the identification diagnostics, and write a deterministic output bundle.

Each stage is a function from frames to frames so the CLI can re-run
stages independently from the prior stage's CSVs.  Every artifact is a
UTF-8 CSV with documented headers plus a ``manifest.json`` recording the
resolved configuration, its hash, and library versions.  The same
configuration and seed produce a byte-identical bundle.
"""

from __future__ import annotations

import json
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from taxdid import __version__
from taxdid.config import PipelineConfig, robustness_bounds
from taxdid.design import (
    Group,
    GroupBounds,
    PlaceboStatus,
    Status,
    arm_ids,
    assign_placebo,
    assign_treatment,
    balance_table,
    mechanical_changes,
    placebo_ids,
    select_sample,
    stratify_income,
    validate_assignments,
)
from taxdid.diagnose import (
    bracket_share_series,
    build_outcomes,
    bunching_histogram,
    composition_series,
    employment_series,
    kernel_density,
)
from taxdid.estimate import (
    ElasticityResult,
    EventStudyResult,
    TotResult,
    elasticity,
    event_study,
    tot_iv,
)
from taxdid.panel import (
    default_deflator,
    load_deflator,
    load_panel,
    quasi_balance,
    unit_deflator,
    write_panel,
)
from taxdid.synth import generate_panel
from taxdid.tax import (
    BracketLocation,
    IncomeRecord,
    SYSTEM_1986,
    SYSTEM_1987,
    TaxSystem,
    bracket_location,
    deflate_system,
    mtr_schedule,
)

BRACKET_YEARS = (1984, 1993)


@dataclass(frozen=True)
class OutcomeSpec:
    """How one outcome is estimated and reported."""

    key: str
    column: str
    kind: str  # elasticity | semi_elasticity | event_study_only
    start_year: int


OUTCOME_SPECS = {
    spec.key: spec
    for spec in [
        OutcomeSpec("hourly_wage", "log_real_wage", "elasticity", 1981),
        OutcomeSpec("annual_earnings", "log_real_earn", "elasticity", 1981),
        OutcomeSpec("daily_hours", "log_hours_daily", "elasticity", 1985),
        OutcomeSpec("annual_hours", "log_hours_annual", "elasticity", 1981),
        OutcomeSpec("employment", "employed", "event_study_only", 1981),
        OutcomeSpec("skilled", "skilled", "semi_elasticity", 1981),
        OutcomeSpec("white_collar", "white_collar", "semi_elasticity", 1981),
        OutcomeSpec("jjt", "jjt_cum", "semi_elasticity", 1982),
    ]
}


class PipelineError(RuntimeError):
    """A stage failure carrying the stage name for the error report."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def resolve_price_basis(cfg: PipelineConfig) -> str:
    """Price level of the panel's monetary values.

    An explicit ``price_basis`` wins; otherwise a ``panel_meta.json``
    sidecar written by ``generate`` is honoured, so stage re-runs on a
    generated (constant-price) panel keep the right convention; the
    fallback is the mode default.
    """
    if cfg.price_basis is not None:
        return cfg.price_basis
    if cfg.panel_path:
        sidecar = Path(cfg.panel_path).parent / "panel_meta.json"
        if sidecar.exists():
            meta = json.loads(sidecar.read_text())
            basis = meta.get("price_basis")
            if basis in ("constant1986", "nominal"):
                return basis
    return "constant1986" if cfg.mode == "synthetic" else "nominal"


def systems_by_year(cfg: PipelineConfig) -> dict[int, TaxSystem]:
    """Per-year tax systems.

    Constant-1986-price panels (the synthetic economy) face the deflated
    1987 system after the reform; nominal panels face the nominal one,
    with the CPI handling price levels in the diagnostics.
    """
    years = range(1981, 1994)
    if resolve_price_basis(cfg) == "constant1986":
        post = deflate_system(SYSTEM_1987, cfg.deflation_factor)
    else:
        post = SYSTEM_1987
    return {y: SYSTEM_1986 if y < 1987 else post for y in years}


def resolve_deflator(cfg: PipelineConfig) -> pd.Series:
    """CPI series for the run.

    Priority: an explicit ``deflator_path``; a ``deflator.csv`` sitting
    next to the panel file (written by ``generate`` so constant-price
    synthetic panels round-trip correctly); then the price-basis default
    (unit for constant-1986 data, the packaged 2%/year series otherwise).
    """
    if cfg.deflator_path:
        return load_deflator(cfg.deflator_path)
    if cfg.panel_path:
        sidecar = Path(cfg.panel_path).parent / "deflator.csv"
        if sidecar.exists():
            return load_deflator(sidecar)
    return unit_deflator() if resolve_price_basis(cfg) == "constant1986" else default_deflator()


def acquire_panel(cfg: PipelineConfig) -> tuple[pd.DataFrame, pd.Series]:
    """Generate or load the panel and resolve the CPI deflator."""
    if cfg.mode == "synthetic":
        panel = generate_panel(cfg.dgp)
    else:
        panel, _ = load_panel(cfg.panel_path)
    return panel, resolve_deflator(cfg)


def write_deflator(cpi: pd.Series, path: str | Path) -> None:
    """Write a (year, index) deflator CSV."""
    frame = cpi.rename("index").reset_index()
    frame.to_csv(path, index=False)


def write_panel_sidecars(cfg: PipelineConfig, cpi: pd.Series, out_dir: Path) -> list[str]:
    """Deflator and price-basis metadata accompanying a written panel."""
    write_deflator(cpi, out_dir / "deflator.csv")
    meta = {"price_basis": resolve_price_basis(cfg)}
    (out_dir / "panel_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return ["deflator.csv", "panel_meta.json"]


def bracket_indicator(
    panel: pd.DataFrame,
    systems: dict[int, TaxSystem],
    years: tuple[int, int] = BRACKET_YEARS,
) -> pd.Series:
    """M indicator (middle-or-top bracket) per person-year with income."""
    rows = panel[panel["year"].between(*years)]
    rows = rows[rows[["li", "ci", "d"]].notna().all(axis=1)]
    parts = []
    for year, sub in rows.groupby("year"):
        regional = None
        if "regional_rate" in sub.columns and sub["regional_rate"].notna().any():
            regional = sub["regional_rate"].to_numpy(dtype=float)
        rec = IncomeRecord(
            li=sub["li"].to_numpy(dtype=float),
            ci=sub["ci"].to_numpy(dtype=float),
            d=sub["d"].to_numpy(dtype=float),
            li_w=np.nan_to_num(sub["li_w"].to_numpy(dtype=float)),
            ci_w=np.nan_to_num(sub["ci_w"].to_numpy(dtype=float)),
            d_w=np.nan_to_num(sub["d_w"].to_numpy(dtype=float)),
            married=(sub["married"] == 1.0).to_numpy(),
            regional_rate=regional,
        )
        loc = bracket_location(rec, systems[int(year)])
        m = (np.asarray(loc) >= int(BracketLocation.MIDDLE)).astype(float)
        parts.append(
            pd.Series(m, index=pd.MultiIndex.from_arrays(
                [sub["id"].to_numpy(), sub["year"].to_numpy()], names=["id", "year"]))
        )
    if not parts:
        return pd.Series(dtype=float,
                         index=pd.MultiIndex.from_arrays([[], []], names=["id", "year"]))
    return pd.concat(parts)


def arm_indicator(treated_ids: np.ndarray, control_ids: np.ndarray) -> pd.Series:
    flags = np.r_[np.ones(len(treated_ids), dtype=bool), np.zeros(len(control_ids), dtype=bool)]
    index = pd.Index(np.r_[treated_ids, control_ids], name="id")
    return pd.Series(flags, index=index, name="treated")


# --- stages ------------------------------------------------------------------


def stage_design(
    panel: pd.DataFrame, cfg: PipelineConfig, bounds: GroupBounds | None = None
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Selection, treatment assignment, stratification, placebo arms."""
    bounds = bounds or GroupBounds(low=cfg.low_bounds, medium=cfg.medium_bounds)
    sys87adj = deflate_system(SYSTEM_1987, cfg.deflation_factor)
    assignments = assign_treatment(panel, SYSTEM_1986, sys87adj, ids=select_sample(panel))
    assignments, bins = stratify_income(assignments, bounds=bounds, trim_range=cfg.trim_range)
    assignments = assign_placebo(assignments)
    validate_assignments(assignments)
    return assignments, bins


def read_assignments(path: str | Path) -> pd.DataFrame:
    """Load an assignments CSV written by a previous design stage."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"assignments file not found: {path}")
    frame = pd.read_csv(path)
    required = {"id", "status", "placebo_status", "group", "b86", "b87_counterfactual"}
    missing = required - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: missing assignment columns {sorted(missing)}")
    return frame.set_index("id")


def stage_balance(panel: pd.DataFrame, assignments: pd.DataFrame) -> dict[str, pd.DataFrame]:
    """Covariate balance tables: arm contrasts per income group, the
    placebo contrast, and the employed-in-86 vs employed-in-93 variant."""
    low_t = arm_ids(assignments, Group.LOW, Status.TREATED)
    low_c = arm_ids(assignments, Group.LOW, Status.CONTROL)
    med_t = arm_ids(assignments, Group.MEDIUM, Status.TREATED)
    med_c = arm_ids(assignments, Group.MEDIUM, Status.CONTROL)
    p_t = placebo_ids(assignments, PlaceboStatus.P_TREATED)
    p_c = placebo_ids(assignments, PlaceboStatus.P_CONTROL)

    tables = {
        "balance_low.csv": balance_table(panel, low_t, low_c),
        "balance_medium.csv": balance_table(panel, med_t, med_c),
        "balance_placebo.csv": balance_table(panel, p_t, p_c),
    }
    employed_93 = set(
        panel.loc[(panel["year"] == 1993) & panel["employed"].astype(bool), "id"]
    )
    variant = []
    for arm, ids in (("treated", low_t), ("control", low_c)):
        ids93 = np.array([i for i in ids if i in employed_93])
        table = balance_table(panel, ids, ids93)
        table.insert(0, "arm", arm)
        variant.append(table)
    tables["balance_employment_low.csv"] = pd.concat(variant, ignore_index=True)
    return tables


def estimate_group_outcome(
    outcomes_frame: pd.DataFrame,
    spec: OutcomeSpec,
    treated: pd.Series,
    brackets: pd.Series,
    mech: pd.Series | None,
    with_tot: bool = True,
) -> tuple[EventStudyResult, TotResult | None, ElasticityResult | None]:
    events = event_study(outcomes_frame, spec.column, treated, start_year=spec.start_year)
    if not with_tot or spec.kind == "event_study_only":
        return events, None, None
    tot = tot_iv(outcomes_frame, spec.column, treated, brackets)
    eps = elasticity(
        tot,
        mech.loc[treated.index[treated]].to_numpy(),
        mech.loc[treated.index[~treated]].to_numpy(),
    )
    return events, tot, eps


def _summary_row(
    group: str, outcome: str, kind: str,
    events: EventStudyResult, tot: TotResult | None, eps: ElasticityResult | None,
) -> dict:
    row = {
        "group": group,
        "outcome": outcome,
        "kind": kind,
        "n_obs": events.n_obs,
        "n_clusters": events.n_clusters,
    }
    if tot is not None:
        row.update(
            first_stage=tot.first_stage, first_stage_se=tot.first_stage_se,
            f_stat=tot.f_stat, f_above_benchmark=tot.f_above_benchmark,
            tot=tot.beta, tot_se=tot.se, reduced_form=tot.reduced_form,
        )
    if eps is not None:
        row.update(
            epsilon=eps.epsilon, epsilon_se=eps.se,
            mech_treated=eps.mech_treated_mean, mech_control=eps.mech_control_mean,
            mech_treated_sd=eps.mech_treated_sd, mech_control_sd=eps.mech_control_sd,
        )
    return row


def stage_estimate(
    panel: pd.DataFrame,
    cpi: pd.Series,
    assignments: pd.DataFrame,
    cfg: PipelineConfig,
) -> tuple[dict[str, pd.DataFrame], pd.DataFrame]:
    """Event studies and the elasticity summary for every configured
    outcome: all outcomes for the low-income group, hourly wages for the
    medium-income and placebo groups, plus the optional robustness sweep
    over alternative low-income bounds."""
    low_t = arm_ids(assignments, Group.LOW, Status.TREATED)
    low_c = arm_ids(assignments, Group.LOW, Status.CONTROL)
    med_t = arm_ids(assignments, Group.MEDIUM, Status.TREATED)
    med_c = arm_ids(assignments, Group.MEDIUM, Status.CONTROL)
    p_t = placebo_ids(assignments, PlaceboStatus.P_TREATED)
    p_c = placebo_ids(assignments, PlaceboStatus.P_CONTROL)

    systems = systems_by_year(cfg)
    brackets = bracket_indicator(panel, systems)
    sys87adj = deflate_system(SYSTEM_1987, cfg.deflation_factor)
    designed = assignments.index[assignments["status"] != Status.EXCLUDED.value].to_numpy()
    mech = mechanical_changes(panel, designed, SYSTEM_1986, sys87adj)

    sample_ids = np.unique(np.r_[low_t, low_c, med_t, med_c])
    outcomes_frame = build_outcomes(quasi_balance(panel, ids=sample_ids), cpi)

    event_frames: dict[str, pd.DataFrame] = {}
    summary_rows: list[dict] = []
    plans = [("low", arm_indicator(low_t, low_c), list(cfg.outcomes), True)]
    if len(med_t) >= 2 and len(med_c) >= 2:
        plans.append(("medium", arm_indicator(med_t, med_c), ["hourly_wage"], True))
    if len(p_t) >= 2 and len(p_c) >= 2:
        plans.append(("placebo", arm_indicator(p_t, p_c), ["hourly_wage"], False))

    for group_name, treated, outcome_keys, with_tot in plans:
        for key in outcome_keys:
            spec = OUTCOME_SPECS[key]
            events, tot, eps = estimate_group_outcome(
                outcomes_frame, spec, treated, brackets, mech, with_tot=with_tot
            )
            event_frames[f"eventstudy_{key}_{group_name}.csv"] = events.to_frame()
            summary_rows.append(_summary_row(group_name, key, spec.kind, events, tot, eps))

    if cfg.robustness_sweep:
        for label, low in robustness_bounds(cfg):
            # only the low group is re-estimated; shift the medium lower
            # bound out of the way when the variant widens past it
            med_lo = max(low[1], cfg.medium_bounds[0])
            variant_bounds = GroupBounds(low=low, medium=(med_lo, cfg.medium_bounds[1]))
            var_assign, _ = stage_design(panel, cfg, bounds=variant_bounds)
            treated = arm_indicator(
                arm_ids(var_assign, Group.LOW, Status.TREATED),
                arm_ids(var_assign, Group.LOW, Status.CONTROL),
            )
            var_outcomes = build_outcomes(
                quasi_balance(panel, ids=treated.index.to_numpy()), cpi
            )
            var_mech = mechanical_changes(panel, treated.index.to_numpy(),
                                          SYSTEM_1986, sys87adj)
            spec = OUTCOME_SPECS["hourly_wage"]
            events, tot, eps = estimate_group_outcome(
                var_outcomes, spec, treated, brackets, var_mech
            )
            summary_rows.append(_summary_row(label, "hourly_wage", spec.kind, events, tot, eps))

    return event_frames, pd.DataFrame(summary_rows)


def _density_frame(values_by_arm: dict[str, np.ndarray], n_grid: int = 257) -> pd.DataFrame:
    pooled = np.concatenate(list(values_by_arm.values()))
    grid = np.linspace(pooled.min(), pooled.max(), n_grid)
    out = []
    for arm, values in values_by_arm.items():
        out.append(pd.DataFrame(
            {"arm": arm, "x": grid, "density": kernel_density(values, grid)}
        ))
    return pd.concat(out, ignore_index=True)


def stage_diagnose(
    panel: pd.DataFrame,
    cpi: pd.Series,
    assignments: pd.DataFrame,
    cfg: PipelineConfig,
) -> dict[str, pd.DataFrame]:
    """Identification diagnostics for the low-income group: income
    densities, employment/composition series, bracket shares, the
    bunching histogram, and the statutory MTR schedules."""
    low_t = arm_ids(assignments, Group.LOW, Status.TREATED)
    low_c = arm_ids(assignments, Group.LOW, Status.CONTROL)
    systems = systems_by_year(cfg)
    base = panel[panel["year"] == 1986].set_index("id")

    frames: dict[str, pd.DataFrame] = {}
    frames["diag_density_li86.csv"] = _density_frame({
        "treated": base.loc[low_t, "li"].to_numpy(dtype=float),
        "control": base.loc[low_c, "li"].to_numpy(dtype=float),
    })
    frames["diag_density_wife_li86.csv"] = _density_frame({
        "treated": base.loc[low_t, "li_w"].to_numpy(dtype=float),
        "control": base.loc[low_c, "li_w"].to_numpy(dtype=float),
    })

    arms = {"treated": low_t, "control": low_c}
    balanced_low = quasi_balance(panel, ids=np.r_[low_t, low_c])
    frames["diag_employment.csv"] = employment_series(balanced_low, arms)
    frames["diag_composition.csv"] = composition_series(balanced_low, arms)
    frames["diag_bracket_shares.csv"] = bracket_share_series(panel, systems, arms)
    frames["diag_bunching.csv"] = bunching_histogram(
        panel, systems, cpi, np.r_[low_t, low_c]
    )

    grid = np.arange(0.0, 400_001.0, 500.0)
    mtr_rows = [
        {"system": sys.year, "li": li, "mtr": rate}
        for sys in (SYSTEM_1986, SYSTEM_1987)
        for li, rate in mtr_schedule(sys, grid)
    ]
    frames["diag_mtr_schedule.csv"] = pd.DataFrame(mtr_rows)
    return frames


def pipeline_elasticity(
    cfg: PipelineConfig,
    outcome: str = "hourly_wage",
    group: Group = Group.LOW,
    with_event_study: bool = False,
):
    """The pipeline's estimation path for one outcome and group, without
    writing files.  Returns (elasticity, tot, event-study-or-None)."""
    panel, cpi = acquire_panel(cfg)
    assignments, _ = stage_design(panel, cfg)
    spec = OUTCOME_SPECS[outcome]
    treated = arm_indicator(
        arm_ids(assignments, group, Status.TREATED),
        arm_ids(assignments, group, Status.CONTROL),
    )
    outcomes_frame = build_outcomes(quasi_balance(panel, ids=treated.index.to_numpy()), cpi)
    brackets = bracket_indicator(panel, systems_by_year(cfg))
    mech = mechanical_changes(
        panel, treated.index.to_numpy(), SYSTEM_1986,
        deflate_system(SYSTEM_1987, cfg.deflation_factor),
    )
    events, tot, eps = estimate_group_outcome(outcomes_frame, spec, treated, brackets, mech)
    return eps, tot, (events if with_event_study else None)


# --- full run ------------------------------------------------------------------


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage and write the output bundle; returns the manifest."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    completed: list[str] = []
    outputs: list[str] = []
    counts: dict[str, int] = {}

    def write_csv(name: str, frame: pd.DataFrame) -> None:
        frame.to_csv(out_dir / name, index=False)
        outputs.append(name)

    def manifest_dict() -> dict:
        return {
            "config": cfg.to_dict(),
            "config_sha256": cfg.config_hash(),
            "versions": {
                "taxdid": __version__,
                "numpy": np.__version__,
                "pandas": pd.__version__,
                "python": platform.python_version(),
            },
            "counts": counts,
            "completed_stages": completed,
            "outputs": sorted(outputs),
        }

    def fail(stage: str, exc: Exception) -> PipelineError:
        report = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
        (out_dir / "error.json").write_text(json.dumps(report, indent=2, sort_keys=True))
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest_dict(), indent=2, sort_keys=True)
        )
        return PipelineError(stage, f"[{stage}] {type(exc).__name__}: {exc}")

    try:
        panel, cpi = acquire_panel(cfg)
        if cfg.mode == "synthetic":
            write_panel(panel, out_dir / "panel.csv")
            outputs.append("panel.csv")
            outputs.extend(write_panel_sidecars(cfg, cpi, out_dir))
        counts["panel_rows"] = len(panel)
        counts["individuals"] = int(panel["id"].nunique())
        completed.append("panel")
    except Exception as exc:
        raise fail("panel", exc) from exc

    try:
        assignments, bins = stage_design(panel, cfg)
        write_csv("assignments.csv", assignments.reset_index())
        write_csv("propensity_bins.csv", bins)
        counts["sample"] = len(assignments)
        for status in Status:
            counts[status.value] = int((assignments["status"] == status.value).sum())
        for group, status, key in (
            (Group.LOW, Status.TREATED, "low_treated"),
            (Group.LOW, Status.CONTROL, "low_control"),
            (Group.MEDIUM, Status.TREATED, "medium_treated"),
            (Group.MEDIUM, Status.CONTROL, "medium_control"),
        ):
            counts[key] = len(arm_ids(assignments, group, status))
        completed.append("design")
    except Exception as exc:
        raise fail("design", exc) from exc

    try:
        for name, table in stage_balance(panel, assignments).items():
            write_csv(name, table)
        completed.append("balance")
    except Exception as exc:
        raise fail("balance", exc) from exc

    try:
        event_frames, summary = stage_estimate(panel, cpi, assignments, cfg)
        for name, frame in event_frames.items():
            write_csv(name, frame)
        write_csv("elasticity_summary.csv", summary)
        completed.append("estimate")
    except Exception as exc:
        raise fail("estimate", exc) from exc

    try:
        for name, frame in stage_diagnose(panel, cpi, assignments, cfg).items():
            write_csv(name, frame)
        completed.append("diagnose")
    except Exception as exc:
        raise fail("diagnose", exc) from exc

    manifest = manifest_dict()
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
