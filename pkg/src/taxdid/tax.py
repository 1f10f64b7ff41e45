"""Danish income-tax evaluation for the 1986 and 1987 systems.

Implements the two-tier (regional + three national brackets) schedule,
the 1987 joint-taxation transfer of unused middle-bracket allowances
between spouses, effective marginal tax rates via a DKK 100 finite
difference, and the mechanical net-of-tax-rate change between a baseline
system and an inflation-adjusted counterfactual.

All operations are pure and accept either scalar income fields or numpy
arrays of equal length (column-wise evaluation of many records at once).
Amounts are DKK per year; rates are fractions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

Number = Union[float, np.ndarray]

# Effective-MTR finite-difference increment, DKK.
MTR_INCREMENT = 100.0

# Statutory inflation adjustment used to bring the 1987 system to 1986
# price levels when constructing the counterfactual bracket assignment.
DEFAULT_DEFLATION_FACTOR = 1.02


class BaseRule(enum.Enum):
    """How a bracket's taxable base is formed from (LI, CI, D)."""

    TAXABLE = "taxable"                  # LI + CI - D
    LI_PLUS_POS_CI = "li_plus_pos_ci"    # LI + max(CI, 0)
    LI_PLUS_CI_OVER_K = "li_plus_ci_over_k"  # LI + max(CI - K, 0)


class BracketLocation(enum.IntEnum):
    """Highest national bracket in which a person is liable."""

    NONE = 0
    BOTTOM = 1
    MIDDLE = 2
    TOP = 3


@dataclass(frozen=True)
class IncomeRecord:
    """One person-year of income concepts feeding the tax schedule.

    Spouse fields must be present iff ``married``.  ``regional_rate``
    optionally overrides the system's average regional rate to model
    municipal variation.  ``personal_income`` and ``stock_income`` are
    carried but enter no base rule.
    """

    li: Number
    ci: Number = 0.0
    d: Number = 0.0
    li_w: Number | None = None
    ci_w: Number | None = None
    d_w: Number | None = None
    married: bool | np.ndarray = False
    regional_rate: Number | None = None
    personal_income: Number | None = None
    stock_income: Number | None = None

    def __post_init__(self) -> None:
        for name in ("li", "ci", "d"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"IncomeRecord.{name} must be finite")
        if np.any(np.asarray(self.d) < 0):
            raise ValueError("deductions d must be non-negative")
        any_married = bool(np.any(self.married))
        spouse = (self.li_w, self.ci_w, self.d_w)
        if any_married and any(v is None for v in spouse):
            raise ValueError("married records require li_w, ci_w and d_w")
        if not any_married and any(v is not None for v in spouse):
            raise ValueError("spouse fields are only valid on married records")
        if self.d_w is not None and np.any(
            np.asarray(self.d_w)[np.asarray(self.married, dtype=bool)] < 0
        ):
            raise ValueError("spouse deductions d_w must be non-negative")


@dataclass(frozen=True)
class Bracket:
    """One national bracket: base rule, liability cutoff, rate, joint flag.

    ``threshold`` is the K in the LI + max(CI - K, 0) base rule and is
    ignored by the other rules.
    """

    base: BaseRule
    cutoff: float
    rate: float
    joint: bool = False
    threshold: float = 0.0


@dataclass(frozen=True)
class TaxSystem:
    """Complete parameterization of one year's tax law."""

    year: str
    regional_rate: float
    regional_cutoff: float
    bottom: Bracket
    middle: Bracket
    top: Bracket
    ceiling: float

    def __post_init__(self) -> None:
        if not self.bottom.cutoff < self.middle.cutoff < self.top.cutoff:
            raise ValueError("bracket cutoffs must be strictly increasing")
        for rate in (self.regional_rate, self.bottom.rate, self.middle.rate, self.top.rate):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"rates must lie in [0, 1), got {rate}")
        if not 0.0 < self.ceiling <= 1.0:
            raise ValueError("ceiling must lie in (0, 1]")

    @property
    def brackets(self) -> tuple[Bracket, Bracket, Bracket]:
        return (self.bottom, self.middle, self.top)


# Built-in parameterizations.  The 1986 combined top rate (0.28 + 0.199 +
# 0.144 + 0.108 = 0.731) exceeds the 73.0% marginal ceiling, so the top
# rate is effectively reduced by 0.1pp; 1987's combined top rate is 69.0%
# and the ceiling never binds at the average regional rate.
SYSTEM_1986 = TaxSystem(
    year="1986",
    regional_rate=0.280,
    regional_cutoff=20_700.0,
    bottom=Bracket(BaseRule.TAXABLE, 23_200.0, 0.199),
    middle=Bracket(BaseRule.TAXABLE, 113_400.0, 0.144),
    top=Bracket(BaseRule.TAXABLE, 186_100.0, 0.108),
    ceiling=0.730,
)

SYSTEM_1987 = TaxSystem(
    year="1987",
    regional_rate=0.290,
    regional_cutoff=21_200.0,
    bottom=Bracket(BaseRule.TAXABLE, 27_100.0, 0.220),
    middle=Bracket(BaseRule.LI_PLUS_POS_CI, 130_000.0, 0.060, joint=True),
    top=Bracket(BaseRule.LI_PLUS_CI_OVER_K, 200_000.0, 0.120, threshold=60_000.0),
    ceiling=0.730,
)

BUILTIN_SYSTEMS = {"1986": SYSTEM_1986, "1987": SYSTEM_1987}


@dataclass(frozen=True)
class TaxBases:
    """Per-bracket taxable bases for one record (no joint adjustment)."""

    regional: Number
    bottom: Number
    middle: Number
    top: Number


def _is_scalar(rec: IncomeRecord) -> bool:
    return np.ndim(rec.li) == 0


def _bracket_base(bracket: Bracket, li: Number, ci: Number, d: Number) -> Number:
    if bracket.base is BaseRule.TAXABLE:
        return li + ci - d
    if bracket.base is BaseRule.LI_PLUS_POS_CI:
        return li + np.maximum(ci, 0.0)
    return li + np.maximum(ci - bracket.threshold, 0.0)


def _spouse_fields(rec: IncomeRecord) -> tuple[Number, Number, Number]:
    # Spouse entries are only read under a married mask, so zero-filled
    # placeholders are safe for unmarried rows.
    if rec.li_w is None:
        zeros = np.zeros_like(np.asarray(rec.li, dtype=float))
        return zeros, zeros, zeros
    return rec.li_w, rec.ci_w, rec.d_w


def taxable_bases(rec: IncomeRecord, sys: TaxSystem) -> TaxBases:
    """Regional and per-bracket own bases, before any joint adjustment."""
    regional = rec.li + rec.ci - rec.d
    return TaxBases(
        regional=regional,
        bottom=_bracket_base(sys.bottom, rec.li, rec.ci, rec.d),
        middle=_bracket_base(sys.middle, rec.li, rec.ci, rec.d),
        top=_bracket_base(sys.top, rec.li, rec.ci, rec.d),
    )


def joint_middle_transfer(rec: IncomeRecord, sys: TaxSystem) -> Number:
    """Own middle-bracket base after the spousal allowance transfer.

    When the middle bracket is jointly taxed and the spouse is not liable
    for middle taxes, the spouse's unused allowance (cutoff minus spouse
    base) reduces the own base, floored at zero.  Otherwise the own base
    is returned unchanged.
    """
    own = _bracket_base(sys.middle, rec.li, rec.ci, rec.d)
    if not sys.middle.joint or not np.any(rec.married):
        return own
    li_w, ci_w, d_w = _spouse_fields(rec)
    spouse = _bracket_base(sys.middle, li_w, ci_w, d_w)
    allowance = np.maximum(sys.middle.cutoff - spouse, 0.0)
    married = np.asarray(rec.married, dtype=bool)
    adjusted = np.where(married, np.maximum(own - allowance, 0.0), own)
    return float(adjusted) if _is_scalar(rec) else adjusted


def _adjusted_bases(rec: IncomeRecord, sys: TaxSystem) -> TaxBases:
    """Bases with the joint transfer applied to jointly-taxed brackets.

    Only the middle bracket carries the joint flag in the built-in
    systems; the helper honours the flag wherever it is set.
    """
    bases = taxable_bases(rec, sys)
    middle = joint_middle_transfer(rec, sys) if sys.middle.joint else bases.middle
    return TaxBases(bases.regional, bases.bottom, middle, bases.top)


def _regional_rate(rec: IncomeRecord, sys: TaxSystem) -> Number:
    if rec.regional_rate is None:
        return sys.regional_rate
    return np.where(np.isnan(rec.regional_rate), sys.regional_rate, rec.regional_rate) \
        if np.ndim(rec.regional_rate) > 0 else rec.regional_rate


def _capped_top_rate(sys: TaxSystem, regional_rate: Number) -> Number:
    # The marginal-tax ceiling is implemented as a downward adjustment of
    # the top national rate so the combined statutory marginal rate in the
    # top bracket does not exceed the ceiling.
    headroom = sys.ceiling - regional_rate - sys.bottom.rate - sys.middle.rate
    return np.clip(np.minimum(sys.top.rate, headroom), 0.0, None)


def tax_liability(rec: IncomeRecord, sys: TaxSystem) -> Number:
    """Total regional + national liability in DKK (non-negative).

    Liability in a bracket requires the (joint-adjusted) base to strictly
    exceed the cutoff; the excess is taxed at the bracket rate, with the
    top rate capped by the marginal ceiling.
    """
    bases = _adjusted_bases(rec, sys)
    reg_rate = _regional_rate(rec, sys)
    total = reg_rate * np.maximum(bases.regional - sys.regional_cutoff, 0.0)
    total = total + sys.bottom.rate * np.maximum(bases.bottom - sys.bottom.cutoff, 0.0)
    total = total + sys.middle.rate * np.maximum(bases.middle - sys.middle.cutoff, 0.0)
    top_rate = _capped_top_rate(sys, reg_rate)
    total = total + top_rate * np.maximum(bases.top - sys.top.cutoff, 0.0)
    return float(total) if _is_scalar(rec) else total


def bracket_location(rec: IncomeRecord, sys: TaxSystem) -> BracketLocation | np.ndarray:
    """Highest national bracket with (joint-adjusted) base above its cutoff.

    Returns a ``BracketLocation`` for a scalar record, or an integer array
    of ``BracketLocation`` values for column records.
    """
    bases = _adjusted_bases(rec, sys)
    code = np.where(
        np.asarray(bases.top) > sys.top.cutoff,
        int(BracketLocation.TOP),
        np.where(
            np.asarray(bases.middle) > sys.middle.cutoff,
            int(BracketLocation.MIDDLE),
            np.where(
                np.asarray(bases.bottom) > sys.bottom.cutoff,
                int(BracketLocation.BOTTOM),
                int(BracketLocation.NONE),
            ),
        ),
    )
    if _is_scalar(rec):
        return BracketLocation(int(code))
    return code.astype(np.int64)


def liability_components(rec: IncomeRecord, sys: TaxSystem) -> dict[str, Number]:
    """Liability split by tier; cross-checks ``bracket_location``."""
    bases = _adjusted_bases(rec, sys)
    reg_rate = _regional_rate(rec, sys)
    return {
        "regional": reg_rate * np.maximum(bases.regional - sys.regional_cutoff, 0.0),
        "bottom": sys.bottom.rate * np.maximum(bases.bottom - sys.bottom.cutoff, 0.0),
        "middle": sys.middle.rate * np.maximum(bases.middle - sys.middle.cutoff, 0.0),
        "top": _capped_top_rate(sys, reg_rate)
        * np.maximum(bases.top - sys.top.cutoff, 0.0),
    }


def effective_mtr(rec: IncomeRecord, sys: TaxSystem) -> Number:
    """Effective marginal tax rate on labor income.

    Finite difference of the full liability for a DKK 100 increment of
    own labor income, holding everything else (including spouse income)
    fixed.
    """
    bumped = replace(rec, li=rec.li + MTR_INCREMENT)
    return (tax_liability(bumped, sys) - tax_liability(rec, sys)) / MTR_INCREMENT


def statutory_mtr(rec: IncomeRecord, sys: TaxSystem) -> Number:
    """Analytic marginal rate: sum of rates of brackets the record is in.

    Equals ``effective_mtr`` everywhere except within the DKK 100 window
    below a cutoff, where the finite difference straddles the kink.
    """
    bases = _adjusted_bases(rec, sys)
    reg_rate = _regional_rate(rec, sys)
    rate = np.where(np.asarray(bases.regional) > sys.regional_cutoff, reg_rate, 0.0)
    rate = rate + np.where(np.asarray(bases.bottom) > sys.bottom.cutoff, sys.bottom.rate, 0.0)
    rate = rate + np.where(np.asarray(bases.middle) > sys.middle.cutoff, sys.middle.rate, 0.0)
    rate = rate + np.where(
        np.asarray(bases.top) > sys.top.cutoff, _capped_top_rate(sys, reg_rate), 0.0
    )
    return float(rate) if _is_scalar(rec) else rate


def deflate_system(sys: TaxSystem, factor: float = DEFAULT_DEFLATION_FACTOR) -> TaxSystem:
    """Rescale every DKK-denominated parameter to a lower price level.

    Cutoffs and base-rule thresholds are divided by ``factor``; rates are
    unchanged.  ``factor=1.0`` is the identity.
    """
    if not factor > 0:
        raise ValueError(f"deflation factor must be positive, got {factor}")

    def scale(b: Bracket) -> Bracket:
        return replace(b, cutoff=b.cutoff / factor, threshold=b.threshold / factor)

    return replace(
        sys,
        year=f"{sys.year}/adj{factor:g}" if factor != 1.0 else sys.year,
        regional_cutoff=sys.regional_cutoff / factor,
        bottom=scale(sys.bottom),
        middle=scale(sys.middle),
        top=scale(sys.top),
    )


def mechanical_ntr_change(
    rec: IncomeRecord, sys86: TaxSystem, sys87adj: TaxSystem
) -> Number:
    """Reform-induced change in log net-of-tax rate at fixed income.

    log(1 - tau') - log(1 - tau) with both effective rates evaluated on
    the same record: the baseline system and the inflation-adjusted
    post-reform system.
    """
    tau86 = effective_mtr(rec, sys86)
    tau87 = effective_mtr(rec, sys87adj)
    if np.any(np.asarray(tau86) >= 1.0) or np.any(np.asarray(tau87) >= 1.0):
        raise ValueError("effective MTR at or above 100%; net-of-tax rate undefined")
    return np.log1p(-tau87) - np.log1p(-tau86)


def mtr_schedule(sys: TaxSystem, li_grid) -> list[tuple[float, float]]:
    """Marginal-rate step function over a labor-income grid.

    Assumes a single filer with zero capital income and deductions, so the
    jumps land exactly on the bracket cutoffs.  The grid must be sorted
    ascending.
    """
    grid = np.asarray(li_grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise ValueError("li_grid must be one-dimensional and sorted ascending")
    rec = IncomeRecord(li=grid)
    rates = statutory_mtr(rec, sys)
    return list(zip(grid.tolist(), np.asarray(rates).tolist()))


def load_tax_system(path: str | Path) -> TaxSystem:
    """Read a tax system from a plain-text ``key = value`` parameter file.

    Keys mirror the built-in parameter table: ``year``, ``ceiling``,
    ``regional.rate``, ``regional.cutoff`` and, for each of
    ``bottom``/``middle``/``top``: ``<bracket>.base`` (one of ``taxable``,
    ``li_plus_pos_ci``, ``li_plus_ci_over_k``), ``<bracket>.cutoff``,
    ``<bracket>.rate``, optional ``<bracket>.joint`` (true/false) and
    ``<bracket>.threshold``.  Lines starting with ``#`` are comments.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    def bracket(name: str) -> Bracket:
        return Bracket(
            base=BaseRule(values[f"{name}.base"]),
            cutoff=float(values[f"{name}.cutoff"]),
            rate=float(values[f"{name}.rate"]),
            joint=values.get(f"{name}.joint", "false").lower() in ("true", "yes", "1"),
            threshold=float(values.get(f"{name}.threshold", 0.0)),
        )

    try:
        return TaxSystem(
            year=values["year"],
            regional_rate=float(values["regional.rate"]),
            regional_cutoff=float(values["regional.cutoff"]),
            bottom=bracket("bottom"),
            middle=bracket("middle"),
            top=bracket("top"),
            ceiling=float(values["ceiling"]),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing required parameter {exc}") from exc


def save_tax_system(sys: TaxSystem, path: str | Path) -> None:
    """Write a tax system in the parameter-file format of ``load_tax_system``."""
    lines = [
        f"year = {sys.year}",
        f"ceiling = {sys.ceiling!r}",
        f"regional.rate = {sys.regional_rate!r}",
        f"regional.cutoff = {sys.regional_cutoff!r}",
    ]
    for name, b in zip(("bottom", "middle", "top"), sys.brackets):
        lines += [
            f"{name}.base = {b.base.value}",
            f"{name}.cutoff = {b.cutoff!r}",
            f"{name}.rate = {b.rate!r}",
            f"{name}.joint = {str(b.joint).lower()}",
            f"{name}.threshold = {b.threshold!r}",
        ]
    Path(path).write_text("\n".join(lines) + "\n")
