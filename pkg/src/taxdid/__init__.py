"""Tax microsimulation and quasi-experimental estimation toolkit.

Encodes the 1986/1987 Danish income-tax systems, assigns treatment from
the joint-taxation reform's mechanical bracket movements, and estimates
dynamic wage/earnings/hours elasticities with event-study, IV and
balance/bunching diagnostics.  A synthetic household-panel generator with
a known data-generating process serves as the end-to-end oracle.
"""

from taxdid.tax import (
    BaseRule,
    Bracket,
    BracketLocation,
    IncomeRecord,
    SYSTEM_1986,
    SYSTEM_1987,
    TaxSystem,
    bracket_location,
    deflate_system,
    effective_mtr,
    joint_middle_transfer,
    load_tax_system,
    mechanical_ntr_change,
    mtr_schedule,
    tax_liability,
    taxable_bases,
)

__version__ = "0.1.0"

__all__ = [
    "BaseRule",
    "Bracket",
    "BracketLocation",
    "IncomeRecord",
    "SYSTEM_1986",
    "SYSTEM_1987",
    "TaxSystem",
    "bracket_location",
    "deflate_system",
    "effective_mtr",
    "joint_middle_transfer",
    "load_tax_system",
    "mechanical_ntr_change",
    "mtr_schedule",
    "tax_liability",
    "taxable_bases",
    "__version__",
]
