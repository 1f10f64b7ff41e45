"""Pipeline configuration: a single YAML file with nested sections,
resolvable against documented defaults and hashable for run manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from taxdid.design import DEFAULT_LOW_BOUNDS, DEFAULT_MEDIUM_BOUNDS, DEFAULT_TRIM_RANGE
from taxdid.synth import DgpConfig
from taxdid.tax import DEFAULT_DEFLATION_FACTOR

# Outcomes estimated for the low-income group, in reporting order.
DEFAULT_OUTCOMES = [
    "hourly_wage",
    "annual_earnings",
    "daily_hours",
    "annual_hours",
    "employment",
    "skilled",
    "white_collar",
    "jjt",
]

ROBUSTNESS_SHIFT = 5_000.0


class ConfigError(ValueError):
    """Raised for malformed or inconsistent pipeline configuration."""


@dataclass
class PipelineConfig:
    """Resolved configuration for one pipeline run.

    ``mode`` selects the panel source: ``synthetic`` generates from the
    DGP (constant 1986 prices, unit deflator unless overridden);
    ``file`` loads ``panel_path`` and deflates with ``deflator_path``
    (falling back to the packaged CPI table).
    """

    mode: str = "synthetic"
    out_dir: str = "taxdid-out"
    seed: int = 0
    threads: int | None = None
    deflation_factor: float = DEFAULT_DEFLATION_FACTOR
    panel_path: str | None = None
    deflator_path: str | None = None
    # price level of the panel's monetary values: "constant1986" panels
    # face the deflated 1987 system after the reform, "nominal" panels
    # the nominal one.  None = resolve from the panel's sidecar metadata,
    # falling back to the mode default (synthetic -> constant1986).
    price_basis: str | None = None
    low_bounds: tuple[float, float] = DEFAULT_LOW_BOUNDS
    medium_bounds: tuple[float, float] = DEFAULT_MEDIUM_BOUNDS
    trim_range: tuple[float, float] = DEFAULT_TRIM_RANGE
    robustness_sweep: bool = False
    outcomes: list[str] = field(default_factory=lambda: list(DEFAULT_OUTCOMES))
    dgp: DgpConfig = field(default_factory=DgpConfig)

    def __post_init__(self) -> None:
        if self.mode not in ("synthetic", "file"):
            raise ConfigError(f"mode must be 'synthetic' or 'file', got {self.mode!r}")
        if self.mode == "file" and not self.panel_path:
            raise ConfigError("file mode requires panel_path")
        if self.price_basis not in (None, "constant1986", "nominal"):
            raise ConfigError(
                f"price_basis must be 'constant1986' or 'nominal', got {self.price_basis!r}"
            )
        if self.deflation_factor <= 0:
            raise ConfigError("deflation_factor must be positive")
        # one seed knob: the pipeline seed drives the generator
        if self.mode == "synthetic":
            self.dgp = dataclasses.replace(self.dgp, seed=self.seed,
                                           deflation_factor=self.deflation_factor)

    def to_dict(self) -> dict:
        """The scientific configuration: everything that affects results.

        Output location and thread caps are execution details and are
        excluded, keeping manifests byte-identical across run locations.
        """
        raw = dataclasses.asdict(self)
        raw.pop("out_dir")
        raw.pop("threads")
        raw["dgp"] = dataclasses.asdict(self.dgp)
        return raw

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _pair(value, name: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be a [lo, hi] pair")
    return float(value[0]), float(value[1])


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig from a YAML file plus CLI overrides.

    Unknown keys are rejected so typos fail loudly.  Every field not
    present falls back to the documented default.
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data = loaded
    if overrides:
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}

    groups = data.pop("groups", {}) or {}
    dgp_data = data.pop("dgp", {}) or {}

    known = {f.name for f in dataclasses.fields(PipelineConfig)} - {"dgp", "low_bounds", "medium_bounds"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    unknown_groups = set(groups) - {"low", "medium"}
    if unknown_groups:
        raise ConfigError(f"unknown group keys: {sorted(unknown_groups)}")
    dgp_known = {f.name for f in dataclasses.fields(DgpConfig)}
    unknown_dgp = set(dgp_data) - dgp_known
    if unknown_dgp:
        raise ConfigError(f"unknown dgp keys: {sorted(unknown_dgp)}")

    kwargs: dict = dict(data)
    if "trim_range" in kwargs:
        kwargs["trim_range"] = _pair(kwargs["trim_range"], "trim_range")
    if "outcomes" in kwargs:
        kwargs["outcomes"] = list(kwargs["outcomes"])
    if "low" in groups:
        kwargs["low_bounds"] = _pair(groups["low"], "groups.low")
    if "medium" in groups:
        kwargs["medium_bounds"] = _pair(groups["medium"], "groups.medium")
    if "occ_rank_shares" in dgp_data:
        dgp_data["occ_rank_shares"] = tuple(dgp_data["occ_rank_shares"])
    kwargs["dgp"] = DgpConfig(**dgp_data)

    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def robustness_bounds(cfg: PipelineConfig) -> list[tuple[str, tuple[float, float]]]:
    """The four alternative low-income groups: each boundary shifted by
    +/- 5,000 DKK, one at a time."""
    lo, hi = cfg.low_bounds
    return [
        (f"low[{lo - ROBUSTNESS_SHIFT:.0f},{hi:.0f})", (lo - ROBUSTNESS_SHIFT, hi)),
        (f"low[{lo + ROBUSTNESS_SHIFT:.0f},{hi:.0f})", (lo + ROBUSTNESS_SHIFT, hi)),
        (f"low[{lo:.0f},{hi - ROBUSTNESS_SHIFT:.0f})", (lo, hi - ROBUSTNESS_SHIFT)),
        (f"low[{lo:.0f},{hi + ROBUSTNESS_SHIFT:.0f})", (lo, hi + ROBUSTNESS_SHIFT)),
    ]
