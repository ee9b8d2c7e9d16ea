"""Study configuration: a strict, hand-editable INI file.

Unknown sections or keys are errors, so a typo cannot silently change a
study. All keys and defaults:

    [data]
    source = company_panel.csv        ; required, relative to the config file
    format = csv                      ; csv | eurostat
    years = 2015-2022                 ; eurostat study window (blank = all file years)
    eurostat_dimensions = unit=THS_PAS, freq=A
    eurostat_scale = 1.0              ; multiplier applied to raw values
    eurostat_min_outcome =            ; drop countries at/below this (blank = off)

    [study]
    treated_unit = OEBB               ; required
    first_treated_period = 2021       ; required
    outcome_mode = level              ; level | growth_percent
    exclude = DB: reason text; X: why ; semicolon-separated unit: reason pairs
    covariate_transform = none        ; none | growth

    [predictors]
    outcome_periods = 2015-2020       ; blank = all pre-treatment periods
    covariates = gdp_growth, pop_growth
    standardize = true

    [estimation]
    estimators = scm, sdid            ; non-empty subset of scm, sdid, did
    inference = placebo               ; placebo | jackknife | both
    ci_level = 0.95
    seed = 0
    multistarts = 10

    [output]
    dir = out

    [simulate]                        ; only read by the simulate command
    n_donors = 8
    n_pre = 6
    n_post = 2
    n_factors = 2
    noise_sd = 1.0
    true_tau = 5.0
    loading_scale = 1.0
    replications = 200
    estimators = sdid
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, ValidationError

_KNOWN_KEYS = {
    "data": {"source", "format", "years", "eurostat_dimensions", "eurostat_scale",
             "eurostat_min_outcome"},
    "study": {"treated_unit", "first_treated_period", "outcome_mode", "exclude", "covariate_transform"},
    "predictors": {"outcome_periods", "covariates", "standardize"},
    "estimation": {"estimators", "inference", "ci_level", "seed", "multistarts"},
    "output": {"dir"},
    "simulate": {"n_donors", "n_pre", "n_post", "n_factors", "noise_sd", "true_tau",
                 "loading_scale", "replications", "estimators"},
}
_ESTIMATORS = ("scm", "sdid", "did")


@dataclass(frozen=True)
class StudyConfig:
    """Parsed study configuration; paths already resolved."""

    source: Path
    data_format: str
    years: tuple | None
    eurostat_dimensions: dict
    eurostat_scale: float
    eurostat_min_outcome: float | None
    treated_unit: str
    first_treated_period: int
    outcome_mode: str
    excluded_units: tuple  # ((unit, reason), ...)
    covariate_transform: str
    outcome_periods: tuple | None
    covariates: tuple
    standardize: bool
    estimators: tuple
    inference: str
    ci_level: float
    seed: int
    multistarts: int
    output_dir: Path
    config_hash: str
    simulate: dict = field(default_factory=dict)


def _parse_exclusions(raw: str) -> tuple:
    pairs = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ValidationError(
                f"exclusion {chunk!r} must be written as 'unit: reason'"
            )
        unit, reason = chunk.split(":", 1)
        if not unit.strip() or not reason.strip():
            raise ValidationError(f"exclusion {chunk!r} needs both a unit and a reason")
        pairs.append((unit.strip(), reason.strip()))
    return tuple(pairs)


def _parse_list(raw: str) -> tuple:
    return tuple(item.strip() for item in raw.split(",") if item.strip())


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValidationError(f"{key} must be a boolean, got {raw!r}")


def _parse_year_range(raw: str, key: str = "outcome_periods") -> tuple | None:
    raw = raw.strip()
    if not raw:
        return None
    parts = raw.split("-")
    if len(parts) != 2:
        raise ValidationError(f"{key} must look like 2015-2020, got {raw!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValidationError(f"{key} must use integer years, got {raw!r}") from None
    if hi < lo:
        raise ValidationError(f"{key} range {raw!r} is reversed")
    return lo, hi


def _parse_dimensions(raw: str) -> dict:
    dims = {}
    for chunk in _parse_list(raw):
        if "=" not in chunk:
            raise ValidationError(f"eurostat_dimensions entry {chunk!r} must be name=value")
        name, value = chunk.split("=", 1)
        dims[name.strip()] = value.strip()
    return dims


def parse_study_config(path) -> StudyConfig:
    """Parse and validate a study configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    return parse_study_config_text(text, base_dir=path.parent)


def parse_study_config_text(text: str, base_dir) -> StudyConfig:
    base_dir = Path(base_dir)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from exc

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ValidationError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ValidationError(f"unknown key {key!r} in section [{section}]")

    def get(section: str, key: str, default: str | None = None) -> str:
        if parser.has_option(section, key):
            return parser.get(section, key)
        if default is None:
            raise ValidationError(f"config is missing required key {key!r} in [{section}]")
        return default

    source_raw = get("data", "source")
    data_format = get("data", "format", "csv").strip().lower()
    if data_format not in ("csv", "eurostat"):
        raise ValidationError(f"data format must be csv or eurostat, got {data_format!r}")

    outcome_mode = get("study", "outcome_mode", "level").strip()
    if outcome_mode not in ("level", "growth_percent"):
        raise ValidationError(f"outcome_mode must be level or growth_percent, got {outcome_mode!r}")
    covariate_transform = get("study", "covariate_transform", "none").strip()
    if covariate_transform not in ("none", "growth"):
        raise ValidationError(f"covariate_transform must be none or growth, got {covariate_transform!r}")

    try:
        first_treated = int(get("study", "first_treated_period"))
    except ValueError:
        raise ValidationError("first_treated_period must be an integer year") from None

    estimators = tuple(e.lower() for e in _parse_list(get("estimation", "estimators", "scm, sdid")))
    if not estimators:
        raise ValidationError("estimators must not be empty")
    for est in estimators:
        if est not in _ESTIMATORS:
            raise ValidationError(f"unknown estimator {est!r}; choose from {_ESTIMATORS}")

    inference = get("estimation", "inference", "placebo").strip().lower()
    if inference not in ("placebo", "jackknife", "both"):
        raise ValidationError(f"inference must be placebo, jackknife, or both, got {inference!r}")

    try:
        ci_level = float(get("estimation", "ci_level", "0.95"))
    except ValueError:
        raise ValidationError("ci_level must be a number") from None
    if not 0.0 < ci_level < 1.0:
        raise ValidationError(f"ci_level must be in (0, 1), got {ci_level}")

    try:
        seed = int(get("estimation", "seed", "0"))
        multistarts = int(get("estimation", "multistarts", "10"))
    except ValueError:
        raise ValidationError("seed and multistarts must be integers") from None

    min_raw = get("data", "eurostat_min_outcome", "").strip()
    try:
        eurostat_scale = float(get("data", "eurostat_scale", "1.0"))
        eurostat_min = float(min_raw) if min_raw else None
    except ValueError:
        raise ValidationError("eurostat_scale / eurostat_min_outcome must be numeric") from None

    simulate = {}
    if parser.has_section("simulate"):
        sim = parser["simulate"]
        try:
            simulate = {
                "n_donors": int(sim.get("n_donors", "8")),
                "n_pre": int(sim.get("n_pre", "6")),
                "n_post": int(sim.get("n_post", "2")),
                "n_factors": int(sim.get("n_factors", "2")),
                "noise_sd": float(sim.get("noise_sd", "1.0")),
                "true_tau": float(sim.get("true_tau", "5.0")),
                "loading_scale": float(sim.get("loading_scale", "1.0")),
                "replications": int(sim.get("replications", "200")),
                "estimators": _parse_list(sim.get("estimators", "sdid")),
            }
        except ValueError as exc:
            raise ValidationError(f"bad [simulate] value: {exc}") from None

    return StudyConfig(
        source=(base_dir / source_raw).resolve(),
        data_format=data_format,
        years=_parse_year_range(get("data", "years", ""), key="years"),
        eurostat_dimensions=_parse_dimensions(get("data", "eurostat_dimensions", "")),
        eurostat_scale=eurostat_scale,
        eurostat_min_outcome=eurostat_min,
        treated_unit=get("study", "treated_unit").strip(),
        first_treated_period=first_treated,
        outcome_mode=outcome_mode,
        excluded_units=_parse_exclusions(get("study", "exclude", "")),
        covariate_transform=covariate_transform,
        outcome_periods=_parse_year_range(get("predictors", "outcome_periods", "")),
        covariates=_parse_list(get("predictors", "covariates", "")),
        standardize=_parse_bool(get("predictors", "standardize", "true"), "standardize"),
        estimators=estimators,
        inference=inference,
        ci_level=ci_level,
        seed=seed,
        multistarts=multistarts,
        output_dir=(base_dir / get("output", "dir", "out")).resolve(),
        config_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        simulate=simulate,
    )
