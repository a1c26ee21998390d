"""Domain types and the canonical customer-table column registry.

The customer table is a long-format frame: one row per (customer, year) with
the 23 core relationship variables plus 44 precomputed geographic context
variables. Contract-level records feed the preparation pipeline; the CSV
interface works at customer-year level.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError


class ContractType(str, Enum):
    POWER = "Power"
    INTERNET = "Internet"
    TV = "TV"


TYPE_NICK = {ContractType.POWER: "power", ContractType.INTERNET: "inet", ContractType.TV: "tv"}
NICK_TYPE = {v: k for k, v in TYPE_NICK.items()}

# the four cross-purchase pairings under study
ALLOWED_CASE_PAIRS = {
    (ContractType.POWER, ContractType.INTERNET),
    (ContractType.POWER, ContractType.TV),
    (ContractType.TV, ContractType.INTERNET),
    (ContractType.INTERNET, ContractType.TV),
}


@dataclass
class ContractRecord:
    """One utility service contract as exported from the source system."""

    contract_id: str
    customer_id: str
    contract_type: ContractType
    start_date: dt.date
    end_date: dt.date | None
    tariff_id: str
    yearly_consumption_kwh: float | None
    salutation: str
    address_key: str = ""

    def __post_init__(self):
        if self.end_date is not None and self.end_date < self.start_date:
            raise DataError(f"contract {self.contract_id}: end_date precedes start_date")
        if self.contract_type == ContractType.POWER:
            if self.yearly_consumption_kwh is None or self.yearly_consumption_kwh < 0:
                raise DataError(
                    f"contract {self.contract_id}: power contracts need a non-negative yearly consumption"
                )
        elif self.yearly_consumption_kwh is not None:
            raise DataError(
                f"contract {self.contract_id}: consumption applies to power contracts only"
            )

    def active_on(self, day: dt.date) -> bool:
        return self.start_date <= day and (self.end_date is None or day <= self.end_date)

    def overlaps(self, first: dt.date, last: dt.date) -> bool:
        return self.start_date <= last and (self.end_date is None or self.end_date >= first)

    def covers_year(self, year: int) -> bool:
        return self.start_date <= dt.date(year, 1, 1) and (
            self.end_date is None or self.end_date >= dt.date(year, 12, 31)
        )


_GEO_NUMERIC_SPECS = [
    ("lat", 0.0),
    ("long", 0.0),
    ("building_area_mean", 0.0),
    ("building_area_median", 0.0),
    ("building_area_var", 0.0),
    ("next_building_area", 0.0),
    ("next_buildings_dist_mean", 0.0),
    ("next_buildings_dist_var", 0.0),
    ("building_dist_mean", 0.0),
    ("building_dist_var", 0.0),
    ("num_buildings", 0.0),
    ("num_public_institutions", 0.0),
    ("num_business", 0.0),
    ("num_food", 0.0),
    ("num_transportation", 0.0),
    ("num_recreation", 0.0),
    ("num_culture", 0.0),
    ("num_sights", 0.0),
    ("num_countryside", 0.0),
    ("num_road_system", 0.0),
    ("min_dist_business", 0.0),
    ("min_dist_food", 0.0),
    ("min_dist_culture", 0.0),
    ("mean_dist_public_institutions", 0.0),
    ("mean_dist_business", 0.0),
    ("mean_dist_food", 0.0),
    ("mean_dist_transportation", 0.0),
    ("mean_dist_recreation", 0.0),
    ("mean_dist_culture", 0.0),
    ("mean_dist_sights", 0.0),
    ("mean_dist_countryside", 0.0),
    ("mean_dist_road_system", 0.0),
    ("total_area_apartments", 0.0),
    ("total_area_single_family", 0.0),
    ("total_area_non_residential", 0.0),
    ("total_area_not_specified", 0.0),
    ("total_area_countryside", 0.0),
    ("total_area_residential", 0.0),
    ("total_area_city", 0.0),
]

_GEO_CATEGORICAL_NAMES = [
    "this_building_type",
    "next_building_type",
    "building_type_mode",
    "this_land_use_type",
    "next_land_use_type",
]


@dataclass
class GeoFeatures:
    """Geographic context of a 300 m x 300 m cell around an address."""

    lat: float = 0.0
    long: float = 0.0
    building_area_mean: float = 0.0
    building_area_median: float = 0.0
    building_area_var: float = 0.0
    next_building_area: float = 0.0
    next_buildings_dist_mean: float = 0.0
    next_buildings_dist_var: float = 0.0
    building_dist_mean: float = 0.0
    building_dist_var: float = 0.0
    num_buildings: float = 0.0
    num_public_institutions: float = 0.0
    num_business: float = 0.0
    num_food: float = 0.0
    num_transportation: float = 0.0
    num_recreation: float = 0.0
    num_culture: float = 0.0
    num_sights: float = 0.0
    num_countryside: float = 0.0
    num_road_system: float = 0.0
    min_dist_business: float = 0.0
    min_dist_food: float = 0.0
    min_dist_culture: float = 0.0
    mean_dist_public_institutions: float = 0.0
    mean_dist_business: float = 0.0
    mean_dist_food: float = 0.0
    mean_dist_transportation: float = 0.0
    mean_dist_recreation: float = 0.0
    mean_dist_culture: float = 0.0
    mean_dist_sights: float = 0.0
    mean_dist_countryside: float = 0.0
    mean_dist_road_system: float = 0.0
    total_area_apartments: float = 0.0
    total_area_single_family: float = 0.0
    total_area_non_residential: float = 0.0
    total_area_not_specified: float = 0.0
    total_area_countryside: float = 0.0
    total_area_residential: float = 0.0
    total_area_city: float = 0.0
    this_building_type: str = "unknown"
    next_building_type: str = "unknown"
    building_type_mode: str = "unknown"
    this_land_use_type: str = "unknown"
    next_land_use_type: str = "unknown"

    def validate(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.long <= 180.0:
            raise DataError(f"longitude out of range: {self.long}")
        for name, _ in _GEO_NUMERIC_SPECS:
            if name in ("lat", "long"):
                continue
            value = getattr(self, name)
            if value < 0 or math.isnan(value):
                raise DataError(f"geographic feature {name} must be non-negative, got {value}")


@dataclass
class CustomerProfile:
    """Customer-level attributes that live outside the contract export."""

    age_years: float = 0.0
    bank_type: str = "unknown"
    contacts_by_year: dict = field(default_factory=dict)
    dunnings_by_year: dict = field(default_factory=dict)
    has_title: bool = False
    has_phone: bool = False
    has_mobile: bool = False
    has_email: bool = False
    has_diff_billing: bool = False
    has_iban: bool = False
    uses_service_portal: bool = False
    uses_online_bills: bool = False


@dataclass
class CustomerRecord:
    """One customer-year row housing all model variables."""

    customer_id: str
    year: int
    start_year: int
    age_years: float
    form_of_address: str
    relationship_months: float
    number_of_contacts: float
    bank_type: str
    number_of_dunnings: float
    has_title: bool
    has_phone: bool
    has_mobile: bool
    has_email: bool
    has_diff_billing: bool
    has_iban: bool
    uses_service_portal: bool
    uses_online_bills: bool
    norm_power_kwh: float
    revenue_total: float
    revenue_power: float
    revenue_inet: float
    revenue_tv: float
    existing_power: bool
    existing_inet: bool
    existing_tv: bool
    geo: GeoFeatures = field(default_factory=GeoFeatures)

    def validate(self) -> None:
        parts = self.revenue_power + self.revenue_inet + self.revenue_tv
        if abs(self.revenue_total - parts) > 0.01:
            raise DataError(
                f"customer {self.customer_id} year {self.year}: revenue_total {self.revenue_total} "
                f"differs from the sum of parts {parts:.2f}"
            )
        if self.relationship_months > 12 * (self.year - self.start_year + 1) + 1e-9:
            raise DataError(
                f"customer {self.customer_id} year {self.year}: relationship_months inconsistent with start_year"
            )
        for name in ("age_years", "relationship_months", "number_of_contacts", "number_of_dunnings", "norm_power_kwh"):
            if getattr(self, name) < 0:
                raise DataError(f"customer {self.customer_id}: {name} must be non-negative")
        self.geo.validate()

    def to_row(self) -> dict:
        row = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "geo"}
        row.update({f.name: getattr(self.geo, f.name) for f in fields(self.geo)})
        return row


@dataclass(frozen=True)
class CrossSellCase:
    """One (owner product, target product, train year) prediction case."""

    owner_type: ContractType
    target_type: ContractType
    train_year: int
    test_year: int

    def __post_init__(self):
        if self.owner_type == self.target_type:
            raise ConfigError("owner and target product must differ")
        if self.test_year != self.train_year + 1:
            raise ConfigError(
                f"test year must directly follow the train year, got {self.train_year}/{self.test_year}"
            )
        if (self.owner_type, self.target_type) not in ALLOWED_CASE_PAIRS:
            raise ConfigError(
                f"unsupported cross-purchase pairing {self.owner_type.value} -> {self.target_type.value}"
            )

    @property
    def tag(self) -> str:
        return (
            f"{TYPE_NICK[self.owner_type]}_buys_{TYPE_NICK[self.target_type]}_"
            f"{self.train_year}_{self.test_year}"
        )

    def to_json_dict(self) -> dict:
        return {
            "owner_type": self.owner_type.value,
            "target_type": self.target_type.value,
            "train_year": self.train_year,
            "test_year": self.test_year,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CrossSellCase":
        return cls(
            owner_type=ContractType(d["owner_type"]),
            target_type=ContractType(d["target_type"]),
            train_year=int(d["train_year"]),
            test_year=int(d["test_year"]),
        )


ID_COLUMNS = ["customer_id", "year"]

CORE_NUMERIC = [
    "start_year",
    "age_years",
    "relationship_months",
    "number_of_contacts",
    "number_of_dunnings",
    "norm_power_kwh",
    "revenue_total",
    "revenue_power",
    "revenue_inet",
    "revenue_tv",
]

CORE_BOOLEAN = [
    "has_title",
    "has_phone",
    "has_mobile",
    "has_email",
    "has_diff_billing",
    "has_iban",
    "uses_service_portal",
    "uses_online_bills",
    "existing_power",
    "existing_inet",
    "existing_tv",
]

CORE_CATEGORICAL = ["form_of_address", "bank_type"]

GEO_NUMERIC = [name for name, _ in _GEO_NUMERIC_SPECS]
GEO_CATEGORICAL = list(_GEO_CATEGORICAL_NAMES)

NUMERIC_COLUMNS = CORE_NUMERIC + GEO_NUMERIC
BOOLEAN_COLUMNS = list(CORE_BOOLEAN)
CATEGORICAL_COLUMNS = CORE_CATEGORICAL + GEO_CATEGORICAL
MONEY_COLUMNS = ["revenue_total", "revenue_power", "revenue_inet", "revenue_tv"]

TABLE_COLUMNS = ID_COLUMNS + NUMERIC_COLUMNS + BOOLEAN_COLUMNS + CATEGORICAL_COLUMNS
FEATURE_COLUMNS = NUMERIC_COLUMNS + BOOLEAN_COLUMNS + CATEGORICAL_COLUMNS


def records_to_frame(records: list[CustomerRecord]) -> pd.DataFrame:
    frame = pd.DataFrame([r.to_row() for r in records])
    return frame[TABLE_COLUMNS]


def save_customer_table(frame: pd.DataFrame, path) -> None:
    """CSV with the canonical column order; money fixed to 2 decimals,
    booleans as 0/1 integers. UTF-8, comma separator, dot decimals."""
    missing = [c for c in TABLE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"customer table misses columns: {missing}")
    out = frame[TABLE_COLUMNS].copy()
    for col in MONEY_COLUMNS:
        out[col] = out[col].map(lambda v: f"{float(v):.2f}")
    for col in BOOLEAN_COLUMNS:
        out[col] = out[col].astype(int)
    out.to_csv(path, index=False)


def load_customer_table(path) -> pd.DataFrame:
    """Parse the canonical customer CSV, typed per the column registry.

    Empty cells stay missing (NaN); any other unparseable value in a numeric
    column raises with the row and column named.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in TABLE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"customer table {path} misses columns: {missing}")
    frame = frame[TABLE_COLUMNS]
    out = pd.DataFrame(index=frame.index)
    out["customer_id"] = frame["customer_id"]
    out["year"] = _parse_numeric(frame["year"], "year", path).astype(int)
    for col in NUMERIC_COLUMNS:
        out[col] = _parse_numeric(frame[col], col, path)
    for col in BOOLEAN_COLUMNS:
        out[col] = _parse_numeric(frame[col], col, path).fillna(0.0).astype(bool)
    for col in CATEGORICAL_COLUMNS:
        values = frame[col].replace("", np.nan)
        out[col] = values
    return out


def _parse_numeric(series: pd.Series, col: str, path) -> pd.Series:
    raw = series.replace("", np.nan)
    # numpy's parser is correctly rounded; pandas' fast path loses a ulp
    parsed = pd.to_numeric(raw, errors="coerce")
    bad = raw.notna() & parsed.isna()
    if bad.any():
        row = int(np.nonzero(bad.to_numpy())[0][0])
        raise DataError(
            f"{path}: non-numeric value {raw.iloc[row]!r} in numeric column {col!r} at data row {row}"
        )
    exact = np.full(len(raw), np.nan)
    mask = raw.notna().to_numpy()
    exact[mask] = raw.to_numpy()[mask].astype(np.float64)
    return pd.Series(exact, index=series.index)


@dataclass
class CaseDataset:
    """Encoded feature matrix plus purchase labels for one prediction case."""

    feature_names: list[str]
    rows: np.ndarray
    labels: np.ndarray
    customer_ids: list[str]
    encoding_map: dict
    case: CrossSellCase
    seed: int | None = None

    def __post_init__(self):
        if not (self.rows.shape[0] == self.labels.shape[0] == len(self.customer_ids)):
            raise DataError("rows, labels, and customer ids must have equal length")
        if self.rows.shape[1] != len(self.feature_names):
            raise DataError("feature matrix width does not match feature names")
        if np.isnan(self.rows).any():
            raise DataError("feature matrix contains NaN after imputation")
        ratio = self.positive_ratio
        if ratio <= 0.0:
            raise DataError(f"case {self.case.tag}: no positive labels (degenerate case)")
        if ratio >= 0.5:
            raise DataError(
                f"case {self.case.tag}: positive ratio {ratio:.3f} is not an imbalanced problem"
            )

    @property
    def positive_ratio(self) -> float:
        return float(np.mean(self.labels.astype(float)))

    def save(self, features_csv, meta_json) -> None:
        """Two-file pair: feature matrix CSV and a metadata JSON that makes
        the encoding reproducible."""
        with open(features_csv, "w", newline="") as fh:
            fh.write(",".join(["customer_id", "label"] + list(self.feature_names)) + "\n")
            for i in range(self.rows.shape[0]):
                cells = [self.customer_ids[i], str(int(self.labels[i]))]
                cells += [repr(float(v)) for v in self.rows[i]]
                fh.write(",".join(cells) + "\n")
        meta = {
            "case": self.case.to_json_dict(),
            "feature_names": list(self.feature_names),
            "encoding_map": self.encoding_map,
            "seed": self.seed,
            "counts": {
                "rows": int(self.rows.shape[0]),
                "positives": int(np.sum(self.labels)),
                "positive_ratio": self.positive_ratio,
            },
        }
        Path(meta_json).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, features_csv, meta_json) -> "CaseDataset":
        meta = json.loads(Path(meta_json).read_text())
        frame = pd.read_csv(features_csv, dtype={"customer_id": str}, float_precision="round_trip")
        names = list(meta["feature_names"])
        return cls(
            feature_names=names,
            rows=frame[names].to_numpy(dtype=float),
            labels=frame["label"].to_numpy(dtype=bool),
            customer_ids=frame["customer_id"].tolist(),
            encoding_map=meta["encoding_map"],
            case=CrossSellCase.from_json_dict(meta["case"]),
            seed=meta.get("seed"),
        )
