"""Data preparation: business-customer filtering, revenue computation,
customer-level aggregation, label construction, and feature-matrix assembly.
"""

from __future__ import annotations

import calendar
import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError
from .schema import (
    BOOLEAN_COLUMNS,
    CATEGORICAL_COLUMNS,
    CaseDataset,
    ContractRecord,
    ContractType,
    CrossSellCase,
    CustomerProfile,
    CustomerRecord,
    GeoFeatures,
    NUMERIC_COLUMNS,
    TYPE_NICK,
)

DEFAULT_PRIVATE_SALUTATIONS = frozenset({"Mr.", "Mrs."})
BUSINESS_CONSUMPTION_KWH = 100_000.0  # at or above this, power contracts are business tariffs
DEFAULT_ACTIVE_WINDOW = (2012, 2017)
CATEGORY_CARDINALITY_CAP = 32
OTHER_BUCKET = "other"


@dataclass
class TariffTable:
    """tariff_id -> monthly price (TV/Internet) or consumption rate (power)."""

    monthly_price: dict[str, float] = field(default_factory=dict)
    rate_per_kwh: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, price in list(self.monthly_price.items()) + list(self.rate_per_kwh.items()):
            if price < 0:
                raise ConfigError(f"tariff {name!r} has a negative price: {price}")

    @classmethod
    def from_json_dict(cls, d: dict) -> "TariffTable":
        monthly = {}
        rate = {}
        for tariff_id, spec in d.items():
            if "monthly_price" in spec:
                monthly[tariff_id] = float(spec["monthly_price"])
            elif "rate_per_kwh" in spec:
                rate[tariff_id] = float(spec["rate_per_kwh"])
            else:
                raise ConfigError(f"tariff {tariff_id!r} needs monthly_price or rate_per_kwh")
        return cls(monthly_price=monthly, rate_per_kwh=rate)

    @classmethod
    def load(cls, path) -> "TariffTable":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def filter_business_customers(
    contracts: list[ContractRecord],
    allowed_salutations=DEFAULT_PRIVATE_SALUTATIONS,
    consumption_cap_kwh: float = BUSINESS_CONSUMPTION_KWH,
    active_window: tuple[int, int] = DEFAULT_ACTIVE_WINDOW,
) -> list[ContractRecord]:
    """Drop business contracts, then customers inactive in the window.

    A contract survives when its salutation is on the private allow-list and,
    for power contracts, consumption is strictly below the business
    threshold. Customers whose surviving contracts never overlap the window
    are dropped entirely. Idempotent by construction.
    """
    allowed = set(allowed_salutations)
    kept = [
        c
        for c in contracts
        if c.salutation in allowed
        and (c.contract_type != ContractType.POWER or c.yearly_consumption_kwh < consumption_cap_kwh)
    ]
    window_first = dt.date(active_window[0], 1, 1)
    window_last = dt.date(active_window[1], 12, 31)
    active_customers = {
        c.customer_id for c in kept if c.overlaps(window_first, window_last)
    }
    result = [c for c in kept if c.customer_id in active_customers]
    if not result:
        raise DataError(
            f"no eligible customers remain after business filtering (window {active_window[0]}-{active_window[1]})"
        )
    return result


def _months_active(contract: ContractRecord, year: int) -> int:
    """Months of the year with at least one active contract day."""
    months = 0
    for month in range(1, 13):
        first = dt.date(year, month, 1)
        last = dt.date(year, month, calendar.monthrange(year, month)[1])
        if contract.overlaps(first, last):
            months += 1
    return months


def _days_active(contract: ContractRecord, year: int) -> int:
    first = dt.date(year, 1, 1)
    last = dt.date(year, 12, 31)
    start = max(contract.start_date, first)
    end = last if contract.end_date is None else min(contract.end_date, last)
    return max(0, (end - start).days + 1)


def compute_contract_revenue(contract: ContractRecord, year: int, tariffs: TariffTable) -> float:
    """Yearly net revenue of one contract, rounded to cents.

    TV/Internet: active months times the tariff's monthly price, where a
    month counts as active when the contract is active on at least one of its
    days. Power: mean daily consumption times active days times the
    consumption rate.
    """
    if contract.contract_type == ContractType.POWER:
        if contract.tariff_id not in tariffs.rate_per_kwh:
            raise DataError(
                f"contract {contract.contract_id}: unknown power tariff {contract.tariff_id!r}"
            )
        rate = tariffs.rate_per_kwh[contract.tariff_id]
        days_in_year = 366 if calendar.isleap(year) else 365
        mean_daily = contract.yearly_consumption_kwh / days_in_year
        return round(mean_daily * _days_active(contract, year) * rate, 2)
    if contract.tariff_id not in tariffs.monthly_price:
        raise DataError(
            f"contract {contract.contract_id}: unknown {contract.contract_type.value} tariff {contract.tariff_id!r}"
        )
    price = tariffs.monthly_price[contract.tariff_id]
    return round(_months_active(contract, year) * price, 2)


def _most_frequent_address(contracts: list[ContractRecord]) -> str:
    # ties break to the lexicographically smallest key
    counts = Counter(c.address_key for c in contracts)
    top = max(counts.values())
    return sorted(k for k, v in counts.items() if v == top)[0]


def aggregate_to_customer(
    contracts: list[ContractRecord],
    year: int,
    tariffs: TariffTable,
    profile: CustomerProfile | None = None,
    geo_lookup: dict[str, GeoFeatures] | None = None,
) -> CustomerRecord:
    """Roll one customer's contracts up to a customer-year row.

    Revenues and consumption sum over contracts; geographic features come
    from the most frequent address (ties to the lexicographically smallest
    key); a product counts as existing only when a single contract of that
    type covers the entire year.
    """
    if not contracts:
        raise DataError(f"no contracts to aggregate for year {year}")
    customer_ids = {c.customer_id for c in contracts}
    if len(customer_ids) != 1:
        raise DataError(f"aggregation needs a single customer, got {sorted(customer_ids)}")
    customer_id = contracts[0].customer_id
    profile = profile or CustomerProfile()

    revenue = {t: 0.0 for t in ContractType}
    norm_power = 0.0
    existing = {t: False for t in ContractType}
    year_first, year_last = dt.date(year, 1, 1), dt.date(year, 12, 31)
    for c in contracts:
        revenue[c.contract_type] = round(revenue[c.contract_type] + compute_contract_revenue(c, year, tariffs), 2)
        if c.covers_year(year):
            existing[c.contract_type] = True
        if c.contract_type == ContractType.POWER and c.overlaps(year_first, year_last):
            norm_power += c.yearly_consumption_kwh

    start = min((c.start_date for c in contracts), key=lambda d: d)
    start_year = start.year
    relationship_months = max(0, (year - start_year) * 12 + 13 - start.month)

    last_contract = max(contracts, key=lambda c: (c.start_date, c.contract_id))
    geo = GeoFeatures()
    if geo_lookup:
        geo = geo_lookup.get(_most_frequent_address(contracts), GeoFeatures())

    record = CustomerRecord(
        customer_id=customer_id,
        year=year,
        start_year=start_year,
        age_years=profile.age_years,
        form_of_address=last_contract.salutation,
        relationship_months=float(relationship_months),
        number_of_contacts=float(profile.contacts_by_year.get(year, 0.0)),
        bank_type=profile.bank_type,
        number_of_dunnings=float(profile.dunnings_by_year.get(year, 0.0)),
        has_title=profile.has_title,
        has_phone=profile.has_phone,
        has_mobile=profile.has_mobile,
        has_email=profile.has_email,
        has_diff_billing=profile.has_diff_billing,
        has_iban=profile.has_iban,
        uses_service_portal=profile.uses_service_portal,
        uses_online_bills=profile.uses_online_bills,
        norm_power_kwh=norm_power,
        revenue_total=round(revenue[ContractType.POWER] + revenue[ContractType.INTERNET] + revenue[ContractType.TV], 2),
        revenue_power=revenue[ContractType.POWER],
        revenue_inet=revenue[ContractType.INTERNET],
        revenue_tv=revenue[ContractType.TV],
        existing_power=existing[ContractType.POWER],
        existing_inet=existing[ContractType.INTERNET],
        existing_tv=existing[ContractType.TV],
        geo=geo,
    )
    record.validate()
    return record


def _year_view(customers: pd.DataFrame, year: int) -> pd.DataFrame:
    view = customers[customers["year"] == year]
    if view.empty:
        raise DataError(f"customer table has no rows for year {year}")
    dup = view["customer_id"].duplicated()
    if dup.any():
        raise DataError(f"year {year}: duplicate customer rows, e.g. {view['customer_id'][dup].iloc[0]!r}")
    return view.set_index("customer_id")


def build_labels(customers: pd.DataFrame, case: CrossSellCase) -> tuple[list[str], np.ndarray]:
    """Eligible customer ids and their cross-purchase labels.

    Eligible customers are existing owners of the owner product in the train
    year who do not already hold the target product (existing target contract
    or target revenue) that year; a customer cannot cross-purchase what they
    already have. A label is true when the customer acquires the target
    during the test year. Customers absent from the test year stay eligible
    and are labeled false.
    """
    owner = TYPE_NICK[case.owner_type]
    target = TYPE_NICK[case.target_type]
    train = _year_view(customers, case.train_year)
    test = _year_view(customers, case.test_year)

    owners = train[train[f"existing_{owner}"].astype(bool)]
    if owners.empty:
        raise DataError(f"case {case.tag}: no existing {case.owner_type.value} customers in {case.train_year}")
    held_target = owners[f"existing_{target}"].astype(bool) | (owners[f"revenue_{target}"] > 0)
    eligible = owners[~held_target]
    if eligible.empty:
        raise DataError(f"case {case.tag}: every owner already holds the target product")

    in_test = eligible.index.intersection(test.index)
    acquired = pd.Series(False, index=eligible.index)
    test_rows = test.loc[in_test]
    acquired.loc[in_test] = test_rows[f"existing_{target}"].astype(bool) | (test_rows[f"revenue_{target}"] > 0)

    labels = acquired.to_numpy(dtype=bool)
    if not labels.any():
        raise DataError(f"case {case.tag}: degenerate case, no cross-purchases observed")
    return eligible.index.tolist(), labels


def _mode(values: pd.Series) -> str:
    counts = Counter(str(v) for v in values.dropna())
    top = max(counts.values())
    return sorted(k for k, v in counts.items() if v == top)[0]


def build_encoding_map(features: pd.DataFrame, cardinality_cap: int = CATEGORY_CARDINALITY_CAP) -> dict:
    """Imputation fills and categorical expansions learned from one population."""
    numeric_like = [c for c in NUMERIC_COLUMNS if c in features.columns]
    boolean_like = [c for c in BOOLEAN_COLUMNS if c in features.columns]
    categorical = [c for c in CATEGORICAL_COLUMNS if c in features.columns]

    numeric_spec: dict[str, dict] = {}
    for col in numeric_like:
        values = features[col].astype(float)
        has_missing = bool(values.isna().any())
        fill = float(values.median()) if not values.isna().all() else 0.0
        numeric_spec[col] = {"fill": fill, "indicator": has_missing}
    for col in boolean_like:
        values = features[col]
        # booleans encode as 0/1; the median of a 0/1 column is its majority value
        as_float = values.astype(float)
        has_missing = bool(as_float.isna().any())
        fill = float(as_float.median()) if not as_float.isna().all() else 0.0
        numeric_spec[col] = {"fill": fill, "indicator": has_missing}

    categorical_spec: dict[str, dict] = {}
    for col in categorical:
        values = features[col]
        non_missing = values.dropna().astype(str)
        if non_missing.empty:
            levels, fill, overflow = ["unknown"], "unknown", False
        else:
            counts = Counter(non_missing)
            ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            overflow = len(ordered) > cardinality_cap
            levels = sorted(name for name, _ in ordered[:cardinality_cap])
            fill = _mode(values)
            if overflow and fill not in levels:
                fill = OTHER_BUCKET
        categorical_spec[col] = {
            "levels": levels,
            "other_bucket": overflow,
            "fill": fill,
            "indicator": bool(values.isna().any()),
        }

    feature_names: list[str] = []
    for col in numeric_like + boolean_like:
        feature_names.append(col)
        if numeric_spec[col]["indicator"]:
            feature_names.append(f"{col}__missing")
    for col in categorical:
        spec = categorical_spec[col]
        for level in spec["levels"]:
            feature_names.append(f"{col}={level}")
        if spec["other_bucket"]:
            feature_names.append(f"{col}={OTHER_BUCKET}")
        if spec["indicator"]:
            feature_names.append(f"{col}__missing")
    return {
        "numeric": numeric_spec,
        "categorical": categorical_spec,
        "feature_names": feature_names,
        "cardinality_cap": cardinality_cap,
    }


def encode_with_map(features: pd.DataFrame, encoding_map: dict) -> np.ndarray:
    """Apply a learned encoding to (possibly different) rows of the same schema."""
    n = len(features)
    columns: dict[str, np.ndarray] = {}
    for col, spec in encoding_map["numeric"].items():
        values = features[col].astype(float)
        missing = values.isna().to_numpy()
        filled = values.fillna(spec["fill"]).to_numpy(dtype=float)
        columns[col] = filled
        if spec["indicator"]:
            columns[f"{col}__missing"] = missing.astype(float)
    for col, spec in encoding_map["categorical"].items():
        raw = features[col]
        missing = raw.isna().to_numpy()
        values = raw.fillna(spec["fill"]).astype(str).to_numpy()
        known = set(spec["levels"])
        for level in spec["levels"]:
            columns[f"{col}={level}"] = (values == level).astype(float)
        if spec["other_bucket"]:
            in_known = np.isin(values, list(known))
            columns[f"{col}={OTHER_BUCKET}"] = (~in_known).astype(float)
        if spec["indicator"]:
            columns[f"{col}__missing"] = missing.astype(float)
    matrix = np.empty((n, len(encoding_map["feature_names"])), dtype=float)
    for j, name in enumerate(encoding_map["feature_names"]):
        matrix[:, j] = columns[name]
    return matrix


def decode_categoricals(matrix: np.ndarray, encoding_map: dict) -> dict[str, list[str]]:
    """Recover categorical values from their indicator blocks (round-trip check)."""
    name_to_col = {name: j for j, name in enumerate(encoding_map["feature_names"])}
    out: dict[str, list[str]] = {}
    for col, spec in encoding_map["categorical"].items():
        levels = list(spec["levels"]) + ([OTHER_BUCKET] if spec["other_bucket"] else [])
        block = np.stack([matrix[:, name_to_col[f"{col}={level}"]] for level in levels], axis=1)
        picks = np.argmax(block, axis=1)
        out[col] = [levels[p] for p in picks]
    return out


def assemble_case_dataset(
    customers: pd.DataFrame,
    case: CrossSellCase,
    cardinality_cap: int = CATEGORY_CARDINALITY_CAP,
    seed: int | None = None,
) -> CaseDataset:
    """Labels plus the encoded train-year feature matrix for one case.

    Features come from the train year only; categoricals one-hot encode with
    an overflow bucket past the cardinality cap; missing numerics impute to
    the population median with a missing-indicator column, categoricals to
    the mode. The encoding map makes the transform reproducible on other
    rows (e.g. the following year's values).
    """
    ids, labels = build_labels(customers, case)
    train = _year_view(customers, case.train_year).loc[ids]
    features = train[[c for c in train.columns if c != "year"]]
    encoding_map = build_encoding_map(features, cardinality_cap)
    matrix = encode_with_map(features, encoding_map)
    return CaseDataset(
        feature_names=list(encoding_map["feature_names"]),
        rows=matrix,
        labels=labels,
        customer_ids=list(ids),
        encoding_map=encoding_map,
        case=case,
        seed=seed,
    )


def next_year_feature_table(customers: pd.DataFrame, dataset: CaseDataset) -> tuple[np.ndarray, np.ndarray]:
    """Test-year feature values for the case's eligible customers, encoded
    with the dataset's own encoding map, plus the purchase outcomes.

    Customers absent from the test year are dropped from this view (their
    outcome was labeled false from absence, not observed behavior).
    """
    test = _year_view(customers, dataset.case.test_year)
    present = [i for i, cid in enumerate(dataset.customer_ids) if cid in test.index]
    if not present:
        raise DataError(f"case {dataset.case.tag}: no eligible customers present in the test year")
    ids = [dataset.customer_ids[i] for i in present]
    rows = test.loc[ids]
    features = rows[[c for c in rows.columns if c != "year"]]
    matrix = encode_with_map(features, dataset.encoding_map)
    outcomes = dataset.labels[present]
    return matrix, outcomes
