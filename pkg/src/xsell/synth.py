"""Seeded synthetic customer populations with a planted purchase mechanism.

The generator emits schema-complete customer-year tables in the imbalance
regime of the real problem (positive ratios well under 10%) and plants
cross-purchases through a logistic model over standardized feature values.
The hidden truth record keeps the planted coefficients so attribution
directions and next-year effects can be asserted against ground truth.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, NumericError
from .schema import (
    BOOLEAN_COLUMNS,
    ContractType,
    NUMERIC_COLUMNS,
    TABLE_COLUMNS,
    TYPE_NICK,
)

_CASE_PAIRS = {
    "power_buys_inet": (ContractType.POWER, ContractType.INTERNET),
    "power_buys_tv": (ContractType.POWER, ContractType.TV),
    "tv_buys_inet": (ContractType.TV, ContractType.INTERNET),
    "inet_buys_tv": (ContractType.INTERNET, ContractType.TV),
}

_MONTHLY_PRICE = {"power": None, "inet": 19.90, "tv": 15.50}
_POWER_RATE = 0.31  # EUR per kWh

_MAX_BISECTION_STEPS = 100
_RATIO_TOLERANCE = 0.10  # relative


@dataclass(frozen=True)
class SignalTerm:
    """One planted relation: sign * magnitude on a standardized feature."""

    feature: str
    sign: int
    magnitude: float

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ConfigError(f"signal sign must be +1 or -1, got {self.sign}")
        if not (self.magnitude > 0):
            raise ConfigError(f"signal magnitude must be positive, got {self.magnitude}")
        if self.feature not in NUMERIC_COLUMNS and self.feature not in BOOLEAN_COLUMNS:
            raise ConfigError(f"signal feature {self.feature!r} is not a schema feature")


# directions mirror the reported attribution summary: higher total revenue
# pushes toward a purchase, longer relationships and higher age away from it.
# every default signal feature persists year over year, so the planted
# pattern stays testable on the following year's values.
DEFAULT_SIGNAL = [
    SignalTerm("revenue_total", +1, 1.8),
    SignalTerm("relationship_months", -1, 1.3),
    SignalTerm("age_years", -1, 1.0),
    SignalTerm("number_of_contacts", +1, 0.9),
    SignalTerm("uses_online_bills", +1, 1.1),
]

DEFAULT_TARGET_RATIOS = {
    "power_buys_inet": 0.011,
    "power_buys_tv": 0.013,
    "tv_buys_inet": 0.017,
    "inet_buys_tv": 0.006,
}


@dataclass(frozen=True)
class GeneratorConfig:
    n_customers: int
    years: tuple[int, int] = (2014, 2017)
    target_positive_ratio: dict = field(default_factory=lambda: dict(DEFAULT_TARGET_RATIOS))
    signal_spec: tuple = tuple(DEFAULT_SIGNAL)
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_customers < 1:
            raise ConfigError("n_customers must be positive")
        if self.years[1] < self.years[0]:
            raise ConfigError(f"year range is inverted: {self.years}")
        if not (0 <= self.seed <= 0xFFFFFFFFFFFFFFFF):
            raise ConfigError("seed must fit an unsigned 64-bit integer")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")
        for case, ratio in self.target_positive_ratio.items():
            if case not in _CASE_PAIRS:
                raise ConfigError(f"unknown case tag {case!r}")
            if not 0.0 < ratio < 0.1:
                raise ConfigError(f"target ratio for {case} must be in (0, 0.1), got {ratio}")
        object.__setattr__(self, "signal_spec", tuple(self.signal_spec))

    @classmethod
    def from_json_dict(cls, d: dict) -> "GeneratorConfig":
        spec = d.get("signal_spec")
        terms = (
            tuple(SignalTerm(t["feature"], int(t["sign"]), float(t["magnitude"])) for t in spec)
            if spec is not None
            else tuple(DEFAULT_SIGNAL)
        )
        return cls(
            n_customers=int(d["n_customers"]),
            years=tuple(d.get("years", (2014, 2017))),
            target_positive_ratio=dict(d.get("target_positive_ratio", DEFAULT_TARGET_RATIOS)),
            signal_spec=terms,
            noise_scale=float(d.get("noise_scale", 1.0)),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class PlantedTruth:
    """What the generator actually planted, for later assertions."""

    seed: int
    terms: list[SignalTerm]
    intercepts: dict  # case tag -> {train year (str): intercept}
    realized_ratios: dict  # case tag -> {train year (str): ratio among eligible}
    noise_features: list[str]

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "terms": [
                {"feature": t.feature, "sign": t.sign, "magnitude": t.magnitude} for t in self.terms
            ],
            "intercepts": self.intercepts,
            "realized_ratios": self.realized_ratios,
            "noise_features": self.noise_features,
        }


def describe_truth(truth: PlantedTruth) -> list[str]:
    """Human-readable expectation per planted feature."""
    lines = []
    for t in truth.terms:
        direction = "positive" if t.sign > 0 else "negative"
        comparison = "higher" if t.sign > 0 else "lower"
        lines.append(
            f"{t.feature}: {direction} attribution expected; "
            f"buyers' following-year values expected {comparison}"
        )
    return lines


def _rng(seed: int, *tags) -> np.random.Generator:
    parts = [seed & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            parts.append(zlib.crc32(tag.encode()))
        else:
            parts.append(int(tag) & 0xFFFFFFFF)
    return np.random.default_rng(parts)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _standardize(values: np.ndarray) -> np.ndarray:
    std = float(np.std(values))
    if std == 0.0 or not math.isfinite(std):
        return np.zeros_like(values)
    return (values - float(np.mean(values))) / std


_INF_MAGNITUDE = 1e6  # stand-in slope for an "infinite" coefficient


def _signal_scores(features: dict, eligible: np.ndarray, terms, noise: np.ndarray) -> np.ndarray:
    """Planted logit scores of the eligible customers.

    An infinite magnitude becomes a very large finite slope, which turns the
    purchase probability into a sharp threshold on the feature while leaving
    the intercept calibration able to place that threshold.
    """
    score = np.zeros(int(np.sum(eligible)), dtype=float)
    for t in terms:
        z = _standardize(np.asarray(features[t.feature], dtype=float)[eligible])
        magnitude = _INF_MAGNITUDE if math.isinf(t.magnitude) else t.magnitude
        score = score + t.sign * magnitude * z
    return score + noise


def _calibrate_purchases(
    score: np.ndarray,
    u: np.ndarray,
    prior_buyers: np.ndarray,
    target: float,
    case: str,
    year: int,
) -> tuple[np.ndarray, float]:
    """Bisect the intercept until the realized positive ratio hits the target.

    Draws are u < sigmoid(b + score) with u fixed up front, so the realized
    ratio is monotone in b and the bisection terminates. Buyers already
    planted by earlier cases this transition count toward the ratio, which is
    taken over the eligible population (owners not holding the target), the
    same denominator the prepared labels use.
    """
    n = score.shape[0]
    lo_band = target * (1.0 - _RATIO_TOLERANCE)
    hi_band = target * (1.0 + _RATIO_TOLERANCE)

    def realized(b: float) -> tuple[np.ndarray, float]:
        decided = u < _sigmoid(b + score)
        combined = decided | prior_buyers
        return combined, float(np.mean(combined))

    # wide enough that the sigmoid saturates past every score in either direction
    bracket = max(60.0, 4.0 * float(np.max(np.abs(score))) if score.size else 60.0)
    lo, hi = -bracket, bracket
    combined, ratio = realized(lo)
    if lo_band <= ratio <= hi_band:
        return combined, lo
    if ratio > hi_band:
        raise NumericError(
            f"case {case} year {year}: floor ratio {ratio:.4f} already exceeds the target band "
            f"[{lo_band:.4f}, {hi_band:.4f}]"
        )
    combined, ratio = realized(hi)
    if ratio < lo_band:
        raise NumericError(
            f"case {case} year {year}: ceiling ratio {ratio:.4f} cannot reach the target band"
        )
    if ratio <= hi_band:
        return combined, hi
    b = 0.0
    for _ in range(_MAX_BISECTION_STEPS):
        b = 0.5 * (lo + hi)
        combined, ratio = realized(b)
        if lo_band <= ratio <= hi_band:
            return combined, b
        if ratio < lo_band:
            lo = b
        else:
            hi = b
    raise NumericError(
        f"case {case} year {year}: intercept calibration failed after {_MAX_BISECTION_STEPS} "
        f"bisection steps (last ratio {ratio:.5f}, target {target:.5f}, n={n})"
    )


def generate_population(config: GeneratorConfig) -> tuple[pd.DataFrame, PlantedTruth]:
    """Customer-year table for all configured years plus the hidden truth.

    Holdings persist once acquired; a planted cross-purchase shows up as
    partial-year revenue in the acquisition year and as an existing contract
    from the year after.
    """
    n = config.n_customers
    y0, y1 = config.years
    seed = config.seed
    ids = np.array([f"C{i:07d}" for i in range(n)])

    rng = _rng(seed, "static")
    start_year = y0 - rng.integers(0, 15, n)
    start_month = rng.integers(1, 13, n)
    age_at_y0 = np.clip(rng.normal(52.0, 16.0, n), 18.0, 95.0)
    form_of_address = rng.choice(np.array(["Mr.", "Mrs."]), n)
    bank_type = rng.choice(
        np.array(["regional", "national", "online", "coop"]), n, p=[0.4, 0.3, 0.2, 0.1]
    )
    flags = {
        "has_title": rng.random(n) < 0.06,
        "has_phone": rng.random(n) < 0.55,
        "has_mobile": rng.random(n) < 0.60,
        "has_email": rng.random(n) < 0.50,
        "has_diff_billing": rng.random(n) < 0.08,
        "has_iban": rng.random(n) < 0.90,
        "uses_service_portal": rng.random(n) < 0.35,
        "uses_online_bills": rng.random(n) < 0.40,
    }
    base_kwh = np.exp(rng.normal(7.9, 0.45, n))
    inet_tier = 1.0 + 0.2 * rng.standard_normal(n)
    tv_tier = 1.0 + 0.2 * rng.standard_normal(n)
    contact_rate = 1.2 * np.exp(rng.normal(0.0, 1.0, n))  # persistent propensity

    geo = _geo_columns(_rng(seed, "geo"), n)

    # initial holdings; acquisition year <= y0 means held when observation starts
    hold_rng = _rng(seed, "holdings")
    acquired_year = {
        "power": np.where(hold_rng.random(n) < 0.85, start_year, 10_000),
        "inet": np.where(hold_rng.random(n) < 0.35, start_year, 10_000),
        "tv": np.where(hold_rng.random(n) < 0.30, start_year, 10_000),
    }
    acquired_month = {nick: start_month.copy() for nick in acquired_year}

    terms = list(config.signal_spec)
    intercepts: dict[str, dict] = {tag: {} for tag in config.target_positive_ratio}
    realized: dict[str, dict] = {tag: {} for tag in config.target_positive_ratio}

    frames: list[pd.DataFrame] = []
    for year in range(y0, y1 + 1):
        features = _materialize_year(
            year,
            ids,
            seed,
            start_year,
            start_month,
            age_at_y0,
            y0,
            form_of_address,
            bank_type,
            flags,
            base_kwh,
            inet_tier,
            tv_tier,
            contact_rate,
            geo,
            acquired_year,
            acquired_month,
        )
        frames.append(pd.DataFrame(features)[TABLE_COLUMNS])

        if year == y1:
            break
        # plant next year's cross-purchases from this year's feature values
        for tag in sorted(config.target_positive_ratio):
            owner, target_type = _CASE_PAIRS[tag]
            owner_nick, target_nick = TYPE_NICK[owner], TYPE_NICK[target_type]
            owners = np.asarray(features[f"existing_{owner_nick}"], dtype=bool)
            eligible = owners & (acquired_year[target_nick] > year)
            n_eligible = int(np.sum(eligible))
            if n_eligible == 0:
                raise DataError(f"case {tag} year {year}: no eligible customers generated")
            draw_rng = _rng(seed, "purchase", tag, year)
            noise = (
                config.noise_scale * draw_rng.standard_normal(n_eligible)
                if config.noise_scale > 0
                else np.zeros(n_eligible)
            )
            u = draw_rng.random(n_eligible)
            score = _signal_scores(features, eligible, terms, noise)
            prior = (acquired_year[target_nick] == year + 1)[eligible]
            buyers, intercept = _calibrate_purchases(
                score, u, prior, config.target_positive_ratio[tag], tag, year
            )
            intercepts[tag][str(year)] = intercept
            realized[tag][str(year)] = float(np.mean(buyers))
            new_buyers = np.nonzero(eligible)[0][buyers & ~prior]
            acquired_year[target_nick][new_buyers] = year + 1
            acquired_month[target_nick][new_buyers] = draw_rng.integers(1, 13, new_buyers.shape[0])

    table = pd.concat(frames, ignore_index=True)
    signal_names = {t.feature for t in terms}
    noise_features = [c for c in NUMERIC_COLUMNS if c not in signal_names]
    truth = PlantedTruth(
        seed=seed,
        terms=terms,
        intercepts=intercepts,
        realized_ratios=realized,
        noise_features=noise_features,
    )
    return table, truth


def _materialize_year(
    year,
    ids,
    seed,
    start_year,
    start_month,
    age_at_y0,
    y0,
    form_of_address,
    bank_type,
    flags,
    base_kwh,
    inet_tier,
    tv_tier,
    contact_rate,
    geo,
    acquired_year,
    acquired_month,
) -> dict:
    n = ids.shape[0]
    rng = _rng(seed, "year", year)
    holds = {nick: acquired_year[nick] <= year for nick in acquired_year}
    existing = {nick: acquired_year[nick] < year for nick in acquired_year}
    months_active = {
        nick: np.where(existing[nick], 12, np.where(holds[nick], 13 - acquired_month[nick], 0))
        for nick in acquired_year
    }

    norm_power = np.where(holds["power"], base_kwh * (1.0 + 0.05 * rng.standard_normal(n)), 0.0)
    norm_power = np.clip(norm_power, 0.0, None)
    revenue_power = np.round(norm_power * _POWER_RATE * months_active["power"] / 12.0, 2)
    revenue_inet = np.round(
        np.clip(_MONTHLY_PRICE["inet"] * inet_tier, 5.0, None) * months_active["inet"], 2
    )
    revenue_tv = np.round(
        np.clip(_MONTHLY_PRICE["tv"] * tv_tier, 5.0, None) * months_active["tv"], 2
    )
    revenue_total = np.round(revenue_power + revenue_inet + revenue_tv, 2)

    features: dict = {
        "customer_id": ids,
        "year": np.full(n, year),
        "start_year": start_year.astype(float),
        "age_years": age_at_y0 + (year - y0),
        "relationship_months": np.maximum(0, (year - start_year) * 12 + 13 - start_month).astype(float),
        "number_of_contacts": rng.poisson(contact_rate).astype(float),
        "number_of_dunnings": rng.poisson(0.15, n).astype(float),
        "norm_power_kwh": norm_power,
        "revenue_total": revenue_total,
        "revenue_power": revenue_power,
        "revenue_inet": revenue_inet,
        "revenue_tv": revenue_tv,
        "form_of_address": form_of_address,
        "bank_type": bank_type,
        "existing_power": existing["power"],
        "existing_inet": existing["inet"],
        "existing_tv": existing["tv"],
    }
    features.update(flags)
    features.update(geo)
    return features


def _geo_columns(rng: np.random.Generator, n: int) -> dict:
    """Correlated, range-clipped geographic context columns.

    A latent urbanness factor drives counts up and distances down. These
    columns carry no purchase signal unless named in the signal spec.
    """
    urban = rng.standard_normal(n)

    def mix(mean, scale, load, floor=0.0):
        raw = mean + scale * (load * urban + math.sqrt(max(0.0, 1 - load * load)) * rng.standard_normal(n))
        return np.clip(raw, floor, None)

    cols = {
        "lat": np.clip(50.5 + 1.5 * rng.standard_normal(n), -90.0, 90.0),
        "long": np.clip(10.0 + 2.0 * rng.standard_normal(n), -180.0, 180.0),
        "building_area_mean": mix(180.0, 60.0, 0.3),
        "building_area_median": mix(150.0, 50.0, 0.3),
        "building_area_var": mix(900.0, 300.0, 0.2),
        "next_building_area": mix(170.0, 80.0, 0.2),
        "next_buildings_dist_mean": mix(25.0, 10.0, -0.4),
        "next_buildings_dist_var": mix(40.0, 15.0, -0.2),
        "building_dist_mean": mix(60.0, 20.0, -0.4),
        "building_dist_var": mix(120.0, 40.0, -0.2),
        "num_buildings": mix(120.0, 60.0, 0.7),
        "num_public_institutions": mix(3.0, 2.0, 0.6),
        "num_business": mix(12.0, 8.0, 0.7),
        "num_food": mix(5.0, 4.0, 0.7),
        "num_transportation": mix(4.0, 3.0, 0.6),
        "num_recreation": mix(2.5, 2.0, 0.4),
        "num_culture": mix(1.5, 1.5, 0.5),
        "num_sights": mix(1.0, 1.0, 0.4),
        "num_countryside": mix(3.0, 2.5, -0.6),
        "num_road_system": mix(14.0, 6.0, 0.5),
        "min_dist_business": mix(140.0, 80.0, -0.6),
        "min_dist_food": mix(210.0, 110.0, -0.6),
        "min_dist_culture": mix(420.0, 200.0, -0.5),
        "mean_dist_public_institutions": mix(260.0, 90.0, -0.5),
        "mean_dist_business": mix(190.0, 70.0, -0.6),
        "mean_dist_food": mix(240.0, 90.0, -0.6),
        "mean_dist_transportation": mix(220.0, 80.0, -0.5),
        "mean_dist_recreation": mix(330.0, 120.0, -0.4),
        "mean_dist_culture": mix(460.0, 160.0, -0.4),
        "mean_dist_sights": mix(520.0, 180.0, -0.3),
        "mean_dist_countryside": mix(380.0, 150.0, 0.5),
        "mean_dist_road_system": mix(90.0, 30.0, -0.4),
        "total_area_apartments": mix(21000.0, 9000.0, 0.6),
        "total_area_single_family": mix(16000.0, 7000.0, -0.4),
        "total_area_non_residential": mix(9000.0, 5000.0, 0.3),
        "total_area_not_specified": mix(3000.0, 2000.0, 0.0),
        "total_area_countryside": mix(12000.0, 8000.0, -0.6),
        "total_area_residential": mix(30000.0, 9000.0, 0.3),
        "total_area_city": mix(26000.0, 11000.0, 0.7),
    }
    building_types = np.array(["apartment", "single_family", "terraced", "commercial"])
    land_types = np.array(["residential", "mixed", "commercial", "rural"])
    pick = lambda arr: arr[rng.integers(0, arr.shape[0], n)]
    cols["this_building_type"] = pick(building_types)
    cols["next_building_type"] = pick(building_types)
    cols["building_type_mode"] = pick(building_types)
    cols["this_land_use_type"] = pick(land_types)
    cols["next_land_use_type"] = pick(land_types)
    return cols
