"""Statistical procedures that test whether explanations can be trusted.

Two families: (a) fold robustness — Kruskal-Wallis rank tests on buyers'
per-fold attribution values, tagged traffic-light style; (b) next-year
validation — one-sided two-sample t-tests (Welch or pooled, picked by a
variance-homogeneity pre-check) and chi-squared tests of the directional
hypotheses the attribution summary implies, with Cohen's d and omega effect
sizes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .shapley import FeatureSummary, ShapMatrix
from .special import chi2_sf, student_t_cdf, student_t_sf

ROBUST_NS = "robust_ns"
ROBUST_SMALL_EFFECT = "robust_small_effect"
NOT_ROBUST = "not_robust"


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


@dataclass
class KruskalWallisResult:
    statistic: float
    df: int
    p_value: float
    effect_size: float  # eta-squared companion of H, clamped to [0, 1]


def kruskal_wallis(groups: Sequence) -> KruskalWallisResult:
    """Midrank-based H with tie correction across k groups.

    All observations identical is not an error: H = 0, p = 1. Effect size is
    (H - k + 1) / (n - k).
    """
    arrays = [np.asarray(g, dtype=float) for g in groups]
    k = len(arrays)
    if k < 2:
        raise DataError(f"Kruskal-Wallis needs at least 2 groups, got {k}")
    if any(a.shape[0] == 0 for a in arrays):
        raise DataError("Kruskal-Wallis groups must all be non-empty")
    n = sum(a.shape[0] for a in arrays)
    if n < 5:
        raise DataError(f"Kruskal-Wallis needs at least 5 observations in total, got {n}")

    from .metrics import midranks

    pooled = np.concatenate(arrays)
    ranks = midranks(pooled)
    h = 0.0
    offset = 0
    for a in arrays:
        r_sum = float(np.sum(ranks[offset : offset + a.shape[0]]))
        h += r_sum * r_sum / a.shape[0]
        offset += a.shape[0]
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0)

    # tie correction: 1 - sum(t^3 - t) / (n^3 - n) over tied groups
    _, counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - float(np.sum(counts.astype(float) ** 3 - counts)) / (n**3 - n)
    if correction <= 0.0:
        # every observation shares one value
        return KruskalWallisResult(statistic=0.0, df=k - 1, p_value=1.0, effect_size=0.0)
    h = max(0.0, h / correction)
    p = chi2_sf(h, k - 1)
    effect = (h - k + 1.0) / (n - k)
    effect = min(1.0, max(0.0, effect))
    return KruskalWallisResult(statistic=h, df=k - 1, p_value=p, effect_size=effect)


@dataclass
class TTestResult:
    statistic: float
    df: float
    p_value: float
    cohens_d: float


def _directional_p(t: float, df: float, direction: str) -> float:
    if direction == "greater":
        return student_t_sf(t, df)
    if direction == "less":
        return student_t_cdf(t, df)
    if direction == "two_sided":
        return 2.0 * student_t_sf(abs(t), df)
    raise DataError(f"unknown direction {direction!r}; use greater, less, or two_sided")


def _prepare_samples(sample_a, sample_b) -> tuple[np.ndarray, np.ndarray, float, float]:
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise DataError("two-sample t-tests need at least 2 observations per sample")
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    if va == 0.0 and vb == 0.0:
        raise DataError("both samples have zero variance; t statistic is undefined")
    return a, b, va, vb


def _pooled_sd(a: np.ndarray, b: np.ndarray, va: float, vb: float) -> float:
    na, nb = a.shape[0], b.shape[0]
    return math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))


def welch_t(sample_a, sample_b, direction: str = "two_sided") -> TTestResult:
    """Welch's unequal-variance t-test with Welch-Satterthwaite df.

    Cohen's d still uses the pooled standard deviation (the textbook
    definition), so d is comparable across the Welch and pooled variants.
    """
    a, b, va, vb = _prepare_samples(sample_a, sample_b)
    na, nb = a.shape[0], b.shape[0]
    se2 = va / na + vb / nb
    t = (float(np.mean(a)) - float(np.mean(b))) / math.sqrt(se2)
    df = se2 * se2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    d = (float(np.mean(a)) - float(np.mean(b))) / _pooled_sd(a, b, va, vb)
    return TTestResult(statistic=t, df=df, p_value=_directional_p(t, df, direction), cohens_d=d)


def student_t(sample_a, sample_b, direction: str = "two_sided") -> TTestResult:
    """Pooled-variance two-sample t-test, df = n_a + n_b - 2."""
    a, b, va, vb = _prepare_samples(sample_a, sample_b)
    na, nb = a.shape[0], b.shape[0]
    sp = _pooled_sd(a, b, va, vb)
    t = (float(np.mean(a)) - float(np.mean(b))) / (sp * math.sqrt(1.0 / na + 1.0 / nb))
    df = float(na + nb - 2)
    d = (float(np.mean(a)) - float(np.mean(b))) / sp
    return TTestResult(statistic=t, df=df, p_value=_directional_p(t, df, direction), cohens_d=d)


@dataclass
class Chi2Result:
    statistic: float
    df: int
    p_value: float
    omega: float


def chi_squared_2x2(binary_feature, group_flag) -> Chi2Result:
    """Pearson chi-squared (no continuity correction) on a 2x2 table.

    Rows are the binary feature, columns the group flag; omega = sqrt(chi2/n).
    """
    x = np.asarray(binary_feature, dtype=bool)
    g = np.asarray(group_flag, dtype=bool)
    if x.shape != g.shape:
        raise DataError("feature and group flag must have equal length")
    n = x.shape[0]
    observed = np.array(
        [
            [float(np.sum(x & g)), float(np.sum(x & ~g))],
            [float(np.sum(~x & g)), float(np.sum(~x & ~g))],
        ]
    )
    row = observed.sum(axis=1)
    col = observed.sum(axis=0)
    if np.any(row == 0) or np.any(col == 0):
        raise DataError("chi-squared 2x2 requires all margins to be non-empty")
    expected = np.outer(row, col) / n
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    return Chi2Result(statistic=chi2, df=1, p_value=chi2_sf(chi2, 1), omega=math.sqrt(chi2 / n))


@dataclass
class RobustnessEntry:
    feature: str
    statistic: float
    df: int
    p_value: float
    effect_size: float
    tag: str
    annotation: str


@dataclass
class RobustnessReport:
    entries: dict[str, RobustnessEntry]
    buyer_count_per_fold: list[int]
    alpha: float
    small_effect_cutoff: float


def _robustness_tag(p: float, effect: float, alpha: float, cutoff: float) -> str:
    if p >= alpha:
        return ROBUST_NS
    if effect < cutoff:
        return ROBUST_SMALL_EFFECT
    return NOT_ROBUST


def fold_robustness(
    shap_folds: Sequence[ShapMatrix],
    buyer_masks: Sequence,
    alpha: float = 0.05,
    small_effect_cutoff: float = 0.06,
) -> RobustnessReport:
    """Kruskal-Wallis across folds of the buyers' attribution values.

    A fold with no buyers is dropped with a warning; fewer than two surviving
    folds is an error. Tags: robust_ns when p >= alpha, robust_small_effect
    when significant but below the effect cutoff, not_robust otherwise.
    """
    if len(shap_folds) != len(buyer_masks):
        raise DataError("need one buyer mask per attribution fold")
    names = list(shap_folds[0].feature_names)
    for m in shap_folds:
        if list(m.feature_names) != names:
            raise DataError("attribution folds disagree on feature names")

    kept: list[tuple[ShapMatrix, np.ndarray]] = []
    buyer_counts: list[int] = []
    for m, mask in zip(shap_folds, buyer_masks):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape[0] != m.n_instances:
            raise DataError(f"fold {m.fold_id}: buyer mask length does not match instances")
        count = int(np.sum(mask))
        buyer_counts.append(count)
        if count == 0:
            warnings.warn(f"fold {m.fold_id} has no buyers and is dropped from the robustness test")
            continue
        kept.append((m, mask))
    if len(kept) < 2:
        raise DataError("fewer than 2 folds contain buyers; robustness test impossible")

    entries: dict[str, RobustnessEntry] = {}
    for j, name in enumerate(names):
        groups = [m.values[mask, j] for m, mask in kept]
        kw = kruskal_wallis(groups)
        tag = _robustness_tag(kw.p_value, kw.effect_size, alpha, small_effect_cutoff)
        annotation = f"{significance_stars(kw.p_value)} {kw.effect_size:.3f}"
        entries[name] = RobustnessEntry(
            feature=name,
            statistic=kw.statistic,
            df=kw.df,
            p_value=kw.p_value,
            effect_size=kw.effect_size,
            tag=tag,
            annotation=annotation,
        )
    return RobustnessReport(
        entries=entries,
        buyer_count_per_fold=buyer_counts,
        alpha=alpha,
        small_effect_cutoff=small_effect_cutoff,
    )


@dataclass
class ValidationEntry:
    feature: str
    test: str  # welch_t | student_t | chi_squared
    direction: str  # greater | less | two_sided
    statistic: float
    df: float
    p_value: float
    effect_size: float
    hypothesis_confirmed: bool


@dataclass
class ValidationReport:
    entries: list[ValidationEntry]
    alpha: float
    bonferroni: bool


def _is_binary(values: np.ndarray) -> bool:
    return bool(np.all((values == 0.0) | (values == 1.0)))


def validate_next_year(
    summaries: Sequence[FeatureSummary],
    feature_table,
    feature_names: Sequence[str],
    buyer_flags,
    alpha: float = 0.05,
    bonferroni: bool = False,
) -> ValidationReport:
    """Test each summarized feature's directional hypothesis on new data.

    ``feature_table`` holds the following year's feature values (rows align
    with ``buyer_flags``). Binary columns get the chi-squared test with the
    direction checked on group proportions; numeric columns get a one-sided
    t-test in the hypothesized direction — pooled variance when the sample
    variance ratio sits within [0.5, 2], Welch otherwise.
    """
    X = np.asarray(feature_table, dtype=float)
    buyers = np.asarray(buyer_flags, dtype=bool)
    if X.shape[0] != buyers.shape[0]:
        raise DataError("feature table and buyer flags must have equal length")
    names = list(feature_names)
    if X.shape[1] != len(names):
        raise DataError("feature table width does not match feature names")
    col_of = {name: j for j, name in enumerate(names)}

    threshold = alpha / len(summaries) if (bonferroni and summaries) else alpha
    entries: list[ValidationEntry] = []
    for s in summaries:
        if s.feature not in col_of:
            raise DataError(f"feature {s.feature!r} missing from the following year's table")
        col = X[:, col_of[s.feature]]
        direction = "greater" if s.direction > 0 else ("less" if s.direction < 0 else "two_sided")
        a = col[buyers]
        b = col[~buyers]
        if a.shape[0] == 0 or b.shape[0] == 0:
            raise DataError("both buyers and non-buyers must be present in the following year")
        if _is_binary(col):
            result = chi_squared_2x2(col.astype(bool), buyers)
            observed_sign = np.sign(float(np.mean(a)) - float(np.mean(b)))
            matches = direction == "two_sided" or observed_sign == s.direction
            confirmed = bool(result.p_value < threshold and matches)
            entries.append(
                ValidationEntry(
                    feature=s.feature,
                    test="chi_squared",
                    direction=direction,
                    statistic=result.statistic,
                    df=float(result.df),
                    p_value=result.p_value,
                    effect_size=result.omega,
                    hypothesis_confirmed=confirmed,
                )
            )
            continue
        try:
            va = float(np.var(a, ddof=1))
            vb = float(np.var(b, ddof=1))
            homogeneous = vb > 0 and 0.5 <= va / vb <= 2.0
            if homogeneous:
                t_result = student_t(a, b, direction)
                test_name = "student_t"
            else:
                t_result = welch_t(a, b, direction)
                test_name = "welch_t"
        except DataError:
            # constant in both groups: no evidence either way
            entries.append(
                ValidationEntry(
                    feature=s.feature,
                    test="welch_t",
                    direction=direction,
                    statistic=0.0,
                    df=float(a.shape[0] + b.shape[0] - 2),
                    p_value=1.0,
                    effect_size=0.0,
                    hypothesis_confirmed=False,
                )
            )
            continue
        entries.append(
            ValidationEntry(
                feature=s.feature,
                test=test_name,
                direction=direction,
                statistic=t_result.statistic,
                df=t_result.df,
                p_value=t_result.p_value,
                effect_size=t_result.cohens_d,
                hypothesis_confirmed=bool(t_result.p_value < threshold),
            )
        )
    return ValidationReport(entries=entries, alpha=alpha, bonferroni=bonferroni)
