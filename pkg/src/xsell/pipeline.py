"""Batch orchestration: generate/ingest -> prepare -> tune -> train ->
evaluate -> explain -> robustness -> validate -> report.

Every stage reads its inputs from the output directory's prior artifacts and
writes byte-stable files, so stages can run individually or composed via
``run``; artifact bytes are identical either way and independent of the
worker thread count.
"""

from __future__ import annotations

import csv
import io
import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

import numpy as np

from .artifacts import Manifest, atomic_write_json, atomic_write_text
from .crossval import FoldAssignment, MetricsReport, stratified_kfold
from .ensembles import (
    DEFAULT_SEARCH_SPACE,
    EnsembleModel,
    _derived_seed,
    make_params,
    predict_proba_many,
    random_param_search,
)
from .errors import ConfigError, DataError, NumericError

# a prediction case failing for data or numeric reasons is recorded and
# skipped; the run continues with the remaining cases
_CASE_FAILURE_ERRORS = (DataError, NumericError)
from .metrics import confusion, f_beta, precision, recall, roc_auc
from .prep import assemble_case_dataset, next_year_feature_table
from .schema import CaseDataset, ContractType, CrossSellCase, NICK_TYPE, load_customer_table, save_customer_table
from .shapley import FeatureSummary, ShapMatrix, ensemble_shap, shap_summary
from .stats import fold_robustness, validate_next_year
from .synth import GeneratorConfig, generate_population

STAGES = (
    "generate",
    "prepare",
    "tune",
    "train",
    "evaluate",
    "explain",
    "robustness",
    "validate",
    "report",
)

ENV_OUTPUT_DIR = "XSELL_OUTPUT_DIR"
ENV_THREADS = "XSELL_THREADS"


@dataclass
class PipelineConfig:
    seed: int
    output_dir: Path
    data: dict
    cases: list[CrossSellCase]
    models: list[str]
    params: dict = field(default_factory=dict)
    k_folds: int = 10
    threshold: float = 0.5
    alpha: float = 0.05
    small_effect_cutoff: float = 0.06
    top_k: int = 10
    summary_top_k: int = 20
    threads: int = 1
    tune: dict = field(default_factory=dict)
    emit: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cases:
            raise ConfigError("config needs at least one prediction case")
        if not self.models:
            raise ConfigError("config needs at least one model kind")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be at least 2")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if "synthetic" not in self.data and "customers_csv" not in self.data:
            raise ConfigError("config data must name a synthetic generator or a customers_csv")
        self.emit = {
            "metrics": True,
            "shap": True,
            "robustness": True,
            "validation": True,
            "plot_data": True,
            **self.emit,
        }

    def fingerprint(self) -> str:
        """Stable digest of everything that determines artifact content.

        Runtime knobs (threads, output_dir) are excluded on purpose.
        """
        payload = {
            "seed": self.seed,
            "data": self.data,
            "cases": [c.to_json_dict() for c in self.cases],
            "models": self.models,
            "params": self.params,
            "k_folds": self.k_folds,
            "threshold": self.threshold,
            "alpha": self.alpha,
            "small_effect_cutoff": self.small_effect_cutoff,
            "top_k": self.top_k,
            "summary_top_k": self.summary_top_k,
            "tune": self.tune,
            "emit": self.emit,
        }
        return sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    return config_from_dict(raw, base_dir=path.parent)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> PipelineConfig:
    base_dir = base_dir or Path.cwd()
    try:
        cases = [
            CrossSellCase(
                owner_type=ContractType(c["owner"]) if c["owner"] in ContractType._value2member_map_ else NICK_TYPE[c["owner"]],
                target_type=ContractType(c["target"]) if c["target"] in ContractType._value2member_map_ else NICK_TYPE[c["target"]],
                train_year=int(c["train_year"]),
                test_year=int(c.get("test_year", int(c["train_year"]) + 1)),
            )
            for c in raw["cases"]
        ]
        output_dir = Path(os.environ.get(ENV_OUTPUT_DIR, raw["output_dir"]))
        if not output_dir.is_absolute():
            output_dir = base_dir / output_dir
        data = dict(raw["data"])
        if "customers_csv" in data:
            csv_path = Path(data["customers_csv"])
            if not csv_path.is_absolute():
                csv_path = base_dir / csv_path
            data["customers_csv"] = str(csv_path)
        threads = int(os.environ.get(ENV_THREADS, raw.get("threads", 1)))
        return PipelineConfig(
            seed=int(raw["seed"]),
            output_dir=output_dir,
            data=data,
            cases=cases,
            models=list(raw["models"]),
            params=dict(raw.get("params", {})),
            k_folds=int(raw.get("k_folds", 10)),
            threshold=float(raw.get("threshold", 0.5)),
            alpha=float(raw.get("alpha", 0.05)),
            small_effect_cutoff=float(raw.get("small_effect_cutoff", 0.06)),
            top_k=int(raw.get("top_k", 10)),
            summary_top_k=int(raw.get("summary_top_k", 20)),
            threads=threads,
            tune=dict(raw.get("tune", {})),
            emit=dict(raw.get("emit", {})),
        )
    except KeyError as exc:
        raise ConfigError(f"config misses required field {exc}")


def _case_dir(cfg: PipelineConfig, case: CrossSellCase) -> Path:
    return cfg.output_dir / "cases" / case.tag


def _model_dir(cfg: PipelineConfig, case: CrossSellCase, kind: str) -> Path:
    return cfg.output_dir / "models" / case.tag / kind


def _customers_path(cfg: PipelineConfig) -> Path:
    generated = cfg.output_dir / "data" / "customers.csv"
    if "synthetic" in cfg.data:
        return generated
    return Path(cfg.data["customers_csv"])


def _load_customers(cfg: PipelineConfig):
    path = _customers_path(cfg)
    if not path.exists():
        hint = "run the 'generate' stage first" if "synthetic" in cfg.data else "check the configured path"
        raise DataError(f"customer table not found at {path}; {hint}")
    return load_customer_table(path)


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def stage_generate(cfg: PipelineConfig) -> list[Path]:
    if "synthetic" not in cfg.data:
        return []  # ingesting an external customer table; nothing to generate
    gen_dict = dict(cfg.data["synthetic"])
    gen_dict.setdefault("seed", cfg.seed)
    gen_cfg = GeneratorConfig.from_json_dict(gen_dict)
    table, truth = generate_population(gen_cfg)
    out = cfg.output_dir / "data"
    out.mkdir(parents=True, exist_ok=True)
    customers = out / "customers.csv"
    tmp = customers.with_name(customers.name + ".tmp")
    save_customer_table(table, tmp)
    os.replace(tmp, customers)
    truth_path = out / "truth.json"
    atomic_write_json(truth_path, truth.to_json_dict())
    return [customers, truth_path]


def stage_prepare(cfg: PipelineConfig, failures: list | None = None) -> list[Path]:
    customers = _load_customers(cfg)
    written: list[Path] = []
    for case in cfg.cases:
        try:
            dataset = assemble_case_dataset(customers, case, seed=cfg.seed)
        except DataError as exc:
            _record_failure(failures, "prepare", case.tag, exc)
            continue
        case_dir = _case_dir(cfg, case)
        case_dir.mkdir(parents=True, exist_ok=True)
        features = case_dir / "features.csv"
        meta = case_dir / "metadata.json"
        tmp_f, tmp_m = features.with_suffix(".csv.tmp"), meta.with_suffix(".json.tmp")
        dataset.save(tmp_f, tmp_m)
        os.replace(tmp_f, features)
        os.replace(tmp_m, meta)
        written += [features, meta]
    if not written:
        raise DataError("prepare produced no case datasets; every case failed")
    return written


def _load_dataset(cfg: PipelineConfig, case: CrossSellCase) -> CaseDataset:
    case_dir = _case_dir(cfg, case)
    features, meta = case_dir / "features.csv", case_dir / "metadata.json"
    if not features.exists() or not meta.exists():
        raise DataError(f"case {case.tag}: prepared dataset missing; run the 'prepare' stage first")
    return CaseDataset.load(features, meta)


def _tuned_params(cfg: PipelineConfig, kind: str) -> dict:
    overrides = dict(cfg.params.get(kind, {}))
    tuned_path = cfg.output_dir / "tuning" / f"{kind}.json"
    if tuned_path.exists():
        best = json.loads(tuned_path.read_text())["best"]
        overrides = {**best, **overrides}  # explicit config overrides win over tuning
    return overrides


def stage_tune(cfg: PipelineConfig) -> list[Path]:
    if not cfg.tune.get("enabled", False):
        return []
    tune_tag = cfg.tune.get("case", cfg.cases[0].tag)
    matches = [c for c in cfg.cases if c.tag == tune_tag]
    if not matches:
        raise ConfigError(f"tune case {tune_tag!r} is not among the configured cases")
    dataset = _load_dataset(cfg, matches[0])
    n_iter = int(cfg.tune.get("n_iter", 10))
    k = int(cfg.tune.get("k_folds", cfg.k_folds))
    written = []
    out = cfg.output_dir / "tuning"
    for kind in cfg.models:
        space = cfg.tune.get("space", {}).get(kind, DEFAULT_SEARCH_SPACE[kind])
        best, table = random_param_search(
            space,
            dataset.rows,
            dataset.labels,
            kind,
            n_iter=n_iter,
            k_folds=k,
            seed=_derived_seed(cfg.seed, zlib.crc32(kind.encode())),
        )
        path = out / f"{kind}.json"
        atomic_write_json(path, {"case": tune_tag, "best": best, "table": table})
        written.append(path)
    return written


def _fit_fold(args):
    from .crossval import _fit_model

    kind, X, y, params, seed, feature_names, fold = args
    model = _fit_model(kind, X, y, params, seed, feature_names)
    return fold, model


def stage_train(cfg: PipelineConfig, failures: list | None = None) -> list[Path]:
    written: list[Path] = []
    for case in cfg.cases:
        try:
            dataset = _load_dataset(cfg, case)
            folds = stratified_kfold(dataset.labels, cfg.k_folds, seed=_derived_seed(cfg.seed, 101))
            for kind in cfg.models:
                params = make_params(kind, _tuned_params(cfg, kind))
                model_dir = _model_dir(cfg, case, kind)
                model_dir.mkdir(parents=True, exist_ok=True)
                jobs = [
                    (
                        kind,
                        dataset.rows[folds.train_indices(f)],
                        dataset.labels[folds.train_indices(f)],
                        params,
                        _derived_seed(cfg.seed, 202, f),
                        dataset.feature_names,
                        f,
                    )
                    for f in range(cfg.k_folds)
                ]
                if cfg.threads > 1:
                    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                        results = dict(pool.map(_fit_fold, jobs))
                else:
                    results = dict(map(_fit_fold, jobs))
                for f in range(cfg.k_folds):
                    path = model_dir / f"fold_{f}.json"
                    tmp = path.with_name(path.name + ".tmp")
                    results[f].save(tmp)
                    os.replace(tmp, path)
                    written.append(path)
                folds_path = model_dir / "folds.json"
                atomic_write_json(
                    folds_path,
                    {"k": folds.k, "seed": folds.seed, "fold_of_row": folds.fold_of_row.tolist()},
                )
                written.append(folds_path)
        except _CASE_FAILURE_ERRORS as exc:
            _record_failure(failures, "train", case.tag, exc)
            continue
    if not written:
        raise DataError("train produced no models; every case failed")
    return written


def _load_folds(model_dir: Path) -> FoldAssignment:
    path = model_dir / "folds.json"
    if not path.exists():
        raise DataError(f"fold assignment missing at {path}; run the 'train' stage first")
    d = json.loads(path.read_text())
    return FoldAssignment(np.asarray(d["fold_of_row"], dtype=np.int64), int(d["k"]), int(d["seed"]))


def _load_fold_models(model_dir: Path, k: int) -> list[EnsembleModel]:
    models = []
    for f in range(k):
        path = model_dir / f"fold_{f}.json"
        if not path.exists():
            raise DataError(f"model missing at {path}; run the 'train' stage first")
        models.append(EnsembleModel.load(path))
    return models


def stage_evaluate(cfg: PipelineConfig, failures: list | None = None) -> list[Path]:
    from .crossval import _fold_metrics, _METRIC_KEYS

    written: list[Path] = []
    metrics_dir = cfg.output_dir / "metrics"
    for case in cfg.cases:
        try:
            dataset = _load_dataset(cfg, case)
            for kind in cfg.models:
                model_dir = _model_dir(cfg, case, kind)
                folds = _load_folds(model_dir)
                models = _load_fold_models(model_dir, folds.k)
                oof = np.full(dataset.labels.shape[0], np.nan)
                per_fold = []
                for f in range(folds.k):
                    test_idx = folds.test_indices(f)
                    scores = predict_proba_many(models[f], dataset.rows[test_idx])
                    oof[test_idx] = scores
                    per_fold.append(_fold_metrics(f, dataset.labels[test_idx], scores, cfg.threshold))
                mean = {key: float(np.mean([m[key] for m in per_fold])) for key in _METRIC_KEYS}
                report = MetricsReport(
                    per_fold=per_fold,
                    mean=mean,
                    model_kind=kind,
                    seed=cfg.seed,
                    case=case.to_json_dict(),
                )
                path = metrics_dir / f"{case.tag}_{kind}.json"
                atomic_write_json(path, report.to_json_dict())
                written.append(path)
                scores_path = metrics_dir / f"{case.tag}_{kind}_scores.csv"
                _write_csv(
                    scores_path,
                    ["customer_id", "fold", "label", "score"],
                    [
                        [dataset.customer_ids[i], int(folds.fold_of_row[i]), int(dataset.labels[i]), repr(float(oof[i]))]
                        for i in range(len(dataset.customer_ids))
                    ],
                )
                written.append(scores_path)
        except _CASE_FAILURE_ERRORS as exc:
            _record_failure(failures, "evaluate", case.tag, exc)
            continue
    if not written:
        raise DataError("evaluate wrote no reports; every case failed")
    return written


def _explain_fold(args):
    model, rows, ids, fold, ref = args
    return fold, ensemble_shap(model, rows, fold_id=fold, instance_ids=ids, model_ref=ref)


def stage_explain(cfg: PipelineConfig, failures: list | None = None) -> list[Path]:
    if not cfg.emit["shap"]:
        return []
    written: list[Path] = []
    for case in cfg.cases:
        try:
            dataset = _load_dataset(cfg, case)
            for kind in cfg.models:
                model_dir = _model_dir(cfg, case, kind)
                folds = _load_folds(model_dir)
                models = _load_fold_models(model_dir, folds.k)
                shap_dir = cfg.output_dir / "shap" / case.tag / kind
                shap_dir.mkdir(parents=True, exist_ok=True)
                jobs = []
                for f in range(folds.k):
                    test_idx = folds.test_indices(f)
                    ids = [dataset.customer_ids[i] for i in test_idx]
                    jobs.append((models[f], dataset.rows[test_idx], ids, f))
                if cfg.threads > 1:
                    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                        fold_shap = dict(pool.map(_explain_fold, jobs))
                else:
                    fold_shap = dict(map(_explain_fold, jobs))
                for f in range(folds.k):
                    csv_path = shap_dir / f"fold_{f}.csv"
                    json_path = shap_dir / f"fold_{f}.json"
                    tmp_c = csv_path.with_name(csv_path.name + ".tmp")
                    tmp_j = json_path.with_name(json_path.name + ".tmp")
                    fold_shap[f].save(tmp_c, tmp_j)
                    os.replace(tmp_c, csv_path)
                    os.replace(tmp_j, json_path)
                    written += [csv_path, json_path]
                # out-of-fold aggregate in original row order for the summary
                order = np.argsort(
                    np.concatenate([folds.test_indices(f) for f in range(folds.k)]), kind="stable"
                )
                all_values = np.concatenate([fold_shap[f].values for f in range(folds.k)])[order]
                all_ids = [
                    i
                    for f in range(folds.k)
                    for i in fold_shap[f].instance_ids
                ]
                all_ids = [all_ids[i] for i in order]
                base = float(np.mean([fold_shap[f].base_value for f in range(folds.k)]))
                aggregate = ShapMatrix(
                    values=all_values,
                    base_value=base,
                    feature_names=dataset.feature_names,
                    fold_id=-1,
                    instance_ids=all_ids,
                )
                summaries, points = shap_summary(
                    aggregate, dataset.rows, top_k=cfg.summary_top_k, jitter_seed=_derived_seed(cfg.seed, 303)
                )
                summary_json = shap_dir / "summary.json"
                atomic_write_json(
                    summary_json,
                    [
                        {"rank": s.rank, "feature": s.feature, "mean_abs_shap": s.mean_abs_shap, "direction": s.direction}
                        for s in summaries
                    ],
                )
                written.append(summary_json)
                if cfg.emit["plot_data"]:
                    points_csv = shap_dir / "beeswarm_points.csv"
                    _write_csv(
                        points_csv,
                        ["instance_id", "feature", "shap_value", "feature_value_scaled", "jitter"],
                        [
                            [p.instance_id, p.feature, repr(p.shap_value), repr(p.feature_value_scaled), repr(p.jitter)]
                            for p in points
                        ],
                    )
                    written.append(points_csv)
        except _CASE_FAILURE_ERRORS as exc:
            _record_failure(failures, "explain", case.tag, exc)
            continue
    if not written:
        raise DataError("explain wrote no attributions; every case failed")
    return written


def _load_summary(cfg: PipelineConfig, case: CrossSellCase, kind: str) -> list[FeatureSummary]:
    path = cfg.output_dir / "shap" / case.tag / kind / "summary.json"
    if not path.exists():
        raise DataError(f"attribution summary missing at {path}; run the 'explain' stage first")
    return [
        FeatureSummary(rank=d["rank"], feature=d["feature"], mean_abs_shap=d["mean_abs_shap"], direction=d["direction"])
        for d in json.loads(path.read_text())
    ]


def stage_robustness(cfg: PipelineConfig, failures: list | None = None) -> list[Path]:
    if not cfg.emit["robustness"]:
        return []
    written: list[Path] = []
    for case in cfg.cases:
        try:
            dataset = _load_dataset(cfg, case)
            label_of = dict(zip(dataset.customer_ids, dataset.labels.tolist()))
            for kind in cfg.models:
                shap_dir = cfg.output_dir / "shap" / case.tag / kind
                folds = _load_folds(_model_dir(cfg, case, kind))
                shap_folds, buyer_masks = [], []
                for f in range(folds.k):
                    csv_path, json_path = shap_dir / f"fold_{f}.csv", shap_dir / f"fold_{f}.json"
                    if not csv_path.exists():
                        raise DataError(f"attributions missing at {csv_path}; run the 'explain' stage first")
                    m = ShapMatrix.load(csv_path, json_path)
                    shap_folds.append(m)
                    buyer_masks.append(np.array([label_of[i] for i in m.instance_ids], dtype=bool))
                report = fold_robustness(shap_folds, buyer_masks, cfg.alpha, cfg.small_effect_cutoff)
                summaries = _load_summary(cfg, case, kind)
                rows = []
                for s in summaries:
                    e = report.entries[s.feature]
                    rows.append(
                        [s.rank, s.feature, e.annotation.split(" ")[0], repr(e.effect_size), repr(e.p_value), e.tag]
                    )
                out_csv = cfg.output_dir / "robustness" / f"{case.tag}_{kind}.csv"
                _write_csv(out_csv, ["rank", "feature", "stars", "effect_size", "p_value", "tag"], rows)
                out_json = cfg.output_dir / "robustness" / f"{case.tag}_{kind}.json"
                atomic_write_json(
                    out_json,
                    {
                        "alpha": report.alpha,
                        "small_effect_cutoff": report.small_effect_cutoff,
                        "buyer_count_per_fold": report.buyer_count_per_fold,
                        "features": {
                            name: {
                                "statistic": e.statistic,
                                "df": e.df,
                                "p_value": e.p_value,
                                "effect_size": e.effect_size,
                                "tag": e.tag,
                                "annotation": e.annotation,
                            }
                            for name, e in report.entries.items()
                        },
                    },
                )
                written += [out_csv, out_json]
        except _CASE_FAILURE_ERRORS as exc:
            _record_failure(failures, "robustness", case.tag, exc)
            continue
    if not written:
        raise DataError("robustness wrote no reports; every case failed")
    return written


def stage_validate(cfg: PipelineConfig, failures: list | None = None) -> list[Path]:
    if not cfg.emit["validation"]:
        return []
    customers = _load_customers(cfg)
    written: list[Path] = []
    for case in cfg.cases:
        try:
            dataset = _load_dataset(cfg, case)
            matrix, outcomes = next_year_feature_table(customers, dataset)
            for kind in cfg.models:
                summaries = _load_summary(cfg, case, kind)[: cfg.top_k]
                report = validate_next_year(
                    summaries, matrix, dataset.feature_names, outcomes, alpha=cfg.alpha
                )
                rows = [
                    [
                        i + 1,
                        e.feature,
                        repr(round(e.df, 2)),
                        repr(round(e.statistic, 4)),
                        repr(e.p_value),
                        repr(round(e.effect_size, 4)),
                        e.test,
                        e.direction,
                        int(e.hypothesis_confirmed),
                    ]
                    for i, e in enumerate(report.entries)
                ]
                out_csv = cfg.output_dir / "validation" / f"{case.tag}_{kind}.csv"
                _write_csv(
                    out_csv,
                    ["#", "variable", "df", "statistic", "p", "eff_size", "test", "direction", "confirmed"],
                    rows,
                )
                out_json = cfg.output_dir / "validation" / f"{case.tag}_{kind}.json"
                atomic_write_json(
                    out_json,
                    {
                        "alpha": report.alpha,
                        "bonferroni": report.bonferroni,
                        "entries": [
                            {
                                "feature": e.feature,
                                "test": e.test,
                                "direction": e.direction,
                                "statistic": e.statistic,
                                "df": e.df,
                                "p_value": e.p_value,
                                "effect_size": e.effect_size,
                                "hypothesis_confirmed": e.hypothesis_confirmed,
                            }
                            for e in report.entries
                        ],
                    },
                )
                written += [out_csv, out_json]
        except _CASE_FAILURE_ERRORS as exc:
            _record_failure(failures, "validate", case.tag, exc)
            continue
    if not written:
        raise DataError("validate wrote no reports; every case failed")
    return written


def stage_report(cfg: PipelineConfig, failures: list | None = None) -> list[Path]:
    report_dir = cfg.output_dir / "report"
    written: list[Path] = []

    # observation counts per case
    case_rows = []
    for case in cfg.cases:
        try:
            dataset = _load_dataset(cfg, case)
        except DataError:
            continue
        positives = int(np.sum(dataset.labels))
        case_rows.append(
            [
                f"{case.train_year}/{case.test_year}",
                case.tag,
                len(dataset.customer_ids),
                positives,
                repr(round(positives / len(dataset.customer_ids), 4)),
            ]
        )
    if case_rows:
        path = report_dir / "table_2.csv"
        _write_csv(path, ["years", "case", "observations", "positives", "positive_ratio"], case_rows)
        written.append(path)

    # metrics, wide per model kind
    header = ["years", "case"]
    for kind in cfg.models:
        header += [f"auc_{kind}", f"precision_{kind}", f"recall_{kind}", f"f2_{kind}"]
    metric_rows = []
    auc_rows = []
    for case in cfg.cases:
        row = [f"{case.train_year}/{case.test_year}", case.tag]
        complete = True
        for kind in cfg.models:
            path = cfg.output_dir / "metrics" / f"{case.tag}_{kind}.json"
            if not path.exists():
                complete = False
                break
            mean = json.loads(path.read_text())["mean"]
            row += [repr(round(mean["auc"], 3)), repr(round(mean["precision"], 3)), repr(round(mean["recall"], 3)), repr(round(mean["f2"], 3))]
            auc_rows.append([case.tag, case.train_year, case.test_year, kind, repr(mean["auc"])])
        if complete:
            metric_rows.append(row)
    if metric_rows:
        path = report_dir / "table_3.csv"
        _write_csv(path, header, metric_rows)
        written.append(path)
        path = report_dir / "figure_2.csv"
        _write_csv(path, ["case", "train_year", "test_year", "model", "auc"], auc_rows)
        written.append(path)

    # next-year validation, stacked
    validation_rows = []
    for case in cfg.cases:
        for kind in cfg.models:
            path = cfg.output_dir / "validation" / f"{case.tag}_{kind}.json"
            if not path.exists():
                continue
            for i, e in enumerate(json.loads(path.read_text())["entries"]):
                validation_rows.append(
                    [
                        case.tag,
                        kind,
                        i + 1,
                        e["feature"],
                        repr(round(e["df"], 2)),
                        repr(round(e["statistic"], 4)),
                        repr(e["p_value"]),
                        repr(round(e["effect_size"], 4)),
                        int(e["hypothesis_confirmed"]),
                    ]
                )
    if validation_rows:
        path = report_dir / "table_4.csv"
        _write_csv(
            path,
            ["case", "model", "#", "variable", "df", "statistic", "p", "eff_size", "confirmed"],
            validation_rows,
        )
        written.append(path)

    # robustness annotations in ranking order
    figure3_rows = []
    for case in cfg.cases:
        for kind in cfg.models:
            path = cfg.output_dir / "robustness" / f"{case.tag}_{kind}.csv"
            if not path.exists():
                continue
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                next(reader)
                for rec in reader:
                    figure3_rows.append([case.tag, kind] + rec)
    if figure3_rows:
        path = report_dir / "figure_3.csv"
        _write_csv(
            path,
            ["case", "model", "rank", "feature", "stars", "effect_size", "p_value", "tag"],
            figure3_rows,
        )
        written.append(path)
    if not written:
        raise DataError("report found no upstream artifacts; run earlier stages first")
    return written


_STAGE_FUNCS = {
    "generate": stage_generate,
    "prepare": stage_prepare,
    "tune": stage_tune,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "explain": stage_explain,
    "robustness": stage_robustness,
    "validate": stage_validate,
    "report": stage_report,
}

_CASE_AWARE = {"prepare", "train", "evaluate", "explain", "robustness", "validate", "report"}


def _record_failure(failures, stage: str, case: str, exc: Exception) -> None:
    if failures is None:
        raise exc
    failures.append({"stage": stage, "case": case, "error": str(exc)})


def _check_inputs(cfg: PipelineConfig) -> None:
    if "customers_csv" in cfg.data and not Path(cfg.data["customers_csv"]).exists():
        raise DataError(f"configured customer table does not exist: {cfg.data['customers_csv']}")


def run_stage(cfg: PipelineConfig, stage: str, failures: list | None = None) -> list[Path]:
    if stage not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    _check_inputs(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    func = _STAGE_FUNCS[stage]
    written = func(cfg, failures) if stage in _CASE_AWARE else func(cfg)
    manifest = Manifest.load_or_new(cfg.output_dir)
    manifest.config_fingerprint = cfg.fingerprint()
    for path in written:
        manifest.record(path)
    if failures:
        manifest.failures = failures
    manifest.save()
    return written


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute all stages; a failing case is recorded and skipped, the run
    continues. Returns the manifest payload."""
    failures: list[dict] = []
    for stage in STAGES:
        run_stage(cfg, stage, failures)
    manifest = Manifest.load_or_new(cfg.output_dir)
    return {
        "manifest_hash": manifest.manifest_hash(),
        "artifacts": manifest.entries,
        "failures": manifest.failures,
    }
