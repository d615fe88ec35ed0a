"""
Seeded experiment runner: trials in parallel, metrics per mode, CSV summaries.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from geobudget.accountant import minimize_approx_gp
from geobudget.config import ExperimentConfig, GeobudgetConfig
from geobudget.engines import GeneratorManager
from geobudget.geometry import Rectangle
from geobudget.kde import kde_estimate, kde_truth
from geobudget.knn import knn_query, knn_truth, total_distance
from geobudget.metrics import ComponentSpec, MetricDescriptor
from geobudget.protocol import AnalystSession
from geobudget.range_count import multi_range_count, range_count, range_count_truth
from geobudget.threshold import threshold_query
from geobudget.utils import ensure_directory, make_rng

logger = logging.getLogger(__name__)

CSV_HEADER = ["query", "mode", "setting", "metric", "mean", "p25", "p75", "trials", "seed"]
ERROR_METRICS = {
    "range_count": "CountErr",
    "multi_query": "CountErr",
    "kde": "L1Err",
    "knn": "DistErr",
    "threshold": "Accuracy",
}
PAIRED_MODES = (("pm_point", "bm_point"), ("pm_dist", "bm_dist"), ("pm", "bm"))

# rng stream keys below the trial id
DATA_STREAM = 0
GEOMETRY_STREAM = 1
MODE_STREAM = 2


@dataclass
class MetricRow:
    trial: int
    metric: str
    value: float
    savings: float


def count_error(truth: float, estimate: float) -> float:
    """|C~ - C| / C; NaN when the true count is zero."""
    if truth == 0:
        return math.nan
    return abs(estimate - truth) / truth


def l1_error(truth: float, estimate: float) -> float:
    return abs(estimate - truth)


def dist_error(truth: float, estimate: float) -> float:
    """(Dist(J~, p) - Dist(J*, p)) / Dist(J*, p); NaN when the true neighbours sit on p."""
    if truth == 0:
        return math.nan
    return (estimate - truth) / truth


def privacy_savings(spent: Mapping[int, float], allocated: Mapping[int, float]) -> float:
    """Mean over users of the unspent share of their allocation."""
    if not allocated:
        return 0.0
    shares = [min(1.0, max(0.0, (rho - spent.get(i, 0.0)) / rho)) for i, rho in allocated.items()]
    return float(np.mean(shares))


def compute_metrics(query: str, truth: float, estimate: float, spent: Mapping[int, float],
                    allocated: Mapping[int, float], trial: int = 0) -> List[MetricRow]:
    if query in ("range_count", "multi_query"):
        value = count_error(truth, estimate)
    elif query == "kde":
        value = l1_error(truth, estimate)
    elif query == "knn":
        value = dist_error(truth, estimate)
    elif query == "threshold":
        value = 1.0 if bool(truth) == bool(estimate) else 0.0
    else:
        raise ValueError(f"Unknown query kind: {query}")
    if math.isnan(value):
        logger.warning(f"Trial {trial}: {ERROR_METRICS[query]} undefined for truth={truth}")
    savings = privacy_savings(spent, allocated)
    return [MetricRow(trial, ERROR_METRICS[query], value, savings), MetricRow(trial, "PrivSav", savings, savings)]


def summarize(values: Sequence[float]) -> Tuple[float, float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0 or np.all(np.isnan(arr)):
        return math.nan, math.nan, math.nan
    return float(np.nanmean(arr)), float(np.nanpercentile(arr, 25)), float(np.nanpercentile(arr, 75))


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else format(value, ".12g")


def write_csv(rows: Sequence[Dict[str, Any]], path: Path) -> None:
    ensure_directory(Path(path).parent)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=CSV_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _fmt(v) if isinstance(v, float) else v for key, v in row.items()})


class ExperimentPipeline:
    """Runs an experiment's trials for every mode and aggregates metric rows."""

    def __init__(self, config: GeobudgetConfig, generator_manager: GeneratorManager, max_workers: int = 4):
        self.config = config
        self.generator_manager = generator_manager
        self.max_workers = max_workers

    def _filter_budget(self, experiment: ExperimentConfig, total: float) -> float:
        """Map a CGP budget onto the filter's own units: itself for cgp, the tightest GP epsilon for approx_gp."""
        if experiment.filter_kind == "approx_gp":
            value, _ = minimize_approx_gp(total, experiment.delta, experiment.lam_value,
                                          **self.config.protocol.search_settings())
            return value
        return total

    def _session(self, experiment: ExperimentConfig, points: np.ndarray, rng: np.random.Generator) -> AnalystSession:
        budget = self._filter_budget(experiment, experiment.total_budget)
        return AnalystSession.from_points(
            points, budget, MetricDescriptor.euclidean(points.shape[1]), experiment.filter_kind, rng,
            delta=experiment.delta if experiment.filter_kind == "approx_gp" else None,
            lam=experiment.lam_value, search=self.config.protocol.search_settings(),
        )

    def _verify_ledger(self, experiment: ExperimentConfig, session: AnalystSession) -> None:
        totals: Dict[int, List[float]] = {}
        for record in session.transcript():
            totals.setdefault(record["user"], []).append(record["cost"])
        limit = self._filter_budget(experiment, experiment.total_budget)
        for user_id, costs in totals.items():
            charged = self._filter_budget(experiment, math.fsum(costs))
            if charged > limit:
                raise RuntimeError(f"User {user_id} was charged {charged} over budget {limit}")

    def _query_point(self, experiment: ExperimentConfig, points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """The configured center, or a uniform draw from the middle half of the data's bounding box."""
        if experiment.center is not None:
            return np.asarray(experiment.center, dtype=float)
        low, high = points.min(axis=0), points.max(axis=0)
        middle, quarter = (low + high) / 2, (high - low) / 4
        return rng.uniform(middle - quarter, middle + quarter)

    def run_trial(self, experiment: ExperimentConfig, mode: str, trial: int) -> List[MetricRow]:
        seed = experiment.seed
        data_rng = make_rng(seed, trial, DATA_STREAM)
        geometry_rng = make_rng(seed, trial, GEOMETRY_STREAM)
        mode_rng = make_rng(seed, trial, MODE_STREAM, experiment.modes.index(mode))
        elim = experiment.elimination
        query = experiment.query

        if query == "threshold":
            n_records = experiment.records
            positives = experiment.positives
            if positives is None:
                positives = int(data_rng.integers(0, n_records + 1))
            records = [1] * positives + [0] * (n_records - positives)
            result = threshold_query(records, experiment.q, experiment.rho, mode, elim.rounds, elim.split,
                                     elim.beta0, experiment.total_budget, mode_rng)
            truth = positives < experiment.q * n_records
            return compute_metrics(query, truth, result.answer, result.spent, result.allocated, trial)

        if query == "multi_query":
            trajectory = self.generator_manager.gen_trajectory(experiment.data, experiment.n, experiment.d,
                                                               experiment.m, data_rng)
            session = self._session(experiment, trajectory[0], mode_rng)
            queries = []
            for l in range(1, experiment.m + 1):
                if l > 1:
                    spec = ComponentSpec(l, MetricDescriptor.euclidean(experiment.d))
                    session.add_component_data(spec, dict(enumerate(trajectory[l - 1])))
                center = self._query_point(experiment, trajectory[l - 1], geometry_rng)
                queries.append((l, Rectangle.square(center, experiment.width)))
            results = multi_range_count(session, queries, experiment.total_budget, mode, elim.rounds, elim.split,
                                        elim.beta0, experiment.shift, self.config.protocol.schedule_start)
            self._verify_ledger(experiment, session)
            errors = [
                count_error(range_count_truth(trajectory[l - 1], rect), result.estimate)
                for (l, rect), result in zip(queries, results)
            ]
            error = math.nan if all(math.isnan(e) for e in errors) else float(np.nanmean(errors))
            spent = {i: session.spent(i) for i in session.user_ids}
            savings = privacy_savings(spent, {i: experiment.total_budget for i in session.user_ids})
            return [MetricRow(trial, "CountErr", error, savings), MetricRow(trial, "PrivSav", savings, savings)]

        points = self.generator_manager.gen_data(experiment.data, experiment.n, experiment.d, data_rng)
        session = self._session(experiment, points, mode_rng)
        center = self._query_point(experiment, points, geometry_rng)
        if query == "range_count":
            rect = Rectangle.square(center, experiment.width)
            result = range_count(session, rect, mode, experiment.rho, elim.rounds, elim.split, elim.beta0,
                                 experiment.shift)
            truth, estimate = range_count_truth(points, rect), result.estimate
        elif query == "kde":
            result = kde_estimate(session, center, experiment.bandwidth, mode, experiment.rho, elim.rounds,
                                  elim.split, elim.beta0)
            truth, estimate = kde_truth(points, center, experiment.bandwidth), result.estimate
        else:
            result = knn_query(session, center, experiment.k, mode, experiment.rho, elim.rounds, elim.split,
                               elim.beta0)
            truth = total_distance(points, center, knn_truth(points, center, experiment.k))
            estimate = total_distance(points, center, result.indices)
        self._verify_ledger(experiment, session)
        return compute_metrics(query, truth, estimate, result.spent, result.allocated, trial)

    def _run_mode(self, experiment: ExperimentConfig, mode: str) -> List[MetricRow]:
        rows: List[MetricRow] = []
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {executor.submit(self.run_trial, experiment, mode, t): t for t in range(experiment.trials)}
            for future in tqdm(as_completed(futures), total=len(futures), desc=f"{experiment.query}/{mode}"):
                rows.extend(future.result())
        return sorted(rows, key=lambda row: (row.trial, row.metric))

    def run_experiment(self, experiment: ExperimentConfig, out_path: Optional[Path] = None) -> List[Dict[str, Any]]:
        """Run every configured mode; returns summary rows and writes them to out_path if given."""
        logger.info(f"Running {experiment.query} ({experiment.setting}) modes={experiment.modes} "
                     f"trials={experiment.trials} seed={experiment.seed}")
        per_mode = {mode: self._run_mode(experiment, mode) for mode in experiment.modes}
        rows = []
        for mode, metric_rows in per_mode.items():
            for metric in (ERROR_METRICS[experiment.query], "PrivSav"):
                mean, p25, p75 = summarize([r.value for r in metric_rows if r.metric == metric])
                rows.append(self._row(experiment, mode, metric, mean, p25, p75))
        rows.extend(self._improvement_rows(experiment, per_mode))
        if out_path is not None:
            write_csv(rows, Path(out_path))
            logger.info(f"Wrote {len(rows)} rows to {out_path}")
        return rows

    def _improvement_rows(self, experiment: ExperimentConfig, per_mode: Dict[str, List[MetricRow]]):
        """Per-trial paired difference baseline minus privacy-saving; positive favours the latter."""
        metric = ERROR_METRICS[experiment.query]
        rows = []
        for pm, bm in PAIRED_MODES:
            if pm not in per_mode or bm not in per_mode:
                continue
            pm_values = {r.trial: r.value for r in per_mode[pm] if r.metric == metric}
            bm_values = {r.trial: r.value for r in per_mode[bm] if r.metric == metric}
            if metric == "Accuracy":
                deltas = [pm_values[t] - bm_values[t] for t in sorted(pm_values)]
            else:
                deltas = [bm_values[t] - pm_values[t] for t in sorted(pm_values)]
            mean, p25, p75 = summarize(deltas)
            rows.append(self._row(experiment, f"{pm}-vs-{bm}", f"{metric}_improvement", mean, p25, p75))
        return rows

    @staticmethod
    def _row(experiment: ExperimentConfig, mode: str, metric: str, mean: float, p25: float, p75: float):
        return {
            "query": experiment.query,
            "mode": mode,
            "setting": experiment.setting,
            "metric": metric,
            "mean": mean,
            "p25": p25,
            "p75": p75,
            "trials": experiment.trials,
            "seed": experiment.seed,
        }

