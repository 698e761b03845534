"""
Feedback-loop simulation.

Each iteration trains a recommender on the current log, recommends the top-N
unobserved items to every user, records the selected metrics, and appends
the recommendations (with their predicted ratings as the "true" ratings) to
the log for the next iteration.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from . import metrics as M
from .dataset import InteractionLog, check_groups, split_train_test
from .errors import InvariantViolation, MetricError, SimulationAborted
from .recsys import Hyperparams, RecommendationList, recommend_top_n, train
from .seeding import derive_seed

_log = logging.getLogger(__name__)

METRICS = ("global_gini", "within_group_gini", "dynamic_delta_gap", "between_group_gap", "group_cosine")
GROUP_METRICS = frozenset(METRICS[1:])

# seed streams under the per-iteration seed
_SPLIT, _GAP_MODEL, _LOOP_MODEL = 0, 1, 2


@dataclass(frozen=True)
class SimulationConfig:
    """
    Settings for one feedback-loop run (one algorithm on one dataset).
    """

    hyperparams: Hyperparams
    iterations: int = 40
    top_n: int = 10
    seed: int = 0
    metrics: tuple[str, ...] = METRICS
    groups: tuple[str, str] = ("M", "F")
    test_fraction: float = 0.2
    dataset: str = "movielens"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.top_n < 1:
            raise ValueError("top_n must be at least 1")
        unknown = [m for m in self.metrics if m not in METRICS]
        if unknown:
            raise ValueError(f"unknown metrics {unknown}; expected a subset of {METRICS}")
        if not self.metrics:
            raise ValueError("no metrics selected")
        if len(self.groups) != 2 or self.groups[0] == self.groups[1]:
            raise ValueError("groups must name two distinct labels")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        object.__setattr__(self, "metrics", tuple(m for m in METRICS if m in self.metrics))
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def algorithm(self) -> str:
        return self.hyperparams.algorithm

    @property
    def needs_groups(self) -> bool:
        return any(m in GROUP_METRICS for m in self.metrics)

    @property
    def pair_label(self) -> str:
        return f"{self.groups[0]}|{self.groups[1]}"


@dataclass(frozen=True)
class MetricRecord:
    iteration: int
    algorithm: str
    dataset: str
    metric: str
    group: str
    value: float


@dataclass
class MetricSeries:
    """
    Metric records of a run, plus the log size after each iteration's append.
    """

    records: list[MetricRecord] = field(default_factory=list)
    log_sizes: list[int] = field(default_factory=list)
    appended: list[int] = field(default_factory=list)
    final_log: InteractionLog | None = None

    def __len__(self):
        return len(self.records)

    def sorted_records(self) -> list[MetricRecord]:
        return sorted(self.records, key=lambda r: (r.iteration, r.metric, r.group))

    def values(self, metric: str, group: str) -> list[float]:
        "Values of one metric/group in iteration order."
        recs = sorted((r for r in self.records if r.metric == metric and r.group == group), key=lambda r: r.iteration)
        return [r.value for r in recs]

    def series(self) -> dict[tuple[str, str], dict[int, float]]:
        out: dict[tuple[str, str], dict[int, float]] = {}
        for r in self.records:
            out.setdefault((r.metric, r.group), {})[r.iteration] = r.value
        return out


def _group_members(log: InteractionLog, groups: Mapping[int, str], label: str) -> list[int]:
    users = M.group_users(log, groups, label)
    if not users:
        raise MetricError(f"group {label!r} has no users in the log")
    return users


def _rec_gap(recs: RecommendationList, popularity, users) -> float:
    lists = recs.items_by_user()
    served = [u for u in users if lists.get(u)]
    if not served:
        raise MetricError("no user in the group received recommendations")
    return M.gap(lists, popularity, served)


def run_delta_gap_iteration(
    log: InteractionLog, groups: Mapping[int, str], config: SimulationConfig, seed_t: int
) -> tuple[dict[str, float], RecommendationList]:
    """
    One pass of the dynamic delta-GAP procedure.

    The log is split per user; profile GAP per group and the popularity table
    come from the training part, the model is trained on it, and the top-N
    recommendations are drawn from items unobserved in the *full* log.

    Returns:
        delta GAP per configured group, and the recommendations.
    """
    train_log, _ = split_train_test(log, config.test_fraction, derive_seed(seed_t, _SPLIT))
    # items seen only in the test part score 0 under training popularity
    pop = M.popularity_scores(train_log, item_universe=log.item_ids)
    profiles = train_log.profiles()
    params = config.hyperparams.with_seed(derive_seed(seed_t, _GAP_MODEL, config.hyperparams.train_seed))
    model = train(params, train_log)
    recs = recommend_top_n(model, log, config.top_n)
    out = {}
    for g in config.groups:
        users = _group_members(log, groups, g)
        pair = M.GapPair(M.gap(profiles, pop, users), _rec_gap(recs, pop, users))
        if pair.gap_p <= 0:
            raise MetricError(f"profile GAP of group {g!r} is 0; delta GAP is singular")
        out[g] = M.delta_gap(pair)
    return out, recs


def compute_iteration_metrics(
    snapshot: InteractionLog,
    recs: RecommendationList,
    groups: Mapping[int, str],
    config: SimulationConfig,
    *,
    iteration: int = 1,
    delta_gaps: Mapping[str, float] | None = None,
) -> list[M.GroupMetricValue]:
    """
    Evaluate the configured metrics on a pre-append snapshot and the
    iteration's recommendations.

    ``delta_gaps`` supplies already-computed dynamic delta-GAP values; if it
    is omitted and the metric is selected, the procedure is run here.

    Raises:
        SimulationAborted: naming the metric that failed.
    """
    if not len(recs) or recs.n_pairs == 0:
        raise SimulationAborted("no recommendations were produced", iteration)
    g, h = config.groups
    pair = config.pair_label
    out: list[M.GroupMetricValue] = []
    for metric in config.metrics:
        try:
            if metric == "global_gini":
                out.append(M.GroupMetricValue(metric, "ALL", M.gini(M.popularity_scores(snapshot).scores)))
            elif metric == "within_group_gini":
                for label, v in M.within_group_gini(snapshot, groups, config.groups).items():
                    out.append(M.GroupMetricValue(metric, label, v))
            elif metric == "dynamic_delta_gap":
                if delta_gaps is None:
                    delta_gaps, _ = run_delta_gap_iteration(
                        snapshot, groups, config, derive_seed(config.seed, iteration)
                    )
                for label in config.groups:
                    out.append(M.GroupMetricValue(metric, label, float(delta_gaps[label])))
            elif metric == "between_group_gap":
                pop = M.popularity_scores(snapshot)
                profiles = snapshot.profiles()
                revised = []
                for label in (g, h):
                    users = _group_members(snapshot, groups, label)
                    gp = M.GapPair(M.gap(profiles, pop, users), _rec_gap(recs, pop, users))
                    revised.append(M.delta_gap_revised(gp))
                out.append(M.GroupMetricValue(metric, pair, M.between_group_gap(*revised)))
            elif metric == "group_cosine":
                present = {u: groups[u] for u in snapshot.user_ids.tolist()}
                out.append(
                    M.GroupMetricValue(metric, pair, M.group_cosine_similarity(recs, present, snapshot.item_ids, g, h))
                )
        except MetricError as e:
            raise SimulationAborted(str(e), iteration, metric) from e
    return out


def run_feedback_loop(
    log0: InteractionLog, groups: Mapping[int, str] | None, config: SimulationConfig
) -> MetricSeries:
    """
    Run the feedback loop for ``config.iterations`` iterations.

    Metrics at iteration ``t`` are computed on the log as it stood before
    that iteration's append.  The recommendations appended each iteration come
    from a model trained on the full current log; when dynamic delta-GAP is
    the only metric, they come from its split-trained model instead, so that
    run follows the delta-GAP procedure exactly.

    Raises:
        SimulationAborted: if a metric cannot be computed; the iteration and
            metric are named.
        MissingGroupError: if group metrics are requested and ``groups`` is
            not total over the log's users.
    """
    if not len(log0):
        raise InvariantViolation("cannot simulate on an empty log")
    if config.needs_groups:
        if groups is None:
            raise InvariantViolation("group metrics requested but no group assignment supplied")
        check_groups(log0, groups, config.groups)
    groups = groups or {}
    loop_model_needed = config.metrics != ("dynamic_delta_gap",)

    series = MetricSeries()
    log = log0
    hp = config.hyperparams
    for t in range(1, config.iterations + 1):
        start = time.perf_counter()
        seed_t = derive_seed(config.seed, t)
        dgaps = None
        recs = None
        if "dynamic_delta_gap" in config.metrics:
            try:
                dgaps, recs = run_delta_gap_iteration(log, groups, config, seed_t)
            except MetricError as e:
                raise SimulationAborted(str(e), t, "dynamic_delta_gap") from e
            except InvariantViolation as e:
                raise SimulationAborted(str(e), t, "dynamic_delta_gap") from e
        if loop_model_needed:
            model = train(hp.with_seed(derive_seed(seed_t, _LOOP_MODEL, hp.train_seed)), log)
            recs = recommend_top_n(model, log, config.top_n)

        for v in compute_iteration_metrics(log, recs, groups, config, iteration=t, delta_gaps=dgaps):
            series.records.append(MetricRecord(t, config.algorithm, config.dataset, v.metric, v.group, v.value))

        short = sum(1 for u in log.user_ids.tolist() if len(recs.get(u, ())) < config.top_n)
        if short:
            _log.warning("iteration %d: %d user(s) have fewer than %d unobserved items", t, short, config.top_n)
            series.records.append(
                MetricRecord(t, config.algorithm, config.dataset, "exhausted_users", "ALL", float(short))
            )

        users, items, scores = recs.to_arrays()
        log = log.extend(users, items, scores, iteration=t)
        series.log_sizes.append(len(log))
        series.appended.append(len(users))
        _log.info(
            "iteration %d/%d: appended %d, log size %d, %.1fs",
            t, config.iterations, len(users), len(log), time.perf_counter() - start,
        )
    series.final_log = log
    return series
