"""Experiment runners, error metrics, and report serialization.

Two experiments are provided: the standard pipeline (retrieve top-N
neighbors, fuse their relative pose estimates, score against ground
truth) and the ideal-retrieval sweep that localizes each query from
fixed-size neighbor sets taken at increasing rank offsets from a
ground-truth-sorted list.

Per-query fusion failures are recorded with a failure reason and
excluded from the medians; the exclusion count is part of every report
so downstream comparisons cannot be silently biased.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import geom
from .errors import CoincidentCenters, EmptyInput, NoValidHypothesis, NTooLarge, TooFewNeighbors
from .fusion import FusionConfig, localize
from .relpose import NoiseConfig, PredictionSet, RelativePoseEstimate, relative_pose, synth_predict
from .retrieval import FeatureStore, rank_by_dot, rank_by_pose_metric, viewpoint_sets
from .scene import ImageRecord, Pose, SceneDatabase

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoseError:
    position_m: float
    orientation_deg: float


def pose_error(est: Pose, gt: Pose) -> PoseError:
    """Euclidean center distance plus geodesic orientation angle."""
    return PoseError(
        float(np.linalg.norm(est.center - gt.center)),
        geom.quat_angle_deg(est.rotation, gt.rotation),
    )


def median(values: Sequence[float]) -> float:
    """Middle of the sorted list; even lengths average the middle two."""
    if len(values) == 0:
        raise EmptyInput("median of empty list")
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2 == 1:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


@dataclass(eq=False)
class QueryResult:
    id: str
    error: Optional[PoseError]
    translation_inliers: int = 0
    rotation_inliers: int = 0
    tie_translation: bool = False
    tie_rotation: bool = False
    neighbor_ids: Optional[List[str]] = None
    failure: Optional[str] = None


@dataclass(eq=False)
class SceneReport:
    scene: str
    n_queries: int
    n_failures: int
    median_position_m: Optional[float]
    median_orientation_deg: Optional[float]
    queries: List[QueryResult]


# --- estimate sources -------------------------------------------------------


class SynthSource:
    """Relative pose source backed by the seeded synthetic oracle."""

    def __init__(self, noise: NoiseConfig):
        self.noise = noise

    def estimate(self, query: ImageRecord, db: ImageRecord) -> RelativePoseEstimate:
        gt = relative_pose(db.pose, query.pose)
        return synth_predict(gt, self.noise, query.id, db.id)


class PredictionSource:
    """Relative pose source backed by a prediction file."""

    def __init__(self, predictions: PredictionSet):
        self.predictions = predictions

    def estimate(self, query: ImageRecord, db: ImageRecord) -> RelativePoseEstimate:
        return self.predictions.lookup(query.id, db.id)


# --- retrieval sources ------------------------------------------------------


class PoseOracleRetrieval:
    """Ranks database candidates by ground-truth pose similarity."""

    def __init__(self, beta: float = 1.0):
        self.beta = beta

    def rank(self, query: ImageRecord, candidates: SceneDatabase, n: int) -> List[str]:
        ranked = rank_by_pose_metric(query.pose, candidates, self.beta, query_id=query.id)
        if n > len(ranked):
            raise NTooLarge(f"requested {n} of {len(ranked)} candidates")
        return ranked.ranked_ids[:n]


class FeatureRetrieval:
    """Ranks database candidates by descriptor dot product."""

    def __init__(self, store: FeatureStore):
        self.store = store

    def rank(self, query: ImageRecord, candidates: SceneDatabase, n: int) -> List[str]:
        available = sum(1 for rid in self.store.ids if rid != query.id)
        ranked = rank_by_dot(self.store.vector(query.id), self.store, available, query_id=query.id)
        top = [rid for rid in ranked.ranked_ids if rid in candidates][:n]
        if len(top) < n:
            raise NTooLarge(f"feature store covers only {len(top)} of {n} requested candidates")
        return top


# --- pipeline ----------------------------------------------------------------

_RECOVERABLE = (NoValidHypothesis, TooFewNeighbors, CoincidentCenters)


def _map_queries(fn: Callable, queries: Sequence[ImageRecord], jobs: int):
    queries = sorted(queries, key=lambda q: q.id)
    if jobs <= 1:
        return [fn(q) for q in queries]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, queries))


def _assemble_reports(results: Sequence[QueryResult], by_query_scene: dict) -> List[SceneReport]:
    reports = []
    for scene in sorted({by_query_scene[r.id] for r in results}):
        scene_results = sorted(
            (r for r in results if by_query_scene[r.id] == scene), key=lambda r: r.id
        )
        ok = [r for r in scene_results if r.failure is None]
        reports.append(
            SceneReport(
                scene=scene,
                n_queries=len(scene_results),
                n_failures=len(scene_results) - len(ok),
                median_position_m=median([r.error.position_m for r in ok]) if ok else None,
                median_orientation_deg=median([r.error.orientation_deg for r in ok]) if ok else None,
                queries=scene_results,
            )
        )
    return reports


def run_pipeline(
    db: SceneDatabase,
    queries: Sequence[ImageRecord],
    retrieval,
    relpose_source,
    cfg: FusionConfig = FusionConfig(),
    jobs: int = 1,
) -> List[SceneReport]:
    """Retrieve, fuse, and score every query; aggregate per scene.

    ``retrieval`` needs a ``rank(query, candidates, n)`` method and
    ``relpose_source`` an ``estimate(query, db_record)`` method.
    Candidates are the train-split records of the database. Fusion
    failures become flagged query results; missing predictions or
    malformed configuration propagate as errors.
    """
    candidates = db.subset(split="train")

    def run_one(query: ImageRecord) -> QueryResult:
        neighbor_ids: List[str] = []
        try:
            neighbor_ids = retrieval.rank(query, candidates, cfg.n_neighbors)
            neighbors = [
                (candidates.get(rid), relpose_source.estimate(query, candidates.get(rid)))
                for rid in neighbor_ids
            ]
            result = localize(query.id, neighbors, cfg)
        except _RECOVERABLE as exc:
            log.warning("query %s failed: %s", query.id, exc)
            return QueryResult(query.id, None, neighbor_ids=neighbor_ids, failure=str(exc))
        err = pose_error(result.pose, query.pose)
        return QueryResult(
            query.id,
            err,
            translation_inliers=result.translation_inliers,
            rotation_inliers=result.rotation_inliers,
            tie_translation=result.tie_translation,
            tie_rotation=result.tie_rotation,
            neighbor_ids=result.neighbor_ids,
        )

    results = _map_queries(run_one, queries, jobs)
    return _assemble_reports(results, {q.id: q.scene for q in queries})


# --- ideal-retrieval viewpoint sweep -----------------------------------------


@dataclass(eq=False)
class ViewpointCell:
    query_id: str
    viewpoint: int
    error: Optional[PoseError]
    failure: Optional[str] = None


@dataclass(eq=False)
class ViewpointSceneReport:
    scene: str
    n_queries: int
    medians: List[Tuple[Optional[float], Optional[float]]]  # per viewpoint column
    failures: List[int]  # per viewpoint column
    cells: List[ViewpointCell]


@dataclass(eq=False)
class ViewpointReport:
    set_size: int
    interval: int
    count: int
    scenes: List[ViewpointSceneReport]
    skipped: List[Tuple[str, str]]


def run_viewpoint_experiment(
    db: SceneDatabase,
    queries: Sequence[ImageRecord],
    relpose_source,
    cfg: FusionConfig = FusionConfig(),
    set_size: int = 5,
    interval: int = 50,
    count: int = 8,
    beta: float = 1.0,
    jobs: int = 1,
) -> ViewpointReport:
    """Localize each query from neighbor sets at increasing rank offsets.

    Per query, the same-scene train images are sorted by the ground
    truth pose metric and sliced into ``count`` sets of ``set_size``
    ids spaced ``interval`` ranks apart; each set is fused
    independently. Scenes whose train split is too small are skipped
    and recorded.
    """
    scene_reports: List[ViewpointSceneReport] = []
    skipped: List[Tuple[str, str]] = []
    needed = (count - 1) * interval + set_size
    for scene in sorted({q.scene for q in queries}):
        train = db.subset(scene=scene, split="train")
        if len(train) < needed:
            reason = f"need {needed} train images, scene {scene!r} has {len(train)}"
            log.warning("skipping viewpoint experiment: %s", reason)
            skipped.append((scene, reason))
            continue
        scene_queries = [q for q in queries if q.scene == scene]

        def run_one(query: ImageRecord) -> List[ViewpointCell]:
            ranked = rank_by_pose_metric(query.pose, train, beta, query_id=query.id)
            cells = []
            for k, id_set in enumerate(viewpoint_sets(ranked, set_size, interval, count)):
                try:
                    neighbors = [
                        (train.get(rid), relpose_source.estimate(query, train.get(rid)))
                        for rid in id_set
                    ]
                    result = localize(query.id, neighbors, cfg)
                except _RECOVERABLE as exc:
                    cells.append(ViewpointCell(query.id, k, None, failure=str(exc)))
                    continue
                cells.append(ViewpointCell(query.id, k, pose_error(result.pose, query.pose)))
            return cells

        per_query = _map_queries(run_one, scene_queries, jobs)
        cells = [cell for group in per_query for cell in group]
        medians = []
        failures = []
        for k in range(count):
            ok = [c.error for c in cells if c.viewpoint == k and c.failure is None]
            failures.append(sum(1 for c in cells if c.viewpoint == k and c.failure is not None))
            medians.append(
                (
                    median([e.position_m for e in ok]) if ok else None,
                    median([e.orientation_deg for e in ok]) if ok else None,
                )
            )
        scene_reports.append(
            ViewpointSceneReport(scene, len(scene_queries), medians, failures, cells)
        )
    return ViewpointReport(set_size, interval, count, scene_reports, skipped)


# --- serialization ------------------------------------------------------------


def _query_dict(r: QueryResult) -> dict:
    return {
        "id": r.id,
        "pos_err_m": None if r.error is None else r.error.position_m,
        "ori_err_deg": None if r.error is None else r.error.orientation_deg,
        "translation_inliers": r.translation_inliers,
        "rotation_inliers": r.rotation_inliers,
        "ties": {"translation": r.tie_translation, "rotation": r.tie_rotation},
        "neighbors": list(r.neighbor_ids or []),
        "failed": r.failure,
    }


def scene_reports_to_json(reports: Sequence[SceneReport]) -> str:
    payload = [
        {
            "scene": rep.scene,
            "n_queries": rep.n_queries,
            "n_failures": rep.n_failures,
            "median_position_m": rep.median_position_m,
            "median_orientation_deg": rep.median_orientation_deg,
            "queries": [_query_dict(r) for r in rep.queries],
        }
        for rep in reports
    ]
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


def write_scene_reports_csv(reports: Sequence[SceneReport], path) -> None:
    """Per-scene medians plus an average row, one scene per line."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene", "median_m", "median_deg"])
        pos, ori = [], []
        for rep in reports:
            writer.writerow(
                [
                    rep.scene,
                    "" if rep.median_position_m is None else f"{rep.median_position_m:.6f}",
                    "" if rep.median_orientation_deg is None else f"{rep.median_orientation_deg:.6f}",
                ]
            )
            if rep.median_position_m is not None:
                pos.append(rep.median_position_m)
                ori.append(rep.median_orientation_deg)
        if pos:
            writer.writerow(["average", f"{np.mean(pos):.6f}", f"{np.mean(ori):.6f}"])


def viewpoint_report_to_json(report: ViewpointReport) -> str:
    payload = {
        "set_size": report.set_size,
        "interval": report.interval,
        "count": report.count,
        "skipped": [{"scene": s, "reason": r} for s, r in report.skipped],
        "scenes": [
            {
                "scene": rep.scene,
                "n_queries": rep.n_queries,
                "columns": [
                    {
                        "viewpoint": k,
                        "median_position_m": rep.medians[k][0],
                        "median_orientation_deg": rep.medians[k][1],
                        "n_failures": rep.failures[k],
                    }
                    for k in range(len(rep.medians))
                ],
                "queries": [
                    {
                        "id": c.query_id,
                        "viewpoint": c.viewpoint,
                        "pos_err_m": None if c.error is None else c.error.position_m,
                        "ori_err_deg": None if c.error is None else c.error.orientation_deg,
                        "failed": c.failure,
                    }
                    for c in sorted(rep.cells, key=lambda c: (c.query_id, c.viewpoint))
                ],
            }
            for rep in report.scenes
        ],
    }
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


def write_viewpoint_csv(report: ViewpointReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene", "viewpoint", "median_m", "median_deg", "n_failures"])
        for rep in report.scenes:
            for k, (pos, ori) in enumerate(rep.medians):
                writer.writerow(
                    [
                        rep.scene,
                        k,
                        "" if pos is None else f"{pos:.6f}",
                        "" if ori is None else f"{ori:.6f}",
                        rep.failures[k],
                    ]
                )


def write_text(path, content: str) -> None:
    Path(path).write_text(content, encoding="utf-8")
