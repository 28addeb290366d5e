import json

import numpy as np
import pytest

from rpf import geom
from rpf.errors import EmptyInput, MissingPrediction
from rpf.evaluation import (
    PoseOracleRetrieval,
    PredictionSource,
    SynthSource,
    median,
    pose_error,
    run_pipeline,
    run_viewpoint_experiment,
    scene_reports_to_json,
    viewpoint_report_to_json,
    write_scene_reports_csv,
    write_viewpoint_csv,
)
from rpf.fusion import FusionConfig
from rpf.relpose import NoiseConfig, RelativePoseEstimate, load_predictions, save_predictions
from rpf.relpose import relative_pose
from rpf.scene import Pose, apply_rigid_transform, synth_scene, transform_pose

from conftest import random_pose, rotz

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


# --- metrics -------------------------------------------------------------------


def test_pose_error_examples(rng):
    p = random_pose(rng)
    err = pose_error(p, p)
    assert err.position_m == 0.0 and err.orientation_deg == 0.0
    shifted = Pose(p.rotation, p.center + np.array([0.0, 3.0, 4.0]))
    assert abs(pose_error(shifted, p).position_m - 5.0) < 1e-12
    turned = Pose(geom.quat_mul(p.rotation, rotz(90.0)), p.center)
    assert abs(pose_error(turned, p).orientation_deg - 90.0) < 1e-9


def test_pose_error_rigid_invariant(rng):
    est, gt = random_pose(rng), random_pose(rng)
    base = pose_error(est, gt)
    g_rot, g_t = geom.random_quat(rng), rng.normal(size=3) * 2.0
    moved = pose_error(transform_pose(est, g_rot, g_t), transform_pose(gt, g_rot, g_t))
    assert abs(moved.position_m - base.position_m) < 1e-9
    assert abs(moved.orientation_deg - base.orientation_deg) < 1e-7


def test_median_examples_and_oracle(rng):
    assert median([3.0, 1.0, 2.0]) == 2.0
    assert median([1.0, 2.0, 3.0, 4.0]) == 2.5
    with pytest.raises(EmptyInput):
        median([])
    for _ in range(200):
        values = list(rng.normal(size=int(rng.integers(1, 30))))
        ordered = sorted(values)
        mid = len(ordered) // 2
        oracle = ordered[mid] if len(ordered) % 2 else 0.5 * (ordered[mid - 1] + ordered[mid])
        assert median(values) == oracle


# --- run_pipeline -----------------------------------------------------------------


def _scene_db(n_train=40, n_test=6, seed=13):
    return synth_scene("lab", n_train, n_test, seed=seed)


def test_pipeline_zero_noise_recovers_exactly():
    db = _scene_db()
    queries = db.subset(split="test").records
    reports = run_pipeline(db, queries, PoseOracleRetrieval(), SynthSource(NoiseConfig()))
    assert len(reports) == 1
    rep = reports[0]
    assert rep.scene == "lab"
    assert rep.n_queries == 6 and rep.n_failures == 0
    assert rep.median_position_m < 1e-6
    assert rep.median_orientation_deg < 1e-4


def test_pipeline_deterministic_and_job_count_invariant():
    db = _scene_db()
    queries = db.subset(split="test").records
    source = SynthSource(NoiseConfig(sigma_rot_deg=4.0, sigma_dir_deg=4.0, seed=5))
    a = run_pipeline(db, queries, PoseOracleRetrieval(), source, jobs=1)
    b = run_pipeline(db, queries, PoseOracleRetrieval(), source, jobs=4)
    assert scene_reports_to_json(a) == scene_reports_to_json(b)


def test_pipeline_medians_self_consistent():
    db = _scene_db()
    queries = db.subset(split="test").records
    source = SynthSource(NoiseConfig(sigma_rot_deg=6.0, sigma_dir_deg=6.0, seed=2))
    (rep,) = run_pipeline(db, queries, PoseOracleRetrieval(), source)
    ok = [q for q in rep.queries if q.failure is None]
    assert rep.median_position_m == median([q.error.position_m for q in ok])
    assert rep.median_orientation_deg == median([q.error.orientation_deg for q in ok])


def test_pipeline_missing_prediction_names_pair(tmp_path):
    db = _scene_db(n_train=10, n_test=2, seed=3)
    queries = db.subset(split="test").records
    train = db.subset(split="train")
    cfg = FusionConfig(n_neighbors=3)
    entries = []
    for query in queries:
        ranked = PoseOracleRetrieval().rank(query, train, 3)
        for rid in ranked:
            entries.append((query.id, rid, relative_pose(train.get(rid).pose, query.pose)))
    dropped = entries.pop()  # remove one required pair
    path = tmp_path / "pred.jsonl"
    save_predictions(entries, path)
    source = PredictionSource(load_predictions(path))
    with pytest.raises(MissingPrediction) as excinfo:
        run_pipeline(db, queries, PoseOracleRetrieval(), source, cfg)
    assert dropped[0] in str(excinfo.value)
    assert dropped[1] in str(excinfo.value)


class _AntipodalSource:
    """Worst-case estimates: directions point away from the query."""

    def estimate(self, query, db):
        gt = relative_pose(db.pose, query.pose)
        return RelativePoseEstimate(gt.dq, -gt.dt_dir)


def test_pipeline_records_failures_and_excludes_them():
    db = _scene_db(n_train=12, n_test=4, seed=21)
    queries = db.subset(split="test").records
    (rep,) = run_pipeline(db, queries, PoseOracleRetrieval(), _AntipodalSource())
    assert rep.n_failures == rep.n_queries == 4
    assert rep.median_position_m is None
    assert all(q.failure is not None for q in rep.queries)
    payload = json.loads(scene_reports_to_json([rep]))
    assert payload[0]["n_failures"] == 4
    assert payload[0]["queries"][0]["pos_err_m"] is None


# --- viewpoint experiment ---------------------------------------------------------


def test_viewpoint_zero_noise_all_columns_near_zero():
    db = synth_scene("lab", 30, 4, seed=17)
    queries = db.subset(split="test").records
    report = run_viewpoint_experiment(
        db, queries, SynthSource(NoiseConfig()), FusionConfig(n_neighbors=3),
        set_size=3, interval=5, count=4,
    )
    assert report.skipped == []
    (rep,) = report.scenes
    assert len(rep.medians) == 4
    for pos, ori in rep.medians:
        assert pos < 1e-6
        assert ori < 1e-4


def test_viewpoint_small_scene_skipped():
    db = synth_scene("lab", 10, 2, seed=17)
    queries = db.subset(split="test").records
    report = run_viewpoint_experiment(db, queries, SynthSource(NoiseConfig()))
    assert report.scenes == []
    assert len(report.skipped) == 1
    assert report.skipped[0][0] == "lab"


def test_viewpoint_medians_self_consistent():
    db = synth_scene("lab", 30, 4, seed=23)
    queries = db.subset(split="test").records
    source = SynthSource(NoiseConfig(sigma_rot_deg=5.0, sigma_dir_deg=5.0, seed=11))
    report = run_viewpoint_experiment(
        db, queries, source, FusionConfig(n_neighbors=3), set_size=3, interval=5, count=4
    )
    (rep,) = report.scenes
    for k, (pos, ori) in enumerate(rep.medians):
        cells = [c for c in rep.cells if c.viewpoint == k and c.failure is None]
        assert pos == median([c.error.position_m for c in cells])
        assert ori == median([c.error.orientation_deg for c in cells])


def test_viewpoint_jobs_invariant():
    db = synth_scene("lab", 30, 4, seed=29)
    queries = db.subset(split="test").records
    source = SynthSource(NoiseConfig(sigma_rot_deg=3.0, sigma_dir_deg=3.0, seed=4))
    kwargs = dict(set_size=3, interval=5, count=4)
    a = run_viewpoint_experiment(db, queries, source, FusionConfig(n_neighbors=3), jobs=1, **kwargs)
    b = run_viewpoint_experiment(db, queries, source, FusionConfig(n_neighbors=3), jobs=3, **kwargs)
    assert viewpoint_report_to_json(a) == viewpoint_report_to_json(b)


# --- serialization ------------------------------------------------------------------


def test_csv_outputs(tmp_path):
    db = _scene_db(n_train=12, n_test=3, seed=31)
    queries = db.subset(split="test").records
    reports = run_pipeline(db, queries, PoseOracleRetrieval(), SynthSource(NoiseConfig()))
    write_scene_reports_csv(reports, tmp_path / "summary.csv")
    rows = (tmp_path / "summary.csv").read_text().strip().splitlines()
    assert rows[0] == "scene,median_m,median_deg"
    assert rows[1].startswith("lab,")
    assert rows[-1].startswith("average,")

    view = run_viewpoint_experiment(
        db, queries, SynthSource(NoiseConfig()), FusionConfig(n_neighbors=3),
        set_size=2, interval=3, count=3,
    )
    write_viewpoint_csv(view, tmp_path / "viewpoint.csv")
    rows = (tmp_path / "viewpoint.csv").read_text().strip().splitlines()
    assert rows[0] == "scene,viewpoint,median_m,median_deg,n_failures"
    assert len(rows) == 1 + 3


def test_pipeline_rigid_equivariant_reports(rng):
    db = _scene_db(n_train=20, n_test=3, seed=37)
    queries = db.subset(split="test").records
    source = SynthSource(NoiseConfig(sigma_rot_deg=4.0, sigma_dir_deg=4.0, seed=6))
    (base,) = run_pipeline(db, queries, PoseOracleRetrieval(), source)
    g_rot, g_t = geom.random_quat(rng), rng.normal(size=3) * 3.0
    moved_db = apply_rigid_transform(db, g_rot, g_t)
    moved_queries = moved_db.subset(split="test").records
    (moved,) = run_pipeline(moved_db, moved_queries, PoseOracleRetrieval(), source)
    assert abs(base.median_position_m - moved.median_position_m) < 1e-6
    assert abs(base.median_orientation_deg - moved.median_orientation_deg) < 1e-4
    for qa, qb in zip(base.queries, moved.queries):
        assert qa.translation_inliers == qb.translation_inliers
        assert qa.rotation_inliers == qb.rotation_inliers


# --- feature-store retrieval path --------------------------------------------


def _pose_embedding_store(db):
    """Descriptors built from pose coordinates, so dot-product ranking is
    meaningful: the nearest embeddings belong to nearby cameras."""
    from rpf.retrieval import FeatureStore

    ids = [rec.id for rec in db.records]
    rows = []
    for rec in db.records:
        c = rec.pose.center
        q = rec.pose.rotation
        rows.append(np.concatenate([c, q, [1.0]]))
    matrix = np.array(rows, dtype=np.float32)
    # L2-normalize so the dot product prefers nearby poses
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    return FeatureStore(ids, matrix)


def test_pipeline_feature_retrieval_runs():
    from rpf.evaluation import FeatureRetrieval

    db = _scene_db(n_train=20, n_test=4, seed=41)
    queries = db.subset(split="test").records
    store = _pose_embedding_store(db)
    reports = run_pipeline(
        db, queries, FeatureRetrieval(store), SynthSource(NoiseConfig()), FusionConfig(n_neighbors=4)
    )
    (rep,) = reports
    assert rep.n_queries == 4
    # neighbors must come from the train split only
    train_ids = {r.id for r in db.subset(split="train")}
    for q in rep.queries:
        assert q.neighbor_ids and set(q.neighbor_ids) <= train_ids
    assert rep.n_failures == 0
    assert rep.median_position_m < 1e-6


def test_feature_retrieval_errors():
    from rpf.errors import MissingFeature, NTooLarge
    from rpf.evaluation import FeatureRetrieval
    from rpf.retrieval import FeatureStore

    db = _scene_db(n_train=3, n_test=1, seed=43)
    query = db.subset(split="test").records[0]
    train = db.subset(split="train")

    with pytest.raises(MissingFeature):
        FeatureRetrieval(FeatureStore(["other"], np.zeros((1, 2), np.float32))).rank(
            query, train, 1
        )

    # store covers the query but too few train candidates
    store = FeatureStore([query.id, train.records[0].id], np.zeros((2, 2), np.float32))
    with pytest.raises(NTooLarge):
        FeatureRetrieval(store).rank(query, train, 2)
