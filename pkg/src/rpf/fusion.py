"""Consensus fusion of pairwise relative pose estimates.

Given N neighbor observations (database pose + predicted relative pose),
the query translation comes from triangulating every pair of predicted
direction rays and keeping the hypothesis most remaining observations
agree with; the query rotation comes from the per-neighbor hypothesis
``R_db * dq`` filtered by the same kind of angular consensus. Ties at
the top inlier count are averaged: arithmetically for translation
points, by the robust L1 geodesic median for rotations.

Observations are processed in lexicographic db-id order, so hypothesis
indices and diagnostics are reproducible regardless of input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Sequence, Tuple

import numpy as np

from . import geom
from .errors import DegenerateRays, NoValidHypothesis, TooFewNeighbors
from .relpose import RelativePoseEstimate
from .scene import ImageRecord, Pose


@dataclass(frozen=True)
class FusionConfig:
    n_neighbors: int = 5
    angle_thresh_deg: float = 20.0
    parallel_eps: float = 1e-6
    min_usable_pairs: int = 1

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be at least 2")
        if not 0.0 < self.angle_thresh_deg < 180.0:
            raise ValueError("angle_thresh_deg must be in (0, 180)")


@dataclass(frozen=True, eq=False)
class NeighborObservation:
    """One database image's contribution: pose, estimate, world-frame ray."""

    db_id: str
    db_pose: Pose
    estimate: RelativePoseEstimate
    world_dir: np.ndarray

    @classmethod
    def from_estimate(cls, db_id: str, db_pose: Pose, estimate: RelativePoseEstimate):
        world_dir = geom.quat_rotate(db_pose.rotation, estimate.dt_dir)
        return cls(db_id, db_pose, estimate, world_dir)


@dataclass(frozen=True, eq=False)
class TranslationHypothesis:
    pair: Tuple[int, int]  # indices into the sorted observation list
    pair_ids: Tuple[str, str]
    point: np.ndarray
    inliers: Tuple[str, ...]
    gap: float


@dataclass(eq=False)
class RotationHypothesis:
    source_id: str
    quat: np.ndarray
    inlier_count: int = 0


@dataclass(eq=False)
class TranslationDiagnostics:
    hypotheses: List[TranslationHypothesis]
    winners: List[int]
    inlier_count: int
    tie: bool
    n_pairs_total: int
    n_discarded: int


@dataclass(eq=False)
class RotationDiagnostics:
    hypotheses: List[RotationHypothesis]
    winners: List[int]
    inlier_count: int
    tie: bool
    consensus_ids: List[str] = field(default_factory=list)


@dataclass(eq=False)
class LocalizationResult:
    query_id: str
    pose: Pose
    translation_inliers: int
    rotation_inliers: int
    tie_translation: bool
    tie_rotation: bool
    neighbor_ids: List[str]


def _sorted_obs(obs: Sequence[NeighborObservation]) -> List[NeighborObservation]:
    return sorted(obs, key=lambda o: o.db_id)


def _direction_agrees(ob: NeighborObservation, point: np.ndarray, thresh_deg: float) -> bool:
    to_point = point - ob.db_pose.center
    n = float(np.linalg.norm(to_point))
    if n < 1e-12:
        return False  # point sits on the camera center; no direction to compare
    cos_ang = min(1.0, max(-1.0, float(ob.world_dir @ to_point) / n))
    return math.degrees(math.acos(cos_ang)) <= thresh_deg


def fuse_translation(
    obs: Sequence[NeighborObservation], cfg: FusionConfig = FusionConfig()
) -> Tuple[np.ndarray, TranslationDiagnostics]:
    """Triangulate all observation pairs and keep the consensus winner.

    A pair's hypothesis is discarded when its rays are near parallel or
    when either ray parameter is non-positive (the query would sit
    behind a camera, which happens with antipodally wrong directions).
    Each remaining observation votes for a hypothesis when its predicted
    ray is within the angular threshold of the direction toward the
    triangulated point. Hypotheses tied at the top count are averaged.
    """
    obs = _sorted_obs(obs)
    if len(obs) < 2:
        raise TooFewNeighbors(f"translation fusion needs >= 2 observations, got {len(obs)}")

    hypotheses: List[TranslationHypothesis] = []
    n_pairs = 0
    for k, m in combinations(range(len(obs)), 2):
        n_pairs += 1
        try:
            result = geom.triangulate_midpoint(
                geom.Ray(obs[k].db_pose.center, obs[k].world_dir),
                geom.Ray(obs[m].db_pose.center, obs[m].world_dir),
                parallel_eps=cfg.parallel_eps,
            )
        except DegenerateRays:
            continue
        if result.s1 <= 0.0 or result.s2 <= 0.0:
            continue
        inliers = tuple(
            ob.db_id
            for i, ob in enumerate(obs)
            if i not in (k, m) and _direction_agrees(ob, result.point, cfg.angle_thresh_deg)
        )
        hypotheses.append(
            TranslationHypothesis(
                (k, m), (obs[k].db_id, obs[m].db_id), result.point, inliers, result.gap
            )
        )

    if len(hypotheses) < cfg.min_usable_pairs:
        raise NoValidHypothesis(
            f"{n_pairs} pairs, {n_pairs - len(hypotheses)} discarded, "
            f"{len(hypotheses)} usable (need {cfg.min_usable_pairs})"
        )

    best = max(len(h.inliers) for h in hypotheses)
    winners = [i for i, h in enumerate(hypotheses) if len(h.inliers) == best]
    point = np.mean([hypotheses[i].point for i in winners], axis=0)
    diag = TranslationDiagnostics(
        hypotheses=hypotheses,
        winners=winners,
        inlier_count=best,
        tie=len(winners) > 1,
        n_pairs_total=n_pairs,
        n_discarded=n_pairs - len(hypotheses),
    )
    return point, diag


def rotation_hypotheses(obs: Sequence[NeighborObservation]) -> List[RotationHypothesis]:
    """Per-neighbor absolute orientation hypotheses ``R_db * dq``."""
    return [
        RotationHypothesis(ob.db_id, geom.quat_mul(ob.db_pose.rotation, ob.estimate.dq))
        for ob in _sorted_obs(obs)
    ]


def fuse_rotation(
    hyps: Sequence[RotationHypothesis], cfg: FusionConfig = FusionConfig()
) -> Tuple[np.ndarray, RotationDiagnostics]:
    """Angular consensus over rotation hypotheses.

    Each hypothesis counts the others within the angular threshold
    (counts are written back onto the hypotheses); the highest count
    wins. When several hypotheses tie at the top count, the L1 geodesic
    median of the union of their consensus sets (the tied hypotheses
    included) is returned.
    """
    if len(hyps) == 0:
        raise TooFewNeighbors("rotation fusion needs at least one hypothesis")
    consensus: List[List[int]] = []
    for j, hyp in enumerate(hyps):
        members = [
            i
            for i, other in enumerate(hyps)
            if i != j and geom.quat_angle_deg(hyp.quat, other.quat) <= cfg.angle_thresh_deg
        ]
        hyp.inlier_count = len(members)
        consensus.append(members)

    best = max(h.inlier_count for h in hyps)
    winners = [j for j, h in enumerate(hyps) if h.inlier_count == best]
    if len(winners) == 1:
        fused = hyps[winners[0]].quat
        member_ids = sorted({winners[0], *consensus[winners[0]]})
    else:
        member_ids = sorted({j for w in winners for j in (w, *consensus[w])})
        fused = geom.l1_geodesic_median([hyps[j].quat for j in member_ids])
    diag = RotationDiagnostics(
        hypotheses=list(hyps),
        winners=winners,
        inlier_count=best,
        tie=len(winners) > 1,
        consensus_ids=[hyps[j].source_id for j in member_ids],
    )
    return fused, diag


def localize(
    query_id: str,
    neighbors: Sequence[Tuple[ImageRecord, RelativePoseEstimate]],
    cfg: FusionConfig = FusionConfig(),
) -> LocalizationResult:
    """Full pose fusion for one query from its neighbor estimates."""
    if len(neighbors) < 2:
        raise TooFewNeighbors(f"query {query_id!r} has {len(neighbors)} neighbor(s), need >= 2")
    obs = [
        NeighborObservation.from_estimate(rec.id, rec.pose, estimate)
        for rec, estimate in neighbors
    ]
    point, t_diag = fuse_translation(obs, cfg)
    quat, r_diag = fuse_rotation(rotation_hypotheses(obs), cfg)
    return LocalizationResult(
        query_id=query_id,
        pose=Pose(quat, point),
        translation_inliers=t_diag.inlier_count,
        rotation_inliers=r_diag.inlier_count,
        tie_translation=t_diag.tie,
        tie_rotation=r_diag.tie,
        neighbor_ids=[rec.id for rec, _ in neighbors],
    )
