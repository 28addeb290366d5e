"""Relative camera poses and the sources that supply them.

Frame conventions
-----------------
- Absolute rotations are world-from-camera unit quaternions; camera
  centers live in world coordinates.
- ``dq`` takes the database camera frame to the query camera frame:
  ``R_query = R_db * dq``.
- ``dt_dir`` is the unit direction from the database camera center
  toward the query camera center, expressed in the database camera's
  frame. Multiplying by the database rotation recovers the world-frame
  direction.

Estimates come either from a JSON-lines prediction file (an external
regressor's output) or from a synthetic oracle that perturbs the ground
truth with a controlled amount of angular noise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Tuple

import numpy as np

from . import geom
from .errors import (
    CoincidentCenters,
    DuplicateKey,
    MalformedLine,
    MissingPrediction,
    ZeroVector,
)

if TYPE_CHECKING:
    from .scene import Pose


@dataclass(frozen=True, eq=False)
class RelativePoseEstimate:
    """Pairwise relative orientation and unit translation direction."""

    dq: np.ndarray
    dt_dir: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dq", geom.normalize_quat(self.dq))
        object.__setattr__(self, "dt_dir", geom.normalize_vec(self.dt_dir))


@dataclass(frozen=True)
class NoiseConfig:
    """Controls for the synthetic prediction oracle."""

    sigma_rot_deg: float = 0.0
    sigma_dir_deg: float = 0.0
    outlier_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_rot_deg < 0.0 or self.sigma_dir_deg < 0.0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.outlier_prob <= 1.0:
            raise ValueError("outlier_prob must be in [0, 1]")


def relative_pose(db_pose: "Pose", query_pose: "Pose") -> RelativePoseEstimate:
    """Ground-truth relative pose from a database camera to the query.

    Raises CoincidentCenters when the two camera centers are closer than
    1e-9 m, where the translation direction is undefined.
    """
    offset = query_pose.center - db_pose.center
    if float(np.linalg.norm(offset)) < 1e-9:
        raise CoincidentCenters("camera centers coincide; direction undefined")
    dq = geom.quat_mul(geom.quat_conj(db_pose.rotation), query_pose.rotation)
    dt_dir = geom.quat_rotate(geom.quat_conj(db_pose.rotation), offset)
    return RelativePoseEstimate(dq, dt_dir)


def pose_metric(a: "Pose", b: "Pose", beta: float = 1.0) -> float:
    """Combined position + orientation distance between two poses.

    Euclidean distance between centers plus ``beta`` times the
    sign-minimized quaternion L2 distance. ``beta=1`` is the default
    operating point.
    """
    pos = float(np.linalg.norm(a.center - b.center))
    dq = min(
        float(np.linalg.norm(a.rotation - b.rotation)),
        float(np.linalg.norm(a.rotation + b.rotation)),
    )
    return pos + beta * dq


def _pair_rng(seed: int, query_id: str, db_id: str) -> np.random.Generator:
    # keyed, order-independent stream so concurrent evaluation reproduces
    key = f"{seed}\x1f{query_id}\x1f{db_id}".encode()
    digest = hashlib.blake2b(key, digest_size=16).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def _orthogonal_axis(rng: np.random.Generator, d: np.ndarray) -> np.ndarray:
    while True:
        u = geom.random_unit_vec(rng)
        k = u - float(u @ d) * d
        n = math.sqrt(float(k @ k))
        if n >= 1e-9:
            return k / n


def synth_predict(
    gt: RelativePoseEstimate, cfg: NoiseConfig, query_id: str, db_id: str
) -> RelativePoseEstimate:
    """Noisy stand-in for a learned relative pose regressor.

    With probability ``outlier_prob`` the estimate is fully corrupted
    (rotation uniform on SO(3), direction uniform on the sphere).
    Otherwise the rotation is composed with a folded-normal angular
    perturbation about a random axis and the direction is tilted by a
    folded-normal angle about a random axis orthogonal to it, which
    keeps it exactly on the unit sphere.

    The random stream is keyed by ``(cfg.seed, query_id, db_id)``, so
    results do not depend on call order.
    """
    rng = _pair_rng(cfg.seed, query_id, db_id)
    if rng.random() < cfg.outlier_prob:
        return RelativePoseEstimate(geom.random_quat(rng), geom.random_unit_vec(rng))

    dq = gt.dq
    rot_axis = geom.random_unit_vec(rng)
    rot_angle = abs(rng.normal(0.0, cfg.sigma_rot_deg)) if cfg.sigma_rot_deg > 0.0 else 0.0
    if rot_angle != 0.0:
        dq = geom.quat_mul(dq, geom.quat_from_axis_angle(rot_axis, rot_angle))

    dt = gt.dt_dir
    tilt_axis = _orthogonal_axis(rng, dt)
    tilt_angle = abs(rng.normal(0.0, cfg.sigma_dir_deg)) if cfg.sigma_dir_deg > 0.0 else 0.0
    if tilt_angle != 0.0:
        t = math.radians(tilt_angle)
        dt = dt * math.cos(t) + np.cross(tilt_axis, dt) * math.sin(t)
    return RelativePoseEstimate(dq, dt)


class PredictionSet:
    """Immutable map from (query_id, db_id) to a RelativePoseEstimate."""

    def __init__(self, table: dict):
        self._table = dict(table)

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, key: Tuple[str, str]) -> bool:
        return key in self._table

    def items(self):
        return self._table.items()

    def lookup(self, query_id: str, db_id: str) -> RelativePoseEstimate:
        try:
            return self._table[(query_id, db_id)]
        except KeyError:
            raise MissingPrediction(
                f"no prediction for query={query_id!r} db={db_id!r}"
            ) from None


def _finite_floats(values, count, what, lineno):
    if not isinstance(values, list) or len(values) != count:
        raise MalformedLine(f"line {lineno}: {what} must be a list of {count} numbers")
    out = []
    for v in values:
        if not isinstance(v, (int, float)) or not math.isfinite(float(v)):
            raise MalformedLine(f"line {lineno}: non-finite value in {what}")
        out.append(float(v))
    return out


def load_predictions(path) -> PredictionSet:
    """Parse a JSON-lines prediction file.

    Each line is ``{"query": id, "db": id, "dq": [w,x,y,z], "dt": [x,y,z]}``.
    Quaternions and directions are normalized to unit length on load.
    """
    table = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise MalformedLine(f"line {lineno}: expected a JSON object")
        try:
            query_id, db_id = obj["query"], obj["db"]
            dq_raw, dt_raw = obj["dq"], obj["dt"]
        except KeyError as exc:
            raise MalformedLine(f"line {lineno}: missing field {exc.args[0]!r}") from None
        if not isinstance(query_id, str) or not isinstance(db_id, str):
            raise MalformedLine(f"line {lineno}: 'query' and 'db' must be strings")
        dq = _finite_floats(dq_raw, 4, "dq", lineno)
        dt = _finite_floats(dt_raw, 3, "dt", lineno)
        if math.sqrt(sum(v * v for v in dt)) < 1e-12:
            raise ZeroVector(f"line {lineno}: dt has (near-)zero norm")
        if math.sqrt(sum(v * v for v in dq)) < 1e-12:
            raise ZeroVector(f"line {lineno}: dq has (near-)zero norm")
        key = (query_id, db_id)
        if key in table:
            raise DuplicateKey(f"line {lineno}: duplicate pair {key}")
        table[key] = RelativePoseEstimate(np.array(dq), np.array(dt))
    return PredictionSet(table)


def save_predictions(entries: Iterable[Tuple[str, str, RelativePoseEstimate]], path) -> None:
    """Write estimates as JSON lines, sorted by (query_id, db_id)."""
    rows = sorted(entries, key=lambda e: (e[0], e[1]))
    with open(path, "w", encoding="utf-8") as fh:
        for query_id, db_id, est in rows:
            fh.write(
                json.dumps(
                    {
                        "query": query_id,
                        "db": db_id,
                        "dq": [float(v) for v in est.dq],
                        "dt": [float(v) for v in est.dt_dir],
                    }
                )
            )
            fh.write("\n")
