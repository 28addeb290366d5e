"""Scene data model and dataset ingestion.

Dataset layout (7Scenes style)
------------------------------
::

    <root>/<scene>/TrainSplit.txt
    <root>/<scene>/TestSplit.txt
    <root>/<scene>/seq-01/frame-000000.pose.txt
    ...

A pose file holds 16 whitespace-separated reals: a row-major 4x4
homogeneous camera-to-world matrix, so the camera center is the
translation column. Getting this convention wrong silently breaks all
downstream geometry, which is why it is asserted by round-trip tests.

Split files list one frame id per line, relative to the scene directory
(``seq-01/frame-000000``). Lines of the form ``sequenceN`` (as shipped
with the original 7Scenes lists) are expanded to every frame found
under ``seq-NN``.

Record ids are ``<scene>/<sequence>/<frame>`` and unique per database.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence

import numpy as np

from . import geom
from .errors import DuplicateKey, MalformedPoseFile, MissingSplit, SingletonScene
from .relpose import RelativePoseEstimate, pose_metric, relative_pose

log = logging.getLogger(__name__)

DEFAULT_SPLIT_FILES = {"train": "TrainSplit.txt", "test": "TestSplit.txt"}

_SEQUENCE_LINE = re.compile(r"^sequence(\d+)$")


@dataclass(frozen=True, eq=False)
class Pose:
    """Absolute camera pose: world-from-camera rotation + world center."""

    rotation: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", geom.normalize_quat(self.rotation))
        center = np.asarray(self.center, dtype=float).copy()
        if center.shape != (3,) or not np.all(np.isfinite(center)):
            raise ValueError("center must be a finite 3-vector")
        object.__setattr__(self, "center", center)

    def matrix(self) -> np.ndarray:
        """Row-major 4x4 homogeneous camera-to-world matrix."""
        m = np.eye(4)
        m[:3, :3] = geom.quat_to_matrix(self.rotation)
        m[:3, 3] = self.center
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        return cls(geom.quat_from_matrix(m[:3, :3]), m[:3, 3])


@dataclass(frozen=True, eq=False)
class ImageRecord:
    id: str
    scene: str
    split: str
    pose: Pose


@dataclass(frozen=True)
class TrainingPair:
    """Train-time image pair with its ground-truth relative pose.

    ``id_a`` plays the database role and ``id_b`` the query role:
    ``gt_relative.dt_dir`` points from a toward b in a's camera frame.
    """

    id_a: str
    id_b: str
    gt_relative: RelativePoseEstimate


class SceneDatabase:
    """Indexed, immutable collection of posed images."""

    def __init__(self, records: Iterable[ImageRecord]):
        self.records: List[ImageRecord] = sorted(records, key=lambda r: r.id)
        self._by_id = {}
        for rec in self.records:
            if rec.id in self._by_id:
                raise DuplicateKey(f"duplicate record id {rec.id!r}")
            self._by_id[rec.id] = rec

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ImageRecord]:
        return iter(self.records)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id

    def get(self, record_id: str) -> ImageRecord:
        return self._by_id[record_id]

    @property
    def scenes(self) -> List[str]:
        return sorted({rec.scene for rec in self.records})

    def subset(self, scene: Optional[str] = None, split: Optional[str] = None) -> "SceneDatabase":
        return SceneDatabase(
            rec
            for rec in self.records
            if (scene is None or rec.scene == scene) and (split is None or rec.split == split)
        )


def _parse_pose_file(path: Path) -> Pose:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedPoseFile(f"cannot read pose file {path}: {exc}") from None
    tokens = text.split()
    if len(tokens) != 16:
        raise MalformedPoseFile(f"{path}: expected 16 values, found {len(tokens)}")
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise MalformedPoseFile(f"{path}: non-numeric token") from None
    if not all(math.isfinite(v) for v in values):
        raise MalformedPoseFile(f"{path}: non-finite value")
    m = np.array(values).reshape(4, 4)
    if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-6:
        raise MalformedPoseFile(f"{path}: bottom row is not [0 0 0 1]")
    return Pose.from_matrix(m)


def _expand_split_line(scene_dir: Path, line: str) -> List[str]:
    m = _SEQUENCE_LINE.match(line)
    if m:
        seq_dir = scene_dir / f"seq-{int(m.group(1)):02d}"
        if not seq_dir.is_dir():
            raise MissingSplit(f"split names {line!r} but {seq_dir} does not exist")
        frames = sorted(p.name[: -len(".pose.txt")] for p in seq_dir.glob("frame-*.pose.txt"))
        if not frames:
            raise MissingSplit(f"{seq_dir} contains no frame-*.pose.txt files")
        return [f"{seq_dir.name}/{frame}" for frame in frames]
    return [line]


def load_scene(root_path, scene_name: str, split_spec: Optional[dict] = None) -> SceneDatabase:
    """Load one scene's posed images and split assignment.

    Args:
        root_path: dataset root directory.
        scene_name: scene subdirectory name.
        split_spec: map from split name to split file name; defaults to
            ``{"train": "TrainSplit.txt", "test": "TestSplit.txt"}``.
    """
    scene_dir = Path(root_path) / scene_name
    if not scene_dir.is_dir():
        raise MissingSplit(f"scene directory not found: {scene_dir}")
    split_spec = dict(DEFAULT_SPLIT_FILES if split_spec is None else split_spec)

    records = []
    seen = {}
    for split, fname in sorted(split_spec.items()):
        split_path = scene_dir / fname
        if not split_path.is_file():
            raise MissingSplit(f"split file not found: {split_path}")
        for raw in split_path.read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            for rel_id in _expand_split_line(scene_dir, line):
                record_id = f"{scene_name}/{rel_id}"
                if record_id in seen:
                    raise DuplicateKey(
                        f"{record_id!r} listed in both {seen[record_id]!r} and {split!r}"
                    )
                seen[record_id] = split
                pose = _parse_pose_file(scene_dir / f"{rel_id}.pose.txt")
                records.append(ImageRecord(record_id, scene_name, split, pose))
    return SceneDatabase(records)


def load_scenes(root_path, scene_names: Optional[Sequence[str]] = None,
                split_spec: Optional[dict] = None) -> SceneDatabase:
    """Load and merge several scenes; discovers scenes when names is None."""
    root = Path(root_path)
    if scene_names is None:
        if not root.is_dir():
            raise MissingSplit(f"dataset root not found: {root}")
        train_name = (split_spec or DEFAULT_SPLIT_FILES)["train"]
        scene_names = sorted(p.name for p in root.iterdir() if (p / train_name).is_file())
        if not scene_names:
            raise MissingSplit(f"no scenes with split files under {root}")
    records = []
    for name in scene_names:
        records.extend(load_scene(root, name, split_spec).records)
    return SceneDatabase(records)


def write_scene(db: SceneDatabase, root_path, split_spec: Optional[dict] = None) -> None:
    """Serialize a database back to the on-disk layout described above."""
    root = Path(root_path)
    split_spec = dict(DEFAULT_SPLIT_FILES if split_spec is None else split_spec)
    for scene in db.scenes:
        scene_dir = root / scene
        by_split = {split: [] for split in split_spec}
        for rec in db.subset(scene=scene):
            rel_id = rec.id[len(scene) + 1 :]
            by_split.setdefault(rec.split, []).append(rel_id)
            path = scene_dir / f"{rel_id}.pose.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            rows = rec.pose.matrix()
            path.write_text(
                "\n".join("\t".join(f"{v:.9e}" for v in row) for row in rows) + "\n",
                encoding="utf-8",
            )
        for split, fname in split_spec.items():
            (scene_dir / fname).write_text(
                "".join(f"{rel_id}\n" for rel_id in sorted(by_split.get(split, []))),
                encoding="utf-8",
            )


def generate_pairs(
    db: SceneDatabase,
    max_dist_m: float = 0.5,
    max_angle_deg: float = 40.0,
    seed: int = 0,
) -> List[TrainingPair]:
    """One training pair per train image, partner drawn from nearby views.

    The partner is sampled uniformly (seeded) among same-scene train
    images within ``max_dist_m`` and ``max_angle_deg`` of the anchor;
    when none qualifies, the nearest image under the combined pose
    metric is used instead. Images whose centers coincide with the
    anchor are never eligible (no translation direction exists).
    """
    rng = np.random.default_rng(seed)
    pairs: List[TrainingPair] = []
    for scene in db.scenes:
        train = db.subset(scene=scene, split="train").records
        if len(train) < 2:
            raise SingletonScene(f"scene {scene!r} train split has {len(train)} image(s)")
        for rec in train:
            usable = [
                other
                for other in train
                if other.id != rec.id
                and float(np.linalg.norm(other.pose.center - rec.pose.center)) >= 1e-9
            ]
            if not usable:
                raise SingletonScene(f"no partner with a distinct center for {rec.id!r}")
            candidates = [
                other
                for other in usable
                if float(np.linalg.norm(other.pose.center - rec.pose.center)) <= max_dist_m
                and geom.quat_angle_deg(other.pose.rotation, rec.pose.rotation) <= max_angle_deg
            ]
            if candidates:
                partner = candidates[int(rng.integers(len(candidates)))]
            else:
                partner = min(usable, key=lambda o: (pose_metric(rec.pose, o.pose), o.id))
            pairs.append(TrainingPair(rec.id, partner.id, relative_pose(rec.pose, partner.pose)))
    return pairs


def write_pairs(pairs: Sequence[TrainingPair], path) -> None:
    """Write training pairs as JSON lines {"a", "b", "dq", "dt"}."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {
                        "a": pair.id_a,
                        "b": pair.id_b,
                        "dq": [float(v) for v in pair.gt_relative.dq],
                        "dt": [float(v) for v in pair.gt_relative.dt_dir],
                    }
                )
            )
            fh.write("\n")


def transform_pose(pose: Pose, g_rot: np.ndarray, g_t: np.ndarray) -> Pose:
    """Apply a global rigid transform to an absolute pose."""
    return Pose(geom.quat_mul(g_rot, pose.rotation), geom.quat_rotate(g_rot, pose.center) + g_t)


def apply_rigid_transform(db: SceneDatabase, g_rot: np.ndarray, g_t) -> SceneDatabase:
    """Database with every pose mapped through the same rigid transform."""
    g_rot = geom.normalize_quat(g_rot)
    g_t = np.asarray(g_t, dtype=float)
    return SceneDatabase(
        ImageRecord(rec.id, rec.scene, rec.split, transform_pose(rec.pose, g_rot, g_t))
        for rec in db.records
    )


def synth_scene(
    scene_name: str,
    n_train: int,
    n_test: int,
    seed: int = 0,
    box_m: float = 4.0,
    step_m: float = 0.08,
    step_deg: float = 5.0,
    seq_len: int = 500,
) -> SceneDatabase:
    """Random smooth camera trajectory inside a box, split into sequences.

    Centers random-walk with reflection at the box walls; orientations
    accumulate small random-axis rotations. Train frames fill the first
    sequences, test frames continue the numbering, which makes the
    output loadable through the standard directory layout after
    ``write_scene``.
    """
    rng = np.random.default_rng(seed)
    center = rng.uniform(0.0, box_m, size=3)
    rotation = geom.random_quat(rng)

    def advance():
        nonlocal center, rotation
        center = center + rng.normal(0.0, step_m, size=3)
        # reflect into [0, box_m] so trajectories stay room-sized
        center = np.abs(center)
        center = box_m - np.abs(box_m - center)
        rotation = geom.quat_mul(
            rotation,
            geom.quat_from_axis_angle(geom.random_unit_vec(rng), abs(rng.normal(0.0, step_deg))),
        )

    records = []
    frame_in_seq = 0
    seq_index = 1
    for split, count in (("train", n_train), ("test", n_test)):
        if count > 0 and frame_in_seq > 0:
            seq_index += 1  # splits never share a sequence
            frame_in_seq = 0
        for _ in range(count):
            if frame_in_seq >= seq_len:
                seq_index += 1
                frame_in_seq = 0
            rec_id = f"{scene_name}/seq-{seq_index:02d}/frame-{frame_in_seq:06d}"
            records.append(ImageRecord(rec_id, scene_name, split, Pose(rotation, center)))
            frame_in_seq += 1
            advance()
    return SceneDatabase(records)
