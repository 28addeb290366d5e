"""Quaternion, rotation, and ray primitives.

Conventions
-----------
- Quaternions are numpy arrays ``[w, x, y, z]`` (scalar first) and always
  unit norm within 1e-9 after any operation here.
- Canonical sign: the first nonzero component of ``(w, x, y, z)`` is
  positive, so ``q`` and ``-q`` serialize and compare identically.
- Public angles are in degrees; radians appear only inside the tangent
  space math of the rotation averages.
- Vectors are numpy arrays ``[x, y, z]``; direction vectors are unit norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateRays, EmptyInput, NonRotationMatrix, ZeroVector

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

_NORM_SKIP_TOL = 1e-12  # already-unit inputs pass through bit-exact


def _canonical_sign(q: np.ndarray) -> np.ndarray:
    for c in q:
        if c != 0.0:
            return -q if c < 0.0 else q
    return q


def normalize_quat(q) -> np.ndarray:
    """Unit-norm, sign-canonical copy of a quaternion."""
    q = np.asarray(q, dtype=float).copy()
    n = math.sqrt(float(q @ q))
    if n < 1e-12:
        raise ZeroVector("cannot normalize zero quaternion")
    if abs(n - 1.0) > _NORM_SKIP_TOL:
        q /= n
    return _canonical_sign(q)


def normalize_vec(v) -> np.ndarray:
    """Unit-norm copy of a 3-vector."""
    v = np.asarray(v, dtype=float).copy()
    n = math.sqrt(float(v @ v))
    if n < 1e-12:
        raise ZeroVector("cannot normalize zero vector")
    if abs(n - 1.0) > _NORM_SKIP_TOL:
        v /= n
    return v


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of two unit quaternions, renormalized and canonical."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return normalize_quat(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic rotation angle between two unit quaternions, in [0, 180] degrees.

    Sign-invariant in both arguments (double cover).
    """
    return math.degrees(_geodesic_rad(a, b))


def _geodesic_rad(a: np.ndarray, b: np.ndarray) -> float:
    # chord form of 2*acos(|a.b|): well conditioned near zero angle
    chord = min(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b)))
    return 4.0 * math.asin(min(1.0, 0.5 * chord))


def quat_rotate(q: np.ndarray, v) -> np.ndarray:
    """Apply the rotation of unit quaternion ``q`` to a 3-vector."""
    v = np.asarray(v, dtype=float)
    u = q[1:4]
    # v + 2 u x (u x v + w v), the expanded sandwich product
    t = 2.0 * np.cross(u, v)
    return v + q[0] * t + np.cross(u, t)


def quat_from_axis_angle(axis, angle_deg: float) -> np.ndarray:
    """Unit quaternion rotating by ``angle_deg`` about ``axis``."""
    axis = normalize_vec(axis)
    half = math.radians(angle_deg) / 2.0
    s = math.sin(half)
    return normalize_quat([math.cos(half), s * axis[0], s * axis[1], s * axis[2]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m, ortho_tol: float = 1e-6) -> np.ndarray:
    """Unit quaternion of a 3x3 rotation matrix (Shepperd's branching).

    Raises NonRotationMatrix if ``m`` is not orthonormal with det +1
    within ``ortho_tol``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise NonRotationMatrix(f"expected 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonRotationMatrix("matrix has non-finite entries")
    if np.max(np.abs(m.T @ m - np.eye(3))) > ortho_tol:
        raise NonRotationMatrix("matrix is not orthonormal within tolerance")
    if np.linalg.det(m) < 0.0:
        raise NonRotationMatrix("matrix determinant is negative")

    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return normalize_quat(q)


def quat_log(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, radians) of a unit quaternion.

    Uses the representative with w >= 0, so the angle is in [0, pi].
    """
    if q[0] < 0.0:
        q = -q
    vn = math.sqrt(float(q[1:4] @ q[1:4]))
    if vn < 1e-15:
        return np.zeros(3)
    angle = 2.0 * math.atan2(vn, q[0])
    return q[1:4] * (angle / vn)


def quat_exp(v: np.ndarray) -> np.ndarray:
    """Unit quaternion of a rotation vector (axis * angle, radians)."""
    angle = math.sqrt(float(v @ v))
    if angle < 1e-15:
        return normalize_quat([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
    s = math.sin(angle / 2.0) / angle
    return normalize_quat([math.cos(angle / 2.0), s * v[0], s * v[1], s * v[2]])


def random_quat(rng: np.random.Generator) -> np.ndarray:
    """Rotation drawn uniformly from SO(3) (normalized 4-D Gaussian)."""
    while True:
        g = rng.normal(size=4)
        if math.sqrt(float(g @ g)) >= 1e-9:
            return normalize_quat(g)


def random_unit_vec(rng: np.random.Generator) -> np.ndarray:
    """Direction drawn uniformly from the unit sphere."""
    while True:
        g = rng.normal(size=3)
        if math.sqrt(float(g @ g)) >= 1e-9:
            return normalize_vec(g)


@dataclass(frozen=True, eq=False)
class Ray:
    """Half-line from ``origin`` along unit ``direction``."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).copy())
        object.__setattr__(self, "direction", normalize_vec(self.direction))

    def point_at(self, s: float) -> np.ndarray:
        return self.origin + s * self.direction


class MidpointResult(NamedTuple):
    point: np.ndarray
    s1: float
    s2: float
    gap: float


def triangulate_midpoint(r1: Ray, r2: Ray, parallel_eps: float = 1e-6) -> MidpointResult:
    """Closest-approach midpoint of two rays.

    Solves the 2x2 normal equations for the parameters (s1, s2) that
    minimize ``|r1(s1) - r2(s2)|`` and returns the midpoint of the two
    closest points together with the residual gap.

    Raises DegenerateRays when ``|d1 . d2| > 1 - parallel_eps``; the
    system is too ill conditioned near parallel rays.
    """
    d1, d2 = r1.direction, r2.direction
    a = float(d1 @ d2)
    if abs(a) > 1.0 - parallel_eps:
        raise DegenerateRays(f"rays nearly parallel (|d1.d2| = {abs(a):.9f})")
    r = r2.origin - r1.origin
    b1 = float(d1 @ r)
    b2 = float(d2 @ r)
    det = 1.0 - a * a
    s1 = (b1 - a * b2) / det
    s2 = (a * b1 - b2) / det
    p1 = r1.point_at(s1)
    p2 = r2.point_at(s2)
    gap = float(np.linalg.norm(p1 - p2))
    return MidpointResult(0.5 * (p1 + p2), s1, s2, gap)


def chordal_l2_mean(qs: Sequence[np.ndarray], max_iters: int = 200, residual_tol: float = 1e-12) -> np.ndarray:
    """Chordal L2 average: principal eigenvector of the 4x4 accumulator.

    Maximizes sum((q . q_i)^2), which is sign-invariant. Computed by
    power iteration on ``sum(q_i q_i^T)`` started from the first input.
    """
    if len(qs) == 0:
        raise EmptyInput("chordal_l2_mean needs at least one quaternion")
    acc = np.zeros((4, 4))
    for q in qs:
        acc += np.outer(q, q)
    v = normalize_quat(qs[0])
    for basis in range(5):
        if basis > 0:
            # pathological start orthogonal to the dominant eigenvector
            v = np.zeros(4)
            v[basis - 1] = 1.0
        for _ in range(max_iters):
            w = acc @ v
            nw = math.sqrt(float(w @ w))
            if nw < 1e-300:
                break
            v = w / nw
            lam = float(v @ acc @ v)
            if float(np.linalg.norm(acc @ v - lam * v)) <= residual_tol:
                return normalize_quat(v)
        else:
            # ran out of iterations without stalling: good enough
            return normalize_quat(v)
    return normalize_quat(v)


def l1_geodesic_median(
    qs: Sequence[np.ndarray],
    max_iters: int = 100,
    step_tol_rad: float = 1e-9,
    anchor_tol_rad: float = 1e-12,
    full_output: bool = False,
):
    """Robust L1 rotation average via Weiszfeld iteration on SO(3).

    Starts at the chordal L2 mean and iterates the tangent-space update
    ``delta = sum(v_i / |v_i|) / sum(1 / |v_i|)`` with
    ``v_i = log(conj(q) * q_i)``. Terms with ``|v_i| < anchor_tol_rad``
    are dropped from both sums so an iterate sitting on an input point
    does not blow up the weights. Stops when ``|delta| < step_tol_rad``,
    after ``max_iters`` iterations, or when a step would increase the
    cost (the step is then rejected).

    With ``full_output=True`` also returns a dict with the accepted cost
    sequence, iteration count, and the final step norm.
    """
    if len(qs) == 0:
        raise EmptyInput("l1_geodesic_median needs at least one quaternion")

    def cost(r):
        return sum(_geodesic_rad(r, qi) for qi in qs)

    q = chordal_l2_mean(qs)
    costs = [cost(q)]
    last_step = 0.0
    converged = False
    for _ in range(max_iters):
        num = np.zeros(3)
        den = 0.0
        for qi in qs:
            v = quat_log(quat_mul(quat_conj(q), qi))
            n = math.sqrt(float(v @ v))
            if n < anchor_tol_rad:
                continue
            num += v / n
            den += 1.0 / n
        if den == 0.0:
            last_step = 0.0
            converged = True
            break  # coincident with every input
        delta = num / den
        last_step = math.sqrt(float(delta @ delta))
        if last_step < step_tol_rad:
            converged = True
            break
        candidate = quat_mul(q, quat_exp(delta))
        c = cost(candidate)
        if c > costs[-1] + 1e-15:
            break  # reject an increasing step
        q = candidate
        costs.append(c)
    if full_output:
        info = {
            "costs": costs,
            "iterations": len(costs) - 1,
            "final_step_rad": last_step,
            "converged": converged,
        }
        return q, info
    return q
