"""UWB range generation and least-squares position reconstruction.

Supports time-of-arrival ranging (one absolute distance per anchor) and two
time-difference-of-arrival topologies: a main-base-station scheme where
every difference is taken against anchor 1, and a ring scheme chaining
consecutive anchors with a wraparound pair.  Each solver rewrites the
squared-range identities as an overdetermined linear system and solves it by
QR factorization; forming the normal equations would square the condition
number, so it is avoided.  The TDOA systems carry the unknown distance to
anchor 1 as a fourth state alongside the position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "GeometryDegenerate",
    "AnchorSet",
    "ToaRanges",
    "TdoaRanges",
    "PositionFix",
    "GeometryReport",
    "RangeSet",
    "toa_ranges",
    "toa_solve",
    "tdoa_ranges",
    "tdoa_solve_main_bs",
    "tdoa_solve_ring",
    "solve_fix",
    "geometry_check",
]

MIN_ANCHOR_SEPARATION = 1e-6
DEFAULT_COND_CEILING = 1e8

RING = "ring"
MAIN_BS = "main-bs"


class GeometryDegenerate(RuntimeError):
    """Anchor geometry cannot support a well-posed position solve."""


@dataclass(frozen=True)
class AnchorSet:
    """Fixed anchor positions in the inertial frame.

    ``dim`` selects the positioning dimensionality: 3 solves for the full
    position, 2 restricts the solve to the x/y plane (planar deployments).
    Anchor-count admissibility is reported by :func:`geometry_check` and
    enforced by the solvers, so sets of any size can be constructed and
    inspected.
    """

    anchors: np.ndarray
    dim: int = 3

    def __post_init__(self) -> None:
        a = np.asarray(self.anchors, dtype=float)
        if a.ndim != 2 or a.shape[1] != 3:
            raise ValueError("anchors must be an (N, 3) array")
        if not np.all(np.isfinite(a)):
            raise ValueError("anchor coordinates must be finite")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        diffs = a[:, None, :] - a[None, :, :]
        dist = np.linalg.norm(diffs, axis=2)
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= MIN_ANCHOR_SEPARATION:
            raise ValueError("anchors closer than the minimum separation")
        object.__setattr__(self, "anchors", a)

    def __len__(self) -> int:
        return self.anchors.shape[0]


@dataclass(frozen=True)
class ToaRanges:
    """Absolute distances from the tag to every anchor, in anchor order."""

    d: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 1 or not np.all(np.isfinite(d)) or np.any(d < 0.0):
            raise ValueError("ranges must be finite and non-negative")
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class TdoaRanges:
    """Range differences under one of the two supported topologies.

    ``main-bs``: entry k is dist(anchor k+2) - dist(anchor 1), k = 0..N-2.
    ``ring``: entry k is dist(anchor k+2) - dist(anchor k+1) for
    k = 0..N-2 plus the wraparound dist(anchor 1) - dist(anchor N).
    (1-based anchor numbering in both descriptions.)
    """

    topology: str
    diffs: np.ndarray

    def __post_init__(self) -> None:
        if self.topology not in (MAIN_BS, RING):
            raise ValueError(f"unknown TDOA topology {self.topology!r}")
        d = np.asarray(self.diffs, dtype=float)
        if d.ndim != 1 or not np.all(np.isfinite(d)):
            raise ValueError("diffs must be a finite 1-D array")
        object.__setattr__(self, "diffs", d)


RangeSet = ToaRanges | TdoaRanges


@dataclass(frozen=True)
class PositionFix:
    """Least-squares position solution.

    ``aux_range`` is the recovered distance to anchor 1 for TDOA solves
    (None for TOA); ``aux_clamped`` flags a negative auxiliary range that
    was clamped to zero.  ``condition_number`` is that of the solved system
    matrix.
    """

    p: np.ndarray
    condition_number: float
    aux_range: float | None = None
    aux_clamped: bool = False


@dataclass(frozen=True)
class GeometryReport:
    anchor_count: int
    rank: int
    condition_number: float
    admissible: bool
    reason: str = ""


def toa_ranges(p: np.ndarray, anchors: AnchorSet) -> ToaRanges:
    """Noise-free absolute ranges from position ``p`` to every anchor."""
    p = np.asarray(p, dtype=float)
    return ToaRanges(d=np.linalg.norm(anchors.anchors - p, axis=1))


def tdoa_ranges(
    p: np.ndarray,
    anchors: AnchorSet,
    topology: str,
    tag_offset: tuple[np.ndarray, np.ndarray] | None = None,
) -> TdoaRanges:
    """Noise-free range differences for the requested topology.

    ``tag_offset`` is an optional ``(rotation, lever_arm)`` pair placing the
    tag at ``p + rotation @ lever_arm`` instead of ``p`` (tag mounted away
    from the vehicle reference point).
    """
    p = np.asarray(p, dtype=float)
    if tag_offset is not None:
        rot, lever = tag_offset
        p = p + np.asarray(rot, dtype=float) @ np.asarray(lever, dtype=float)
    d = np.linalg.norm(anchors.anchors - p, axis=1)
    n = len(anchors)
    if topology == MAIN_BS:
        diffs = d[1:] - d[0]
    elif topology == RING:
        diffs = np.roll(d, -1) - d
    else:
        raise ValueError(f"unknown TDOA topology {topology!r}")
    if len(diffs) != (n - 1 if topology == MAIN_BS else n):
        raise AssertionError("internal: difference count mismatch")
    return TdoaRanges(topology=topology, diffs=diffs)


def _qr_solve(a: np.ndarray, b: np.ndarray, cond_ceiling: float) -> tuple[np.ndarray, float]:
    """Least-squares solve via QR with rank and conditioning guards."""
    q, r = np.linalg.qr(a)
    sv = np.linalg.svd(r, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * max(a.shape) * np.finfo(float).eps)) if sv[0] > 0 else 0
    if rank < a.shape[1]:
        raise GeometryDegenerate(f"system rank {rank} below {a.shape[1]} unknowns")
    cond = float(sv[0] / sv[-1])
    if cond > cond_ceiling:
        raise GeometryDegenerate(f"condition number {cond:.3g} above ceiling {cond_ceiling:.3g}")
    x = solve_triangular(r, q.T @ b)
    return x, cond


def toa_solve(
    anchors: AnchorSet, ranges: ToaRanges, cond_ceiling: float = DEFAULT_COND_CEILING
) -> PositionFix:
    """Position from absolute ranges.

    Differencing the squared-range identity ``d_i^2 = ||h_i||^2 + ||p||^2 -
    2 h_i . p`` against anchor 1 cancels ``||p||^2`` and leaves the linear
    system with rows ``(h_i - h_1) . p = (d_1^2 - d_i^2 + ||h_i||^2 -
    ||h_1||^2) / 2``.

    Raises
    ------
    GeometryDegenerate
        If fewer than ``dim + 1`` anchors, rank-deficient geometry, or
        conditioning above ``cond_ceiling``.
    """
    h = anchors.anchors
    n = len(anchors)
    dim = anchors.dim
    if n < dim + 1:
        raise GeometryDegenerate(f"need at least {dim + 1} anchors, got {n}")
    d = ranges.d
    if d.shape != (n,):
        raise ValueError("range count does not match anchor count")
    hn2 = np.sum(h[:, :dim] * h[:, :dim], axis=1)
    a = h[1:, :dim] - h[0, :dim]
    b = 0.5 * (d[0] ** 2 - d[1:] ** 2 + hn2[1:] - hn2[0])
    x, cond = _qr_solve(a, b, cond_ceiling)
    p = np.zeros(3)
    p[:dim] = x
    return PositionFix(p=p, condition_number=cond)


def _finish_tdoa(x: np.ndarray, cond: float, dim: int) -> PositionFix:
    p = np.zeros(3)
    p[:dim] = x[:dim]
    aux = float(x[dim])
    clamped = aux < 0.0
    if clamped:
        aux = 0.0
    return PositionFix(p=p, condition_number=cond, aux_range=aux, aux_clamped=clamped)


def tdoa_solve_main_bs(
    anchors: AnchorSet, ranges: TdoaRanges, cond_ceiling: float = DEFAULT_COND_CEILING
) -> PositionFix:
    """Position from main-base-station range differences.

    With ``d_i1 = dist_i - dist_1``, squaring ``dist_i = d_i1 + dist_1``
    gives rows ``(h_1 - h_i) . p - d_i1 * dist_1 = (d_i1^2 + ||h_1||^2 -
    ||h_i||^2) / 2`` in the stacked unknown ``[p, dist_1]``.

    Raises
    ------
    GeometryDegenerate
        If fewer than ``dim + 2`` anchors (the system has ``dim + 1``
        unknowns and ``N - 1`` rows), rank deficiency, or bad conditioning.
    """
    if ranges.topology != MAIN_BS:
        raise ValueError("expected main-bs ranges")
    h = anchors.anchors
    n = len(anchors)
    dim = anchors.dim
    if n < dim + 2:
        raise GeometryDegenerate(f"need at least {dim + 2} anchors, got {n}")
    diffs = ranges.diffs
    if diffs.shape != (n - 1,):
        raise ValueError("difference count does not match anchor count")
    hn2 = np.sum(h[:, :dim] * h[:, :dim], axis=1)
    a = np.empty((n - 1, dim + 1))
    a[:, :dim] = h[0, :dim] - h[1:, :dim]
    a[:, dim] = -diffs
    b = 0.5 * (diffs**2 + hn2[0] - hn2[1:])
    x, cond = _qr_solve(a, b, cond_ceiling)
    return _finish_tdoa(x, cond, dim)


def tdoa_solve_ring(
    anchors: AnchorSet, ranges: TdoaRanges, cond_ceiling: float = DEFAULT_COND_CEILING
) -> PositionFix:
    """Position from ring range differences.

    Consecutive differences telescope: dist to anchor j equals dist to
    anchor 1 plus the partial sum ``c_j`` of the first ``j - 1`` differences.
    Substituting into the squared-range identity for pair (j, j+1) yields
    rows ``(h_j - h_{j+1}) . p - d * dist_1 = (d^2 + ||h_j||^2 -
    ||h_{j+1}||^2 + 2 d c_j) / 2`` with ``d`` the pair's difference; the
    first row has an empty partial sum and the wraparound pair (N, 1) closes
    the ring with ``c_N``.

    Raises
    ------
    GeometryDegenerate
        If fewer than ``dim + 2`` anchors, rank deficiency, or bad
        conditioning.  The ring rows sum to zero by telescoping, so the
        system rank is at most ``N - 1`` and ``N`` rows only determine the
        ``dim + 1`` unknowns once ``N >= dim + 2``.
    """
    if ranges.topology != RING:
        raise ValueError("expected ring ranges")
    h = anchors.anchors
    n = len(anchors)
    dim = anchors.dim
    if n < dim + 2:
        raise GeometryDegenerate(f"need at least {dim + 2} anchors, got {n}")
    diffs = ranges.diffs
    if diffs.shape != (n,):
        raise ValueError("difference count does not match anchor count")
    hn2 = np.sum(h[:, :dim] * h[:, :dim], axis=1)
    nxt = np.roll(np.arange(n), -1)
    partial = np.concatenate([[0.0], np.cumsum(diffs[:-1])])
    a = np.empty((n, dim + 1))
    a[:, :dim] = h[:, :dim] - h[nxt, :dim]
    a[:, dim] = -diffs
    b = 0.5 * (diffs**2 + hn2 - hn2[nxt] + 2.0 * diffs * partial)
    x, cond = _qr_solve(a, b, cond_ceiling)
    return _finish_tdoa(x, cond, dim)


def solve_fix(
    anchors: AnchorSet,
    obs: ToaRanges | TdoaRanges,
    cond_ceiling: float = DEFAULT_COND_CEILING,
) -> PositionFix:
    """Dispatch an observation to the solver matching its topology."""
    if isinstance(obs, ToaRanges):
        return toa_solve(anchors, obs, cond_ceiling)
    if obs.topology == MAIN_BS:
        return tdoa_solve_main_bs(anchors, obs, cond_ceiling)
    return tdoa_solve_ring(anchors, obs, cond_ceiling)


_MIN_COUNT = {"toa": 1, "tdoa-main": 2, "tdoa-ring": 2}


def geometry_check(
    anchors: AnchorSet, mode: str, cond_ceiling: float = DEFAULT_COND_CEILING
) -> GeometryReport:
    """Report whether the anchor geometry admits the requested solve.

    ``mode`` is one of ``toa``, ``tdoa-main``, ``tdoa-ring``.  The report
    combines the anchor-count floor (``dim + 1`` for TOA, ``dim + 2`` for
    both TDOA topologies), the rank of the anchor-difference matrix, and
    its condition number.
    """
    if mode not in _MIN_COUNT:
        raise ValueError(f"unknown mode {mode!r}")
    h = anchors.anchors[:, : anchors.dim]
    n = len(anchors)
    min_count = anchors.dim + _MIN_COUNT[mode]
    diff = h[1:] - h[0]
    rank = int(np.linalg.matrix_rank(diff)) if n > 1 else 0
    if rank == anchors.dim:
        sv = np.linalg.svd(diff, compute_uv=False)
        cond = float(sv[0] / sv[anchors.dim - 1])
    else:
        cond = float("inf")
    if n < min_count:
        return GeometryReport(n, rank, cond, False, f"need at least {min_count} anchors")
    if rank < anchors.dim:
        return GeometryReport(n, rank, cond, False, "anchors do not span the solve space")
    if cond > cond_ceiling:
        return GeometryReport(n, rank, cond, False, "condition number above ceiling")
    return GeometryReport(n, rank, cond, True)
