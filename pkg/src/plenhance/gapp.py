"""Label propagation: direct propagation and the geometry-aware progressive
expansion that leaves misprojected outliers unlabeled.

The progressive variant alternates two steps until nothing new is reachable:
measure how spread-out the current seed set is (the exploration distance,
i.e. the largest nearest-neighbor gap within the seeds), then absorb every
unlabeled point within beta times that distance of some seed. Points whose
chain distance to the seed set always exceeds that radius never get the label.

``gapp_propagate`` runs on a KD-tree; ``gapp_propagate_bruteforce`` is the
index-free O(n^2) oracle with the identical contract. Both compute distances
with the same elementary float64 operations, so their outputs must match
exactly, not just approximately.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptySet, OutOfRange
from .types import SINGLE_SEED_POLICIES, PointCloud, _readonly


@dataclass(frozen=True, eq=False)
class PropagationResult:
    """Outcome of one mask's propagation.

    ``rounds`` counts expansion-set evaluations: every productive round plus
    the terminating evaluation that comes back empty. No propagation at all is
    reported as rounds=0, so rounds=0 iff ``newly_labeled`` is empty (for the
    progressive method; direct propagation always reports one round).
    ``final_d_exp`` is the last exploration distance evaluated, or None when
    none ever was.
    """

    newly_labeled: np.ndarray
    rounds: int
    final_d_exp: Optional[float]


def _as_index_array(indices) -> np.ndarray:
    return np.asarray(indices, dtype=np.int64).reshape(-1)


def _result(newly: list[np.ndarray], rounds: int, d_exp: Optional[float]) -> PropagationResult:
    if newly:
        labeled = np.sort(np.concatenate(newly))
    else:
        labeled = np.empty(0, dtype=np.int64)
    return PropagationResult(newly_labeled=_readonly(labeled), rounds=rounds, final_d_exp=d_exp)


def direct_propagate(
    seeds,
    unlabeled,
    class_id: int,
    labels_out: Optional[np.ndarray] = None,
) -> PropagationResult:
    """Assign the class to every unlabeled point at once (the baseline)."""
    seeds = np.unique(_as_index_array(seeds))
    unlabeled = np.unique(_as_index_array(unlabeled))
    if np.intersect1d(seeds, unlabeled, assume_unique=True).size:
        raise ValueError("seeds and unlabeled must be disjoint")
    if labels_out is not None and unlabeled.size:
        labels_out[unlabeled] = class_id
    newly = [unlabeled] if unlabeled.size else []
    return _result(newly, rounds=1, d_exp=None)


def min_dist_to_set(i: int, member_indices, cloud: PointCloud) -> float:
    """Smallest Euclidean distance from point i to any *other* point of the set."""
    member_indices = _as_index_array(member_indices)
    others = member_indices[member_indices != i]
    if others.size == 0:
        raise EmptySet(f"point {i} has no other set member to measure against")
    xyz = cloud.xyz.astype(np.float64)
    d2 = ((xyz[others] - xyz[i]) ** 2).sum(axis=1)
    return float(np.sqrt(d2.min()))


def exploration_distance(seeds, cloud: PointCloud) -> Optional[float]:
    """Largest nearest-neighbor gap within the seed set.

    None for a single seed (no neighbor to measure); the caller decides how to
    handle that via the single-seed policy.
    """
    seeds = _as_index_array(seeds)
    if seeds.size == 0:
        raise EmptySet("exploration distance needs at least one seed")
    if seeds.size == 1:
        return None
    xyz = cloud.xyz.astype(np.float64)
    seed_xyz = xyz[seeds]
    worst = 0.0
    for pos, i in enumerate(seeds):
        d2 = ((seed_xyz - seed_xyz[pos]) ** 2).sum(axis=1)
        d2[seeds == i] = np.inf  # k != i excludes every copy of the index
        gap = float(np.sqrt(d2.min()))
        if gap > worst:
            worst = gap
    return worst


def expansion_set(unlabeled, seeds, d_exp: float, beta: float, cloud: PointCloud) -> np.ndarray:
    """Unlabeled points within beta*d_exp of the seed set (inclusive boundary)."""
    unlabeled = _as_index_array(unlabeled)
    seeds = _as_index_array(seeds)
    if unlabeled.size == 0:
        return unlabeled
    xyz = cloud.xyz.astype(np.float64)
    radius = beta * d_exp
    seed_xyz = xyz[seeds]
    keep = np.zeros(unlabeled.size, dtype=bool)
    for pos, k in enumerate(unlabeled):
        d2 = ((seed_xyz - xyz[k]) ** 2).sum(axis=1)
        keep[pos] = np.sqrt(d2.min()) <= radius
    return unlabeled[keep]


class SpatialIndex:
    """Nearest-neighbor index over a growing subset of one cloud's points.

    Insertions are buffered and the KD-tree is rebuilt lazily on the next
    query, so a round of many insertions costs one rebuild. Queries return
    exactly what a linear scan over the same coordinates returns.
    """

    def __init__(self, cloud: PointCloud, subset) -> None:
        subset = _as_index_array(subset)
        if subset.size == 0:
            raise EmptySet("spatial index needs a nonempty subset")
        self._xyz = cloud.xyz.astype(np.float64)
        self._members = subset.copy()
        self._tree: Optional[cKDTree] = None

    def __len__(self) -> int:
        return self._members.size

    def insert(self, indices) -> None:
        indices = _as_index_array(indices)
        if indices.size == 0:
            return
        self._members = np.concatenate([self._members, indices])
        self._tree = None

    def _ensure_tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self._xyz[self._members])
        return self._tree

    def min_distance_to_members(self, query_indices) -> np.ndarray:
        """Distance from each query point to its nearest member."""
        query_indices = _as_index_array(query_indices)
        if query_indices.size == 0:
            return np.empty(0, dtype=np.float64)
        tree = self._ensure_tree()
        d, _ = tree.query(self._xyz[query_indices], k=1)
        return np.atleast_1d(d)

    def max_nearest_neighbor_gap(self) -> float:
        """Max over members of the distance to the nearest *other* member."""
        if self._members.size < 2:
            raise EmptySet("nearest-neighbor gap needs at least two members")
        tree = self._ensure_tree()
        d, _ = tree.query(self._xyz[self._members], k=2)
        return float(d[:, 1].max())


def build_spatial_index(cloud: PointCloud, subset) -> SpatialIndex:
    """Index supporting nearest-member distance queries and insertion."""
    return SpatialIndex(cloud, subset)


def _propagation_args(
    seeds, unlabeled, single_seed_policy: str, single_seed_radius: Optional[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Normalize the index sets and vet the policy; returns (seeds, unlabeled)."""
    seeds = np.unique(_as_index_array(seeds))
    unlabeled = np.unique(_as_index_array(unlabeled))
    if seeds.size == 0:
        raise EmptySet("propagation needs a nonempty seed set")
    if np.intersect1d(seeds, unlabeled, assume_unique=True).size:
        raise ValueError("seeds and unlabeled must be disjoint")
    if single_seed_policy not in SINGLE_SEED_POLICIES:
        raise OutOfRange(f"unknown single_seed_policy {single_seed_policy!r}")
    if single_seed_policy == "fixed_radius" and single_seed_radius is None:
        raise OutOfRange("fixed_radius policy needs single_seed_radius")
    return seeds, unlabeled


def gapp_propagate(
    seeds,
    unlabeled,
    class_id: int,
    cloud: PointCloud,
    beta: float,
    single_seed_policy: str = "skip",
    single_seed_radius: Optional[float] = None,
    labels_out: Optional[np.ndarray] = None,
) -> PropagationResult:
    """Progressively absorb unlabeled points reachable from the seed set.

    Each round recomputes the exploration distance over the *current* seeds
    (newly absorbed points participate), absorbs everything within
    beta*d_exp, and stops at the first empty expansion. A single seed has no
    exploration distance; policy "skip" does nothing, "fixed_radius" uses the
    configured radius for the first expansion instead.
    """
    seeds, unlabeled = _propagation_args(seeds, unlabeled, single_seed_policy, single_seed_radius)

    if seeds.size == 1 and single_seed_policy == "skip":
        return _result([], rounds=0, d_exp=None)

    index = SpatialIndex(cloud, seeds)
    remaining = unlabeled.copy()
    newly: list[np.ndarray] = []
    rounds = 0
    final_d_exp: Optional[float] = None

    while remaining.size:
        if len(index) >= 2:
            d_exp = index.max_nearest_neighbor_gap()
            radius = beta * d_exp
        else:
            d_exp = float(single_seed_radius)
            radius = d_exp
        final_d_exp = d_exp
        dist = index.min_distance_to_members(remaining)
        absorb = dist <= radius
        if not absorb.any():
            if newly:
                rounds += 1
            break
        rounds += 1
        batch = remaining[absorb]
        newly.append(batch)
        if labels_out is not None:
            labels_out[batch] = class_id
        index.insert(batch)
        remaining = remaining[~absorb]

    return _result(newly, rounds=rounds, d_exp=final_d_exp)


def gapp_propagate_bruteforce(
    seeds,
    unlabeled,
    class_id: int,
    cloud: PointCloud,
    beta: float,
    single_seed_policy: str = "skip",
    single_seed_radius: Optional[float] = None,
    labels_out: Optional[np.ndarray] = None,
) -> PropagationResult:
    """Index-free oracle for gapp_propagate: per-point linear scans only."""
    seeds, unlabeled = _propagation_args(seeds, unlabeled, single_seed_policy, single_seed_radius)

    if seeds.size == 1 and single_seed_policy == "skip":
        return _result([], rounds=0, d_exp=None)

    current = seeds.copy()
    remaining = unlabeled.copy()
    newly: list[np.ndarray] = []
    rounds = 0
    final_d_exp: Optional[float] = None

    while remaining.size:
        if current.size >= 2:
            d_exp = exploration_distance(current, cloud)
            final_d_exp = d_exp
            batch = expansion_set(remaining, current, d_exp, beta, cloud)
        else:
            d_exp = float(single_seed_radius)
            final_d_exp = d_exp
            batch = _fixed_radius_expansion(remaining, current, d_exp, cloud)
        if batch.size == 0:
            if newly:
                rounds += 1
            break
        rounds += 1
        newly.append(batch)
        if labels_out is not None:
            labels_out[batch] = class_id
        current = np.concatenate([current, batch])
        remaining = remaining[~np.isin(remaining, batch, assume_unique=True)]

    return _result(newly, rounds=rounds, d_exp=final_d_exp)


def _fixed_radius_expansion(unlabeled, seeds, radius: float, cloud: PointCloud) -> np.ndarray:
    xyz = cloud.xyz.astype(np.float64)
    seed_xyz = xyz[seeds]
    keep = np.zeros(unlabeled.size, dtype=bool)
    for pos, k in enumerate(unlabeled):
        d2 = ((seed_xyz - xyz[k]) ** 2).sum(axis=1)
        keep[pos] = np.sqrt(d2.min()) <= radius
    return unlabeled[keep]
