"""Angular user clustering and per-cluster SIC ordering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .channel import UEProfile

__all__ = [
    "ClusterAssignment",
    "OrderedCluster",
    "ClusteredScenario",
    "sector_of",
    "assign_clusters",
    "sic_order",
    "cluster_scenario",
]


@dataclass(frozen=True)
class ClusterAssignment:
    """Non-empty angular clusters.

    ``clusters[m]`` lists the UE ids of cluster ``m`` and ``sectors[m]`` is
    the (1-based) sector index it came from.  Clusters are ordered by sector.
    """

    num_sectors: int
    clusters: tuple
    sectors: tuple

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    def sector_interval(self, m: int) -> tuple:
        i = self.sectors[m]
        width = np.pi / self.num_sectors
        return (-np.pi / 2 + (i - 1) * width, -np.pi / 2 + i * width)


@dataclass(frozen=True)
class OrderedCluster:
    ue_order: tuple
    ordering_gains: tuple


def sector_of(aod: float, num_sectors: int) -> int:
    """1-based sector of ``aod``; sectors are half-open except the last."""
    if not -np.pi / 2 <= aod <= np.pi / 2:
        raise ValueError(f"aod {aod} outside [-pi/2, pi/2]")
    i = int(np.floor((aod + np.pi / 2) / (np.pi / num_sectors))) + 1
    return min(i, num_sectors)


def assign_clusters(profiles: Sequence[UEProfile], num_sectors: int) -> ClusterAssignment:
    if num_sectors < 1:
        raise ValueError(f"num_sectors must be >= 1, got {num_sectors}")
    if len(profiles) == 0:
        raise ValueError("need at least one UE profile")
    members: dict[int, list] = {}
    for p in profiles:
        members.setdefault(sector_of(p.aod, num_sectors), []).append(p.id)
    sectors = tuple(sorted(members))
    return ClusterAssignment(num_sectors, tuple(tuple(members[s]) for s in sectors), sectors)


def sic_order(cluster: Sequence, ordering_gains: Mapping) -> OrderedCluster:
    """Sort a cluster by descending ordering gain, ties by ascending id.

    Position ``n`` (0-based) in the result still sees interference from
    positions ``0..n-1`` after SIC.
    """
    missing = [u for u in cluster if u not in ordering_gains]
    if missing:
        raise KeyError(f"no ordering gain for UE(s) {missing}")
    order = sorted(cluster, key=lambda u: (-ordering_gains[u], u))
    return OrderedCluster(tuple(order), tuple(float(ordering_gains[u]) for u in order))


class ClusteredScenario:
    """UEs laid out cluster by cluster in SIC order, as dense arrays.

    Row ``k`` of :attr:`eta` is the ``k``-th UE in that layout.  The SIC
    order inside every cluster is fixed by the expected gain ``sum(eta)``.

    Parameters
    ----------
    eta : (K, N_t) array
        Per-beam statistical gains in the clustered, SIC-ordered layout.
    weights : (K,) array
    cluster_sizes : sequence of int
        Number of UEs in each cluster; rows are grouped accordingly.
    ue_ids, sectors, num_sectors, aods : optional bookkeeping.
    """

    def __init__(self, eta, weights, cluster_sizes, ue_ids=None, sectors=None,
                 num_sectors=None, aods=None):
        eta = np.array(eta, dtype=float)
        if eta.ndim != 2:
            raise ValueError("eta must be a (K, N_t) array")
        if np.any(eta < 0):
            raise ValueError("beam gains must be nonnegative")
        k = eta.shape[0]
        sizes = np.array(cluster_sizes, dtype=int)
        if np.any(sizes < 1) or sizes.sum() != k:
            raise ValueError("cluster sizes must be positive and sum to the number of UEs")
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (k,)).copy()
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        self.eta = eta
        self.weights = weights
        self.cluster_sizes = sizes
        self.starts = np.concatenate([[0], np.cumsum(sizes)])
        self.cluster_of = np.repeat(np.arange(sizes.size), sizes)
        self.position = np.arange(k) - self.starts[self.cluster_of]
        self.ue_ids = tuple(range(k)) if ue_ids is None else tuple(ue_ids)
        self.sectors = tuple(range(1, sizes.size + 1)) if sectors is None else tuple(sectors)
        self.num_sectors = num_sectors if num_sectors is not None else eta.shape[1]
        self.aods = None if aods is None else np.asarray(aods, dtype=float)
        self._row = {u: i for i, u in enumerate(self.ue_ids)}
        for a in (self.eta, self.weights, self.cluster_sizes, self.starts, self.cluster_of, self.position):
            a.setflags(write=False)

    @classmethod
    def from_gains(cls, eta, weights=1.0, clusters=None):
        """Build from raw gains; ``clusters`` lists row indices per cluster.

        Without ``clusters`` every UE forms its own cluster.  Each cluster is
        SIC-ordered by expected gain with ties broken by row index, and the
        row index doubles as the UE id.
        """
        eta = np.asarray(eta, dtype=float)
        k = eta.shape[0]
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (k,))
        if clusters is None:
            clusters = [[i] for i in range(k)]
        gains = {i: float(eta[i].sum()) for i in range(k)}
        order = [sic_order(c, gains).ue_order for c in clusters]
        flat = [u for c in order for u in c]
        if sorted(flat) != list(range(k)):
            raise ValueError("clusters must partition the UE rows")
        return cls(eta[flat], weights[flat], [len(c) for c in order], ue_ids=flat)

    @property
    def num_ues(self) -> int:
        return self.eta.shape[0]

    @property
    def num_beams(self) -> int:
        return self.eta.shape[1]

    @property
    def num_clusters(self) -> int:
        return self.cluster_sizes.size

    def row(self, ue_id) -> int:
        try:
            return self._row[ue_id]
        except KeyError:
            raise KeyError(f"UE {ue_id!r} is not part of this scenario") from None

    def cluster_rows(self, m: int) -> slice:
        return slice(self.starts[m], self.starts[m + 1])

    def interference_mask(self, sic: bool = True) -> np.ndarray:
        """``mask[k, j]`` is True when UE ``j``'s signal interferes at UE ``k``.

        With SIC, same-cluster UEs earlier in the order remain; without it
        every other UE interferes.
        """
        same = self.cluster_of[:, None] == self.cluster_of[None, :]
        if not sic:
            return ~np.eye(self.num_ues, dtype=bool)
        earlier = self.position[None, :] < self.position[:, None]
        return ~same | (same & earlier)

    # segment sums along axis 0, one segment per cluster

    def cluster_cumsum(self, x: np.ndarray) -> np.ndarray:
        """Inclusive running sum of ``x`` over SIC positions within a cluster."""
        cs = np.cumsum(x, axis=0)
        base = np.concatenate([np.zeros((1,) + x.shape[1:]), cs])[self.starts[self.cluster_of]]
        return cs - base

    def cluster_total(self, x: np.ndarray) -> np.ndarray:
        """Cluster totals of ``x``, shape ``(M, ...)``."""
        return np.add.reduceat(x, self.starts[:-1], axis=0)

    def cluster_tail_sum(self, x: np.ndarray) -> np.ndarray:
        """Sum of ``x`` over positions ``>= n`` within each row's cluster."""
        return self.cluster_total(x)[self.cluster_of] - self.cluster_cumsum(x) + x


def cluster_scenario(profiles: Sequence[UEProfile], num_sectors: int | None = None) -> ClusteredScenario:
    """Cluster UEs by AoD sector and SIC-order each cluster by expected gain."""
    if len(profiles) == 0:
        raise ValueError("need at least one UE profile")
    n_t = profiles[0].num_beams
    if num_sectors is None:
        num_sectors = n_t
    ids = [p.id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ValueError("UE ids must be unique")
    by_id = {p.id: p for p in profiles}
    assignment = assign_clusters(profiles, num_sectors)
    gains = {p.id: p.expected_gain for p in profiles}
    order = [sic_order(c, gains).ue_order for c in assignment.clusters]
    flat = [by_id[u] for c in order for u in c]
    return ClusteredScenario(
        eta=np.stack([p.beam_gains for p in flat]),
        weights=[p.weight for p in flat],
        cluster_sizes=[len(c) for c in order],
        ue_ids=[p.id for p in flat],
        sectors=assignment.sectors,
        num_sectors=num_sectors,
        aods=[p.aod for p in flat],
    )
