"""
Compressed D-vs-Q chart data.

Records are agglomerated in input order in UCL-normalised (D, Q) space. A record that coincides
with an existing centroid joins it; any other record opens a cluster. When the count exceeds
max_clusters the two nearest centroids merge into their multiplicity-weighted mean.

Identical records share one cluster even when there are no more records than max_clusters,
so that case yields one cluster per distinct position rather than one per record.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from mbda.errors import DataError
from mbda.monitor.statistics import ControlLimits, MonitorRecord
from mbda.timestamps import format_instant


@dataclass(frozen=True, slots=True)
class ClusterPoint:
    centroid_d: float
    centroid_q: float
    multiplicity: int
    members: tuple[int, ...] | None = None


def cluster_plot(
    records: Sequence[MonitorRecord],
    limits: ControlLimits,
    max_clusters: int,
    member_cap: int = 1,
) -> list[ClusterPoint]:
    """Cluster points whose multiplicities sum to len(records)."""
    if max_clusters < 1:
        raise DataError(f"max_clusters must be >= 1, got {max_clusters}")
    cap = max_clusters + 1
    cents = np.zeros((cap, 2))
    mult = np.zeros(cap, dtype=np.int64)
    members: list[list[int] | None] = [None] * cap
    # pairwise centroid distances; unused slots and the diagonal stay at inf
    dist = np.full((cap, cap), np.inf)
    k = 0

    def set_distances(i: int) -> None:
        row = np.hypot(cents[:k, 0] - cents[i, 0], cents[:k, 1] - cents[i, 1])
        row[i] = np.inf
        dist[i, :k] = row
        dist[:k, i] = row

    for rec in records:
        p = (rec.d / limits.ucl_d, rec.q / limits.ucl_q)
        if k:
            near = np.hypot(cents[:k, 0] - p[0], cents[:k, 1] - p[1])
            j = int(np.argmin(near))
            if near[j] == 0.0:
                mult[j] += 1
                if members[j] is not None:
                    members[j] = members[j] + [rec.timestamp] if mult[j] <= member_cap else None  # type: ignore[operator]
                continue
        cents[k] = p
        mult[k] = 1
        members[k] = [rec.timestamp] if member_cap >= 1 else None
        k += 1
        set_distances(k - 1)
        if k > max_clusters:
            a, b = divmod(int(np.argmin(dist[:k, :k])), k)
            a, b = min(a, b), max(a, b)
            total = mult[a] + mult[b]
            cents[a] = (cents[a] * mult[a] + cents[b] * mult[b]) / total
            ma, mb = members[a], members[b]
            members[a] = ma + mb if ma is not None and mb is not None and total <= member_cap else None
            mult[a] = total
            last = k - 1
            if b != last:
                cents[b] = cents[last]
                mult[b] = mult[last]
                members[b] = members[last]
                dist[b, :] = dist[last, :]
                dist[:, b] = dist[:, last]
                dist[b, b] = np.inf
            dist[last, :] = np.inf
            dist[:, last] = np.inf
            members[last] = None
            k -= 1
            set_distances(a)
    return [
        ClusterPoint(
            float(cents[i, 0]),
            float(cents[i, 1]),
            int(mult[i]),
            tuple(members[i]) if members[i] is not None else None,  # type: ignore[arg-type]
        )
        for i in range(k)
    ]


def write_cluster_plot(points: Sequence[ClusterPoint], path: str | Path) -> None:
    """centroid_d,centroid_q,multiplicity,members (';'-joined ISO instants, empty when dropped)."""
    df = pd.DataFrame(
        {
            "centroid_d": [p.centroid_d for p in points],
            "centroid_q": [p.centroid_q for p in points],
            "multiplicity": [p.multiplicity for p in points],
            "members": [";".join(format_instant(t) for t in p.members) if p.members else "" for p in points],
        }
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")
