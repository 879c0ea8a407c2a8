"""Cluster detection, collision census and explosion reports."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..geometry import as_configuration
from ..regime import ModelParams, critical_size
from . import _linkage

DEFAULT_EPS_COLL = 1e-4
DEFAULT_EPS_SEP = 1e-1
DEFAULT_EPS_LINK = 1e-2
DEFAULT_EPS_EXPL = 1e-4


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> bool:
        a, b = self.find(i), self.find(j)
        if a == b:
            return False
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return True

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return sorted(out.values(), key=lambda g: g[0])


def detect_clusters(config, eps_link: float = DEFAULT_EPS_LINK) -> list[list[int]]:
    """Connected components of the graph joining particles at distance ``<= eps_link``."""
    x = as_configuration(config)
    if eps_link <= 0:
        raise DomainError("eps_link must be positive")
    diff = x[:, None, :] - x[None, :, :]
    close = np.einsum("ijk,ijk->ij", diff, diff) <= eps_link * eps_link
    uf = UnionFind(len(x))
    for i, j in zip(*np.nonzero(np.triu(close, k=1))):
        uf.union(int(i), int(j))
    return uf.groups()


@dataclass(frozen=True)
class CollisionEvent:
    t_start: float
    t_end: float
    indices: tuple
    size: int
    min_dispersion: float
    isolated: bool
    separation: float = float("inf")

    def as_dict(self) -> dict:
        return {
            "t_start": self.t_start,
            "t_end": self.t_end,
            "indices": list(self.indices),
            "size": self.size,
            "min_dispersion": self.min_dispersion,
            "isolated": self.isolated,
            "separation": self.separation,
        }


def _frames_of(traj):
    frames = np.ascontiguousarray(traj.frames, dtype=float)
    times = np.asarray(traj.times, dtype=float)
    if frames.ndim != 3 or frames.shape[2] != 2 or len(frames) != len(times):
        raise DomainError("trajectory frames must have shape (T, N, 2) matching times")
    return frames, times


def collision_census(traj, eps_coll: float = DEFAULT_EPS_COLL, eps_sep: float = DEFAULT_EPS_SEP,
                     debounce: int = 0, until: float | None = None, chunk: int = 4096) -> list[CollisionEvent]:
    """One event per maximal run of frames in which a cluster ``K`` has ``R_K <= eps_coll``.

    Clusters are the maximal single-linkage clusters whose dispersion is below
    ``eps_coll``. Runs of the same ``K`` separated by at most ``debounce``
    missing frames are merged. An event is isolated when every outside
    particle ``j`` keeps ``R_{K+j} >= eps_sep`` over the whole window;
    ``separation`` records the smallest such ``R_{K+j}`` seen.

    Frames after ``until`` are ignored. By default a flagged trajectory is
    scanned up to its flag time, since the saturated tail belongs to the
    explosion rather than to the collision history.
    """
    if not 0 < eps_coll < eps_sep:
        raise DomainError("need 0 < eps_coll < eps_sep")
    if debounce < 0:
        raise DomainError("debounce must be nonnegative")
    frames, times = _frames_of(traj)
    if until is None:
        until = getattr(traj, "flag_time", None)
    if until is not None:
        stop = int(np.searchsorted(times, until, side="right"))
        frames, times = frames[:stop], times[:stop]
    n = frames.shape[1]
    if len(frames) == 0:
        return []
    cand = np.nonzero(_linkage.min_pair_sq(frames) <= 2.0 * eps_coll)[0]
    if cand.size == 0:
        return []
    f_idx, keys, disp, iso = [], [], [], []
    for lo in range(0, cand.size, chunk):
        sel = cand[lo:lo + chunk]
        cap = len(sel) * (n // 2)
        out_frame = np.empty(cap, dtype=np.int64)
        out_members = np.empty((cap, n), dtype=np.bool_)
        out_disp = np.empty(cap)
        out_iso = np.empty(cap)
        rows = _linkage.maximal_clusters(np.ascontiguousarray(frames[sel]), eps_coll,
                                         out_frame, out_members, out_disp, out_iso)
        f_idx.append(sel[out_frame[:rows]])
        keys.append(out_members[:rows])
        disp.append(out_disp[:rows])
        iso.append(out_iso[:rows])
    f_idx = np.concatenate(f_idx)
    members = np.concatenate(keys)
    disp = np.concatenate(disp)
    iso = np.concatenate(iso)
    if f_idx.size == 0:
        return []
    packed = np.packbits(members, axis=1)
    _, group = np.unique(packed, axis=0, return_inverse=True)
    group = group.ravel()
    order = np.lexsort((f_idx, group))
    g, f = group[order], f_idx[order]
    breaks = np.nonzero((np.diff(g) != 0) | (np.diff(f) > 1 + debounce))[0] + 1
    events = []
    for seg in np.split(np.arange(order.size), breaks):
        rows = order[seg]
        idx = tuple(int(i) for i in np.nonzero(members[rows[0]])[0])
        events.append(CollisionEvent(
            t_start=float(times[f_idx[rows[0]]]),
            t_end=float(times[f_idx[rows[-1]]]),
            indices=idx,
            size=len(idx),
            min_dispersion=float(np.min(disp[rows])),
            isolated=bool(np.all(iso[rows] >= eps_sep)),
            separation=float(np.min(iso[rows])),
        ))
    events.sort(key=lambda e: (e.t_start, e.indices))
    return events


def census_summary(events) -> dict:
    """Event counts per cluster size, split by isolation, plus spacing statistics."""
    events = list(events)
    all_counts = Counter(e.size for e in events)
    iso_counts = Counter(e.size for e in events if e.isolated)
    starts = np.array(sorted(e.t_start for e in events))
    gaps = np.diff(starts) if starts.size > 1 else np.empty(0)
    return {
        "n_events": len(events),
        "n_isolated": sum(iso_counts.values()),
        "by_size": {str(k): all_counts[k] for k in sorted(all_counts)},
        "isolated_by_size": {str(k): iso_counts[k] for k in sorted(iso_counts)},
        "mean_spacing": float(gaps.mean()) if gaps.size else None,
    }


@dataclass(frozen=True)
class ExplosionReport:
    t_explosion: float
    cluster: tuple
    size: int
    terminal_frame: np.ndarray

    def as_dict(self) -> dict:
        return {
            "t_explosion": self.t_explosion,
            "cluster": list(self.cluster),
            "size": self.size,
            "terminal_frame": self.terminal_frame.tolist(),
        }


@dataclass(frozen=True)
class Inconclusive:
    """A flagged trajectory whose final window shows no qualifying isolated cluster."""

    reason: str
    window_start: float

    def as_dict(self) -> dict:
        return {"inconclusive": True, "reason": self.reason, "window_start": self.window_start}


def _tree(frame):
    n = frame.shape[0]
    members = np.empty((n - 1, n), dtype=np.bool_)
    sizes = np.empty(n - 1, dtype=np.int64)
    disp = np.empty(n - 1)
    iso = np.empty(n - 1)
    parent = np.empty(n - 1, dtype=np.int64)
    _linkage.dendrogram(np.ascontiguousarray(frame), members, sizes, disp, iso, parent)
    return members, sizes, disp, iso


def detect_explosion(traj, model: ModelParams, eps_expl: float = DEFAULT_EPS_EXPL,
                     eps_sep: float = DEFAULT_EPS_SEP):
    """Look for an isolated collapsed cluster of at least ``k0`` particles.

    The final window is the terminal run of frames in which some single-linkage
    cluster of size ``>= k0`` has dispersion ``<= eps_sep``. Within it, a
    cluster qualifies when ``R_K <= eps_expl`` and every outside particle has
    ``R_{K+j} >= eps_sep``; the smallest qualifying cluster (earliest on ties)
    is reported. Returns ``None`` when nothing qualifies on an unflagged
    trajectory and :class:`Inconclusive` when nothing qualifies on a flagged one.
    """
    if not 0 < eps_expl < eps_sep:
        raise DomainError("need 0 < eps_expl < eps_sep")
    frames, times = _frames_of(traj)
    if frames.shape[1] != model.n:
        raise DomainError("trajectory and model disagree on N")
    k0 = critical_size(model)
    flagged = bool(getattr(traj, "flagged", False))
    if k0 > model.n:
        if flagged:
            return Inconclusive("no cluster of size k0 is possible (k0 > N)", float(times[-1]))
        return None

    window = []
    for f in range(len(frames) - 1, -1, -1):
        tree = _tree(frames[f])
        big = tree[1] >= k0
        if not np.any(tree[2][big] <= eps_sep):
            break
        window.append((f, tree))
    best = None
    for f, (members, sizes, disp, iso) in reversed(window):
        ok = np.nonzero((sizes >= k0) & (disp <= eps_expl) & (iso >= eps_sep))[0]
        if ok.size == 0:
            continue
        m = ok[np.argmin(sizes[ok])]
        if best is None or sizes[m] < best[1]:
            best = (f, int(sizes[m]), tuple(int(i) for i in np.nonzero(members[m])[0]))
    if best is not None:
        f, size, cluster = best
        return ExplosionReport(float(times[f]), cluster, size, frames[-1].copy())
    if flagged:
        start = float(times[window[-1][0]]) if window else float(times[-1])
        reason = "no isolated cluster of size >= k0 below eps_expl" if window else "no collapsed large cluster at the end"
        return Inconclusive(reason, start)
    return None
