"""Harris graphical constructions on finite boxes of Z^d.

An :class:`EventLog` holds every death mark and arrow of one realization
as flat, time-sorted numpy arrays.  Arrows are generated from the Poisson
clock of their *tip* site: the tip is drawn first and the source is one
of its neighbors.  :func:`classify_arrows` relies on this when it labels
each 2-arrow blocked or unblocked from the history of its tip alone.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numba
import numpy as np

from ._random import STREAM_LOG, check_seed, replica_rng
from .errors import ParameterDomainError, ResourceCapError, UnknownEdgeError
from .thresholds import GenericMcpRates

__all__ = [
    "Box",
    "EventKind",
    "Event",
    "EventLog",
    "ArrowClassification",
    "DEFAULT_MAX_EVENTS",
    "generate",
    "classify_arrows",
    "classify_arrows_bruteforce",
    "unblocked_counts",
    "background_statistics",
]

DEFAULT_MAX_EVENTS = 10**8
TEXT_FORMAT_VERSION = 1
BINARY_FORMAT_VERSION = 1


class EventKind(enum.IntEnum):
    DEATH_ALL = 0  # x mark
    DEATH1 = 1  # bullet mark, kills type 1 only
    ARROW1 = 2
    ARROW2 = 3


_KIND_NAMES = {
    EventKind.DEATH_ALL: "DeathAll",
    EventKind.DEATH1: "Death1",
    EventKind.ARROW1: "Arrow1",
    EventKind.ARROW2: "Arrow2",
}
_KIND_BY_NAME = {v: k for k, v in _KIND_NAMES.items()}


@dataclass(frozen=True)
class Box:
    """Cube of side ``side`` in ``dim`` dimensions, sites numbered row-major."""

    dim: int
    side: int
    boundary: str = "periodic"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ParameterDomainError(f"dim must be a positive integer, got {self.dim!r}")
        if int(self.side) != self.side or self.side < 1:
            raise ParameterDomainError(f"side must be a positive integer, got {self.side!r}")
        if self.boundary not in ("periodic", "free"):
            raise ParameterDomainError(f"boundary must be 'periodic' or 'free', got {self.boundary!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "side", int(self.side))

    @property
    def n_sites(self) -> int:
        return self.side**self.dim

    @property
    def n_directions(self) -> int:
        return 2 * self.dim

    @property
    def origin(self) -> int:
        """Index of the central site."""
        return self.index((self.side // 2,) * self.dim)

    def index(self, coord) -> int:
        coord = tuple(int(c) for c in coord)
        if len(coord) != self.dim or any(not 0 <= c < self.side for c in coord):
            raise IndexError(f"coordinate {coord} outside box of side {self.side}")
        idx = 0
        for c in coord:
            idx = idx * self.side + c
        return idx

    def coord(self, index: int) -> tuple:
        out = []
        for _ in range(self.dim):
            index, r = divmod(int(index), self.side)
            out.append(r)
        return tuple(reversed(out))

    @cached_property
    def neighbors(self) -> np.ndarray:
        """``(n_sites, 2*dim)`` table; direction ``2a`` is +1 along axis ``a``, ``2a+1`` is -1.

        Missing neighbors under the free boundary are -1.
        """
        coords = np.indices((self.side,) * self.dim).reshape(self.dim, -1).T
        strides = self.side ** np.arange(self.dim - 1, -1, -1)
        table = np.empty((self.n_sites, 2 * self.dim), dtype=np.int32)
        for axis in range(self.dim):
            for j, step in enumerate((1, -1)):
                moved = coords.copy()
                moved[:, axis] += step
                if self.boundary == "periodic":
                    moved[:, axis] %= self.side
                    table[:, 2 * axis + j] = moved @ strides
                else:
                    ok = (moved[:, axis] >= 0) & (moved[:, axis] < self.side)
                    table[:, 2 * axis + j] = np.where(ok, moved @ strides, -1)
        return table

    def has_edge(self, source: int, tip: int) -> bool:
        if not (0 <= tip < self.n_sites and 0 <= source < self.n_sites):
            return False
        return bool(np.any(self.neighbors[tip] == source))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "side": self.side, "boundary": self.boundary}


class Event(NamedTuple):
    time: float
    kind: EventKind
    tip: int
    source: int | None = None


@dataclass(eq=False)
class EventLog:
    """Time-sorted graphical structure; treat as immutable once built."""

    box: Box
    horizon: float
    rates: GenericMcpRates
    times: np.ndarray
    kinds: np.ndarray
    tips: np.ndarray
    sources: np.ndarray
    seed: int | None = None
    replica: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=np.float64)
        self.kinds = np.ascontiguousarray(self.kinds, dtype=np.int8)
        self.tips = np.ascontiguousarray(self.tips, dtype=np.int32)
        self.sources = np.ascontiguousarray(self.sources, dtype=np.int32)
        n = len(self.times)
        if not (len(self.kinds) == len(self.tips) == len(self.sources) == n):
            raise ValueError("event arrays must have equal length")
        if n > 1 and np.any(self.times[1:] < self.times[:-1]):
            raise ValueError("event times must be nondecreasing")
        for a in (self.times, self.kinds, self.tips, self.sources):
            a.flags.writeable = False

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def from_events(cls, box: Box, events, *, horizon: float, rates: GenericMcpRates | None = None, seed=None):
        """Build a log from explicit :class:`Event` tuples (sorted stably by time).

        Arrow events must reference an existing directed edge of ``box``.
        """
        events = [Event(float(e[0]), EventKind(e[1]), int(e[2]), *(e[3:4] or [None])) for e in events]
        events.sort(key=lambda e: e.time)
        for e in events:
            if not 0 <= e.tip < box.n_sites:
                raise ValueError(f"tip {e.tip} outside box")
            is_arrow = e.kind in (EventKind.ARROW1, EventKind.ARROW2)
            if is_arrow and (e.source is None or not box.has_edge(e.source, e.tip)):
                raise UnknownEdgeError((e.source, e.tip))
            if not is_arrow and e.source is not None:
                raise ValueError("death events carry no source")
        rates = rates or GenericMcpRates(0.0, 0.0, 0.0, 0.0, box.dim)
        return cls(
            box=box,
            horizon=float(horizon),
            rates=rates,
            times=np.array([e.time for e in events], dtype=np.float64),
            kinds=np.array([int(e.kind) for e in events], dtype=np.int8),
            tips=np.array([e.tip for e in events], dtype=np.int32),
            sources=np.array([-1 if e.source is None else e.source for e in events], dtype=np.int32),
            seed=seed,
        )

    @property
    def events(self) -> list[Event]:
        return [
            Event(float(t), EventKind(int(k)), int(x), None if s < 0 else int(s))
            for t, k, x, s in zip(self.times, self.kinds, self.tips, self.sources)
        ]

    def counts_by_kind(self) -> dict[EventKind, int]:
        c = np.bincount(self.kinds, minlength=4)
        return {k: int(c[k]) for k in EventKind}

    def fingerprint(self) -> bytes:
        return b"".join(a.tobytes() for a in (self.times, self.kinds, self.tips, self.sources))

    def select(self, mask: np.ndarray) -> "EventLog":
        """Sub-log keeping the events where ``mask`` is true."""
        mask = np.asarray(mask, dtype=bool)
        return EventLog(
            self.box, self.horizon, self.rates,
            self.times[mask], self.kinds[mask], self.tips[mask], self.sources[mask],
            seed=self.seed, replica=self.replica, meta=dict(self.meta, subset=True),
        )

    # serialization

    def to_text(self) -> str:
        r = self.rates
        buf = io.StringIO()
        buf.write(f"# mcplab eventlog v{TEXT_FORMAT_VERSION}\n")
        buf.write(f"# box dim={self.box.dim} side={self.box.side} boundary={self.box.boundary}\n")
        buf.write(f"# rates b1={r.b1!r} d1={r.d1!r} b2={r.b2!r} d2={r.d2!r}\n")
        buf.write(f"# horizon={self.horizon!r}\n")
        buf.write(f"# seed={self.seed} replica={self.replica}\n")
        for t, k, x, s in zip(self.times.tolist(), self.kinds.tolist(), self.tips.tolist(), self.sources.tolist()):
            name = _KIND_NAMES[k]
            buf.write(f"{t!r} {name} {x}\n" if s < 0 else f"{t!r} {name} {x} {s}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "EventLog":
        header: dict[str, str] = {}
        rows = []
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        header[key] = val
                    elif tok.startswith("v") and tok[1:].isdigit() and int(tok[1:]) != TEXT_FORMAT_VERSION:
                        raise ValueError(f"unsupported eventlog version {tok}")
                continue
            parts = line.split()
            rows.append((float(parts[0]), _KIND_BY_NAME[parts[1]], int(parts[2]), int(parts[3]) if len(parts) > 3 else -1))
        box = Box(int(header["dim"]), int(header["side"]), header["boundary"])
        rates = GenericMcpRates(float(header["b1"]), float(header["d1"]), float(header["b2"]), float(header["d2"]), box.dim)
        seed = None if header.get("seed", "None") == "None" else int(header["seed"])
        arr = list(zip(*rows)) if rows else [[], [], [], []]
        return cls(
            box=box, horizon=float(header["horizon"]), rates=rates,
            times=np.array(arr[0], dtype=np.float64), kinds=np.array(arr[1], dtype=np.int8),
            tips=np.array(arr[2], dtype=np.int32), sources=np.array(arr[3], dtype=np.int32),
            seed=seed, replica=int(header.get("replica", 0)),
        )

    def save_npz(self, path) -> None:
        r = self.rates
        np.savez(
            path,
            version=np.int64(BINARY_FORMAT_VERSION),
            box=np.array([self.box.dim, self.box.side, self.box.boundary == "periodic"], dtype=np.int64),
            rates=np.array([r.b1, r.d1, r.b2, r.d2]),
            horizon=np.float64(self.horizon),
            seed=np.array(str(self.seed)),
            replica=np.int64(self.replica),
            times=self.times, kinds=self.kinds, tips=self.tips, sources=self.sources,
        )

    @classmethod
    def load_npz(cls, path) -> "EventLog":
        with np.load(path) as z:
            if int(z["version"]) != BINARY_FORMAT_VERSION:
                raise ValueError(f"unsupported eventlog binary version {int(z['version'])}")
            dim, side, periodic = (int(v) for v in z["box"])
            box = Box(dim, side, "periodic" if periodic else "free")
            b1, d1, b2, d2 = (float(v) for v in z["rates"])
            seed = str(z["seed"])
            replica = int(z["replica"])
            return cls(
                box=box, horizon=float(z["horizon"]), rates=GenericMcpRates(b1, d1, b2, d2, dim),
                times=z["times"], kinds=z["kinds"], tips=z["tips"], sources=z["sources"],
                seed=None if seed == "None" else int(seed), replica=replica,
            )


def _stream_rates(box: Box, rates: GenericMcpRates) -> np.ndarray:
    """Per-site rates of the four symbol kinds, arrows summed over incoming directions."""
    k = box.n_directions
    return np.array([rates.d2, rates.d1, k * rates.b1, k * rates.b2], dtype=np.float64)


@numba.njit(cache=True, nogil=True)
def _mark_kernel(u, cdf, neighbors):
    # One uniform per event: its bucket in ``cdf`` picks the kind, and the
    # position inside the bucket (again uniform) picks tip then direction.
    n = len(u)
    n_sites, n_dir = neighbors.shape
    kinds = np.empty(n, dtype=np.int8)
    tips = np.empty(n, dtype=np.int32)
    sources = np.empty(n, dtype=np.int32)
    for i in range(n):
        k = 0
        while k < 3 and u[i] >= cdf[k]:
            k += 1
        lo = cdf[k - 1] if k > 0 else 0.0
        v = (u[i] - lo) / (cdf[k] - lo) * n_sites
        x = min(int(v), n_sites - 1)
        kinds[i] = k
        tips[i] = x
        if k >= 2:
            d = min(int((v - x) * n_dir), n_dir - 1)
            sources[i] = neighbors[x, d]
        else:
            sources[i] = -1
    return kinds, tips, sources


def generate(
    box: Box,
    rates: GenericMcpRates,
    horizon: float,
    seed: int,
    *,
    replica: int = 0,
    stream: int = STREAM_LOG,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> EventLog:
    """Sample a graphical structure on ``box`` over ``[0, horizon]``.

    All Poisson streams are homogeneous, so their superposition is sampled
    once: a Poisson total, order statistics from normalized exponential
    spacings, then an independent (kind, tip, direction) mark per point.
    Under the free boundary, arrows whose source falls outside the box are
    discarded, which leaves every existing edge at its nominal rate.

    The generator is keyed by ``(seed, replica, stream)``.
    """
    horizon = float(horizon)
    if not horizon > 0.0 or not math.isfinite(horizon):
        raise ParameterDomainError(f"horizon must be finite and > 0, got {horizon!r}")
    if rates.dim != box.dim:
        raise ParameterDomainError(f"rates are for d={rates.dim} but box has d={box.dim}")
    seed = check_seed(seed)
    per_site = _stream_rates(box, rates)
    total_rate = float(per_site.sum()) * box.n_sites
    expected = total_rate * horizon
    if expected > max_events:
        raise ResourceCapError(f"expected {expected:.4g} events exceeds cap {max_events}")

    rng = replica_rng(seed, replica, stream)
    n = int(rng.poisson(expected)) if expected > 0 else 0
    if n > max_events:
        raise ResourceCapError(f"sampled {n} events exceeds cap {max_events}")
    if n == 0:
        empty = np.empty(0)
        return EventLog(box, horizon, rates, empty, empty, empty, empty, seed=seed, replica=replica)

    cum = np.cumsum(rng.standard_exponential(n + 1))
    times = cum[:n] * (horizon / cum[n])
    cdf = np.cumsum(per_site) / per_site.sum()
    cdf[-1] = 1.0
    kinds, tips, sources = _mark_kernel(rng.random(n), cdf, box.neighbors)
    log = EventLog(box, horizon, rates, times, kinds, tips, sources, seed=seed, replica=replica)
    if box.boundary == "free":
        dropped = (kinds >= EventKind.ARROW1) & (sources < 0)
        if dropped.any():
            log = log.select(~dropped)
            log.meta.pop("subset", None)
    return log


@dataclass(frozen=True)
class ArrowClassification:
    """Blocked/unblocked labels of every 2-arrow plus each site's background path.

    ``arrow2_index`` holds event indices of the 2-arrows in the log,
    ``blocked`` the matching labels.  Background flips are stored as
    parallel arrays ``flip_site``, ``flip_time``, ``flip_state`` (1 =
    blocked) in time order; every site starts unblocked.
    """

    arrow2_index: np.ndarray
    blocked: np.ndarray
    flip_site: np.ndarray
    flip_time: np.ndarray
    flip_state: np.ndarray

    def background_path(self, site: int) -> list[tuple[float, int]]:
        sel = self.flip_site == site
        return list(zip(self.flip_time[sel].tolist(), self.flip_state[sel].tolist()))

    def blocked_at(self, site: int, t: float) -> bool:
        """Background state of ``site`` just after time ``t``."""
        sel = (self.flip_site == site) & (self.flip_time <= t)
        states = self.flip_state[sel]
        return bool(states[-1]) if len(states) else False


@numba.njit(cache=True, nogil=True)
def _classify_kernel(times, kinds, tips, n_sites):
    n = len(times)
    blocked = np.zeros(n_sites, dtype=np.uint8)
    label = np.full(n, -1, dtype=np.int8)
    flip_site = np.empty(n, dtype=np.int32)
    flip_time = np.empty(n, dtype=np.float64)
    flip_state = np.empty(n, dtype=np.int8)
    m = 0
    for i in range(n):
        k = kinds[i]
        x = tips[i]
        if k == 2:
            if blocked[x] == 0:
                blocked[x] = 1
                flip_site[m] = x
                flip_time[m] = times[i]
                flip_state[m] = 1
                m += 1
        elif k == 1:
            if blocked[x] == 1:
                blocked[x] = 0
                flip_site[m] = x
                flip_time[m] = times[i]
                flip_state[m] = 0
                m += 1
        elif k == 3:
            label[i] = blocked[x]
    return label, flip_site[:m], flip_time[:m], flip_state[:m]


def classify_arrows(log: EventLog) -> ArrowClassification:
    """Label each 2-arrow by its tip's background bit in one chronological sweep.

    A tip becomes blocked at every incoming 1-arrow and unblocked at every
    type-1 death mark on its own timeline.
    """
    label, fs, ft, fst = _classify_kernel(log.times, log.kinds, log.tips, log.box.n_sites)
    idx = np.flatnonzero(label >= 0)
    return ArrowClassification(idx, label[idx].astype(bool), fs, ft, fst)


def classify_arrows_bruteforce(log: EventLog) -> np.ndarray:
    """Reference labels: for each 2-arrow rescan the tip's earlier events."""
    out = []
    for i in np.flatnonzero(log.kinds == EventKind.ARROW2):
        x = log.tips[i]
        state = False
        for j in range(i - 1, -1, -1):
            if log.tips[j] != x:
                continue
            if log.kinds[j] == EventKind.ARROW1:
                state = True
                break
            if log.kinds[j] == EventKind.DEATH1:
                break
        out.append(state)
    return np.array(out, dtype=bool)


def unblocked_counts(log: EventLog, cls: ArrowClassification, edge, time_grid) -> np.ndarray:
    """Cumulative number of unblocked 2-arrows ``source -> tip`` at each grid time."""
    source, tip = (int(v) for v in edge)
    if not log.box.has_edge(source, tip):
        raise UnknownEdgeError(edge)
    idx = cls.arrow2_index[~cls.blocked]
    on_edge = idx[(log.tips[idx] == tip) & (log.sources[idx] == source)]
    return np.searchsorted(log.times[on_edge], np.asarray(time_grid, dtype=float), side="right")


def background_statistics(log: EventLog, cls: ArrowClassification) -> dict:
    """Aggregate exposure times and flip counts of the per-site background chains.

    Returns per-site unblocked fractions plus totals over all sites:
    time spent unblocked/blocked and number of flips out of each state.
    """
    n_sites = log.box.n_sites
    horizon = log.horizon
    time_blocked = np.zeros(n_sites)
    order = np.argsort(cls.flip_site, kind="stable")
    sites, ftimes, fstates = cls.flip_site[order], cls.flip_time[order], cls.flip_state[order]
    bounds = np.searchsorted(sites, np.arange(n_sites + 1))
    for x in range(n_sites):
        t = ftimes[bounds[x]:bounds[x + 1]]
        s = fstates[bounds[x]:bounds[x + 1]]
        if len(t) == 0:
            continue
        # flips strictly alternate, starting with 0 -> 1
        ends = np.append(t[1:], horizon)
        time_blocked[x] = float(np.sum((ends - t)[s == 1]))
    unblocked_fraction = 1.0 - time_blocked / horizon
    return {
        "unblocked_fraction": unblocked_fraction,
        "time_unblocked": float(n_sites * horizon - time_blocked.sum()),
        "time_blocked": float(time_blocked.sum()),
        "to_blocked": int(np.sum(cls.flip_state == 1)),
        "to_unblocked": int(np.sum(cls.flip_state == 0)),
    }
