"""Contact process, MCP and CPREE dynamics read off an :class:`EventLog`.

Site states are 0 (empty), 1 (type 1, or infected in the standard
contact process) and 2 (type 2).  Each process kind is a rule for how
the four symbol kinds act on a site:

============  ==========================  ==================================
symbol        MCP / CPREE                 CP, MCP_PERTURBED
============  ==========================  ==================================
DeathAll x    kills type 2                kills both types
Death1 •      kills type 1                CP: kills type 1; perturbed: kills
                                          type 1 only when sigma > 0
Arrow1 y->x   0 -> 1 if y is 1 (CPREE:    0 -> 1 if y is 1
              0 -> 1 unconditionally)
Arrow2 y->x   0 -> 2 if y is 2            perturbed as MCP; CP ignores it
============  ==========================  ==================================

Coupled runs evolve two processes on the same log, ordered so that the
``lower`` one carries more type 1 and less type 2, and check the ordering
at the tip site after every event (no other site can change).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ._random import STREAM_CP_LOG, STREAM_INIT, STREAM_THIN, check_seed, replica_rng, run_indexed
from .errors import ParameterDomainError, PreconditionError
from .graphical import DEFAULT_MAX_EVENTS, Box, EventKind, EventLog, generate
from .thresholds import GenericMcpRates, McpParams

__all__ = [
    "Configuration",
    "ProcessKind",
    "Trajectory",
    "Violation",
    "CoupledRunReport",
    "SurvivalEstimate",
    "RELATIONS",
    "evolve",
    "couple_cpree_mcp",
    "couple_mcp_attractive",
    "couple_prop1",
    "monotone_masks",
    "run_coupled_replicas",
    "estimate_survival",
    "estimate_survival_paired",
    "proportion_ci",
]

EMPTY, TYPE1, TYPE2 = 0, 1, 2

# relation ids checked by the coupled kernel; lower/upper as documented above
RELATIONS = (
    "type1_superset",  # {lower=1} contains {upper=1}
    "not2_superset",  # {lower in 0,1} contains {upper in 0,1}
    "not1_subset",  # {lower in 0,2} inside {upper in 0,2}
    "type2_subset",  # {lower=2} inside {upper=2}
    "pop2_order",  # |lower=2| <= |upper=2| at checkpoints
)
_REL_ALL = 0b11111
_REL_PAIR = 0b11001


@dataclass
class Configuration:
    """Dense lattice state, one int8 per site."""

    box: Box
    state: np.ndarray

    def __post_init__(self):
        self.state = np.ascontiguousarray(self.state, dtype=np.int8).reshape(-1)
        if self.state.shape[0] != self.box.n_sites:
            raise ParameterDomainError(
                f"configuration has {self.state.shape[0]} sites, box has {self.box.n_sites}"
            )
        if np.any((self.state < 0) | (self.state > 2)):
            raise ParameterDomainError("site states must be 0, 1 or 2")

    @classmethod
    def constant(cls, box: Box, value: int) -> "Configuration":
        return cls(box, np.full(box.n_sites, value, dtype=np.int8))

    @classmethod
    def single_seed(cls, box: Box, value: int = TYPE2, background: int = TYPE1, site=None) -> "Configuration":
        state = np.full(box.n_sites, background, dtype=np.int8)
        state[box.origin if site is None else site] = value
        return cls(box, state)

    @classmethod
    def product_measure(cls, box: Box, p1: float, p2: float, rng: np.random.Generator) -> "Configuration":
        if p1 < 0 or p2 < 0 or p1 + p2 > 1:
            raise ParameterDomainError(f"need p1, p2 >= 0 and p1 + p2 <= 1, got {p1}, {p2}")
        u = rng.random(box.n_sites)
        state = np.where(u < p1, TYPE1, np.where(u < p1 + p2, TYPE2, EMPTY)).astype(np.int8)
        return cls(box, state)

    def count(self, value: int) -> int:
        return int(np.count_nonzero(self.state == value))

    def copy(self) -> "Configuration":
        return Configuration(self.box, self.state.copy())


@dataclass(frozen=True)
class ProcessKind:
    """Which dynamics to read off a log: ``cp``, ``mcp``, ``cpree`` or ``mcp_perturbed``."""

    name: str
    lam: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.name not in ("cp", "mcp", "cpree", "mcp_perturbed"):
            raise ParameterDomainError(f"unknown process kind {self.name!r}")
        if self.name == "cp" and (self.lam is None or not self.lam >= 0):
            raise ParameterDomainError("CP requires lambda >= 0")
        if self.name == "mcp_perturbed" and (self.sigma is None or not self.sigma >= 0):
            raise ParameterDomainError("MCP_PERTURBED requires sigma >= 0")

    @classmethod
    def CP(cls, lam: float) -> "ProcessKind":
        return cls("cp", lam=float(lam))

    @classmethod
    def MCP(cls) -> "ProcessKind":
        return cls("mcp")

    @classmethod
    def CPREE(cls) -> "ProcessKind":
        return cls("cpree")

    @classmethod
    def MCP_PERTURBED(cls, sigma: float) -> "ProcessKind":
        return cls("mcp_perturbed", sigma=float(sigma))

    @property
    def tracked_type(self) -> int:
        return TYPE1 if self.name == "cp" else TYPE2

    def semantics(self) -> np.ndarray:
        # (arrow1 spontaneous, DeathAll kills type 1, Death1 active, Arrow2 active)
        if self.name == "mcp":
            return np.array([0, 0, 1, 1], dtype=np.int8)
        if self.name == "cpree":
            return np.array([1, 0, 1, 1], dtype=np.int8)
        if self.name == "cp":
            return np.array([0, 1, 1, 0], dtype=np.int8)
        return np.array([0, 1, 1 if self.sigma > 0 else 0, 1], dtype=np.int8)

    def check_log(self, log: EventLog) -> None:
        r = log.rates
        if self.name == "cp":
            if r.b2 != 0 or r.d1 != 0 or not math.isclose(r.b1, self.lam) or r.d2 != 1:
                raise ParameterDomainError(
                    "CP runs need a log built from GenericMcpRates.contact_process(lambda)"
                )
        elif self.name == "mcp_perturbed" and self.sigma > 0 and not math.isclose(r.d1, self.sigma):
            raise ParameterDomainError(f"log bullet rate {r.d1} differs from sigma={self.sigma}")

    def to_dict(self) -> dict:
        out = {"name": self.name}
        if self.lam is not None:
            out["lambda"] = self.lam
        if self.sigma is not None:
            out["sigma"] = self.sigma
        return out


@numba.njit(cache=True, nogil=True, inline="always")
def _apply(state, k, x, y, spont1, kill1_all, death1, arrow2):
    s = state[x]
    if k == 0:
        if s == 2 or (s == 1 and kill1_all):
            state[x] = 0
    elif k == 1:
        if s == 1 and death1:
            state[x] = 0
    elif k == 2:
        if s == 0 and (spont1 or state[y] == 1):
            state[x] = 1
    else:
        if s == 0 and arrow2 and state[y] == 2:
            state[x] = 2


@numba.njit(cache=True, nogil=True)
def _evolve_kernel(kinds, tips, sources, mask, sem, state, snap_idx):
    # flags unpacked once; array lookups per event cost ~3x
    spont1, kill1_all, death1, arrow2 = sem[0] == 1, sem[1] == 1, sem[2] == 1, sem[3] == 1
    n = len(kinds)
    n_snap = len(snap_idx)
    snaps = np.empty((n_snap, len(state)), dtype=np.int8)
    j = 0
    nxt = snap_idx[0] if n_snap > 0 else n + 1
    for i in range(n):
        while i == nxt:
            snaps[j] = state
            j += 1
            nxt = snap_idx[j] if j < n_snap else n + 1
        if mask[i]:
            _apply(state, kinds[i], tips[i], sources[i], spont1, kill1_all, death1, arrow2)
    while j < n_snap:
        snaps[j] = state
        j += 1
    return snaps


@numba.njit(cache=True, nogil=True, inline="always")
def _violated(lo, hi, x, rel):
    a = lo[x]
    b = hi[x]
    out = 0
    if rel & 1 and b == 1 and a != 1:
        out |= 1
    if rel & 2 and b != 2 and a == 2:
        out |= 2
    if rel & 4 and a != 1 and b == 1:
        out |= 4
    if rel & 8 and a == 2 and b != 2:
        out |= 8
    return out


@numba.njit(cache=True, nogil=True)
def _coupled_kernel(times, kinds, tips, sources, mask_lo, mask_hi, sem_lo, sem_hi, lo, hi,
                    snap_idx, rel, fault_index, max_records):
    a_spont, a_kill, a_d1, a_a2 = sem_lo[0] == 1, sem_lo[1] == 1, sem_lo[2] == 1, sem_lo[3] == 1
    b_spont, b_kill, b_d1, b_a2 = sem_hi[0] == 1, sem_hi[1] == 1, sem_hi[2] == 1, sem_hi[3] == 1
    n = len(kinds)
    n_snap = len(snap_idx)
    n_sites = len(lo)
    snaps_lo = np.empty((n_snap, n_sites), dtype=np.int8)
    snaps_hi = np.empty((n_snap, n_sites), dtype=np.int8)
    rec_time = np.empty(max_records, dtype=np.float64)
    rec_site = np.empty(max_records, dtype=np.int64)
    rec_rel = np.empty(max_records, dtype=np.int64)
    n_viol = 0
    n_rec = 0
    j = 0
    for i in range(n + 1):
        while j < n_snap and snap_idx[j] == i:
            snaps_lo[j] = lo
            snaps_hi[j] = hi
            if rel & 16:
                p_lo = 0
                p_hi = 0
                for s in range(n_sites):
                    if lo[s] == 2:
                        p_lo += 1
                    if hi[s] == 2:
                        p_hi += 1
                if p_lo > p_hi:
                    n_viol += 1
                    if n_rec < max_records:
                        rec_time[n_rec] = times[i - 1] if i > 0 else 0.0
                        rec_site[n_rec] = -1
                        rec_rel[n_rec] = 4
                        n_rec += 1
            j += 1
        if i == n:
            break
        k = kinds[i]
        x = tips[i]
        y = sources[i]
        if mask_lo[i]:
            _apply(lo, k, x, y, a_spont, a_kill, a_d1, a_a2)
        if mask_hi[i]:
            _apply(hi, k, x, y, b_spont, b_kill, b_d1, b_a2)
        if i == fault_index:
            lo[x] = 2
            hi[x] = 1
        bad = _violated(lo, hi, x, rel)
        if bad:
            for b in range(4):
                if bad & (1 << b):
                    n_viol += 1
                    if n_rec < max_records:
                        rec_time[n_rec] = times[i]
                        rec_site[n_rec] = x
                        rec_rel[n_rec] = b
                        n_rec += 1
    return n_viol, rec_time[:n_rec], rec_site[:n_rec], rec_rel[:n_rec], snaps_lo, snaps_hi


@dataclass
class Trajectory:
    """Configurations recorded at ``times`` (state after all events up to that time)."""

    box: Box
    times: np.ndarray
    states: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i) -> Configuration:
        return Configuration(self.box, self.states[i])

    @property
    def final(self) -> Configuration:
        return self[-1]


def _check_init(log: EventLog, init: Configuration) -> np.ndarray:
    if init.box != log.box:
        raise ParameterDomainError(f"configuration box {init.box} differs from log box {log.box}")
    return init.state.copy()


def _snapshot_index(log: EventLog, checkpoints) -> tuple[np.ndarray, np.ndarray]:
    cp = np.asarray(sorted(float(t) for t in checkpoints), dtype=np.float64)
    return cp, np.searchsorted(log.times, cp, side="right").astype(np.int64)


def evolve(kind: ProcessKind, log: EventLog, init: Configuration, checkpoints=None, mask=None) -> Trajectory:
    """Run one process over ``log``.

    Without ``checkpoints`` the trajectory holds the initial configuration
    followed by the configuration after every event.  ``mask`` restricts
    the run to a subset of the events.
    """
    kind.check_log(log)
    state = _check_init(log, init)
    if np.any(log.kinds > EventKind.ARROW2) or np.any(log.kinds < 0):
        raise ParameterDomainError("log contains an unknown event kind")
    if kind.name == "cp" and np.any(state == TYPE2):
        raise ParameterDomainError("standard contact process configurations use states 0 and 1 only")
    if checkpoints is None:
        times = np.concatenate([[0.0], log.times])
        snap_idx = np.arange(len(log) + 1, dtype=np.int64)
    else:
        times, snap_idx = _snapshot_index(log, checkpoints)
    mask = np.ones(len(log), dtype=np.uint8) if mask is None else np.asarray(mask, dtype=np.uint8)
    snaps = _evolve_kernel(log.kinds, log.tips, log.sources, mask, kind.semantics(), state, snap_idx)
    return Trajectory(log.box, times, snaps)


@dataclass(frozen=True)
class Violation:
    time: float
    site: int
    relation: str
    replica: int = 0

    def to_dict(self) -> dict:
        return {"replica": self.replica, "time": self.time, "site": self.site, "relation": self.relation}


@dataclass
class CoupledRunReport:
    """Outcome of one or more coupled runs.

    ``occupancy_series`` rows are ``(replica, time, process, origin_state,
    pop1, pop2)``.  ``final_configs`` is kept for single runs only.
    """

    which: str
    processes: tuple[str, str]
    checked_events: int = 0
    replicas: int = 0
    violation_count: int = 0
    violations: list[Violation] = field(default_factory=list)
    final_configs: list[Configuration] = field(default_factory=list)
    occupancy_series: list[tuple] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violation_count == 0

    def merge(self, other: "CoupledRunReport") -> None:
        self.checked_events += other.checked_events
        self.replicas += other.replicas
        self.violation_count += other.violation_count
        self.violations.extend(other.violations)
        self.occupancy_series.extend(other.occupancy_series)

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "processes": list(self.processes),
            "replicas": self.replicas,
            "checked_events": self.checked_events,
            "violation_count": self.violation_count,
            "passed": self.passed,
            "violations": [v.to_dict() for v in self.violations],
            "occupancy_series": [
                {"replica": r, "time": t, "process": p, "origin_state": o, "pop1": a, "pop2": b}
                for r, t, p, o, a, b in self.occupancy_series
            ],
        }


def _coupled(which, names, log, lower, upper, sem_lo, sem_hi, rel, checkpoints, masks, fault_index,
             replica=0, max_records=64, keep_final=True) -> CoupledRunReport:
    lo = _check_init(log, lower)
    hi = _check_init(log, upper)
    bad = [RELATIONS[b] for b in range(4) if rel & (1 << b) and np.any(_violated_all(lo, hi, b))]
    if bad:
        raise PreconditionError(f"initial configurations violate {', '.join(bad)}")
    if checkpoints is None:
        checkpoints = (log.horizon / 4, log.horizon / 2, log.horizon)
    cps, snap_idx = _snapshot_index(log, checkpoints)
    n = len(log)
    mask_lo, mask_hi = masks if masks is not None else (np.ones(n, np.uint8), np.ones(n, np.uint8))
    n_viol, vt, vs, vr, s_lo, s_hi = _coupled_kernel(
        log.times, log.kinds, log.tips, log.sources,
        np.asarray(mask_lo, np.uint8), np.asarray(mask_hi, np.uint8), sem_lo, sem_hi, lo, hi,
        snap_idx, rel, -1 if fault_index is None else int(fault_index), max_records,
    )
    origin = log.box.origin
    series = []
    for j, t in enumerate(cps.tolist()):
        for name, snap in ((names[0], s_lo[j]), (names[1], s_hi[j])):
            series.append((replica, t, name, int(snap[origin]),
                           int(np.count_nonzero(snap == 1)), int(np.count_nonzero(snap == 2))))
    return CoupledRunReport(
        which=which,
        processes=names,
        checked_events=n,
        replicas=1,
        violation_count=int(n_viol),
        violations=[Violation(float(t), int(s), RELATIONS[int(r)], replica) for t, s, r in zip(vt, vs, vr)],
        final_configs=[Configuration(log.box, lo), Configuration(log.box, hi)] if keep_final else [],
        occupancy_series=series,
    )


def _violated_all(lo, hi, b):
    if b == 0:
        return (hi == 1) & (lo != 1)
    if b == 1:
        return (hi != 2) & (lo == 2)
    if b == 2:
        return (lo != 1) & (hi == 1)
    return (lo == 2) & (hi != 2)


def couple_cpree_mcp(log: EventLog, init_mcp: Configuration, init_cpree: Configuration, *,
                     checkpoints=None, fault_index=None, replica=0, keep_final=True) -> CoupledRunReport:
    """MCP and CPREE on one log; CPREE keeps at least the MCP's 1s and at most its 2s."""
    return _coupled(
        "cpree-mcp", ("cpree", "mcp"), log, init_cpree, init_mcp,
        ProcessKind.CPREE().semantics(), ProcessKind.MCP().semantics(), _REL_PAIR,
        checkpoints, None, fault_index, replica, keep_final=keep_final,
    )


def monotone_masks(log: EventLog, lower: GenericMcpRates, upper: GenericMcpRates, seed: int, replica=0):
    """Event masks that realize two rate sets on one log by thinning.

    ``log`` must carry, per stream, the larger of the two rates.  The
    upper process needs larger ``b2``, smaller ``d2``, smaller ``b1`` and
    larger ``d1`` than the lower one.
    """
    if not (upper.b2 >= lower.b2 and upper.d2 <= lower.d2 and upper.b1 <= lower.b1 and upper.d1 >= lower.d1):
        raise ParameterDomainError("upper rates must favor type 2 in every parameter")
    r = log.rates
    full = {EventKind.DEATH_ALL: r.d2, EventKind.DEATH1: r.d1, EventKind.ARROW1: r.b1, EventKind.ARROW2: r.b2}
    lo_rate = {EventKind.DEATH_ALL: lower.d2, EventKind.DEATH1: lower.d1, EventKind.ARROW1: lower.b1, EventKind.ARROW2: lower.b2}
    hi_rate = {EventKind.DEATH_ALL: upper.d2, EventKind.DEATH1: upper.d1, EventKind.ARROW1: upper.b1, EventKind.ARROW2: upper.b2}
    for k in EventKind:
        if max(lo_rate[k], hi_rate[k]) > full[k] * (1 + 1e-12):
            raise ParameterDomainError(f"log rate for {k.name} is below a requested rate")
    u = replica_rng(check_seed(seed), replica, STREAM_THIN).random(len(log))
    n = len(log)
    mask_lo = np.zeros(n, np.uint8)
    mask_hi = np.zeros(n, np.uint8)
    for k in EventKind:
        sel = log.kinds == k
        if full[k] == 0:
            continue
        # the same uniform thins both, so the sparser stream is a subset of the denser one
        mask_lo[sel] = u[sel] < lo_rate[k] / full[k]
        mask_hi[sel] = u[sel] < hi_rate[k] / full[k]
    return mask_lo, mask_hi


def couple_mcp_attractive(log: EventLog, init_lower: Configuration, init_upper: Configuration, *,
                          masks=None, checkpoints=None, fault_index=None, replica=0,
                          keep_final=True) -> CoupledRunReport:
    """Two MCPs on one log, checking all four set relations after every event.

    ``masks`` (from :func:`monotone_masks`) lets the two copies use
    different rates.
    """
    sem = ProcessKind.MCP().semantics()
    return _coupled(
        "attractive", ("lower", "upper"), log, init_lower, init_upper, sem, sem, _REL_ALL,
        checkpoints, masks, fault_index, replica, keep_final=keep_final,
    )


def couple_prop1(log_base: EventLog, sigma: float, init: Configuration, *, init_perturbed=None,
                 checkpoints=None, fault_index=None, replica=0, keep_final=True) -> CoupledRunReport:
    """Equal-death-rate MCP against its copy with extra type-1 deaths at rate ``sigma``.

    Both copies share arrows and x marks (which kill every type); only the
    perturbed copy reads the bullet marks, which ``log_base`` must carry at
    rate ``sigma``.
    """
    sigma = float(sigma)
    if sigma < 0:
        raise ParameterDomainError("sigma must be >= 0")
    base = ProcessKind.MCP_PERTURBED(0.0)
    pert = ProcessKind.MCP_PERTURBED(sigma)
    pert.check_log(log_base)
    return _coupled(
        "prop1", ("mcp", "perturbed"), log_base, init, init if init_perturbed is None else init_perturbed,
        base.semantics(), pert.semantics(), _REL_PAIR, checkpoints, None, fault_index, replica,
        keep_final=keep_final,
    )


def _init_config(spec, box: Box, kind: ProcessKind, rng_factory) -> Configuration:
    name = spec if isinstance(spec, str) else spec[0]
    tracked = kind.tracked_type
    if name == "single_seed_at_origin":
        background = EMPTY if kind.name == "cp" else TYPE1
        return Configuration.single_seed(box, tracked, background)
    if name == "all_2":
        return Configuration.constant(box, tracked)
    if name == "product_measure":
        p1, p2 = (spec[1], spec[2]) if not isinstance(spec, str) else (0.5, 0.5)
        if kind.name == "cp":
            p1, p2 = p1 + p2, 0.0  # occupied sites are infected in the CP
        return Configuration.product_measure(box, p1, p2, rng_factory())
    raise ParameterDomainError(f"unknown init spec {spec!r}")


def run_coupled_replicas(which: str, rates: GenericMcpRates, box: Box, horizon: float, replicas: int,
                         seed: int, *, init="default", sigma: float | None = None,
                         lower_rates: GenericMcpRates | None = None, checkpoints=None,
                         fault=None, threads: int | None = None,
                         max_events: int = DEFAULT_MAX_EVENTS) -> CoupledRunReport:
    """Repeat one coupled run over independent logs and merge the reports.

    ``fault=(replica, event_index)`` corrupts one state mid-run to exercise
    the violation path.
    """
    seed = check_seed(seed)
    if which not in ("cpree-mcp", "attractive", "prop1"):
        raise ParameterDomainError(f"unknown coupling {which!r}")

    def one(i):
        log = generate(box, rates, horizon, seed, replica=i, max_events=max_events)
        fi = fault[1] if fault is not None and fault[0] == i else None
        if fi is not None and len(log):
            fi = min(fi, len(log) - 1)
        kw = dict(checkpoints=checkpoints, fault_index=fi, replica=i, keep_final=False)
        if which == "cpree-mcp":
            start = Configuration.single_seed(box, TYPE2, TYPE1) if init == "default" else init
            return couple_cpree_mcp(log, start, start, **kw)
        if which == "attractive":
            if init == "default":
                lo, hi = Configuration.constant(box, TYPE1), Configuration.constant(box, TYPE2)
            elif init == "equal":
                lo = hi = Configuration.single_seed(box, TYPE2, TYPE1)
            else:
                lo, hi = init
            masks = None
            if lower_rates is not None:
                masks = monotone_masks(log, lower_rates, rates, seed, i)
            return couple_mcp_attractive(log, lo, hi, masks=masks, **kw)
        s = rates.d1 if sigma is None else sigma
        start = Configuration.single_seed(box, TYPE2, TYPE1) if init == "default" else init
        return couple_prop1(log, s, start, **kw)

    names = {"cpree-mcp": ("cpree", "mcp"), "attractive": ("lower", "upper"), "prop1": ("mcp", "perturbed")}
    total = CoupledRunReport(which=which, processes=names[which])
    for rep in run_indexed(one, int(replicas), threads):
        total.merge(rep)
    return total


Z95 = 1.959963984540054


def proportion_ci(count: int, n: int) -> tuple[float, float]:
    """Point estimate and 95% normal half-width with a 1/(2n) continuity guard."""
    p = count / n
    return p, Z95 * math.sqrt(p * (1.0 - p) / n) + 0.5 / n


@dataclass
class SurvivalEstimate:
    """Finite-horizon proxies for survival of the tracked type.

    ``estimate`` is the fraction of replicas where the tracked type is
    still present anywhere at the horizon; ``origin_estimate`` the
    fraction where it occupies the origin.
    """

    replicas: int
    survive_count: int
    origin_occupied_count: int
    estimate: float = field(init=False)
    half_width: float = field(init=False)
    origin_estimate: float = field(init=False)
    origin_half_width: float = field(init=False)
    process: str = ""
    horizon: float = 0.0
    origin_series: dict = field(default_factory=dict)

    def __post_init__(self):
        self.estimate, self.half_width = proportion_ci(self.survive_count, self.replicas)
        self.origin_estimate, self.origin_half_width = proportion_ci(self.origin_occupied_count, self.replicas)

    def to_dict(self) -> dict:
        return {
            "process": self.process,
            "horizon": self.horizon,
            "replicas": self.replicas,
            "survive_count": self.survive_count,
            "origin_occupied_count": self.origin_occupied_count,
            "estimate": self.estimate,
            "half_width": self.half_width,
            "origin_estimate": self.origin_estimate,
            "origin_half_width": self.origin_half_width,
            "origin_series": {repr(float(t)): v for t, v in self.origin_series.items()},
        }


def _rates_for(kind: ProcessKind, params, dim: int) -> GenericMcpRates:
    if kind.name == "cp":
        return GenericMcpRates.contact_process(kind.lam, dim)
    if isinstance(params, McpParams):
        return params.rates()
    if isinstance(params, GenericMcpRates):
        return params
    raise ParameterDomainError(f"{kind.name} needs McpParams or GenericMcpRates")


def _survival_from_snaps(kind, checkpoints, origin, horizon, replicas_rows) -> SurvivalEstimate:
    tracked = kind.tracked_type
    alive = sum(1 for s in replicas_rows if np.any(s[-1] == tracked))
    at_origin = sum(1 for s in replicas_rows if s[-1][origin] == tracked)
    series = {t: sum(1 for s in replicas_rows if s[j][origin] == tracked) / len(replicas_rows)
              for j, t in enumerate(checkpoints)}
    return SurvivalEstimate(len(replicas_rows), alive, at_origin, process=kind.name, horizon=horizon,
                            origin_series=series)


def estimate_survival(kind: ProcessKind, params, box: Box, horizon: float, replicas: int, seed: int,
                      init_spec="single_seed_at_origin", *, checkpoints=None, threads: int | None = None,
                      max_events: int = DEFAULT_MAX_EVENTS) -> SurvivalEstimate:
    """Monte Carlo survival and origin-occupancy frequencies at ``horizon``.

    ``init_spec`` is ``"single_seed_at_origin"``, ``"all_2"`` or
    ``("product_measure", p1, p2)``.  ``checkpoints`` adds origin-occupancy
    frequencies at earlier times to ``origin_series``.
    """
    if replicas < 100:
        raise ParameterDomainError(f"need at least 100 replicas, got {replicas}")
    seed = check_seed(seed)
    rates = _rates_for(kind, params, box.dim)
    cps = sorted(set([float(t) for t in (checkpoints or [])] + [float(horizon)]))
    sem = kind.semantics()

    def one(i):
        log = generate(box, rates, horizon, seed, replica=i, max_events=max_events)
        init = _init_config(init_spec, box, kind, lambda: replica_rng(seed, i, STREAM_INIT))
        _, snap_idx = _snapshot_index(log, cps)
        return _evolve_kernel(log.kinds, log.tips, log.sources, np.ones(len(log), np.uint8), sem,
                              init.state.copy(), snap_idx)

    rows = run_indexed(one, int(replicas), threads)
    return _survival_from_snaps(kind, cps, box.origin, float(horizon), rows)


def estimate_survival_paired(params: McpParams, lam: float, box: Box, horizon: float, replicas: int,
                             seed: int, *, checkpoints=None, threads: int | None = None,
                             max_events: int = DEFAULT_MAX_EVENTS) -> dict:
    """CP, CPREE and MCP from single seeds on matched replica seeds.

    CPREE and MCP share each replica's log (and are checked pathwise
    against each other); the CP at rate ``lam`` reads its own log keyed by
    the same replica index.
    """
    if replicas < 100:
        raise ParameterDomainError(f"need at least 100 replicas, got {replicas}")
    seed = check_seed(seed)
    rates = params.rates()
    cp_kind = ProcessKind.CP(lam)
    cp_rates = GenericMcpRates.contact_process(lam, box.dim)
    cps = sorted(set([float(t) for t in (checkpoints or [])] + [float(horizon)]))
    start = Configuration.single_seed(box, TYPE2, TYPE1)
    cp_start = Configuration.single_seed(box, TYPE1, EMPTY)

    def one(i):
        log = generate(box, rates, horizon, seed, replica=i, max_events=max_events)
        rep = couple_cpree_mcp(log, start, start, checkpoints=cps, replica=i, keep_final=False)
        cp_log = generate(box, cp_rates, horizon, seed, replica=i, stream=STREAM_CP_LOG, max_events=max_events)
        _, idx = _snapshot_index(cp_log, cps)
        cp_snaps = _evolve_kernel(cp_log.kinds, cp_log.tips, cp_log.sources, np.ones(len(cp_log), np.uint8),
                                  cp_kind.semantics(), cp_start.state.copy(), idx)
        return rep, cp_snaps

    results = run_indexed(one, int(replicas), threads)
    origin = box.origin
    coupling = CoupledRunReport(which="cpree-mcp", processes=("cpree", "mcp"))
    cp_rows = []
    by_proc = {"cpree": [], "mcp": []}
    for rep, cp_snaps in results:
        coupling.merge(rep)
        cp_rows.append(cp_snaps)
    # rebuild per-process origin/population tallies from the occupancy series
    for r, t, proc, o, p1, p2 in coupling.occupancy_series:
        by_proc[proc].append((r, t, o, p2))
    out = {"cp": _survival_from_snaps(cp_kind, cps, origin, float(horizon), cp_rows)}
    n = int(replicas)
    for proc, kind in (("cpree", ProcessKind.CPREE()), ("mcp", ProcessKind.MCP())):
        rows = by_proc[proc]
        final = [(o, p2) for r, t, o, p2 in rows if t == cps[-1]]
        alive = sum(1 for o, p2 in final if p2 > 0)
        at_origin = sum(1 for o, p2 in final if o == TYPE2)
        series = {t: sum(1 for r, tt, o, p2 in rows if tt == t and o == TYPE2) / n for t in cps}
        out[proc] = SurvivalEstimate(n, alive, at_origin, process=kind.name, horizon=float(horizon),
                                     origin_series=series)
    out["coupling"] = coupling
    return out

