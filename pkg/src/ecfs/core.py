"""Problem model and round-driven simulation engine.

All quantities are exact rationals (stdlib ``fractions.Fraction``); nothing
in here is allowed to round.  A job completes in the first round where its
cumulative executed fraction reaches exactly 1, so tolerance-based arithmetic
would make completion rounds ambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Protocol, Sequence, Union

Frac = Fraction

ONE = Fraction(1)


class EcfsError(Exception):
    """Base class for all domain errors."""


class ParseError(EcfsError):
    """Malformed instance or schedule text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(EcfsError):
    """Invalid parameter combination (e.g. a unit-only scheduler on a general instance)."""


class ProtocolError(EcfsError):
    """A scheduler emitted an invalid round; the engine never repairs silently."""


class HorizonExceededError(EcfsError):
    """Jobs still pending when the round limit was reached."""

    def __init__(self, message: str, schedule: "Schedule", history: list["RoundRecord"]):
        super().__init__(message)
        self.partial_schedule = schedule
        self.history = history


def parse_frac(token: str) -> Fraction:
    """Parse ``p`` or ``p/q`` into a reduced Fraction."""
    if "/" in token:
        num, _, den = token.partition("/")
        return Fraction(int(num), int(den))
    return Fraction(int(token))


def format_frac(x: Fraction) -> str:
    """Canonical text form: ``p/q`` with ``/q`` omitted when q = 1."""
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class Node:
    id: int
    capacity: Fraction

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"node {self.id}: capacity must be positive")


@dataclass(frozen=True)
class Job:
    """A request between two distinct nodes.

    ``demand`` is the total work, ``release`` the first round in which any
    fraction of it may execute.
    """

    id: int
    u: int
    v: int
    demand: Fraction
    release: int

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError(f"job {self.id}: endpoints must be distinct")
        if self.demand <= 0:
            raise ValueError(f"job {self.id}: demand must be positive")
        if self.release < 1:
            raise ValueError(f"job {self.id}: release must be >= 1")

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)


@dataclass(frozen=True)
class Instance:
    nodes: tuple[Node, ...]
    jobs: tuple[Job, ...]

    def __post_init__(self):
        for idx, node in enumerate(self.nodes):
            if node.id != idx:
                raise ValueError(f"node ids must be 0..n-1 in order, got {node.id} at {idx}")
        n = len(self.nodes)
        for idx, job in enumerate(self.jobs):
            if job.id != idx:
                raise ValueError(f"job ids must be 0..m-1 in order, got {job.id} at {idx}")
            if not (0 <= job.u < n and 0 <= job.v < n):
                raise ValueError(f"job {job.id}: endpoint out of range")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.jobs)

    @property
    def unit(self) -> bool:
        return all(nd.capacity == 1 for nd in self.nodes) and all(
            jb.demand == 1 for jb in self.jobs
        )

    @property
    def last_release(self) -> int:
        return max((jb.release for jb in self.jobs), default=0)

    def capacity(self, node: int) -> Fraction:
        return self.nodes[node].capacity

    def arrivals_by_round(self) -> dict[int, list[Job]]:
        out: dict[int, list[Job]] = {}
        for job in self.jobs:
            out.setdefault(job.release, []).append(job)
        return out


def make_instance(capacities: Sequence, jobs: Sequence[tuple]) -> Instance:
    """Convenience builder: capacities list + (u, v, demand, release) tuples."""
    nodes = tuple(Node(i, Fraction(c)) for i, c in enumerate(capacities))
    built = tuple(
        Job(j, u, v, Fraction(d), int(r)) for j, (u, v, d, r) in enumerate(jobs)
    )
    return Instance(nodes, built)


@dataclass(frozen=True)
class Assignment:
    job: int
    round: int
    fraction: Fraction


@dataclass(frozen=True)
class Schedule:
    """Sparse map (job, round) -> executed fraction.

    Assignments are kept sorted by (round, job); construction normalizes the
    order so equal schedules compare equal and serialize identically.
    """

    assignments: tuple[Assignment, ...]
    nonsplitting: bool

    def __post_init__(self):
        ordered = tuple(sorted(self.assignments, key=lambda a: (a.round, a.job)))
        object.__setattr__(self, "assignments", ordered)

    def by_job(self) -> dict[int, list[Assignment]]:
        out: dict[int, list[Assignment]] = {}
        for a in self.assignments:
            out.setdefault(a.job, []).append(a)
        return out

    @property
    def last_round(self) -> int:
        return max((a.round for a in self.assignments), default=0)


@dataclass(frozen=True)
class Violation:
    kind: str  # capacity | release | incomplete | split-in-nonsplitting | duplicate
    location: tuple[int, int]  # (node id or job id, round)
    magnitude: Fraction


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]


# ---------------------------------------------------------------------------
# File formats


def parse_instance(text: str) -> Instance:
    """Parse the ``ecfs v1`` instance format.

    Raises ParseError naming the offending line for malformed input,
    duplicate ids, self-loops and nonpositive quantities.
    """
    lines = text.splitlines()
    pos = 0

    def next_line() -> tuple[int, list[str]]:
        nonlocal pos
        while pos < len(lines):
            pos += 1
            stripped = lines[pos - 1].strip()
            if stripped:
                return pos, stripped.split()
        raise ParseError("unexpected end of file", len(lines))

    lineno, tok = next_line()
    if tok != ["ecfs", "v1"]:
        raise ParseError("expected header 'ecfs v1'", lineno)

    lineno, tok = next_line()
    if len(tok) != 2 or tok[0] != "nodes":
        raise ParseError("expected 'nodes <n>'", lineno)
    try:
        n = int(tok[1])
    except ValueError:
        raise ParseError("node count must be an integer", lineno) from None

    nodes: list[Node] = []
    for _ in range(n):
        lineno, tok = next_line()
        if len(tok) != 3 or tok[0] != "node":
            raise ParseError("expected 'node <id> <capacity>'", lineno)
        try:
            nid = int(tok[1])
            cap = parse_frac(tok[2])
        except (ValueError, ZeroDivisionError):
            raise ParseError("bad node id or capacity", lineno) from None
        if nid != len(nodes):
            raise ParseError(f"duplicate or out-of-order node id {nid}", lineno)
        if cap <= 0:
            raise ParseError("capacity must be positive", lineno)
        nodes.append(Node(nid, cap))

    lineno, tok = next_line()
    if len(tok) != 2 or tok[0] != "jobs":
        raise ParseError("expected 'jobs <m>'", lineno)
    try:
        m = int(tok[1])
    except ValueError:
        raise ParseError("job count must be an integer", lineno) from None

    jobs: list[Job] = []
    for _ in range(m):
        lineno, tok = next_line()
        if len(tok) != 6 or tok[0] != "job":
            raise ParseError("expected 'job <id> <u> <v> <demand> <release>'", lineno)
        try:
            jid = int(tok[1])
            u, v = int(tok[2]), int(tok[3])
            demand = parse_frac(tok[4])
            release = int(tok[5])
        except (ValueError, ZeroDivisionError):
            raise ParseError("bad job field", lineno) from None
        if jid != len(jobs):
            raise ParseError(f"duplicate or out-of-order job id {jid}", lineno)
        if u == v:
            raise ParseError("self-loop endpoints", lineno)
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError("endpoint out of range", lineno)
        if demand <= 0:
            raise ParseError("demand must be positive", lineno)
        if release < 1:
            raise ParseError("release must be >= 1", lineno)
        jobs.append(Job(jid, u, v, demand, release))

    while pos < len(lines):
        pos += 1
        if lines[pos - 1].strip():
            raise ParseError("trailing content after job list", pos)

    return Instance(tuple(nodes), tuple(jobs))


def serialize_instance(inst: Instance) -> str:
    out = ["ecfs v1", f"nodes {inst.n}"]
    for node in inst.nodes:
        out.append(f"node {node.id} {format_frac(node.capacity)}")
    out.append(f"jobs {inst.m}")
    for job in inst.jobs:
        out.append(
            f"job {job.id} {job.u} {job.v} {format_frac(job.demand)} {job.release}"
        )
    return "\n".join(out) + "\n"


def parse_schedule(text: str) -> Schedule:
    """Parse the ``ecfs-sched v1`` format."""
    lines = text.splitlines()
    pos = 0

    def next_line() -> tuple[int, list[str]]:
        nonlocal pos
        while pos < len(lines):
            pos += 1
            stripped = lines[pos - 1].strip()
            if stripped:
                return pos, stripped.split()
        return 0, []

    lineno, tok = next_line()
    if tok != ["ecfs-sched", "v1"]:
        raise ParseError("expected header 'ecfs-sched v1'", lineno or 1)
    lineno, tok = next_line()
    if len(tok) != 2 or tok[0] != "nonsplitting" or tok[1] not in ("0", "1"):
        raise ParseError("expected 'nonsplitting <0|1>'", lineno or 2)
    nonsplitting = tok[1] == "1"

    assignments: list[Assignment] = []
    while True:
        lineno, tok = next_line()
        if not tok:
            break
        if len(tok) != 4 or tok[0] != "assign":
            raise ParseError("expected 'assign <job> <round> <fraction>'", lineno)
        try:
            jid = int(tok[1])
            rnd = int(tok[2])
            frac = parse_frac(tok[3])
        except (ValueError, ZeroDivisionError):
            raise ParseError("bad assignment field", lineno) from None
        if rnd < 1:
            raise ParseError("round must be >= 1", lineno)
        if not (0 < frac <= 1):
            raise ParseError("fraction must be in (0, 1]", lineno)
        assignments.append(Assignment(jid, rnd, frac))

    return Schedule(tuple(assignments), nonsplitting)


def serialize_schedule(sched: Schedule) -> str:
    out = ["ecfs-sched v1", f"nonsplitting {1 if sched.nonsplitting else 0}"]
    for a in sched.assignments:  # already (round, job) sorted
        out.append(f"assign {a.job} {a.round} {format_frac(a.fraction)}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Validation


def validate_schedule(
    inst: Instance, sched: Schedule, augmentation: Fraction = ONE
) -> ValidationReport:
    """Check a schedule against an instance at the given capacity augmentation.

    Violations are data, not failures: per-round node load must stay within
    augmentation * capacity (exact comparison), fractions must respect
    releases, every job must reach cumulative fraction 1, and a nonsplitting
    schedule must execute each job exactly once with fraction 1.
    """
    violations: list[Violation] = []
    augmentation = Fraction(augmentation)

    seen: dict[tuple[int, int], int] = {}
    for a in sched.assignments:
        if not (0 <= a.job < inst.m):
            raise EcfsError(f"schedule references unknown job {a.job}")
        seen[(a.job, a.round)] = seen.get((a.job, a.round), 0) + 1
    for (jid, rnd), count in sorted(seen.items()):
        if count > 1:
            violations.append(Violation("duplicate", (jid, rnd), Fraction(count)))

    loads: dict[tuple[int, int], Fraction] = {}
    totals: dict[int, Fraction] = {j.id: Fraction(0) for j in inst.jobs}
    last_round: dict[int, int] = {}
    for a in sched.assignments:
        job = inst.jobs[a.job]
        if a.round < job.release:
            violations.append(Violation("release", (a.job, a.round), a.fraction))
        for node in job.endpoints:
            key = (node, a.round)
            loads[key] = loads.get(key, Fraction(0)) + job.demand * a.fraction
        totals[a.job] += a.fraction
        last_round[a.job] = max(last_round.get(a.job, 0), a.round)
        if sched.nonsplitting and a.fraction != 1:
            violations.append(
                Violation("split-in-nonsplitting", (a.job, a.round), a.fraction)
            )

    for (node, rnd), load in sorted(loads.items()):
        if load > augmentation * inst.capacity(node):
            violations.append(Violation("capacity", (node, rnd), load))

    counts: dict[int, int] = {}
    for a in sched.assignments:
        counts[a.job] = counts.get(a.job, 0) + 1
    for job in inst.jobs:
        if totals[job.id] < 1:
            violations.append(
                Violation("incomplete", (job.id, last_round.get(job.id, 0)), totals[job.id])
            )
        elif sched.nonsplitting and counts.get(job.id, 0) != 1:
            violations.append(
                Violation(
                    "split-in-nonsplitting",
                    (job.id, last_round.get(job.id, 0)),
                    totals[job.id],
                )
            )

    violations.sort(key=lambda v: (v.location[1], v.kind, v.location[0]))
    return ValidationReport(not violations, tuple(violations))


# ---------------------------------------------------------------------------
# Simulation state


class SimState:
    """Mutable engine state visible to schedulers.

    Tracks the released-but-incomplete jobs and two per-node caches: pending
    load (demand times remaining fraction) and pending full demand (the sum
    Proportional Allocation divides by).  Schedulers may read freely; only
    the engine mutates.
    """

    def __init__(self, nodes: Sequence[Node]):
        self.nodes = tuple(nodes)
        self.round = 0
        self.jobs: dict[int, Job] = {}
        self.remaining: dict[int, Fraction] = {}
        self._node_jobs: dict[int, set[int]] = {nd.id: set() for nd in nodes}
        self._load: dict[int, Fraction] = {nd.id: Fraction(0) for nd in nodes}
        self._full: dict[int, Fraction] = {nd.id: Fraction(0) for nd in nodes}

    def capacity(self, node: int) -> Fraction:
        return self.nodes[node].capacity

    def add_job(self, job: Job) -> None:
        self.jobs[job.id] = job
        self.remaining[job.id] = ONE
        for node in job.endpoints:
            self._node_jobs[node].add(job.id)
            self._load[node] += job.demand
            self._full[node] += job.demand

    def execute(self, jid: int, fraction: Fraction) -> None:
        job = self.jobs[jid]
        self.remaining[jid] -= fraction
        for node in job.endpoints:
            self._load[node] -= job.demand * fraction
        if self.remaining[jid] == 0:
            del self.remaining[jid]
            for node in job.endpoints:
                self._node_jobs[node].discard(jid)
                self._full[node] -= job.demand

    def is_pending(self, jid: int) -> bool:
        return jid in self.remaining

    def pending_ids(self) -> list[int]:
        return sorted(self.remaining)

    def pending_jobs_on(self, node: int) -> list[int]:
        return sorted(self._node_jobs[node])

    def pending_load(self, node: int) -> Fraction:
        return self._load[node]

    def pending_full_demand(self, node: int) -> Fraction:
        return self._full[node]

    def pending_edge_load(self, u: int, v: int) -> Fraction:
        """Load of the node pair {u, v}: pending remainders of jobs on exactly it."""
        key = frozenset((u, v))
        total = Fraction(0)
        for jid in self._node_jobs[u]:
            job = self.jobs[jid]
            if frozenset(job.endpoints) == key:
                total += job.demand * self.remaining[jid]
        return total

    def loads_snapshot(self) -> dict[int, Fraction]:
        return {nd.id: self._load[nd.id] for nd in self.nodes if self._load[nd.id] != 0}

    def audit(self) -> None:
        """Recompute both caches from the pending set; raise on any mismatch."""
        load = {nd.id: Fraction(0) for nd in self.nodes}
        full = {nd.id: Fraction(0) for nd in self.nodes}
        for jid, rem in self.remaining.items():
            job = self.jobs[jid]
            for node in job.endpoints:
                load[node] += job.demand * rem
                full[node] += job.demand
        if load != self._load or full != self._full:
            raise AssertionError("pending-load caches diverged from the pending set")


def pending_load(state: SimState, node: int) -> Fraction:
    """Sum over pending jobs adjacent to ``node`` of demand x remaining fraction."""
    return state.pending_load(node)


class SchedulerSession(Protocol):
    name: str
    nonsplitting: bool
    augmentation: Fraction

    def step(
        self, state: SimState, arrivals: Sequence[Job]
    ) -> list[tuple[int, Fraction]]:
        """Consume one round of arrivals, return this round's (job, fraction) list."""
        ...


@dataclass
class RoundRecord:
    round: int
    arrivals: tuple[int, ...]
    assignments: tuple[Assignment, ...]
    loads_start: dict[int, Fraction]  # pending loads after arrivals, before scheduling
    loads_end: dict[int, Fraction]  # pending loads after scheduling


class Engine:
    """Drives one online scheduler round by round under strict validation.

    Each round: deliver arrivals, ask the session for assignments, cap each
    fraction at the job's remaining fraction (never an error; capping only
    lowers loads), then reject the round outright if any node exceeds
    augmentation * capacity or an assignment is malformed.
    """

    def __init__(
        self,
        nodes: Sequence[Node],
        session: SchedulerSession,
        augmentation: Fraction,
        audit: bool = False,
    ):
        if augmentation < 1:
            raise ConfigError("augmentation must be >= 1")
        self.state = SimState(nodes)
        self.session = session
        self.augmentation = Fraction(augmentation)
        self.audit = audit
        self.history: list[RoundRecord] = []
        self._assignments: list[Assignment] = []

    @property
    def round(self) -> int:
        return self.state.round

    def pending_empty(self) -> bool:
        return not self.state.remaining

    def play_round(self, arrivals: Sequence[Job]) -> RoundRecord:
        state = self.state
        state.round += 1
        t = state.round
        for job in arrivals:
            if job.release != t:
                raise ProtocolError(f"job {job.id} released {job.release}, delivered {t}")
            if job.id in state.jobs:
                raise ProtocolError(f"job {job.id} delivered twice")
            state.add_job(job)
        loads_start = state.loads_snapshot()

        emitted = self.session.step(state, list(arrivals))

        round_assignments: list[Assignment] = []
        seen: set[int] = set()
        loads: dict[int, Fraction] = {}
        for jid, frac in emitted:
            if jid in seen:
                raise ProtocolError(f"round {t}: duplicate assignment for job {jid}")
            seen.add(jid)
            if not state.is_pending(jid):
                raise ProtocolError(f"round {t}: job {jid} is not pending")
            if frac <= 0:
                raise ProtocolError(f"round {t}: nonpositive fraction for job {jid}")
            capped = min(Fraction(frac), state.remaining[jid])
            job = state.jobs[jid]
            for node in job.endpoints:
                loads[node] = loads.get(node, Fraction(0)) + job.demand * capped
            round_assignments.append(Assignment(jid, t, capped))
        for node, load in loads.items():
            if load > self.augmentation * state.capacity(node):
                raise ProtocolError(
                    f"round {t}: node {node} load {load} exceeds "
                    f"{self.augmentation} * {state.capacity(node)}"
                )

        for a in round_assignments:
            state.execute(a.job, a.fraction)
        if self.audit:
            state.audit()

        record = RoundRecord(
            round=t,
            arrivals=tuple(j.id for j in arrivals),
            assignments=tuple(round_assignments),
            loads_start=loads_start,
            loads_end=state.loads_snapshot(),
        )
        self.history.append(record)
        self._assignments.extend(round_assignments)
        return record

    def schedule(self) -> Schedule:
        nonsplitting = getattr(self.session, "nonsplitting", False)
        return Schedule(tuple(self._assignments), nonsplitting)


ArrivalSource = Union[Instance, Callable[[SimState], "list[Job] | None"]]


def default_max_rounds(inst: Instance) -> int:
    """Generous termination guard: 4 * (last release + ceil(L) * m + 1)."""
    from . import bounds  # local import; bounds depends on this module

    lb = bounds.interval_lower_bound(inst)
    ceil_l = -((-lb.L.numerator) // lb.L.denominator)
    return 4 * (inst.last_release + ceil_l * inst.m + 1)


def simulate(
    source: ArrivalSource,
    session: SchedulerSession,
    augmentation: Fraction | None = None,
    max_rounds: int | None = None,
    audit: bool = False,
) -> tuple[Schedule, list[RoundRecord]]:
    """Run an online scheduler against an arrival source.

    ``source`` is a fixed Instance (arrivals delivered by release round) or a
    callback ``state -> list[Job] | None`` for adaptive inputs, where None
    means no further arrivals will ever come.  The scheduler never sees
    future arrivals.  Stops when every released job is complete and the
    source is exhausted; raises HorizonExceededError past ``max_rounds``.
    """
    if augmentation is None:
        augmentation = getattr(session, "augmentation", ONE)

    if isinstance(source, Instance):
        if getattr(session, "requires_unit", False) and not source.unit:
            raise ConfigError(f"{session.name} requires a unit instance")
        if max_rounds is None:
            max_rounds = default_max_rounds(source)
        by_round = source.arrivals_by_round()
        engine = Engine(source.nodes, session, augmentation, audit=audit)
        last = source.last_release
        while engine.round < last or not engine.pending_empty():
            t = engine.round + 1
            if t > max_rounds:
                raise HorizonExceededError(
                    f"jobs still pending after {max_rounds} rounds",
                    engine.schedule(),
                    engine.history,
                )
            engine.play_round(by_round.get(t, []))
        return engine.schedule(), engine.history

    if max_rounds is None:
        raise ConfigError("adaptive sources require an explicit max_rounds")
    nodes = getattr(source, "nodes", None)
    if nodes is None:
        raise ConfigError("adaptive sources must expose a .nodes attribute")
    engine = Engine(nodes, session, augmentation, audit=audit)
    exhausted = False
    while not (exhausted and engine.pending_empty()):
        if engine.round + 1 > max_rounds:
            raise HorizonExceededError(
                f"jobs still pending after {max_rounds} rounds",
                engine.schedule(),
                engine.history,
            )
        arrivals: list[Job] | None = None if exhausted else source(engine.state)
        if arrivals is None:
            exhausted = True
            arrivals = []
        engine.play_round(arrivals)
    return engine.schedule(), engine.history
