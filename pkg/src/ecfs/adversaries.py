"""Adaptive chain adversary and fixed hard-instance generators.

The chain harness drives a live scheduler round by round, watching its
pending loads and choosing arrivals accordingly.  Loads are measured at the
start of each round, after arrivals are delivered and before the scheduler
acts: that is the reading under which a scheduler that clears everything
still trips the stopping rule once backlog plus fresh arrivals pile onto one
node, and it is the only reading consistent with the stopping rule firing at
all for augmented schedulers.

All generators are pure: identical parameters produce identical instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .core import (
    ConfigError,
    EcfsError,
    Engine,
    HorizonExceededError,
    Instance,
    Job,
    Node,
    RoundRecord,
    Schedule,
    make_instance,
)
from .metrics import MetricsReport, response_summary

ONE = Fraction(1)


class AdversaryEvasionError(EcfsError):
    """The stopping rule failed to fire within the safety cap."""


# ---------------------------------------------------------------------------
# Chain topology


@dataclass(frozen=True)
class ChainTopology:
    """Path of 4K+5 unit nodes with signed edge labels -2K-2 .. 2K+1.

    Labeled node v (for -K <= v <= K) sits at index 2v + 2K + 2 and is the
    shared endpoint of edges 2v-1 and 2v; every other node is unlabeled.
    """

    K: int

    @property
    def n(self) -> int:
        return 4 * self.K + 5

    @property
    def edge_labels(self) -> range:
        return range(-2 * self.K - 2, 2 * self.K + 2)

    def edge_nodes(self, label: int) -> tuple[int, int]:
        if label not in self.edge_labels:
            raise ConfigError(f"edge label {label} out of range")
        base = label + 2 * self.K + 2
        return (base, base + 1)

    def labeled_node(self, v: int) -> int:
        if abs(v) > self.K:
            raise ConfigError(f"node label {v} out of range")
        return 2 * v + 2 * self.K + 2

    def is_labeled(self, node: int) -> bool:
        offset = node - (2 * self.K + 2)
        return offset % 2 == 0 and abs(offset // 2) <= self.K

    def unlabeled_nodes(self) -> list[int]:
        return [x for x in range(self.n) if not self.is_labeled(x)]

    def odd_edges(self) -> list[int]:
        return [lab for lab in self.edge_labels if lab % 2 != 0]

    def even_edges(self) -> list[int]:
        return [lab for lab in self.edge_labels if lab % 2 == 0]

    def node_edges(self, node: int) -> list[int]:
        return [
            lab for lab in (node - 2 * self.K - 3, node - 2 * self.K - 2)
            if lab in self.edge_labels
        ]

    def odd_edge_of(self, node: int) -> int:
        for lab in self.node_edges(node):
            if lab % 2 != 0:
                return lab
        raise ConfigError(f"node {node} has no odd edge")

    def even_edge_of(self, node: int) -> int:
        for lab in self.node_edges(node):
            if lab % 2 == 0:
                return lab
        raise ConfigError(f"node {node} has no even edge")


def build_chain(K: int) -> tuple[Instance, ChainTopology]:
    """Unit-capacity path instance (no jobs) plus its labeling."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    chain = ChainTopology(K)
    nodes = tuple(Node(i, ONE) for i in range(chain.n))
    return Instance(nodes, ()), chain


class JobStream:
    """Allocates consecutive unit-job ids and remembers everything it made."""

    def __init__(self):
        self.jobs: list[Job] = []

    def make(self, u: int, v: int, release: int) -> Job:
        job = Job(len(self.jobs), u, v, ONE, release)
        self.jobs.append(job)
        return job


def _arrival_labels(chain: ChainTopology, k: int, ell: int) -> list[int]:
    """One round's arrival pattern: odd edges left of the center band, both
    edges inside it, even edges right of it.  The band is clipped to existing
    labels when it outgrows the chain."""
    lo = min(ell, chain.K)
    labels: list[int] = []
    for v in range(-k, -ell):  # v = -k .. -(ell+1)
        labels.append(2 * v - 1)
    for v in range(-lo, lo + 1):
        labels.append(2 * v - 1)
        labels.append(2 * v)
    for v in range(ell + 1, k + 1):
        labels.append(2 * v)
    return sorted(labels)


@dataclass
class SubroutineResult:
    rounds: int
    node: int
    start_round: int
    end_round: int
    precondition_ok: bool


def _max_load_unlabeled(chain: ChainTopology, loads: dict[int, Fraction]) -> tuple[int, Fraction]:
    best_node, best_load = -1, Fraction(-1)
    for node in chain.unlabeled_nodes():
        load = loads.get(node, Fraction(0))
        if load > best_load:
            best_node, best_load = node, load
    return best_node, best_load


def run_subroutine(
    engine: Engine,
    chain: ChainTopology,
    k: int,
    c: int,
    C: int,
    stream: JobStream,
    strict_precondition: bool = False,
) -> SubroutineResult:
    """Pile arrivals onto the chain until some unlabeled node in the
    scheduler's state carries (Ck + c + 1)/2 load at the start of a round.

    The stopping rule is guaranteed to fire only if every odd edge already
    carries (Ck + c)/2 load when called; that precondition is recorded (or
    enforced with ``strict_precondition``) and a safety cap turns evasion
    into a diagnosable error.
    """
    threshold = Fraction(C * k + c + 1, 2)
    need = Fraction(C * k + c, 2)
    pre_ok = all(
        engine.state.pending_edge_load(*chain.edge_nodes(lab)) >= need
        for lab in chain.odd_edges()
    )
    if strict_precondition and not pre_ok:
        raise AdversaryEvasionError(
            f"odd edges below {need} pending load before subroutine({k}, {c})"
        )
    cap = 4 * (C * k + c + 1) * C
    start = engine.round + 1
    t = 0
    while True:
        t += 1
        if t > cap:
            raise AdversaryEvasionError(
                f"scheduler evaded termination for {cap} rounds at k={k}, c={c}"
            )
        ell = -(-t // C) - 1  # ceil(t / C) - 1
        arrivals = [
            stream.make(*chain.edge_nodes(lab), engine.round + 1)
            for lab in _arrival_labels(chain, k, ell)
        ]
        record = engine.play_round(arrivals)
        node, load = _max_load_unlabeled(chain, record.loads_start)
        if load >= threshold:
            return SubroutineResult(t, node, start, engine.round, pre_ok)


@dataclass
class PhaseRecord:
    kind: str  # subroutine | drain | spread-even | spread-odd | settle
    start_round: int
    end_round: int
    info: dict = field(default_factory=dict)


@dataclass
class AdversaryTrace:
    instance: Instance
    schedule: Schedule
    history: list[RoundRecord]
    phases: list[PhaseRecord]
    subroutine_nodes: list[tuple[int, int, int]]  # (k, c, returned node)
    metrics: MetricsReport

    @property
    def max_response(self) -> int:
        return self.metrics.max_response


def run_adversary(
    K: int,
    C: int,
    session_factory,
    augmentation: Fraction = ONE,
    strict_precondition: bool = False,
) -> AdversaryTrace:
    """Full adaptive run: for each (k, c) pile load onto one node, let it
    drain for C rounds, then alternate whole-parity arrival waves to smear
    the backlog across the chain.  Ends with arrival-free rounds until the
    scheduler finishes everything, so the trace replays through ``simulate``.

    The benchmark regime is augmentation 1; other values are accepted for
    experiments but nothing is claimed about them.
    """
    if C < 1:
        raise ConfigError("C must be >= 1")
    topology_instance, chain = build_chain(K)
    engine = Engine(topology_instance.nodes, session_factory(), Fraction(augmentation))
    stream = JobStream()
    phases: list[PhaseRecord] = []
    subroutine_nodes: list[tuple[int, int, int]] = []

    for k in range(K + 1):
        for c in range(C + 1):
            res = run_subroutine(
                engine, chain, k, c, C, stream, strict_precondition=strict_precondition
            )
            phases.append(
                PhaseRecord(
                    "subroutine",
                    res.start_round,
                    res.end_round,
                    {"k": k, "c": c, "node": res.node, "rounds": res.rounds,
                     "precondition_ok": res.precondition_ok},
                )
            )
            subroutine_nodes.append((k, c, res.node))

            start = engine.round + 1
            for it in range(C):
                label = (
                    chain.odd_edge_of(res.node) if it % 2 == 0
                    else chain.even_edge_of(res.node)
                )
                u, v = chain.edge_nodes(label)
                engine.play_round([stream.make(u, v, engine.round + 1)])
            phases.append(PhaseRecord("drain", start, engine.round, {"node": res.node}))

            for it in range(2 * K + 2):
                for kind, labels in (
                    ("spread-even", chain.even_edges()),
                    ("spread-odd", chain.odd_edges()),
                ):
                    start = engine.round + 1
                    for _ in range(C * chain.n):
                        arrivals = [
                            stream.make(*chain.edge_nodes(lab), engine.round + 1)
                            for lab in labels
                        ]
                        engine.play_round(arrivals)
                    phases.append(
                        PhaseRecord(kind, start, engine.round, {"iteration": it})
                    )

    start = engine.round + 1
    guard = engine.round + 8 * len(stream.jobs) + 64
    while not engine.pending_empty():
        if engine.round + 1 > guard:
            raise HorizonExceededError(
                f"scheduler never finished the adversary backlog by round {guard}",
                engine.schedule(),
                engine.history,
            )
        engine.play_round([])
    if engine.round >= start:
        phases.append(PhaseRecord("settle", start, engine.round))

    instance = Instance(topology_instance.nodes, tuple(stream.jobs))
    schedule = engine.schedule()
    report = response_summary(instance, schedule)
    return AdversaryTrace(
        instance=instance,
        schedule=schedule,
        history=engine.history,
        phases=phases,
        subroutine_nodes=subroutine_nodes,
        metrics=report,
    )


# ---------------------------------------------------------------------------
# Fixed hard instances


def gap_instance(C: int) -> Instance:
    """Instance whose interval lower bound stays 2 while the optimal maximum
    response grows with C.

    Four unit nodes a, b, c, d; C segments of 2C rounds each.  Every non-final
    round of a segment carries a job on {a, b}; the first round adds {b, c},
    round C adds {a, d}; the final round is empty.  Total jobs: 2C^2 + C.
    """
    if C < 2:
        raise ConfigError("C must be >= 2")
    a, b, c, d = 0, 1, 2, 3
    jobs: list[tuple] = []
    for segment in range(C):
        base = segment * 2 * C
        for r in range(1, 2 * C):
            jobs.append((a, b, 1, base + r))
            if r == 1:
                jobs.append((b, c, 1, base + 1))
            if r == C:
                jobs.append((a, d, 1, base + C))
    return make_instance([1, 1, 1, 1], jobs)


def propalloc_avg_instance(k: int) -> Instance:
    """k unit jobs plus one job of demand k^2, all on one unit hub in round 1.

    Every job's other endpoint is its own dummy node with capacity k^2, so
    only the hub ever binds.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    M = k * k
    caps = [1] + [M] * (k + 1)
    jobs = [(0, 1 + i, 1, 1) for i in range(k)]
    jobs.append((0, k + 1, M, 1))
    return make_instance(caps, jobs)


def propalloc_avg_reference(k: int) -> Schedule:
    """Serve the units one per round, then the big job at full hub rate."""
    from .core import Assignment

    M = k * k
    assignments = [Assignment(i, i + 1, ONE) for i in range(k)]
    for r in range(M):
        assignments.append(Assignment(k, k + 1 + r, Fraction(1, M)))
    return Schedule(tuple(assignments), nonsplitting=False)


def sjf_max_instance(T: int) -> tuple[Instance, Schedule]:
    """Alternating unit pairs on {a,b} (odd rounds) and {c,d} (even rounds)
    for T rounds, plus one demand-2 job on {b, d} released in round 1.

    The reference schedule runs the big job over rounds 1-2 and everything
    else in arrival order, one job per side per round from round 3 on; its
    maximum response is exactly 4.
    """
    if T < 4 or T % 2 != 0:
        raise ConfigError("T must be even and >= 4")
    a, b, c, d = 0, 1, 2, 3
    jobs: list[tuple] = [(b, d, 2, 1)]
    for t in range(1, T + 1):
        pair = (a, b) if t % 2 == 1 else (c, d)
        jobs.append((pair[0], pair[1], 1, t))
        jobs.append((pair[0], pair[1], 1, t))
    inst = make_instance([1, 1, 1, 1], jobs)

    from .core import Assignment

    assignments = [Assignment(0, 1, Fraction(1, 2)), Assignment(0, 2, Fraction(1, 2))]
    ab_ids = [j.id for j in inst.jobs if j.id != 0 and j.endpoints == (a, b)]
    cd_ids = [j.id for j in inst.jobs if j.id != 0 and j.endpoints == (c, d)]
    for position, jid in enumerate(ab_ids):
        assignments.append(Assignment(jid, 3 + position, ONE))
    for position, jid in enumerate(cd_ids):
        assignments.append(Assignment(jid, 3 + position, ONE))
    return inst, Schedule(tuple(assignments), nonsplitting=False)
