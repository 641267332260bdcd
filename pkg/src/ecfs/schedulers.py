"""Online scheduler sessions.

Each session is single-owner mutable state with a ``step(state, arrivals)``
method returning this round's (job id, fraction) list.  Output is a pure
function of parameters and arrival history; the engine validates and applies.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Sequence

from .core import ConfigError, Engine, Job, Node, SimState
from .graph import MultiGraph, two_factor_decomposition


class ProportionalAllocation:
    """Spread each node's capacity over the full demands of its pending jobs.

    Every pending job receives a (1 + epsilon) multiple of its bottleneck
    share min_i capacity_i / (sum of pending full demands at i), capped at
    its remaining fraction.  Needs augmentation 1 + epsilon.  epsilon = 0 is
    accepted for experiments; no response-time guarantee applies there.
    """

    name = "propalloc"
    nonsplitting = False
    requires_unit = False

    def __init__(self, epsilon: Fraction):
        epsilon = Fraction(epsilon)
        if epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        self.epsilon = epsilon
        self.augmentation = 1 + epsilon

    @property
    def params_str(self) -> str:
        return f"eps={self.epsilon}"

    def step(self, state: SimState, arrivals: Sequence[Job]) -> list[tuple[int, Fraction]]:
        out = []
        factor = 1 + self.epsilon
        for jid in state.pending_ids():
            job = state.jobs[jid]
            share = min(
                state.capacity(i) / state.pending_full_demand(i) for i in job.endpoints
            )
            frac = min(factor * share, state.remaining[jid])
            out.append((jid, frac))
        return out


class BatchDecomposition:
    """Collect pending unit jobs, two-factor them, run k factors per round.

    Jobs arriving while the factor queue drains wait in the collection set
    until the queue empties.  Needs augmentation 2k; unit instances only.
    """

    name = "batch"
    nonsplitting = True
    requires_unit = True

    def __init__(self, k: int):
        if k not in (1, 2):
            raise ConfigError("batch parameter k must be 1 or 2")
        self.k = k
        self.augmentation = Fraction(2 * k)
        self.collected: list[Job] = []  # pending, not currently being executed
        self.queue: deque[tuple[int, ...]] = deque()  # remaining factors
        self.decompositions = 0

    @property
    def params_str(self) -> str:
        return f"k={self.k}"

    def step(self, state: SimState, arrivals: Sequence[Job]) -> list[tuple[int, Fraction]]:
        for job in arrivals:
            if job.demand != 1:
                raise ConfigError("batch decomposition requires unit demands")
        self.collected.extend(arrivals)
        if not self.queue:
            if self.collected:
                tf = two_factor_decomposition(MultiGraph.from_jobs(self.collected))
                self.queue.extend(tuple(sorted(f)) for f in tf.factors)
                self.decompositions += 1
            self.collected = []
        out: list[tuple[int, Fraction]] = []
        for _ in range(min(self.k, len(self.queue))):
            for jid in self.queue.popleft():
                out.append((jid, Fraction(1)))
        return out


class FifoMaximalMatching:
    """Admit pending unit jobs in release order while both endpoints have room.

    Admission is greedy and maximal: a job is deferred only when one of its
    endpoints already carries augmentation * capacity load this round.
    Default augmentation 2 + k; an explicit override (e.g. 1 for
    no-augmentation experiments) replaces it in the admission test.
    """

    name = "fifo"
    nonsplitting = True
    requires_unit = True

    def __init__(self, k: int = 1, augmentation: Fraction | None = None):
        if k < 1:
            raise ConfigError("fifo parameter k must be a positive integer")
        self.k = k
        self.augmentation = Fraction(augmentation) if augmentation is not None else Fraction(2 + k)
        if self.augmentation < 1:
            raise ConfigError("augmentation must be >= 1")

    @property
    def params_str(self) -> str:
        if self.augmentation != 2 + self.k:
            return f"k={self.k};aug={self.augmentation}"
        return f"k={self.k}"

    def step(self, state: SimState, arrivals: Sequence[Job]) -> list[tuple[int, Fraction]]:
        for job in arrivals:
            if job.demand != 1:
                raise ConfigError("fifo maximal matching requires unit demands")
        order = sorted(
            state.pending_ids(), key=lambda jid: (state.jobs[jid].release, jid)
        )
        load: dict[int, Fraction] = {}
        out: list[tuple[int, Fraction]] = []
        for jid in order:
            job = state.jobs[jid]
            u, v = job.endpoints
            if (
                load.get(u, 0) + 1 <= self.augmentation * state.capacity(u)
                and load.get(v, 0) + 1 <= self.augmentation * state.capacity(v)
            ):
                out.append((jid, Fraction(1)))
                load[u] = load.get(u, 0) + 1
                load[v] = load.get(v, 0) + 1
        return out


class ShortestJobFirst:
    """Water-fill augmented capacity over pending jobs, smallest remaining first.

    Ordering key is (remaining demand, release, id); each job takes as much
    of both endpoints' leftover capacity as it can.  Default augmentation
    2 + epsilon.
    """

    name = "sjf"
    nonsplitting = False
    requires_unit = False

    def __init__(self, epsilon: Fraction = Fraction(1), augmentation: Fraction | None = None):
        epsilon = Fraction(epsilon)
        if epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        self.epsilon = epsilon
        self.augmentation = Fraction(augmentation) if augmentation is not None else 2 + epsilon
        if self.augmentation < 1:
            raise ConfigError("augmentation must be >= 1")

    @property
    def params_str(self) -> str:
        if self.augmentation != 2 + self.epsilon:
            return f"eps={self.epsilon};aug={self.augmentation}"
        return f"eps={self.epsilon}"

    def step(self, state: SimState, arrivals: Sequence[Job]) -> list[tuple[int, Fraction]]:
        order = sorted(
            state.pending_ids(),
            key=lambda jid: (
                state.jobs[jid].demand * state.remaining[jid],
                state.jobs[jid].release,
                jid,
            ),
        )
        leftover: dict[int, Fraction] = {}
        out: list[tuple[int, Fraction]] = []
        for jid in order:
            job = state.jobs[jid]
            u, v = job.endpoints
            for node in (u, v):
                if node not in leftover:
                    leftover[node] = self.augmentation * state.capacity(node)
            frac = min(
                state.remaining[jid],
                leftover[u] / job.demand,
                leftover[v] / job.demand,
            )
            if frac > 0:
                out.append((jid, frac))
                leftover[u] -= job.demand * frac
                leftover[v] -= job.demand * frac
        return out


class HybridMaxAvg:
    """Run proportional allocation and shortest-job-first side by side.

    Two virtual sessions receive identical arrivals and keep their own
    remaining fractions; the real assignment for a job is the sum of its two
    virtual assignments capped at the real remainder.  Needs augmentation
    (1 + epsilon1) + (2 + epsilon2).
    """

    name = "hybrid"
    nonsplitting = False
    requires_unit = False

    def __init__(self, epsilon1: Fraction, epsilon2: Fraction):
        self.epsilon1 = Fraction(epsilon1)
        self.epsilon2 = Fraction(epsilon2)
        self.augmentation = 3 + self.epsilon1 + self.epsilon2
        self.prop_engine: Engine | None = None
        self.sjf_engine: Engine | None = None

    @property
    def params_str(self) -> str:
        return f"eps1={self.epsilon1};eps2={self.epsilon2}"

    def _ensure_engines(self, nodes: tuple[Node, ...]) -> None:
        if self.prop_engine is None:
            prop = ProportionalAllocation(self.epsilon1)
            sjf = ShortestJobFirst(self.epsilon2)
            self.prop_engine = Engine(nodes, prop, prop.augmentation)
            self.sjf_engine = Engine(nodes, sjf, sjf.augmentation)

    def step(self, state: SimState, arrivals: Sequence[Job]) -> list[tuple[int, Fraction]]:
        self._ensure_engines(state.nodes)
        combined: dict[int, Fraction] = {}
        for engine in (self.prop_engine, self.sjf_engine):
            record = engine.play_round(arrivals)
            for a in record.assignments:
                combined[a.job] = combined.get(a.job, Fraction(0)) + a.fraction
        out: list[tuple[int, Fraction]] = []
        for jid in sorted(combined):
            if not state.is_pending(jid):
                continue  # already complete for real, virtual copies still running
            frac = min(combined[jid], state.remaining[jid])
            if frac > 0:
                out.append((jid, frac))
        return out


ALGORITHMS = ("propalloc", "batch", "fifo", "sjf", "hybrid")


def make_session(
    alg: str,
    *,
    epsilon: Fraction | None = None,
    epsilon2: Fraction | None = None,
    k: int | None = None,
    augmentation: Fraction | None = None,
    instance=None,
):
    """Build a scheduler session, checking parameter/instance compatibility."""
    if alg == "propalloc":
        session = ProportionalAllocation(epsilon if epsilon is not None else Fraction(1))
    elif alg == "batch":
        session = BatchDecomposition(k if k is not None else 1)
    elif alg == "fifo":
        session = FifoMaximalMatching(k if k is not None else 1, augmentation=augmentation)
    elif alg == "sjf":
        session = ShortestJobFirst(
            epsilon if epsilon is not None else Fraction(1), augmentation=augmentation
        )
    elif alg == "hybrid":
        session = HybridMaxAvg(
            epsilon if epsilon is not None else Fraction(1),
            epsilon2 if epsilon2 is not None else Fraction(1),
        )
    else:
        raise ConfigError(f"unknown algorithm {alg!r}")
    if instance is not None and session.requires_unit and not instance.unit:
        raise ConfigError(f"{alg} requires unit demands and capacities")
    return session
