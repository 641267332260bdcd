"""Interval lower bound and exhaustive optimal-schedule oracles.

The oracle is deliberately desk-scale: depth-first search over per-round
feasible assignment sets with branch-and-bound, meant for unit instances
with a dozen jobs or short horizons.  It is the independent check for every
derived expectation elsewhere in the repo, so it must never return a wrong
answer: running out of budget raises instead.
"""

from __future__ import annotations

import itertools
import sys
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

from .core import (
    Assignment,
    ConfigError,
    EcfsError,
    Instance,
    Schedule,
)


@dataclass(frozen=True)
class IntervalBound:
    """Worst per-node excess of arriving demand over interval capacity, plus one.

    ``L`` is clamped below at 1 (an instance whose raw value is below 1 can be
    served in the arrival round); ``raw`` preserves the unclamped maximum.
    """

    L: Fraction
    raw: Fraction | None
    witness: tuple[int, int, int] | None  # (node, t1, t2)


def ceil_frac(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def interval_lower_bound(inst: Instance) -> IntervalBound:
    """Exact maximization of per-node interval excess over all round pairs.

    Only rounds in which the node actually receives arrivals can be maximal
    endpoints (widening an interval past them just subtracts), so the scan is
    quadratic in per-node arrival rounds, not in the horizon.
    """
    per_node: dict[int, dict[int, Fraction]] = {}
    for job in inst.jobs:
        for node in job.endpoints:
            per_node.setdefault(node, {}).setdefault(job.release, Fraction(0))
            per_node[node][job.release] += job.demand

    best: Fraction | None = None
    witness: tuple[int, int, int] | None = None
    for node in sorted(per_node):
        cap = inst.capacity(node)
        rounds = sorted(per_node[node])
        demands = [per_node[node][t] for t in rounds]
        prefix = [Fraction(0)]
        for d in demands:
            prefix.append(prefix[-1] + d)
        for a in range(len(rounds)):
            for b in range(a, len(rounds)):
                value = (prefix[b + 1] - prefix[a]) / cap - (rounds[b] - rounds[a] + 1) + 1
                if best is None or value > best:
                    best = value
                    witness = (node, rounds[a], rounds[b])

    if best is None:
        return IntervalBound(Fraction(1), None, None)
    return IntervalBound(max(best, Fraction(1)), best, witness)


class BudgetExceededError(EcfsError):
    def __init__(self, explored: int):
        super().__init__(f"oracle budget exhausted after {explored} states")
        self.explored = explored


class OracleInfeasibleError(EcfsError):
    """No complete schedule exists within the requested horizon."""


@dataclass(frozen=True)
class OracleResult:
    objective: str  # max_response | avg_response
    value: Fraction
    schedule: Schedule
    explored: int
    note: str = ""


_INF = float("inf")


def _maximal_subsets_for_component(
    classes: list[tuple[tuple[int, int, int, Fraction], int]],
    capacities: dict[int, Fraction],
) -> list[tuple[int, ...]]:
    """All capacity-feasible count vectors that cannot take one more job.

    ``classes`` holds ((u, v, release, demand), available_count) for one
    conflict component; jobs inside a class are interchangeable.  Counts are
    assigned largest-first so the first vector emitted is the greedy maximum.
    """
    out: list[tuple[int, ...]] = []
    counts = [0] * len(classes)

    def feasible_one_more(idx: int, residual: dict[int, Fraction]) -> bool:
        (u, v, _, d), avail = classes[idx]
        return counts[idx] < avail and residual[u] >= d and residual[v] >= d

    def rec(idx: int, residual: dict[int, Fraction]) -> None:
        if idx == len(classes):
            if not any(feasible_one_more(i, residual) for i in range(len(classes))):
                out.append(tuple(counts))
            return
        (u, v, _, d), avail = classes[idx]
        max_take = min(avail, int(residual[u] // d), int(residual[v] // d))
        for take in range(max_take, -1, -1):
            if take:
                residual[u] -= d * take
                residual[v] -= d * take
            counts[idx] = take
            rec(idx + 1, residual)
            if take:
                residual[u] += d * take
                residual[v] += d * take
        counts[idx] = 0

    rec(0, dict(capacities))
    return out


def _conflict_components(
    class_keys: list[tuple[int, int, int, Fraction]]
) -> list[list[int]]:
    """Group class indices whose node sets touch; disjoint groups never interact."""
    parent = list(range(len(class_keys)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    by_node: dict[int, int] = {}
    for idx, (u, v, _, _) in enumerate(class_keys):
        for node in (u, v):
            if node in by_node:
                ra, rb = find(by_node[node]), find(idx)
                if ra != rb:
                    parent[rb] = ra
            else:
                by_node[node] = idx
    groups: dict[int, list[int]] = {}
    for idx in range(len(class_keys)):
        groups.setdefault(find(idx), []).append(idx)
    return [groups[r] for r in sorted(groups)]


def oracle_optimal(
    inst: Instance,
    objective: str = "max_response",
    nonsplitting: bool = True,
    budget: int = 10**6,
    horizon: int | None = None,
    grid_refinement: int = 1,
) -> OracleResult:
    """Exhaustive search for an optimal schedule at augmentation 1.

    Nonsplitting search is exact: any schedule can be massaged round by round
    into one whose per-round selection is maximal without delaying anything,
    so only maximal feasible selections are branched on.  States that reach
    the same (round, pending multiset) with no better partial cost are pruned.

    Splittable search restricts fractions to a grid (lcm of demand
    denominators times ``grid_refinement``) and is exact only for that grid;
    the result carries a note saying so.
    """
    if objective not in ("max_response", "avg_response"):
        raise ConfigError(f"unknown objective {objective!r}")
    if inst.m == 0:
        return OracleResult(objective, Fraction(0), Schedule((), nonsplitting), 0)
    if horizon is None:
        horizon = inst.last_release + inst.m
    if nonsplitting:
        for job in inst.jobs:
            if job.demand > min(inst.capacity(job.u), inst.capacity(job.v)):
                raise ConfigError(
                    f"nonsplitting oracle: job {job.id} demand exceeds endpoint capacity"
                )
        return _search(inst, objective, budget, horizon, grid=None)
    grid = grid_refinement * lcm(*(job.demand.denominator for job in inst.jobs))
    return _search(inst, objective, budget, horizon, grid=grid)


def _search(
    inst: Instance, objective: str, budget: int, horizon: int, grid: int | None
) -> OracleResult:
    capacities = {nd.id: nd.capacity for nd in inst.nodes}
    releases = sorted(job.release for job in inst.jobs)
    arrivals: dict[int, list[int]] = {}
    for job in inst.jobs:
        arrivals.setdefault(job.release, []).append(job.id)
    jobs = inst.jobs
    is_max = objective == "max_response"

    explored = 0
    best_cost: int | float = _INF
    best_assignments: list[Assignment] | None = None
    # (round, canonical pending) -> smallest partial cost that reached it
    memo: dict[tuple, int] = {}
    path: list[list[Assignment]] = []

    def arrivals_after(t: int) -> int:
        return len(releases) - bisect_right(releases, t)

    def next_release(t: int) -> int | None:
        idx = bisect_right(releases, t)
        return releases[idx] if idx < len(releases) else None

    # pending: dict class_key -> list of (jid, remaining); remaining is 1 for
    # nonsplitting and a Fraction otherwise.  Jobs in a class are interchangeable.
    def class_key(jid: int, remaining: Fraction):
        job = jobs[jid]
        u, v = min(job.u, job.v), max(job.u, job.v)
        if grid is None:
            return (u, v, job.release, job.demand)
        return (u, v, job.release, job.demand, remaining)

    def canon(pending: dict) -> tuple:
        return tuple(sorted((key, len(members)) for key, members in pending.items()))

    def forced_bound(pending: dict, t: int, partial) -> float:
        if is_max:
            worst = partial
            for key in pending:
                worst = max(worst, t - key[2] + 1)
            return worst
        total = partial
        for key, members in pending.items():
            total += (t - key[2] + 1) * len(members)
        return total + arrivals_after(t)

    def record_incumbent(partial) -> None:
        nonlocal best_cost, best_assignments
        if partial < best_cost:
            best_cost = partial
            best_assignments = [a for per_round in path for a in per_round]

    def merge_arrivals(pending: dict, t: int) -> dict:
        merged = {key: list(members) for key, members in pending.items()}
        for jid in arrivals.get(t, []):
            merged.setdefault(class_key(jid, Fraction(1)), []).append((jid, Fraction(1)))
        return merged

    def step(t: int, pending: dict, partial) -> None:
        nonlocal explored
        explored += 1
        if explored > budget:
            raise BudgetExceededError(explored)

        if not pending:
            nxt = next_release(t - 1)
            if nxt is None:
                record_incumbent(partial)
                return
            step(nxt, merge_arrivals({}, nxt), partial)
            return

        if t > horizon:
            return
        if forced_bound(pending, t, partial) >= best_cost:
            return
        key = (t, canon(pending))
        prev = memo.get(key)
        if prev is not None and prev <= partial:
            return
        memo[key] = partial

        if grid is None:
            _branch_unit(t, pending, partial)
        else:
            _branch_grid(t, pending, partial)

    def _branch_unit(t: int, pending: dict, partial) -> None:
        keys = sorted(pending)
        comp = _conflict_components(keys)
        per_component: list[list[tuple[int, ...]]] = []
        for group in comp:
            classes = [(keys[i], len(pending[keys[i]])) for i in group]
            per_component.append(_maximal_subsets_for_component(classes, capacities))
        for choice in itertools.product(*per_component):
            assignments: list[Assignment] = []
            new_partial = partial
            new_pending = {key: list(members) for key, members in pending.items()}
            for group, vector in zip(comp, choice):
                for pos, take in zip(group, vector):
                    key = keys[pos]
                    for _ in range(take):
                        jid, _rem = new_pending[key].pop(0)
                        assignments.append(Assignment(jid, t, Fraction(1)))
                        response = t - jobs[jid].release + 1
                        new_partial = (
                            max(new_partial, response) if is_max else new_partial + response
                        )
                    if not new_pending[key]:
                        del new_pending[key]
            if new_partial >= best_cost:
                continue
            path.append(assignments)
            step(t + 1, merge_arrivals(new_pending, t + 1), new_partial)
            path.pop()

    def _branch_grid(t: int, pending: dict, partial) -> None:
        # Flatten to one job list; enumerate grid allocations largest-first,
        # keeping only allocations where no job could take one more grid step.
        entries = []
        for key in sorted(pending):
            entries.extend(pending[key])
        entries.sort()
        quantum = Fraction(1, grid)

        def rec(idx: int, residual: dict[int, Fraction], alloc: list[Fraction]) -> None:
            if idx == len(entries):
                for (jid, rem), got in zip(entries, alloc):
                    job = jobs[jid]
                    extra = min(
                        rem - got,
                        residual[job.u] / job.demand,
                        residual[job.v] / job.demand,
                    )
                    if extra >= quantum:
                        return  # not maximal
                _apply_grid(t, alloc, partial)
                return
            jid, rem = entries[idx]
            job = jobs[jid]
            cap_frac = min(residual[job.u], residual[job.v]) / job.demand
            max_steps = min(int(rem / quantum), int(cap_frac / quantum))
            for steps in range(max_steps, -1, -1):
                frac = quantum * steps
                residual[job.u] -= job.demand * frac
                residual[job.v] -= job.demand * frac
                alloc.append(frac)
                rec(idx + 1, residual, alloc)
                alloc.pop()
                residual[job.u] += job.demand * frac
                residual[job.v] += job.demand * frac

        def _apply_grid(t_: int, alloc: list[Fraction], partial_) -> None:
            assignments: list[Assignment] = []
            new_partial = partial_
            new_pending: dict = {}
            for (jid, rem), got in zip(entries, alloc):
                left = rem - got
                if got > 0:
                    assignments.append(Assignment(jid, t_, got))
                if left == 0:
                    response = t_ - jobs[jid].release + 1
                    new_partial = (
                        max(new_partial, response) if is_max else new_partial + response
                    )
                else:
                    new_pending.setdefault(class_key(jid, left), []).append((jid, left))
            if new_partial >= best_cost:
                return
            path.append(assignments)
            step(t_ + 1, merge_arrivals(new_pending, t_ + 1), new_partial)
            path.pop()

        rec(0, dict(capacities), [])

    first = min(releases)
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * horizon + 10_000))
    try:
        step(first, merge_arrivals({}, first), 0)
    finally:
        sys.setrecursionlimit(old_limit)

    if best_assignments is None:
        raise OracleInfeasibleError(
            f"no complete schedule within horizon {horizon}"
        )
    schedule = Schedule(tuple(best_assignments), nonsplitting=grid is None)
    if is_max:
        value = Fraction(best_cost)
    else:
        value = Fraction(best_cost, inst.m)
    note = "" if grid is None else f"grid resolution 1/{grid}; exact for that grid only"
    return OracleResult(objective, value, schedule, explored, note)
