"""Response-time and makespan metrics over a complete schedule.

Response time convention: completion round - release round + 1, so a job
executed in its arrival round scores 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .core import EcfsError, Instance, Schedule, format_frac


class IncompleteScheduleError(EcfsError):
    def __init__(self, job: int, total: Fraction):
        super().__init__(f"job {job} incomplete: total executed fraction {total}")
        self.job = job


@dataclass(frozen=True)
class MetricsReport:
    per_job_completion: dict[int, int]
    per_job_response: dict[int, int]
    max_response: int
    avg_response: Fraction
    lp_sums: dict[int, int]  # p -> sum over jobs of response^p (roots are irrational)
    makespan: int


def completion_times(inst: Instance, sched: Schedule) -> dict[int, int]:
    """First round where each job's cumulative executed fraction reaches 1."""
    out: dict[int, int] = {}
    by_job = sched.by_job()
    for job in inst.jobs:
        total = Fraction(0)
        done = None
        for a in by_job.get(job.id, []):  # (round, job) sorted
            total += a.fraction
            if total >= 1:
                done = a.round
                break
        if done is None:
            raise IncompleteScheduleError(job.id, total)
        out[job.id] = done
    return out


def response_summary(
    inst: Instance, sched: Schedule, p_values: tuple[int, ...] = (1, 2)
) -> MetricsReport:
    completions = completion_times(inst, sched)
    responses = {
        job.id: completions[job.id] - job.release + 1 for job in inst.jobs
    }
    if inst.m == 0:
        return MetricsReport({}, {}, 0, Fraction(0), {p: 0 for p in p_values}, 0)
    max_response = max(responses.values())
    avg = Fraction(sum(responses.values()), inst.m)
    lp = {p: sum(r**p for r in responses.values()) for p in p_values}
    return MetricsReport(
        per_job_completion=completions,
        per_job_response=responses,
        max_response=max_response,
        avg_response=avg,
        lp_sums=lp,
        makespan=max(completions.values()),
    )


CSV_HEADER = (
    "instance,scheduler,params,augmentation,max_response,"
    "avg_response_num,avg_response_den,makespan,lp_p,lp_sum_num,lp_sum_den"
)


def csv_row(
    instance_name: str,
    scheduler: str,
    params: str,
    augmentation: Fraction,
    report: MetricsReport,
    p: int = 2,
) -> str:
    """One metrics row per run; the l_p entry is the exact sum of p-th powers."""
    lp_sum = report.lp_sums.get(p)
    if lp_sum is None:
        raise EcfsError(f"report does not carry p={p}")
    return ",".join(
        [
            instance_name,
            scheduler,
            params,
            format_frac(Fraction(augmentation)),
            str(report.max_response),
            str(report.avg_response.numerator),
            str(report.avg_response.denominator),
            str(report.makespan),
            str(p),
            str(lp_sum),
            "1",
        ]
    )
