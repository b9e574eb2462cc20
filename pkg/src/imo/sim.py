"""Discrete-time simulation of provider-owned GPU nodes running jobs.

One tick is one second. Jobs are divisible: each tick, idle GPUs flow
to pending jobs in FIFO order (submission tick, then job id), but a job
never holds more GPUs in a tick than it still needs, so metered
contributions conserve exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import LedgerUnavailable, UnfinishedSimulation, ValidationError


@dataclass(frozen=True)
class SimNode:
    id: str
    owner: str
    gpu_count: int


@dataclass(frozen=True)
class SimJob:
    id: str
    submitter: str
    model_ref: str
    gpu_seconds_required: int
    submitted_at_tick: int = 0


@dataclass
class SimReport:
    makespan_ticks: int
    contributions: dict[str, int]
    completion_ticks: dict[str, int]
    utilization: float
    busy_gpu_seconds: int
    unfinished: tuple[str, ...] = ()
    progress: dict[str, int] = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "busy_gpu_seconds": self.busy_gpu_seconds,
            "completion_ticks": dict(sorted(self.completion_ticks.items())),
            "contributions": dict(sorted(self.contributions.items())),
            "makespan_ticks": self.makespan_ticks,
            "progress": dict(sorted(self.progress.items())),
            "unfinished": list(self.unfinished),
            "utilization": self.utilization,
        }


def parse_sim_config(doc: dict) -> tuple[list[SimNode], list[SimJob], int | None]:
    nodes = [SimNode(id=str(n["id"]), owner=str(n["owner"]), gpu_count=int(n["gpu_count"]))
             for n in doc.get("nodes", [])]
    jobs = [SimJob(id=str(j["id"]), submitter=str(j["submitter"]),
                   model_ref=str(j.get("model_ref", "")),
                   gpu_seconds_required=int(j["gpu_seconds_required"]),
                   submitted_at_tick=int(j.get("submitted_at_tick", 0)))
            for j in doc.get("jobs", [])]
    return nodes, jobs, doc.get("max_ticks")


def run_simulation(nodes: list[SimNode], jobs: list[SimJob],
                   max_ticks: int | None = None) -> SimReport:
    if not nodes:
        raise ValidationError("at least one node required")
    for node in nodes:
        if node.gpu_count < 1:
            raise ValidationError(f"node {node.id} must have >= 1 GPU")
    seen = set()
    for job in jobs:
        if job.gpu_seconds_required < 1:
            raise ValidationError(f"job {job.id} must require >= 1 gpu-second")
        if job.submitted_at_tick < 0:
            raise ValidationError(f"job {job.id} has negative submission tick")
        if job.id in seen:
            raise ValidationError(f"duplicate job id {job.id}")
        seen.add(job.id)

    # Owner of each GPU slot, in (node id, slot) order: deterministic.
    gpu_owners = [node.owner for node in sorted(nodes, key=lambda n: n.id)
                  for _ in range(node.gpu_count)]
    total_gpus = len(gpu_owners)

    progress = {job.id: 0 for job in jobs}
    completion: dict[str, int] = {}
    contributions: dict[str, int] = {}
    busy = 0
    tick = 0

    def report(unfinished=()) -> SimReport:
        makespan = tick
        denom = total_gpus * makespan
        return SimReport(
            makespan_ticks=makespan,
            contributions=dict(contributions),
            completion_ticks=dict(completion),
            utilization=busy / denom if denom else 0.0,
            busy_gpu_seconds=busy,
            unfinished=tuple(sorted(unfinished)),
            progress=dict(progress),
        )

    while True:
        incomplete = [j for j in jobs if j.id not in completion]
        if not incomplete:
            return report()
        if max_ticks is not None and tick >= max_ticks:
            raise UnfinishedSimulation([j.id for j in incomplete],
                                       report(unfinished=[j.id for j in incomplete]))
        pending = sorted((j for j in incomplete if j.submitted_at_tick <= tick),
                         key=lambda j: (j.submitted_at_tick, j.id))
        slot = 0
        for job in pending:
            if slot >= total_gpus:
                break
            need = job.gpu_seconds_required - progress[job.id]
            take = min(need, total_gpus - slot)
            for owner in gpu_owners[slot:slot + take]:
                contributions[owner] = contributions.get(owner, 0) + 1
            progress[job.id] += take
            busy += take
            slot += take
            if progress[job.id] >= job.gpu_seconds_required:
                completion[job.id] = tick + 1
        tick += 1


def post_contributions(report: SimReport, ledger) -> list[int]:
    """One ledger contribution record per owner with positive gpu-seconds."""
    if ledger is None or getattr(ledger, "closed", False):
        raise LedgerUnavailable("no ledger handle")
    from .ledger import Contribution

    indices = []
    for account in sorted(report.contributions):
        seconds = report.contributions[account]
        if seconds <= 0:
            continue
        record = ledger.append(Contribution(account=account, gpu_seconds=seconds))
        indices.append(record.index)
    return indices
