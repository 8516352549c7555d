"""Index managers computing the BCI over a virtual network.

Every peer's index is held by ``r`` other peers (its managers). A manager
recomputes its subject's index from the latest values it has heard for the
subject's counterparts, and pushes changes to the managers of those
counterparts. Everything runs on a deterministic virtual clock: one tick per
manager activation.

Schedules
    RoundRobin      activations in fixed (subject, replica) order every sweep
    RandomOrder     activations shuffled every sweep from a seeded RNG
    Synchronous     messages are only delivered at sweep boundaries, so with
                    ``delay_ticks=0`` each sweep is one Jacobi step

A message sent at tick ``t`` with delay ``d`` is stamped ``t + d`` and becomes
visible to activations at ticks strictly after its stamp.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .errors import ReplicationTooLarge
from .ledger import ShareMatrix
from .solver import BciParams, FourDecimalEquality, InfNormTol, bci_entry, neutral_bci, solve


@dataclass(frozen=True)
class ManagerAssignment:
    replication: int
    managers: tuple[tuple[int, ...], ...]  # managers[peer] -> manager ids

    @property
    def n(self) -> int:
        return len(self.managers)

    def managed_by(self, manager: int) -> list[int]:
        return [p for p, ms in enumerate(self.managers) if manager in ms]


def assign_managers(n: int, replication: int, seed: int = 0) -> ManagerAssignment:
    if n < 2:
        raise ValueError(f"need at least 2 peers, got {n}")
    if replication < 1:
        raise ValueError(f"replication must be at least 1, got {replication}")
    if replication > n - 1:
        raise ReplicationTooLarge(
            f"replication {replication} needs {replication} managers besides the peer, "
            f"but only {n - 1} other peers exist")
    rng = random.Random(seed)
    managers = []
    for peer in range(n):
        others = [p for p in range(n) if p != peer]
        managers.append(tuple(sorted(rng.sample(others, replication))))
    return ManagerAssignment(replication, tuple(managers))


# -- messages -------------------------------------------------------------

class Kind(str, enum.Enum):
    QUERY_BCI = "QueryBci"
    BCI_REPLY = "BciReply"
    UPDATE_NOTIFY = "UpdateNotify"
    VOTE_REQUEST = "VoteRequest"
    VOTE_REPLY = "VoteReply"


_CARRIES_VALUE = {Kind.BCI_REPLY, Kind.VOTE_REPLY, Kind.UPDATE_NOTIFY}


@dataclass(frozen=True)
class ManagerMessage:
    kind: Kind
    sender: int
    to: int
    subject: int
    value: float | None
    virtual_time: int

    def __post_init__(self):
        if (self.value is not None) != (self.kind in _CARRIES_VALUE):
            raise ValueError(f"{self.kind.value} must {'' if self.kind in _CARRIES_VALUE else 'not '}carry a value")
        if self.virtual_time < 0:
            raise ValueError("virtual_time must be nonnegative")


class EventQueue:
    """Min-heap of messages keyed by delivery tick; counts every enqueue."""

    def __init__(self):
        self._heap: list[tuple[int, int, ManagerMessage]] = []
        self._seq = 0
        self.enqueued = 0
        self.by_kind: Counter = Counter()
        self.trace: list[ManagerMessage] | None = None

    def push(self, msg: ManagerMessage) -> None:
        heapq.heappush(self._heap, (msg.virtual_time, self._seq, msg))
        self._seq += 1
        self.enqueued += 1
        self.by_kind[msg.kind] += 1
        if self.trace is not None:
            self.trace.append(msg)

    def pop_until(self, tick: int):
        """Yield messages stamped strictly before ``tick``, in stamp order."""
        heap = self._heap
        while heap and heap[0][0] < tick:
            yield heapq.heappop(heap)[2]

    def __len__(self) -> int:
        return len(self._heap)


# -- voting ---------------------------------------------------------------

class Outcome(str, enum.Enum):
    AGREED = "Agreed"
    MAJORITY = "Majority"
    NO_MAJORITY = "NoMajority"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    value: float | None = None
    members: tuple[int, ...] = ()  # managers in the winning group


def resolve_conflict(reports: Sequence[tuple[int, float]], rounding_decimals: int = 6) -> Verdict:
    """Settle replicated reports by strict majority after rounding."""
    if not reports:
        raise ValueError("resolve_conflict needs at least one report")
    groups: dict[float, list[int]] = {}
    for manager, value in reports:
        groups.setdefault(round(value, rounding_decimals), []).append(manager)
    if len(groups) == 1:
        (value, members), = groups.items()
        return Verdict(Outcome.AGREED, value, tuple(members))
    value, members = max(groups.items(), key=lambda kv: len(kv[1]))
    if 2 * len(members) > len(reports):
        return Verdict(Outcome.MAJORITY, value, tuple(members))
    return Verdict(Outcome.NO_MAJORITY)


# -- schedules ------------------------------------------------------------

@dataclass(frozen=True)
class RoundRobin:
    name = "round-robin"


@dataclass(frozen=True)
class RandomOrder:
    seed: int = 0
    name = "random"


@dataclass(frozen=True)
class Synchronous:
    name = "synchronous"


Schedule = Union[RoundRobin, RandomOrder, Synchronous]


@dataclass
class DistRunReport:
    x: tuple[float, ...]
    rounds: int
    messages_total: int
    messages_by_kind: dict[str, int]
    divergence_from_centralized: float
    converged: bool = True
    verdicts: list[Verdict] = field(default_factory=list)
    trace: list[ManagerMessage] | None = None

    def to_dict(self) -> dict:
        return {
            "x": list(self.x),
            "rounds": self.rounds,
            "messages_total": self.messages_total,
            "messages_by_kind": dict(self.messages_by_kind),
            "divergence_from_centralized": self.divergence_from_centralized,
            "converged": self.converged,
            "verdicts": [v.outcome.value for v in self.verdicts],
        }


def trace_csv(messages: Sequence[ManagerMessage]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tick", "kind", "from", "to", "subject", "value"])
    for m in messages:
        w.writerow([m.virtual_time, m.kind.value, m.sender, m.to, m.subject,
                    "" if m.value is None else format(m.value, ".17g")])
    return buf.getvalue()


def _tolerances(params: BciParams) -> tuple[float, float]:
    """(halt threshold, notify threshold) on a single manager's value."""
    rule = params.stopping
    if isinstance(rule, InfNormTol):
        return rule.eps, rule.eps / 10
    assert isinstance(rule, FourDecimalEquality)
    return 5e-5, 5e-6


def run_distributed(ledger: ShareMatrix, params: BciParams, assignment: ManagerAssignment,
                    schedule: Schedule | None = None, delay_ticks: int = 0, *,
                    rounding_decimals: int = 6,
                    byzantine: Mapping[int, float] | None = None,
                    trace: bool = False) -> DistRunReport:
    """Run the index managers to quiescence and read back a consensus vector.

    ``byzantine`` maps a manager id to an offset it adds to every value it
    reports when queried; it does not affect the iteration itself.
    """
    schedule = schedule if schedule is not None else RoundRobin()
    if assignment.n != ledger.n:
        raise ValueError(f"assignment covers {assignment.n} peers, ledger has {ledger.n}")
    if delay_ticks < 0:
        raise ValueError("delay_ticks must be nonnegative")
    byzantine = dict(byzantine or {})
    alpha = params.alpha
    n = ledger.n
    halt_tol, notify_tol = _tolerances(params)
    neutral = neutral_bci(alpha)
    rows, cols = ledger.rows(), ledger.cols()
    counterparts = [ledger.counterparts(i) for i in range(n)]

    # Manager-side state. knowledge[m][j]: latest value m holds for peer j.
    knowledge: list[dict[int, float]] = [dict() for _ in range(n)]
    slots = [(m, i) for i in range(n) for m in assignment.managers[i]]
    stored = {slot: neutral for slot in slots}
    last_sent = dict(stored)
    # Recipients of updates about subject i: managers of i's counterparts.
    audience = [sorted({m for j in counterparts[i] for m in assignment.managers[j]})
                for i in range(n)]

    queue = EventQueue()
    if trace:
        queue.trace = []
    rng = random.Random(schedule.seed) if isinstance(schedule, RandomOrder) else None
    synchronous = isinstance(schedule, Synchronous)

    local: list[tuple[int, int, float]] = []  # own-subject writes held for the barrier

    def deliver(until: int) -> None:
        for m, i, value in local:
            knowledge[m][i] = value
        local.clear()
        for msg in queue.pop_until(until):
            if msg.kind is Kind.UPDATE_NOTIFY:
                knowledge[msg.to][msg.subject] = msg.value

    def dot(adj, known):
        idx, vals = adj
        return math.fsum(v * known.get(j, neutral) for j, v in zip(idx, vals))

    tick = 0
    rounds = 0
    converged = False
    while rounds < params.max_iterations:
        rounds += 1
        order = list(slots)
        if rng is not None:
            rng.shuffle(order)
        if synchronous:
            deliver(tick)
        biggest = 0.0
        for m, i in order:
            if not synchronous:
                deliver(tick)
            known = knowledge[m]
            value = bci_entry(alpha, dot(rows[i], known), dot(cols[i], known))
            biggest = max(biggest, abs(value - stored[(m, i)]))
            stored[(m, i)] = value
            if abs(value - last_sent[(m, i)]) >= notify_tol:
                last_sent[(m, i)] = value
                for to in audience[i]:
                    if to == m:
                        if synchronous:
                            local.append((m, i, value))
                        else:
                            knowledge[m][i] = value
                    else:
                        queue.push(ManagerMessage(Kind.UPDATE_NOTIFY, m, to, i, value,
                                                  tick + delay_ticks))
            tick += 1
        if biggest < halt_tol and len(queue) == 0 and not local:
            converged = True
            break

    # Read-back: a querying peer asks every manager of each subject.
    x = []
    verdicts = []
    for i in range(n):
        querier = (i + 1) % n
        reports = []
        for m in assignment.managers[i]:
            queue.push(ManagerMessage(Kind.QUERY_BCI, querier, m, i, None, tick))
            value = stored[(m, i)] + byzantine.get(m, 0.0)
            queue.push(ManagerMessage(Kind.BCI_REPLY, m, querier, i, value, tick + delay_ticks))
            reports.append((m, value))
        verdict = resolve_conflict(reports, rounding_decimals)
        if verdict.outcome is not Outcome.AGREED:
            reports = []
            for m in assignment.managers[i]:
                queue.push(ManagerMessage(Kind.VOTE_REQUEST, querier, m, i, None, tick))
                value = stored[(m, i)] + byzantine.get(m, 0.0)
                queue.push(ManagerMessage(Kind.VOTE_REPLY, m, querier, i, value, tick + delay_ticks))
                reports.append((m, value))
            verdict = resolve_conflict(reports, rounding_decimals)
        verdicts.append(verdict)
        raw = dict(reports)
        chosen = verdict.members or tuple(m for m, _ in reports)
        if verdict.outcome is Outcome.NO_MAJORITY:
            vals = sorted(raw.values())
            x.append(vals[len(vals) // 2])
        else:
            x.append(math.fsum(raw[m] for m in chosen) / len(chosen))
        tick += 1
    deliver(tick + delay_ticks + 1)

    central = solve(ledger, params).x
    divergence = max(abs(a - b) for a, b in zip(x, central))
    by_kind = {k.value: queue.by_kind.get(k, 0) for k in Kind}
    return DistRunReport(
        x=tuple(x),
        rounds=rounds,
        messages_total=queue.enqueued,
        messages_by_kind=by_kind,
        divergence_from_centralized=divergence,
        converged=converged,
        verdicts=verdicts,
        trace=queue.trace,
    )
