"""Deterministic discrete-event core and the fluid-rate bandwidth allocator.

Time is integer milliseconds. Events at equal times dequeue in schedule
order via a monotonically increasing sequence counter, so a run is a pure
function of the scheduled inputs.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import count
from typing import Callable, Dict, Iterable, List, Mapping, Tuple

from .util import ZERO


class EventKind(str, Enum):
    FLOW_ARRIVAL = "FlowArrival"
    FLOW_DEPARTURE = "FlowDeparture"
    LINK_STATE_CHANGE = "LinkStateChange"
    NODE_STATE_CHANGE = "NodeStateChange"
    HANDOVER_TRIGGER = "HandoverTrigger"
    METRICS_TICK = "MetricsTick"
    # Fog <-> cloud control-plane exchanges (state sync) ride the event
    # queue like everything else instead of blocking calls.
    CONTROL_MESSAGE = "ControlMessage"


@dataclass(frozen=True)
class Event:
    time: int
    seq: int
    kind: EventKind
    subjects: Tuple[str, ...] = ()
    payload: object = field(default=None, compare=False)

    def trace_row(self) -> str:
        return f"{self.time}\t{self.seq}\t{self.kind.value}\t{';'.join(self.subjects) or '-'}"


class SchedulingInPast(Exception):
    pass


class GbrOvercommit(Exception):
    def __init__(self, link_id: str, reserved: Fraction, capacity: Fraction):
        super().__init__(f"link {link_id}: guaranteed rates {reserved} exceed capacity {capacity}")
        self.link_id = link_id


class Engine:
    """Single-threaded event loop; one instance per scenario run."""

    def __init__(self):
        self._now = 0
        self._heap: List[Tuple[int, int, Event]] = []
        self._seq = count()
        self._handlers: Dict[EventKind, List[Callable[[Event], None]]] = {}
        self.trace: List[Event] = []

    def now(self) -> int:
        return self._now

    def pending(self) -> int:
        return len(self._heap)

    def schedule(self, time: int, kind: EventKind, subjects: Tuple[str, ...] = (), payload=None) -> Event:
        if time < self._now:
            raise SchedulingInPast(f"cannot schedule {kind.value} at {time}, now is {self._now}")
        event = Event(time=int(time), seq=next(self._seq), kind=kind, subjects=tuple(subjects), payload=payload)
        heapq.heappush(self._heap, (event.time, event.seq, event))
        return event

    def on(self, kind: EventKind, handler: Callable[[Event], None]) -> None:
        self._handlers.setdefault(kind, []).append(handler)

    def run_until(self, t: int) -> None:
        if t < self._now:
            raise SchedulingInPast(f"cannot run backwards to {t}, now is {self._now}")
        while self._heap and self._heap[0][0] <= t:
            _, _, event = heapq.heappop(self._heap)
            self._now = event.time
            self.trace.append(event)
            for handler in self._handlers.get(event.kind, ()):
                handler(event)
        self._now = t


# ---------------------------------------------------------------------------
# fluid link sharing


@dataclass(frozen=True)
class FlowDemand:
    """One flow's view for the allocator: its links, demand, and guarantee."""

    flow_id: str
    links: Tuple[str, ...]
    demand: Fraction
    gbr: Fraction = ZERO


def recompute_fair_shares(
    flows: Iterable[FlowDemand], capacity: Mapping[str, Fraction]
) -> Dict[str, Fraction]:
    """Progressive-filling max-min allocation over residual capacities.

    Guaranteed-rate flows receive exactly their guarantee; the remaining
    capacity is filled level by level across best-effort flows, freezing a
    flow when it reaches its demand or saturates a link. Exact Fraction
    arithmetic: conservation holds with no tolerance.
    """
    ordered = sorted(flows, key=lambda f: f.flow_id)
    residual: Dict[str, Fraction] = {}
    alloc: Dict[str, Fraction] = {}

    for flow in ordered:
        if flow.gbr > 0:
            alloc[flow.flow_id] = flow.gbr
            for lid in flow.links:
                residual[lid] = residual.get(lid, capacity[lid]) - flow.gbr
    for lid, left in residual.items():
        if left < 0:
            raise GbrOvercommit(lid, capacity[lid] - left, capacity[lid])

    active: Dict[str, FlowDemand] = {}
    for flow in ordered:
        if flow.gbr > 0:
            continue
        if flow.demand <= 0:
            alloc[flow.flow_id] = ZERO
            continue
        if not flow.links:
            # unconstrained (e.g. zero-hop local path)
            alloc[flow.flow_id] = flow.demand
            continue
        alloc[flow.flow_id] = ZERO
        active[flow.flow_id] = flow
        for lid in flow.links:
            residual.setdefault(lid, capacity[lid])

    users: Dict[str, set] = {}
    for fid, flow in active.items():
        for lid in flow.links:
            users.setdefault(lid, set()).add(fid)

    def freeze(fid: str) -> None:
        for lid in active[fid].links:
            users[lid].discard(fid)
        del active[fid]

    # Flows pinned at zero by an already-saturated link freeze first.
    for fid in sorted(active):
        if any(residual[l] <= 0 for l in active[fid].links):
            freeze(fid)

    while active:
        step = None
        for fid, flow in active.items():
            remaining = flow.demand - alloc[fid]
            if step is None or remaining < step:
                step = remaining
        for lid, fids in users.items():
            if fids:
                share = residual[lid] / len(fids)
                if share < step:
                    step = share
        saturated = []
        for lid, fids in users.items():
            if fids:
                residual[lid] -= step * len(fids)
                if residual[lid] <= 0:
                    saturated.append(lid)
        done = set()
        for fid, flow in active.items():
            alloc[fid] += step
            if alloc[fid] >= flow.demand:
                done.add(fid)
        for lid in saturated:
            done.update(users[lid])
        for fid in sorted(done):
            freeze(fid)

    return alloc
