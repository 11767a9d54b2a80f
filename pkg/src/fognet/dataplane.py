"""Forwarding state, mesh routing and the fog service functions.

Holds the runtime overlay on an immutable topology: link/node health, the
per-node flow tables, guaranteed-rate reservations and current fluid
allocations, plus the fog-resident DHCP pool and LRU content cache.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Set, Tuple

from .engine import FlowDemand, recompute_fair_shares
from .topology import Link, LinkClass, LinkState, Topology
from .util import ZERO


class RouteKind(str, Enum):
    MACRO = "Macro"
    WLAN_VIA_MIDDLE_MILE = "WlanViaMiddleMile"
    INTRA_FOG_LOCAL = "IntraFogLocal"
    CLOUD_BOUND = "CloudBound"


class DataplaneError(Exception):
    def __init__(self, message: str, element: str = ""):
        super().__init__(message)
        self.element = element


class LinkDown(DataplaneError):
    pass


class DuplicateFlow(DataplaneError):
    pass


class UnknownFlow(DataplaneError):
    pass


class NoRoute(DataplaneError):
    pass


class CacheNotInstantiated(DataplaneError):
    pass


class PoolExhausted(DataplaneError):
    pass


class NotAuthenticated(DataplaneError):
    pass


@dataclass(frozen=True)
class FlowPath:
    """Installed hop sequence: hops[i] = (node, outgoing link)."""

    flow_id: str
    src: str
    dst: str
    hops: Tuple[Tuple[str, str], ...]
    rat_used: RouteKind

    def links(self) -> Tuple[str, ...]:
        return tuple(lid for _, lid in self.hops)

    def nodes(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.hops) + (self.dst,)


@dataclass
class InstalledFlow:
    flow_id: str
    path: FlowPath
    demand: Fraction
    gbr: Fraction
    slice_id: Optional[str]
    app_class: str
    start_ms: int
    latency_ms: float
    spec: object = None  # originating FlowSpec, when controller-driven
    links: Tuple[str, ...] = ()  # cached from path; hot in the allocator

    def __post_init__(self):
        self.links = self.path.links()


class FlowTables:
    """Per-node forwarding entries: node -> flow -> (next-hop link, slice)."""

    def __init__(self):
        self._tables: Dict[str, Dict[str, Tuple[str, Optional[str]]]] = {}

    def install(self, path: FlowPath, slice_id: Optional[str]) -> None:
        for node, link in path.hops:
            self._tables.setdefault(node, {})[path.flow_id] = (link, slice_id)

    def remove(self, flow_id: str) -> None:
        for entries in self._tables.values():
            entries.pop(flow_id, None)

    def entries_at(self, node: str) -> Dict[str, Tuple[str, Optional[str]]]:
        return dict(self._tables.get(node, {}))

    def snapshot(self) -> Dict[str, Dict[str, Tuple[str, Optional[str]]]]:
        return {n: dict(e) for n, e in self._tables.items() if e}

    def dump(self) -> str:
        """Stable per-node listing for golden-file comparisons."""
        rows = []
        for node in sorted(self._tables):
            for fid in sorted(self._tables[node]):
                link, slice_id = self._tables[node][fid]
                rows.append(f"{node}\t{fid}\t{link}\t{slice_id or '-'}")
        return "\n".join(rows)


class NetworkState:
    """Mutable runtime state over one topology; engine-loop use only."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.link_up: Dict[str, bool] = {
            lid: link.state == LinkState.UP for lid, link in topology.links.items()
        }
        self.node_up: Dict[str, bool] = {nid: True for nid in topology.nodes}
        self.tables = FlowTables()
        self.flows: Dict[str, InstalledFlow] = {}
        self.alloc: Dict[str, Fraction] = {}
        self._gbr: Dict[str, Fraction] = {}
        self._on_link: Dict[str, Set[str]] = {}
        self._offered: Dict[str, Fraction] = {}
        self._congested: Set[str] = set()

    # -- health ----------------------------------------------------------

    def effective_up(self, link_id: str) -> bool:
        link = self.topology.links[link_id]
        return self.link_up[link_id] and self.node_up[link.a] and self.node_up[link.b]

    def set_link_state(self, link_id: str, up: bool) -> None:
        self.link_up[link_id] = up

    def set_node_state(self, node_id: str, up: bool) -> None:
        self.node_up[node_id] = up

    # -- reservations and load --------------------------------------------

    def gbr_reserved(self, link_id: str) -> Fraction:
        return self._gbr.get(link_id, ZERO)

    def admission_residual(self, link_id: str) -> Fraction:
        return self.topology.links[link_id].capacity - self.gbr_reserved(link_id)

    def be_demand(self, link_id: str) -> Fraction:
        total = ZERO
        for fid in self._on_link.get(link_id, ()):
            flow = self.flows[fid]
            if flow.gbr == 0:
                total += flow.demand
        return total

    def offered_load(self, link_id: str) -> Fraction:
        return self.gbr_reserved(link_id) + self.be_demand(link_id)

    def flows_on_link(self, link_id: str) -> List[str]:
        return sorted(self._on_link.get(link_id, ()))

    # -- install / remove --------------------------------------------------

    def install_flow(self, flow: InstalledFlow) -> None:
        if flow.flow_id in self.flows:
            raise DuplicateFlow(f"flow {flow.flow_id} already installed", flow.flow_id)
        for lid in flow.links:
            if not self.effective_up(lid):
                raise LinkDown(f"link {lid} is down", lid)
        self.flows[flow.flow_id] = flow
        self.tables.install(flow.path, flow.slice_id)
        want = flow.gbr if flow.gbr > 0 else flow.demand
        for lid in flow.links:
            self._on_link.setdefault(lid, set()).add(flow.flow_id)
            if flow.gbr > 0:
                self._gbr[lid] = self._gbr.get(lid, ZERO) + flow.gbr
            load = self._offered.get(lid, ZERO) + want
            self._offered[lid] = load
            if load > self.topology.links[lid].capacity:
                self._congested.add(lid)

    def remove_flow(self, flow_id: str) -> InstalledFlow:
        flow = self.flows.pop(flow_id, None)
        if flow is None:
            raise UnknownFlow(f"flow {flow_id} not installed", flow_id)
        self.tables.remove(flow_id)
        self.alloc.pop(flow_id, None)
        want = flow.gbr if flow.gbr > 0 else flow.demand
        for lid in flow.links:
            self._on_link.get(lid, set()).discard(flow_id)
            if flow.gbr > 0:
                self._gbr[lid] -= flow.gbr
            load = self._offered[lid] - want
            self._offered[lid] = load
            if lid in self._congested and load <= self.topology.links[lid].capacity:
                self._congested.discard(lid)
        return flow

    # -- allocation ---------------------------------------------------------

    def recompute(self) -> Dict[str, Fraction]:
        # uncongested fast path: every link carries its full offered load
        if not self._congested:
            self.alloc = {
                fid: (f.gbr if f.gbr > 0 else max(f.demand, ZERO)) for fid, f in self.flows.items()
            }
            return self.alloc
        demands = [
            FlowDemand(flow_id=f.flow_id, links=f.links, demand=f.demand, gbr=f.gbr)
            for f in self.flows.values()
        ]
        capacity = {lid: link.capacity for lid, link in self.topology.links.items()}
        self.alloc = recompute_fair_shares(demands, capacity)
        return self.alloc

    def allocated(self, flow_id: str) -> Fraction:
        return self.alloc.get(flow_id, ZERO)

    def link_allocated(self, link_id: str) -> Fraction:
        if not self._congested:
            # fast path: allocation equals offered load everywhere
            return self._offered.get(link_id, ZERO)
        return sum((self.alloc.get(fid, ZERO) for fid in self._on_link.get(link_id, ())), ZERO)


# ---------------------------------------------------------------------------
# routing


def constrained_route(
    net: NetworkState,
    src: str,
    dst: str,
    allow: Callable[[Link], bool],
    min_residual: Fraction = ZERO,
) -> List[Tuple[str, str]]:
    """Minimum-hop route over permitted Up links with enough headroom.

    Ties break toward the smallest lexicographic node-id sequence (then
    smallest link id between the same pair). Raises NoRoute when the
    destination is unreachable.
    """
    if src == dst:
        return []
    topo = net.topology

    if min_residual > 0:

        def usable(link: Link) -> bool:
            return (
                allow(link)
                and net.effective_up(link.id)
                and net.admission_residual(link.id) >= min_residual
            )

    else:

        def usable(link: Link) -> bool:
            return allow(link) and net.effective_up(link.id)

    # Distance-to-destination by BFS, then a greedy lexicographic walk.
    dist = {dst: 0}
    frontier = [dst]
    while frontier:
        nxt = []
        for node in frontier:
            for link in topo.links_at(node):
                if not usable(link):
                    continue
                peer = link.other(node)
                if peer not in dist:
                    dist[peer] = dist[node] + 1
                    nxt.append(peer)
        frontier = nxt
    if src not in dist:
        raise NoRoute(f"no route {src} -> {dst}", src)

    hops: List[Tuple[str, str]] = []
    node = src
    while node != dst:
        remaining = dist[node]
        choices = []
        for link in topo.links_at(node):
            if not usable(link):
                continue
            peer = link.other(node)
            if dist.get(peer) == remaining - 1:
                choices.append((peer, link.id))
        peer, lid = min(choices)
        hops.append((node, lid))
        node = peer
    return hops


def mesh_route(
    net: NetworkState, src: str, dst: str, min_residual: Fraction = ZERO
) -> List[Tuple[str, str]]:
    """Route within one fog's middle-mile graph (MiddleMile + Internal links)."""
    fog = net.topology.fog_of(src)

    def allow(link: Link) -> bool:
        if link.link_class not in (LinkClass.MIDDLE_MILE, LinkClass.INTERNAL):
            return False
        return net.topology.fog_of(link.a) == fog and net.topology.fog_of(link.b) == fog

    return constrained_route(net, src, dst, allow, min_residual)


def reverse_hops(hops: List[Tuple[str, str]], end: str) -> List[Tuple[str, str]]:
    """Reverse a hop list: a walk src->end becomes end->src."""
    nodes = [n for n, _ in hops] + [end]
    links = [l for _, l in hops]
    return [(nodes[i + 1], links[i]) for i in range(len(links) - 1, -1, -1)]


# ---------------------------------------------------------------------------
# fog service functions


class LruCache:
    """Unit-sized-item LRU content cache with hit/miss counters."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = capacity
        self._store: "OrderedDict[str, int]" = OrderedDict()
        self.hits = 0
        self.misses = 0

    @property
    def lookups(self) -> int:
        return self.hits + self.misses

    def peek(self, content_id: str) -> bool:
        """Residency check without touching counters or recency."""
        return content_id in self._store

    def lookup(self, content_id: str, now_ms: int = 0) -> bool:
        if content_id in self._store:
            self._store.move_to_end(content_id)
            self._store[content_id] = now_ms
            self.hits += 1
            return True
        self.misses += 1
        return False

    def insert(self, content_id: str, now_ms: int = 0) -> Optional[str]:
        evicted = None
        if content_id in self._store:
            self._store.move_to_end(content_id)
            self._store[content_id] = now_ms
            return None
        if len(self._store) >= self.capacity:
            evicted, _ = self._store.popitem(last=False)
        self._store[content_id] = now_ms
        return evicted

    def resident(self) -> List[str]:
        """LRU -> MRU order."""
        return list(self._store)


class AddressPool:
    """Fog-scoped DHCP: unique address per authenticated user, no leases."""

    def __init__(self, fog_id: str, size: int, subnet_index: int = 0):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self.fog_id = fog_id
        self.size = size
        self.subnet_index = subnet_index
        self._assigned: Dict[str, int] = {}

    def _format(self, index: int) -> str:
        return f"10.{self.subnet_index}.{index // 256}.{index % 256}"

    def assign(self, user_id: str, *, authenticated: bool) -> str:
        if not authenticated:
            raise NotAuthenticated(f"user {user_id} has no live session", user_id)
        if user_id in self._assigned:
            return self._format(self._assigned[user_id])
        used = set(self._assigned.values())
        for index in range(self.size):
            if index not in used:
                self._assigned[user_id] = index
                return self._format(index)
        raise PoolExhausted(f"pool of fog {self.fog_id} exhausted ({self.size} addresses)", user_id)

    def address_of(self, user_id: str) -> Optional[str]:
        index = self._assigned.get(user_id)
        return None if index is None else self._format(index)

    def assigned_count(self) -> int:
        return len(self._assigned)
