"""Scenario execution: wiring, event handlers, trace and metrics output.

One `Simulation` owns one engine instance; replicas run as separate
instances. Every output byte is a function of (config, seed).
"""

from __future__ import annotations

import os
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import yaml

from .cloudctrl import CloudControl
from .dataplane import (
    AddressPool,
    FlowPath,
    InstalledFlow,
    LruCache,
    NetworkState,
    NoRoute,
    PoolExhausted,
    RouteKind,
    mesh_route,
)
from .engine import Engine, Event, EventKind
from .fogctrl import (
    Attachment,
    CloudUnreachable,
    Endpoint,
    EndpointKind,
    FlowDecision,
    FlowSpec,
    FogControl,
    RejectReason,
    UserRecord,
)
from .metrics import MetricsCollector, MetricsRecord
from .scenario import ScenarioConfig
from .slicing import SliceManager
from .topology import LINK_TO_RESOURCE, LinkClass, NodeKind
from .util import ZERO, fmt6, rate_str
from .workload import (
    FaultEvent,
    FlowRequest,
    Relocation,
    assign_mobility,
    generate_faults,
    generate_relocations,
    generate_workload,
)

OUTPUT_FILES = ("metrics.tsv", "decisions.log", "events.log", "connectivity.log", "slices.tsv", "run.log")

DECISION_HEADER = (
    "time_ms\tflow\tclass\tsrc\tdst\tstatus\treason\trat\tslice\tqos\t"
    "discriminator\tcandidates\tsetup_ms\tlatency_ms\tnote\tpath\treroute"
)


class Simulation:
    def __init__(self, config: ScenarioConfig, *, keep_alloc_history: bool = False):
        self.config = config
        self.engine = Engine()
        self.net = NetworkState(config.topology)
        self.metrics = MetricsCollector(config.topology)
        self.cloud = CloudControl(self.net, self.engine, rtt_ms=config.cloud_rtt_ms)
        self.cloud.on_flow_terminated = self._on_terminated
        self.decision_rows: List[str] = [DECISION_HEADER]
        self.decisions: List[Tuple[int, FlowSpec, FlowDecision, bool]] = []
        self.slice_rows: List[str] = ["time_ms\tfog\tslice\tresource\tentitled\tdemand\tgranted"]
        self.fogs: Dict[str, FogControl] = {}
        self.operator_of: Dict[str, str] = {}
        self.keep_alloc_history = keep_alloc_history
        self.alloc_history: List[Tuple[int, Dict[str, Fraction]]] = []
        self._departures: Dict[str, int] = {}

        topo = config.topology
        for index, fog_id in enumerate(topo.fogs()):
            fc = config.fogs[fog_id]
            profile = fc.profile
            cache = LruCache(fc.cache_capacity) if profile.cache_in_fog else None
            dhcp = AddressPool(fog_id, fc.address_pool, subnet_index=index) if profile.dhcp_in_fog else None
            fog = FogControl(
                fog_id=fog_id,
                profile=profile,
                net=self.net,
                policy=config.policy,
                cache=cache,
                dhcp=dhcp,
                cloud_rtt_ms=config.cloud_rtt_ms,
            )
            fog.clock = self.engine.now
            fog.on_terminate = self._on_terminated
            manager = SliceManager(physical=fog.physical_capacity)
            manager.on_create = fog.create_racf
            fog.slice_manager = manager
            self.cloud.register_fog(fog)
            for spec in config.slices:
                manager.create_slice(spec)
            self.fogs[fog_id] = fog

        self._register_subscribers()
        self._install_control_overhead()

        self.mobile_flags = assign_mobility(config.workload, topo, config.seed)
        for user, mobile in self.mobile_flags.items():
            fog = self.fogs[topo.fog_of(user)]
            if fog.has_user(user):
                fog.context_of(user).mobile = mobile

        for request in generate_workload(config.workload, topo, config.seed, config.duration_ms):
            self.engine.schedule(
                request.time_ms, EventKind.FLOW_ARRIVAL, subjects=(request.flow_id,), payload=request
            )
        for relocation in generate_relocations(
            config.workload, topo, self.mobile_flags, config.seed, config.duration_ms
        ):
            self.engine.schedule(
                relocation.time_ms,
                EventKind.HANDOVER_TRIGGER,
                subjects=(relocation.user,),
                payload=relocation,
            )
        for fault in generate_faults(config.faults, topo, config.seed, config.duration_ms):
            kind = EventKind.LINK_STATE_CHANGE if fault.kind == "link" else EventKind.NODE_STATE_CHANGE
            self.engine.schedule(
                fault.time_ms, kind, subjects=(fault.subject, "Up" if fault.up else "Down"), payload=fault
            )
        tick = config.metrics_tick_ms
        for t in range(tick, config.duration_ms + 1, tick):
            self.engine.schedule(t, EventKind.METRICS_TICK)

        self.engine.on(EventKind.FLOW_ARRIVAL, self._on_flow_arrival)
        self.engine.on(EventKind.FLOW_DEPARTURE, self._on_flow_departure)
        self.engine.on(EventKind.LINK_STATE_CHANGE, self._on_link_change)
        self.engine.on(EventKind.NODE_STATE_CHANGE, self._on_node_change)
        self.engine.on(EventKind.HANDOVER_TRIGGER, self._on_handover)
        self.engine.on(EventKind.METRICS_TICK, self._on_tick)

        self._after_change(0)
        self._emit_slice_rows(0)

    # -- setup ------------------------------------------------------------

    def _register_subscribers(self) -> None:
        config = self.config
        topo = config.topology
        operators = [s.operator for s in config.slices]
        override_by_user = {o.user: o for o in config.subscribers.overrides}
        users = [n.id for n in topo.nodes_of_kind(NodeKind.USER)]
        for i, user in enumerate(users):
            override = override_by_user.get(user)
            operator = (
                override.operator
                if override is not None and override.operator is not None
                else operators[i % len(operators)]
            )
            allowed = (
                override.allowed_classes
                if override is not None and override.allowed_classes is not None
                else config.subscribers.allowed_classes
            )
            max_gbr = (
                override.max_gbr
                if override is not None and override.max_gbr is not None
                else config.subscribers.max_gbr
            )
            record = UserRecord(
                user_id=user,
                token=f"tok-{user}",
                operator=operator,
                allowed_classes=frozenset(allowed),
                max_gbr=max_gbr,
            )
            self.operator_of[user] = operator
            fog_id = topo.fog_of(user)
            fog = self.fogs[fog_id]
            cluster = topo.cluster_of_user(user)
            has_wlan = cluster is not None and topo.wlan_link(user, cluster) is not None
            attachment = Attachment(
                wlan_cluster=cluster if has_wlan else None,
                macro=topo.macro_link(user) is not None,
            )
            fog.register_user(record, attachment)
            self.cloud.register_user(user, fog_id, attachment)
            try:
                fog.authenticate_user(user, record.token)
            except CloudUnreachable:
                continue  # isolated at start with remote subscriber DB
            if fog.dhcp is not None:
                try:
                    fog.dhcp.assign(user, authenticated=True)
                except PoolExhausted:
                    pass

    def _install_control_overhead(self) -> None:
        """WLAN controller <-> AP keepalive load riding the middle mile."""
        rate = self.config.wlan_control_overhead
        if rate <= 0:
            return
        topo = self.config.topology
        for ap in topo.nodes_of_kind(NodeKind.WLAN_AP):
            fog = self.fogs[ap.fog]
            try:
                hops = mesh_route(self.net, ap.id, fog.pop)
            except NoRoute:
                continue
            path = FlowPath(
                flow_id=f"ctl-{ap.id}",
                src=ap.id,
                dst=fog.pop,
                hops=tuple(hops),
                rat_used=RouteKind.WLAN_VIA_MIDDLE_MILE,
            )
            self.net.install_flow(
                InstalledFlow(
                    flow_id=path.flow_id,
                    path=path,
                    demand=rate,
                    gbr=rate,
                    slice_id=None,
                    app_class="control",
                    start_ms=0,
                    latency_ms=sum(topo.links[lid].latency_ms for lid in path.links()),
                )
            )

    def _rebuild_control_overhead(self) -> None:
        """Re-route AP keepalive flows after link or node state changes."""
        if self.config.wlan_control_overhead <= 0:
            return
        for fid in sorted(self.net.flows):
            if self.net.flows[fid].slice_id is None:
                self.net.remove_flow(fid)
        self._install_control_overhead()

    # -- decision plumbing ---------------------------------------------------

    def _decide(self, spec: FlowSpec) -> FlowDecision:
        src_fog = self.cloud.fog_of_user(spec.src.ident) if spec.src.kind == EndpointKind.USER else None
        if src_fog is None:
            return FlowDecision.rejected(spec.flow_id, RejectReason.NO_COVERAGE, note="unknown source")
        if spec.dst.kind == EndpointKind.EXTERNAL:
            return self.cloud.setup_external_path(spec)
        if spec.dst.kind == EndpointKind.USER:
            dst_fog = self.cloud.fog_of_user(spec.dst.ident)
            if dst_fog is not None and dst_fog != src_fog:
                return self.cloud.setup_interfog_path(spec)
        return self.fogs[src_fog].handle_flow_request(spec)

    def _log_decision(self, time_ms: int, spec: FlowSpec, decision: FlowDecision, reroute: bool) -> None:
        self.decisions.append((time_ms, spec, decision, reroute))
        path = decision.path
        self.decision_rows.append(
            "\t".join(
                [
                    str(time_ms),
                    spec.flow_id,
                    spec.app_class,
                    str(spec.src),
                    str(spec.dst),
                    "accepted" if decision.accepted else "rejected",
                    decision.reason.value if decision.reason else "-",
                    path.rat_used.value if path else "-",
                    decision.slice_id or "-",
                    decision.qos.value if decision.qos else "-",
                    decision.discriminator or "-",
                    "|".join(decision.candidates) or "-",
                    str(decision.setup_ms),
                    fmt6(decision.latency_ms),
                    decision.note or "-",
                    ">".join(path.nodes()) if path else "-",
                    "1" if reroute else "0",
                ]
            )
        )

    def _log_termination(self, time_ms: int, flow: InstalledFlow, reason: RejectReason) -> None:
        spec = flow.spec
        self.decision_rows.append(
            "\t".join(
                [
                    str(time_ms),
                    flow.flow_id,
                    flow.app_class,
                    str(spec.src) if spec else flow.path.src,
                    str(spec.dst) if spec else flow.path.dst,
                    "terminated",
                    reason.value,
                    flow.path.rat_used.value,
                    flow.slice_id or "-",
                    "-",
                    "-",
                    "-",
                    "0",
                    fmt6(flow.latency_ms),
                    "-",
                    ">".join(flow.path.nodes()),
                    "0",
                ]
            )
        )

    def _on_terminated(self, flow: InstalledFlow, reason: RejectReason) -> None:
        self.metrics.on_terminate(reason)
        self._log_termination(self.engine.now(), flow, reason)

    def _after_change(self, now_ms: int) -> None:
        """Re-run the allocator after any rate change."""
        self.metrics.advance(now_ms)
        self.net.recompute()
        self.metrics.set_backhaul_rate(self.net)
        if self.keep_alloc_history:
            rates = {
                lid: self.net.link_allocated(lid)
                for lid in self.metrics._backhaul_link_ids
            }
            self.alloc_history.append((now_ms, rates))

    def _emit_slice_rows(self, now_ms: int) -> None:
        """Slice report rows; written at ticks and capacity-change events.

        Admission uses live entitlements, so reporting granularity does not
        affect behavior."""
        for fog_id in sorted(self.fogs):
            fog = self.fogs[fog_id]
            manager = fog.slice_manager
            demands = self._slice_demands(fog)
            runtimes = manager.compute_slice_allocations(demands)
            for sid in manager.slice_ids():
                runtime = runtimes[sid]
                for cls, alloc in runtime.per_class.items():
                    self.slice_rows.append(
                        "\t".join(
                            [
                                str(now_ms),
                                fog_id,
                                sid,
                                cls,
                                rate_str(alloc.entitled),
                                rate_str(alloc.demand),
                                rate_str(alloc.granted),
                            ]
                        )
                    )

    def _slice_demands(self, fog: FogControl) -> Dict[str, Dict[str, Fraction]]:
        demands: Dict[str, Dict[str, Fraction]] = {sid: {} for sid in fog.slice_manager.slice_ids()}
        links = self.net.topology.links
        for fid in sorted(self.net.flows):
            flow = self.net.flows[fid]
            racf = fog.racfs.get(flow.slice_id) if flow.slice_id is not None else None
            if racf is None or fid not in racf.flows:
                continue
            want = flow.gbr if flow.gbr > 0 else flow.demand
            per = demands[flow.slice_id]
            for cls in {LINK_TO_RESOURCE.get(links[lid].link_class) for lid in flow.links}:
                if cls is not None:
                    per[cls] = per.get(cls, ZERO) + want
        return demands

    # -- handlers ----------------------------------------------------------------

    def _on_flow_arrival(self, event: Event) -> None:
        request: FlowRequest = event.payload
        self.metrics.on_request()
        spec = FlowSpec(
            flow_id=request.flow_id,
            src=Endpoint.user(request.src_user),
            dst=request.dst,
            app_class=request.app_class,
            demand=self.config.workload.classes[request.app_class].demand,
            operator=self.operator_of.get(request.src_user, "-"),
            start_ms=event.time,
        )
        decision = self._decide(spec)
        self._log_decision(event.time, spec, decision, reroute=False)
        if decision.accepted:
            self.metrics.on_admit(spec.app_class, decision.latency_ms)
            self._departures[spec.flow_id] = event.time + request.holding_ms
            self.engine.schedule(
                event.time + request.holding_ms, EventKind.FLOW_DEPARTURE, subjects=(spec.flow_id,)
            )
            self._after_change(event.time)
        else:
            self.metrics.on_reject(decision.reason)

    def _on_flow_departure(self, event: Event) -> None:
        flow_id = event.subjects[0]
        flow = self.net.flows.get(flow_id)
        if flow is None:
            return  # terminated earlier
        self.net.remove_flow(flow_id)
        self.cloud.forget_flow(flow)
        self._after_change(event.time)

    def _affected_flows(self, link_id: Optional[str] = None, node_id: Optional[str] = None) -> List[str]:
        out = []
        for fid in sorted(self.net.flows):
            path = self.net.flows[fid].path
            if link_id is not None and link_id in path.links():
                out.append(fid)
            elif node_id is not None and node_id in path.nodes():
                out.append(fid)
        return out

    def _redecide(self, flow_ids: List[str]) -> None:
        for fid in flow_ids:
            flow = self.net.flows.get(fid)
            if flow is None:
                continue
            if flow.slice_id is None:
                continue  # control overhead rebuilt separately
            fog_id = self.cloud.fog_of_user(flow.path.src)
            if fog_id is None:
                fog_id = self.net.topology.fog_of(flow.path.src)
            fog = self.fogs[fog_id]
            decision = fog.redecide_flow(flow)
            self._log_decision(self.engine.now(), flow.spec, decision, reroute=True)

    def _on_link_change(self, event: Event) -> None:
        fault: FaultEvent = event.payload
        self.metrics.advance(event.time)
        link = self.net.topology.links[fault.subject]
        was_connected = {fog: self.cloud.is_connected(fog) for fog in self.fogs}
        self.net.set_link_state(fault.subject, fault.up)
        if link.link_class == LinkClass.BACKHAUL:
            fog_id = self.net.topology.fog_of(link.a) or self.net.topology.fog_of(link.b)
            self.cloud.on_backhaul_change(fog_id, fault.up, event.time)
            if was_connected.get(fog_id) and not self.cloud.is_connected(fog_id):
                survivors = sum(1 for f in self.net.flows.values() if f.slice_id is not None)
                self.metrics.on_isolation(survivors)
        if not fault.up:
            self._redecide(self._affected_flows(link_id=fault.subject))
        self._rebuild_control_overhead()
        self._after_change(event.time)
        self._emit_slice_rows(event.time)

    def _on_node_change(self, event: Event) -> None:
        fault: FaultEvent = event.payload
        self.metrics.advance(event.time)
        self.net.set_node_state(fault.subject, fault.up)
        if not fault.up:
            self._redecide(self._affected_flows(node_id=fault.subject))
        self._rebuild_control_overhead()
        self._after_change(event.time)
        self._emit_slice_rows(event.time)

    def _on_handover(self, event: Event) -> None:
        relocation: Relocation = event.payload
        self.metrics.advance(event.time)
        fog_id = self.cloud.fog_of_user(relocation.user)
        if fog_id is None:
            return
        fog = self.fogs[fog_id]
        try:
            results = fog.handover(relocation.user, relocation.attachment)
        except CloudUnreachable:
            return  # mobility state out of reach while isolated; attachment unchanged
        for _, decision in results:
            flow = self.net.flows.get(decision.flow_id)
            spec = flow.spec if flow is not None else None
            if spec is not None:
                self._log_decision(event.time, spec, decision, reroute=True)
        self._after_change(event.time)

    def _cache_totals(self) -> Tuple[int, int]:
        lookups = hits = 0
        for fog_id in sorted(self.fogs):
            cache = self.fogs[fog_id].cache
            if cache is not None:
                lookups += cache.lookups
                hits += cache.hits
        return lookups, hits

    def _on_tick(self, event: Event) -> None:
        lookups, hits = self._cache_totals()
        self.metrics.tick_row(event.time, self.net, lookups, hits)
        self._emit_slice_rows(event.time)

    # -- run ------------------------------------------------------------------------

    def run(self) -> MetricsRecord:
        self.engine.run_until(self.config.duration_ms)
        self.metrics.advance(self.config.duration_ms)
        lookups, hits = self._cache_totals()
        if not self.metrics.rows or not self.metrics.rows[-1].startswith(f"{self.config.duration_ms}\t"):
            self.metrics.tick_row(self.config.duration_ms, self.net, lookups, hits)
        return self.metrics.record(self.net, lookups, hits, self.config.duration_ms)

    def write_outputs(self, out_dir: str, record: MetricsRecord) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.tsv"), "w") as fh:
            fh.write(self.metrics.render())
        with open(os.path.join(out_dir, "decisions.log"), "w") as fh:
            fh.write("\n".join(self.decision_rows) + "\n")
        with open(os.path.join(out_dir, "events.log"), "w") as fh:
            fh.write("time_ms\tseq\tkind\tsubjects\n")
            for event in self.engine.trace:
                fh.write(event.trace_row() + "\n")
        with open(os.path.join(out_dir, "connectivity.log"), "w") as fh:
            fh.write("time_ms\tfog\tstate\n")
            fh.write("\n".join(self.cloud.connectivity_rows()) + "\n")
        with open(os.path.join(out_dir, "slices.tsv"), "w") as fh:
            fh.write("\n".join(self.slice_rows) + "\n")
        with open(os.path.join(out_dir, "run.log"), "w") as fh:
            fh.write("# resolved configuration\n")
            fh.write(yaml.safe_dump(self.config.to_doc(), sort_keys=False))
            fh.write("# summary\n")
            fh.write(f"requests\t{record.requests}\n")
            fh.write(f"admitted\t{record.admitted}\n")
            fh.write(f"rejected\t{record.rejected_total}\n")
            fh.write(f"backhaul_mbytes\t{fmt6(record.backhaul_bytes / 1_000_000)}\n")
            fh.write(f"cache_hit_rate\t{fmt6(record.cache_hit_rate)}\n")


def run_scenario(config: ScenarioConfig, out_dir: Optional[str] = None) -> MetricsRecord:
    sim = Simulation(config)
    record = sim.run()
    if out_dir is not None:
        sim.write_outputs(out_dir, record)
    return record
