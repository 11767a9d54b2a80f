"""Cloud-side control: external and inter-fog paths, fog state sync,
isolation detection.

A fog is isolated exactly when all of its backhaul links are down. While
isolated, its cloud-crossing flows are torn down, local flows continue
untouched, and control-state updates queue as deltas; on reconnect a sync
round drains the queue into the cloud replicas, last writer (by event
time) winning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .dataplane import FlowPath, InstalledFlow, NoRoute, RouteKind, reverse_hops
from .engine import Engine, EventKind
from .fogctrl import (
    Attachment,
    Candidate,
    CloudUnreachable,
    EndpointKind,
    FlowDecision,
    FlowSpec,
    PolicyDenied,
    RejectReason,
    SessionRequired,
    UnknownUser,
    select_candidate,
)
from .util import ZERO


class FogIsolated(Exception):
    def __init__(self, fog_id: str):
        super().__init__(f"fog {fog_id} is isolated from the cloud")
        self.fog_id = fog_id


@dataclass(frozen=True)
class ContextDelta:
    """One queued control-state update from a fog."""

    order: int
    time_ms: int
    fog_id: str
    user_id: str
    attachment: Attachment


@dataclass
class SyncRecord:
    fog_id: str
    last_sync_ms: int = 0
    pending: List[ContextDelta] = field(default_factory=list)


@dataclass(frozen=True)
class InterFogRoute:
    flow_id: str
    src_fog: str
    dst_fog: str
    hops: Tuple[Tuple[str, str], ...]


class CloudControl:
    """Core-network control plane over all fogs of a scenario."""

    def __init__(self, net, engine: Optional[Engine] = None, rtt_ms: int = 20):
        self.net = net
        self.engine = engine
        self.rtt_ms = rtt_ms
        self.fogs: Dict[str, object] = {}
        self.user_fog: Dict[str, str] = {}
        self._connected: Dict[str, bool] = {}
        self.transitions: List[Tuple[int, str, str]] = []
        self.sync_records: Dict[str, SyncRecord] = {}
        self.context_replica: Dict[str, Tuple[Attachment, int]] = {}
        self.interfog_routes: Dict[str, InterFogRoute] = {}
        self._delta_order = 0
        self.on_flow_terminated: Optional[Callable[[InstalledFlow, RejectReason], None]] = None
        if engine is not None:
            engine.on(EventKind.CONTROL_MESSAGE, self._handle_control_message)

    # -- registration -------------------------------------------------------

    def register_fog(self, fog) -> None:
        self.fogs[fog.fog_id] = fog
        fog.cloud = self
        self.sync_records[fog.fog_id] = SyncRecord(fog_id=fog.fog_id)
        state = self._derive_connected(fog.fog_id)
        self._connected[fog.fog_id] = state
        self.transitions.append((self._now(), fog.fog_id, "Connected" if state else "Isolated"))

    def register_user(self, user_id: str, fog_id: str, attachment: Attachment) -> None:
        self.user_fog[user_id] = fog_id
        self.context_replica[user_id] = (attachment, self._now())

    def fog_of_user(self, user_id: str) -> Optional[str]:
        return self.user_fog.get(user_id)

    def _now(self) -> int:
        return self.engine.now() if self.engine is not None else 0

    # -- connectivity ---------------------------------------------------------

    def _derive_connected(self, fog_id: str) -> bool:
        links = self.net.topology.backhaul_links(fog_id)
        return any(self.net.effective_up(l.id) for l in links)

    def is_connected(self, fog_id: str) -> bool:
        return self._connected.get(fog_id, self._derive_connected(fog_id))

    def on_backhaul_change(self, fog_id: str, up: bool, now_ms: Optional[int] = None) -> None:
        """React to a backhaul link transition; `up` is the new link state."""
        del up  # isolation depends on the set of all backhaul links
        now = self._now() if now_ms is None else now_ms
        state = self._derive_connected(fog_id)
        if state == self._connected.get(fog_id):
            return
        self._connected[fog_id] = state
        self.transitions.append((now, fog_id, "Connected" if state else "Isolated"))
        if not state:
            self._terminate_cloud_flows(fog_id)
        else:
            if self.engine is not None:
                self.engine.schedule(
                    now + self.rtt_ms,
                    EventKind.CONTROL_MESSAGE,
                    subjects=(fog_id,),
                    payload={"op": "sync", "fog": fog_id},
                )
            else:
                self.sync_fog_state(fog_id)

    def _terminate_cloud_flows(self, fog_id: str) -> None:
        backhauls = {l.id for l in self.net.topology.backhaul_links(fog_id)}
        for fid in sorted(self.net.flows):
            flow = self.net.flows[fid]
            if not backhauls.intersection(flow.path.links()):
                continue
            self.net.remove_flow(fid)
            self.forget_flow(flow)
            if self.on_flow_terminated is not None:
                self.on_flow_terminated(flow, RejectReason.FOG_ISOLATED)

    def forget_flow(self, flow: InstalledFlow) -> None:
        for fog in self.fogs.values():
            fog.forget_flow(flow)
        self.interfog_routes.pop(flow.flow_id, None)

    # -- state synchronization --------------------------------------------------

    def push_context_update(self, fog_id: str, user_id: str, attachment: Attachment, time_ms: int) -> None:
        delta = ContextDelta(
            order=self._delta_order, time_ms=time_ms, fog_id=fog_id, user_id=user_id, attachment=attachment
        )
        self._delta_order += 1
        if self.is_connected(fog_id):
            if self.engine is not None:
                self.engine.schedule(
                    max(self._now(), time_ms) + self.rtt_ms,
                    EventKind.CONTROL_MESSAGE,
                    subjects=(fog_id, user_id),
                    payload={"op": "delta", "delta": delta},
                )
            else:
                self._apply_delta(delta)
        else:
            self.sync_records[fog_id].pending.append(delta)

    def _apply_delta(self, delta: ContextDelta) -> None:
        current = self.context_replica.get(delta.user_id)
        if current is None or delta.time_ms >= current[1]:
            self.context_replica[delta.user_id] = (delta.attachment, delta.time_ms)
            self.user_fog[delta.user_id] = delta.fog_id

    def sync_fog_state(self, fog_id: str) -> None:
        record = self.sync_records[fog_id]
        if not self.is_connected(fog_id):
            raise FogIsolated(fog_id)
        for delta in sorted(record.pending, key=lambda d: (d.time_ms, d.order)):
            self._apply_delta(delta)
        record.pending.clear()
        record.last_sync_ms = self._now()

    def _handle_control_message(self, event) -> None:
        payload = event.payload or {}
        op = payload.get("op")
        if op == "sync":
            fog_id = payload["fog"]
            if self.is_connected(fog_id):
                self.sync_fog_state(fog_id)
            # a fog that re-isolated before the sync landed keeps its queue
        elif op == "delta":
            self._apply_delta(payload["delta"])

    # -- path setup ----------------------------------------------------------------

    def setup_external_path(self, spec: FlowSpec) -> FlowDecision:
        """External-network flow: fog access segment plus backhaul egress."""
        fog_id = self.fog_of_user(spec.src.ident) if spec.src.kind == EndpointKind.USER else None
        if fog_id is None or fog_id not in self.fogs:
            return FlowDecision.rejected(spec.flow_id, RejectReason.NO_COVERAGE, note="unknown source fog")
        if not self.is_connected(fog_id):
            return FlowDecision.rejected(spec.flow_id, RejectReason.FOG_ISOLATED)
        return self.fogs[fog_id].handle_flow_request(spec)

    def setup_interfog_path(self, spec: FlowSpec, *, reroute: bool = False) -> FlowDecision:
        """User-to-user flow hairpinning through the cloud gateway."""
        src, dst = spec.src.ident, spec.dst.ident
        fa_id, fb_id = self.fog_of_user(src), self.fog_of_user(dst)
        if fa_id is None or fb_id is None or fa_id not in self.fogs or fb_id not in self.fogs:
            return FlowDecision.rejected(spec.flow_id, RejectReason.NO_COVERAGE, note="unknown endpoint fog")
        fa, fb = self.fogs[fa_id], self.fogs[fb_id]
        for fog_id in (fa_id, fb_id):
            if not self.is_connected(fog_id):
                return FlowDecision.rejected(spec.flow_id, RejectReason.FOG_ISOLATED, note=fog_id)

        try:
            qos, gbr, slice_a = fa.classify_flow(spec)
        except (SessionRequired, UnknownUser):
            return FlowDecision.rejected(spec.flow_id, RejectReason.NOT_AUTHENTICATED)
        except PolicyDenied as exc:
            return FlowDecision.rejected(spec.flow_id, RejectReason.POLICY_DENIED, note=str(exc))
        except CloudUnreachable:
            return FlowDecision.rejected(spec.flow_id, RejectReason.CLOUD_UNREACHABLE)
        setup_ms = fa.control_latency_ms() + fb.control_latency_ms()
        slice_b = fb.slice_of_user(dst) if fb.has_user(dst) else None

        if not fa.access_options(src) or not fb.access_options(dst):
            return FlowDecision.rejected(spec.flow_id, RejectReason.NO_COVERAGE, setup_ms=setup_ms)

        gw = self.net.topology.gateway_id()
        candidates: List[Candidate] = []
        structural = False
        for skind, slink in fa.access_options(src):
            for dkind, dlink in fb.access_options(dst):
                built = self._build_interfog(
                    fa, fb, src, dst, slink.id, dlink.id, gw, gbr, slice_a, slice_b
                )
                if built is None:
                    if self._build_interfog(fa, fb, src, dst, slink.id, dlink.id, gw, ZERO, None, None):
                        structural = True
                    continue
                structural = True
                candidates.append(
                    Candidate(
                        label=f"{skind}+{dkind}",
                        hops=built,
                        end=dst,
                        rat=RouteKind.CLOUD_BOUND,
                        access_used={src: skind, dst: dkind},
                    )
                )
        if not candidates:
            reason = RejectReason.GBR_ADMISSION_FAIL if structural else RejectReason.NO_ROUTE
            return FlowDecision.rejected(spec.flow_id, reason, setup_ms=setup_ms)

        mobile_of = {src: fa.context_of(src).mobile, dst: fb.context_of(dst).mobile}
        chosen, discriminator = select_candidate(
            candidates, prefer_local=False, mobile_of=mobile_of, utilization=fa.scoring_utilization
        )
        path = FlowPath(
            flow_id=spec.flow_id, src=src, dst=dst, hops=tuple(chosen.hops), rat_used=RouteKind.CLOUD_BOUND
        )
        latency = sum(self.net.topology.links[lid].latency_ms for lid in path.links())
        fa.install_flow(spec, path, qos, gbr, slice_a, latency, reroute=reroute)
        if slice_b is not None:
            fb.racfs[slice_b].flows.add(spec.flow_id)
            fb.context_of(dst).flows.add(spec.flow_id)
        self.interfog_routes[spec.flow_id] = InterFogRoute(
            flow_id=spec.flow_id, src_fog=fa_id, dst_fog=fb_id, hops=tuple(chosen.hops)
        )
        return FlowDecision(
            flow_id=spec.flow_id,
            accepted=True,
            path=path,
            qos=qos,
            slice_id=slice_a,
            discriminator=discriminator,
            candidates=tuple(c.label for c in candidates),
            setup_ms=setup_ms,
            latency_ms=latency,
        )

    def _build_interfog(
        self, fa, fb, src, dst, src_access, dst_access, gw, gbr, slice_a, slice_b
    ) -> Optional[List[Tuple[str, str]]]:
        try:
            seg_a = fa._route(src, fa.pop, {src_access}, gbr, include_backhaul=False)
            seg_b = fb._route(dst, fb.pop, {dst_access}, gbr, include_backhaul=False)
        except NoRoute:
            return None
        bh_a = self._pick_backhaul(fa.fog_id, gbr)
        bh_b = self._pick_backhaul(fb.fog_id, gbr)
        if bh_a is None or bh_b is None:
            return None
        hops = list(seg_a) + [(fa.pop, bh_a), (gw, bh_b)] + reverse_hops(seg_b, fb.pop)
        # each fog's slice cap covers its own segment plus its backhaul
        links_a = [lid for _, lid in seg_a] + [bh_a]
        links_b = [lid for _, lid in seg_b] + [bh_b]
        if slice_a is not None and not fa.slice_gbr_ok(slice_a, links_a, gbr):
            return None
        if slice_b is not None and not fb.slice_gbr_ok(slice_b, links_b, gbr):
            return None
        # guard against degenerate same-fog calls producing node repeats
        nodes = [n for n, _ in hops] + [dst]
        if len(set(nodes)) != len(nodes):
            return None
        return hops

    def _pick_backhaul(self, fog_id: str, gbr) -> Optional[str]:
        best = None
        for link in self.net.topology.backhaul_links(fog_id):
            if not self.net.effective_up(link.id):
                continue
            if self.net.admission_residual(link.id) < gbr:
                continue
            if best is None or link.id < best:
                best = link.id
        return best

    # -- export ---------------------------------------------------------------------

    def connectivity_rows(self) -> List[str]:
        return [f"{t}\t{fog}\t{state}" for t, fog, state in self.transitions]
