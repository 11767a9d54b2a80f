"""Fog-resident layered SDN control plane.

One `FogControl` instance runs the control functions of a single fog
element: per-slice control state (flow controller, mobility/load tracking,
policy and charging, subscriber records with a session gate in front), the
per-technology abstraction, and flexible placement via `FogProfile`.
Functions absent from the profile fall back to the cloud: each use costs a
configurable round trip and fails while the fog is isolated.

Path selection is deliberately ordinal and deterministic:

1. discard candidates that fail guaranteed-rate admission (per-hop
   residual and the slice's per-class entitlement);
2. prefer fog-local candidates over cloud-bound ones for local flows;
3. prefer WLAN access for stationary users and macro for mobile ones;
4. tie-break by lower bottleneck utilization (offered load over capacity),
   then hop count, then lexicographic node sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, List, Optional, Set, Tuple

from .dataplane import (
    CacheNotInstantiated,
    FlowPath,
    InstalledFlow,
    NetworkState,
    NoRoute,
    RouteKind,
    constrained_route,
)
from .resources import AbstractResourceView, RatView, ResourceClass
from .topology import LINK_TO_RESOURCE, Link, LinkClass
from .util import ZERO


class QosClass(str, Enum):
    REAL_TIME_GBR = "RealTimeGBR"
    BEST_EFFORT = "BestEffort"


class RejectReason(str, Enum):
    NO_COVERAGE = "NoCoverage"
    GBR_ADMISSION_FAIL = "GbrAdmissionFail"
    NOT_AUTHENTICATED = "NotAuthenticated"
    POLICY_DENIED = "PolicyDenied"
    NO_ROUTE = "NoRoute"
    # Profile/connectivity outcomes surfaced by the cloud side:
    FOG_ISOLATED = "FogIsolated"
    CLOUD_UNREACHABLE = "CloudUnreachable"


class ControlError(Exception):
    def __init__(self, message: str, element: str = ""):
        super().__init__(message)
        self.element = element


class BadCredentials(ControlError):
    pass


class CloudUnreachable(ControlError):
    pass


class PolicyDenied(ControlError):
    pass


class UnknownEndpoint(ControlError):
    pass


class UnknownUser(ControlError):
    pass


class SessionRequired(ControlError):
    """Raised by the security gate in front of subscriber records."""


class EndpointKind(str, Enum):
    USER = "user"
    CONTENT = "content"
    EXTERNAL = "external"


@dataclass(frozen=True)
class Endpoint:
    kind: EndpointKind
    ident: Optional[str] = None

    @classmethod
    def user(cls, user_id: str) -> "Endpoint":
        return cls(EndpointKind.USER, user_id)

    @classmethod
    def content(cls, content_id) -> "Endpoint":
        return cls(EndpointKind.CONTENT, str(content_id))

    @classmethod
    def external(cls) -> "Endpoint":
        return cls(EndpointKind.EXTERNAL, None)

    def __str__(self) -> str:
        return self.kind.value if self.ident is None else f"{self.kind.value}:{self.ident}"


@dataclass(frozen=True)
class FlowSpec:
    flow_id: str
    src: Endpoint
    dst: Endpoint
    app_class: str
    demand: Fraction
    operator: str
    start_ms: int = 0


@dataclass(frozen=True)
class PolicyRule:
    app_class: str
    qos: QosClass
    gbr_rate: Fraction = ZERO

    def __post_init__(self):
        if (self.qos == QosClass.REAL_TIME_GBR) != (self.gbr_rate > 0):
            raise ValueError(f"rule {self.app_class}: gbr_rate must be > 0 exactly for RealTimeGBR")


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    token: str
    operator: str
    allowed_classes: FrozenSet[str]
    max_gbr: Fraction


@dataclass(frozen=True)
class Attachment:
    """Which of the user's provisioned access links are currently usable."""

    wlan_cluster: Optional[str] = None
    macro: bool = False

    def rats(self) -> Tuple[str, ...]:
        out = []
        if self.wlan_cluster is not None:
            out.append("wlan")
        if self.macro:
            out.append("macro")
        return tuple(out)


@dataclass
class UserContext:
    user_id: str
    attachment: Attachment
    mobile: bool = False
    flows: Set[str] = field(default_factory=set)


@dataclass(frozen=True)
class FogProfile:
    udf_in_fog: bool = True
    pcrf_in_fog: bool = True
    mlmf_in_fog: bool = True
    cache_in_fog: bool = True
    dhcp_in_fog: bool = True
    # Inert placeholder: configurable but without behavior.
    tcp_opt_in_fog: bool = False
    cniwf_in_fog: bool = True

    def __post_init__(self):
        if not self.cniwf_in_fog:
            raise ValueError("the core-network interworking function is present in every profile")


@dataclass
class SliceRacf:
    """Control state instantiated separately per slice."""

    slice_id: str
    operator: str
    user_records: Dict[str, UserRecord] = field(default_factory=dict)
    sessions: Set[str] = field(default_factory=set)
    contexts: Dict[str, UserContext] = field(default_factory=dict)
    charging: Dict[str, int] = field(default_factory=dict)
    flows: Set[str] = field(default_factory=set)


@dataclass
class Candidate:
    label: str
    hops: List[Tuple[str, str]]
    end: str
    rat: RouteKind
    access_used: Dict[str, str]  # user id -> "wlan" | "macro"

    def nodes(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.hops) + (self.end,)


@dataclass(frozen=True)
class FlowDecision:
    flow_id: str
    accepted: bool
    path: Optional[FlowPath] = None
    qos: Optional[QosClass] = None
    slice_id: Optional[str] = None
    reason: Optional[RejectReason] = None
    discriminator: str = ""
    candidates: Tuple[str, ...] = ()
    setup_ms: int = 0
    latency_ms: float = 0.0
    note: str = ""

    @classmethod
    def rejected(
        cls,
        flow_id: str,
        reason: RejectReason,
        note: str = "",
        setup_ms: int = 0,
        candidates: Tuple[str, ...] = (),
    ) -> "FlowDecision":
        return cls(
            flow_id=flow_id,
            accepted=False,
            reason=reason,
            note=note,
            setup_ms=setup_ms,
            candidates=candidates,
        )


def select_candidate(
    candidates: List[Candidate],
    *,
    prefer_local: bool,
    mobile_of: Dict[str, bool],
    utilization: Callable[[str], Fraction],
) -> Tuple[Candidate, str]:
    """Apply selection rules 2..4 to an admission-filtered candidate list."""
    pool = list(candidates)
    discriminator = "only_candidate"

    def narrow(better: List[Candidate], rule: str) -> None:
        nonlocal pool, discriminator
        if 0 < len(better) < len(pool):
            pool = better
            discriminator = rule

    if prefer_local:
        narrow([c for c in pool if c.rat == RouteKind.INTRA_FOG_LOCAL], "locality")

    def violations(c: Candidate) -> int:
        count = 0
        for user, kind in c.access_used.items():
            wanted = "macro" if mobile_of.get(user, False) else "wlan"
            if kind != wanted:
                count += 1
        return count

    if len(pool) > 1:
        best = min(violations(c) for c in pool)
        narrow([c for c in pool if violations(c) == best], "mobility")

    if len(pool) > 1:

        def bottleneck(c: Candidate) -> Fraction:
            return max((utilization(lid) for _, lid in c.hops), default=ZERO)

        best_u = min(bottleneck(c) for c in pool)
        narrow([c for c in pool if bottleneck(c) == best_u], "utilization")

    if len(pool) > 1:
        best_h = min(len(c.hops) for c in pool)
        narrow([c for c in pool if len(c.hops) == best_h], "hop_count")

    if len(pool) > 1:
        pool = [min(pool, key=lambda c: c.nodes())]
        discriminator = "lex"

    return pool[0], discriminator


class FogControl:
    """Control plane of one fog element."""

    def __init__(
        self,
        fog_id: str,
        profile: FogProfile,
        net: NetworkState,
        slice_manager=None,
        policy: Optional[Dict[str, PolicyRule]] = None,
        cache=None,
        dhcp=None,
        cloud=None,
        cloud_rtt_ms: int = 20,
    ):
        self.fog_id = fog_id
        self.profile = profile
        self.net = net
        self.slice_manager = slice_manager
        self.policy = dict(policy or {})
        self.cache = cache
        self.dhcp = dhcp
        self.cloud = cloud
        self.cloud_rtt_ms = cloud_rtt_ms
        self.racfs: Dict[str, SliceRacf] = {}
        self._user_slice: Dict[str, str] = {}
        self.pop = net.topology.pop_of(fog_id)
        self.macro_bs = net.topology.macro_of(fog_id)
        # Hooks wired by the harness.
        self.on_terminate: Optional[Callable[[InstalledFlow, RejectReason], None]] = None
        self.clock: Callable[[], int] = lambda: 0

    # -- slice control instances ------------------------------------------

    def create_racf(self, spec) -> SliceRacf:
        racf = SliceRacf(slice_id=spec.slice_id, operator=spec.operator)
        self.racfs[spec.slice_id] = racf
        return racf

    def racf_of_operator(self, operator: str) -> SliceRacf:
        for racf in self.racfs.values():
            if racf.operator == operator:
                return racf
        raise ControlError(f"operator {operator} holds no slice in fog {self.fog_id}", operator)

    def register_user(self, record: UserRecord, attachment: Attachment, mobile: bool = False) -> None:
        racf = self.racf_of_operator(record.operator)
        racf.user_records[record.user_id] = record
        racf.contexts[record.user_id] = UserContext(
            user_id=record.user_id, attachment=attachment, mobile=mobile
        )
        self._user_slice[record.user_id] = racf.slice_id

    def has_user(self, user_id: str) -> bool:
        return user_id in self._user_slice

    def slice_of_user(self, user_id: str) -> str:
        if user_id not in self._user_slice:
            raise UnknownUser(f"user {user_id} unknown in fog {self.fog_id}", user_id)
        return self._user_slice[user_id]

    def context_of(self, user_id: str) -> UserContext:
        return self.racfs[self.slice_of_user(user_id)].contexts[user_id]

    # -- connectivity and placement fallbacks --------------------------------

    def connected(self) -> bool:
        return True if self.cloud is None else self.cloud.is_connected(self.fog_id)

    def control_latency_ms(self) -> int:
        """Extra setup latency when any control function lives in the cloud."""
        remote = not (self.profile.udf_in_fog and self.profile.pcrf_in_fog)
        return self.cloud_rtt_ms if remote else 0

    # -- security / subscriber functions --------------------------------------

    def authenticate_user(self, user_id: str, token: str) -> None:
        slice_id = self._user_slice.get(user_id)
        if slice_id is None:
            raise BadCredentials(f"unknown user {user_id}", user_id)
        racf = self.racfs[slice_id]
        if not self.profile.udf_in_fog and not self.connected():
            raise CloudUnreachable(f"subscriber database unreachable for {user_id}", user_id)
        record = racf.user_records.get(user_id)
        if record is None or record.token != token:
            raise BadCredentials(f"bad credentials for {user_id}", user_id)
        racf.sessions.add(user_id)

    def session_alive(self, user_id: str) -> bool:
        slice_id = self._user_slice.get(user_id)
        return slice_id is not None and user_id in self.racfs[slice_id].sessions

    # -- policy ----------------------------------------------------------------

    def classify_flow(self, spec: FlowSpec) -> Tuple[QosClass, Fraction, str]:
        user = self._primary_user(spec)
        slice_id = self.slice_of_user(user)
        racf = self.racfs[slice_id]
        if user not in racf.sessions:
            raise SessionRequired(f"user {user} has no session", user)
        if not (self.profile.pcrf_in_fog and self.profile.udf_in_fog) and not self.connected():
            raise CloudUnreachable("policy/subscriber functions unreachable", user)
        rule = self.policy.get(spec.app_class)
        record = racf.user_records[user]
        if rule is None or spec.app_class not in record.allowed_classes:
            raise PolicyDenied(f"class {spec.app_class} not allowed for {user}", user)
        gbr = rule.gbr_rate if rule.qos == QosClass.REAL_TIME_GBR else ZERO
        if gbr > record.max_gbr:
            raise PolicyDenied(f"guaranteed rate {gbr} above subscription cap for {user}", user)
        return rule.qos, gbr, slice_id

    def charge(self, slice_id: str, app_class: str) -> None:
        charging = self.racfs[slice_id].charging
        charging[app_class] = charging.get(app_class, 0) + 1

    # -- content cache ----------------------------------------------------------

    def _cache(self):
        if not (self.profile.cache_in_fog and self.cache):
            raise CacheNotInstantiated(f"no cache instantiated in fog {self.fog_id}", self.fog_id)
        return self.cache

    def cache_lookup(self, content_id: str) -> bool:
        return self._cache().lookup(content_id, self.clock())

    def cache_insert(self, content_id: str) -> Optional[str]:
        return self._cache().insert(content_id, self.clock())

    # -- locality ----------------------------------------------------------------

    def _primary_user(self, spec: FlowSpec) -> str:
        for end in (spec.src, spec.dst):
            if end.kind == EndpointKind.USER and self.has_user(end.ident):
                return end.ident
        raise UnknownEndpoint(f"flow {spec.flow_id} has no user endpoint in fog {self.fog_id}", spec.flow_id)

    def is_local_flow(self, spec: FlowSpec) -> bool:
        def in_fog(end: Endpoint) -> bool:
            if end.kind == EndpointKind.USER:
                if self.has_user(end.ident):
                    return True
                if self.cloud is not None and self.cloud.fog_of_user(end.ident) is not None:
                    return False
                raise UnknownEndpoint(f"no location known for user {end.ident}", end.ident)
            if end.kind == EndpointKind.CONTENT:
                return bool(self.profile.cache_in_fog and self.cache and self.cache.peek(end.ident))
            return False

        return in_fog(spec.src) and in_fog(spec.dst)

    # -- candidate construction -----------------------------------------------

    def access_options(self, user_id: str) -> List[Tuple[str, Link]]:
        """Healthy access links usable under the user's current attachment."""
        ctx = self.context_of(user_id)
        topo = self.net.topology
        out: List[Tuple[str, Link]] = []
        if ctx.attachment.wlan_cluster is not None:
            link = topo.wlan_link(user_id, ctx.attachment.wlan_cluster)
            if link is not None and self.net.effective_up(link.id):
                out.append(("wlan", link))
        if ctx.attachment.macro:
            link = topo.macro_link(user_id)
            if link is not None and self.net.effective_up(link.id):
                out.append(("macro", link))
        return out

    def _route(
        self,
        src: str,
        dst: str,
        access_links: Set[str],
        gbr: Fraction,
        include_backhaul: bool,
    ) -> List[Tuple[str, str]]:
        topo = self.net.topology

        def allow(link: Link) -> bool:
            if link.id in access_links:
                return True
            if link.link_class in (LinkClass.MIDDLE_MILE, LinkClass.INTERNAL):
                return topo.fog_of(link.a) == self.fog_id and topo.fog_of(link.b) == self.fog_id
            if include_backhaul and link.link_class == LinkClass.BACKHAUL:
                return topo.fog_of(link.a) == self.fog_id or topo.fog_of(link.b) == self.fog_id
            return False

        return constrained_route(self.net, src, dst, allow, gbr)

    def slice_gbr_ok(self, slice_id: Optional[str], links: List[str], gbr: Fraction) -> bool:
        """Guaranteed admissions are capped at the slice's entitlement,
        never at borrowed capacity."""
        if gbr <= 0 or slice_id is None or self.slice_manager is None:
            return True
        all_links = self.net.topology.links
        new_per_class: Dict[str, int] = {}
        for lid in links:
            cls = LINK_TO_RESOURCE.get(all_links[lid].link_class)
            if cls is not None:
                new_per_class[cls] = new_per_class.get(cls, 0) + 1
        for cls, count in new_per_class.items():
            used = ZERO
            for flow in self.net.flows.values():
                if flow.slice_id != slice_id or flow.gbr <= 0:
                    continue
                for flid in flow.path.links():
                    if LINK_TO_RESOURCE.get(all_links[flid].link_class) == cls:
                        used += flow.gbr
            if used + count * gbr > self.slice_manager.entitled(slice_id, cls):
                return False
        return True

    def _build_candidate(
        self,
        label: str,
        src: str,
        end: str,
        access_links: Set[str],
        gbr: Fraction,
        slice_id: Optional[str],
        rat: RouteKind,
        access_used: Dict[str, str],
    ) -> Tuple[Optional[Candidate], bool]:
        """Returns (candidate or None, structurally-routable?)."""
        include_backhaul = rat == RouteKind.CLOUD_BOUND
        try:
            hops = self._route(src, end, access_links, gbr, include_backhaul)
        except NoRoute:
            try:
                self._route(src, end, access_links, ZERO, include_backhaul)
                return None, True
            except NoRoute:
                return None, False
        if not self.slice_gbr_ok(slice_id, [lid for _, lid in hops], gbr):
            return None, True
        return Candidate(label=label, hops=hops, end=end, rat=rat, access_used=access_used), True

    def _user_candidates(
        self, spec: FlowSpec, gbr: Fraction, slice_id: str
    ) -> Tuple[List[Candidate], bool]:
        src, dst = spec.src.ident, spec.dst.ident
        out: List[Candidate] = []
        structural = False
        for skind, slink in self.access_options(src):
            for dkind, dlink in self.access_options(dst):
                cand, ok = self._build_candidate(
                    label=f"{skind}+{dkind}",
                    src=src,
                    end=dst,
                    access_links={slink.id, dlink.id},
                    gbr=gbr,
                    slice_id=slice_id,
                    rat=RouteKind.INTRA_FOG_LOCAL,
                    access_used={src: skind, dst: dkind},
                )
                structural = structural or ok
                if cand is not None:
                    out.append(cand)
        return out, structural

    def _tail_candidates(
        self, spec: FlowSpec, gbr: Fraction, slice_id: str, target: str, rat: RouteKind, tag: str
    ) -> Tuple[List[Candidate], bool]:
        """Candidates from the source user to a fixed node (PoP or gateway)."""
        src = spec.src.ident
        out: List[Candidate] = []
        structural = False
        for skind, slink in self.access_options(src):
            cand, ok = self._build_candidate(
                label=f"{tag}({skind})",
                src=src,
                end=target,
                access_links={slink.id},
                gbr=gbr,
                slice_id=slice_id,
                rat=rat,
                access_used={src: skind},
            )
            structural = structural or ok
            if cand is not None:
                out.append(cand)
        return out, structural

    # -- the flow controller -------------------------------------------------

    def scoring_utilization(self, link_id: str) -> Fraction:
        """Offered load over capacity; scale-free, so decisions survive a
        uniform rescaling of link capacities."""
        link = self.net.topology.links[link_id]
        offered = self.net.gbr_reserved(link_id) + self.net.be_demand(link_id)
        return offered / link.capacity

    def handle_flow_request(self, spec: FlowSpec, *, reroute: bool = False) -> FlowDecision:
        try:
            qos, gbr, slice_id = self.classify_flow(spec)
        except SessionRequired:
            return FlowDecision.rejected(spec.flow_id, RejectReason.NOT_AUTHENTICATED)
        except UnknownUser:
            return FlowDecision.rejected(spec.flow_id, RejectReason.NOT_AUTHENTICATED)
        except PolicyDenied as exc:
            return FlowDecision.rejected(spec.flow_id, RejectReason.POLICY_DENIED, note=str(exc))
        except CloudUnreachable:
            return FlowDecision.rejected(spec.flow_id, RejectReason.CLOUD_UNREACHABLE)
        setup_ms = self.control_latency_ms()

        try:
            local = self.is_local_flow(spec)
        except UnknownEndpoint as exc:
            return FlowDecision.rejected(
                spec.flow_id, RejectReason.NO_COVERAGE, note=str(exc), setup_ms=setup_ms
            )

        if not self.access_options(spec.src.ident):
            return FlowDecision.rejected(spec.flow_id, RejectReason.NO_COVERAGE, setup_ms=setup_ms)

        note = ""
        candidates: List[Candidate] = []
        structural = False
        if spec.dst.kind == EndpointKind.USER:
            if not self.has_user(spec.dst.ident):
                return FlowDecision.rejected(
                    spec.flow_id, RejectReason.NO_COVERAGE, note="peer outside fog", setup_ms=setup_ms
                )
            if not self.access_options(spec.dst.ident):
                return FlowDecision.rejected(spec.flow_id, RejectReason.NO_COVERAGE, setup_ms=setup_ms)
            candidates, structural = self._user_candidates(spec, gbr, slice_id)
        elif spec.dst.kind == EndpointKind.CONTENT:
            if not (self.profile.cache_in_fog and self.cache) and not self.connected():
                return FlowDecision.rejected(spec.flow_id, RejectReason.FOG_ISOLATED, setup_ms=setup_ms)
            hit = False
            if self.profile.cache_in_fog and self.cache:
                hit = self.cache.lookup(spec.dst.ident, self.clock())
                note = "cache_hit" if hit else "cache_miss"
                if not hit:
                    # fetch-through fill happens as part of request handling
                    self.cache.insert(spec.dst.ident, self.clock())
            if hit:
                cands, ok = self._tail_candidates(
                    spec, gbr, slice_id, self.pop, RouteKind.INTRA_FOG_LOCAL, "cache"
                )
                candidates.extend(cands)
                structural = structural or ok
            if self.connected():
                cands, ok = self._tail_candidates(
                    spec, gbr, slice_id, self.net.topology.gateway_id(), RouteKind.CLOUD_BOUND, "fetch"
                )
                candidates.extend(cands)
                structural = structural or ok
            elif not hit:
                return FlowDecision.rejected(
                    spec.flow_id, RejectReason.FOG_ISOLATED, note=note, setup_ms=setup_ms
                )
        elif spec.dst.kind == EndpointKind.EXTERNAL:
            if not self.connected():
                return FlowDecision.rejected(spec.flow_id, RejectReason.FOG_ISOLATED, setup_ms=setup_ms)
            candidates, structural = self._tail_candidates(
                spec, gbr, slice_id, self.net.topology.gateway_id(), RouteKind.CLOUD_BOUND, "egress"
            )
        else:  # pragma: no cover - enum is closed
            raise UnknownEndpoint(str(spec.dst))

        labels = tuple(c.label for c in candidates)
        if not candidates:
            reason = RejectReason.GBR_ADMISSION_FAIL if structural else RejectReason.NO_ROUTE
            return FlowDecision.rejected(spec.flow_id, reason, note=note, setup_ms=setup_ms)

        mobile_of = {uid: self.context_of(uid).mobile for c in candidates for uid in c.access_used}
        chosen, discriminator = select_candidate(
            candidates,
            prefer_local=local,
            mobile_of=mobile_of,
            utilization=self.scoring_utilization,
        )
        path = FlowPath(
            flow_id=spec.flow_id,
            src=spec.src.ident,
            dst=chosen.end,
            hops=tuple(chosen.hops),
            rat_used=chosen.rat,
        )
        latency = sum(self.net.topology.links[lid].latency_ms for lid in path.links())
        self.install_flow(spec, path, qos, gbr, slice_id, latency, reroute=reroute)
        return FlowDecision(
            flow_id=spec.flow_id,
            accepted=True,
            path=path,
            qos=qos,
            slice_id=slice_id,
            discriminator=discriminator,
            candidates=labels,
            setup_ms=setup_ms,
            latency_ms=latency,
            note=note,
        )

    def install_flow(
        self,
        spec: FlowSpec,
        path: FlowPath,
        qos: QosClass,
        gbr: Fraction,
        slice_id: str,
        latency_ms: float,
        *,
        reroute: bool = False,
    ) -> InstalledFlow:
        flow = InstalledFlow(
            flow_id=spec.flow_id,
            path=path,
            demand=spec.demand,
            gbr=gbr,
            slice_id=slice_id,
            app_class=spec.app_class,
            start_ms=spec.start_ms,
            latency_ms=latency_ms,
            spec=spec,
        )
        self.net.install_flow(flow)
        racf = self.racfs[slice_id]
        racf.flows.add(spec.flow_id)
        for end in (spec.src, spec.dst):
            if end.kind == EndpointKind.USER and self.has_user(end.ident):
                self.context_of(end.ident).flows.add(spec.flow_id)
        if not reroute:
            self.charge(slice_id, spec.app_class)
        return flow

    def forget_flow(self, flow: InstalledFlow) -> None:
        """Drop all control-plane references to a removed flow."""
        for racf in self.racfs.values():
            racf.flows.discard(flow.flow_id)
            for ctx in racf.contexts.values():
                ctx.flows.discard(flow.flow_id)

    # -- abstraction -----------------------------------------------------------

    def fog_links(self, cls: Optional[str] = None) -> List[Link]:
        topo = self.net.topology
        out = []
        for link in topo.links.values():
            resource = LINK_TO_RESOURCE.get(link.link_class)
            if resource is None:
                continue
            if cls is not None and resource != cls:
                continue
            if topo.fog_of(link.a) == self.fog_id or topo.fog_of(link.b) == self.fog_id:
                out.append(link)
        return sorted(out, key=lambda l: l.id)

    def rat_abstract_view(self) -> AbstractResourceView:
        rats = {}
        for cls in ResourceClass.ALL:
            total = reserved = load = ZERO
            up = False
            for link in self.fog_links(cls):
                if not self.net.effective_up(link.id):
                    continue
                up = True
                total += link.capacity
                reserved += self.net.gbr_reserved(link.id)
                load += self.net.link_allocated(link.id) - self.net.gbr_reserved(link.id)
            rats[cls] = RatView(total_capacity=total, reserved_gbr=reserved, best_effort_load=load, up=up)
        return AbstractResourceView(rats=rats)

    def physical_capacity(self) -> Dict[str, Fraction]:
        """Per-class sliceable capacity: Up links net of unsliced reservations."""
        out: Dict[str, Fraction] = {}
        for cls in ResourceClass.ALL:
            total = ZERO
            for link in self.fog_links(cls):
                if not self.net.effective_up(link.id):
                    continue
                total += link.capacity
                for fid in self.net.flows_on_link(link.id):
                    flow = self.net.flows[fid]
                    if flow.slice_id is None and flow.gbr > 0:
                        total -= flow.gbr
            out[cls] = total
        return out

    # -- mobility ----------------------------------------------------------------

    def handover(self, user_id: str, new_attachment: Attachment) -> List[Tuple[str, FlowDecision]]:
        """Update the user's attachment and re-decide every active flow.

        Old and new paths swap within one event; flows without a feasible
        path afterwards are terminated with the rejection reason.
        """
        slice_id = self.slice_of_user(user_id)
        if not self.profile.mlmf_in_fog and not self.connected():
            raise CloudUnreachable(f"mobility state unreachable for {user_id}", user_id)
        ctx = self.racfs[slice_id].contexts[user_id]
        ctx.attachment = new_attachment
        if self.cloud is not None:
            self.cloud.push_context_update(self.fog_id, user_id, new_attachment, self.clock())
        results: List[Tuple[str, FlowDecision]] = []
        for fid in sorted(ctx.flows):
            flow = self.net.flows.get(fid)
            if flow is None:
                ctx.flows.discard(fid)
                continue
            decision = self.redecide_flow(flow)
            results.append((fid, decision))
        return results

    def redecide_flow(self, flow: InstalledFlow) -> FlowDecision:
        """Remove and freshly re-decide one installed flow (same id)."""
        self.net.remove_flow(flow.flow_id)
        spec: FlowSpec = flow.spec
        self.forget_flow(flow)
        if self.cloud is not None:
            self.cloud.forget_flow(flow)
        if (
            spec.dst.kind == EndpointKind.USER
            and not self.has_user(spec.dst.ident)
            and self.cloud is not None
        ):
            decision = self.cloud.setup_interfog_path(spec, reroute=True)
        else:
            decision = self.handle_flow_request(spec, reroute=True)
        if not decision.accepted and self.on_terminate is not None:
            self.on_terminate(flow, decision.reason)
        return decision
