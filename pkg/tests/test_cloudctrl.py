from fractions import Fraction

import pytest

from fognet.cloudctrl import FogIsolated
from fognet.engine import Engine
from fognet.fogctrl import Attachment, Endpoint, RejectReason
from helpers import CONTENT, VOIP, WEB, CloudEnv

F = Fraction


class TestExternalPath:
    def test_best_effort_web_accepted_on_idle_network(self):
        env = CloudEnv()
        decision = env.cloud.setup_external_path(env.spec("w1", "f1-u1", Endpoint.external(), app_class=WEB, demand=1))
        assert decision.accepted
        assert decision.path.nodes()[-1] == "gw"
        assert "bh-f1" in decision.path.links()

    def test_isolated_fog_rejected(self):
        env = CloudEnv()
        env.set_backhaul("f1", False)
        decision = env.cloud.setup_external_path(env.spec("w1", "f1-u1", Endpoint.external(), app_class=WEB, demand=1))
        assert not decision.accepted and decision.reason == RejectReason.FOG_ISOLATED

    def test_gbr_admission_threshold_is_backhaul_residual(self):
        # backhaul capacity 100; make voip guarantee large enough to matter
        env = CloudEnv(policy=None)
        env.policy[VOIP] = env.policy[VOIP]
        big = env.spec("g1", "f1-u1", Endpoint.external(), app_class=VOIP, demand=F(1, 2))
        # reserve 99.6 of the backhaul by hand: threshold left = 0.4 < 0.5
        from fognet.dataplane import FlowPath, InstalledFlow, RouteKind

        env.net.install_flow(
            InstalledFlow(
                flow_id="fill",
                path=FlowPath(
                    flow_id="fill", src="pop-f1", dst="gw", hops=(("pop-f1", "bh-f1"),), rat_used=RouteKind.CLOUD_BOUND
                ),
                demand=F(498, 5),
                gbr=F(498, 5),
                slice_id="s1",
                app_class=VOIP,
                start_ms=0,
                latency_ms=10.0,
            )
        )
        decision = env.cloud.setup_external_path(big)
        assert not decision.accepted and decision.reason == RejectReason.GBR_ADMISSION_FAIL
        # a guarantee that fits the remaining 0.4 still passes
        env.policy[VOIP] = type(env.policy[VOIP])(app_class=VOIP, qos=env.policy[VOIP].qos, gbr_rate=F(2, 5))
        for fog in env.fogs.values():
            fog.policy[VOIP] = env.policy[VOIP]
        small = env.spec("g2", "f1-u1", Endpoint.external(), app_class=VOIP, demand=F(2, 5))
        decision = env.cloud.setup_external_path(small)
        assert decision.accepted


class TestInterFogPath:
    def test_path_crosses_exactly_two_backhauls(self):
        env = CloudEnv()
        decision = env.cloud.setup_interfog_path(env.spec("x1", "f1-u1", "f2-u1", app_class=VOIP))
        assert decision.accepted
        backhauls = [l for l in decision.path.links() if l.startswith("bh-")]
        assert backhauls == ["bh-f1", "bh-f2"]
        assert "gw" in decision.path.nodes()
        assert decision.path.nodes()[0] == "f1-u1" and decision.path.nodes()[-1] == "f2-u1"

    def test_remote_fog_isolated(self):
        env = CloudEnv()
        env.set_backhaul("f2", False)
        decision = env.cloud.setup_interfog_path(env.spec("x1", "f1-u1", "f2-u1", app_class=VOIP))
        assert not decision.accepted and decision.reason == RejectReason.FOG_ISOLATED

    def test_end_to_end_latency_is_hop_sum(self):
        env = CloudEnv()
        decision = env.cloud.setup_interfog_path(env.spec("x1", "f1-u1", "f2-u1", app_class=VOIP))
        assert decision.accepted
        # hand sum: wlan 1 + internal 0 + mm 2 + internal 0 + bh 10 + bh 10
        #           + internal 0 + mm 2 + internal 0 + wlan 1 = 26
        assert decision.latency_ms == 26.0
        by_hand = sum(env.topo.links[l].latency_ms for l in decision.path.links())
        assert decision.latency_ms == by_hand

    def test_both_fog_contexts_track_the_flow(self):
        env = CloudEnv()
        env.cloud.setup_interfog_path(env.spec("x1", "f1-u1", "f2-u1", app_class=VOIP))
        assert "x1" in env.fogs["f1"].context_of("f1-u1").flows
        assert "x1" in env.fogs["f2"].context_of("f2-u1").flows
        assert "x1" in env.cloud.interfog_routes


class TestBackhaulChange:
    def _mixed_flows(self, env):
        a = env.fogs["f1"].handle_flow_request(env.spec("local1", "f1-u1", "f1-u2", app_class=VOIP))
        b = env.cloud.setup_external_path(env.spec("ext1", "f1-u1", Endpoint.external(), app_class=WEB, demand=1))
        assert a.accepted and b.accepted
        return a, b

    def test_only_local_flows_zero_terminated(self):
        env = CloudEnv()
        terminated = []
        env.cloud.on_flow_terminated = lambda flow, reason: terminated.append(flow.flow_id)
        env.fogs["f1"].handle_flow_request(env.spec("local1", "f1-u1", "f1-u2", app_class=VOIP))
        env.set_backhaul("f1", False)
        assert terminated == []
        assert "local1" in env.net.flows

    def test_exactly_the_external_flow_terminated(self):
        env = CloudEnv()
        terminated = []
        env.cloud.on_flow_terminated = lambda flow, reason: terminated.append((flow.flow_id, reason))
        self._mixed_flows(env)
        env.set_backhaul("f1", False)
        assert terminated == [("ext1", RejectReason.FOG_ISOLATED)]
        assert "local1" in env.net.flows and "ext1" not in env.net.flows

    def test_flap_sequence_matches_hand_trace(self):
        env = CloudEnv()
        log = []
        env.cloud.on_flow_terminated = lambda flow, reason: log.append(flow.flow_id)
        env.fogs["f1"].handle_flow_request(env.spec("l1", "f1-u1", "f1-u2", app_class=VOIP))
        env.cloud.setup_external_path(env.spec("e1", "f1-u1", Endpoint.external(), app_class=WEB, demand=1))
        env.cloud.setup_interfog_path(env.spec("x1", "f1-u2", "f2-u1", app_class=VOIP))
        env.set_backhaul("f1", False, now_ms=10)   # kills e1 and x1, l1 survives
        env.set_backhaul("f1", True, now_ms=20)
        d = env.cloud.setup_external_path(env.spec("e2", "f1-u1", Endpoint.external(), app_class=WEB, demand=1))
        assert d.accepted
        env.set_backhaul("f1", False, now_ms=30)   # kills e2
        assert log == ["e1", "x1", "e2"]
        assert sorted(env.net.flows) == ["l1"]
        assert env.cloud.transitions[-3:] == [
            (10, "f1", "Isolated"),
            (20, "f1", "Connected"),
            (30, "f1", "Isolated"),
        ]

    def test_no_installed_path_crosses_down_backhaul(self):
        env = CloudEnv()
        self._mixed_flows(env)
        env.set_backhaul("f1", False)
        for flow in env.net.flows.values():
            assert "bh-f1" not in flow.path.links()

    def test_isolation_membership_invariant(self):
        """While isolated: survivors at onset are local; new local flows admitted."""
        env = CloudEnv()
        self._mixed_flows(env)
        env.set_backhaul("f1", False)
        survivors = set(env.net.flows)
        assert survivors == {"local1"}
        d = env.fogs["f1"].handle_flow_request(env.spec("local2", "f1-u2", "f1-u1", app_class=VOIP))
        assert d.accepted
        miss = env.fogs["f1"].handle_flow_request(
            env.spec("c1", "f1-u1", Endpoint.content("4"), app_class=CONTENT, demand=1)
        )
        assert not miss.accepted and miss.reason == RejectReason.FOG_ISOLATED


class TestSync:
    def test_noop_sync_when_no_deltas(self):
        env = CloudEnv()
        env.cloud.sync_fog_state("f1")
        assert env.cloud.sync_records["f1"].pending == []

    def test_sync_while_isolated_raises_and_retains(self):
        env = CloudEnv()
        env.set_backhaul("f1", False)
        env.fogs["f1"].handover("f1-u1", Attachment(wlan_cluster=None, macro=True))
        assert len(env.cloud.sync_records["f1"].pending) == 1
        with pytest.raises(FogIsolated):
            env.cloud.sync_fog_state("f1")
        assert len(env.cloud.sync_records["f1"].pending) == 1

    def test_queued_updates_drain_after_reconnect(self):
        env = CloudEnv()
        env.set_backhaul("f1", False)
        moves = [
            Attachment(wlan_cluster=None, macro=True),
            Attachment(wlan_cluster="c-f1", macro=True),
            Attachment(wlan_cluster=None, macro=True),
        ]
        for i, att in enumerate(moves):
            env.fogs["f1"].clock = lambda t=i: 100 + t
            env.fogs["f1"].handover("f1-u1", att)
        assert len(env.cloud.sync_records["f1"].pending) == 3
        env.set_backhaul("f1", True, now_ms=500)  # no engine: sync runs inline
        assert env.cloud.sync_records["f1"].pending == []
        assert env.cloud.context_replica["f1-u1"][0] == moves[-1]

    def test_interleaved_two_fog_updates_replay_in_event_time(self):
        env = CloudEnv()
        env.set_backhaul("f1", False)
        env.set_backhaul("f2", False)
        updates = [
            (5, "f1", "f1-u1", Attachment(wlan_cluster=None, macro=True)),
            (7, "f2", "f2-u1", Attachment(wlan_cluster=None, macro=True)),
            (9, "f1", "f1-u1", Attachment(wlan_cluster="c-f1", macro=True)),
            (11, "f2", "f2-u1", Attachment(wlan_cluster="c-f2", macro=True)),
        ]
        for t, fog_id, user, att in updates:
            env.fogs[fog_id].clock = lambda t=t: t
            env.fogs[fog_id].handover(user, att)
        env.set_backhaul("f2", True, now_ms=50)
        env.set_backhaul("f1", True, now_ms=60)
        # replay oracle: apply all updates in event-time order
        replica = {}
        for t, fog_id, user, att in sorted(updates, key=lambda u: u[0]):
            replica[user] = att
        for user, att in replica.items():
            assert env.cloud.context_replica[user][0] == att

    def test_connected_updates_flow_through_scheduled_messages(self):
        engine = Engine()
        env = CloudEnv(engine=engine, rtt_ms=5)
        env.fogs["f1"].clock = engine.now
        env.fogs["f1"].handover("f1-u1", Attachment(wlan_cluster=None, macro=True))
        # not yet applied: the update rides a control message
        assert env.cloud.context_replica["f1-u1"][0].wlan_cluster == "c-f1"
        engine.run_until(10)
        assert env.cloud.context_replica["f1-u1"][0].wlan_cluster is None

    def test_eventual_consistency_at_quiescence(self):
        engine = Engine()
        env = CloudEnv(engine=engine, rtt_ms=5)
        fog = env.fogs["f1"]
        fog.clock = engine.now
        fog.handover("f1-u1", Attachment(wlan_cluster=None, macro=True))
        fog.handover("f1-u2", Attachment(wlan_cluster=None, macro=True))
        engine.run_until(100)
        for user in ("f1-u1", "f1-u2"):
            assert env.cloud.context_replica[user][0] == fog.context_of(user).attachment
