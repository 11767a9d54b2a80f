import random
from fractions import Fraction

import pytest

from fognet.dataplane import (
    AddressPool,
    DuplicateFlow,
    FlowPath,
    InstalledFlow,
    LinkDown,
    LruCache,
    NetworkState,
    NoRoute,
    NotAuthenticated,
    PoolExhausted,
    RouteKind,
    UnknownFlow,
    mesh_route,
)
from fognet.topology import LinkClass, build_from_config
from helpers import two_cluster_doc
from oracles import ReferenceLru, best_path, enumerate_simple_paths

F = Fraction


def make_net(**kw):
    return NetworkState(build_from_config(two_cluster_doc(**kw)))


def flow(fid, hops, *, demand=F(1), gbr=F(0), rat=RouteKind.INTRA_FOG_LOCAL, slice_id="s1"):
    path = FlowPath(flow_id=fid, src=hops[0][0], dst="x", hops=tuple(hops), rat_used=rat)
    return InstalledFlow(
        flow_id=fid,
        path=path,
        demand=demand,
        gbr=gbr,
        slice_id=slice_id,
        app_class="t",
        start_ms=0,
        latency_ms=0.0,
    )


class TestFlowTables:
    def test_single_hop_macro_entry(self):
        net = make_net()
        net.install_flow(flow("f1", [("u5", "ma-u5")]))
        assert net.tables.entries_at("u5") == {"f1": ("ma-u5", "s1")}
        assert net.tables.entries_at("macro") == {}

    def test_pop_to_user_chain_has_four_entries(self):
        net = make_net()
        hops = [("pop", "in-pop-mmap"), ("mmap", "mm-mmap-mmc1"), ("mmc1", "in-wap1-mmc1"), ("wap1", "wl-u1-wap1")]
        net.install_flow(flow("f1", hops))
        for node, lid in hops:
            assert net.tables.entries_at(node)["f1"] == (lid, "s1")
        assert len([1 for n, _ in hops]) == 4

    def test_install_remove_restores_snapshot(self):
        net = make_net()
        before = net.tables.snapshot()
        net.install_flow(flow("f1", [("u1", "wl-u1-wap1"), ("wap1", "wl-u2-wap1")]))
        net.remove_flow("f1")
        assert net.tables.snapshot() == before

    def test_remove_keeps_other_flow(self):
        net = make_net()
        net.install_flow(flow("a", [("u1", "wl-u1-wap1"), ("wap1", "wl-u2-wap1")]))
        net.install_flow(flow("b", [("u2", "wl-u2-wap1"), ("wap1", "wl-u1-wap1")]))
        net.remove_flow("a")
        assert "b" in net.tables.entries_at("u2")
        assert net.tables.entries_at("u1") == {}

    def test_duplicate_and_unknown(self):
        net = make_net()
        net.install_flow(flow("a", [("u5", "ma-u5")]))
        with pytest.raises(DuplicateFlow):
            net.install_flow(flow("a", [("u5", "ma-u5")]))
        with pytest.raises(UnknownFlow):
            net.remove_flow("nope")

    def test_down_link_rejected(self):
        net = make_net()
        net.set_link_state("ma-u5", False)
        with pytest.raises(LinkDown):
            net.install_flow(flow("a", [("u5", "ma-u5")]))

    def test_random_trace_matches_shadow_map(self):
        net = make_net()
        rng = random.Random(11)
        shadow = {}  # flow -> hops
        serial = 0
        for _ in range(300):
            if shadow and rng.random() < 0.45:
                fid = rng.choice(sorted(shadow))
                net.remove_flow(fid)
                del shadow[fid]
            else:
                serial += 1
                fid = f"f{serial}"
                hops = [("u1", "wl-u1-wap1"), ("wap1", "wl-u2-wap1")] if rng.random() < 0.5 else [("u5", "ma-u5")]
                net.install_flow(flow(fid, hops))
                shadow[fid] = hops
            expected = {}
            for fid, hops in shadow.items():
                for node, lid in hops:
                    expected.setdefault(node, {})[fid] = (lid, "s1")
            assert net.tables.snapshot() == expected

    def test_dump_stable_golden(self):
        net = make_net()
        net.install_flow(flow("f2", [("u5", "ma-u5")], slice_id=None))
        net.install_flow(flow("f1", [("u1", "wl-u1-wap1"), ("wap1", "wl-u2-wap1")]))
        assert net.tables.dump() == (
            "u1\tf1\twl-u1-wap1\ts1\n"
            "u5\tf2\tma-u5\t-\n"
            "wap1\tf1\twl-u2-wap1\ts1"
        )

    def test_installed_flow_walk_terminates(self):
        net = make_net()
        hops = [("u1", "wl-u1-wap1"), ("wap1", "in-wap1-mmc1"), ("mmc1", "mm-mmap-mmc1")]
        net.install_flow(flow("f1", hops))
        # follow the flow-table entries hop by hop from the source
        node, visited = "u1", ["u1"]
        while "f1" in net.tables.entries_at(node):
            lid, _ = net.tables.entries_at(node)["f1"]
            node = net.topology.links[lid].other(node)
            assert node not in visited, "forwarding loop"
            visited.append(node)
            assert len(visited) <= len(net.topology.nodes)
        assert node == "mmap"


def _mesh_allow(net):
    def allow(link):
        return link.link_class in (LinkClass.MIDDLE_MILE, LinkClass.INTERNAL)

    return allow


class TestMeshRoute:
    def test_src_equals_dst(self):
        net = make_net()
        assert mesh_route(net, "mmc1", "mmc1") == []

    def test_linear_chain(self):
        net = make_net()
        hops = mesh_route(net, "mmap", "wap2")
        assert hops == [("mmap", "mm-mmap-mmc2"), ("mmc2", "in-wap2-mmc2")]

    def test_no_route_when_link_down(self):
        net = make_net()
        net.set_link_state("mm-mmap-mmc1", False)
        with pytest.raises(NoRoute):
            mesh_route(net, "mmap", "wap1")

    def test_residual_filter_diverts(self):
        net = make_net(mesh_cross_link=True)
        # reserve most of the direct link mmap->mmc2
        net.install_flow(flow("g", [("mmap", "mm-mmap-mmc2")], demand=F(45), gbr=F(45)))
        hops = mesh_route(net, "mmap", "mmc2", min_residual=F(10))
        assert [l for _, l in hops] == ["mm-mmap-mmc1", "mm-mmc1-mmc2"]

    def test_random_meshes_match_exhaustive_oracle(self):
        rng = random.Random(23)
        for trial in range(40):
            # random mesh of one AP and five clients with random extra links
            nodes = [
                {"id": "gw", "kind": "CloudGateway"},
                {"id": "pop", "kind": "PoP", "fog": "f"},
                {"id": "macro", "kind": "MacroBS", "fog": "f"},
                {"id": "mmap", "kind": "MiddleMileAP", "fog": "f"},
            ]
            links = [
                {"id": "bh", "a": "pop", "b": "gw", "class": "Backhaul", "capacity": 100, "latency_ms": 1},
                {"id": "in-pm", "a": "pop", "b": "macro", "class": "Internal", "capacity": 100, "latency_ms": 0},
                {"id": "in-pa", "a": "pop", "b": "mmap", "class": "Internal", "capacity": 100, "latency_ms": 0},
            ]
            clients = [f"m{i}" for i in range(5)]
            clusters = []
            for i, cid in enumerate(clients):
                nodes.append({"id": cid, "kind": "MiddleMileClient", "fog": "f"})
                nodes.append({"id": f"w{i}", "kind": "WlanAP", "fog": "f"})
                nodes.append({"id": f"u{i}", "kind": "User", "fog": "f"})
                links.append({"id": f"in-w{i}", "a": f"w{i}", "b": cid, "class": "Internal", "capacity": 100, "latency_ms": 0})
                links.append({"id": f"wl-u{i}", "a": f"u{i}", "b": f"w{i}", "class": "WlanAccess", "capacity": 20, "latency_ms": 1})
                clusters.append({"id": f"c{i}", "wlan_aps": [f"w{i}"], "users": [f"u{i}"]})
                anchor = "mmap" if i == 0 else rng.choice(clients[:i] + ["mmap"])
                links.append(
                    {"id": f"mm-{anchor}-{cid}", "a": anchor, "b": cid, "class": "MiddleMile",
                     "capacity": rng.choice([5, 20, 50]), "latency_ms": 2}
                )
            for _ in range(rng.randint(0, 3)):
                a, b = rng.sample(clients, 2)
                lid = f"mm-x-{a}-{b}-{trial}"
                if not any(l["id"] == lid for l in links):
                    links.append({"id": lid, "a": a, "b": b, "class": "MiddleMile",
                                  "capacity": rng.choice([5, 20, 50]), "latency_ms": 2})
            net = NetworkState(build_from_config({"nodes": nodes, "links": links, "clusters": clusters}))
            src, dst = rng.sample(clients + ["mmap", "pop"], 2)
            need = F(rng.choice([0, 10, 30]))
            expected = best_path(
                enumerate_simple_paths(net, src, dst, _mesh_allow(net), min_residual=need), dst
            )
            if expected is None:
                with pytest.raises(NoRoute):
                    mesh_route(net, src, dst, min_residual=need)
            else:
                assert mesh_route(net, src, dst, min_residual=need) == expected


class TestLruCache:
    def test_empty_cache_misses(self):
        cache = LruCache(2)
        assert cache.lookup("x") is False
        assert (cache.hits, cache.misses) == (0, 1)

    def test_insert_then_hit(self):
        cache = LruCache(2)
        cache.insert("x")
        assert cache.lookup("x") is True
        assert cache.hits == 1

    def test_capacity_two_hand_trace(self):
        cache = LruCache(2)
        trace = ["x", "y", "z", "x"]
        results = []
        for cid in trace:
            hit = cache.lookup(cid)
            if not hit:
                cache.insert(cid)
            results.append(hit)
        # hand-traced LRU: x miss, y miss, z miss evicts x, x miss evicts y
        assert results == [False, False, False, False]
        assert cache.resident() == ["z", "x"]
        assert (cache.hits, cache.misses) == (0, 4)

    def test_thousand_op_trace_matches_reference(self):
        rng = random.Random(77)
        cache = LruCache(8)
        ref = ReferenceLru(8)
        evictions = []
        for _ in range(1000):
            cid = str(rng.randint(1, 30))
            hit = cache.lookup(cid)
            if not hit:
                evicted = cache.insert(cid)
                if evicted is not None:
                    evictions.append(evicted)
            assert hit == ref.access(cid)
            assert cache.resident() == ref.items
        assert evictions == ref.evictions
        assert cache.hits == ref.hits and cache.misses == ref.misses

    def test_counters_close(self):
        cache = LruCache(3)
        rng = random.Random(5)
        for _ in range(200):
            cid = str(rng.randint(1, 9))
            if not cache.lookup(cid):
                cache.insert(cid)
            assert cache.hits + cache.misses == cache.lookups

    def test_peek_does_not_count(self):
        cache = LruCache(2)
        cache.insert("a")
        cache.insert("b")
        assert cache.peek("a") is True
        assert cache.lookups == 0
        # peek must not refresh recency either
        cache.insert("c")
        assert cache.resident() == ["b", "c"]


class TestAddressPool:
    def test_lowest_free_first(self):
        pool = AddressPool("fog1", 4)
        assert pool.assign("u1", authenticated=True) == "10.0.0.0"
        assert pool.assign("u2", authenticated=True) == "10.0.0.1"

    def test_idempotent_per_user(self):
        pool = AddressPool("fog1", 4)
        first = pool.assign("u1", authenticated=True)
        assert pool.assign("u1", authenticated=True) == first
        assert pool.assigned_count() == 1

    def test_exhaustion_exact(self):
        pool = AddressPool("fog1", 3)
        addresses = {pool.assign(f"u{i}", authenticated=True) for i in range(3)}
        assert len(addresses) == 3
        with pytest.raises(PoolExhausted):
            pool.assign("u99", authenticated=True)

    def test_requires_session(self):
        pool = AddressPool("fog1", 3)
        with pytest.raises(NotAuthenticated):
            pool.assign("u1", authenticated=False)
