"""Acceptance criteria A1-A9.

Every test records a one-line verdict in ``RESULTS``; ``conftest.py`` prints
the lines at the end of the session.  Running this file directly prints them
as well.
"""

import random
import statistics
import time
from collections import Counter

import pytest

from hostlb.bwmon import LinkModel, estimate_capacity, vps_probe
from hostlb.config import LinkSpec, ScenarioConfig
from hostlb.controller import Controller, Mode, compute_weights, default_interfaces
from hostlb.dataplane import HOST_PORT, Bucket, GroupEntry, Output, PacketDescriptor, Switch, TcpFlag, select_bucket
from hostlb.metrics import write_csv
from hostlb.netsim import SessionState, Simulation, WorkloadConfig, run
from hostlb.presets import base_config

RESULTS: dict = {}

FLUID_T1 = 8.0
WRR_IDEAL = 100 * 100_000 * 8 / 30e6
A4_SEEDS = range(42, 62)


def verdict(cid, ok, detail):
    RESULTS[cid] = (bool(ok), detail)
    assert ok, f"{cid}: {detail}"


def static(n_or_links, mode, seed=42, **wl):
    links = [10.0] * n_or_links if isinstance(n_or_links, int) else list(n_or_links)
    return ScenarioConfig(links, mode, WorkloadConfig(**wl), seed=seed)


def within(x, ref, tol):
    return abs(x - ref) / ref <= tol


def test_a1_single_link():
    t0 = time.perf_counter()
    fluid = run(static(1, "Single(0)")).total_time
    runtime = time.perf_counter() - t0
    over = run(static(1, "Single(0)", per_request_overhead=0.008)).total_time
    over_c2 = run(static(1, "Single(0)", per_request_overhead=0.008, concurrency=2)).total_time
    ok = within(fluid, FLUID_T1, 0.005) and 8.3 <= over <= 8.5 and runtime < 1.0
    verdict("A1", ok, f"fluid {fluid:.3f} s (8.00 +-0.5%), runtime {runtime:.3f} s (<1); "
                      f"8 ms overhead at C=20 {over:.3f} s (want [8.3, 8.5]); same overhead at C=2 {over_c2:.3f} s")


def test_a2_rr_halving():
    t = run(static(2, "RR")).total_time
    verdict("A2", within(t, FLUID_T1 / 2, 0.01), f"RR 2x10 Mbps {t:.3f} s (want {FLUID_T1 / 2:.2f} +-1%)")


def test_a3_interface_scaling():
    t1 = run(static(1, "RR")).total_time
    rows, ok = [], True
    for n in range(1, 6):
        ideal = t1 / n
        rr = run(static(n, "RR")).total_time
        gh = run(static(n, "GroupHash")).total_time
        ok &= within(rr, ideal, 0.01) and within(gh, ideal, 0.06)
        rows.append(f"N={n} RR {100 * (rr / ideal - 1):+.1f}% GH {100 * (gh / ideal - 1):+.1f}%")
    verdict("A3", ok, "deviation from T1/N (RR 1%, GroupHash 6%): " + "; ".join(rows))


def test_a4_concurrency():
    def median_time(mode, c):
        return statistics.median(run(static(2, mode, seed=s, concurrency=c)).total_time for s in A4_SEEDS)

    cs = list(range(2, 21, 2))
    gh = [median_time("GroupHash", c) for c in cs]
    rr2, rr20 = median_time("RR", 2), median_time("RR", 20)
    non_increasing = all(b <= a + 1e-9 for a, b in zip(gh, gh[1:]))
    ok = gh[0] > rr2 and non_increasing and within(gh[-1], rr20, 0.05)
    verdict("A4", ok, f"medians over {len(A4_SEEDS)} seeds: C=2 GH {gh[0]:.3f} vs RR {rr2:.3f}; "
                      f"GH over C=2..20 non-increasing={non_increasing} "
                      f"[{', '.join(f'{x:.2f}' for x in gh)}]; C=20 GH {gh[-1]:.3f} vs RR {rr20:.3f} (5%)")


def test_a5_weighted():
    wrr = run(static([10.0, 20.0], "WRR")).total_time
    gw = run(static([10.0, 20.0], "GroupWeighted")).total_time
    ok = within(wrr, WRR_IDEAL, 0.02) and within(gw, WRR_IDEAL, 0.07)
    verdict("A5", ok, f"ideal {WRR_IDEAL:.3f} s; WRR {wrr:.3f} s ({100 * (wrr / WRR_IDEAL - 1):+.1f}%, 2%); "
                      f"GroupWeighted {gw:.3f} s ({100 * (gw / WRR_IDEAL - 1):+.1f}%, 7%)")


@pytest.fixture(scope="module")
def e4():
    return base_config("e4_synthetic")


def test_a6_dynamic_ordering(e4):
    means = {m: run(e4.with_(mode=m)) for m in ("RR", "MBW", "WRR", "Single(1)")}
    opt = means["WRR"].mean_optimal
    rr, mbw, wrr, s1 = (means[m].mean_aggregated for m in ("RR", "MBW", "WRR", "Single(1)"))
    ok = abs(opt - 23.2) < 1e-9 and rr <= mbw <= wrr and wrr >= 0.85 * 23.2 and s1 <= 10.0 + 1e-9
    verdict("A6", ok, f"optimal {opt:.2f}; RR {rr:.2f} <= MBW {mbw:.2f} <= WRR {wrr:.2f} "
                      f"(>= {0.85 * 23.2:.2f}); Single(1) {s1:.2f} (<= 10)")


def test_a7_timeout_monotone(e4):
    means = {s: run(e4.with_workload(socket_timeout=s)).mean_aggregated for s in (3, 10, 30)}
    ok = means[3] >= means[10] >= means[30]
    verdict("A7", ok, "WRR mean aggregated: " + ", ".join(f"timeout {s} s {v:.2f}" for s, v in means.items()))


def test_a8_estimator():
    caps = (5, 10, 20, 50)
    clean = {c: estimate_capacity(vps_probe(LinkModel(c * 1e6, 0.002))) for c in caps}
    noisy = {c: estimate_capacity(vps_probe(LinkModel(c * 1e6, 0.002, 0.001), repeats=50, rng_seed=42))
             for c in caps}
    ok = all(within(clean[c], c, 0.001) for c in caps) and all(within(noisy[c], c, 0.10) for c in caps)
    verdict("A8", ok, "noiseless " + ", ".join(f"{c}->{clean[c]:.4f}" for c in caps)
            + "; 1 ms jitter x50 " + ", ".join(f"{c}->{noisy[c]:.2f}" for c in caps))


def _check_run(sim, rep):
    sw = sim.switch
    eth_rx = sum(sw.port_stats(f"eth{k}").rx_bytes for k in range(sw.n_external))
    arp = sum(ev.pkt.size for ev in sim.controller.arp_replies)
    conserved = sw.port_stats(HOST_PORT).tx_bytes - arp == eth_rx
    one_port = all(len({p for p in s.ports_seen if p != HOST_PORT}) <= 1 for s in sim.sessions.values())
    return conserved, one_port, sim.nat_violations == 0


def _nat_round_trip(rng, trials=500):
    ctl = Controller(default_interfaces(4), Mode.RR)
    sw = Switch(4)
    ctl.install_base_rules(sw)
    for _ in range(trials):
        port = rng.randrange(1024, 65536)
        if port in ctl.sessions:
            continue
        pkt = PacketDescriptor(eth_src=ctl.internal_mac, ip_src=ctl.internal_ip, ip_dst="203.0.113.10",
                               tcp_src_port=port, tcp_dst_port=80, flags=TcpFlag.SYN, size=64)
        ctl.handle_packet_in(sw, pkt, 0.0)
        out = sw.receive(pkt, HOST_PORT)
        back = sw.receive(PacketDescriptor(ip_src="203.0.113.10", ip_dst=out.pkt.ip_src, tcp_src_port=80,
                                           tcp_dst_port=port, size=1500), out.port)
        if (back.port, back.pkt.ip_dst, back.pkt.eth_dst, back.pkt.tcp_dst_port) != (
                HOST_PORT, ctl.internal_ip, ctl.internal_mac, port):
            return False
    return True


def _wrr_epochs():
    for bw in ([10, 20], [10, 10], [0, 10], [3, 5, 7], [1, 1, 1, 97], [13, 29, 41, 5, 2]):
        ctl = Controller(default_interfaces(len(bw)), Mode.WRR, bandwidth_source=lambda t, bw=bw: bw)
        sw = Switch(len(bw))
        w = compute_weights(bw)
        for k in range(3 * sum(w.values())):
            ctl.handle_packet_in(sw, PacketDescriptor(tcp_src_port=10000 + k, flags=TcpFlag.SYN), 0.0)
        if Counter(ctl.sessions.values()) != Counter({i: 3 * c for i, c in w.items()}):
            return False
    return True


def _bucket_share(rng, weights, n=10_000):
    g = GroupEntry(1, [Bucket(w, (Output(f"eth{k}"),)) for k, w in enumerate(weights)])
    hits = Counter()
    for _ in range(n):
        pkt = PacketDescriptor(ip_src=".".join(str(rng.randrange(256)) for _ in range(4)), ip_dst="203.0.113.10",
                               tcp_src_port=rng.randrange(1024, 65536), tcp_dst_port=80)
        hits[select_bucket(g, pkt, 42)] += 1
    total = sum(weights)
    return max(abs(hits[k] / n - w / total) for k, w in enumerate(weights))


def _csv_bytes(cfg, path):
    return [p.read_bytes() for p in write_csv(run(cfg), path)]


def test_a9_invariants(e4, tmp_path):
    rng = random.Random(42)
    checks = {}
    runs = [static(3, "GroupHash"), static([10.0, 20.0], "GroupWeighted"), static(2, "RR", concurrency=2),
            e4.with_(mode="WRR"), e4.with_(mode="MBW", duration=40)]
    conserved = one_port = nat = True
    for cfg in runs:
        sim = Simulation(cfg)
        c, o, n = _check_run(sim, sim.run())
        conserved &= c
        one_port &= o
        nat &= n
    checks["no-reordering"] = one_port
    checks["byte-conservation"] = conserved
    checks["NAT"] = nat and _nat_round_trip(rng)
    checks["WRR-epochs"] = _wrr_epochs()
    share = max(_bucket_share(rng, (1, 2)), _bucket_share(rng, (33, 67)), _bucket_share(rng, (1, 1, 1)))
    checks["bucket-share"] = share <= 0.02
    checks["determinism"] = all(
        _csv_bytes(cfg, tmp_path / f"{k}a") == _csv_bytes(cfg, tmp_path / f"{k}b")
        for k, cfg in enumerate([e4, static(3, "GroupHash")]))
    ok = all(checks.values())
    verdict("A9", ok, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
            + f" (max bucket share error {100 * share:.2f} pp)")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
