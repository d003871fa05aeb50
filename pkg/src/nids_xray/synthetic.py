"""Synthetic labeled traffic for tests and demos.

A handful of client hosts exchange Poisson background traffic with two
servers; partway through, a new host floods one server with small
fixed-size packets at a much higher rate.  Benign per-host size profiles
sit well above the flood's 60-byte frames (with an admixture of small
ACKs so size alone is not a perfect separator at the packet level);
the flood's distinguishing signals are its arrival rate and its exactly
constant per-stream size statistics.
"""

from __future__ import annotations

import numpy as np

from .packets import PacketRecord

SERVER_IPS = ("10.0.0.1", "10.0.0.2")
ATTACKER_IP = "192.168.1.66"
ATTACKER_MAC = "aa:aa:aa:aa:aa:66"
VICTIM_IP = "10.0.0.1"


def _client(i: int) -> tuple[str, str]:
    return ("aa:aa:aa:aa:aa:%02x" % (16 + i), "192.168.1.%d" % (10 + i))


_SERVER_MACS = {
    "10.0.0.1": "bb:bb:bb:bb:bb:01",
    "10.0.0.2": "bb:bb:bb:bb:bb:02",
}


def synth_trace(
    seed: int = 0,
    benign_seconds: float = 240.0,
    benign_pps: float = 50.0,
    flood_start: float = 180.0,
    flood_seconds: float = 2.0,
    flood_pps: float = 5000.0,
    n_clients: int = 8,
    t0: float = 100000.0,
) -> list[PacketRecord]:
    if benign_pps <= 0.0:
        raise ValueError("benign_pps must be positive")
    rng = np.random.default_rng(seed)

    # per-client flows: a TCP and a UDP service, request and response legs
    flows = []
    for i in range(n_clients):
        mac, ip = _client(i)
        server = SERVER_IPS[i % 2]
        smac = _SERVER_MACS[server]
        req_mu = float(rng.uniform(350.0, 900.0))
        resp_mu = float(rng.uniform(500.0, 1300.0))
        sport_tcp = 30000 + i
        sport_udp = 31000 + i
        flows.append((mac, ip, smac, server, "TCP", sport_tcp, 443, req_mu))
        flows.append((smac, server, mac, ip, "TCP", 443, sport_tcp, resp_mu))
        flows.append((mac, ip, smac, server, "UDP", sport_udp, 53, req_mu * 0.5))
        flows.append((smac, server, mac, ip, "UDP", 53, sport_udp, resp_mu * 0.5))

    records: list[PacketRecord] = []
    t = 0.0
    n_flows = len(flows)
    while True:
        t += rng.exponential(1.0 / benign_pps)
        if t >= benign_seconds:
            break
        src_mac, src_ip, dst_mac, dst_ip, proto, sport, dport, mu = flows[
            int(rng.integers(0, n_flows))
        ]
        if rng.random() < 0.15:
            size = 60  # bare ACK; overlaps the flood's frame size
        else:
            size = int(np.clip(rng.normal(mu, mu * 0.12), 80, 1514))
        records.append(
            PacketRecord(
                ts=t0 + t,
                src_mac=src_mac,
                dst_mac=dst_mac,
                src_ip=src_ip,
                dst_ip=dst_ip,
                proto=proto,
                src_port=sport,
                dst_port=dport,
                frame_len=size,
                label=0,
            )
        )

    # periodic ARP chatter keeps the ARP parsing path exercised
    arp_t = 2.5
    while arp_t < benign_seconds:
        mac, ip = _client(int(rng.integers(0, n_clients)))
        records.append(
            PacketRecord(
                ts=t0 + arp_t,
                src_mac=mac,
                dst_mac="ff:ff:ff:ff:ff:ff",
                src_ip=ip,
                dst_ip=SERVER_IPS[int(rng.integers(0, 2))],
                proto="ARP",
                src_port=0,
                dst_port=0,
                frame_len=60,
                label=0,
            )
        )
        arp_t += 5.0

    # the flood: one new socket stream, constant 60-byte frames;
    # flood_pps <= 0 means a benign-only trace
    t = flood_start
    while flood_pps > 0.0 and t < flood_start + flood_seconds:
        t += float(rng.exponential(1.0 / flood_pps))
        if t >= flood_start + flood_seconds:
            break
        records.append(
            PacketRecord(
                ts=t0 + t,
                src_mac=ATTACKER_MAC,
                dst_mac=_SERVER_MACS[VICTIM_IP],
                src_ip=ATTACKER_IP,
                dst_ip=VICTIM_IP,
                proto="TCP",
                src_port=40000,
                dst_port=80,
                frame_len=60,
                label=1,
            )
        )

    records.sort(key=lambda r: r.ts)
    return records
