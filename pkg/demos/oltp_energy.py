"""Energy per transaction at low load, and where the server catches up.

Run:  python demos/oltp_energy.py        (about a minute)
"""

from wattsim import sign_changes, sweep
from wattsim.report import run_scenario

# 20 clients: the cluster sizes itself down to a single node.
for mode in ("server", "cluster-reactive"):
    (r,) = run_scenario("fig5-oltp", {"mode": mode})
    s = r.summary
    print(f"{mode:17s} p50 {s['response_p50_s'] * 1e3:5.1f} ms   {s['avg_j_per_query'] * 1e3:4.0f} mJ/transaction")

# Sweep the client count. Each simulated client stands for ten real ones to keep this quick.
clients = [20, 100, 180, 260, 340]
ov = {"client_weight": 10, "horizon_s": 250.0, "warmup_s": 50.0}
srv = sweep("fig5-oltp", "clients", clients, {**ov, "mode": "server"})
clu = sweep("fig5-oltp", "clients", clients, ov)
diff = [c["avg_j_per_query"] - s["avg_j_per_query"] for (_, s), (_, c) in zip(srv, clu)]
print("\nclients  server mJ  cluster mJ")
for n, (_, s), (_, c) in zip(clients, srv, clu):
    print(f"{n:7d} {s['avg_j_per_query'] * 1e3:9.0f} {c['avg_j_per_query'] * 1e3:11.0f}")
print("cluster stops being cheaper near", sign_changes(clients, diff), "clients")
