"""How far each system scales under OLAP load, and where it breaks.

Each point is a 400 s run (the first 100 s are discarded) with a fixed
number of timed-interval clients, every one asking for a 20 s answer.

Run:  python demos/saturation_sweep.py        (about half a minute)
"""

from wattsim import jump_knee, sweep

clients = list(range(40, 401, 40))
server = sweep("fig3-olap", "clients", clients, {"mode": "server"})
cluster = sweep("fig3-olap", "clients", clients)

print(f"{'clients':>7} | {'server p50 s':>12} {'J/query':>8} | {'cluster p50 s':>13} {'J/query':>8} {'failed':>6}")
for (n, s), (_, c) in zip(server, cluster):
    print(f"{n:7d} | {s['response_p50_s']:12.3f} {s['avg_j_per_query']:8.1f} | "
          f"{c['response_p50_s']:13.3f} {c['avg_j_per_query']:8.1f} {c['failed_queries']:6d}")

# The knee is the last client count before the largest jump in response time
# (this grid is coarse; the acceptance tests sweep in steps of 20).
print("\nserver saturates after", jump_knee(clients, [s["response_p50_s"] for _, s in server]), "clients")
print("cluster saturates after", jump_knee(clients, [s["response_p50_s"] for _, s in cluster]), "clients")
# Past the knee the cluster spills to disk; with too many queries in flight a node runs out of memory.
