"""An hour of changing OLAP load on the server and on the elastic cluster.

Twelve five-minute phases: ten quiet ones, then two busy ones.  The
reactive cluster only sees utilization; the forecasting one also knows the
schedule 30 minutes ahead and powers nodes up before the ramp.

Run:  python demos/dynamic_workloads.py        (a few seconds)
"""

from wattsim.report import run_scenario
from wattsim.trace import phase_summaries

runs = {}
for name in ("fig6-olap-server", "fig6-olap-reactive", "fig6-olap-forecast"):
    (r,) = run_scenario(name)
    runs[r.scenario.mode] = r

print(f"{'':18s} {'Wh':>7} {'queries':>8} {'J/query':>8} {'miss rate':>9} {'avg nodes':>9}")
for mode, r in runs.items():
    s = r.summary
    print(f"{mode:18s} {s['total_wh']:7.1f} {s['queries_completed']:8d} {s['avg_j_per_query']:8.1f} "
          f"{s['deadline_miss_rate']:9.3f} {s['avg_active_nodes']:9.2f}")

# Per phase: forecasting pays in the last quiet phase and collects in the busy ones.
react = phase_summaries(runs["cluster-reactive"].trace)
fcast = phase_summaries(runs["cluster-forecast"].trace)
counts = [p.client_count for p in runs["cluster-forecast"].scenario.schedule.phases]
print("\nphase clients  reactive J/q  forecast J/q")
for i in range(8, len(counts)):
    print(f"{i:5d} {counts[i]:7d} {react[i]['avg_j_per_query']:13.1f} {fcast[i]['avg_j_per_query']:13.1f}")

# What the controller did, from the action log.
print()
for t, what, detail in runs["cluster-forecast"].trace.actions[:8]:
    print(f"{t:7.1f} s  {what:12s} {detail}")
