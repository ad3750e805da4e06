"""The simulated CPU against textbook queueing results.

A single-thread node serves requests of 0.5 s of work that arrive as a
Poisson stream with mean gap 2 s.  Under processor sharing the mean
response time is S / (1 - rho) whatever the service distribution.

Run:  python demos/queueing_check.py
"""

import numpy as np

from wattsim import from_dict, run

service, gap = 0.5, 2.0
sc = from_dict({
    "controller": False, "initial_nodes": 1, "horizon_s": 5000.0,
    "node": {"count": 1, "cpu_threads": 1, "cpu_capacity": 1.0},
    "calibration": {"cluster_cpu_overhead": 0.0},
    "classes": {"olap": {"scan_gb": 0.0, "blocking_work": 0.0, "pipeline_work": service,
                         "mem_footprint_gb": 0.0, "ship_gb": 0.0, "result_gb": 0.0,
                         "interval_s": gap, "arrivals": "poisson"}},
    "workload": {"clients": [1]},
})
trace = run(sc)
r = np.array([q.response_s for q in trace.queries if q.complete is not None])
rho = service / gap
print(f"{r.size} requests, utilization {rho:.2f}")
print(f"simulated mean response   {r.mean():.4f} s")
print(f"processor sharing formula {service / (1 - rho):.4f} s")
print(f"FIFO (M/D/1) for contrast {service + rho * service / (2 * (1 - rho)):.4f} s")
