"""Power figures of the two systems and the cost of moving data.

Run:  python demos/power_and_migration.py
"""

from wattsim import PowerProfile, estimate_migration
from wattsim.power import ACTIVE, STANDBY, cluster_power, integrate_energy, node_power, server_power

p = PowerProfile()

# One wimpy node is linear in CPU utilization between its idle and peak draw.
for u in (0.0, 0.5, 1.0):
    print(f"node at {u:4.0%}: {node_power(p, ACTIVE, u):5.1f} W   server at {u:4.0%}: {server_power(p, u):6.1f} W")

# The cluster always pays for its switch. Standby nodes still draw a little.
minimal = [(ACTIVE, 0.0)] + [(STANDBY, 0.0)] * 9
print(f"\nsmallest cluster (1 node on, 9 standby): {cluster_power(p, minimal):.1f} W,"
      f" {cluster_power(p, minimal, disks=1):.1f} W with its drive")
print(f"all ten nodes flat out:                  {cluster_power(p, [(ACTIVE, 1.0)] * 10):.1f} W")

# Energy from metered samples is a trapezoidal integral.
samples = [(0.0, 66.5), (60.0, 66.5), (70.0, 95.0), (300.0, 95.0)]
print(f"\nenergy of a short metered trace: {integrate_energy(samples):.0f} J")

# Moving 1 GB to a 25 W node at 102.4 MB/s.
seconds, joules = estimate_migration(1.0, 25.0, 102.4)
print(f"\nmigrating 1 GB: {seconds:.1f} s, {joules:.0f} J")
print(f"migrating 20 GB while the donor is half busy: "
      f"{estimate_migration(20.0, 25.0, 102.4 * 0.5)[0]:.0f} s")
