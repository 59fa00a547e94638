"""Operating-period simulation: who needs to charge, and what the games see.

Simulates the packaged three-hour demo city, then derives every game input
from the final fleet state: reachable stations per vehicle, company demand
diagonals, revenue vectors, and the per-driver surge-game data.
"""

import numpy as np

from chargegame import build_game, demo_scenario, mfd_speed, simulate_period

scenario = demo_scenario()
print("network nodes:", scenario.network.n_nodes,
      "| stations at nodes:", scenario.station_nodes.tolist())
print("fleets:", scenario.fleet_sizes.tolist(),
      "| requests in 3h:", scenario.demand.shape[0])
print("network speed at 9k/20k/40k vehicles: "
      f"{mfd_speed(9000):.1f} / {mfd_speed(20000):.1f} / {mfd_speed(40000):.1f} km/h")

snapshot = simulate_period(scenario)
print("\nvehicles below their charging threshold per company:",
      snapshot.charging_counts.tolist())
print("battery percentiles:",
      np.round(np.percentile(snapshot.battery, [10, 50, 90]), 1))

build = build_game(scenario, snapshot)
print("\ndemand share by station region (from request origins):",
      np.round(build.share, 3))
print("authority target counts:", np.round(build.instance.government.set_point, 1))
for i, comp in enumerate(build.instance.companies):
    print(f"  company {i + 1}: fleet-to-charge {comp.fleet_size}, "
          f"demand diag {np.round(comp.demand, 0)}")
print("drivers carrying surge-game data:",
      [len(fleet) for fleet in build.drivers])
