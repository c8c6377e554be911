# A single target, a handful of sightings, and what the GP belief makes of them.
import numpy as np

from persistmon import TargetBelief
from persistmon.belief_gp import eviction_lag, export_field, stamp
from persistmon.eval_metrics import EvalGrid, target_area_uncertainty

# Target drifting right along y=0.5, seen five times while the agent sat nearby.
belief = TargetBelief()
for k in range(5):
    belief.add(0.3 + 0.02 * k, 0.5, 0.1 * (k + 1), 1)
# one miss recorded at the agent location, far from the target
belief.add(0.8, 0.2, 0.6, 0)

grid = EvalGrid(30)
now = belief.regress(stamp(grid.points, 0.5))
future = belief.predict_future(grid.points, 0.5, dt=2.0)

print("peak of current mean at", grid.points[np.argmax(now.mean)])
print("peak of future mean at ", grid.points[np.argmax(future.mean)])

# Uncertainty around the true target position grows once sightings stop.
for t in (0.5, 1.5, 3.0, 6.0):
    print(f"t={t:>4}: mean std near target = "
          f"{target_area_uncertainty(belief, [0.38, 0.5], grid, t):.3f}")

print(f"measurements older than {eviction_lag():.3f} time units are evicted")
belief.evict(10.0)
print("active measurements after t=10:", len(belief))

export_field(now, "belief_field.csv")
