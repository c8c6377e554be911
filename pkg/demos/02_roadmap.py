# Building the planning graph and looking at the features the policy gets per node.
import numpy as np

from persistmon.roadmap import build_roadmap, dijkstra_from, spectral_features

rm = build_roadmap(200, k=10, seed=0)
deg = np.array([len(nb) for nb in rm.neighbors])
print(f"{len(rm)} nodes, {len(rm.edges)} edges, degree {deg.min()}..{deg.max()}")

dist = dijkstra_from(rm, 0)
print("farthest node from 0 by path length:", int(np.argmax(dist)), f"{dist.max():.3f}")

F = spectral_features(rm)
print("spectral features", F.shape, "column norms", np.round(np.linalg.norm(F, axis=0), 6))

rm.save("roadmap.json")
