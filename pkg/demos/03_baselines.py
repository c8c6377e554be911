# Lawnmower vs TSP loop on the same scenarios, the way the comparison table is built.
from persistmon.cli import ExperimentSpec, format_table, run_eval

for speed in (1 / 30, 1 / 7):
    spec = ExperimentSpec(planners=["lawnmower", "tsp_loop", "random"], num_targets=2,
                          speed_ratio=speed, instances=5, with_jsd=False)
    summary, logs = run_eval(spec, write=False)
    print(f"speed ratio {speed:.3f}")
    print(format_table(summary))
    print()
