"""End to end: simulate, estimate, solve both levels, write every artifact.

Equivalent to ``chargegame pipeline``; the CSVs under ``out/demo_run`` are
plot-ready (convergence trace, price table, mechanism comparison, surge
histogram data) and byte-stable for a fixed seed.
"""

from chargegame import ExperimentConfig, run_pipeline

config = ExperimentConfig(out_dir="out/demo_run", resolution=5)
result = run_pipeline(config)

print("wrote:", ", ".join(sorted(result.files)))
print("upper level:", f"loss {result.upper.j_g:.2e}",
      f"in {result.upper.iterations} iterations",
      f"({result.upper_seconds:.2f}s)")
print("mechanism comparison (loss):")
for name, (j_g, sigma) in result.comparison.items():
    print(f"  {name:7s} {j_g:12.4g}   aggregate {sigma.round(1)}")
print("lower level tracking cost per company:",
      [sol.j_m for sol in result.surge_solutions],
      [sol.mode for sol in result.surge_solutions])
