# Cost comparison on the 100-node reaction-diffusion lattice.
#
# All fixed-step schemes march the same uniform grids, so the interesting
# column is cputime: the drift-implicit scheme pays for a Newton iteration
# with a 100x100 linear solve every step, while the semi-implicit scheme
# reuses a cached tridiagonal factorization and the explicit schemes do a
# couple of matrix-vector products.  The efficiency SVG plots RMSE against
# cputime so "down and to the left" wins.

import os

from adaptsde.cli import main as cli_main
from adaptsde.harness import ExperimentConfig, run_experiment, write_table_csv

OUT = os.path.join(os.path.dirname(__file__), "output")

os.makedirs(OUT, exist_ok=True)
config = ExperimentConfig(
    problem="spde",
    samples=4,
    h_max_list=(0.05, 0.005),
    levels=4,
    master_seed=0,
)
print("running 4-sample lattice sweep at h_max in", config.h_max_list, "...")
table = run_experiment(config)

csv_path = os.path.join(OUT, "spde_efficiency.csv")
with open(csv_path, "w") as fh:
    write_table_csv(table, fh)

print(f"{'scheme':<24} {'h_max':>7} {'rmse':>12} {'cputime_s':>11}")
for row in table.rows:
    print(f"{row.scheme:<24} {row.h_max:>7} {row.rmse:>12.4e} {row.mean_cputime_s:>11.5f}")

pooled = {}
for row in table.rows:
    pooled[row.scheme] = pooled.get(row.scheme, 0.0) + row.mean_cputime_s
order = sorted(pooled, key=pooled.get)
print("\ncheapest to dearest:", " < ".join(order))

svg_path = os.path.join(OUT, "spde_efficiency.svg")
cli_main(["plot", "--in", csv_path, "--x", "cputime", "--out", svg_path])
print("wrote", csv_path, "and", svg_path)
