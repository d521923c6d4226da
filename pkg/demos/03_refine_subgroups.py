"""
Collapsing redundant subgroups after training
=============================================

Training with more subgroups than the population needs is cheap insurance,
but the surplus groups converge to near-duplicate covariate-importance
rows. Clustering those rows by cosine similarity and merging each cluster
shrinks the model without changing its predictions. Needs the files written
by 01_fit_synthetic.py.
"""

import pathlib
import sys

import numpy as np

from adham.data import load_csv
from adham.refinement import apply_merge, combine_clusters, correlation_matrix
from adham.serialize import load_model, save_model

out_dir = pathlib.Path(__file__).parent / "output"
if not (out_dir / "synthetic.adham").exists():
    sys.exit("run demos/01_fit_synthetic.py first to produce the model")
model = load_model(out_dir / "synthetic.adham")
cohort = load_csv(out_dir / "synthetic.csv", "followup", "died")

# 1. Cosine similarity between the subgroups' importance rows. Values near
# 1 mark subgroups that weight the covariates the same way.
rho = correlation_matrix(model.importance_matrix())
print("importance-row similarity between subgroups:")
for row in rho:
    print("  " + " ".join(f"{v:5.2f}" for v in row))

# 2. Sweep the merge threshold. Lowering it can only coarsen the grouping.
print("\nthreshold sweep:")
for threshold in (0.99, 0.95, 0.9, 0.8, 0.7, 0.6):
    plan = combine_clusters(rho, threshold)
    print(f"  h = {threshold:4.2f}: {len(plan.groups)} groups  {plan.groups}")

# 3. Merge at 0.8. Member rows are averaged with their assignment mass over
# the cohort as weights, so dominant subgroups dominate the merged row.
plan = combine_clusters(rho, 0.8)
merged = apply_merge(model, plan, sample_x=cohort.x)
print(f"\nmerged {model.n_subgroups} subgroups into {merged.n_subgroups}")

# 4. Predictions barely move: compare marginal hazards on random probes.
rng = np.random.default_rng(5)
probes_x = rng.normal(size=(200, model.n_features))
probes_t = rng.uniform(0.05, 3.0, size=(200, 1))
before = model.marginal_hazard_times(probes_x, probes_t)
after = merged.marginal_hazard_times(probes_x, probes_t)
drift = np.max(np.abs(after - before) / before)
print(f"largest relative hazard change over 200 probes: {drift:.2e}")

save_model(merged, out_dir / "synthetic_refined.adham")
print(f"wrote {out_dir / 'synthetic_refined.adham'}")
