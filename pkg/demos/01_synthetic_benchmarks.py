"""Generate the seeded synthetic benchmarks and inspect their structure.

Each generator hides a true instrument Z behind a measured surrogate
column S and plants latent confounders, with the treatment effect on the
outcome fixed at 2.0 so estimators can be scored.
"""

import numpy as np

from latentiv import ScenarioSpec, generate

# --- one latent instrument, eight observed covariates ---------------------
spec = ScenarioSpec("single_siv", n=50_000, outcome="linear", seed=7)
ds = generate(spec)
print(f"single_siv: {ds.n} rows, columns {ds.columns}")
print(f"true effect beta = {ds.beta_true}, treated fraction = {ds.w.mean():.3f}")

# The latent ground truth (never part of X) is kept for diagnostics.
print(f"latents available: {sorted(ds.latents)}")

# The surrogate S = N(0,1) + Z + noise, so Var(S) should be ~2.5 and S
# should correlate with the hidden Z at ~1/sqrt(2.5).
s, z = ds.column("S"), ds.latents["Z"]
print(f"Var(S) = {s.var():.3f} (expected 2.5), corr(S, Z) = "
      f"{np.corrcoef(s, z)[0, 1]:.3f} (expected ~0.63)")

# A naive difference in means is badly confounded:
naive = ds.y[ds.w == 1].mean() - ds.y[ds.w == 0].mean()
print(f"naive difference in means = {naive:.2f} vs true 2.0 -> confounding bias")

# --- variants --------------------------------------------------------------
multi = generate(ScenarioSpec("multi_siv", n=10_000, siv_count=3, seed=7))
print(f"\nmulti_siv(3): columns {multi.columns[:4]}... ({multi.d} total)")

wide = generate(ScenarioSpec("highdim", n=10_000, dim=32, seed=7))
print(f"highdim(32): {wide.d} covariates; the extra columns are independent "
      "padding,")
base = generate(ScenarioSpec("single_siv", n=10_000, seed=7))
print("first 8 columns identical to single_siv:",
      np.array_equal(wide.x[:, :8], base.x))

# Datasets round-trip through CSV (latent diagnostics go to a sidecar file).
ds_small = generate(ScenarioSpec("single_siv", n=100, seed=7))
ds_small.to_csv("/tmp/latentiv_demo_dataset.csv")
print("\nwrote /tmp/latentiv_demo_dataset.csv (+ .latent.csv sidecar)")
