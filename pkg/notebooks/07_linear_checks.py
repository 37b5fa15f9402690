# %% [markdown]
# # Linear-model checks
#
# For a linear model `Y ~ X W` the loss surfaces can be probed directly:
# Jensen sampling for convexity, the normal-equation solution for
# stationarity, and the power series behind `-log`.

# %%
import math

import numpy as np

from lmselab import verify as V

for kind in ("mse", "lmse"):
    rep = V.check_convexity(kind, trials=300)
    print(f"convexity {kind}: {rep.violations} violations, worst gap {rep.worst:.2e}")

# %% [markdown]
# At the least-squares solution both gradients vanish when the targets are
# realizable. With noisy targets the residuals are nonzero and the LMSE
# gradient no longer vanishes there, so the two minimizers drift apart.

# %%
rng = np.random.default_rng(0)
for noise in (0.0, 0.1):
    rep = V.check_closed_form(V.random_instance(rng, noise=noise))
    print(f"noise {noise}: |grad mse| {rep.details['grad_mse_inf']:.1e}  "
          f"|grad lmse| {rep.details['grad_lmse_inf']:.1e}")

# %%
for x in (0.5, 1.5):
    for n in (5, 20, 60):
        print(f"x={x} n={n:2d} partial sum {V.taylor_partial_sum(x, n):+.8f}  -log(x) {-math.log(x):+.8f}")

# %% [markdown]
# Everything at once, as `lmselab verify` prints it:

# %%
print(V.format_reports(V.run_suite("all")))
