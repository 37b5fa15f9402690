# %% [markdown]
# # MSE versus LMSE
#
# LMSE maps each squared error `e` to `-log(1 + eps - e)`. Near zero error it
# matches MSE; as `e` approaches 1 it climbs to the ceiling `-log(eps)`, and its
# slope is the MSE slope scaled by `1 / (1 + eps - e)`.

# %%
import numpy as np

from lmselab import losses as L

y = np.array([1.0, 0.0, 0.25])
p = np.array([0.5, 0.5, 0.25])
for kind in L.LOSS_KINDS:
    print(f"{kind:5s} {L.LossSpec(kind)(y, p).item():.6f}")
print("ceiling at eps=1e-7:", L.LossSpec("lmse").ceiling)

# %% [markdown]
# The gradient ratio grows without bound (up to the eps cap) as the error
# widens, so badly reconstructed pixels pull harder.

# %%
for err in (0.1, 0.5, 0.9, 0.99):
    gm = L.grad_mse([err], [0.0])[0]
    gl = L.grad_lmse([err], [0.0])[0]
    print(f"|y - yhat| = {err:4}:  mse grad {gm:+.4f}  lmse grad {gl:+.4f}  ratio {gl / gm:.3f}")

# %% [markdown]
# ## Flip-and-log with the scale trick
#
# Any non-negative per-element loss can be pushed through `-log(1 - L)` after
# dividing by the batch maximum. The result never exceeds `-log(eps)`, even for
# huge raw values.

# %%
base = np.array([0.0, 3.0, 40.0, 1e6])
print("fl with scale trick:", L.fl_transform(base, 1e-7, scale_trick=True).item())
print("fl(mse) == lmse:",
      L.fl_transform(L.base_elements("mse", y, p), scale_trick=False).item(), L.lmse(y, p).item())

# %% [markdown]
# ## Surfaces over the unit square
#
# `surface_grid` evaluates one element's loss or gradient on a grid of
# `(y, yhat)` pairs and writes a flat CSV that any plotting tool can read.
# Gradient surfaces are clipped at |10| with the clipped cells flagged.

# %%
from pathlib import Path

out = Path("results/surfaces")
out.mkdir(parents=True, exist_ok=True)
for kind in ("mse", "lmse"):
    for quantity, clip in (("loss", None), ("gradient", 10.0)):
        g = L.surface_grid(kind, quantity, resolution=41, clip=clip)
        g.to_csv(out / f"{kind}_{quantity}.csv")
        print(f"{kind:4s} {quantity:8s} range [{g.z.min():+.3f}, {g.z.max():+.3f}] clipped {int(g.clipped.sum())}")
