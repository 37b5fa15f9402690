# %% [markdown]
# # Training the auto-encoder with each loss
#
# Same init, same batch order, only the loss differs. This is a shortened run
# (500 images, 2 epochs); the acceptance suite uses 2000 images and 5 epochs.

# %%
from lmselab import data as D
from lmselab import harness as H
from lmselab.losses import LossSpec
from lmselab.model import CaeConfig, parameter_count

train = D.load_split("mnist", "train")
test = D.load_split("mnist", "test")
task = D.make_task(train, test, normal_class=0, max_train=500, seed=0, dataset="mnist")
config = CaeConfig(latent_dim=16)
print("parameters:", parameter_count(config))

point = H.GridPoint(latent_dim=16, lr=1e-3, seed=1, epochs=2, batch_size=64)
for kind in ("mse", "lmse"):
    r = H.train(task, LossSpec(kind), config, point)
    curve = ", ".join(f"{v:.5f}" for v in r.epoch_losses)
    print(f"{kind:4s} epoch losses [{curve}]  test AUROC {r.auroc:.4f}  ({r.wall_time:.1f}s)")

# %% [markdown]
# The anomaly score used for AUROC defaults to per-sample MSE for both arms, so
# the comparison isolates the training loss. `score_kind="lmse"` is available.
