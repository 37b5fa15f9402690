# %% [markdown]
# # Paired grid search and the AUROC table
#
# `reproduce_table` runs both losses over the same grid for each normal class
# and writes `table.csv`, `table.md`, `convergence.csv` and one `metrics.json`
# per run. Here a tiny grid on two classes keeps it to a few minutes; pass
# `scale="desk"` with the default grid (or `lmselab table`) for the real thing.

# %%
from lmselab import harness as H

grid = H.HyperGrid(latent_dims=(8,), learning_rates=(1e-3,), seeds=(1,), epochs=1, max_train=300)
rows = H.reproduce_table("mnist", "desk", "results/notebook_table", classes=[0, 1], grid=grid)
print(H.format_table(rows, ["mse", "lmse"]))

# %% [markdown]
# The Total row pools every run across classes, so its spread includes the
# between-class variation as well as the grid spread.

# %%
print(open("results/notebook_table/convergence.csv").read())
