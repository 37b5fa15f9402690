# %% [markdown]
# # AUROC as a rank statistic
#
# AUROC is the chance that a random anomalous sample scores above a random
# normal one, with ties counting half. Average ranks give it in O(n log n);
# counting every pair gives the same number in O(n m).

# %%
import numpy as np

from lmselab.metrics import ScoreSet, anomaly_score, auroc, auroc_pairwise, convergence_stats

s = ScoreSet(np.array([0.1, 0.3]), np.array([0.2, 0.4]))
print("auroc", auroc(s), "pairwise", auroc_pairwise(s))

rng = np.random.default_rng(0)
s = ScoreSet(rng.integers(0, 5, 300) / 5, rng.integers(1, 6, 200) / 5)
print("with heavy ties:", auroc(s), auroc_pairwise(s))

# %% [markdown]
# Only the order matters, so any strictly increasing rescaling leaves it alone.

# %%
print("exp-transformed:", auroc(ScoreSet(np.exp(s.normal_scores), np.exp(s.anomalous_scores))))

# %% [markdown]
# Per-sample scores reduce over pixels. The LMSE score takes the log per pixel
# first, so it can rank two samples differently from MSE.

# %%
y = np.zeros((2, 4))
p = np.array([[0.5, 0.5, 0.5, 0.5], [1.0, 0.0, 0.0, 0.0]])
print("mse ", anomaly_score(y, p))
print("lmse", anomaly_score(y, p, "lmse"))

# %% [markdown]
# Loss curves from many runs collapse to a per-epoch band.

# %%
st = convergence_stats([[1.0, 0.5], [3.0, 1.5]])
print("mean", st.mean, "std", st.std)
