# %% [markdown]
# # One-class tasks from MNIST IDX files
#
# The loader reads the four raw (or gzipped) IDX files from `$LMSELAB_DATA/mnist`
# or `./data/mnist`. See the README for where to get them.

# %%
import numpy as np

from lmselab import data as D

train = D.load_split("mnist", "train")
test = D.load_split("mnist", "test")
print(train.images.shape, test.images.shape, train.images.dtype)
print("train counts", np.bincount(train.labels).tolist())
print("test counts ", np.bincount(test.labels).tolist())

# %% [markdown]
# A task keeps only the normal class for training and relabels the full test
# split as normal (0) or anomalous (1). The desk-scale cap takes a seeded
# shuffle prefix of the normal images.

# %%
task = D.make_task(train, test, normal_class=0, dataset="mnist")
print(task.task_id, "train", len(task.train_normal),
      "normal/anomalous", np.bincount(task.test_binary).tolist())

small = D.make_task(train, test, normal_class=0, max_train=2000, seed=0, dataset="mnist")
print("capped train size", len(small.train_normal))
