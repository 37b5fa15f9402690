# %% [markdown]
# # Reverse-mode autodiff on numpy arrays
#
# `lmselab.tensor.Tensor` wraps a float64 array and records how it was made.
# Calling `.backward()` on a scalar walks that record in reverse and leaves
# gradients on every leaf that asked for one.

# %%
import numpy as np

from lmselab import tensor as T
from lmselab.tensor import Tensor, numeric_grad

x = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
w = Tensor([[0.5], [-1.0]], requires_grad=True)
y = T.sigmoid(x @ w).sum()
y.backward()
print("value", y.item())
print("dy/dx\n", x.grad)
print("dy/dw\n", w.grad)

# %% [markdown]
# Central differences make a cheap cross-check for any scalar function.

# %%
num = numeric_grad(lambda a: T.sigmoid(Tensor(a) @ w.detach()).sum(), x.data)
print("max |analytic - numeric|", np.abs(num - x.grad).max())

# %% [markdown]
# Convolutions use strided windows. The transposed convolution is the exact
# adjoint of the forward one, which is what the decoder relies on:
# <conv(x), y> == <x, conv_T(y)>.

# %%
rng = np.random.default_rng(0)
k = rng.normal(size=(4, 2, 3, 3))
a = rng.normal(size=(1, 2, 7, 7))
b = rng.normal(size=(1, 4, 4, 4))
lhs = np.sum(T.conv2d(Tensor(a), Tensor(k), stride=2, padding=1).data * b)
rhs = np.sum(a * T.conv2d_transpose(Tensor(b), Tensor(k), stride=2, padding=1, output_padding=0).data)
print(f"adjoint identity: {lhs:.12f} vs {rhs:.12f}")

# %% [markdown]
# Gradients accumulate until cleared, and `no_grad()` skips recording.

# %%
x.zero_grad()
with T.no_grad():
    z = (x * 3.0).sum()
print("tracked under no_grad:", z.node is not None)
