# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Sparse recovery on one frame
#
# Project a frame onto the complement of an estimated subspace, solve the
# constrained l1 program, threshold, and refit on the detected support.

# %%
import numpy as np

from reprocs.sparse import ProjectedOperator, bpdn_solve, recover_frame

rng = np.random.default_rng(0)
n, r = 256, 10
P = np.linalg.qr(rng.standard_normal((n, r)))[0]
P_hat = np.linalg.qr(P + 1e-4 * rng.standard_normal((n, r)))[0]
l = P @ rng.uniform(-5, 5, r)
x = np.zeros(n)
T = np.arange(40, 60)
x[T] = rng.uniform(2, 6, T.size)
m = l + x

# %% [markdown]
# The l1 program works on the projected frame, where the background is
# nearly gone.

# %%
op = ProjectedOperator(P_hat)
y = op.matvec(m)
rep = bpdn_solve(op, y, 0.1)
print("converged", rep.converged, " error", f"{np.linalg.norm(rep.solution - x):.3g}")

# %%
est = recover_frame(op, m, 0.1, 1.0)
print("support exact", np.array_equal(est.support, T))
print("rel error of l_hat", f"{np.linalg.norm(l - est.l_hat) / np.linalg.norm(l):.3g}")
