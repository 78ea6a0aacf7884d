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
# # Assumption report for the benchmark
#
# The benchmark runs well in practice, yet several of the sufficient
# conditions of the guarantee do not hold for it.  This notebook prints the
# report and looks at two of the quantities behind it.

# %%
import dataclasses
import warnings

from reprocs.assumptions import h_star_upper, incoherence
from reprocs.harness import assumption_report, benchmark_config, build_scenario, engine_params, initial_estimate
from reprocs.linalg import kappa_s
from reprocs.models import gen_support_model3

cfg = benchmark_config()
truth = build_scenario(cfg, cfg.seed)
P, lam = initial_estimate(cfg, truth, cfg.seed)
rep = assumption_report(cfg, truth, P, lam, engine_params(cfg, truth, lam))
for c in rep.checks:
    print(f"{c.name:<16} {'ok' if c.passed else 'FAIL':<5} {c.measured:>12.4g} {c.bound:>12.4g}")

# %% [markdown]
# ## Denseness
#
# A random basis of a 10-dimensional subspace of R^256 is far from maximally
# coherent (that would be 25.6).  The cheap bound sqrt(2s) kappa_1 on the
# 2s-row restriction norm exceeds one here, so it says nothing; exact
# enumeration of 40-row subsets is out of reach.

# %%
P0 = truth.signal.basis_at(1)
s = cfg.support.s
print("incoherence", round(incoherence(P0), 3), " kappa_1", round(kappa_s(P0, 1), 3),
      " sqrt(2s) kappa_1", round(kappa_s(P0, 2 * s, mode="bound"), 3))

# %% [markdown]
# ## Support model
#
# At n = 256 the block wraps around inside every 800-frame window, so the
# window partition does not exist.  On a longer vector with the same block
# settings the constructive bound on h* does not exceed beta.

# %%
sup_cfg = dataclasses.replace(cfg.support, n=2048)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    sup = gen_support_model3(sup_cfg, 1600, 0)
h = h_star_upper(sup[:800], 800, cfg.support.rho, sup_cfg.n)
print("h* upper bound", int(h.max()), "beta", cfg.support.beta)
