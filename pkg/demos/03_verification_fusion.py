# %% [markdown]
# # Verification: AAM-softmax embeddings and score fusion
#
# Same data, but every model now ends in an embedding head trained with
# additive angular margin softmax (margin 0.2, scale 32). Trials are
# same/different-class pairs scored by cosine similarity. The metric is the
# equal error rate.

# %%
from acorl.experiment import Settings, run_verification

res = run_verification(0, Settings())
for name in ("A", "B_plain", "B_acorl"):
    print(f"EER {name:8s} {res['eer.' + name]:.4f}")

# %% [markdown]
# Output fusion fits a logistic regression on the calibration trials, with
# one cosine score per member. It is scored on the held-out eval trials.

# %%
for pair in ("A+B_plain", "A+B_acorl"):
    beta = ", ".join(f"{b:.2f}" for b in res[f"of.{pair}.beta"])
    print(f"fused {pair:10s} EER {res['of.' + pair]:.4f}   beta [{beta}]")
