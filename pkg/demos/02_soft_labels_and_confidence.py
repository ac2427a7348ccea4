# %% [markdown]
# # Soft labels for a missing annotation
#
# When annotator `k` skipped a sample, the annotators who did label it lend
# their model predictions. Each one is weighted by its similarity to `k`;
# negative similarities count as zero. The blended distribution is scored by
# its peak probability times one minus its normalized entropy.

# %%
import numpy as np

from simlabel import make_soft_label
from simlabel.soft_label import confidence_variant

sim = np.array([
    [1.0, 0.8, 0.1, -0.3],
    [0.8, 1.0, 0.2, 0.0],
    [0.1, 0.2, 1.0, 0.4],
    [-0.3, 0.0, 0.4, 1.0],
])
predictions = np.array([
    [0.25, 0.25, 0.50],  # annotator 0, the one with the missing label
    [0.10, 0.80, 0.10],
    [0.60, 0.30, 0.10],
    [0.05, 0.05, 0.90],
])

soft = make_soft_label(0, predictions, sim, available=[1, 2, 3])
print("weights     ", soft.contributors)
print("soft label  ", soft.distribution.round(3))
print("confidence  ", round(soft.confidence, 3), "-> pseudo-label", soft.argmax_label)

# %% [markdown]
# The three confidence formulations side by side. A one-hot distribution
# scores 1 under all of them and a uniform one scores 0 under the entropy-based
# ones.

# %%
for dist in ([1.0, 0.0, 0.0], [0.7, 0.2, 0.1], [0.4, 0.35, 0.25], [1 / 3] * 3):
    scores = {v: round(float(confidence_variant(np.array(dist), v)), 3)
              for v in ("max_only", "entropy_only", "combined")}
    print(np.round(dist, 2), scores)
