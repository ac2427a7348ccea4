# %% [markdown]
# # Agreement between two annotators
#
# Three pairwise measures are available for building the annotator similarity
# matrix: Cohen's kappa, nominal Krippendorff's alpha and Pearson correlation
# on class codes. Each one only looks at the samples both annotators labeled.

# %%
import numpy as np

from simlabel import build_similarity_matrix, cohen_kappa, krippendorff_alpha, pearson_similarity
from simlabel.synth import generate, two_group_spec

a = [0, 0, 1, 1, 2, 2, 0, 1]
b = [0, 0, 1, 2, 2, 2, 1, 1]
print("kappa  ", round(cohen_kappa(a, b), 4))
print("alpha  ", round(krippendorff_alpha(a, b), 4))
print("pearson", round(pearson_similarity(a, b), 4))

# %% [markdown]
# Two raters that use a single class throughout have chance agreement 1, so
# kappa is pinned to 1 when they coincide and to 0 otherwise.

# %%
print(cohen_kappa([1, 1, 1], [1, 1, 1]), cohen_kappa([0, 0, 0, 0], [0, 1, 0, 1]))

# %% [markdown]
# On a sparse planted dataset the similarity matrix is computed from the
# observed overlaps. Pairs with fewer than `min_overlap` shared samples get 0.

# %%
matrix, truth = generate(two_group_spec(num_samples=600, tendency=0.3, seed=1))
sim = build_similarity_matrix(matrix, "kappa")
np.set_printoptions(precision=2, suppress=True)
print(sim.values)
print("shared samples per pair:\n", sim.overlap_counts)
print("groups:", truth.groups)
