# %% [markdown]
# # Sweeping the imputation threshold
#
# The command-line runner drives the same sweep from a config file:
#
#     simlabel ablate demos/configs/planted.json --axis threshold --values 0.5,0.6,0.7,0.8
#
# Here it runs in-process on two seeds. Lower thresholds impute more cells. By
# default an imputed cell only feeds the similarity matrix. Setting
# `imputed_as_hard_labels` also turns it into a cross-entropy target.

# %%
from simlabel import TrainingPolicy
from simlabel.experiment import evaluate_run, generate_for_seed, prepare, split_seeds
from simlabel.synth import two_group_spec

spec = two_group_spec()
for hard in (False, True):
    print("imputed_as_hard_labels =", hard)
    for t in (0.5, 0.6, 0.7, 0.8):
        accs, imps = [], []
        for seed in range(2):
            matrix, truth = generate_for_seed(spec, seed)
            data = prepare(matrix, truth, seed=seed)
            policy = TrainingPolicy(confidence_threshold=t, imputed_as_hard_labels=hard,
                                    seed=split_seeds(seed)["train"])
            report, _ = evaluate_run(data, policy, seed=seed)
            accs.append(report.mean_accuracy)
            imps.append(report.imputations)
        print(f"  T={t}: accuracy {sum(accs) / len(accs):.4f}, imputations {sum(imps) / len(imps):.0f}")
