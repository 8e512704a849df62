"""Train a small Deep-IRT model on synthetic data and evaluate it.

Scaled down (100 students, 8 epochs) so the demo finishes in ~10 seconds;
the acceptance suite runs the full protocol.

Run: python demos/03_train_deep_irt.py
"""

from deepkt.datasets import SyntheticConfig, generate_synthetic, split_train_test
from deepkt.harness import TrainConfig, evaluate, train
from deepkt.metrics import accuracy, auc, mean_xent

cfg = SyntheticConfig(num_students=100, num_questions=30, num_concepts=3, seed=1)
ds, _ = generate_synthetic(cfg)
train_ds, test_ds = split_train_test(ds, test_fraction=0.3, seed=0)
print(f"{len(train_ds.sequences)} train / {len(test_ds.sequences)} test students")

config = TrainConfig(model="deep_irt", epochs=8, seq_len=30,
                     mem_slots=10, state_dim=20, feature_dim=20, seed=0)
params, log = train(config, train_ds)
for epoch, loss in enumerate(log, 1):
    print(f"epoch {epoch}  train xent {loss:.4f}")

pred = evaluate(params, test_ds, config)
print(f"\ntest AUC  {auc(pred):.4f}")
print(f"test acc  {accuracy(pred):.4f}")
print(f"test xent {mean_xent(pred):.4f}")

# The same config and seed always reproduce the same model.
params2, log2 = train(config, train_ds)
print(f"\nretrain with same seed gives identical loss curve: {log == log2}")
