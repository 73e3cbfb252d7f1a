"""FunkSVD and BiasSVD trained by SGD on observed ratings only.

Both models fit mean-centered residuals; BiasSVD adds per-user and per-item
bias terms, which usually buys a visible RMSE improvement.
"""

import numpy as np

from _toydata import make_toy
from lfgrec import make_fold_plan, rmse, train_biassvd, train_funksvd
from lfgrec.baselines import predict_batch

matrix, _ = make_toy()
plan = make_fold_plan(matrix, "per-user-ratings", seed=1)
train = matrix.subset(plan.train_positions(0))
ev = plan.eval_positions(0)

for name, trainer in (("FunkSVD", train_funksvd), ("BiasSVD", train_biassvd)):
    model = trainer(train, k=8, epochs=30, seed=1)
    pred = predict_batch(model, matrix.users[ev], matrix.items[ev])
    print(f"{name}: eval RMSE {rmse(matrix.ratings[ev], pred):.4f}")

# a user absent from training falls back to the cold prediction
from lfgrec import predict_cold
bias_model = train_biassvd(train, k=8, epochs=30, seed=1)
cold = [predict_cold(bias_model, i) for i in range(5)]
print("cold-start predictions for items 0..4:", np.round(cold, 3))
