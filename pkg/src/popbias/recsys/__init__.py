"""
Collaborative-filtering predictors (biased SVD, NMF, user/item KNN),
top-N recommendation and RMSE.
"""

from .models import (
    BiasedMFModel,
    KNNModel,
    NMFModel,
    RatingModel,
    RecommendationList,
    predict,
    recommend_top_n,
    rmse,
    train,
)
from .params import ALGORITHMS, REFERENCE_RMSE, TUNED, Hyperparams, default_hyperparams

__all__ = [
    "ALGORITHMS",
    "REFERENCE_RMSE",
    "TUNED",
    "BiasedMFModel",
    "Hyperparams",
    "KNNModel",
    "NMFModel",
    "RatingModel",
    "RecommendationList",
    "default_hyperparams",
    "predict",
    "recommend_top_n",
    "rmse",
    "train",
]
