"""Network-based neighborhood collaborative filtering."""

from .data import (EntityGroup, RatingMatrix, SplitPair, group_by_count, holdout_split,
                   load_ratings, sparsify, write_ratings)
from .metrics import EvaluationReport, bcri, count_undefined, evaluate, f1, mae, rmse
from .network import (Network, StructuralSimilarity, build_network, common_neighbors,
                      jaccard_network, katz, spectral_radius)
from .predict import (Prediction, Predictor, PredictorSpec, intermediate_rating, predict_hb1,
                      predict_hb2, predict_item_based, predict_user_based, select_neighbors)
from .similarity import (SimilarityMatrix, adjusted_cosine, cosine, cpcc, jaccard_corated, nhsm,
                         pcc, pip)

__version__ = "0.1.0"
