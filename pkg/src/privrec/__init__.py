"""Build your own fairness-constrained recommender on top of an opaque
top-K provider: network-based scoring, on-demand constrained walks, the
provider backbones, and the evaluation harness around them."""

__version__ = "0.1.0"

from .core import (
    BudgetExhaustedError,
    Catalog,
    InfeasibleConstraintError,
    ProviderOracle,
    RecList,
)
from .fairness import FairnessConfig, can_add, entropy, fair_greedy_select, least_ratio
from .privaterank import PPRParams, ppr, ppr_many, private_rank_recommend
from .privatewalk import WalkParams, private_walk_recommend, sample_next_rank
from .providers import ItemFactors, bpr_provider, cosine_provider, knn_provider, train_bpr
from .recnet import RecNet, build_network, load_edges, out_neighbors, save_edges

__all__ = [
    "BudgetExhaustedError",
    "Catalog",
    "FairnessConfig",
    "InfeasibleConstraintError",
    "ItemFactors",
    "PPRParams",
    "ProviderOracle",
    "RecList",
    "RecNet",
    "WalkParams",
    "bpr_provider",
    "build_network",
    "can_add",
    "cosine_provider",
    "entropy",
    "fair_greedy_select",
    "knn_provider",
    "least_ratio",
    "load_edges",
    "out_neighbors",
    "ppr",
    "ppr_many",
    "private_rank_recommend",
    "private_walk_recommend",
    "sample_next_rank",
    "save_edges",
    "train_bpr",
]
