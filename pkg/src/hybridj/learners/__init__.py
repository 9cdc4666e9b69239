"""Self-contained learners: CART trees, random forests, additive models, mean shift."""

from .additive import AdditiveModel, Shape, fit_additive
from .features import ColumnSpec, FeatureMatrix, standardize
from .forest import ForestModel, fit_forest, predict_proba
from .meanshift import AUTO, ClusterResult, estimate_bandwidth, mean_shift
from .tree import Leaf, Split, Tree, TreeNode, fit_tree

__all__ = [
    "AdditiveModel", "Shape", "fit_additive",
    "ColumnSpec", "FeatureMatrix", "standardize",
    "ForestModel", "fit_forest", "predict_proba",
    "AUTO", "ClusterResult", "estimate_bandwidth", "mean_shift",
    "Leaf", "Split", "Tree", "TreeNode", "fit_tree",
]
