"""The four model families: linear, tree, forest and network."""

from .base import Model, SchemaError, dumps_model, load_model, loads_model, model_from_dict, save_model
from .forest import ForestModel, fit_forest
from .linear import LinearModel, SingularDesignError, fit_linear
from .network import NetworkModel, fit_network
from .tree import TreeModel, TreeStructure, fit_tree

FAMILIES = ("linear", "tree", "forest", "network")

__all__ = [
    "FAMILIES",
    "ForestModel",
    "LinearModel",
    "Model",
    "NetworkModel",
    "SchemaError",
    "SingularDesignError",
    "TreeModel",
    "TreeStructure",
    "dumps_model",
    "fit_forest",
    "fit_linear",
    "fit_network",
    "fit_tree",
    "load_model",
    "loads_model",
    "model_from_dict",
    "save_model",
]
