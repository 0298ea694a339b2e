from .gbdt import GbdtModel, feature_importance, train_gbdt, weighted_logloss
from .mlp import MlpModel, train_mlp
from .serialize import load_model, model_from_dict, model_to_dict, save_model


def predict_proba(model, X):
    """Failure probability for one feature vector or a matrix of them."""
    return model.predict_proba(X)


__all__ = [
    "GbdtModel", "MlpModel", "feature_importance", "load_model", "model_from_dict",
    "model_to_dict", "predict_proba", "save_model", "train_gbdt", "train_mlp", "weighted_logloss",
]
