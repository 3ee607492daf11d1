# Import model classes from qmr.py and dmkdc.py
from .dmkdc import DMKDC_MODEL_CLASS_MAPPINGS, dmkdc_posterior_batch
from .errors import InvalidArgumentError
from .qmr import QMR_MODEL_CLASS_MAPPINGS, posterior_batch
from .rff_encoder import encode_batch

# Combine all model mappings
MODEL_CLASS_MAPPINGS = {}
MODEL_CLASS_MAPPINGS.update(QMR_MODEL_CLASS_MAPPINGS)
MODEL_CLASS_MAPPINGS.update(DMKDC_MODEL_CLASS_MAPPINGS)

POSTERIOR_BATCH_REGISTRY = {
    "qmr": posterior_batch,
    "dmkdc": dmkdc_posterior_batch,
}


def get_model_class(kind: str):
    handler = MODEL_CLASS_MAPPINGS.get(kind)
    if handler is None:
        raise InvalidArgumentError(f"unknown model kind '{kind}' (expected one of {', '.join(MODEL_CLASS_MAPPINGS)})")
    return handler


def predict_posteriors(model, states):
    """(B, N) posteriors from either model kind."""
    return POSTERIOR_BATCH_REGISTRY[model.kind](model, states)


def predict_patch_posteriors(model, encoder, features):
    """Encode raw features and return their (M, N) posteriors."""
    return predict_posteriors(model, encode_batch(encoder, features))
