from .autodiff import Tape, Var
from .checkpoint import load_params, save_params
from .network import (
    ArchConfig,
    FieldInputs,
    FieldSample,
    NelfParams,
    PerViewFeature,
    PosEnc,
    SourceView,
    aggregate_geometry,
    batch_forward,
    blend_transport,
    build_feature,
    field_query,
    init_params,
    make_batch_field,
    param_leaves,
    predict_density,
    predict_transport_perview,
    prepare_inputs,
)
from .optim import AdamState, adam_step

__all__ = [
    "Tape",
    "Var",
    "ArchConfig",
    "FieldInputs",
    "FieldSample",
    "NelfParams",
    "PerViewFeature",
    "PosEnc",
    "SourceView",
    "AdamState",
    "adam_step",
    "aggregate_geometry",
    "batch_forward",
    "blend_transport",
    "build_feature",
    "field_query",
    "init_params",
    "load_params",
    "make_batch_field",
    "param_leaves",
    "predict_density",
    "predict_transport_perview",
    "prepare_inputs",
    "save_params",
]
