from .arch import FAMILIES, ArchSpec, count_params, param_breakdown
from .base import ChoiceModel, UtilityOutput
from .bounds import bound_ratio_asu_vs_f, layer_norms, rademacher_bound
from .dnn import ASUDNN, FDNN, asudnn_forward, fdnn_forward
from .logit import MNL, NL, mnl_forward, nest_scales, nl_forward

MODEL_CLASSES = {"mnl": MNL, "nl": NL, "fdnn": FDNN, "asudnn": ASUDNN}


def build_model(arch: ArchSpec, x_dims, d_z: int, batch_norm: bool = False,
                dropout: float = 0.0) -> ChoiceModel:
    return MODEL_CLASSES[arch.family](arch, x_dims, d_z, batch_norm=batch_norm, dropout=dropout)


__all__ = [
    "ASUDNN", "ArchSpec", "ChoiceModel", "FAMILIES", "FDNN", "MNL", "MODEL_CLASSES", "NL",
    "UtilityOutput", "asudnn_forward", "bound_ratio_asu_vs_f", "build_model", "count_params",
    "fdnn_forward", "layer_norms", "mnl_forward", "nest_scales", "nl_forward",
    "param_breakdown", "rademacher_bound",
]
