from .exceptions import DepthGuardError
from .tensor import Tensor
from .networks import NetworkSpec, ParameterStore, build_network, forward_depth, forward_saliency
from .attacks import AttackConfig, AttackTarget, fgsm, ifgsm
from .metrics import EvalReport, image_metrics

__version__ = "0.1.0"
