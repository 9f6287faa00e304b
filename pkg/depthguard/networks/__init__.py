from .spec import LayerPlan, NetworkSpec
from .store import ParameterStore, expected_shapes, init_parameters
from .models import as_model, build_network, forward, forward_depth, forward_saliency
from .checkpoint import checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint
