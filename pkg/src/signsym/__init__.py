"""Credit-assignment rules (BP, FA, uSF, frSF, brSF) for fine-tuning small
networks, with white-box, decision-based and hashing attacks to measure
their adversarial robustness."""

from .errors import (ConfigError, DataFormatError, DimensionError, NonFiniteError, RangeError,
                     SpecError, StartNotFoundError, StateError)
from .feedback import (AdamState, FeedbackState, Rule, backward_error_signals, feedback_matrix,
                       train, weight_update)
from .network import LossKind, Network, attach_head, forward, loss, loss_grad_output, mlp, small_cnn
from .tensor import SeededRng

__version__ = "0.1.0"
