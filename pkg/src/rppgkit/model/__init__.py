"""Feature-pyramid multitask network: layers, training, scaling and checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .fpn import FpnModel, ModelConfig, forward, loss, loss_and_gradients, parameter_shapes
from .scaler import StandardScaler, fit_scaler
from .train import (AdamState, Example, TrainConfig, backward_step, make_example,
                    predict_recording, standardize_channels, train)
