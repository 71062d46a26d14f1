from .debounce import Debouncer, EventDecision, debounce
from .gradcheck import gradient_check, numeric_grads
from .lstm import (
    HIDDEN, LstmModel, LstmState, StreamingDetector, forward_sequence, forward_step, init_model,
    loss_and_grads, predict, zero_model,
)
from .modelio import load_model, save_model
from .training import TrainConfig, frame_accuracy, train

__all__ = [
    "HIDDEN", "Debouncer", "EventDecision", "LstmModel", "LstmState", "StreamingDetector",
    "TrainConfig", "debounce", "forward_sequence", "forward_step", "frame_accuracy",
    "gradient_check", "init_model", "load_model", "loss_and_grads", "numeric_grads", "predict",
    "save_model", "train", "zero_model",
]
