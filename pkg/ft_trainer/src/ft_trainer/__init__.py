"""Fine-tune a small sequence-to-sequence query rewriter on
pseudo-supervision data and serve it over the chat-completion protocol."""

__version__ = "0.1.0"

from .data import TrainingExample, WhitespaceVocab, load_examples
from .serve import Rewriter, make_server, serve_forever
from .train import TrainConfig, TrainingError, train

__all__ = [
    "Rewriter",
    "TrainConfig",
    "TrainingError",
    "TrainingExample",
    "WhitespaceVocab",
    "load_examples",
    "make_server",
    "serve_forever",
    "train",
]
