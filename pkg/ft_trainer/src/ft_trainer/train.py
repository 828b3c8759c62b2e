"""Maximum-likelihood fine-tuning of a small encoder-decoder rewriter.

The documented default backbone is the flan-t5-base checkpoint; the
"tiny" base model builds the same architecture at toy scale with a
whitespace vocabulary derived from the training file, which keeps the
whole loop runnable offline and in tests. Checkpoints carry either
vocab.json (tiny path) or the saved subword tokenizer (pretrained path),
and serving picks the right codec from the directory contents.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from transformers import T5Config, T5ForConditionalGeneration

from .data import EOS_ID, PAD_ID, WhitespaceVocab, load_examples

logger = logging.getLogger(__name__)

INPUT_TOKEN_LIMIT = 512


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    base_model: str = "google/flan-t5-base"
    epochs: int = 10
    learning_rate: float = 1e-5
    batch_size: int = 8
    max_target_tokens: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


class WhitespaceCodec:
    """Encode/decode through the word-level vocabulary."""

    def __init__(self, vocab: WhitespaceVocab):
        self.vocab = vocab
        self.pad_id = PAD_ID

    def encode(self, text: str, max_tokens: int) -> list[int]:
        return self.vocab.encode(text, max_tokens=max_tokens)

    def decode(self, ids: list[int]) -> str:
        return self.vocab.decode(ids)

    def save(self, out_dir: Path) -> None:
        self.vocab.save(out_dir / "vocab.json")


class SubwordCodec:
    """Encode/decode through a pretrained tokenizer (network-dependent)."""

    def __init__(self, tokenizer):
        self.tokenizer = tokenizer
        self.pad_id = tokenizer.pad_token_id

    def encode(self, text: str, max_tokens: int) -> list[int]:
        return self.tokenizer(text, truncation=True, max_length=max_tokens)["input_ids"]

    def decode(self, ids: list[int]) -> str:
        return self.tokenizer.decode(ids, skip_special_tokens=True)

    def save(self, out_dir: Path) -> None:
        self.tokenizer.save_pretrained(out_dir)


def build_tiny_model(vocab_size: int, seed: int = 0) -> T5ForConditionalGeneration:
    config = T5Config(
        vocab_size=vocab_size,
        d_model=64,
        d_kv=16,
        d_ff=128,
        num_layers=2,
        num_heads=4,
        dropout_rate=0.0,
        decoder_start_token_id=PAD_ID,
        pad_token_id=PAD_ID,
        eos_token_id=EOS_ID,
    )
    torch.manual_seed(seed)
    return T5ForConditionalGeneration(config)


def _fresh_backbone(config: TrainConfig, examples):
    if config.base_model == "tiny":
        vocab = WhitespaceVocab.build(
            [ex.input_text for ex in examples] + [ex.target_text for ex in examples]
        )
        return build_tiny_model(len(vocab), seed=config.seed), WhitespaceCodec(vocab)
    from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(config.base_model)
        model = AutoModelForSeq2SeqLM.from_pretrained(config.base_model)
    except OSError as exc:
        raise TrainingError(
            f"could not load backbone {config.base_model!r} (offline?); "
            "use base_model='tiny' for hub-free runs"
        ) from exc
    return model, SubwordCodec(tokenizer)


def load_codec(checkpoint: Path) -> WhitespaceCodec | SubwordCodec:
    vocab_path = checkpoint / "vocab.json"
    if vocab_path.exists():
        return WhitespaceCodec(WhitespaceVocab.load(vocab_path))
    from transformers import AutoTokenizer

    return SubwordCodec(AutoTokenizer.from_pretrained(checkpoint))


def _pad_batch(rows: list[list[int]], pad_value: int) -> torch.Tensor:
    width = max(len(row) for row in rows)
    return torch.tensor(
        [row + [pad_value] * (width - len(row)) for row in rows], dtype=torch.long
    )


def _batches(examples, codec, config, rng):
    order = list(range(len(examples)))
    rng.shuffle(order)
    for start in range(0, len(order), config.batch_size):
        chunk = [examples[i] for i in order[start : start + config.batch_size]]
        inputs = [codec.encode(ex.input_text, INPUT_TOKEN_LIMIT) for ex in chunk]
        targets = [codec.encode(ex.target_text, config.max_target_tokens) for ex in chunk]
        input_ids = _pad_batch(inputs, codec.pad_id)
        attention_mask = (input_ids != codec.pad_id).long()
        labels = _pad_batch(targets, -100)  # -100 masks padding in the loss
        yield input_ids, attention_mask, labels


def train(
    dataset_path: str | Path,
    out_dir: str | Path,
    config: TrainConfig | None = None,
    resume: bool = False,
) -> dict:
    """Train and checkpoint; returns the training log with per-epoch mean
    losses. With resume=True the weights and epoch counter continue from
    the existing checkpoint and the original config echo is preserved."""
    config = config or TrainConfig()
    out_dir = Path(out_dir)
    examples = load_examples(dataset_path)

    log_path = out_dir / "training_log.json"
    if resume:
        if not log_path.exists():
            raise TrainingError(f"cannot resume: no checkpoint at {out_dir}")
        log = json.loads(log_path.read_text(encoding="utf-8"))
        codec = load_codec(out_dir)
        model = T5ForConditionalGeneration.from_pretrained(out_dir)
        start_epoch = log["epochs_completed"]
    else:
        model, codec = _fresh_backbone(config, examples)
        log = {
            "base_model": config.base_model,
            "config": asdict(config),
            "epochs_completed": 0,
            "losses": [],
        }
        start_epoch = 0

    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    rng = random.Random(config.seed + start_epoch)

    for epoch in range(start_epoch, start_epoch + config.epochs):
        total = 0.0
        steps = 0
        for input_ids, attention_mask, labels in _batches(examples, codec, config, rng):
            optimizer.zero_grad()
            output = model(input_ids=input_ids, attention_mask=attention_mask, labels=labels)
            loss = output.loss
            if not math.isfinite(loss.item()):
                raise TrainingError(
                    f"non-finite loss {loss.item()} at epoch {epoch + 1} step {steps + 1}"
                )
            loss.backward()
            optimizer.step()
            total += loss.item()
            steps += 1
        epoch_loss = total / steps
        log["losses"].append(epoch_loss)
        log["epochs_completed"] = epoch + 1
        logger.info("epoch %d: mean loss %.4f", epoch + 1, epoch_loss)

    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    codec.save(out_dir)
    log_path.write_text(json.dumps(log, indent=2) + "\n", encoding="utf-8")
    return log
