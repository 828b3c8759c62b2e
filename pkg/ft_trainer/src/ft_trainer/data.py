"""Supervision-file loading and the whitespace-token vocabulary.

The training file is json-lines with records {"input_text", "target_text",
"turn_id", "selection_score"}; this module is the only place that schema
is interpreted, keeping the coupling to the producing pipeline at the
file-format level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class DataError(Exception):
    pass


@dataclass(frozen=True)
class TrainingExample:
    input_text: str
    target_text: str
    turn_id: str


def load_examples(path: str | Path) -> list[TrainingExample]:
    examples: list[TrainingExample] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("input_text", "target_text"):
                if key not in record or not str(record[key]).strip():
                    raise DataError(f"{path}:{lineno}: missing or empty {key!r}")
            examples.append(
                TrainingExample(
                    input_text=str(record["input_text"]),
                    target_text=str(record["target_text"]),
                    turn_id=str(record.get("turn_id", f"row{lineno}")),
                )
            )
    if not examples:
        raise DataError(f"{path}: training file holds no records")
    return examples


PAD, EOS, UNK = "<pad>", "</s>", "<unk>"
PAD_ID, EOS_ID, UNK_ID = 0, 1, 2


class WhitespaceVocab:
    """Word-level vocabulary over whitespace tokens; ids are stable across
    runs because the token list is sorted."""

    def __init__(self, tokens: list[str]):
        specials = [PAD, EOS, UNK]
        body = sorted(set(tokens) - set(specials))
        self.itos = specials + body
        self.stoi = {token: idx for idx, token in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    @classmethod
    def build(cls, texts: list[str]) -> "WhitespaceVocab":
        tokens: list[str] = []
        for text in texts:
            tokens.extend(text.split())
        return cls(tokens)

    def encode(self, text: str, max_tokens: int | None = None, add_eos: bool = True) -> list[int]:
        tokens = text.split()
        if max_tokens is not None:
            tokens = tokens[:max_tokens]
        ids = [self.stoi.get(token, UNK_ID) for token in tokens]
        if add_eos:
            ids.append(EOS_ID)
        return ids

    def decode(self, ids: list[int]) -> str:
        words = []
        for idx in ids:
            if idx == EOS_ID:
                break
            if idx in (PAD_ID, UNK_ID) or idx >= len(self.itos):
                continue
            words.append(self.itos[idx])
        return " ".join(words)

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump({"itos": self.itos}, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "WhitespaceVocab":
        with Path(path).open("r", encoding="utf-8") as fh:
            itos = json.load(fh)["itos"]
        vocab = cls.__new__(cls)
        vocab.itos = list(itos)
        vocab.stoi = {token: idx for idx, token in enumerate(vocab.itos)}
        return vocab
