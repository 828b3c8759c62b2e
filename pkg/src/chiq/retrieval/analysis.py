"""Deterministic text analysis for indexing and querying.

Pipeline: lowercase -> punctuation strip -> whitespace split -> stopword
removal -> stemming. Stateless; the same config always yields the same
terms, and an index records its analyzer fingerprint so query-time
analysis mismatches can be refused.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass

from .stem import porter_stem

# the standard short English list (Lucene's default 33 terms)
STOPWORD_SETS: dict[str, frozenset[str]] = {
    "none": frozenset(),
    "english": frozenset(
        {
            "a", "an", "and", "are", "as", "at", "be", "but", "by", "for",
            "if", "in", "into", "is", "it", "no", "not", "of", "on", "or",
            "such", "that", "the", "their", "then", "there", "these",
            "they", "this", "to", "was", "will", "with",
        }
    ),
}

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})


@dataclass(frozen=True)
class AnalyzerConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    stemmer: str = "porter"  # "none" | "porter"
    stopword_list: str = "english"  # key into STOPWORD_SETS

    def __post_init__(self) -> None:
        if self.stemmer not in ("none", "porter"):
            raise ValueError(f"unknown stemmer {self.stemmer!r}")
        if self.stopword_list not in STOPWORD_SETS:
            raise ValueError(f"unknown stopword list {self.stopword_list!r}")

    def fingerprint(self) -> str:
        material = json.dumps(
            {
                "lowercase": self.lowercase,
                "strip_punctuation": self.strip_punctuation,
                "stemmer": self.stemmer,
                "stopword_list": self.stopword_list,
            },
            sort_keys=True,
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "stemmer": self.stemmer,
            "stopword_list": self.stopword_list,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnalyzerConfig":
        return cls(
            lowercase=bool(data.get("lowercase", True)),
            strip_punctuation=bool(data.get("strip_punctuation", True)),
            stemmer=data.get("stemmer", "porter"),
            stopword_list=data.get("stopword_list", "english"),
        )


def analyze(text: str, config: AnalyzerConfig | None = None) -> list[str]:
    """Turn raw text into index terms."""
    config = config or AnalyzerConfig()
    if config.lowercase:
        text = text.lower()
    if config.strip_punctuation:
        text = text.translate(_PUNCT_TABLE)
    tokens = text.split()
    stopwords = STOPWORD_SETS[config.stopword_list]
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    if config.stemmer == "porter":
        tokens = [porter_stem(t) for t in tokens]
    return tokens
