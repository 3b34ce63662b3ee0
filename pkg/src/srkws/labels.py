"""Hierarchical clip labels: speech, keyword-like speech, keyword identity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KEYWORD = "keyword"
NON_KEYWORD_SPEECH = "non_keyword_speech"
NON_SPEECH = "non_speech"
LABEL_KINDS = (KEYWORD, NON_KEYWORD_SPEECH, NON_SPEECH)


@dataclass(frozen=True)
class HierLabel:
    """Ground truth for one clip.

    ``keyword_like`` is defined exactly when ``speech`` is true, and
    ``keyword_index`` exactly when ``keyword_like`` is true; any other
    combination is rejected at construction.
    """

    speech: bool
    keyword_like: bool | None = None
    keyword_index: int | None = None

    def __post_init__(self):
        if self.speech != (self.keyword_like is not None):
            raise ValueError("keyword_like must be present exactly when speech is true")
        if (self.keyword_like is True) != (self.keyword_index is not None):
            raise ValueError("keyword_index must be present exactly when keyword_like is true")
        if self.keyword_index is not None and self.keyword_index < 0:
            raise ValueError(f"keyword_index must be >= 0, got {self.keyword_index}")

    @staticmethod
    def keyword(index: int) -> "HierLabel":
        return HierLabel(speech=True, keyword_like=True, keyword_index=index)

    @staticmethod
    def non_keyword_speech() -> "HierLabel":
        return HierLabel(speech=True, keyword_like=False)

    @staticmethod
    def non_speech() -> "HierLabel":
        return HierLabel(speech=False)

    @property
    def kind(self) -> str:
        if self.keyword_like:
            return KEYWORD
        if self.speech:
            return NON_KEYWORD_SPEECH
        return NON_SPEECH

    def validate(self, n_keywords: int) -> None:
        if self.keyword_index is not None and self.keyword_index >= n_keywords:
            raise ValueError(
                f"keyword_index {self.keyword_index} out of range for {n_keywords} keywords"
            )

    def class_index(self, n_keywords: int) -> int:
        """Flat class id: keywords 0..N-1, then non-keyword speech, then non-speech."""
        self.validate(n_keywords)
        if self.keyword_like:
            return self.keyword_index
        if self.speech:
            return n_keywords
        return n_keywords + 1


def label_from_class_index(index: int, n_keywords: int) -> HierLabel:
    """Inverse of :meth:`HierLabel.class_index`."""
    if not 0 <= index < n_keywords + 2:
        raise ValueError(f"class index {index} out of range for {n_keywords} keywords")
    if index < n_keywords:
        return HierLabel.keyword(index)
    if index == n_keywords:
        return HierLabel.non_keyword_speech()
    return HierLabel.non_speech()


def labels_to_class_indices(labels, n_keywords: int) -> np.ndarray:
    return np.array([lab.class_index(n_keywords) for lab in labels], dtype=np.int64)


def kind_of_class_index(index: int, n_keywords: int) -> str:
    return label_from_class_index(index, n_keywords).kind
