"""Sequence comparison metrics: Levenshtein distance, CER and WER.

All functions accept either token lists or plain strings. Token inputs have
their control symbols stripped (PAD/BOS dropped, cut at EOS) before the
error rates are computed; ``edit_distance`` itself compares raw elements.
"""

from typing import Hashable, List, Optional, Sequence, Union

import numpy as np

from .vocab import SPACE, strip_control

Symbols = Union[str, Sequence[Hashable]]


def edit_distance(a: Symbols, b: Symbols) -> int:
    """Unit-cost Levenshtein distance using two rolling DP rows."""
    if len(a) < len(b):
        a, b = b, a
    # b is the shorter sequence; rows have len(b) + 1 cells.
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (x != y),
            )
        previous = current
    return previous[-1]


def edit_distance_matrix(a: Symbols, b: Symbols) -> np.ndarray:
    """Full (|a|+1) x (|b|+1) DP table; entry [i, j] is ED(a[:i], b[:j]).

    Debug/alignment mode only: use :func:`edit_distance` for the value.
    """
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int64)
    table[:, 0] = np.arange(len(a) + 1)
    table[0, :] = np.arange(len(b) + 1)
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            table[i, j] = min(
                table[i - 1, j] + 1,
                table[i, j - 1] + 1,
                table[i - 1, j - 1] + (a[i - 1] != b[j - 1]),
            )
    return table


def _logical(seq: Symbols) -> Symbols:
    if isinstance(seq, str):
        return seq
    return strip_control(seq)


def cer(hyp: Symbols, ref: Symbols) -> float:
    """Character error rate ED(hyp, ref) / |ref|."""
    hyp, ref = _logical(hyp), _logical(ref)
    if len(ref) == 0:
        raise ValueError("CER is undefined for an empty reference")
    return edit_distance(hyp, ref) / len(ref)


def split_words(seq: Symbols, separator: Optional[Hashable] = None) -> List[tuple]:
    """Split on ``separator``; empty words from repeated separators are dropped."""
    seq = _logical(seq)
    if separator is None:
        separator = " " if isinstance(seq, str) else SPACE
    words: List[tuple] = []
    current: list = []
    for symbol in seq:
        if symbol == separator:
            if current:
                words.append(tuple(current))
            current = []
        else:
            current.append(symbol)
    if current:
        words.append(tuple(current))
    return words


def wer(hyp: Symbols, ref: Symbols, separator: Optional[Hashable] = None) -> float:
    """Word error rate: word-level edit distance over the reference word count."""
    ref_words = split_words(ref, separator)
    if not ref_words:
        raise ValueError("WER is undefined for a reference with no words")
    hyp_words = split_words(hyp, separator)
    return edit_distance(hyp_words, ref_words) / len(ref_words)
