"""The fixed 40-symbol character vocabulary.

Index layout: PAD=0, BOS=1, EOS=2, space=3, then ``a``-``z`` and ``0``-``9``.
A logical TokenSequence never contains PAD or BOS and holds at most one EOS,
which must be its last element.
"""

import hashlib
import string
from typing import Iterable, List, Sequence, Tuple

PAD = 0
BOS = 1
EOS = 2
SPACE = 3

CONTROL_SYMBOLS = ("<pad>", "<bos>", "<eos>")
SYMBOLS: Tuple[str, ...] = CONTROL_SYMBOLS + (" ",) + tuple(string.ascii_lowercase) + tuple(
    string.digits
)
VOCAB_SIZE = len(SYMBOLS)

# Tokens a transcript may use (no control symbols).
CHARACTER_TOKENS: Tuple[int, ...] = tuple(range(SPACE, VOCAB_SIZE))
LETTER_TOKENS: Tuple[int, ...] = tuple(range(SPACE + 1, SPACE + 1 + 26))
ALPHANUMERIC_TOKENS: Tuple[int, ...] = tuple(range(SPACE + 1, VOCAB_SIZE))

TokenSequence = Sequence[int]

_CHAR_TO_INDEX = {symbol: index for index, symbol in enumerate(SYMBOLS) if index >= SPACE}

assert VOCAB_SIZE == 40


def encode_text(text: str) -> List[int]:
    """Map a lowercase alphanumeric string (spaces allowed) to token indices."""
    try:
        return [_CHAR_TO_INDEX[ch] for ch in text]
    except KeyError as exc:
        raise ValueError(f"character {exc.args[0]!r} is not in the vocabulary") from None


def decode_tokens(tokens: Iterable[int]) -> str:
    """Render tokens as text; control symbols are dropped, decoding stops at EOS."""
    return "".join(SYMBOLS[t] for t in strip_control(tokens))


def strip_control(tokens: Iterable[int]) -> List[int]:
    """Drop PAD/BOS and cut at the first EOS (exclusive)."""
    out = []
    for t in tokens:
        if t == EOS:
            break
        if t in (PAD, BOS):
            continue
        out.append(int(t))
    return out


def validate_sequence(tokens: TokenSequence, vocab_size: int = VOCAB_SIZE) -> None:
    """Raise ValueError unless ``tokens`` is a well-formed logical sequence."""
    for position, t in enumerate(tokens):
        if not 0 <= t < vocab_size:
            raise ValueError(f"token {t} at position {position} outside [0, {vocab_size})")
        if t in (PAD, BOS):
            raise ValueError(f"control token {SYMBOLS[t]} at position {position}")
        if t == EOS and position != len(tokens) - 1:
            raise ValueError(f"tokens follow EOS at position {position}")


def vocab_hash() -> str:
    """Stable digest of the symbol table, written into dataset headers."""
    digest = hashlib.sha256("\x1f".join(SYMBOLS).encode("utf-8"))
    return digest.hexdigest()[:16]
