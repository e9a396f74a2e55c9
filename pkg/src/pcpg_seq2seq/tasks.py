"""Synthetic transduction tasks standing in for lip-reading corpora.

Each character of a transcript becomes one or more noisy frames: the one-hot
vector of its vocabulary index, widened to F features, plus Gaussian noise.
Repeating frames 1..max_repeat times mimics a variable speaking rate.

Dataset file format (UTF-8, one record per line)::

    #pcpg-dataset v1 task=<task> F=<width> vocab=<hash> n=<count>
    <seed>\t<label>\t<transcript text>\t<T>\t<T*F float.hex values, space separated>
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError
from .seeding import substream
from .vocab import (
    ALPHANUMERIC_TOKENS,
    LETTER_TOKENS,
    SPACE,
    VOCAB_SIZE,
    decode_tokens,
    encode_text,
    vocab_hash,
)

logger = logging.getLogger(__name__)

FORMAT_TAG = "#pcpg-dataset"
FORMAT_VERSION = "v1"
TASKS = ("copy", "reverse", "sentences", "words")
MAX_TRANSCRIPT_LEN = 20


@dataclass(eq=False)
class SyntheticSample:
    frames: np.ndarray
    transcript: Tuple[int, ...]
    task: str
    seed: int
    label: int = -1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SyntheticSample):
            return NotImplemented
        return (
            self.transcript == other.transcript
            and self.task == other.task
            and self.seed == other.seed
            and self.label == other.label
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


@dataclass
class Dataset:
    task: str
    feature_dim: int
    samples: List[SyntheticSample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[SyntheticSample]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> SyntheticSample:
        return self.samples[index]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.task, self.feature_dim, [self.samples[i] for i in indices])

    @property
    def num_classes(self) -> int:
        return len({s.label for s in self.samples if s.label >= 0})


def _check_len_range(len_range: Tuple[int, int]) -> None:
    low, high = len_range
    if not 1 <= low <= high <= MAX_TRANSCRIPT_LEN:
        raise ValueError(f"length range must lie within [1, {MAX_TRANSCRIPT_LEN}], got {len_range}")


def render_frames(
    tokens: Sequence[int],
    rng: np.random.Generator,
    feature_dim: int = 48,
    noise: float = 0.3,
    max_repeat: int = 3,
) -> np.ndarray:
    """Noisy one-hot frames for ``tokens``, each repeated 1..max_repeat times."""
    if feature_dim < VOCAB_SIZE:
        raise ValueError(f"feature width must be >= {VOCAB_SIZE}, got {feature_dim}")
    rows = []
    for token in tokens:
        repeats = int(rng.integers(1, max_repeat + 1)) if max_repeat > 1 else 1
        for _ in range(repeats):
            row = np.zeros(feature_dim)
            row[token] = 1.0
            rows.append(row)
    frames = np.stack(rows)
    if noise > 0.0:
        frames = frames + rng.normal(0.0, noise, size=frames.shape)
    return frames


def _generate(
    task: str,
    n: int,
    seed: int,
    make_transcript,
    feature_dim: int,
    noise: float,
    max_repeat: int,
    reverse: bool = False,
) -> Dataset:
    samples = []
    for index in range(n):
        sample_seed = int(substream(seed, "data", index).integers(0, 2**31 - 1))
        rng = substream(sample_seed, "data")
        source = make_transcript(rng)
        frames = render_frames(source, rng, feature_dim, noise, max_repeat)
        transcript = tuple(reversed(source)) if reverse else tuple(source)
        samples.append(SyntheticSample(frames, transcript, task, sample_seed))
    return Dataset(task, feature_dim, samples)


def _random_chars(len_range: Tuple[int, int]):
    def make(rng: np.random.Generator) -> List[int]:
        length = int(rng.integers(len_range[0], len_range[1] + 1))
        return [int(t) for t in rng.choice(ALPHANUMERIC_TOKENS, size=length)]

    return make


def gen_copy(
    n: int,
    len_range: Tuple[int, int],
    seed: int,
    feature_dim: int = 48,
    noise: float = 0.3,
    max_repeat: int = 3,
) -> Dataset:
    """Transcript = the characters the frames spell out."""
    _check_len_range(len_range)
    return _generate("copy", n, seed, _random_chars(len_range), feature_dim, noise, max_repeat)


def gen_reverse(
    n: int,
    len_range: Tuple[int, int],
    seed: int,
    feature_dim: int = 48,
    noise: float = 0.3,
    max_repeat: int = 3,
) -> Dataset:
    """Transcript = the frame characters in reverse order."""
    _check_len_range(len_range)
    return _generate(
        "reverse", n, seed, _random_chars(len_range), feature_dim, noise, max_repeat, reverse=True
    )


def gen_sentences(
    n: int,
    len_range: Tuple[int, int],
    seed: int,
    feature_dim: int = 48,
    noise: float = 0.3,
    max_repeat: int = 3,
    word_len: Tuple[int, int] = (1, 4),
) -> Dataset:
    """Space-separated multi-word transcripts whose total length lies in ``len_range``."""
    _check_len_range(len_range)

    def make(rng: np.random.Generator) -> List[int]:
        target = int(rng.integers(len_range[0], len_range[1] + 1))
        tokens: List[int] = []
        while len(tokens) < target:
            if tokens:
                if target - len(tokens) < 2:
                    break
                tokens.append(SPACE)
            room = target - len(tokens)
            length = min(int(rng.integers(word_len[0], word_len[1] + 1)), room)
            tokens.extend(int(t) for t in rng.choice(LETTER_TOKENS, size=length))
        return tokens

    return _generate("sentences", n, seed, make, feature_dim, noise, max_repeat)


def gen_words(
    n_classes: int,
    samples_per_class: int,
    seed: int,
    feature_dim: int = 48,
    noise: float = 0.3,
    max_repeat: int = 3,
    word_len: Tuple[int, int] = (3, 6),
) -> Dataset:
    """Labeled word dataset: ``samples_per_class`` noisy renderings of each class word."""
    if not 1 <= n_classes <= VOCAB_SIZE:
        raise ValueError(f"n_classes must lie in [1, {VOCAB_SIZE}], got {n_classes}")
    rng = substream(seed, "data", 0)
    words: List[Tuple[int, ...]] = []
    while len(words) < n_classes:
        length = int(rng.integers(word_len[0], word_len[1] + 1))
        word = tuple(int(t) for t in rng.choice(LETTER_TOKENS, size=length))
        if word not in words:
            words.append(word)
    samples = []
    for label, word in enumerate(words):
        for index in range(samples_per_class):
            sample_seed = int(substream(seed, "data", 1, label, index).integers(0, 2**31 - 1))
            frames = render_frames(word, substream(sample_seed, "data"), feature_dim, noise, max_repeat)
            samples.append(SyntheticSample(frames, word, "words", sample_seed, label))
    return Dataset("words", feature_dim, samples)


def split_dataset(
    dataset: Dataset, fractions: Sequence[float], seed: int
) -> List[Dataset]:
    """Disjoint seed-determined splits; the last split takes the remainder."""
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    order = substream(seed, "split").permutation(len(dataset))
    splits, start = [], 0
    for i, fraction in enumerate(fractions):
        stop = len(dataset) if i == len(fractions) - 1 else start + int(round(fraction * len(dataset)))
        splits.append(dataset.subset(sorted(int(j) for j in order[start:stop])))
        start = stop
    return splits


def _format_sample(sample: SyntheticSample) -> str:
    values = " ".join(float(v).hex() for v in sample.frames.ravel())
    return "\t".join(
        [str(sample.seed), str(sample.label), decode_tokens(sample.transcript), str(len(sample.frames)), values]
    )


def dumps_dataset(dataset: Dataset) -> str:
    header = (
        f"{FORMAT_TAG} {FORMAT_VERSION} task={dataset.task} F={dataset.feature_dim} "
        f"vocab={vocab_hash()} n={len(dataset)}"
    )
    return "\n".join([header] + [_format_sample(s) for s in dataset]) + "\n"


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_dataset(dataset), encoding="utf-8")
    logger.info("Saved %d %s samples to %s", len(dataset), dataset.task, path)


def _parse_header(line: str) -> Tuple[str, int, int]:
    parts = line.split()
    if len(parts) != 6 or parts[0] != FORMAT_TAG or parts[1] != FORMAT_VERSION:
        raise DataError(f"bad dataset header: {line!r}")
    try:
        fields = dict(part.split("=", 1) for part in parts[2:])
        task, width, count = fields["task"], int(fields["F"]), int(fields["n"])
        digest = fields["vocab"]
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad dataset header: {line!r}") from exc
    if task not in TASKS:
        raise DataError(f"unknown task {task!r} in dataset header")
    if digest != vocab_hash():
        raise DataError(f"vocabulary hash {digest} does not match built-in table {vocab_hash()}")
    return task, width, count


def loads_dataset(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise DataError("empty dataset file")
    task, width, count = _parse_header(lines[0])
    samples = []
    for number, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        try:
            seed, label, transcript, length, values = line.split("\t")
            frames = np.array([float.fromhex(v) for v in values.split()], dtype=np.float64)
            frames = frames.reshape(int(length), width)
            tokens = tuple(encode_text(transcript))
        except ValueError as exc:
            raise DataError(f"line {number}: malformed sample: {exc}") from exc
        samples.append(SyntheticSample(frames, tokens, task, int(seed), int(label)))
    if len(samples) != count:
        raise DataError(f"header promises {count} samples, file holds {len(samples)}")
    return Dataset(task, width, samples)


def load_dataset(path: Union[str, Path]) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    return loads_dataset(path.read_text(encoding="utf-8"))


def dataset_digest(dataset: Dataset) -> str:
    """SHA-256 of the serialized dataset; stable across runs for a fixed seed."""
    return hashlib.sha256(dumps_dataset(dataset).encode("utf-8")).hexdigest()


def generate(task: str, n: int, seed: int, len_range: Tuple[int, int], **kwargs) -> Dataset:
    """Dispatch to the sequence task generators by name."""
    generators = {"copy": gen_copy, "reverse": gen_reverse, "sentences": gen_sentences}
    if task not in generators:
        raise ValueError(f"unknown sequence task {task!r}")
    return generators[task](n, len_range, seed, **kwargs)
