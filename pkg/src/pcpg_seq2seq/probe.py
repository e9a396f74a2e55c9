"""Classifier probe: how well do encoder representations separate word classes?

A single fully-connected softmax layer reads the mean over time of the encoder
outputs and is trained with label cross-entropy. In ``fix-encoder`` mode only
the classifier learns; in ``train-encoder`` mode the encoder (on a private
copy of the model) is fine-tuned along with it.
"""

import logging
import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional

import numpy as np

from .config import ProbeConfig
from .errors import DataError
from .grad_core import Tape, Tensor, constant, parameter
from .model import Seq2SeqModel
from .optim import Adam
from .seeding import substream
from .tasks import Dataset, SyntheticSample, split_dataset

logger = logging.getLogger(__name__)

ProbeMode = Literal["fix-encoder", "train-encoder"]
MODES = ("fix-encoder", "train-encoder")
ENCODER_PREFIXES = ("frontend.", "encoder.")


@dataclass
class ProbeResult:
    mode: str
    seed: int
    accuracy: float
    chance: float
    train_loss: List[float] = field(default_factory=list)


def pooled_features(model: Seq2SeqModel, frames: np.ndarray, tape: Tape) -> Tensor:
    """Time-averaged encoder outputs, a 2H vector."""
    encoder = model.encode(frames, tape)
    length = encoder.length
    return tape.scale(tape.matmul(constant(np.ones(length)), encoder.outputs), 1.0 / length)


def _classifier(width: int, n_classes: int, rng: np.random.Generator) -> Dict[str, Tensor]:
    bound = 1.0 / np.sqrt(width)
    return {
        "probe.W": parameter(rng.uniform(-bound, bound, size=(width, n_classes)), name="probe.W"),
        "probe.b": parameter(np.zeros(n_classes), name="probe.b"),
    }


def _logits(classifier: Dict[str, Tensor], features: Tensor, tape: Tape) -> Tensor:
    return tape.add(tape.matmul(features, classifier["probe.W"]), classifier["probe.b"])


def _label_loss(tape: Tape, logits: Tensor, label: int) -> Tensor:
    return tape.scale(tape.gather(tape.log_softmax(logits), label), -1.0)


def accuracy(
    model: Seq2SeqModel, classifier: Dict[str, Tensor], samples: List[SyntheticSample]
) -> float:
    if not samples:
        raise DataError("probe evaluation split is empty")
    correct = 0
    for sample in samples:
        tape = Tape(enabled=False)
        logits = _logits(classifier, pooled_features(model, sample.frames, tape), tape)
        correct += int(np.argmax(logits.data)) == sample.label
    return correct / len(samples)


def classifier_probe(
    model: Seq2SeqModel,
    dataset: Dataset,
    mode: ProbeMode = "fix-encoder",
    config: Optional[ProbeConfig] = None,
    seed: int = 0,
) -> ProbeResult:
    """Train a softmax classifier on encoder features and report held-out accuracy."""
    config = config or ProbeConfig()
    if mode not in MODES:
        raise ValueError(f"unknown probe mode {mode!r}; expected one of {MODES}")
    if dataset.feature_dim != model.config.feature_dim:
        raise DataError(
            f"dataset frame width {dataset.feature_dim} does not match model width "
            f"{model.config.feature_dim}"
        )
    n_classes = dataset.num_classes
    if n_classes < 2:
        raise DataError("probe needs a labeled dataset with at least two classes")

    train_split, test_split = split_dataset(
        dataset, [config.train_fraction, 1.0 - config.train_fraction], seed
    )
    if mode == "train-encoder":
        model = model.copy()
    classifier = _classifier(2 * model.config.encoder_hidden, n_classes, substream(seed, "probe", 0))
    trainable = dict(classifier)
    if mode == "train-encoder":
        trainable.update(
            {n: t for n, t in model.parameters.items() if n.startswith(ENCODER_PREFIXES)}
        )
    names = {id(t): n for n, t in trainable.items()}
    optimizer = Adam(config.lr)

    cached: Dict[int, np.ndarray] = {}
    if mode == "fix-encoder":
        for index, sample in enumerate(train_split):
            cached[index] = pooled_features(model, sample.frames, Tape(enabled=False)).data

    history = []
    for epoch in range(config.epochs):
        order = substream(seed, "probe", 1, epoch).permutation(len(train_split))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [int(i) for i in order[start : start + config.batch_size]]
            grads = {n: np.zeros_like(t.data) for n, t in trainable.items()}
            for index in batch:
                sample = train_split[index]
                tape = Tape()
                if mode == "fix-encoder":
                    features = constant(cached[index])
                else:
                    features = pooled_features(model, sample.frames, tape)
                loss = _label_loss(tape, _logits(classifier, features, tape), sample.label)
                epoch_loss += loss.item()
                for tensor, grad in tape.backward(loss).items():
                    if id(tensor) in names:
                        grads[names[id(tensor)]] += grad / len(batch)
            optimizer.step(trainable, grads)
        history.append(epoch_loss / len(train_split))
        logger.debug("probe %s seed %d epoch %d: loss %.4f", mode, seed, epoch, history[-1])

    result = ProbeResult(
        mode=mode,
        seed=seed,
        accuracy=accuracy(model, classifier, test_split.samples),
        chance=1.0 / n_classes,
        train_loss=history,
    )
    logger.info("probe %s seed %d: accuracy %.3f (chance %.3f)", mode, seed, result.accuracy, result.chance)
    return result


@dataclass
class ProbeReport:
    baseline: List[ProbeResult]
    fix_encoder: List[ProbeResult]
    train_encoder: List[ProbeResult]

    @staticmethod
    def _median(results: List[ProbeResult]) -> float:
        return statistics.median(r.accuracy for r in results)

    def summary(self) -> Dict[str, float]:
        return {
            "chance": self.fix_encoder[0].chance,
            "baseline": self._median(self.baseline),
            "fix_encoder": self._median(self.fix_encoder),
            "train_encoder": self._median(self.train_encoder),
        }


def run_probe(model: Seq2SeqModel, dataset: Dataset, config: ProbeConfig) -> ProbeReport:
    """Random-init baseline, fix-encoder and train-encoder accuracy for every seed."""
    baseline, fixed, tuned = [], [], []
    for seed in config.seeds:
        untrained = Seq2SeqModel.initialize(model.config, substream(seed, "probe", 2))
        baseline.append(classifier_probe(untrained, dataset, "fix-encoder", config, seed))
        fixed.append(classifier_probe(model, dataset, "fix-encoder", config, seed))
        tuned.append(classifier_probe(model, dataset, "train-encoder", config, seed))
    return ProbeReport(baseline, fixed, tuned)
