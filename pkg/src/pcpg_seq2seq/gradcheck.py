"""Finite-difference checks of every backward rule and of the training losses."""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import KernelConfig, ModelConfig, TrainConfig
from .grad_core import BACKWARD_RULES, Tape, Tensor, constant, parameter
from .model import Episode, Seq2SeqModel
from .pcpg import PcpgKernel
from .seeding import substream
from .trainer import ce_loss, pcpg_loss, reinforce_loss, score_episode
from .vocab import EOS

logger = logging.getLogger(__name__)

TINY = 1e-30


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tolerance)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a|| + ||n||, tiny)."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(float(np.linalg.norm(analytic) + np.linalg.norm(numeric)), TINY)
    return float(np.linalg.norm(analytic - numeric)) / scale


def numeric_gradient(
    f: Callable[[], float],
    array: np.ndarray,
    eps: float = 1e-6,
    indices: Optional[Sequence[Tuple[int, ...]]] = None,
) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``array`` (perturbed in place, then restored).

    With ``indices`` only those coordinates are probed and a flat vector is returned.
    """
    coords = list(indices) if indices is not None else list(np.ndindex(array.shape))
    out = np.zeros(len(coords))
    for i, index in enumerate(coords):
        original = array[index]
        array[index] = original + eps
        plus = f()
        array[index] = original - eps
        minus = f()
        array[index] = original
        out[i] = (plus - minus) / (2.0 * eps)
    if indices is None:
        return out.reshape(array.shape)
    return out


# -- primitives ---------------------------------------------------------------


def _primitive_cases(rng: np.random.Generator) -> Dict[str, Tuple[List[np.ndarray], Callable]]:
    """op -> (leaf values, builder(tape, leaves) -> tensor)."""

    def r(*shape):
        return rng.normal(size=shape)

    return {
        "matmul": ([r(3, 4), r(4, 2)], lambda t, x: t.matmul(x[0], x[1])),
        "add": ([r(3, 4), r(4)], lambda t, x: t.add(x[0], x[1])),
        "sub": ([r(5), r(5)], lambda t, x: t.sub(x[0], x[1])),
        "mul": ([r(2, 3), r(2, 3)], lambda t, x: t.mul(x[0], x[1])),
        "scale": ([r(4)], lambda t, x: t.scale(x[0], -1.7)),
        "sigmoid": ([r(6)], lambda t, x: t.sigmoid(x[0])),
        "tanh": ([r(6)], lambda t, x: t.tanh(x[0])),
        "exp": ([r(6)], lambda t, x: t.exp(x[0])),
        "log_softmax": ([r(3, 5)], lambda t, x: t.log_softmax(x[0])),
        "embedding": ([r(5, 3)], lambda t, x: t.embedding(x[0], 2)),
        "gather": ([r(5)], lambda t, x: t.gather(x[0], 3)),
        "row": ([r(4, 3)], lambda t, x: t.row(x[0], 1)),
        "concat": ([r(2), r(3)], lambda t, x: t.concat([x[0], x[1]])),
        "stack": ([r(3), r(3)], lambda t, x: t.stack([x[0], x[1]])),
        "sum": ([r(2, 3)], lambda t, x: t.sum(x[0])),
        "reshape": ([r(2, 3)], lambda t, x: t.reshape(x[0], (3, 2))),
    }


def check_primitive(
    name: str,
    values: List[np.ndarray],
    build: Callable,
    eps: float = 1e-6,
    tolerance: float = 1e-7,
    seed: int = 0,
) -> CheckResult:
    started = time.perf_counter()
    leaves = [parameter(v.copy()) for v in values]
    probe = constant(substream(seed, "init", 99).normal(size=build(Tape(False), leaves).shape))

    def scalar(tape: Tape) -> Tensor:
        out = build(tape, leaves)
        return tape.sum(tape.mul(out, probe))

    tape = Tape()
    grads = tape.backward(scalar(tape))
    errors = []
    for leaf in leaves:
        numeric = numeric_gradient(lambda: scalar(Tape(False)).item(), leaf.data, eps)
        analytic = grads.get(leaf, np.zeros_like(leaf.data))
        errors.append(relative_error(analytic, numeric))
    return CheckResult(f"primitive:{name}", max(errors), tolerance, time.perf_counter() - started)


def check_primitives(seed: int = 0, eps: float = 1e-6, tolerance: float = 1e-7) -> List[CheckResult]:
    cases = _primitive_cases(substream(seed, "init", 98))
    missing = set(BACKWARD_RULES) - set(cases)
    if missing:
        raise RuntimeError(f"no finite-difference case for primitives {sorted(missing)}")
    return [check_primitive(op, *cases[op], eps, tolerance, seed) for op in BACKWARD_RULES]


# -- model losses -------------------------------------------------------------


def _tiny_setup(seed: int) -> Tuple[Seq2SeqModel, np.ndarray, Tuple[int, ...], TrainConfig]:
    rng = substream(seed, "data", 7)
    model_config = ModelConfig(
        vocab_size=10,
        feature_dim=6,
        frontend_dim=8,
        encoder_hidden=8,
        decoder_hidden=8,
        embed_dim=8,
        attention_dim=8,
        num_layers=2,
        dropout=0.0,
    )
    model = Seq2SeqModel.initialize(model_config, substream(seed, "init"))
    frames = rng.normal(size=(int(rng.integers(2, 7)), model_config.feature_dim))
    length = int(rng.integers(1, 5))
    reference = tuple(int(t) for t in rng.integers(EOS + 1, model_config.vocab_size, size=length))
    train_config = TrainConfig(
        lam=0.5,
        num_samples=2,
        kernel=KernelConfig(k=3, s=1),
        max_decode_len=5,
        seed=seed,
    )
    return model, frames, reference, train_config


def _rescored(model: Seq2SeqModel, encoder, episodes: Sequence[Episode], tape: Tape) -> List[Episode]:
    """Same tokens and rewards, log-probs recomputed through ``tape``."""
    out = []
    for episode in episodes:
        log_probs = model.score_tokens(episode.tokens, encoder, tape)
        out.append(Episode(episode.tokens, log_probs, episode.rewards, episode.losses))
    return out


def check_model_losses(
    seed: int = 0,
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    coords_per_tensor: int = 2,
) -> List[CheckResult]:
    """End-to-end gradients of L_CE, L_PCPG and L_combine on a hidden-size-8 model.

    Sampled episodes are frozen: finite differences rescore the same tokens
    against the same returns.
    """
    model, frames, reference, config = _tiny_setup(seed)
    kernel = config.kernel.to_kernel()
    encoder = model.encode(frames, Tape(False))
    episodes = [
        score_episode(
            model.sample_episode(
                encoder, config.max_decode_len, substream(seed, "episodes", 0, 0, m), Tape(False)
            ),
            reference,
            config,
        )
        for m in range(config.num_samples)
    ]

    def losses(tape: Tape) -> Dict[str, Tensor]:
        enc = model.encode(frames, tape)
        l_ce = ce_loss(tape, model.score_tokens(reference + (EOS,), enc, tape))
        l_pcpg = pcpg_loss(tape, _rescored(model, enc, episodes, tape), kernel, config.kernel.padding)
        combined = tape.add(tape.scale(l_ce, 1.0 - config.lam), tape.scale(l_pcpg, config.lam))
        return {"ce": l_ce, "pcpg": l_pcpg, "combined": combined}

    rng = substream(seed, "init", 97)
    coords = {}
    for name, tensor in model.parameters.items():
        picks = rng.choice(tensor.size, size=min(coords_per_tensor, tensor.size), replace=False)
        coords[name] = [tuple(int(i) for i in np.unravel_index(j, tensor.shape)) for j in picks]
    results = []
    for target in ("ce", "pcpg", "combined"):
        started = time.perf_counter()
        tape = Tape()
        grads = tape.backward(losses(tape)[target])
        analytic, numeric = [], []
        for name, tensor in model.parameters.items():
            grad = grads.get(tensor, np.zeros_like(tensor.data))
            analytic.extend(grad[index] for index in coords[name])
            numeric.extend(
                numeric_gradient(lambda: losses(Tape(False))[target].item(), tensor.data, eps, coords[name])
            )
        error = relative_error(np.array(analytic), np.array(numeric))
        results.append(CheckResult(f"loss:{target}", error, tolerance, time.perf_counter() - started))
    return results


def check_pcpg_degeneracy(seed: int = 0, tolerance: float = 1e-10) -> CheckResult:
    """k=1, s=1 PCPG gradients must equal vanilla REINFORCE gradients."""
    started = time.perf_counter()
    model, frames, reference, config = _tiny_setup(seed)
    tape = Tape()
    encoder = model.encode(frames, tape)
    episode = score_episode(
        model.sample_episode(encoder, config.max_decode_len, substream(seed, "episodes", 1), tape),
        reference,
        config,
    )
    pcpg = tape.backward(pcpg_loss(tape, [episode], PcpgKernel.uniform(1, 1)))
    vanilla = tape.backward(reinforce_loss(tape, episode))
    error = max(
        relative_error(pcpg.get(t, np.zeros_like(t.data)), vanilla.get(t, np.zeros_like(t.data)))
        for t in model.parameters.values()
    )
    return CheckResult("pcpg:k1-equals-reinforce", error, tolerance, time.perf_counter() - started)


def run_all(seed: int = 0) -> List[CheckResult]:
    results = check_primitives(seed) + check_model_losses(seed) + [check_pcpg_degeneracy(seed)]
    for result in results:
        log = logger.info if result.passed else logger.error
        log(
            "%-28s max rel err %.3e (tol %.0e) %s",
            result.name,
            result.max_error,
            result.tolerance,
            "ok" if result.passed else "FAIL",
        )
    return results
