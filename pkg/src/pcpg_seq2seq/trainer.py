"""Losses, gradient estimation and the training loop.

Per training sample the trainer builds one tape holding the encoder pass, the
teacher-forced CE decode and M sampled episodes, then differentiates

    L_combine = (1 - lambda) * L_CE + lambda * L_PCPG

where L_CE is the negative log-likelihood of the reference summed over steps
and L_PCPG averages the windowed REINFORCE losses of the M
episodes. Rewards and returns enter the tape as constants. Batch gradients are
the per-sample gradients averaged in sample order.
"""

import csv
import json
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import load_model, save_model
from .config import ModelConfig, TrainConfig
from .errors import DataError, NumericalError
from .grad_core import Tape, Tensor, constant
from .metrics import cer, wer
from .model import Episode, Seq2SeqModel
from .optim import Optimizer, make_optimizer
from .pcpg import BoundaryPolicy, PcpgKernel, combine, per_step_losses, window_matrix
from .reward import reward_trace
from .seeding import substream
from .tasks import Dataset, SyntheticSample
from .vocab import EOS, SPACE

logger = logging.getLogger(__name__)

METRICS_HEADER = (
    "iter",
    "loss_ce",
    "loss_pcpg",
    "loss_combined",
    "train_cer",
    "val_cer",
    "grad_norm",
    "seconds",
)
DIAGNOSTICS_HEADER = ("iter", "grad_var", "mean_return", "mean_episode_len")
LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"

LossTarget = Literal["combined", "ce", "pcpg"]


# -- losses -------------------------------------------------------------------


def ce_loss(tape: Tape, log_probs: Tensor) -> Tensor:
    """-sum_u log p(c_u | c_<u)."""
    if log_probs.size == 0:
        raise ValueError("CE loss needs at least one step")
    return tape.scale(tape.sum(log_probs), -1.0)


def reinforce_loss(tape: Tape, episode: Episode) -> Tensor:
    """Vanilla policy-gradient loss sum_u -R_u * log P(y_u) for a scored episode."""
    returns = _returns(episode)
    return tape.sum(tape.mul(constant(-returns), episode.log_probs))


def _returns(episode: Episode) -> np.ndarray:
    if episode.rewards is None:
        raise ValueError("episode has not been scored against a reference")
    return episode.rewards.returns


def score_episode(episode: Episode, reference: Sequence[int], config: TrainConfig) -> Episode:
    """Attach rewards and per-step losses.

    The reference gets EOS appended, so an episode that stops at the right
    place earns a reward for its EOS action.
    """
    target = tuple(reference) + (EOS,)
    episode.rewards = reward_trace(
        episode.tokens, target, config.gamma, config.discount_mode, config.baseline
    )
    episode.losses = per_step_losses(episode.rewards.returns, episode.log_probs.data)
    return episode


def pcpg_loss(
    tape: Tape,
    episodes: Sequence[Episode],
    kernel: PcpgKernel,
    padding: BoundaryPolicy = BoundaryPolicy.ZERO_PAD,
) -> Tensor:
    """(1/M) sum_m aggregate(window_map(-R^(m) * log P(y^(m))))."""
    if not episodes:
        raise ValueError("PCPG loss needs at least one episode")
    total: Optional[Tensor] = None
    for episode in episodes:
        losses = tape.mul(constant(-_returns(episode)), episode.log_probs)
        windows = constant(window_matrix(kernel, len(episode), padding))
        value = tape.sum(tape.matmul(windows, losses))
        total = value if total is None else tape.add(total, value)
    return tape.scale(total, 1.0 / len(episodes))


@dataclass
class SampleLosses:
    ce: Tensor
    pcpg: Tensor
    combined: Tensor
    episodes: List[Episode]


def sample_losses(
    model: Seq2SeqModel,
    sample: SyntheticSample,
    config: TrainConfig,
    tape: Tape,
    iteration: int = 0,
    index: int = 0,
    dropout: bool = True,
) -> SampleLosses:
    """Build all loss terms for one sample on ``tape``.

    Episode m draws from the ``episodes`` stream keyed by (iteration, index, m);
    dropout masks come from the ``dropout`` stream with the same keys, slot 0
    reserved for the teacher-forced pass.
    """
    reference = tuple(sample.transcript)
    kernel = config.kernel.to_kernel()

    def dropout_rng(slot: int) -> Optional[np.random.Generator]:
        if not dropout:
            return None
        return substream(config.seed, "dropout", iteration, index, slot)

    encoder = model.encode(sample.frames, tape)
    episodes = []
    for m in range(config.num_samples):
        episode = model.sample_episode(
            encoder,
            config.max_decode_len,
            substream(config.seed, "episodes", iteration, index, m),
            tape,
            temperature=config.temperature,
            dropout_rng=dropout_rng(m + 1),
        )
        episodes.append(score_episode(episode, reference, config))

    if config.ce_source == "teacher-forced":
        forced = model.decode_teacher_forced(reference + (EOS,), encoder, tape, dropout_rng(0))
        loss_ce = ce_loss(tape, forced)
    else:
        terms = [ce_loss(tape, episode.log_probs) for episode in episodes]
        loss_ce = terms[0]
        for term in terms[1:]:
            loss_ce = tape.add(loss_ce, term)
        loss_ce = tape.scale(loss_ce, 1.0 / len(terms))

    loss_pcpg = pcpg_loss(tape, episodes, kernel, config.kernel.padding)
    combined = tape.add(tape.scale(loss_ce, 1.0 - config.lam), tape.scale(loss_pcpg, config.lam))
    return SampleLosses(loss_ce, loss_pcpg, combined, episodes)


# -- gradient estimation ------------------------------------------------------


@dataclass
class StepResult:
    loss_ce: float
    loss_pcpg: float
    loss_combined: float
    grads: Dict[str, np.ndarray]
    grad_norm: float
    grad_var: float
    mean_return: float
    mean_episode_len: float


def batch_gradients(
    model: Seq2SeqModel,
    batch: Sequence[SyntheticSample],
    config: TrainConfig,
    iteration: int = 0,
    target: LossTarget = "combined",
    dropout: bool = True,
) -> StepResult:
    """Mean loss terms and the mean gradient of ``target`` over ``batch``."""
    if not batch:
        raise ValueError("empty batch")
    names = {id(tensor): name for name, tensor in model.parameters.items()}
    grad_sum = {name: np.zeros_like(t.data) for name, t in model.parameters.items()}
    grad_sq = {name: np.zeros_like(t.data) for name, t in model.parameters.items()}
    ce_values, pcpg_values, returns, lengths = [], [], [], []
    for index, sample in enumerate(batch):
        tape = Tape()
        losses = sample_losses(model, sample, config, tape, iteration, index, dropout)
        loss = {"combined": losses.combined, "ce": losses.ce, "pcpg": losses.pcpg}[target]
        for tensor, grad in tape.backward(loss).items():
            name = names[id(tensor)]
            grad_sum[name] += grad
            grad_sq[name] += grad * grad
        ce_values.append(losses.ce.item())
        pcpg_values.append(losses.pcpg.item())
        for episode in losses.episodes:
            returns.append(float(np.mean(episode.rewards.returns)))
            lengths.append(len(episode))

    size = len(batch)
    grads = {name: g / size for name, g in grad_sum.items()}
    grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    coords = sum(g.size for g in grads.values())
    variance = sum(float(np.sum(grad_sq[n] / size - grads[n] ** 2)) for n in grads) / coords
    loss_ce = math.fsum(ce_values) / size
    loss_pcpg = math.fsum(pcpg_values) / size
    return StepResult(
        loss_ce=loss_ce,
        loss_pcpg=loss_pcpg,
        loss_combined=combine(loss_ce, loss_pcpg, config.lam),
        grads=grads,
        grad_norm=grad_norm,
        grad_var=variance,
        mean_return=statistics.fmean(returns),
        mean_episode_len=statistics.fmean(lengths),
    )


def combined_step(
    model: Seq2SeqModel,
    batch: Sequence[SyntheticSample],
    config: TrainConfig,
    iteration: int = 0,
) -> StepResult:
    """Loss breakdown and the gradient of L_combine for one batch."""
    return batch_gradients(model, batch, config, iteration, "combined")


def optimize(model: Seq2SeqModel, grads: Dict[str, np.ndarray], optimizer: Optimizer) -> None:
    optimizer.step(model.parameters, grads)


# -- evaluation ---------------------------------------------------------------


@dataclass
class EvalReport:
    greedy_cer: List[float] = field(default_factory=list)
    beam_cer: List[float] = field(default_factory=list)
    greedy_wer: List[float] = field(default_factory=list)
    beam_wer: List[float] = field(default_factory=list)
    beam_width: int = 1

    @staticmethod
    def _mean(values: List[float]) -> float:
        return statistics.fmean(values) if values else float("nan")

    def summary(self) -> Dict[str, float]:
        return {
            "samples": len(self.greedy_cer),
            "beam_width": self.beam_width,
            "greedy_cer": self._mean(self.greedy_cer),
            "beam_cer": self._mean(self.beam_cer),
            "greedy_wer": self._mean(self.greedy_wer),
            "beam_wer": self._mean(self.beam_wer),
        }


def evaluate(
    model: Seq2SeqModel,
    dataset: Dataset,
    max_len: int,
    beam: int = 0,
    limit: Optional[int] = None,
    length_penalty: float = 1.0,
) -> EvalReport:
    """Greedy (and, if ``beam`` > 0, beam-search) CER/WER per sample."""
    report = EvalReport(beam_width=beam)
    samples = dataset.samples if limit is None else dataset.samples[:limit]
    for sample in samples:
        encoder = model.encode(sample.frames, Tape(enabled=False))
        reference = sample.transcript
        has_words = SPACE in reference
        greedy = model.greedy_decode(encoder, max_len)
        report.greedy_cer.append(cer(greedy, reference))
        if has_words:
            report.greedy_wer.append(wer(greedy, reference))
        if beam > 0:
            best = model.beam_search(encoder, beam, max_len, length_penalty)
            report.beam_cer.append(cer(best, reference))
            if has_words:
                report.beam_wer.append(wer(best, reference))
    return report


def mean_cer(model: Seq2SeqModel, dataset: Dataset, max_len: int, limit: Optional[int] = None) -> float:
    return statistics.fmean(evaluate(model, dataset, max_len, limit=limit).greedy_cer)


# -- training loop ------------------------------------------------------------


@dataclass
class MetricsRow:
    iter: int
    loss_ce: float
    loss_pcpg: float
    loss_combined: float
    train_cer: Optional[float]
    val_cer: Optional[float]
    grad_norm: float
    seconds: float


@dataclass
class _RunState:
    iteration: int = 0
    best_val: float = float("inf")
    evals_since_best: int = 0
    seconds: float = 0.0


def _batch(config: TrainConfig, dataset: Dataset, iteration: int) -> List[SyntheticSample]:
    rng = substream(config.seed, "batch", iteration)
    size = min(config.batch_size, len(dataset))
    return [dataset[int(i)] for i in rng.choice(len(dataset), size=size, replace=False)]


def _dump_diagnostics(out_dir: Path, iteration: int, result: StepResult, model: Seq2SeqModel) -> Path:
    path = out_dir / "diagnostic.json"
    payload = {
        "iteration": iteration,
        "loss_ce": result.loss_ce,
        "loss_pcpg": result.loss_pcpg,
        "loss_combined": result.loss_combined,
        "grad_norm": result.grad_norm,
        "parameter_norms": {
            name: float(np.linalg.norm(t.data)) for name, t in model.parameters.items()
        },
    }
    path.write_text(json.dumps(payload, indent=2, default=str), encoding="utf-8")
    return path


def _open_csv(path: Path, header: Sequence[str], resume_from: Optional[int]):
    """Open a CSV for appending; on resume drop rows past the checkpoint."""
    rows: List[Dict[str, str]] = []
    if resume_from is not None and path.is_file():
        with open(path, newline="", encoding="utf-8") as existing:
            rows = [row for row in csv.DictReader(existing) if int(row["iter"]) <= resume_from]
    handle = open(path, "w", newline="", encoding="utf-8")
    writer = csv.DictWriter(handle, fieldnames=list(header))
    writer.writeheader()
    writer.writerows(rows)
    return handle, writer


def _save(path: Path, model: Seq2SeqModel, optimizer: Optimizer, state: _RunState) -> None:
    save_model(
        path,
        model,
        optimizer.state_dict(),
        optimizer=optimizer.name,
        **asdict(state),
    )


def train(
    config: TrainConfig,
    model_config: ModelConfig,
    train_set: Dataset,
    val_set: Dataset,
    out_dir: Path,
    resume: bool = False,
    log_every: int = 10,
) -> List[MetricsRow]:
    """Run the optimization loop, writing metrics.csv, diagnostics.csv and checkpoints."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("training and validation sets must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = _RunState()
    optimizer = make_optimizer(config.optimizer, config.lr)

    if resume and (out_dir / LAST_CHECKPOINT).is_file():
        model, extra, metadata = load_model(out_dir / LAST_CHECKPOINT)
        optimizer.load_state_dict(extra)
        state = _RunState(
            iteration=int(metadata["iteration"]),
            best_val=float(metadata["best_val"]),
            evals_since_best=int(metadata["evals_since_best"]),
            seconds=float(metadata["seconds"]),
        )
        logger.info("Resuming from iteration %d", state.iteration)
        resume_from: Optional[int] = state.iteration
    else:
        model = Seq2SeqModel.initialize(model_config, substream(config.seed, "init"))
        resume_from = None
    logger.info(
        "Training %d parameters: lambda=%g k=%d s=%d M=%d optimizer=%s",
        model.num_parameters(),
        config.lam,
        config.kernel.k,
        config.kernel.s,
        config.num_samples,
        config.optimizer,
    )

    rows: List[MetricsRow] = []
    metrics_file, metrics = _open_csv(out_dir / "metrics.csv", METRICS_HEADER, resume_from)
    diag_file, diagnostics = _open_csv(out_dir / "diagnostics.csv", DIAGNOSTICS_HEADER, resume_from)
    started = time.perf_counter() - state.seconds
    try:
        while state.iteration < config.max_iters:
            state.iteration += 1
            iteration = state.iteration
            result = combined_step(model, _batch(config, train_set, iteration), config, iteration)
            if not all(
                math.isfinite(v) for v in (result.loss_combined, result.grad_norm)
            ):
                path = _dump_diagnostics(out_dir, iteration, result, model)
                raise NumericalError(
                    f"non-finite loss or gradient at iteration {iteration}; see {path}",
                    {"iteration": iteration, "diagnostic": str(path)},
                )
            optimize(model, result.grads, optimizer)
            state.seconds = time.perf_counter() - started

            evaluate_now = iteration % config.eval_every == 0 or iteration == config.max_iters
            train_cer = val_cer = None
            if evaluate_now:
                train_cer = mean_cer(model, train_set, config.max_decode_len, config.train_eval_samples)
                val_cer = mean_cer(model, val_set, config.max_decode_len, config.val_eval_samples)
                logger.info(
                    "iter %d: L_ce=%.4f L_pcpg=%.4f L=%.4f train_cer=%.4f val_cer=%.4f",
                    iteration,
                    result.loss_ce,
                    result.loss_pcpg,
                    result.loss_combined,
                    train_cer,
                    val_cer,
                )
            logger.debug(
                "iter %d: grad_var=%.3e mean_return=%.3f", iteration, result.grad_var, result.mean_return
            )
            if evaluate_now or iteration % log_every == 0:
                row = MetricsRow(
                    iteration,
                    result.loss_ce,
                    result.loss_pcpg,
                    result.loss_combined,
                    train_cer,
                    val_cer,
                    result.grad_norm,
                    state.seconds,
                )
                rows.append(row)
                metrics.writerow({k: ("" if v is None else v) for k, v in asdict(row).items()})
                diagnostics.writerow(
                    {
                        "iter": iteration,
                        "grad_var": result.grad_var,
                        "mean_return": result.mean_return,
                        "mean_episode_len": result.mean_episode_len,
                    }
                )
                metrics_file.flush()
                diag_file.flush()

            stop = False
            if val_cer is not None:
                if val_cer < state.best_val:
                    state.best_val, state.evals_since_best = val_cer, 0
                    _save(out_dir / BEST_CHECKPOINT, model, optimizer, state)
                else:
                    state.evals_since_best += 1
                    stop = config.patience > 0 and state.evals_since_best >= config.patience
            if iteration % config.checkpoint_every == 0 or stop or iteration == config.max_iters:
                _save(out_dir / LAST_CHECKPOINT, model, optimizer, state)
            if stop:
                logger.info("Validation CER plateaued; stopping at iteration %d", iteration)
                break
    finally:
        metrics_file.close()
        diag_file.close()
    return rows


def read_metrics(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def final_val_cer(rows: Sequence[MetricsRow]) -> float:
    evaluated = [row.val_cer for row in rows if row.val_cer is not None]
    if not evaluated:
        raise ValueError("no evaluation rows recorded")
    return evaluated[-1]


def train_model_only(
    config: TrainConfig, model_config: ModelConfig, train_set: Dataset, iterations: int
) -> Tuple[Seq2SeqModel, List[StepResult]]:
    """Short in-memory training run without files; used by the probe and tests."""
    model = Seq2SeqModel.initialize(model_config, substream(config.seed, "init"))
    optimizer = make_optimizer(config.optimizer, config.lr)
    history = []
    for iteration in range(1, iterations + 1):
        result = combined_step(model, _batch(config, train_set, iteration), config, iteration)
        optimize(model, result.grads, optimizer)
        history.append(result)
    return model, history
