"""Attention-based GRU sequence-to-sequence model on the tape engine.

Encoder: a learned linear embedding of each input frame followed by a stacked
bidirectional GRU. Decoder: a stacked GRU fed the embedded previous token and
the attention context, projecting to C output categories. PAD and BOS are
masked out of every output distribution, so no decode can emit them.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ModelConfig
from .errors import ShapeError
from .grad_core import Tensor, Tape, constant, parameter
from .reward import RewardTrace
from .vocab import BOS, EOS, PAD

logger = logging.getLogger(__name__)

MASKED_LOGIT = -1e9
_GATES = ("r", "z", "n")


@dataclass
class EncoderState:
    """Per-frame encoder outputs O^e (T x 2H) and per-layer final hidden vectors."""

    outputs: Tensor
    final_hidden: List[Tensor]
    keys: Tensor  # outputs projected into attention space, T x A

    @property
    def length(self) -> int:
        return self.outputs.shape[0]


@dataclass
class DecoderStep:
    hidden: List[Tensor]
    attention: Tensor
    context: Tensor
    logits: Tensor
    log_probs: Tensor
    token: Optional[int] = None
    token_log_prob: Optional[Tensor] = None


@dataclass
class Episode:
    """One Monte-Carlo rollout: sampled tokens and their log-probabilities.

    ``rewards`` and ``losses`` are filled in by the trainer once the episode is
    scored against its reference.
    """

    tokens: Tuple[int, ...]
    log_probs: Tensor
    rewards: Optional[RewardTrace] = None
    losses: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(order=True)
class Hypothesis:
    score: float
    tokens: Tuple[int, ...] = field(compare=False)
    finished: bool = field(default=False, compare=False)


def _gru_shapes(prefix: str, input_dim: int, hidden: int) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for gate in _GATES:
        shapes[f"{prefix}.W_{gate}"] = (input_dim, hidden)
        shapes[f"{prefix}.U_{gate}"] = (hidden, hidden)
        shapes[f"{prefix}.b_{gate}"] = (hidden,)
    return shapes


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape for every trainable tensor, in a fixed order."""
    shapes: Dict[str, Tuple[int, ...]] = {
        "frontend.W": (config.feature_dim, config.frontend_dim),
        "frontend.b": (config.frontend_dim,),
    }
    enc_out = 2 * config.encoder_hidden
    for layer in range(config.num_layers):
        input_dim = config.frontend_dim if layer == 0 else enc_out
        for direction in ("fwd", "bwd"):
            shapes.update(
                _gru_shapes(f"encoder.l{layer}.{direction}", input_dim, config.encoder_hidden)
            )
    for layer in range(config.num_layers):
        shapes[f"bridge.l{layer}.W"] = (enc_out, config.decoder_hidden)
        shapes[f"bridge.l{layer}.b"] = (config.decoder_hidden,)
    shapes["attn.W_h"] = (config.decoder_hidden, config.attention_dim)
    shapes["attn.W_o"] = (enc_out, config.attention_dim)
    shapes["attn.b"] = (config.attention_dim,)
    shapes["attn.v"] = (config.attention_dim,)
    shapes["decoder.embed"] = (config.vocab_size, config.embed_dim)
    for layer in range(config.num_layers):
        input_dim = config.embed_dim + enc_out if layer == 0 else config.decoder_hidden
        shapes.update(_gru_shapes(f"decoder.l{layer}", input_dim, config.decoder_hidden))
    shapes["output.W"] = (config.decoder_hidden + enc_out, config.vocab_size)
    shapes["output.b"] = (config.vocab_size,)
    return shapes


class Seq2SeqModel:
    """Parameters plus the encode/attend/decode operations over them."""

    def __init__(self, config: ModelConfig, parameters: Dict[str, Tensor]):
        expected = parameter_shapes(config)
        if list(parameters) != list(expected):
            raise ValueError("parameter names do not match the model layout")
        for name, shape in expected.items():
            if parameters[name].shape != shape:
                raise ShapeError("model", [parameters[name].shape, shape], name)
        self.config = config
        self.parameters = parameters
        mask = np.zeros(config.vocab_size)
        mask[[PAD, BOS]] = MASKED_LOGIT
        self._output_mask = constant(mask)
        self.allowed_tokens = tuple(t for t in range(config.vocab_size) if t not in (PAD, BOS))

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "Seq2SeqModel":
        params: Dict[str, Tensor] = {}
        for name, shape in parameter_shapes(config).items():
            if name.endswith(".embed"):
                value = rng.normal(0.0, 0.1, size=shape)
            elif len(shape) == 1 and not name.endswith(".v"):
                value = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[-1] if name.endswith(".v") else shape[0])
                value = rng.uniform(-bound, bound, size=shape)
            params[name] = parameter(value, name=name)
        return cls(config, params)

    def __getitem__(self, name: str) -> Tensor:
        return self.parameters[name]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.parameters.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        if set(state) != set(self.parameters):
            missing = set(self.parameters) ^ set(state)
            raise ValueError(f"state dict does not match model parameters: {sorted(missing)}")
        for name, tensor in self.parameters.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ShapeError("load_state_dict", [value.shape, tensor.shape], name)
            tensor.data = value.copy()

    def copy(self) -> "Seq2SeqModel":
        params = {name: parameter(t.data.copy(), name=name) for name, t in self.parameters.items()}
        return Seq2SeqModel(self.config, params)

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters.values())

    # -- building blocks ----------------------------------------------------

    def _gru(self, tape: Tape, prefix: str, x: Tensor, h: Tensor) -> Tensor:
        p = self.parameters

        def gate(name: str) -> Tensor:
            return tape.add(
                tape.add(tape.matmul(x, p[f"{prefix}.W_{name}"]), tape.matmul(h, p[f"{prefix}.U_{name}"])),
                p[f"{prefix}.b_{name}"],
            )

        r = tape.sigmoid(gate("r"))
        z = tape.sigmoid(gate("z"))
        candidate = tape.add(tape.matmul(x, p[f"{prefix}.W_n"]), p[f"{prefix}.b_n"])
        n = tape.tanh(tape.add(candidate, tape.mul(r, tape.matmul(h, p[f"{prefix}.U_n"]))))
        # (1 - z) * n + z * h
        return tape.add(n, tape.mul(z, tape.sub(h, n)))

    def encode(self, frames: np.ndarray, tape: Tape) -> EncoderState:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"frames must be a non-empty T x F matrix, got shape {frames.shape}")
        if frames.shape[1] != self.config.feature_dim:
            raise ShapeError(
                "encode", [frames.shape], f"feature width must be {self.config.feature_dim}"
            )
        p = self.parameters
        length = frames.shape[0]
        embedded = tape.add(tape.matmul(constant(frames), p["frontend.W"]), p["frontend.b"])
        inputs = [tape.row(embedded, t) for t in range(length)]
        zeros = constant(np.zeros(self.config.encoder_hidden))
        final_hidden: List[Tensor] = []
        for layer in range(self.config.num_layers):
            forward: List[Tensor] = []
            h = zeros
            for t in range(length):
                h = self._gru(tape, f"encoder.l{layer}.fwd", inputs[t], h)
                forward.append(h)
            backward: List[Optional[Tensor]] = [None] * length
            h = zeros
            for t in reversed(range(length)):
                h = self._gru(tape, f"encoder.l{layer}.bwd", inputs[t], h)
                backward[t] = h
            inputs = [tape.concat([forward[t], backward[t]]) for t in range(length)]
            final_hidden.append(tape.concat([forward[-1], backward[0]]))
        outputs = tape.stack(inputs)
        keys = tape.matmul(outputs, p["attn.W_o"])
        return EncoderState(outputs=outputs, final_hidden=final_hidden, keys=keys)

    def initial_state(self, encoder: EncoderState, tape: Tape) -> List[Tensor]:
        p = self.parameters
        return [
            tape.tanh(tape.add(tape.matmul(h, p[f"bridge.l{layer}.W"]), p[f"bridge.l{layer}.b"]))
            for layer, h in enumerate(encoder.final_hidden)
        ]

    def attend(self, h_prev: Tensor, encoder: EncoderState, tape: Tape) -> Tuple[Tensor, Tensor]:
        """Additive attention: weights over the T encoder steps and their context."""
        p = self.parameters
        query = tape.add(tape.matmul(h_prev, p["attn.W_h"]), p["attn.b"])
        hidden = tape.tanh(tape.add(encoder.keys, query))
        scores = tape.matmul(hidden, p["attn.v"])
        weights = tape.exp(tape.log_softmax(scores))
        context = tape.matmul(weights, encoder.outputs)
        return weights, context

    def decode_step(
        self,
        hidden: List[Tensor],
        y_prev: int,
        encoder: EncoderState,
        tape: Tape,
        dropout_rng: Optional[np.random.Generator] = None,
        temperature: float = 1.0,
    ) -> DecoderStep:
        if not 0 <= y_prev < self.config.vocab_size:
            raise ValueError(f"token {y_prev} outside [0, {self.config.vocab_size})")
        p = self.parameters
        weights, context = self.attend(hidden[-1], encoder, tape)
        x = tape.concat([tape.embedding(p["decoder.embed"], y_prev), context])
        new_hidden = []
        for layer, h in enumerate(hidden):
            x = self._gru(tape, f"decoder.l{layer}", x, h)
            new_hidden.append(x)
        features = tape.concat([x, context])
        rate = self.config.dropout
        if dropout_rng is not None and rate > 0.0:
            keep = (dropout_rng.random(features.shape) >= rate) / (1.0 - rate)
            features = tape.mul(features, constant(keep))
        logits = tape.add(tape.matmul(features, p["output.W"]), p["output.b"])
        masked = tape.add(logits, self._output_mask)
        if temperature > 0.0 and temperature != 1.0:
            masked = tape.scale(masked, 1.0 / temperature)
        return DecoderStep(
            hidden=new_hidden,
            attention=weights,
            context=context,
            logits=logits,
            log_probs=tape.log_softmax(masked),
        )

    # -- decodes ------------------------------------------------------------

    def decode_teacher_forced(
        self,
        reference: Sequence[int],
        encoder: EncoderState,
        tape: Tape,
        dropout_rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """log P(c_u | c_<u) for each reference token, feeding the ground truth back."""
        if len(reference) == 0:
            raise ValueError("teacher forcing needs a non-empty reference")
        hidden = self.initial_state(encoder, tape)
        previous = BOS
        picked = []
        for token in reference:
            step = self.decode_step(hidden, previous, encoder, tape, dropout_rng)
            picked.append(tape.gather(step.log_probs, int(token)))
            hidden, previous = step.hidden, int(token)
        return tape.stack(picked)

    score_tokens = decode_teacher_forced

    def sample_episode(
        self,
        encoder: EncoderState,
        max_len: int,
        rng: np.random.Generator,
        tape: Tape,
        temperature: float = 1.0,
        dropout_rng: Optional[np.random.Generator] = None,
    ) -> Episode:
        """Roll out the model's own samples until EOS or ``max_len`` tokens."""
        if max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {max_len}")
        hidden = self.initial_state(encoder, tape)
        previous = BOS
        tokens: List[int] = []
        picked: List[Tensor] = []
        for _ in range(max_len):
            step = self.decode_step(hidden, previous, encoder, tape, dropout_rng, temperature)
            probs = np.exp(step.log_probs.data)
            if temperature == 0.0:
                token = int(np.argmax(step.log_probs.data))
            else:
                token = int(rng.choice(len(probs), p=probs / probs.sum()))
            tokens.append(token)
            picked.append(tape.gather(step.log_probs, token))
            hidden, previous = step.hidden, token
            if token == EOS:
                break
        return Episode(tokens=tuple(tokens), log_probs=tape.stack(picked))

    def _greedy(self, encoder: EncoderState, max_len: int) -> Hypothesis:
        tape = Tape(enabled=False)
        hidden = self.initial_state(encoder, tape)
        previous = BOS
        tokens: List[int] = []
        score = 0.0
        for _ in range(max_len):
            step = self.decode_step(hidden, previous, encoder, tape)
            token = int(np.argmax(step.log_probs.data))
            score += float(step.log_probs.data[token])
            tokens.append(token)
            hidden, previous = step.hidden, token
            if token == EOS:
                break
        return Hypothesis(score=score, tokens=tuple(tokens), finished=tokens[-1] == EOS)

    def greedy_decode(self, encoder: EncoderState, max_len: int) -> Tuple[int, ...]:
        return self._greedy(encoder, max_len).tokens

    def sequence_log_prob(self, encoder: EncoderState, tokens: Sequence[int]) -> float:
        """Total log-probability of ``tokens``, accumulated left to right."""
        log_probs = self.decode_teacher_forced(tokens, encoder, Tape(enabled=False))
        total = 0.0
        for value in log_probs.data:
            total += float(value)
        return total

    def beam_search(
        self,
        encoder: EncoderState,
        width: int,
        max_len: int,
        length_penalty: float = 1.0,
    ) -> Tuple[int, ...]:
        """Length-normalized beam search; width 1 reproduces greedy decoding.

        The result never has a lower total log-probability than the greedy
        decode, whatever ``length_penalty`` does to the ranking.
        """
        best = self.beam_hypotheses(encoder, width, max_len, length_penalty)[0]
        greedy = self._greedy(encoder, max_len)
        if greedy.score > best.score:
            return greedy.tokens
        return best.tokens

    def beam_hypotheses(
        self,
        encoder: EncoderState,
        width: int,
        max_len: int,
        length_penalty: float = 1.0,
    ) -> List[Hypothesis]:
        """All final candidates, best first by ``score / len ** length_penalty``.

        Candidates are the beams that emitted EOS, the beams still alive at
        ``max_len`` and the greedy hypothesis.
        """
        if width < 1:
            raise ValueError(f"beam width must be >= 1, got {width}")
        tape = Tape(enabled=False)
        live: List[Tuple[float, Tuple[int, ...], List[Tensor]]] = [
            (0.0, (), self.initial_state(encoder, tape))
        ]
        done: List[Hypothesis] = []
        for _ in range(max_len):
            expansions = []
            for score, tokens, hidden in live:
                previous = tokens[-1] if tokens else BOS
                step = self.decode_step(hidden, previous, encoder, tape)
                for token in self.allowed_tokens:
                    expansions.append(
                        (score + float(step.log_probs.data[token]), tokens + (token,), step.hidden)
                    )
            expansions.sort(key=lambda item: (-item[0], item[1]))
            live = []
            for score, tokens, hidden in expansions[:width]:
                if tokens[-1] == EOS:
                    done.append(Hypothesis(score, tokens, finished=True))
                else:
                    live.append((score, tokens, hidden))
            if not live:
                break
        candidates = done + [Hypothesis(score, tokens) for score, tokens, _ in live]
        candidates.append(self._greedy(encoder, max_len))

        def rank(hyp: Hypothesis):
            normalized = hyp.score / (len(hyp.tokens) ** length_penalty)
            return (-normalized, -hyp.score, hyp.tokens)

        unique: Dict[Tuple[int, ...], Hypothesis] = {}
        for hyp in candidates:
            unique.setdefault(hyp.tokens, hyp)
        return sorted(unique.values(), key=rank)
