"""Read/write session over an unbounded chunk stream.

The session alternates two turns. A USER turn ingests ``m`` chunks: they are
encoded incrementally, adapted to 12 embeddings per chunk and appended to the
decoder cache framed by USER ... EOT. An ASSISTANT turn decodes until the
model emits EOT, which hands control back to reading.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator

import numpy as np

from .decoder import ASSISTANT, EOT, PAD, USER, Decoder, Overlay, encode_instruction, token_text
from .encoder import CHUNK_MS, SpeechChunk, StreamEncoder
from .errors import ConfigError, InvariantViolation, ProtocolError
from .generation import GenerationConstraints, NgramIndex, apply_repetition_constraints

EMBEDDINGS_PER_CHUNK = 12


class Mode(str, Enum):
    READING = "READING"
    WRITING = "WRITING"


@dataclass
class CostModel:
    """Deterministic compute clock: cost proportional to FLOPs."""

    ms_per_mflop: float = 0.5
    token_ms: float = 0.0  # flat extra cost per decoding step

    def cost(self, flops: float, decode_step: bool = False) -> float:
        return flops * 1e-6 * self.ms_per_mflop + (self.token_ms if decode_step else 0.0)


@dataclass
class SessionState:
    m: int
    mode: Mode = Mode.READING
    n_tokens: int = 0
    chunks_consumed: int = 0
    stream_ms: float = 0.0
    sim_busy_ms: float = 0.0
    wall_busy_ms: float = 0.0
    sim_compute_ms: float = 0.0
    wall_compute_ms: float = 0.0


@dataclass
class SessionTrace:
    """Per-token records of a session. With ``retain=False`` on the session the
    per-token lists stay empty and only the JSONL sink carries them."""

    tokens: list[int] = field(default_factory=list)
    delays: list[float] = field(default_factory=list)
    ca_sim_ms: list[float] = field(default_factory=list)
    ca_wall_ms: list[float] = field(default_factory=list)
    sim_cost: list[float] = field(default_factory=list)
    ingests: list[tuple[int, int, float]] = field(default_factory=list)
    truncated_turns: int = 0
    turns: int = 0
    duration_ms: float = 0.0
    sim_compute_ms: float = 0.0
    wall_compute_ms: float = 0.0
    max_ring_len: int = 0
    max_encoder_chunks: int = 0
    n_tokens: int = 0

    def ca_ms(self, mode: str = "simulated") -> list[float]:
        if mode == "simulated":
            return self.ca_sim_ms
        if mode == "wallclock":
            return self.ca_wall_ms
        raise ConfigError(f"unknown ca_mode {mode!r}")

    def text(self) -> str:
        return " ".join(token_text(t) for t in self.tokens)


class Session:
    """One streaming translation session. Not thread-safe; one owner at a time."""

    def __init__(self, encoder: StreamEncoder, decoder: Decoder, m: int = 1,
                 constraints: GenerationConstraints | None = None,
                 cost: CostModel | None = None, instruction_ids=None,
                 sink: IO[str] | None = None, ca_mode: str = "simulated",
                 record: bool = False, retain: bool = True):
        if m < 1:
            raise ConfigError("latency multiplier m must be >= 1")
        if encoder.cfg.decoder_dim != decoder.cfg.model_dim:
            raise ConfigError("adapter output dim does not match decoder model_dim")
        self.encoder = encoder
        self.decoder = decoder
        self.constraints = constraints or GenerationConstraints(beam_width=1)
        self.cost = cost or CostModel()
        self.ca_mode = ca_mode
        self.sink = sink
        self.state = SessionState(m=m)
        self.trace = SessionTrace()
        self.enc_cache = encoder.new_cache()
        self.cache = decoder.new_cache()
        self.ngrams = NgramIndex(self.constraints.no_repeat_ngram, self.constraints.ngram_horizon)
        self.retain = retain
        self._turn_delays: list[float] = []
        self._turn_ca: list[float] = []
        self._last_ingest: tuple[int, int, float] | None = None
        # test hooks: every input row fed and the logits of every decoding step
        self.record = record
        self.inputs: list[np.ndarray] = []
        self.step_logits: list[tuple[int, np.ndarray]] = []
        self._fed = 0
        self._turn_start = 0
        ids = encode_instruction(vocab=decoder.cfg.vocab) if instruction_ids is None else list(instruction_ids)
        self.instruction_ids = ids
        x = decoder.embed(ids)
        self._log_inputs(x)
        decoder.start(self.cache, ids)

    # bookkeeping -----------------------------------------------------------

    def _log_inputs(self, x: np.ndarray) -> None:
        if self.record:
            self.inputs.append(np.array(x, copy=True))
        self._fed += x.shape[0]

    def _forward(self, x: np.ndarray, overlay: Overlay | None = None, commit: bool = True,
                 decode_step: bool = False):
        n_key = self.cache.instruction_len + min(
            self.cache.ring_len + (len(overlay) if overlay else 0) + x.shape[0], self.decoder.cfg.window + x.shape[0]
        )
        t0 = time.perf_counter()
        hidden, k, v = self.decoder.forward(self.cache, x, overlay=overlay, commit=commit)
        logits = self.decoder.logits(hidden[-1:])[0]
        wall = (time.perf_counter() - t0) * 1000.0
        sim = self.cost.cost(self.decoder.flops(x.shape[0], n_key), decode_step=decode_step)
        self._charge(sim, wall)
        self.trace.max_ring_len = max(self.trace.max_ring_len, self.cache.ring_len)
        return logits, k, v, sim

    def _charge(self, sim: float, wall: float) -> None:
        st = self.state
        st.sim_busy_ms += sim
        st.wall_busy_ms += wall
        st.sim_compute_ms += sim
        st.wall_compute_ms += wall

    def _emit(self, record: dict) -> None:
        if self.sink is not None:
            self.sink.write(json.dumps(record) + "\n")

    # turns -------------------------------------------------------------------

    def read_chunks(self, chunks: list[SpeechChunk]) -> np.ndarray:
        """Encode and adapt newly arrived chunks into decoder embeddings."""
        st = self.state
        arrival = (chunks[-1].index + 1) * CHUNK_MS
        st.sim_busy_ms = max(st.sim_busy_ms, arrival)
        st.wall_busy_ms = max(st.wall_busy_ms, arrival)
        n_key = min(self.enc_cache.n_chunks, self.encoder.cfg.window - 1) * 48 + 48 * len(chunks)
        t0 = time.perf_counter()
        enc = self.encoder.encode_incremental(self.enc_cache, chunks)
        emb = self.encoder.adapt(enc)
        wall = (time.perf_counter() - t0) * 1000.0
        self._charge(self.cost.cost(self.encoder.flops(48 * len(chunks), n_key)), wall)
        self.trace.max_encoder_chunks = max(self.trace.max_encoder_chunks, self.enc_cache.n_chunks)
        return emb

    def ingest_speech(self, embeddings: np.ndarray, n_chunks: int | None = None) -> None:
        """USER turn: frame ``12m`` speech embeddings with USER ... EOT."""
        st = self.state
        if st.mode is not Mode.READING:
            raise ProtocolError("ingest_speech called while WRITING")
        if n_chunks is None:
            n_chunks = embeddings.shape[0] // EMBEDDINGS_PER_CHUNK
        if embeddings.shape[0] != EMBEDDINGS_PER_CHUNK * n_chunks:
            raise ProtocolError(f"{embeddings.shape[0]} embeddings for {n_chunks} chunks")
        x = np.concatenate([self.decoder.embed([USER]), embeddings, self.decoder.embed([EOT])])
        self._log_inputs(x)
        self._forward(x)
        first = st.chunks_consumed
        st.chunks_consumed += n_chunks
        st.stream_ms = float(CHUNK_MS * st.chunks_consumed)
        st.mode = Mode.WRITING
        self._last_ingest = (first, st.chunks_consumed, st.stream_ms)
        if self.retain:
            self.trace.ingests.append(self._last_ingest)
        self._emit({"type": "ingest", "chunk_range": [first, st.chunks_consumed], "stream_ms": st.stream_ms})

    def _candidate_logits(self, logits: np.ndarray, suffix: list[int], n_in_turn: int = 0) -> np.ndarray:
        c = self.constraints
        banned = self.ngrams.banned_after(suffix)
        history = self.ngrams.seen.union(suffix)
        out = apply_repetition_constraints(logits, list(history), c, banned=banned)
        out[[PAD, USER, ASSISTANT]] = -np.inf
        if n_in_turn < self._floor:
            out[EOT] = -np.inf
        return out

    def _record_logits(self, logits: np.ndarray) -> None:
        if self.record:
            self.step_logits.append((self._fed, np.array(logits, copy=True)))

    def generate_turn(self) -> list[int]:
        """ASSISTANT turn: decode until EOT (or the per-turn cap)."""
        st = self.state
        if st.mode is not Mode.WRITING:
            raise ProtocolError("generate_turn called while READING")
        self._turn_start = len(self.trace.tokens)
        self._turn_delays.clear()
        self._turn_ca.clear()
        first, last, _ = self._last_ingest
        self._cap = self.constraints.turn_cap(last - first)
        self._floor = self.constraints.turn_floor(last - first)
        x = self.decoder.embed([ASSISTANT])
        self._log_inputs(x)
        logits, _, _, sim = self._forward(x, decode_step=True)
        if self.constraints.beam_width == 1:
            run, truncated = self._greedy(logits, sim)
        else:
            run, truncated = self._beam(logits)
        eot = self.decoder.embed([EOT])
        self._log_inputs(eot)
        self._forward(eot)
        self.trace.turns += 1
        if truncated:
            self.trace.truncated_turns += 1
        self._emit({"type": "turn", "tokens": len(run), "truncated": truncated, "stream_ms": st.stream_ms})
        st.mode = Mode.READING
        return run

    def _emit_token(self, tok: int, sim_cost: float) -> None:
        st = self.state
        st.n_tokens += 1
        self.ngrams.append(tok)
        self._turn_delays.append(st.stream_ms)
        self._turn_ca.append(st.sim_busy_ms)
        if self.retain:
            tr = self.trace
            tr.tokens.append(tok)
            tr.delays.append(st.stream_ms)
            tr.ca_sim_ms.append(st.sim_busy_ms)
            tr.ca_wall_ms.append(st.wall_busy_ms)
            tr.sim_cost.append(sim_cost)
        ca = st.sim_busy_ms if self.ca_mode == "simulated" else st.wall_busy_ms
        self._emit({"type": "token", "token_id": tok, "text": token_text(tok), "g_ms": st.stream_ms,
                    "wall_ms": round(ca, 6), "sim_cost": round(sim_cost, 6)})

    def _greedy(self, logits: np.ndarray, sim: float) -> tuple[list[int], bool]:
        run: list[int] = []
        for _ in range(self._cap):
            self._record_logits(logits)
            tok = int(np.argmax(self._candidate_logits(logits, [], len(run))))
            if tok == EOT:
                return run, False
            run.append(tok)
            self._emit_token(tok, sim)
            x = self.decoder.embed([tok])
            self._log_inputs(x)
            logits, _, _, sim = self._forward(x, decode_step=True)
        return run, True

    def _beam(self, logits: np.ndarray) -> tuple[list[int], bool]:
        c = self.constraints
        width = c.beam_width
        # (score, tokens, overlay, logits, step_cost)
        live = [(0.0, [], Overlay.empty(self.decoder.cfg), logits)]
        finished: list[tuple[float, list[int], Overlay]] = []
        for step in range(self._cap):
            cands = []
            for score, toks, ov, lg in live:
                adj = self._candidate_logits(lg, toks, len(toks))
                logp = adj - np.logaddexp.reduce(adj[np.isfinite(adj)])
                top = np.argsort(-logp, kind="stable")[: 2 * width]
                for t in top:
                    if np.isfinite(logp[t]):
                        cands.append((score + float(logp[t]), toks, ov, int(t)))
            cands.sort(key=lambda c_: -c_[0])
            new_live = []
            for total, toks, ov, t in cands:
                if t == EOT:
                    finished.append((total / (len(toks) + 1), toks, ov))
                else:
                    x = self.decoder.embed([t])
                    lg, k, v, _ = self._forward(x, overlay=ov, commit=False, decode_step=True)
                    new_live.append((total, toks + [t], ov.extend(k, v), lg))
                if len(new_live) == width:
                    break
            live = new_live
            if len(finished) >= width or not live:
                break
        truncated = False
        if finished:
            _, best, ov = max(finished, key=lambda f: f[0])
        else:
            _, best, ov, _ = max(live, key=lambda h: h[0] / max(len(h[1]), 1))
            truncated = True
        # the winner's overlay becomes part of the shared window
        if best:
            self._log_inputs(self.decoder.embed(best))
            self.cache.append(ov.k, ov.v)
            self.trace.max_ring_len = max(self.trace.max_ring_len, self.cache.ring_len)
        for tok in best:
            self._emit_token(tok, 0.0)
        return best, truncated

    # driving -----------------------------------------------------------------

    def step(self, chunks: list[SpeechChunk]) -> list[int]:
        emb = self.read_chunks(chunks)
        self.ingest_speech(emb, len(chunks))
        return self.generate_turn()

    def finish(self) -> SessionTrace:
        st, tr = self.state, self.trace
        tr.duration_ms = float(CHUNK_MS * st.chunks_consumed)
        tr.sim_compute_ms = st.sim_compute_ms
        tr.wall_compute_ms = st.wall_compute_ms
        tr.n_tokens = st.n_tokens
        return tr

    def check_invariants(self) -> None:
        st = self.state
        if self.cache.ring_len > self.decoder.cfg.window:
            raise InvariantViolation(f"decoder window holds {self.cache.ring_len} > {self.decoder.cfg.window}")
        if self.enc_cache.n_chunks > self.encoder.cfg.window:
            raise InvariantViolation("encoder cache exceeds its window")
        expected = CHUNK_MS * st.chunks_consumed
        if any(g != expected for g in self._turn_delays):
            raise InvariantViolation("delay ledger out of step with consumed chunks")
        if self._turn_ca and min(self._turn_ca) < expected:
            raise InvariantViolation("computation-aware emission precedes its delay")


def group_chunks(chunks: Iterable[SpeechChunk], m: int) -> Iterator[list[SpeechChunk]]:
    """Groups of ``m`` consecutive chunks; a trailing partial group is flushed."""
    group: list[SpeechChunk] = []
    for ch in chunks:
        group.append(ch)
        if len(group) == m:
            yield group
            group = []
    if group:
        yield group


def run_session(chunks: Iterable[SpeechChunk], m: int, encoder: StreamEncoder, decoder: Decoder,
                constraints: GenerationConstraints | None = None, cost: CostModel | None = None,
                sink: IO[str] | None = None, ca_mode: str = "simulated", check: bool = True,
                on_step=None, retain: bool = True) -> SessionTrace:
    session = Session(encoder, decoder, m=m, constraints=constraints, cost=cost, sink=sink, ca_mode=ca_mode,
                      retain=retain)
    for group in group_chunks(chunks, m):
        session.step(group)
        if check:
            session.check_invariants()
        if on_step is not None:
            on_step(session)
    return session.finish()
