"""Encoder-decoder debugger over lexed token sequences.

The encoder prepends a classification slot to the buggy token sequence and
produces per-token states plus a pooled state; two MLP heads read bug
probabilities (per token) and a bug-type distribution (from the pooled
slot) off those states. The decoder regenerates the correct snippet while
cross-attending to all encoder states, pooled slot included. Optionally the
known bug span can be bracketed with sentinel tokens so the decoder solves
correction in isolation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import DataError
from .lexer import TokenStream, lex
from .mutate import BugRecord, BugType
from .tensorstore import load_tensors, save_tensors

BUG_TYPE_ORDER: tuple[BugType, ...] = tuple(BugType)
BUG_TYPE_INDEX = {t: i for i, t in enumerate(BUG_TYPE_ORDER)}


class Vocab:
    """Token-text vocabulary with reserved control slots."""

    PAD, UNK, CLS, START, END, BUG_OPEN, BUG_CLOSE = range(7)
    SPECIALS = ("<pad>", "<unk>", "<cls>", "<start/>", "<end/>", "<bug>", "</bug>")

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(self.SPECIALS)]) != self.SPECIALS:
            raise ValueError("vocabulary must start with the reserved specials")
        self.id_to_token: list[str] = list(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, token_seqs: Iterable[Sequence[str]], min_freq: int = 1) -> "Vocab":
        counts: Counter = Counter()
        for seq in token_seqs:
            counts.update(seq)
        kept = sorted(
            (t for t, c in counts.items() if c >= min_freq and t not in cls.SPECIALS),
            key=lambda t: (-counts[t], t),
        )
        return cls(list(cls.SPECIALS) + kept)

    def encode(self, texts: Sequence[str]) -> list[int]:
        return [self.token_to_id.get(t, self.UNK) for t in texts]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def __len__(self) -> int:
        return len(self.id_to_token)


@dataclass
class ModelConfig:
    vocab_size: int
    n_layers_enc: int = 4
    n_layers_dec: int = 4
    d_model: int = 256
    n_heads: int = 4
    d_ff: int = 1024
    max_src_len: int = 512
    max_tgt_len: int = 64
    head_mlp_layers: int = 3
    n_bug_types: int = len(BUG_TYPE_ORDER)
    dropout: float = 0.0
    dtype: str = "f32"

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        for name in ("vocab_size", "n_layers_enc", "n_layers_dec", "d_model",
                     "n_heads", "d_ff", "max_src_len", "max_tgt_len", "head_mlp_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.vocab_size < len(Vocab.SPECIALS):
            raise ValueError("vocab_size smaller than the reserved specials")
        if self.dropout != 0.0:
            raise ValueError("only dropout=0.0 is supported (deterministic training)")
        if self.dtype not in ("f32", "f64"):
            raise ValueError("dtype must be 'f32' or 'f64'")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64


@dataclass
class EncoderOutput:
    memory: Tensor            # (B, S, D): pooled slot followed by token states
    e_cls: Tensor             # (B, D)
    e_tokens: Tensor          # (B, S-1, D)
    pad_mask: np.ndarray      # (B, S) 1.0 at real positions
    token_counts: list[int]   # real (non-pad) token positions per row, excl. pooled slot
    truncated: list[bool]


@dataclass
class RecordPrediction:
    token_probs: np.ndarray   # aligned with the lexed buggy tokens (may be truncated)
    type_logits: np.ndarray   # (n_bug_types,)
    generated_text: str
    generated_ids: list[int]
    truncated: bool
    stream: TokenStream = field(repr=False, default=None)


def expected_param_count(cfg: ModelConfig) -> int:
    d, f, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    embed = v * d + cfg.max_src_len * d + v * d + cfg.max_tgt_len * d
    enc = cfg.n_layers_enc * (4 * d * d + 2 * d * f + f + d)
    dec = cfg.n_layers_dec * (8 * d * d + 2 * d * f + f + d)
    hidden = (cfg.head_mlp_layers - 1) * (d * d + d)
    heads = 2 * hidden + (d * 1 + 1) + (d * cfg.n_bug_types + cfg.n_bug_types)
    out = d * v + v
    return embed + enc + dec + heads + out


class DebuggerModel:
    def __init__(self, config: ModelConfig, vocab: Vocab, seed: int = 0):
        if len(vocab) != config.vocab_size:
            raise ValueError("config.vocab_size must match the vocabulary")
        self.config = config
        self.vocab = vocab
        self.params: dict[str, Tensor] = {}
        self._init_params(seed)

    # --- parameters ---------------------------------------------------------

    def _add_param(self, rng, name: str, shape: tuple[int, ...], std: float = 0.02) -> None:
        if std == 0.0:
            data = np.zeros(shape, dtype=self.config.np_dtype)
        else:
            data = (rng.normal(size=shape) * std).astype(self.config.np_dtype)
        self.params[name] = Tensor(data, requires_grad=True)

    def _init_params(self, seed: int) -> None:
        cfg = self.config
        rng = np.random.default_rng(seed)
        d, f, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
        self._add_param(rng, "src_embed", (v, d))
        self._add_param(rng, "pos_enc", (cfg.max_src_len, d))
        self._add_param(rng, "tgt_embed", (v, d))
        self._add_param(rng, "pos_dec", (cfg.max_tgt_len, d))
        for i in range(cfg.n_layers_enc):
            for w in ("wq", "wk", "wv", "wo"):
                self._add_param(rng, f"enc{i}.{w}", (d, d))
            self._add_param(rng, f"enc{i}.w1", (d, f))
            self._add_param(rng, f"enc{i}.b1", (f,), std=0.0)
            self._add_param(rng, f"enc{i}.w2", (f, d))
            self._add_param(rng, f"enc{i}.b2", (d,), std=0.0)
        for i in range(cfg.n_layers_dec):
            for w in ("self_wq", "self_wk", "self_wv", "self_wo",
                      "cross_wq", "cross_wk", "cross_wv", "cross_wo"):
                self._add_param(rng, f"dec{i}.{w}", (d, d))
            self._add_param(rng, f"dec{i}.w1", (d, f))
            self._add_param(rng, f"dec{i}.b1", (f,), std=0.0)
            self._add_param(rng, f"dec{i}.w2", (f, d))
            self._add_param(rng, f"dec{i}.b2", (d,), std=0.0)
        for head, width in (("head_bug", 1), ("head_type", cfg.n_bug_types)):
            for j in range(cfg.head_mlp_layers - 1):
                self._add_param(rng, f"{head}.w{j}", (d, d))
                self._add_param(rng, f"{head}.b{j}", (d,), std=0.0)
            last = cfg.head_mlp_layers - 1
            self._add_param(rng, f"{head}.w{last}", (d, width))
            self._add_param(rng, f"{head}.b{last}", (width,), std=0.0)
        self._add_param(rng, "out_w", (d, v))
        self._add_param(rng, "out_b", (v,), std=0.0)

    @property
    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # --- transformer pieces ---------------------------------------------------

    def _attention(self, x_q: Tensor, x_kv: Tensor, prefix: str, keep: np.ndarray) -> Tensor:
        """Multi-head attention; `keep` is (B, 1, T_q or 1, T_kv) with 1 = attend."""
        cfg = self.config
        h, dh = cfg.n_heads, cfg.d_model // cfg.n_heads
        b, tq = x_q.shape[0], x_q.shape[1]
        tk = x_kv.shape[1]

        def split(t: Tensor, length: int) -> Tensor:
            return ad.transpose(ad.reshape(t, (b, length, h, dh)), (0, 2, 1, 3))

        q = split(ad.matmul(x_q, self.params[f"{prefix}wq"]), tq)
        k = split(ad.matmul(x_kv, self.params[f"{prefix}wk"]), tk)
        v = split(ad.matmul(x_kv, self.params[f"{prefix}wv"]), tk)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        attn = ad.softmax(ad.mask_logits(scores, keep), axis=-1)
        ctx = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (b, tq, cfg.d_model))
        return ad.matmul(ctx, self.params[f"{prefix}wo"])

    def _feed_forward(self, x: Tensor, prefix: str) -> Tensor:
        hidden = ad.gelu(ad.add(ad.matmul(x, self.params[f"{prefix}w1"]), self.params[f"{prefix}b1"]))
        return ad.add(ad.matmul(hidden, self.params[f"{prefix}w2"]), self.params[f"{prefix}b2"])

    # --- encoder ----------------------------------------------------------------

    def encode_ids(self, ids_batch: Sequence[Sequence[int]]) -> EncoderOutput:
        """Run the encoder over raw id sequences (CLS is prepended here)."""
        cfg = self.config
        budget = cfg.max_src_len - 1  # one slot reserved for the pooled state
        rows, truncated = [], []
        for ids in ids_batch:
            ids = list(ids)
            truncated.append(len(ids) > budget)
            rows.append([Vocab.CLS] + ids[:budget])
        token_counts = [len(r) - 1 for r in rows]
        s = max(len(r) for r in rows)
        b = len(rows)
        ids_arr = np.full((b, s), Vocab.PAD, dtype=np.int64)
        keep = np.zeros((b, s), dtype=cfg.np_dtype)
        for i, r in enumerate(rows):
            ids_arr[i, : len(r)] = r
            keep[i, : len(r)] = 1.0

        x = ad.embedding_lookup(self.params["src_embed"], ids_arr)
        x = ad.add(x, ad.slice_(self.params["pos_enc"], slice(0, s)))
        attn_keep = keep.reshape(b, 1, 1, s)
        for i in range(cfg.n_layers_enc):
            pre = ad.layer_norm(x)
            x = ad.add(x, self._attention(pre, pre, f"enc{i}.", attn_keep))
            x = ad.add(x, self._feed_forward(ad.layer_norm(x), f"enc{i}."))
        memory = ad.layer_norm(x)
        return EncoderOutput(
            memory=memory,
            e_cls=ad.slice_(memory, (slice(None), 0)),
            e_tokens=ad.slice_(memory, (slice(None), slice(1, None))),
            pad_mask=keep,
            token_counts=token_counts,
            truncated=truncated,
        )

    # --- heads --------------------------------------------------------------------

    def _head(self, x: Tensor, name: str) -> Tensor:
        for j in range(self.config.head_mlp_layers):
            x = ad.add(ad.matmul(x, self.params[f"{name}.w{j}"]), self.params[f"{name}.b{j}"])
            if j + 1 < self.config.head_mlp_layers:
                x = ad.gelu(x)
        return x

    def bug_logits(self, enc: EncoderOutput) -> Tensor:
        """(B, S-1) per-token bug logits over the token positions."""
        out = self._head(enc.e_tokens, "head_bug")
        return ad.reshape(out, out.shape[:-1])

    def type_logits(self, enc: EncoderOutput) -> Tensor:
        """(B, n_bug_types) from the pooled slot."""
        return self._head(enc.e_cls, "head_type")

    # --- decoder --------------------------------------------------------------------

    def decoder_logits(self, enc: EncoderOutput, tgt_ids: np.ndarray, tgt_keep: np.ndarray) -> Tensor:
        """(B, T, V) next-token logits under teacher forcing."""
        cfg = self.config
        b, t = tgt_ids.shape
        if t > cfg.max_tgt_len:
            raise ValueError(f"target length {t} exceeds max_tgt_len {cfg.max_tgt_len}")
        x = ad.embedding_lookup(self.params["tgt_embed"], tgt_ids)
        x = ad.add(x, ad.slice_(self.params["pos_dec"], slice(0, t)))
        causal = np.tril(np.ones((t, t), dtype=cfg.np_dtype))
        self_keep = causal.reshape(1, 1, t, t) * tgt_keep.reshape(b, 1, 1, t)
        s = enc.memory.shape[1]
        cross_keep = enc.pad_mask.reshape(b, 1, 1, s)
        for i in range(cfg.n_layers_dec):
            pre = ad.layer_norm(x)
            x = ad.add(x, self._attention(pre, pre, f"dec{i}.self_", self_keep))
            x = ad.add(x, self._attention(ad.layer_norm(x), enc.memory, f"dec{i}.cross_", cross_keep))
            x = ad.add(x, self._feed_forward(ad.layer_norm(x), f"dec{i}."))
        x = ad.layer_norm(x)
        return ad.add(ad.matmul(x, self.params["out_w"]), self.params["out_b"])

    def generate(self, enc: EncoderOutput, max_len: int | None = None) -> list[int]:
        """Greedy decode for a single-row encoder output; END is stripped."""
        if enc.memory.shape[0] != 1:
            raise ValueError("generate expects a batch of one")
        cfg = self.config
        limit = min(max_len or cfg.max_tgt_len, cfg.max_tgt_len) - 1
        out: list[int] = []
        for _ in range(max(0, limit)):
            prefix = np.array([[Vocab.START] + out], dtype=np.int64)
            keep = np.ones_like(prefix, dtype=cfg.np_dtype)
            logits = self.decoder_logits(enc, prefix, keep)
            nxt = int(np.argmax(logits.data[0, -1]))
            if nxt == Vocab.END:
                break
            out.append(nxt)
        return out

    # --- record-level API ----------------------------------------------------------

    def record_input_ids(self, record: BugRecord, given_location: bool) -> tuple[list[int], list[bool], TokenStream]:
        """(ids, real-token mask, stream) for a record's buggy code.

        With `given_location`, sentinel brackets are inserted around the
        labeled span; the mask marks which positions map back to lexed
        tokens (sentinels are False).
        """
        stream = lex(record.buggy_code)
        ids = self.vocab.encode(stream.texts())
        if len(record.token_labels) != len(ids):
            raise DataError(f"record {record.id}: labels do not match the lexed token count")
        is_token = [True] * len(ids)
        if given_location:
            flagged = [i for i, y in enumerate(record.token_labels) if y == 1]
            lo = flagged[0] if flagged else 0
            hi = flagged[-1] + 1 if flagged else 0
            ids = ids[:lo] + [Vocab.BUG_OPEN] + ids[lo:hi] + [Vocab.BUG_CLOSE] + ids[hi:]
            is_token = is_token[:lo] + [False] + is_token[lo:hi] + [False] + is_token[hi:]
        return ids, is_token, stream

    def target_ids(self, record: BugRecord) -> list[int]:
        """Decoder supervision: the correct snippet's token ids plus END."""
        try:
            texts = lex(record.snippet_correct).texts()
        except DataError:
            texts = record.snippet_correct.split()
        if not texts:
            texts = [record.snippet_correct.strip() or "<empty>"]
        ids = self.vocab.encode(list(texts))
        return ids[: self.config.max_tgt_len - 1] + [Vocab.END]

    def predict_record(self, record: BugRecord, given_location: bool = False) -> RecordPrediction:
        ids, is_token, stream = self.record_input_ids(record, given_location)
        enc = self.encode_ids([ids])
        with np.errstate(over="ignore"):
            probs_row = 1.0 / (1.0 + np.exp(-self.bug_logits(enc).data[0].astype(np.float64)))
        n_real = enc.token_counts[0]
        kept = [p for p, real in zip(probs_row[:n_real], is_token) if real]
        token_probs = np.array(kept, dtype=np.float64)
        type_row = self.type_logits(enc).data[0].astype(np.float64)
        n_flagged = max(1, sum(record.token_labels))
        budget = min(3 * n_flagged + 2, self.config.max_tgt_len)
        gen_ids = self.generate(enc, max_len=budget)
        return RecordPrediction(
            token_probs=token_probs,
            type_logits=type_row,
            generated_text=self._decode_words(gen_ids),
            generated_ids=gen_ids,
            truncated=enc.truncated[0],
            stream=stream,
        )

    def predict_source(self, code: str) -> RecordPrediction:
        """Run the full pipeline on unlabeled source text.

        Without labels the generation budget is derived from the model's
        own flagged-token count instead of the ground truth.
        """
        stream = lex(code)
        ids = self.vocab.encode(stream.texts())
        enc = self.encode_ids([ids])
        with np.errstate(over="ignore"):
            probs_row = 1.0 / (1.0 + np.exp(-self.bug_logits(enc).data[0].astype(np.float64)))
        n_real = enc.token_counts[0]
        token_probs = probs_row[:n_real].astype(np.float64)
        type_row = self.type_logits(enc).data[0].astype(np.float64)
        n_flagged = max(1, int(np.sum(token_probs >= 0.5)))
        budget = min(3 * n_flagged + 2, self.config.max_tgt_len)
        gen_ids = self.generate(enc, max_len=budget)
        return RecordPrediction(
            token_probs=token_probs,
            type_logits=type_row,
            generated_text=self._decode_words(gen_ids),
            generated_ids=gen_ids,
            truncated=enc.truncated[0],
            stream=stream,
        )

    def _decode_words(self, gen_ids: list[int]) -> str:
        words = [
            "?" if i == Vocab.UNK else self.vocab.id_to_token[i]
            for i in gen_ids
            if i not in (Vocab.PAD, Vocab.CLS, Vocab.START, Vocab.END, Vocab.BUG_OPEN, Vocab.BUG_CLOSE)
        ]
        return " ".join(words)

    # --- persistence ------------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {"config": asdict(self.config), "vocab": self.vocab.id_to_token}
        save_tensors(path, {k: p.data for k, p in self.params.items()}, meta=meta)

    @classmethod
    def load(cls, path: str | Path) -> "DebuggerModel":
        tensors, meta = load_tensors(path)
        if "config" not in meta or "vocab" not in meta:
            raise DataError(f"missing model metadata in {path}")
        config = ModelConfig(**meta["config"])
        model = cls(config, Vocab(meta["vocab"]), seed=0)
        for name, p in model.params.items():
            if name not in tensors:
                raise DataError(f"missing tensor {name!r} in {path}")
            if tensors[name].shape != p.data.shape:
                raise DataError(f"shape mismatch for {name!r} in {path}")
            p.data = tensors[name].astype(config.np_dtype, copy=False)
        return model


def line_scores(token_probs: np.ndarray, stream: TokenStream) -> dict[int, float]:
    """Per-line suspicion: max token probability over each covered line."""
    scores: dict[int, float] = {}
    for prob, token in zip(token_probs, stream.tokens):
        line = token.line
        if line not in scores or prob > scores[line]:
            scores[line] = float(prob)
    return scores
