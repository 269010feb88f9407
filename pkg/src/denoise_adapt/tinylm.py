"""Desk-scale character-level conditional sequence model.

A small decoder-only attention network trained with plain gradient
descent and linear warmup. Forward and backward passes are written
out explicitly in numpy so analytic gradients can be audited against
finite differences, and training is bitwise deterministic for a given
seed and batch stream.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .batching import BatchItem
from .errors import ConfigError, DataError, NonFiniteLossError, VocabOverflowError
from .rng import derive_seed

PAD, BOS, EOS, UNK = 0, 1, 2, 3
_N_SPECIALS = 4
_LN_EPS = 1e-5
_NEG_INF = -1e9

_CKPT_MAGIC = b"TLMC"


class CharVocab:
    """Character inventory with reserved PAD/BOS/EOS/UNK symbols."""

    def __init__(self, chars: str, unk_enabled: bool = True):
        ordered = sorted(set(chars))
        self.chars = "".join(ordered)
        self.unk_enabled = unk_enabled
        self._to_id = {c: i + _N_SPECIALS for i, c in enumerate(ordered)}
        self._from_id = {i + _N_SPECIALS: c for i, c in enumerate(ordered)}

    def __len__(self) -> int:
        return _N_SPECIALS + len(self.chars)

    def encode(self, text: str) -> list[int]:
        ids = []
        for ch in text:
            idx = self._to_id.get(ch)
            if idx is None:
                if not self.unk_enabled:
                    raise VocabOverflowError(f"character {ch!r} missing from vocabulary")
                idx = UNK
            ids.append(idx)
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self._from_id.get(i, "") for i in ids)

    @classmethod
    def from_texts(cls, texts: Iterable[str], unk_enabled: bool = True) -> "CharVocab":
        seen: set[str] = set()
        for text in texts:
            seen.update(text)
        return cls("".join(sorted(seen)), unk_enabled=unk_enabled)


@dataclass(frozen=True)
class TrainConfig:
    vocab: str
    model_dims: tuple[int, int, int] = (48, 96, 2)  # (embed, hidden, layers)
    n_heads: int = 2
    learning_rate: float = 0.5
    warmup_steps: int = 50
    batch_size: int = 12
    max_steps: int = 500
    seed: int = 0
    max_seq_len: int = 160
    grad_clip: float = 1.0
    unk_enabled: bool = True

    def __post_init__(self) -> None:
        d, h, layers = self.model_dims
        if min(d, h, layers) < 1:
            raise ConfigError(f"model_dims must all be >= 1, got {self.model_dims}")
        if d % self.n_heads != 0:
            raise ConfigError(f"embed dim {d} not divisible by {self.n_heads} heads")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_seq_len < 4:
            raise ConfigError("max_seq_len must be >= 4")


def build_registry(cfg: TrainConfig, vocab_size: int) -> tuple[tuple[str, tuple[int, ...]], ...]:
    d, h, layers = cfg.model_dims
    entries: list[tuple[str, tuple[int, ...]]] = [
        ("tok_emb", (vocab_size, d)),
        ("pos_emb", (cfg.max_seq_len, d)),
    ]
    for i in range(layers):
        p = f"layers.{i}."
        entries += [
            (p + "ln1_g", (d,)),
            (p + "ln1_b", (d,)),
            (p + "wq", (d, d)),
            (p + "wk", (d, d)),
            (p + "wv", (d, d)),
            (p + "wo", (d, d)),
            (p + "ln2_g", (d,)),
            (p + "ln2_b", (d,)),
            (p + "w1", (d, h)),
            (p + "b1", (h,)),
            (p + "w2", (h, d)),
            (p + "b2", (d,)),
        ]
    entries += [
        ("ln_f_g", (d,)),
        ("ln_f_b", (d,)),
        ("w_out", (d, vocab_size)),
        ("b_out", (vocab_size,)),
    ]
    return tuple(entries)


def param_views(flat: np.ndarray, registry) -> dict[str, np.ndarray]:
    views: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in registry:
        size = int(np.prod(shape))
        views[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    if offset != flat.size:
        raise DataError(f"parameter vector of size {flat.size}, registry expects {offset}")
    return views


@dataclass
class ModelState:
    params: np.ndarray  # flat float32 vector
    registry: tuple[tuple[str, tuple[int, ...]], ...]
    vocab: CharVocab
    config: TrainConfig
    step_count: int = 0
    rng_state: str = ""
    loss_history: list[float] = field(default_factory=list)

    def views(self) -> dict[str, np.ndarray]:
        return param_views(self.params, self.registry)

    def clone(self) -> "ModelState":
        return ModelState(
            params=self.params.copy(),
            registry=self.registry,
            vocab=self.vocab,
            config=self.config,
            step_count=self.step_count,
            rng_state=self.rng_state,
            loss_history=list(self.loss_history),
        )


def init_model(cfg: TrainConfig) -> ModelState:
    """Fresh model; the output head starts at zero, so logits are uniform."""
    vocab = CharVocab(cfg.vocab, unk_enabled=cfg.unk_enabled)
    registry = build_registry(cfg, len(vocab))
    rng = np.random.default_rng(derive_seed(cfg.seed, "init"))
    d, h, layers = cfg.model_dims
    chunks: list[np.ndarray] = []
    for name, shape in registry:
        base = name.rsplit(".", 1)[-1]
        if base in ("ln1_g", "ln2_g", "ln_f_g"):
            block = np.ones(shape)
        elif base in ("ln1_b", "ln2_b", "ln_f_b", "b1", "b2", "b_out", "w_out"):
            block = np.zeros(shape)
        elif base in ("tok_emb", "pos_emb"):
            block = rng.normal(0.0, 0.05, size=shape)
        elif base in ("wo", "w2"):
            block = rng.normal(0.0, 1.0 / np.sqrt(shape[0] * 2 * layers), size=shape)
        else:  # wq, wk, wv, w1
            block = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        chunks.append(block.reshape(-1))
    params = np.concatenate(chunks).astype(np.float32)
    return ModelState(
        params=params,
        registry=registry,
        vocab=vocab,
        config=cfg,
        rng_state=json.dumps(rng.bit_generator.state, sort_keys=True, default=str),
    )


# --- batch encoding -----------------------------------------------------


def encode_item(item: BatchItem, vocab: CharVocab, max_seq_len: int) -> tuple[list[int], int]:
    """Token ids for one item and the index where the target region starts.

    Long inputs are trimmed from the left (the end of the input region
    carries the assistant header); overlong targets lose their tail but
    keep the closing EOS.
    """
    tgt_ids = vocab.encode(item.target_region) + [EOS]
    if len(tgt_ids) > max_seq_len - 1:
        tgt_ids = tgt_ids[: max_seq_len - 2] + [EOS]
    inp_ids = vocab.encode(item.input_region)
    keep = max_seq_len - 1 - len(tgt_ids)
    if len(inp_ids) > keep:
        inp_ids = inp_ids[len(inp_ids) - keep :]
    ids = [BOS] + inp_ids + tgt_ids
    return ids, 1 + len(inp_ids)


def encode_batch(
    items: Sequence[BatchItem], vocab: CharVocab, max_seq_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Right-padded id matrix plus a mask that is True on target-region positions."""
    encoded = [encode_item(item, vocab, max_seq_len) for item in items]
    width = max(len(ids) for ids, _ in encoded)
    ids = np.full((len(encoded), width), PAD, dtype=np.int64)
    target_mask = np.zeros((len(encoded), width), dtype=bool)
    for row, (seq, tgt_start) in enumerate(encoded):
        ids[row, : len(seq)] = seq
        target_mask[row, tgt_start : len(seq)] = True
    return ids, target_mask


# --- forward / backward -------------------------------------------------


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * rstd
    return g * xhat + b, (xhat, rstd)


def _layer_norm_backward(dy: np.ndarray, g: np.ndarray, cache):
    xhat, rstd = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    dx = rstd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, nh, t, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, nh * hd)


def forward(views: dict[str, np.ndarray], cfg: TrainConfig, ids: np.ndarray):
    """Logits over the full sequence plus the cache needed for backprop."""
    d, h, layers = cfg.model_dims
    nh = cfg.n_heads
    hd = d // nh
    b, t = ids.shape
    dtype = views["tok_emb"].dtype

    x = views["tok_emb"][ids] + views["pos_emb"][:t][None, :, :]
    key_ok = ids != PAD
    allowed = np.tril(np.ones((t, t), dtype=bool))[None, None, :, :] & key_ok[:, None, None, :]
    bias = np.where(allowed, dtype.type(0), dtype.type(_NEG_INF))

    cache: dict = {"ids": ids, "x0": x, "layers": [], "bias_allowed": allowed}
    scale = 1.0 / np.sqrt(hd)
    for i in range(layers):
        p = f"layers.{i}."
        h1, ln1_cache = _layer_norm(x, views[p + "ln1_g"], views[p + "ln1_b"])
        q = _split_heads(h1 @ views[p + "wq"], nh)
        k = _split_heads(h1 @ views[p + "wk"], nh)
        v = _split_heads(h1 @ views[p + "wv"], nh)
        scores = q @ k.transpose(0, 1, 3, 2) * scale + bias
        scores -= scores.max(axis=-1, keepdims=True)
        exp = np.exp(scores)
        probs = exp / exp.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(probs @ v)
        attn_out = ctx @ views[p + "wo"]
        x_attn = x + attn_out
        h2, ln2_cache = _layer_norm(x_attn, views[p + "ln2_g"], views[p + "ln2_b"])
        pre = h2 @ views[p + "w1"] + views[p + "b1"]
        act = np.maximum(pre, 0)
        mlp_out = act @ views[p + "w2"] + views[p + "b2"]
        x_next = x_attn + mlp_out
        cache["layers"].append(
            {
                "h1": h1,
                "ln1": ln1_cache,
                "q": q,
                "k": k,
                "v": v,
                "probs": probs,
                "ctx": ctx,
                "h2": h2,
                "ln2": ln2_cache,
                "pre_mask": pre > 0,
                "act": act,
            }
        )
        x = x_next
    hf, lnf_cache = _layer_norm(x, views["ln_f_g"], views["ln_f_b"])
    logits = hf @ views["w_out"] + views["b_out"]
    cache["hf"] = hf
    cache["lnf"] = lnf_cache
    cache["x_final"] = x
    return logits, cache


def loss_and_grad(
    flat_params: np.ndarray,
    registry,
    cfg: TrainConfig,
    ids: np.ndarray,
    target_mask: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy on target-region characters and its full gradient."""
    views = param_views(flat_params, registry)
    logits, cache = forward(views, cfg, ids)
    dtype = flat_params.dtype

    # Predict ids[:, 1:] from logits[:, :-1]; only masked target positions count.
    pred_mask = target_mask[:, 1:]
    rows_b, rows_t = np.nonzero(pred_mask)
    n = rows_b.size
    if n == 0:
        return 0.0, np.zeros_like(flat_params)
    picked = logits[rows_b, rows_t]  # (n, V): logits at position t predict t+1
    picked = picked - picked.max(axis=-1, keepdims=True)
    exp = np.exp(picked)
    probs = exp / exp.sum(axis=-1, keepdims=True)
    targets = ids[rows_b, rows_t + 1]
    nll = -np.log(probs[np.arange(n), targets] + 1e-300)
    loss = float(nll.mean())

    dlogits = np.zeros_like(logits)
    dpicked = probs.copy()
    dpicked[np.arange(n), targets] -= 1.0
    dpicked /= n
    dlogits[rows_b, rows_t] = dpicked

    grad_flat = np.zeros_like(flat_params)
    grads = param_views(grad_flat, registry)
    d, h, layers = cfg.model_dims
    nh = cfg.n_heads
    hd = d // nh
    b, t = ids.shape
    scale = 1.0 / np.sqrt(hd)

    hf = cache["hf"]
    grads["w_out"] += hf.reshape(-1, d).T @ dlogits.reshape(-1, len(views["b_out"]))
    grads["b_out"] += dlogits.sum(axis=(0, 1))
    dhf = dlogits @ views["w_out"].T
    dx, dg, db = _layer_norm_backward(dhf, views["ln_f_g"], cache["lnf"])
    grads["ln_f_g"] += dg
    grads["ln_f_b"] += db

    for i in reversed(range(layers)):
        p = f"layers.{i}."
        layer = cache["layers"][i]
        # MLP branch
        dmlp_out = dx
        grads[p + "w2"] += layer["act"].reshape(-1, h).T @ dmlp_out.reshape(-1, d)
        grads[p + "b2"] += dmlp_out.sum(axis=(0, 1))
        dact = dmlp_out @ views[p + "w2"].T
        dpre = dact * layer["pre_mask"]
        grads[p + "w1"] += layer["h2"].reshape(-1, d).T @ dpre.reshape(-1, h)
        grads[p + "b1"] += dpre.sum(axis=(0, 1))
        dh2 = dpre @ views[p + "w1"].T
        dx_attn, dg2, db2 = _layer_norm_backward(dh2, views[p + "ln2_g"], layer["ln2"])
        grads[p + "ln2_g"] += dg2
        grads[p + "ln2_b"] += db2
        dx_attn = dx_attn + dx  # residual

        # attention branch
        dattn_out = dx_attn
        grads[p + "wo"] += layer["ctx"].reshape(-1, d).T @ dattn_out.reshape(-1, d)
        dctx = _split_heads(dattn_out @ views[p + "wo"].T, nh)
        probs = layer["probs"]
        dprobs = dctx @ layer["v"].transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ dctx
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dq = dscores @ layer["k"] * scale
        dk = dscores.transpose(0, 1, 3, 2) @ layer["q"] * scale
        dh1 = (
            _merge_heads(dq) @ views[p + "wq"].T
            + _merge_heads(dk) @ views[p + "wk"].T
            + _merge_heads(dv) @ views[p + "wv"].T
        )
        h1_flat = layer["h1"].reshape(-1, d)
        grads[p + "wq"] += h1_flat.T @ _merge_heads(dq).reshape(-1, d)
        grads[p + "wk"] += h1_flat.T @ _merge_heads(dk).reshape(-1, d)
        grads[p + "wv"] += h1_flat.T @ _merge_heads(dv).reshape(-1, d)
        dx_pre_ln1, dg1, db1 = _layer_norm_backward(dh1, views[p + "ln1_g"], layer["ln1"])
        grads[p + "ln1_g"] += dg1
        grads[p + "ln1_b"] += db1
        dx = dx_attn + dx_pre_ln1  # residual

    ids_flat = ids.reshape(-1)
    dx_flat = dx.reshape(-1, d)
    np.add.at(grads["tok_emb"], ids_flat, dx_flat)
    grads["pos_emb"][:t] += dx.sum(axis=0)
    return loss, grad_flat


# --- training loop ------------------------------------------------------


def train(
    model: ModelState,
    batches: Iterable[Sequence[BatchItem]],
    cfg: TrainConfig | None = None,
) -> ModelState:
    """Consume a batch stream with SGD + linear warmup; mutates and returns `model`.

    The warmup schedule restarts for each call, mirroring a fresh
    training phase (base training vs. adaptation).
    """
    cfg = cfg or model.config
    for local_step, batch in enumerate(batches):
        if local_step >= cfg.max_steps:
            break
        if not batch:
            continue
        ids, target_mask = encode_batch(batch, model.vocab, cfg.max_seq_len)
        loss, grad = loss_and_grad(model.params, model.registry, cfg, ids, target_mask)
        if not np.isfinite(loss):
            raise NonFiniteLossError(f"loss became non-finite at step {model.step_count}")
        grad_norm = float(np.linalg.norm(grad))
        if not np.isfinite(grad_norm):
            raise NonFiniteLossError(f"gradient became non-finite at step {model.step_count}")
        if cfg.grad_clip > 0 and grad_norm > cfg.grad_clip:
            grad *= cfg.grad_clip / grad_norm
        lr = cfg.learning_rate * min(1.0, (local_step + 1) / max(1, cfg.warmup_steps))
        model.params -= (lr * grad).astype(model.params.dtype)
        if not np.all(np.isfinite(model.params)):
            raise NonFiniteLossError(f"parameters became non-finite at step {model.step_count}")
        model.step_count += 1
        model.loss_history.append(loss)
    return model


def batch_loss(model: ModelState, batch: Sequence[BatchItem]) -> float:
    """Cross-entropy of a batch without updating the model."""
    ids, target_mask = encode_batch(batch, model.vocab, model.config.max_seq_len)
    views = param_views(model.params, model.registry)
    logits, _ = forward(views, model.config, ids)
    pred_mask = target_mask[:, 1:]
    rows_b, rows_t = np.nonzero(pred_mask)
    picked = logits[rows_b, rows_t]
    picked = picked - picked.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(picked).sum(axis=-1))
    targets = ids[rows_b, rows_t + 1]
    return float((logz - picked[np.arange(rows_b.size), targets]).mean())


def sequence_cross_entropy(
    model: ModelState, items: Sequence[BatchItem], chunk_size: int = 32
) -> tuple[float, int]:
    """Total target-region NLL in nats and the number of scored characters.

    Chunks are processed in fixed order, so the reduction is
    deterministic regardless of dataset size.
    """
    total_nll = 0.0
    total_count = 0
    views = param_views(model.params, model.registry)
    for start in range(0, len(items), chunk_size):
        chunk = items[start : start + chunk_size]
        ids, target_mask = encode_batch(chunk, model.vocab, model.config.max_seq_len)
        logits, _ = forward(views, model.config, ids)
        pred_mask = target_mask[:, 1:]
        rows_b, rows_t = np.nonzero(pred_mask)
        picked = logits[rows_b, rows_t]
        picked = picked - picked.max(axis=-1, keepdims=True)
        logz = np.log(np.exp(picked).sum(axis=-1))
        targets = ids[rows_b, rows_t + 1]
        total_nll += float((logz - picked[np.arange(rows_b.size), targets]).sum())
        total_count += int(rows_b.size)
    return total_nll, total_count


# --- greedy decoding ----------------------------------------------------


@dataclass(frozen=True)
class DecodeResult:
    text: str
    truncated: bool


def decode(model: ModelState, input_region: str, max_len: int) -> DecodeResult:
    """Greedy decoding conditioned on the input region, KV-cached.

    Stops at EOS (never emitted) or after `max_len` generated
    characters; `truncated` flags the latter.
    """
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    cfg = model.config
    d, h, layers = cfg.model_dims
    nh = cfg.n_heads
    hd = d // nh
    views = model.views()

    prefix_ids = [BOS] + model.vocab.encode(input_region)
    if len(prefix_ids) > cfg.max_seq_len - 1:
        prefix_ids = [BOS] + prefix_ids[len(prefix_ids) - (cfg.max_seq_len - 1) + 1 :]
    ids = np.asarray([prefix_ids], dtype=np.int64)
    logits, cache = forward(views, cfg, ids)
    k_cache = [cache["layers"][i]["k"] for i in range(layers)]
    v_cache = [cache["layers"][i]["v"] for i in range(layers)]

    out_ids: list[int] = []
    next_logits = logits[0, -1]
    position = len(prefix_ids)
    scale = 1.0 / np.sqrt(hd)
    truncated = False
    for _ in range(max_len):
        token = int(np.argmax(next_logits))
        if token == EOS:
            break
        out_ids.append(token)
        if len(out_ids) >= max_len or position >= cfg.max_seq_len:
            truncated = True
            break
        x = (views["tok_emb"][token] + views["pos_emb"][position])[None, None, :]
        for i in range(layers):
            p = f"layers.{i}."
            h1, _ = _layer_norm(x, views[p + "ln1_g"], views[p + "ln1_b"])
            q = _split_heads(h1 @ views[p + "wq"], nh)
            k = _split_heads(h1 @ views[p + "wk"], nh)
            v = _split_heads(h1 @ views[p + "wv"], nh)
            k_cache[i] = np.concatenate([k_cache[i], k], axis=2)
            v_cache[i] = np.concatenate([v_cache[i], v], axis=2)
            scores = q @ k_cache[i].transpose(0, 1, 3, 2) * scale
            scores -= scores.max(axis=-1, keepdims=True)
            exp = np.exp(scores)
            probs = exp / exp.sum(axis=-1, keepdims=True)
            ctx = _merge_heads(probs @ v_cache[i])
            x = x + ctx @ views[p + "wo"]
            h2, _ = _layer_norm(x, views[p + "ln2_g"], views[p + "ln2_b"])
            act = np.maximum(h2 @ views[p + "w1"] + views[p + "b1"], 0)
            x = x + act @ views[p + "w2"] + views[p + "b2"]
        hf, _ = _layer_norm(x, views["ln_f_g"], views["ln_f_b"])
        next_logits = (hf @ views["w_out"] + views["b_out"])[0, 0]
        position += 1
    return DecodeResult(text=model.vocab.decode(out_ids), truncated=truncated)


# --- gradient auditing --------------------------------------------------


def gradient_check(
    model: ModelState,
    batch: Sequence[BatchItem],
    rel_tol: float = 1e-4,
    step: float = 1e-6,
) -> tuple[float, float]:
    """Compare analytic gradients against central finite differences.

    Returns (fraction of parameters within `rel_tol`, worst relative
    error). Runs in float64 over every parameter. The step must stay
    small enough that perturbations do not cross ReLU kinks, which
    would corrupt the finite-difference side.
    """
    cfg = model.config
    ids, target_mask = encode_batch(batch, model.vocab, cfg.max_seq_len)
    params = model.params.astype(np.float64)
    _, grad = loss_and_grad(params, model.registry, cfg, ids, target_mask)

    pred_mask = target_mask[:, 1:]
    rows_b, rows_t = np.nonzero(pred_mask)
    targets = ids[rows_b, rows_t + 1]

    def loss_at(p: np.ndarray) -> float:
        views = param_views(p, model.registry)
        logits, _ = forward(views, cfg, ids)
        picked = logits[rows_b, rows_t]
        picked = picked - picked.max(axis=-1, keepdims=True)
        logz = np.log(np.exp(picked).sum(axis=-1))
        return float((logz - picked[np.arange(rows_b.size), targets]).mean())

    ok = 0
    worst = 0.0
    for idx in range(params.size):
        original = params[idx]
        params[idx] = original + step
        up = loss_at(params)
        params[idx] = original - step
        down = loss_at(params)
        params[idx] = original
        fd = (up - down) / (2 * step)
        denom = max(abs(grad[idx]), abs(fd))
        if denom < 1e-8:
            ok += 1
            continue
        rel = abs(grad[idx] - fd) / denom
        worst = max(worst, rel)
        if rel <= rel_tol:
            ok += 1
    return ok / params.size, worst


# --- checkpoints --------------------------------------------------------


def save_checkpoint(state: ModelState, path: str | Path, extra: dict | None = None) -> None:
    """Binary checkpoint: JSON header (shape registry, vocab, config), then float32 params."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = state.config
    header = {
        "format": 1,
        "registry": [[name, list(shape)] for name, shape in state.registry],
        "vocab_chars": state.vocab.chars,
        "unk_enabled": state.vocab.unk_enabled,
        "config": {
            "vocab": cfg.vocab,
            "model_dims": list(cfg.model_dims),
            "n_heads": cfg.n_heads,
            "learning_rate": cfg.learning_rate,
            "warmup_steps": cfg.warmup_steps,
            "batch_size": cfg.batch_size,
            "max_steps": cfg.max_steps,
            "seed": cfg.seed,
            "max_seq_len": cfg.max_seq_len,
            "grad_clip": cfg.grad_clip,
            "unk_enabled": cfg.unk_enabled,
        },
        "step_count": state.step_count,
        "rng_state": state.rng_state,
        "extra": extra or {},
    }
    payload = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(np.ascontiguousarray(state.params, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelState, dict]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != _CKPT_MAGIC:
        raise DataError(f"{path} is not a model checkpoint")
    (header_len,) = struct.unpack_from("<I", blob, 4)
    header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    raw = header["config"]
    cfg = TrainConfig(
        vocab=raw["vocab"],
        model_dims=tuple(raw["model_dims"]),
        n_heads=raw["n_heads"],
        learning_rate=raw["learning_rate"],
        warmup_steps=raw["warmup_steps"],
        batch_size=raw["batch_size"],
        max_steps=raw["max_steps"],
        seed=raw["seed"],
        max_seq_len=raw["max_seq_len"],
        grad_clip=raw["grad_clip"],
        unk_enabled=raw["unk_enabled"],
    )
    registry = tuple((name, tuple(shape)) for name, shape in header["registry"])
    params = np.frombuffer(blob[8 + header_len :], dtype="<f4").copy()
    state = ModelState(
        params=params,
        registry=registry,
        vocab=CharVocab(header["vocab_chars"], unk_enabled=header["unk_enabled"]),
        config=cfg,
        step_count=header["step_count"],
        rng_state=header["rng_state"],
    )
    param_views(state.params, registry)  # validates sizes
    return state, header.get("extra", {})
