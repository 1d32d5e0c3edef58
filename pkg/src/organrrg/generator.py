"""Report generation: attention encoder over the fused image grid, causal
decoder with cross-attention, the consistency and total losses, and
length-normalized beam search.

Beam search is a standalone function over a step callback so that decoding
logic can be exercised against exhaustive enumeration independently of any
particular model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .corpus import BOS_ID, EOS_ID, PAD_ID
from .fusion import MultiHeadCrossAttention


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    if dim % 2 != 0:
        raise ValueError("dim must be even")
    position = torch.arange(length, dtype=dtype).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim))
    enc = torch.zeros(length, dim, dtype=dtype)
    enc[:, 0::2] = torch.sin(position * div)
    enc[:, 1::2] = torch.cos(position * div)
    return enc


class _FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        return self.net(x)


class _SelfAttention(nn.Module):
    """Multi-head self-attention with an optional additive mask."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.mha = MultiHeadCrossAttention(dim, heads)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        b, t, _ = x.shape
        h = self.mha
        q = h.w_q(x).view(b, t, h.heads, h.head_dim).transpose(1, 2)
        k = h.w_k(x).view(b, t, h.heads, h.head_dim).transpose(1, 2)
        v = h.w_v(x).view(b, t, h.heads, h.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(h.head_dim)
        if mask is not None:
            scores = scores.masked_fill(mask, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(b, t, h.dim)
        return h.w_out(out)


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.attn = _SelfAttention(dim, heads)
        self.ff = _FeedForward(dim, 2 * dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class DecoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.self_attn = _SelfAttention(dim, heads)
        self.cross_attn = MultiHeadCrossAttention(dim, heads)
        self.ff = _FeedForward(dim, 2 * dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, x, memory, causal_mask):
        x = x + self.self_attn(self.norm1(x), causal_mask)
        x = x + self.cross_attn(self.norm2(x), memory)
        return x + self.ff(self.norm3(x))


@dataclass
class EncodedImage:
    """Encoder output grid plus its positionwise mean."""

    memory: torch.Tensor  # (B, P, d)
    pooled: torch.Tensor  # (B, d)


class ReportGenerator(nn.Module):
    """Encoder-decoder over a fused image grid and report token sequences."""

    def __init__(self, vocab_size: int, dim: int, heads: int,
                 enc_layers: int = 3, dec_layers: int = 3, max_len: int = 512):
        super().__init__()
        self.vocab_size = vocab_size
        self.dim = dim
        self.max_len = max_len
        self.token_embed = nn.Embedding(vocab_size, dim)
        self.register_buffer("positions", sinusoidal_positions(max_len, dim), persistent=False)
        self.encoder = nn.ModuleList(EncoderLayer(dim, heads) for _ in range(enc_layers))
        self.enc_norm = nn.LayerNorm(dim)
        self.decoder = nn.ModuleList(DecoderLayer(dim, heads) for _ in range(dec_layers))
        self.dec_norm = nn.LayerNorm(dim)
        self.out_proj = nn.Linear(dim, vocab_size)

    def encode(self, x: torch.Tensor) -> EncodedImage:
        for layer in self.encoder:
            x = layer(x)
        x = self.enc_norm(x)
        return EncodedImage(memory=x, pooled=x.mean(dim=1))

    def embed_target(self, target: torch.Tensor) -> torch.Tensor:
        """Mean of the token embeddings over non-PAD positions, per sample."""
        emb = self.token_embed(target)
        keep = (target != PAD_ID).unsqueeze(-1).to(emb.dtype)
        return (emb * keep).sum(dim=1) / keep.sum(dim=1).clamp(min=1)

    def decode_teacher_forced(self, enc: EncodedImage, target: torch.Tensor) -> torch.Tensor:
        """Logits (B, T, vocab): row t conditions on target[0..t] and the image."""
        if target.shape[1] > self.max_len:
            raise ValueError(f"target length {target.shape[1]} exceeds max_len {self.max_len}")
        if (target[:, 0] != BOS_ID).any():
            raise ValueError("target must begin with BOS")
        t = target.shape[1]
        x = self.token_embed(target) + self.positions[:t].to(target.device)
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool, device=target.device), diagonal=1)
        for layer in self.decoder:
            x = layer(x, enc.memory, causal)
        return self.out_proj(self.dec_norm(x))

    def step_fn(self, enc: EncodedImage):
        """Next-token log-probability callback for beam search: maps a batch
        of prefixes (k, t) to (k, vocab) log-probs."""

        @torch.no_grad()
        def step(prefixes: torch.Tensor) -> torch.Tensor:
            k = prefixes.shape[0]
            memory = enc.memory.expand(k, -1, -1) if enc.memory.shape[0] == 1 else enc.memory
            logits = self.decode_teacher_forced(EncodedImage(memory, enc.pooled), prefixes)
            return torch.log_softmax(logits[:, -1].double(), dim=-1)

        return step

    def generate(self, enc: EncodedImage, width: int, max_len: int) -> list[int]:
        """Beam-search decode a single encoded sample."""
        if enc.memory.shape[0] != 1:
            raise ValueError("generate decodes one sample at a time")
        return beam_search(self.step_fn(enc), self.vocab_size, width, max_len)


def consistency_loss(pooled_image: torch.Tensor, target_emb: torch.Tensor) -> torch.Tensor:
    """1 - cosine similarity, averaged over the batch; range [0, 2]."""
    img_norm = pooled_image.norm(dim=-1)
    txt_norm = target_emb.norm(dim=-1)
    if (img_norm == 0).any() or (txt_norm == 0).any():
        raise ValueError("degenerate embedding")
    cos = (pooled_image * target_emb).sum(dim=-1) / (img_norm * txt_norm)
    return (1.0 - cos).mean()


def cross_entropy_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean token-level cross-entropy over non-PAD positions: logits[t]
    predicts target[t + 1]."""
    pred = logits[:, :-1].reshape(-1, logits.shape[-1])
    gold = target[:, 1:].reshape(-1)
    return nn.functional.cross_entropy(pred, gold, ignore_index=PAD_ID)


def total_loss(logits: torch.Tensor, target: torch.Tensor, enc: EncodedImage,
               target_emb: torch.Tensor, beta: float = 0.1) -> torch.Tensor:
    ce = cross_entropy_loss(logits, target)
    if beta == 0:
        return ce
    return ce + beta * consistency_loss(enc.pooled, target_emb)


def beam_search(step, vocab_size: int, width: int = 3, max_len: int = 60,
                bos: int = BOS_ID, eos: int = EOS_ID,
                banned: tuple[int, ...] = (PAD_ID, BOS_ID)) -> list[int]:
    """Length-normalized beam search.

    ``step`` maps prefix batches (k, t) of token ids to (k, vocab_size)
    log-probabilities for the next token. Hypotheses finish at EOS or at
    ``max_len`` total tokens. Scores are total log-probability divided by
    the number of generated tokens (everything after BOS); score ties break
    by token id ascending, then by hypothesis age (older first). The banned
    ids are never generated.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    live: list[tuple[list[int], float, tuple]] = [([bos], 0.0, ())]
    finished: list[tuple[float, tuple, list[int]]] = []

    while live:
        prefixes = torch.tensor([seq for seq, _, _ in live], dtype=torch.long)
        logprobs = step(prefixes)
        candidates: list[tuple[float, int, tuple, list[int], float]] = []
        for (seq, logp, age), row in zip(live, logprobs):
            for tok in range(vocab_size):
                if tok in banned:
                    continue
                new_logp = logp + float(row[tok])
                gen_len = len(seq)  # tokens after BOS once tok is appended
                score = new_logp / gen_len
                candidates.append((score, tok, age, seq, new_logp))
        # Higher score first; ties by token id ascending then older hypothesis.
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        live = []
        for rank, (score, tok, age, seq, new_logp) in enumerate(candidates[:width]):
            new_seq = seq + [tok]
            new_age = age + (rank,)
            if tok == eos or len(new_seq) >= max_len:
                finished.append((score, new_age, new_seq))
            else:
                live.append((new_seq, new_logp, new_age))

    if not finished:
        return [bos, eos]
    finished.sort(key=lambda f: (-f[0], f[2], f[1]))
    return finished[0][2]
