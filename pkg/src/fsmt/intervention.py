"""Desk-scale encoder-decoder with additive style-vector control.

The model is a small Transformer: the encoder runs on the source alone,
then a learned style vector (one of formal / informal / neutral, all
three trained parameters) is broadcast-added to every encoder state
before the decoder cross-attends to it. "Masking" a formality label
during training means substituting the neutral index, not dropping the
addition.

Also provides the synthetic contrastive toy language used for
end-to-end verification: sources over a tiny "English" vocabulary whose
formal and informal targets differ only in deterministic marker tokens
(pronoun FP vs IP, verb suffix VF vs VI), with a configurable fraction
of neutral pairs whose targets coincide.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import torch
from torch import nn

from .textcore import (
    AnnotatedReference,
    FormalityLabel,
    LabeledTriplet,
    PairedContrastiveExample,
    Segment,
)

STYLE_INDEX = {"formal": 0, "informal": 1, "neutral": 2}

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"


class InterventionError(Exception):
    pass


class UnknownLevel(InterventionError):
    pass


class TrainingDiverged(InterventionError):
    pass


def style_index(f: FormalityLabel | str) -> int:
    name = f.value if isinstance(f, FormalityLabel) else f
    if name not in STYLE_INDEX:
        raise UnknownLevel(f"formality level must be formal/informal/neutral, got {name!r}")
    return STYLE_INDEX[name]


class Vocab:
    """Whitespace-token vocabulary with pad/bos/eos specials."""

    def __init__(self, tokens: Iterable[str]):
        self.itos = [PAD, BOS, EOS] + sorted(set(tokens) - {PAD, BOS, EOS})
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi[t] for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids if i > 2]

    @classmethod
    def from_corpus(cls, triplets: Sequence[LabeledTriplet]) -> "Vocab":
        toks: set[str] = set()
        for t in triplets:
            toks.update(t.source.text.split())
            toks.update(t.target.text.split())
        return cls(toks)


@dataclass(frozen=True)
class SecondStage:
    epochs: int = 5
    mask_prob: float = 1.0
    learning_rate: float = 3e-4


@dataclass(frozen=True)
class TrainConfig:
    d: int = 64
    layers: int = 2
    heads: int = 4
    ffn: int = 128
    max_len: int = 32
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 1e-3
    mask_prob: float = 0.2
    seed: int = 0
    two_pass: Optional[SecondStage] = None

    def __post_init__(self):
        if not (0.0 <= self.mask_prob <= 1.0):
            raise ValueError("mask_prob must be in [0, 1]")


class ToyInterventionModel(nn.Module):
    def __init__(self, vocab: Vocab, config: TrainConfig = TrainConfig()):
        super().__init__()
        self.vocab = vocab
        self.config = config
        d = config.d
        self.token_emb = nn.Embedding(len(vocab), d, padding_idx=0)
        self.pos_emb = nn.Embedding(config.max_len, d)
        enc_layer = nn.TransformerEncoderLayer(
            d, config.heads, config.ffn, dropout=0.0, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(enc_layer, config.layers)
        dec_layer = nn.TransformerDecoderLayer(
            d, config.heads, config.ffn, dropout=0.0, batch_first=True
        )
        self.decoder = nn.TransformerDecoder(dec_layer, config.layers)
        self.style_emb = nn.Embedding(3, d)  # formal / informal / neutral
        self.out_proj = nn.Linear(d, len(vocab))

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(ids.shape[1], device=ids.device)
        return self.token_emb(ids) + self.pos_emb(pos)[None, :, :]

    def encode(self, src_ids: torch.Tensor) -> torch.Tensor:
        """Encoder states Z; computed without any style information."""
        mask = src_ids.eq(0)
        return self.encoder(self._embed(src_ids), src_key_padding_mask=mask)

    def forward(
        self, src_ids: torch.Tensor, style: torch.Tensor, tgt_in_ids: torch.Tensor
    ) -> torch.Tensor:
        """Teacher-forced logits; style is a per-example index tensor."""
        z = self.encode(src_ids)
        v = self.style_emb(style)  # (batch, d)
        memory = z + v[:, None, :]
        t = tgt_in_ids.shape[1]
        causal = torch.triu(
            torch.ones(t, t, dtype=torch.bool, device=src_ids.device), diagonal=1
        )
        h = self.decoder(
            self._embed(tgt_in_ids),
            memory,
            tgt_mask=causal,
            memory_key_padding_mask=src_ids.eq(0),
            tgt_key_padding_mask=tgt_in_ids.eq(0),
        )
        return self.out_proj(h)


def output_distributions(
    model: ToyInterventionModel,
    src_tokens: Sequence[str],
    f: FormalityLabel | str,
    tgt_tokens: Sequence[str],
) -> torch.Tensor:
    """Per-position vocabulary distributions for one teacher-forced example."""
    if not src_tokens:
        raise InterventionError("source must be non-empty")
    src = torch.tensor([model.vocab.encode(src_tokens)])
    tgt_in = torch.tensor([model.vocab.encode([BOS] + list(tgt_tokens))])
    style = torch.tensor([style_index(f)])
    with torch.no_grad():
        logits = model(src, style, tgt_in)
    return torch.softmax(logits[0], dim=-1)


def _encode_batch(
    model: ToyInterventionModel, batch: Sequence[tuple[list[str], list[str], int]]
):
    vocab = model.vocab
    device = next(model.parameters()).device
    src_len = max(len(s) for s, _, _ in batch)
    tgt_len = max(len(t) for _, t, _ in batch) + 1  # bos / eos shift
    src = torch.zeros(len(batch), src_len, dtype=torch.long, device=device)
    tgt_in = torch.zeros(len(batch), tgt_len, dtype=torch.long, device=device)
    tgt_out = torch.zeros(len(batch), tgt_len, dtype=torch.long, device=device)
    style = torch.zeros(len(batch), dtype=torch.long, device=device)
    for i, (s, t, f) in enumerate(batch):
        sids = vocab.encode(s)
        tids = vocab.encode(t)
        src[i, : len(sids)] = torch.tensor(sids)
        tgt_in[i, : len(tids) + 1] = torch.tensor([vocab.stoi[BOS]] + tids)
        tgt_out[i, : len(tids) + 1] = torch.tensor(tids + [vocab.stoi[EOS]])
        style[i] = f
    return src, style, tgt_in, tgt_out


def nll_loss(
    model: ToyInterventionModel,
    batch: Sequence[tuple[list[str], list[str], int]],
) -> torch.Tensor:
    """Mean token-level negative log-likelihood with teacher forcing.

    The mean is token-weighted, so a paired batch's loss equals the
    token-weighted mean of its formal and informal halves exactly.
    """
    if not batch:
        raise InterventionError("batch must be non-empty")
    src, style, tgt_in, tgt_out = _encode_batch(model, batch)
    logits = model(src, style, tgt_in)
    logp = torch.log_softmax(logits, dim=-1)
    tok_logp = logp.gather(-1, tgt_out[:, :, None]).squeeze(-1)
    mask = tgt_out.ne(0)
    return -(tok_logp * mask).sum() / mask.sum()


def triplet_rows(
    triplets: Sequence[LabeledTriplet],
) -> list[tuple[list[str], list[str], int]]:
    return [
        (t.source.text.split(), t.target.text.split(), style_index(t.label))
        for t in triplets
    ]


def mask_style(f: int, mask_prob: float, rng: random.Random) -> int:
    """Substitute the neutral index with probability mask_prob."""
    if f not in (STYLE_INDEX["formal"], STYLE_INDEX["informal"]):
        raise UnknownLevel("only formal/informal labels are maskable")
    if mask_prob > 0 and rng.random() < mask_prob:
        return STYLE_INDEX["neutral"]
    return f


@dataclass
class EpochMetrics:
    epoch: int
    stage: int
    loss: float
    masked_fraction: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "stage": self.stage,
                "loss": self.loss,
                "masked_fraction": self.masked_fraction,
            }
        )


def _run_stage(
    model: ToyInterventionModel,
    rows: list[tuple[list[str], list[str], int]],
    epochs: int,
    lr: float,
    mask_prob: float,
    batch_size: int,
    rng: random.Random,
    stage: int,
    history: list[EpochMetrics],
) -> None:
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    for epoch in range(1, epochs + 1):
        order = list(range(len(rows)))
        rng.shuffle(order)
        total_loss = 0.0
        total_batches = 0
        masked = 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            batch = []
            for i in idx:
                s, t, f = rows[i]
                fm = mask_style(f, mask_prob, rng) if f != STYLE_INDEX["neutral"] else f
                masked += fm == STYLE_INDEX["neutral"] and f != STYLE_INDEX["neutral"]
                batch.append((s, t, fm))
            loss = nll_loss(model, batch)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at stage {stage} epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += float(loss.detach())
            total_batches += 1
        history.append(
            EpochMetrics(
                epoch=epoch,
                stage=stage,
                loss=total_loss / max(total_batches, 1),
                masked_fraction=masked / max(len(order), 1),
            )
        )


def train(
    model: ToyInterventionModel,
    corpus: Sequence[LabeledTriplet],
    config: Optional[TrainConfig] = None,
    second_stage_corpus: Optional[Sequence[LabeledTriplet]] = None,
) -> list[EpochMetrics]:
    """Train in place; returns per-epoch metrics.

    The formality label of each example is re-sampled for masking every
    epoch. When config.two_pass is set, a second stage runs over
    second_stage_corpus (falling back to the main corpus) with its own
    mask probability and learning rate.
    """
    if not corpus:
        raise InterventionError("corpus must be non-empty")
    config = config or model.config
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    history: list[EpochMetrics] = []
    _run_stage(
        model,
        triplet_rows(corpus),
        config.epochs,
        config.learning_rate,
        config.mask_prob,
        config.batch_size,
        rng,
        stage=1,
        history=history,
    )
    if config.two_pass is not None:
        rows2 = triplet_rows(second_stage_corpus if second_stage_corpus is not None else corpus)
        _run_stage(
            model,
            rows2,
            config.two_pass.epochs,
            config.two_pass.learning_rate,
            config.two_pass.mask_prob,
            config.batch_size,
            rng,
            stage=2,
            history=history,
        )
    return history


def decode(
    model: ToyInterventionModel,
    src_tokens: Sequence[str],
    f: FormalityLabel | str,
    max_len: int = 32,
) -> list[str]:
    """Greedy argmax decoding, stops at <eos> or max_len."""
    if max_len <= 0:
        return []
    vocab = model.vocab
    device = next(model.parameters()).device
    src = torch.tensor([vocab.encode(src_tokens)], device=device)
    style = torch.tensor([style_index(f)], device=device)
    out_ids = [vocab.stoi[BOS]]
    with torch.no_grad():
        z = model.encode(src)
        memory = z + model.style_emb(style)[:, None, :]
        for _ in range(max_len):
            tgt_in = torch.tensor([out_ids], device=device)
            t = tgt_in.shape[1]
            causal = torch.triu(
                torch.ones(t, t, dtype=torch.bool, device=device), diagonal=1
            )
            h = model.decoder(model._embed(tgt_in), memory, tgt_mask=causal)
            nxt = int(model.out_proj(h[0, -1]).argmax())
            if nxt == vocab.stoi[EOS]:
                break
            out_ids.append(nxt)
    return vocab.decode(out_ids)


def save_checkpoint(model: ToyInterventionModel, path) -> None:
    torch.save(
        {
            "format_version": 1,
            "vocab": model.vocab.itos,
            "config": model.config.__dict__
            | {"two_pass": model.config.two_pass.__dict__ if model.config.two_pass else None},
            "state": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> ToyInterventionModel:
    payload = torch.load(path, weights_only=False)
    if payload.get("format_version") != 1:
        raise InterventionError("unsupported checkpoint format")
    cfg_dict = dict(payload["config"])
    two_pass = cfg_dict.pop("two_pass", None)
    config = TrainConfig(**cfg_dict, two_pass=SecondStage(**two_pass) if two_pass else None)
    vocab = Vocab.__new__(Vocab)
    vocab.itos = payload["vocab"]
    vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
    model = ToyInterventionModel(vocab, config)
    model.load_state_dict(payload["state"])
    return model


# Toy contrastive language. Sources look like "<2toy> you w3 w7 ?";
# formal targets are "FP t3 t7 VF", informal "IP t3 t7 VI", neutral
# pairs map tokens with no markers at all.

TOY_SRC_WORDS = [f"w{i}" for i in range(16)]
LANG_TAG = "<2toy>"
FORMAL_PRONOUN, INFORMAL_PRONOUN = "FP", "IP"
FORMAL_VERB, INFORMAL_VERB = "VF", "VI"
MARKER_TOKENS = frozenset({FORMAL_PRONOUN, INFORMAL_PRONOUN, FORMAL_VERB, INFORMAL_VERB})


def _map_token(w: str) -> str:
    return "t" + w[1:]


def _annotate_markers(tokens: list[str]) -> AnnotatedReference:
    text = " ".join(tokens)
    spans = []
    pos = 0
    for tok in tokens:
        if tok in MARKER_TOKENS:
            spans.append((pos, pos + len(tok)))
        pos += len(tok) + 1
    return AnnotatedReference(text=text, contrastive_spans=tuple(spans))


def gen_toylang(
    n_pairs: int, seed: int, neutral_fraction: float = 0.1
) -> list[PairedContrastiveExample]:
    """Generate a paired contrastive toy corpus.

    Non-neutral pairs differ exactly in the marker tokens; stripping the
    markers makes both targets equal. Domains alternate so dev_split is
    exercisable.
    """
    rng = random.Random(seed)
    out = []
    for i in range(n_pairs):
        k = rng.randint(3, 6)
        words = [rng.choice(TOY_SRC_WORDS) for _ in range(k)]
        mapped = [_map_token(w) for w in words]
        neutral = rng.random() < neutral_fraction
        domain = "telephony" if i % 2 == 0 else "topical_chat"
        if neutral:
            src_tokens = [LANG_TAG, "it"] + words + ["."]
            formal = informal = _annotate_markers(mapped)
        else:
            src_tokens = [LANG_TAG, "you"] + words + ["?"]
            formal = _annotate_markers([FORMAL_PRONOUN] + mapped + [FORMAL_VERB])
            informal = _annotate_markers([INFORMAL_PRONOUN] + mapped + [INFORMAL_VERB])
        out.append(
            PairedContrastiveExample(
                source=Segment(" ".join(src_tokens), "en", domain),
                formal_ref=formal,
                informal_ref=informal,
                domain_tag=domain,
            )
        )
    return out


def pairs_to_triplets(pairs: Sequence[PairedContrastiveExample]) -> list[LabeledTriplet]:
    """Both levels of every pair, formal half first then informal half."""
    out = []
    for ex in pairs:
        out.append(
            LabeledTriplet(ex.source, Segment(ex.formal_ref.text, "toy"), FormalityLabel.FORMAL)
        )
    for ex in pairs:
        out.append(
            LabeledTriplet(ex.source, Segment(ex.informal_ref.text, "toy"), FormalityLabel.INFORMAL)
        )
    return out
