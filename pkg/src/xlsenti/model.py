"""Shared encoder with per-granularity classification heads."""

from __future__ import annotations

import io
import json
import os
import zipfile
import zlib
from collections import OrderedDict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import LABELS, Granularity, SentimentLabel
from .errors import AssetError, ConfigurationError, DomainError, ShapeError

ASSET_CACHE_ENV = "XLSENTI_ASSET_CACHE"
CHECKPOINT_FORMAT = 1
NUM_LABELS = 3


@dataclass(frozen=True)
class EncoderSpec:
    kind: str = "toy_deterministic"
    hidden_dim: int = 64
    max_tokens: int = 512
    asset_ref: str | None = None
    pooling: str = "first_token"
    ngram: int = 3
    buckets: int = 1 << 14
    projection_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("toy_deterministic", "pretrained_adapter"):
            raise DomainError(f"unknown encoder kind {self.kind!r}")
        if self.hidden_dim <= 0 or self.max_tokens <= 0:
            raise DomainError("hidden_dim and max_tokens must be positive")
        if self.pooling not in ("first_token", "mean"):
            raise DomainError(f"unknown pooling {self.pooling!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "EncoderSpec":
        return cls(**raw)


class ToyEncoder(nn.Module):
    """Hashed character n-gram counts, fixed random projection, L2 norm,
    followed by one trainable linear layer.

    Only the trailing linear layer is trainable; the projection is rebuilt
    from ``projection_seed`` and never stored.  "Tokens" are whitespace-split
    words, so truncation keeps the first ``max_tokens`` words.
    """

    def __init__(self, spec: EncoderSpec, cache_size: int = 200_000):
        super().__init__()
        self.spec = spec
        rng = np.random.default_rng(spec.projection_seed)
        self._projection = (rng.standard_normal((spec.buckets, spec.hidden_dim)) / np.sqrt(spec.hidden_dim)).astype(np.float64)
        self.linear = nn.Linear(spec.hidden_dim, spec.hidden_dim)
        with torch.no_grad():
            self.linear.weight.copy_(torch.eye(spec.hidden_dim))
            self.linear.bias.zero_()
        self._cache: OrderedDict[str, np.ndarray] = OrderedDict()
        self._cache_size = cache_size

    def truncate(self, text: str) -> str:
        return " ".join(text.split()[: self.spec.max_tokens])

    def base_features(self, text: str) -> np.ndarray:
        text = self.truncate(text)
        hit = self._cache.get(text)
        if hit is not None:
            return hit
        n = self.spec.ngram
        padded = f" {text} "
        idx = [zlib.crc32(padded[i:i + n].encode("utf-8")) % self.spec.buckets for i in range(max(len(padded) - n + 1, 0))]
        vec = np.zeros(self.spec.hidden_dim)
        if idx:
            counts = np.bincount(idx, minlength=self.spec.buckets)
            nz = np.nonzero(counts)[0]
            vec = counts[nz] @ self._projection[nz]
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec = vec / norm
        self._cache[text] = vec
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return vec

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        base = np.stack([self.base_features(t) for t in texts])
        weight = self.linear.weight
        return self.linear(torch.as_tensor(base, dtype=weight.dtype, device=weight.device))


class PretrainedEncoder(nn.Module):
    """Adapter around a Hugging Face encoder (e.g. a trilingual BERT)."""

    def __init__(self, spec: EncoderSpec):
        super().__init__()
        if not spec.asset_ref:
            raise AssetError("pretrained_adapter needs an asset_ref")
        try:
            from transformers import AutoModel, AutoTokenizer

            cache_dir = os.environ.get(ASSET_CACHE_ENV)
            self.tokenizer = AutoTokenizer.from_pretrained(spec.asset_ref, cache_dir=cache_dir)
            self.model = AutoModel.from_pretrained(spec.asset_ref, cache_dir=cache_dir)
        except Exception as exc:  # transformers raises OSError, ValueError, HTTP errors...
            raise AssetError(f"cannot resolve pretrained asset {spec.asset_ref!r}: {exc}") from exc
        if self.model.config.hidden_size != spec.hidden_dim:
            raise AssetError(
                f"asset {spec.asset_ref!r} has hidden size {self.model.config.hidden_size}, "
                f"config says {spec.hidden_dim}"
            )
        self.spec = spec

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        enc = self.tokenizer(
            list(texts), padding=True, truncation=True, max_length=self.spec.max_tokens, return_tensors="pt",
        )
        enc = {k: v.to(next(self.model.parameters()).device) for k, v in enc.items()}
        hidden = self.model(**enc).last_hidden_state
        if self.spec.pooling == "first_token":
            return hidden[:, 0, :]
        mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        return (hidden * mask).sum(1) / mask.sum(1).clamp(min=1e-9)


def make_encoder(spec: EncoderSpec) -> nn.Module:
    if spec.kind == "toy_deterministic":
        return ToyEncoder(spec)
    return PretrainedEncoder(spec)


def encode(texts: Sequence[str], encoder: nn.Module, mode: str = "eval") -> torch.Tensor:
    _check_mode(mode)
    encoder.train(mode == "train")
    return encoder(list(texts))


class ClassificationHead(nn.Module):
    def __init__(self, task: Granularity, hidden_dim: int, dropout_rate: float = 0.3, generator: torch.Generator | None = None):
        super().__init__()
        if not 0.0 <= dropout_rate < 1.0:
            raise DomainError(f"dropout rate must lie in [0, 1), got {dropout_rate}")
        self.task = Granularity(task)
        self.dropout_rate = dropout_rate
        self.linear = nn.Linear(hidden_dim, NUM_LABELS)
        with torch.no_grad():
            w = torch.rand(NUM_LABELS, hidden_dim, generator=generator, dtype=torch.float64) * 0.1 - 0.05
            self.linear.weight.copy_(w)
            self.linear.bias.zero_()

    @property
    def hidden_dim(self) -> int:
        return self.linear.in_features


@dataclass
class PredictionBatch:
    probabilities: torch.Tensor
    log_probabilities: torch.Tensor

    @property
    def predicted(self) -> list[SentimentLabel]:
        return [LABELS[i] for i in self.probabilities.argmax(dim=1).tolist()]

    def __len__(self):
        return self.probabilities.shape[0]


def _check_mode(mode: str):
    if mode not in ("train", "eval"):
        raise DomainError(f"mode must be 'train' or 'eval', got {mode!r}")


def head_forward(features: torch.Tensor, head: ClassificationHead, mode: str = "eval", generator: torch.Generator | None = None) -> PredictionBatch:
    _check_mode(mode)
    if features.dim() != 2 or features.shape[1] != head.hidden_dim:
        raise ShapeError(f"features of shape {tuple(features.shape)} do not fit head width {head.hidden_dim}")
    if mode == "train" and head.dropout_rate > 0:
        keep = 1.0 - head.dropout_rate
        mask = torch.rand(features.shape, generator=generator, dtype=features.dtype, device=features.device) < keep
        features = features * mask / keep
    logits = head.linear(features)
    log_probs = F.log_softmax(logits, dim=1)
    return PredictionBatch(probabilities=log_probs.exp(), log_probabilities=log_probs)


def compute_loss(batch: PredictionBatch, gold: Sequence[SentimentLabel]) -> torch.Tensor:
    if len(batch) != len(gold):
        raise ShapeError(f"{len(batch)} predictions vs {len(gold)} gold labels")
    target = torch.tensor([SentimentLabel(g).index for g in gold], device=batch.log_probabilities.device)
    return F.nll_loss(batch.log_probabilities, target)


class ModelBundle(nn.Module):
    """One encoder shared by every head; heads keyed by granularity value."""

    def __init__(self, spec: EncoderSpec, encoder: nn.Module, heads: dict[str, ClassificationHead], seed: int = 0):
        super().__init__()
        self.spec = spec
        self.encoder = encoder
        self.heads = nn.ModuleDict(heads)
        self.seed = seed

    @property
    def tasks(self) -> list[str]:
        return list(self.heads.keys())

    def head(self, task: Granularity | str) -> ClassificationHead:
        key = Granularity(task).value
        if key not in self.heads:
            raise ConfigurationError(f"model has no {key} head (heads: {self.tasks})")
        return self.heads[key]

    def forward(self, texts: Sequence[str], task: Granularity | str, mode: str = "eval", generator: torch.Generator | None = None) -> PredictionBatch:
        head = self.head(task)
        self.train(mode == "train")
        return head_forward(encode(texts, self.encoder, mode), head, mode, generator)

    def encoder_parameters(self):
        return dict(self.encoder.named_parameters())


def build_model(spec: EncoderSpec, tasks: Sequence[Granularity | str], seed: int = 0, dropout_rate: float = 0.3, encoder: nn.Module | None = None) -> ModelBundle:
    tasks = [Granularity(t) for t in tasks]
    if len(set(tasks)) != len(tasks) or not tasks:
        raise ConfigurationError(f"tasks must be distinct and non-empty, got {tasks}")
    gen = torch.Generator().manual_seed(seed)
    encoder = encoder if encoder is not None else make_encoder(spec)
    # Instantiate heads in canonical granularity order so init is order-independent.
    heads = {g.value: ClassificationHead(g, spec.hidden_dim, dropout_rate, generator=gen) for g in Granularity if g in tasks}
    return ModelBundle(spec, encoder, heads, seed=seed)


@torch.no_grad()
def predict(bundle: ModelBundle, texts: Sequence[str], task: Granularity | str, batch_size: int = 64) -> torch.Tensor:
    """Eval-mode class probabilities, (n, 3)."""
    chunks = [bundle(texts[i:i + batch_size], task, mode="eval").probabilities for i in range(0, len(texts), batch_size)]
    if not chunks:
        return torch.zeros((0, NUM_LABELS))
    return torch.cat(chunks)


_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _zip_write(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(bundle: ModelBundle, path: str | Path, extra: dict | None = None) -> Path:
    """Write a versioned zip archive; identical parameters give identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = bundle.state_dict()
    params = []
    blobs = {}
    for i, (name, tensor) in enumerate(sorted(state.items())):
        arr = tensor.detach().cpu().numpy()
        buf = io.BytesIO()
        np.save(buf, arr, allow_pickle=False)
        fname = f"params/{i:05d}.npy"
        blobs[fname] = buf.getvalue()
        params.append({"name": name, "file": fname, "shape": list(arr.shape), "dtype": str(arr.dtype)})
    first_head = next(iter(bundle.heads.values()))
    meta = {
        "format": "xlsenti-checkpoint",
        "format_version": CHECKPOINT_FORMAT,
        "encoder": asdict(bundle.spec),
        "heads": bundle.tasks,
        "dropout_rate": first_head.dropout_rate,
        "seed": bundle.seed,
        "params": params,
        "extra": extra or {},
    }
    with zipfile.ZipFile(path, "w") as zf:
        _zip_write(zf, "checkpoint.json", json.dumps(meta, sort_keys=True, indent=1).encode("utf-8"))
        for fname in sorted(blobs):
            _zip_write(zf, fname, blobs[fname])
    return path


def read_checkpoint_meta(path: str | Path) -> dict:
    with zipfile.ZipFile(path) as zf:
        return json.loads(zf.read("checkpoint.json"))


def load_checkpoint(path: str | Path, encoder: nn.Module | None = None) -> ModelBundle:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("checkpoint.json"))
        if meta.get("format") != "xlsenti-checkpoint":
            raise ConfigurationError(f"{path} is not a checkpoint archive")
        if meta["format_version"] > CHECKPOINT_FORMAT:
            raise ConfigurationError(f"checkpoint format {meta['format_version']} is newer than supported {CHECKPOINT_FORMAT}")
        spec = EncoderSpec.from_dict(meta["encoder"])
        bundle = build_model(spec, meta["heads"], seed=meta["seed"], dropout_rate=meta["dropout_rate"], encoder=encoder)
        state = {}
        for entry in meta["params"]:
            state[entry["name"]] = torch.from_numpy(np.load(io.BytesIO(zf.read(entry["file"])), allow_pickle=False))
    float_dtypes = [t.dtype for t in state.values() if t.is_floating_point()]
    if float_dtypes:
        bundle.to(float_dtypes[0])
    bundle.load_state_dict(state)
    return bundle
