"""Entropy analytics and side-by-side comparison of coarse-vocabulary priors."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .baselines import partition_ari
from .codebook import Codebook
from .errors import FormatError, ValidationError
from .mapping import ClusterMapping, mapping_stats
from .sequence import TokenSequence, coarsen, empirical_distribution

REPORT_NOTE = (
    "entropies are empirical entropies of token sequences, "
    "not averaged entropies of a trained model's predictive distribution"
)


@dataclass(frozen=True)
class EntropyReport:
    h_bits: float
    vocab: int
    h_norm: float

    @classmethod
    def of(cls, p) -> "EntropyReport":
        p = np.asarray(p, dtype=np.float64)
        h = shannon_entropy(p)
        return cls(h, p.size, normalize_entropy(h, p.size))


def shannon_entropy(p) -> float:
    """Base-2 entropy with 0 log 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError("probability vector must be 1-D and non-empty")
    if not np.isfinite(p).all() or (p < 0).any():
        raise ValidationError("probabilities must be finite and non-negative")
    if abs(math.fsum(p.tolist()) - 1.0) > 1e-9:
        raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
    nz = p[p > 0]
    # exactly rounded sum: identical probability multisets give identical entropies
    h = -math.fsum((nz * np.log2(nz)).tolist())
    return max(h, 0.0)


def normalize_entropy(h: float, vocab: int) -> float:
    if vocab < 2:
        raise ValidationError(f"normalised entropy needs vocab >= 2, got {vocab}")
    if h < 0:
        raise ValidationError("entropy must be non-negative")
    return h / math.log2(vocab)


def _as_corpus(seqs) -> TokenSequence | None:
    if seqs is None:
        return None
    if isinstance(seqs, TokenSequence):
        return seqs
    seqs = list(seqs)
    if not seqs:
        return None
    vocabs = {s.vocab for s in seqs}
    if len(vocabs) != 1:
        raise ValidationError(f"corpus sequences disagree on vocab: {sorted(vocabs)}")
    return TokenSequence(np.concatenate([s.tokens for s in seqs]), vocabs.pop())


def _entropy_fields(seq: TokenSequence) -> dict:
    h = shannon_entropy(empirical_distribution(seq))
    return {
        "vocab": seq.vocab,
        "h_bits": h,
        "h_norm": normalize_entropy(h, seq.vocab) if seq.vocab >= 2 else None,
    }


def compare_priors(
    cb: Codebook,
    maps: Mapping[str, ClusterMapping] | Sequence[tuple[str, ClusterMapping]],
    seqs=None,
    truth=None,
) -> dict:
    items = list(maps.items()) if isinstance(maps, Mapping) else list(maps)
    for name, m in items:
        if m.n != cb.n:
            raise ValidationError(f"prior {name!r} covers {m.n} tokens, codebook has {cb.n}")
    corpus = _as_corpus(seqs)
    if corpus is not None and corpus.vocab != cb.n:
        raise ValidationError(f"corpus vocab {corpus.vocab} does not match codebook n={cb.n}")
    if truth is not None:
        truth = np.asarray(truth)
        if truth.shape != (cb.n,):
            raise ValidationError(f"truth labels have shape {truth.shape}, expected ({cb.n},)")
    if corpus is not None and len(corpus) == 0:
        corpus = None

    report: dict = {
        "note": REPORT_NOTE,
        "n": cb.n,
        "d": cb.d,
        "corpus_tokens": None if corpus is None else len(corpus),
        "fine_entropy": None if corpus is None else _entropy_fields(corpus),
        "priors": [],
    }
    for name, m in items:
        st = mapping_stats(m, cb)
        row = {
            "name": name,
            "k": m.k,
            "min_size": st["min_size"],
            "max_size": st["max_size"],
            "mean_size": m.n / m.k,
            "singletons": int((m.sizes == 1).sum()),
            "intra_mean": st["intra_mean"],
            "inter_mean": st["inter_mean"],
            "coarse_entropy": None,
            "ari": None,
        }
        if corpus is not None:
            row["coarse_entropy"] = _entropy_fields(coarsen(corpus, m))
        if truth is not None:
            row["ari"] = partition_ari(m.assign, truth)
        report["priors"].append(row)
    return report


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def render_table(report: dict) -> str:
    cols = ["name", "k", "min_size", "max_size", "singletons", "intra_mean", "inter_mean", "H_bits", "H_norm", "ari"]
    rows = []
    for p in report["priors"]:
        ce = p.get("coarse_entropy") or {}
        rows.append(
            [_fmt(p["name"]), _fmt(p["k"]), _fmt(p["min_size"]), _fmt(p["max_size"]), _fmt(p["singletons"]),
             _fmt(p["intra_mean"]), _fmt(p["inter_mean"]), _fmt(ce.get("h_bits")), _fmt(ce.get("h_norm")),
             _fmt(p["ari"])]
        )
    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c) for i, c in enumerate(cols)]
    lines = [f"# {report['note']}"]
    fe = report.get("fine_entropy")
    if fe:
        lines.append(
            f"# fine corpus: {report['corpus_tokens']} tokens, vocab {fe['vocab']}, "
            f"H={fe['h_bits']:.4f} bits, H_norm={_fmt(fe['h_norm'])}"
        )
    lines.append("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
    lines.extend("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows)
    return "\n".join(lines) + "\n"


def save_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def load_report(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid report JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or "priors" not in doc:
        raise FormatError(f"{path}: not a prior-comparison report")
    return doc
