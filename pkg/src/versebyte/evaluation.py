"""Corpus-level BLEU-4 and side-by-side translation comparison reports.

Tokenization is whitespace splitting after trimming; scores are reported
on the [0, 1] scale. Counts are pooled over the whole corpus per n-gram
order, so the score is invariant under consistent segment reordering.
"""

import html as html_module
import json
import math
from collections import Counter
from dataclasses import dataclass

from .model import ModelParams, beam_decode, greedy_decode
from .tokenizer import decode as decode_ids
from .tokenizer import encode, tag_source

SMOOTHING_MODES = ("none", "add_one")


def ngram_clip_counts(hyp_tokens, ref_tokens, n: int) -> tuple[int, int]:
    """Clipped n-gram matches and the hypothesis n-gram total for one segment."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    total = max(0, len(hyp_tokens) - n + 1)
    if total == 0:
        return 0, 0
    hyp_counts = Counter(tuple(hyp_tokens[i:i + n]) for i in range(total))
    ref_counts = Counter(tuple(ref_tokens[i:i + n])
                         for i in range(max(0, len(ref_tokens) - n + 1)))
    matched = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
    return matched, total


@dataclass
class BleuReport:
    score: float
    precisions: list[float]
    brevity_penalty: float
    hypothesis_length: int
    reference_length: int
    segment_count: int
    smoothing: str

    def to_dict(self) -> dict:
        return {"score": self.score, "precisions": self.precisions,
                "brevity_penalty": self.brevity_penalty,
                "hypothesis_length": self.hypothesis_length,
                "reference_length": self.reference_length,
                "segment_count": self.segment_count, "smoothing": self.smoothing}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def corpus_bleu(hypotheses, references, max_n: int = 4,
                smoothing: str = "none") -> BleuReport:
    """BLEU over whitespace tokens with uniform 1/max_n weights.

    add_one smoothing substitutes (matched+1)/(total+1) for orders n >= 2
    whose pooled match count is zero; order 1 is never smoothed. An order
    with no hypothesis n-grams at all (every segment shorter than n) counts
    as vacuously perfect, so identity corpora always score 1.0. An empty
    hypothesis corpus collapses the penalty, precisions, and score to zero.
    """
    if smoothing not in SMOOTHING_MODES:
        raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}, got {smoothing!r}")
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    hypotheses = list(hypotheses)
    references = list(references)
    if not hypotheses:
        raise ValueError("empty corpus")
    if len(hypotheses) != len(references):
        raise ValueError(f"segment count mismatch: {len(hypotheses)} hypotheses "
                         f"vs {len(references)} references")

    hyp_tokens = [h.split() for h in hypotheses]
    ref_tokens = [r.split() for r in references]
    hyp_len = sum(len(t) for t in hyp_tokens)
    ref_len = sum(len(t) for t in ref_tokens)

    precisions = []
    for n in range(1, max_n + 1):
        matched = 0
        total = 0
        for hyp, ref in zip(hyp_tokens, ref_tokens):
            seg_matched, seg_total = ngram_clip_counts(hyp, ref, n)
            matched += seg_matched
            total += seg_total
        if smoothing == "add_one" and n >= 2 and matched == 0:
            matched += 1
            total += 1
        if total > 0:
            precisions.append(matched / total)
        else:
            # No n-grams of this order exist anywhere in the hypothesis
            # corpus (every segment shorter than n): vacuously perfect, so
            # identity corpora of short segments still score 1.0. An empty
            # hypothesis corpus collapses instead.
            precisions.append(1.0 if hyp_len > 0 else 0.0)

    if hyp_len == 0:
        brevity_penalty = 0.0
    elif hyp_len > ref_len:
        brevity_penalty = 1.0
    else:
        brevity_penalty = math.exp(1.0 - ref_len / hyp_len)

    if any(p == 0.0 for p in precisions) or hyp_len == 0:
        score = 0.0
    else:
        score = brevity_penalty * math.exp(
            sum(math.log(p) for p in precisions) / max_n)

    return BleuReport(score=score, precisions=precisions,
                      brevity_penalty=brevity_penalty,
                      hypothesis_length=hyp_len, reference_length=ref_len,
                      segment_count=len(hypotheses), smoothing=smoothing)


@dataclass
class ComparisonRow:
    verse_id: str
    source_lang: str
    target_lang: str
    source_text: str
    reference_text: str
    model_text: str

    def to_dict(self) -> dict:
        return {"verse_id": self.verse_id, "source_lang": self.source_lang,
                "target_lang": self.target_lang, "source_text": self.source_text,
                "reference_text": self.reference_text, "model_text": self.model_text}

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonRow":
        return cls(**{k: d[k] for k in ("verse_id", "source_lang", "target_lang",
                                        "source_text", "reference_text", "model_text")})


def translate_text(params: ModelParams, source_text: str, target_lang: str,
                   beam_width: int = 1, max_len: int = 256,
                   length_penalty: float = 0.0) -> str:
    src_ids = encode(tag_source(source_text, target_lang), append_eos=True)
    # the decoder input carries one start symbol ahead of the generated
    # bytes, so generation can never exceed max_seq_len - 1 positions
    max_len = min(max_len, params.config.max_seq_len - 1)
    if beam_width > 1:
        out_ids = beam_decode(params, src_ids, beam_width, max_len, length_penalty)
    else:
        out_ids = greedy_decode(params, src_ids, max_len)
    return decode_ids(out_ids)


def evaluate_model(params: ModelParams, examples, beam_width: int = 1,
                   max_len: int = 256, length_penalty: float = 0.0,
                   smoothing: str = "none") -> tuple[BleuReport, list[ComparisonRow]]:
    """Decode every test example and score the corpus.

    A decode failure is recorded as an empty translation for that row
    rather than aborting the run.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("empty test split")
    rows = []
    for ex in examples:
        try:
            model_text = translate_text(params, ex.source_text, ex.target_lang,
                                        beam_width, max_len, length_penalty)
        except Exception:
            model_text = ""
        rows.append(ComparisonRow(
            verse_id=ex.verse_id.render(), source_lang=ex.source_lang,
            target_lang=ex.target_lang, source_text=ex.source_text,
            reference_text=ex.target_text, model_text=model_text))
    rows.sort(key=lambda r: (r.target_lang, r.verse_id))
    report = corpus_bleu([r.model_text for r in rows],
                         [r.reference_text for r in rows], smoothing=smoothing)
    return report, rows


_TEXT_COLUMNS = ("verse_id", "languages", "reference_text", "model_text")


def _one_line(text: str) -> str:
    return " ".join(text.split())


def render_comparison(rows, fmt: str = "text") -> str:
    """Render rows as a text table, an HTML table, or a lossless JSON array."""
    rows = list(rows)
    if fmt == "json":
        return json.dumps([r.to_dict() for r in rows], ensure_ascii=False, indent=2)
    if fmt == "text":
        cells = [[r.verse_id, f"{r.source_lang}->{r.target_lang}",
                  _one_line(r.reference_text), _one_line(r.model_text)] for r in rows]
        widths = [max([len(h)] + [len(c[i]) for c in cells])
                  for i, h in enumerate(_TEXT_COLUMNS)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(_TEXT_COLUMNS, widths)).rstrip(),
                 "  ".join("-" * w for w in widths)]
        for c in cells:
            lines.append("  ".join(v.ljust(w) for v, w in zip(c, widths)).rstrip())
        return "\n".join(lines) + "\n"
    if fmt == "html":
        esc = html_module.escape
        lines = ["<table>", "  <tr>"
                 + "".join(f"<th>{h}</th>" for h in _TEXT_COLUMNS) + "</tr>"]
        for r in rows:
            lines.append(
                "  <tr>" + f"<td>{esc(r.verse_id)}</td>"
                + f"<td>{esc(r.source_lang)}-&gt;{esc(r.target_lang)}</td>"
                + f"<td>{esc(r.reference_text)}</td>"
                + f"<td>{esc(r.model_text)}</td>" + "</tr>")
        lines.append("</table>")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected text, html, or json")
