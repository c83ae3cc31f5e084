"""Train/eval separation via exact-match and fuzzy-match search.

Both passes compare question fields to question fields and answer fields to
answer fields, after normalization. Fuzzy matching is character 3-gram
Jaccard; the inverted gram index only prunes pairs sharing zero grams, which
cannot reach any positive threshold, so indexed search is exactly equivalent
to the all-pairs scan.
"""

from __future__ import annotations

import json
import string
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

if TYPE_CHECKING:
    from .pipeline import QaRecord

NORMALIZE_FLAGS = ("lowercase", "collapse_whitespace", "strip_punct")
FIELDS = ("question", "answer")

_PUNCT_TO_SPACE = str.maketrans({c: " " for c in string.punctuation})


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class DecontamPolicy:
    fuzzy_threshold: float = 0.80
    normalize: tuple[str, ...] = NORMALIZE_FLAGS
    action: str = "remove_train"  # or "report_only"

    def __post_init__(self):
        if not 0.0 < self.fuzzy_threshold <= 1.0:
            raise PolicyError("fuzzy_threshold must be in (0, 1]")
        unknown = set(self.normalize) - set(NORMALIZE_FLAGS)
        if unknown:
            raise PolicyError(f"unknown normalize flags: {sorted(unknown)}")
        if self.action not in ("remove_train", "report_only"):
            raise PolicyError(f"unknown action {self.action!r}")


@dataclass(frozen=True)
class OverlapHit:
    train_record_id: str
    eval_set_name: str
    eval_index: int
    field: str  # question | answer
    match_kind: str  # exact | fuzzy
    similarity: float


@dataclass
class DecontamReport:
    hits: list[OverlapHit]
    removed_record_ids: list[str]
    n_train_before: int
    n_train_after: int
    action: str

    def write_hits_jsonl(self, path: str | Path) -> None:
        lines = [json.dumps(asdict(h), ensure_ascii=False) for h in self.hits]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def normalize_text(s: str, flags: Iterable[str] = NORMALIZE_FLAGS) -> str:
    """Apply the selected normalization flags; idempotent in any combination."""
    flags = set(flags)
    unknown = flags - set(NORMALIZE_FLAGS)
    if unknown:
        raise PolicyError(f"unknown normalize flags: {sorted(unknown)}")
    if "lowercase" in flags:
        s = s.lower()
    if "strip_punct" in flags:
        s = s.translate(_PUNCT_TO_SPACE)
    if "collapse_whitespace" in flags:
        s = " ".join(s.split())
    return s


def char_ngrams(s: str, n: int = 3) -> frozenset[str]:
    return frozenset(s[i : i + n] for i in range(len(s) - n + 1))


def similarity(a: str, b: str) -> float:
    """Character 3-gram Jaccard; strings shorter than 3 chars fall back to equality."""
    if len(a) < 3 or len(b) < 3:
        return 1.0 if a == b else 0.0
    grams_a = char_ngrams(a)
    grams_b = char_ngrams(b)
    return len(grams_a & grams_b) / len(grams_a | grams_b)


def find_overlaps(
    train: Sequence["QaRecord"],
    eval_sets: Mapping[str, Sequence[Mapping[str, str]]],
    policy: DecontamPolicy = DecontamPolicy(),
) -> list[OverlapHit]:
    """All train/eval overlaps: exact pass first, then a fuzzy pass at the
    policy threshold. At most one hit per (train record, eval sample, field).
    Hit order is canonical: (train id, eval set, eval index, field).
    """
    hits: list[OverlapHit] = []
    train_norm = [
        {f: normalize_text(getattr(rec, f), policy.normalize) for f in FIELDS} for rec in train
    ]
    for set_name in sorted(eval_sets):
        samples = eval_sets[set_name]
        eval_norm = [
            {f: normalize_text(str(sample[f]), policy.normalize) for f in FIELDS}
            for sample in samples
        ]
        for fld in FIELDS:
            # exact pass: normalized-equality lookup
            exact_index: dict[str, list[int]] = defaultdict(list)
            for j, sample in enumerate(eval_norm):
                exact_index[sample[fld]].append(j)
            exact_pairs: set[tuple[int, int]] = set()
            for i, rec in enumerate(train_norm):
                for j in exact_index.get(rec[fld], ()):
                    exact_pairs.add((i, j))
                    hits.append(
                        OverlapHit(
                            train_record_id=train[i].record_id,
                            eval_set_name=set_name,
                            eval_index=j,
                            field=fld,
                            match_kind="exact",
                            similarity=1.0,
                        )
                    )
            # fuzzy pass: only pairs sharing at least one 3-gram can clear a
            # positive threshold; pairs with a <3-char side can only match
            # exactly, which the exact pass already reported
            eval_grams = [char_ngrams(sample[fld]) for sample in eval_norm]
            gram_index: dict[str, list[int]] = defaultdict(list)
            for j, grams in enumerate(eval_grams):
                for gram in grams:
                    gram_index[gram].append(j)
            for i, rec in enumerate(train_norm):
                text = rec[fld]
                train_grams = char_ngrams(text)
                candidates: set[int] = set()
                for gram in train_grams:
                    candidates.update(gram_index.get(gram, ()))
                for j in sorted(candidates):
                    if (i, j) in exact_pairs:
                        continue
                    other = eval_grams[j]
                    sim = len(train_grams & other) / len(train_grams | other)
                    if sim >= policy.fuzzy_threshold:
                        hits.append(
                            OverlapHit(
                                train_record_id=train[i].record_id,
                                eval_set_name=set_name,
                                eval_index=j,
                                field=fld,
                                match_kind="fuzzy",
                                similarity=sim,
                            )
                        )
    hits.sort(key=lambda h: (h.train_record_id, h.eval_set_name, h.eval_index, h.field))
    return hits


def decontaminate(
    train: Sequence["QaRecord"],
    eval_sets: Mapping[str, Sequence[Mapping[str, str]]],
    policy: DecontamPolicy = DecontamPolicy(),
) -> tuple[list["QaRecord"], DecontamReport]:
    """Remove every train record appearing in any hit (eval sets are fixed).

    With action="report_only" the train set is returned untouched. After
    removal the overlap search is re-run as a soundness post-check.
    """
    train = list(train)
    hits = find_overlaps(train, eval_sets, policy)
    if policy.action == "report_only":
        return train, DecontamReport(
            hits=hits,
            removed_record_ids=[],
            n_train_before=len(train),
            n_train_after=len(train),
            action=policy.action,
        )
    flagged = {h.train_record_id for h in hits}
    cleaned = [rec for rec in train if rec.record_id not in flagged]
    residual = find_overlaps(cleaned, eval_sets, policy)
    if residual:
        raise AssertionError(f"decontamination post-check failed: {len(residual)} residual hits")
    report = DecontamReport(
        hits=hits,
        removed_record_ids=sorted(flagged),
        n_train_before=len(train),
        n_train_after=len(cleaned),
        action=policy.action,
    )
    return cleaned, report


def load_eval_set(path: str | Path) -> list[dict]:
    """Read an eval set from JSONL lines of {"question", "answer", ...}."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            for fld in FIELDS:
                if fld not in obj:
                    raise ValueError(f"{path}:{lineno}: missing {fld!r} field")
            samples.append(obj)
    return samples
