"""Score comparison statistics: accuracy/SE, relative error, p-values, verdicts.

Comparisons run on per-sample reduced scores. The significance test is a
two-sided Welch's t-test (unequal variances); a seeded permutation test is
available as a robustness cross-check.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps


class InsufficientData(ValueError):
    """Fewer than two scores: mean/SE and t-tests are undefined."""


class DegenerateReference(ValueError):
    """Reference accuracy is 1.0, so relative error has a zero denominator."""


@dataclass(frozen=True)
class ComparisonStats:
    candidate_accuracy: float
    reference_accuracy: float
    relative_error_pct: float
    rel_se_pct: float
    p_value: float
    verdict: str  # Win | Tie | Loss, from the candidate's perspective
    n_candidate: int
    n_reference: int


def accuracy_se(scores: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error (sample sd, n-1 denominator, over sqrt(n))."""
    n = len(scores)
    if n < 2:
        raise InsufficientData(f"need at least 2 scores, got {n}")
    arr = np.asarray(scores, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(n))


def relative_error(
    candidate_acc: float, candidate_se: float, reference_acc: float
) -> tuple[float, float]:
    """Percent error increase of the candidate relative to the reference.

    err = 1 - accuracy; rel = 100 * (err_c - err_r) / err_r. Negative means
    the candidate errs less than the reference. The SE is scaled by the
    reference error treated as a fixed constant: 100 * se_c / err_r.
    """
    if reference_acc >= 1.0:
        raise DegenerateReference("reference accuracy is 1.0; relative error undefined")
    err_c = 1.0 - candidate_acc
    err_r = 1.0 - reference_acc
    return 100.0 * (err_c - err_r) / err_r, 100.0 * candidate_se / err_r


def p_value(
    candidate_scores: Sequence[float],
    reference_scores: Sequence[float],
    method: str = "welch",
    n_resamples: int = 10_000,
    seed: int = 0,
) -> float:
    """Two-sided p-value for a difference in mean score.

    method="welch" (default) or "permutation" (seeded resampling
    cross-check). Zero-variance pairs short-circuit: equal means give 1.0,
    unequal means 0.0.
    """
    a = np.asarray(candidate_scores, dtype=float)
    b = np.asarray(reference_scores, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientData("both samples need n >= 2")
    if method == "welch":
        if a.var(ddof=1) == 0.0 and b.var(ddof=1) == 0.0:
            return 1.0 if a.mean() == b.mean() else 0.0
        return float(sps.ttest_ind(a, b, equal_var=False).pvalue)
    if method == "permutation":
        return _permutation_p(a, b, n_resamples, seed)
    raise ValueError(f"unknown method {method!r}")


def _permutation_p(a: np.ndarray, b: np.ndarray, n_resamples: int, seed: int) -> float:
    observed = abs(a.mean() - b.mean())
    pooled = np.concatenate([a, b])
    rng = np.random.default_rng(seed)
    n_a = len(a)
    hits = 0
    for _ in range(n_resamples):
        perm = rng.permutation(pooled)
        if abs(perm[:n_a].mean() - perm[n_a:].mean()) >= observed - 1e-15:
            hits += 1
    return (hits + 1) / (n_resamples + 1)


def classify(
    candidate_scores: Sequence[float],
    reference_scores: Sequence[float],
    alpha: float = 0.05,
    method: str = "welch",
) -> ComparisonStats:
    """Full comparison: Tie when p >= alpha, else Win/Loss by mean ordering."""
    cand_mean, cand_se = accuracy_se(candidate_scores)
    ref_mean, _ = accuracy_se(reference_scores)
    p = p_value(candidate_scores, reference_scores, method=method)
    rel_pct, rel_se_pct = relative_error(cand_mean, cand_se, ref_mean)
    if p >= alpha:
        verdict = "Tie"
    elif cand_mean > ref_mean:
        verdict = "Win"
    else:
        verdict = "Loss"
    return ComparisonStats(
        candidate_accuracy=cand_mean,
        reference_accuracy=ref_mean,
        relative_error_pct=rel_pct,
        rel_se_pct=rel_se_pct,
        p_value=p,
        verdict=verdict,
        n_candidate=len(candidate_scores),
        n_reference=len(reference_scores),
    )


@dataclass(frozen=True)
class ReportEntry:
    """One comparison row keyed by task, model pair, and reasoning effort."""

    task: str
    candidate: str
    reference: str
    reasoning_effort: str
    stats: ComparisonStats

    @property
    def key(self) -> str:
        return f"{self.task}/{self.candidate}/{self.reference}/{self.reasoning_effort}"


def report_json(entries: Sequence[ReportEntry]) -> str:
    table = {
        e.key: {
            "task": e.task,
            "candidate": e.candidate,
            "reference": e.reference,
            "reasoning_effort": e.reasoning_effort,
            **asdict(e.stats),
        }
        for e in entries
    }
    return json.dumps(table, indent=2) + "\n"


def report_csv(entries: Sequence[ReportEntry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "task",
            "candidate",
            "reference",
            "reasoning_effort",
            "candidate_accuracy",
            "reference_accuracy",
            "relative_error_pct",
            "rel_se_pct",
            "p_value",
            "verdict",
            "n_candidate",
            "n_reference",
        ]
    )
    for e in entries:
        s = e.stats
        writer.writerow(
            [
                e.task,
                e.candidate,
                e.reference,
                e.reasoning_effort,
                s.candidate_accuracy,
                s.reference_accuracy,
                s.relative_error_pct,
                s.rel_se_pct,
                s.p_value,
                s.verdict,
                s.n_candidate,
                s.n_reference,
            ]
        )
    return buf.getvalue()


def report_svg(entries: Sequence[ReportEntry], path: str | Path) -> None:
    """Bar chart of relative error with SE whiskers, one bar per entry."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [f"{e.task}\n{e.candidate} ({e.reasoning_effort})" for e in entries]
    values = [e.stats.relative_error_pct for e in entries]
    errors = [e.stats.rel_se_pct for e in entries]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.6 * len(entries)), 4.5))
    x = np.arange(len(entries))
    ax.bar(x, values, yerr=errors, capsize=4, color="#4878a8")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("relative error vs reference (%)")
    fig.tight_layout()
    fig.savefig(Path(path), format="svg")
    plt.close(fig)


def write_report(entries: Sequence[ReportEntry], out_dir: str | Path) -> dict[str, Path]:
    """Emit stats.json, stats.csv, and relative_error.svg under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "stats.json",
        "csv": out / "stats.csv",
        "svg": out / "relative_error.svg",
    }
    paths["json"].write_text(report_json(entries), encoding="utf-8")
    paths["csv"].write_text(report_csv(entries), encoding="utf-8")
    report_svg(entries, paths["svg"])
    return paths
