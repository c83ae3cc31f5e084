# Walkthrough: keeping training data clean of eval samples.
#
# Exact match runs first on normalized question/answer fields, then a fuzzy
# pass with character 3-gram Jaccard similarity flags near-duplicates.

from specforge import DecontamPolicy, decontaminate, find_overlaps, normalize_text, similarity
from specforge.pipeline import QaRecord

# normalization makes "the same text" comparable
print(normalize_text("  The M4's  maximum RANGE! "))  # -> "the m4 s maximum range"

# similarity is order-robust and cheap; 1.0 only for identical gram sets
a = "the maximum effective range of the weapon"
b = "the max effective range of the weapon"
print(f"similarity: {similarity(normalize_text(a), normalize_text(b)):.3f}")

# --- a training set with two planted leaks -----------------------------------


def record(i, question, answer):
    return QaRecord(
        record_id=f"rec{i:03d}", question=question, answer=answer,
        doc_id="doc", chunk_id="doc#0", qc_status="Pass",
    )


train = [
    record(0, "What is the nine-line format used for?", "Requesting a MEDEVAC over the radio."),
    record(1, "How is a magnetic azimuth converted?", "Apply the G-M angle from the declination diagram."),
    # exact leak: question appears verbatim in the benchmark
    record(2, "What does line one of the nine-line contain?", "The pickup site grid coordinate."),
    # fuzzy leak: answer is a near-duplicate of a benchmark answer
    record(3, "Where is the pickup site given?", "Line one gives the pickup site as one grid coordinate."),
]

benchmark = {
    "radio-bench": [
        {"question": "What does line one of the nine-line contain?",
         "answer": "It contains the location of the pickup site."},
        {"question": "Which line carries the frequency?",
         "answer": "Line one gives the pickup site as a grid coordinate."},
    ]
}

policy = DecontamPolicy(fuzzy_threshold=0.80, action="remove_train")

hits = find_overlaps(train, benchmark, policy)
for hit in hits:
    print(
        f"hit: {hit.train_record_id} ~ {hit.eval_set_name}[{hit.eval_index}].{hit.field} "
        f"({hit.match_kind}, sim={hit.similarity:.3f})"
    )

cleaned, report = decontaminate(train, benchmark, policy)
print(f"\n{report.n_train_before} -> {report.n_train_after} records; removed {report.removed_record_ids}")

# soundness: the cleaned set has zero overlaps at the same policy
assert find_overlaps(cleaned, benchmark, policy) == []

# report-only mode audits without touching the training set
_, audit = decontaminate(train, benchmark, DecontamPolicy(action="report_only"))
print(f"report-only: {len(audit.hits)} hits, nothing removed")
