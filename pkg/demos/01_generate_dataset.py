# Walkthrough: raw documents -> chunks -> three-stage QA pipeline -> dataset.
#
# Uses the bundled deterministic mock server, so it runs fully offline.
# Point the endpoints at a real llama.cpp/vLLM server to do this for real.

import tempfile
from pathlib import Path

from specforge import (
    ChunkPolicy,
    ModelEndpoint,
    MockInferenceServer,
    PipelineConfig,
    RuleResponder,
    chunk_document,
    load_corpus,
    run_pipeline,
)
from specforge.pipeline import write_dataset_jsonl

# --- 1. a tiny corpus on disk -----------------------------------------------

workdir = Path(tempfile.mkdtemp(prefix="specforge-demo-"))
corpus_dir = workdir / "corpus"
corpus_dir.mkdir()
(corpus_dir / "land_nav.md").write_text(
    "# Land Navigation\n\n"
    "A magnetic azimuth is measured with a lensatic compass. "
    "To convert a magnetic azimuth to a grid azimuth, apply the G-M angle "
    "from the declination diagram of the map sheet.\n"
)
(corpus_dir / "radio.md").write_text(
    "# Radio Procedure\n\n"
    "A MEDEVAC request uses the nine-line format. "
    "Line one is the location of the pickup site given as a grid coordinate.\n"
)

load = load_corpus(corpus_dir, ["**/*.md"])
print(f"loaded {len(load.documents)} documents, skipped {len(load.skipped)}")

# chunking is pure and inspectable on its own
policy = ChunkPolicy(max_chars=400, overlap_chars=40, split_boundary="sentence")
for doc in load.documents:
    chunks = chunk_document(doc, policy)
    print(f"  {doc.title}: {len(chunks)} chunk(s), ids like {chunks[0].chunk_id}")

# --- 2. a deterministic mock model for each stage ---------------------------
# Replies are keyed on request content, so reruns are byte-identical.


def qa_reply(payload):
    content = payload["messages"][0]["content"]
    topic = "azimuth" if "azimuth" in content else "MEDEVAC"
    return (
        f"Q: What does the passage say about the {topic}?\n"
        f"A: The passage explains the {topic} procedure in detail.\n\n"
        f"Q: [FIX] Shorter question on {topic}?\n"
        f"A: An answer with minor formatting issues about {topic}."
    )


responder = RuleResponder(
    [
        ("Rewrite the pair", lambda p: (
            "Q: What is the corrected question?\n"
            "A: The corrected, properly formatted answer text."
        )),
        ("Reply with your verdict", lambda p: (
            "VERDICT: FIX\nREASON: formatting" if "[FIX]" in p["messages"][0]["content"]
            else "VERDICT: PASS"
        )),
        ("question-answer pairs covering", qa_reply),
        ("high-quality summary", lambda p: "A concise summary of the source document."),
    ]
)

# --- 3. run the pipeline ------------------------------------------------------

with MockInferenceServer(responder) as server:
    endpoint = lambda name: ModelEndpoint(base_url=server.base_url, model_name=name)
    config = PipelineConfig(
        summary_endpoint=endpoint("summarizer"),
        generator_endpoint=endpoint("generator"),
        qc_endpoint=endpoint("grader"),
        chunk_policy=policy,
        n_pairs=3,
        checkpoint_dir=workdir / "checkpoints",  # interrupted runs resume from here
    )
    records, report = run_pipeline(load.documents, config)

print(
    f"\npipeline: {report.candidates} candidates -> "
    f"{report.n_pass} pass / {report.n_fix} fix / {report.n_fail} fail "
    f"-> {report.records_out} records"
)
assert report.records_out == report.n_pass + report.fix_success

dataset_path = workdir / "dataset.jsonl"
write_dataset_jsonl(records, dataset_path)
print(f"dataset written to {dataset_path}")
for record in records[:2]:
    print(f"  [{record.qc_status}] {record.question!r} <- chunk {record.chunk_id}")
