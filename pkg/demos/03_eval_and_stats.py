# Walkthrough: judge-graded evaluation with epochs, then significance testing.
#
# Two mock candidates answer the same task; the judge grades C/P/I with
# partial credit; Welch's t-test on the per-sample scores names a winner
# only when p < 0.05.

import tempfile
from pathlib import Path

from specforge import (
    EvalRunConfig,
    EvalSample,
    EvalTask,
    ModelEndpoint,
    MockInferenceServer,
    classify,
    run_eval,
    save_run,
)
from specforge.harness import render_grade_line, replay_scores, load_run
from specforge.stats import ReportEntry, write_report

task = EvalTask(
    name="demo-task",
    samples=tuple(
        EvalSample(question=f"sample-{i:02d}: state fact {i}?", answer=f"fact {i}") for i in range(24)
    ),
    epochs=2,  # every sample answered twice with differing seeds
)


def judged_server(strength):
    """Candidate echoes; judge grades better the higher the strength."""

    def respond(payload):
        content = payload["messages"][0]["content"]
        if "[BEGIN DATA]" not in content:
            return f"answer: {content}"
        index = next(i for i in range(24) if f"sample-{i:02d}" in content)
        letter = "C" if index % 4 < strength else ("P" if index % 2 == 0 else "I")
        return f"The submission tracks the criterion. {render_grade_line(letter)}"

    return MockInferenceServer(respond)


workdir = Path(tempfile.mkdtemp(prefix="specforge-demo-"))
runs = {}
for label, strength in (("strong-model", 3), ("weak-model", 1)):
    with judged_server(strength) as server:
        candidate = ModelEndpoint(base_url=server.base_url, model_name=label)
        judge = ModelEndpoint(base_url=server.base_url, model_name="judge-70b")
        run = run_eval(task, candidate, judge, EvalRunConfig(reasoning_effort="medium"))
    runs[label] = run
    save_run(run, workdir / label)
    print(f"{label}: accuracy {run.accuracy:.3f} over {len(run.samples)} scored samples")

# every transcript is persisted; replay re-parses the judge text and must
# reproduce the reduced scores exactly
assert replay_scores(load_run(workdir / "strong-model")) == runs["strong-model"].reduced_scores

stats = classify(runs["strong-model"].reduced_scores, runs["weak-model"].reduced_scores, alpha=0.05)
print(
    f"\nstrong vs weak: rel_err {stats.relative_error_pct:+.1f}% ± {stats.rel_se_pct:.1f}%, "
    f"p={stats.p_value:.4f} -> {stats.verdict}"
)

entry = ReportEntry(
    task=task.name,
    candidate="strong-model",
    reference="weak-model",
    reasoning_effort="medium",
    stats=stats,
)
paths = write_report([entry], workdir / "report")
print(f"report (JSON/CSV/SVG) written to {paths['svg'].parent}")
