import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from specforge.client import ModelEndpoint
from specforge.harness import (
    DEFAULT_TASK_EPOCHS,
    GRADE_SCORES,
    EvalRunConfig,
    EvalSample,
    EvalTask,
    GradeParseError,
    TaskFormatError,
    default_judge_prompt,
    generate_candidate,
    grade_from_judge_text,
    judge_grade,
    load_run,
    load_task,
    parse_grade,
    reduce_epochs,
    render_grade_line,
    replay_scores,
    run_eval,
    save_run,
)
from specforge.mock_server import MockInferenceServer, RuleResponder
from specforge.stats import classify


def endpoint_for(server, name="candidate-model", retries=0):
    return ModelEndpoint(base_url=server.base_url, model_name=name, max_retries=retries)


def write_task(tmp_path, rows, name="demo-task"):
    path = tmp_path / f"{name}.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


class TestLoadTask:
    def test_three_line_task(self, tmp_path):
        rows = [{"question": f"q{i}?", "answer": f"a{i}"} for i in range(3)]
        task = load_task(write_task(tmp_path, rows))
        assert len(task.samples) == 3
        assert task.epochs == 1
        assert task.samples[0].metadata == {"category": None, "difficulty": None, "reference": None}

    def test_missing_answer_names_line(self, tmp_path):
        rows = [{"question": "q1?", "answer": "a1"}, {"question": "q2?"}]
        with pytest.raises(TaskFormatError, match=r":2.*answer"):
            load_task(write_task(tmp_path, rows))

    def test_epochs_override(self, tmp_path):
        rows = [{"question": "q?", "answer": "a"}]
        assert load_task(write_task(tmp_path, rows), epochs_override=3).epochs == 3

    def test_known_task_names_carry_default_epochs(self, tmp_path):
        assert DEFAULT_TASK_EPOCHS == {
            "combat-arms": 3,
            "combat-medic": 2,
            "cyber": 3,
            "mil-bench-5k": 1,
        }
        rows = [{"question": "q?", "answer": "a"}]
        task = load_task(write_task(tmp_path, rows, name="combat-arms"))
        assert task.epochs == 3

    def test_metadata_captured(self, tmp_path):
        rows = [{"question": "q?", "answer": "a", "category": "compliance", "difficulty": "hard"}]
        task = load_task(write_task(tmp_path, rows))
        assert task.samples[0].metadata["category"] == "compliance"
        assert task.samples[0].metadata["reference"] is None

    def test_empty_task_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(TaskFormatError):
            load_task(path)


class TestParseGrade:
    def test_single_match_after_reasoning(self):
        assert parse_grade("step by step thinking... GRADE: I") == "I"

    def test_last_occurrence_wins(self):
        assert parse_grade("GRADE: C ... on reflection GRADE: P") == "P"

    def test_lowercase_strict_fails_lenient_passes(self):
        with pytest.raises(GradeParseError):
            parse_grade("grade: c")
        assert parse_grade("grade: c", lenient=True) == "C"

    def test_no_marker(self):
        with pytest.raises(GradeParseError):
            parse_grade("the submission looks correct to me")

    def test_letter_must_stand_alone(self):
        with pytest.raises(GradeParseError):
            parse_grade("GRADE: Correct")

    def test_score_mapping(self):
        assert GRADE_SCORES == {"C": 1.0, "P": 0.5, "I": 0.0}

    def test_round_trip_all_letters(self):
        for letter in "CPI":
            assert parse_grade(render_grade_line(letter)) == letter

    @given(
        st.text(max_size=80).filter(lambda s: "GRADE:" not in s.upper()),
        st.sampled_from("CPI"),
        st.text(max_size=40).filter(lambda s: "GRADE:" not in s.upper()),
    )
    def test_fuzzed_transcripts(self, prefix, letter, suffix):
        text = f"{prefix}\n{render_grade_line(letter)}\n{suffix}"
        assert parse_grade(text) == letter

    @given(st.sampled_from("CPI"), st.sampled_from("CPI"))
    def test_fuzzed_last_occurrence(self, first, last):
        text = f"{render_grade_line(first)} but wait {render_grade_line(last)}"
        assert parse_grade(text) == last


class TestJudgePrompt:
    def test_framing_is_byte_exact(self):
        prompt = default_judge_prompt()
        assert prompt.startswith(
            "You are assessing a submitted answer on a given task based on a criterion."
        )
        assert "[BEGIN DATA]\n***\n[Task]: {question}\n***\n[Submission]: {answer}\n***\n"
        "[Criterion]: {criterion}\n***\n[END DATA]" in prompt
        assert "'GRADE: $LETTER' (without quotes) where LETTER is one of CPI." in prompt
        assert prompt.endswith("formatted as 'GRADE: $LETTER' (without quotes) where LETTER is one of CPI.")

    def test_substitution_keeps_framing(self):
        prompt = default_judge_prompt().format(question="Q!", answer="S!", criterion="C!")
        assert "[Task]: Q!" in prompt and "[Submission]: S!" in prompt and "[Criterion]: C!" in prompt


class TestGenerateCandidate:
    def test_echo_and_no_system_message(self):
        with MockInferenceServer() as server:
            sample = EvalSample(question="What is the grid?", answer="MGRS 123")
            out = generate_candidate(sample, endpoint_for(server), "medium", seed=7)
            payload = server.requests[0]["payload"]
        assert out == "What is the grid?"
        assert [m["role"] for m in payload["messages"]] == ["user"]
        assert payload["seed"] == 7
        assert payload["reasoning_effort"] == "medium"


class TestJudgeGrade:
    def test_correct(self):
        responder = RuleResponder([("[Submission]", "The answer matches. GRADE: C")])
        with MockInferenceServer(responder) as server:
            grade = judge_grade("q?", "submission", "criterion", endpoint_for(server))
        assert (grade.letter, grade.score, grade.ungraded) == ("C", 1.0, False)

    def test_partial(self):
        responder = RuleResponder([("[Submission]", "GRADE: P")])
        with MockInferenceServer(responder) as server:
            grade = judge_grade("q?", "s", "c", endpoint_for(server))
        assert grade.score == 0.5

    def test_no_marker_twice_gives_ungraded_i(self):
        responder = RuleResponder([("[Submission]", "no grade here at all")])
        with MockInferenceServer(responder) as server:
            grade = judge_grade("q?", "s", "c", endpoint_for(server))
            assert len(server.requests) == 2
        assert (grade.letter, grade.score, grade.ungraded) == ("I", 0.0, True)

    def test_judge_never_sees_candidate_model_name(self):
        responder = RuleResponder([("[Submission]", "GRADE: C")])
        with MockInferenceServer(responder) as server:
            judge_grade("q?", "some candidate output", "c", endpoint_for(server, name="judge-model"))
            content = json.dumps(server.requests[0]["payload"]["messages"])
        assert "candidate-model" not in content


class TestReduceEpochs:
    def test_identity(self):
        assert reduce_epochs([1.0]) == 1.0

    def test_hand_mean(self):
        assert reduce_epochs([1.0, 0.5, 0.0]) == 0.5

    def test_zero(self):
        assert reduce_epochs([0.0, 0.0]) == 0.0

    def test_median_and_max(self):
        assert reduce_epochs([0.0, 0.5, 1.0], "median") == 0.5
        assert reduce_epochs([0.0, 0.5, 1.0], "max") == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            reduce_epochs([])


def graded_responder():
    """Candidate echoes; judge grades C/P/I cyclically by sample id baked
    into the submission text."""

    def respond(payload):
        content = payload["messages"][0]["content"]
        if "[BEGIN DATA]" in content:
            for i in range(40):
                if f"sample-{i:02d}" in content:
                    return f"reasoning... {render_grade_line('CPI'[i % 3])}"
            return "GRADE: I"
        return content  # candidate echo

    return respond


def make_task(n=20, epochs=3):
    samples = tuple(
        EvalSample(question=f"sample-{i:02d} question?", answer=f"gold answer {i}") for i in range(n)
    )
    return EvalTask(name="unit-task", samples=samples, epochs=epochs)


class TestRunEval:
    def test_exact_epoch_times_samples_scored(self):
        task = make_task(20, 3)
        with MockInferenceServer(graded_responder()) as server:
            run = run_eval(task, endpoint_for(server), endpoint_for(server, "judge-model"))
        assert len(run.samples) == 60
        assert len(run.reduced_scores) == 20

    def test_hand_computed_reduction(self):
        task = make_task(6, 2)
        with MockInferenceServer(graded_responder()) as server:
            run = run_eval(task, endpoint_for(server), endpoint_for(server, "judge-model"))
        # judge grades depend only on sample id: C,P,I cycle; epochs agree,
        # so the reduced score equals the single-epoch score
        assert run.reduced_scores == [1.0, 0.5, 0.0, 1.0, 0.5, 0.0]
        assert run.accuracy == pytest.approx(0.5)

    def test_seeds_differ_across_epochs(self):
        task = make_task(2, 3)
        with MockInferenceServer(graded_responder()) as server:
            run = run_eval(task, endpoint_for(server), endpoint_for(server, "judge-model"))
        seeds = {(s.sample_index, s.seed) for s in run.samples}
        assert len(seeds) == 6
        for s in run.samples:
            assert s.seed == s.epoch

    def test_errored_sample_scores_zero_and_run_completes(self):
        def respond(payload):
            content = payload["messages"][0]["content"]
            if "sample-01" in content and "[BEGIN DATA]" not in content:
                return {"status": 500}
            return graded_responder()(payload)

        task = make_task(4, 1)
        with MockInferenceServer(respond) as server:
            run = run_eval(task, endpoint_for(server), endpoint_for(server, "judge-model"))
        errored = [s for s in run.samples if s.errored]
        assert len(errored) == 1
        assert errored[0].sample_index == 1
        assert errored[0].grade.score == 0.0
        assert run.reduced_scores[1] == 0.0
        assert run.errored_fraction == 0.25
        assert not run.valid_for_stats

    def test_temperature_default_by_epochs(self):
        task = make_task(2, 2)
        with MockInferenceServer(graded_responder()) as server:
            run_eval(task, endpoint_for(server), endpoint_for(server, "judge-model"))
            cand_payloads = [
                r["payload"]
                for r in server.requests
                if "[BEGIN DATA]" not in r["payload"]["messages"][0]["content"]
            ]
        assert all(p["temperature"] == 1.0 for p in cand_payloads)

    def test_on_sample_streams_every_unit(self):
        task = make_task(5, 2)
        seen = []
        with MockInferenceServer(graded_responder()) as server:
            run = run_eval(
                task,
                endpoint_for(server),
                endpoint_for(server, "judge-model"),
                on_sample=seen.append,
            )
        assert len(seen) == 10
        assert sorted(seen, key=lambda s: (s.sample_index, s.epoch)) == run.samples

    def test_judge_parse_retry_then_ungraded(self):
        calls = {"n": 0}

        def respond(payload):
            content = payload["messages"][0]["content"]
            if "[BEGIN DATA]" in content:
                calls["n"] += 1
                return "never a grade"
            return content

        task = make_task(1, 1)
        with MockInferenceServer(respond) as server:
            run = run_eval(task, endpoint_for(server), endpoint_for(server, "judge-model"))
        assert calls["n"] == 2
        assert run.samples[0].grade.ungraded
        assert run.reduced_scores == [0.0]


class TestPersistenceAndReplay:
    def run_and_save(self, tmp_path, n=8, epochs=2):
        task = make_task(n, epochs)
        with MockInferenceServer(graded_responder()) as server:
            run = run_eval(task, endpoint_for(server), endpoint_for(server, "judge-model"))
        run_dir = save_run(run, tmp_path / "run")
        return run, run_dir

    def test_run_dir_layout(self, tmp_path):
        _, run_dir = self.run_and_save(tmp_path)
        assert (run_dir / "run.json").exists()
        assert (run_dir / "samples.jsonl").exists()
        assert (run_dir / "scores.jsonl").exists()

    def test_load_round_trip(self, tmp_path):
        run, run_dir = self.run_and_save(tmp_path)
        loaded = load_run(run_dir)
        assert loaded.reduced_scores == run.reduced_scores
        assert loaded.samples == run.samples
        assert loaded.config_hash == run.config_hash

    def test_replay_reproduces_scores_and_stats(self, tmp_path):
        run, run_dir = self.run_and_save(tmp_path)
        replayed = replay_scores(load_run(run_dir))
        assert replayed == run.reduced_scores
        reference = [random.Random(1).random() for _ in run.reduced_scores]
        assert classify(replayed, reference) == classify(run.reduced_scores, reference)


def test_grade_from_judge_text_handles_garbage():
    grade = grade_from_judge_text("total nonsense")
    assert grade.ungraded and grade.score == 0.0


def test_eval_run_config_validation():
    with pytest.raises(ValueError):
        EvalRunConfig(reduction="mode")
