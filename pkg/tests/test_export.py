import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from specforge.export import (
    ALPACA_SYSTEM_LINE,
    BatchStats,
    ChatTemplate,
    ExportError,
    batch_token_stats,
    export_jsonl,
    render_alpaca,
)
from specforge.pipeline import QaRecord

GOLDEN_ALPACA = (
    "SYSTEM: Below is an instruction from a USER that describes a task. "
    "The ASSISTANT writes a response that appropriately and concisely completes the request.\n"
    "USER: What is 2+2?\n"
    "ASSISTANT: 4"
)


def record(question, answer, rid="r1"):
    return QaRecord(
        record_id=rid, question=question, answer=answer, doc_id="d", chunk_id="d#0", qc_status="Pass"
    )


class TestRenderAlpaca:
    def test_golden_string_byte_exact(self):
        assert render_alpaca(record("What is 2+2?", "4")) == GOLDEN_ALPACA

    def test_newline_in_question_preserved_verbatim(self):
        rendered = render_alpaca(record("line one\nline two", "ans"))
        assert "USER: line one\nline two\nASSISTANT: ans" in rendered

    def test_question_and_answer_are_contiguous_substrings(self):
        q, a = "Describe the procedure.", "First, do the thing."
        rendered = render_alpaca(record(q, a))
        assert q in rendered and a in rendered

    @given(
        st.tuples(st.text(min_size=1), st.text(min_size=1)),
        st.tuples(st.text(min_size=1), st.text(min_size=1)),
    )
    def test_injective_without_assistant_marker(self, pair_a, pair_b):
        marker = "\nASSISTANT: "
        if any(marker in part for part in pair_a + pair_b):
            return
        if pair_a != pair_b:
            assert render_alpaca(record(*pair_a)) != render_alpaca(record(*pair_b))


class TestExportJsonl:
    def test_three_records_three_lines(self, tmp_path):
        records = [record(f"q{i}", f"answer {i}", rid=f"r{i}") for i in range(3)]
        out = tmp_path / "out.jsonl"
        manifest = export_jsonl(records, ChatTemplate("alpaca"), out)
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        assert manifest["count"] == 3
        assert manifest["template"] == "alpaca"

    def test_reexport_identical_hash(self, tmp_path):
        records = [record("q", "a long answer", rid="r0")]
        m1 = export_jsonl(records, ChatTemplate("alpaca"), tmp_path / "a.jsonl")
        m2 = export_jsonl(records, ChatTemplate("alpaca"), tmp_path / "b.jsonl")
        assert m1["sha256"] == m2["sha256"]

    def test_empty_records_error(self, tmp_path):
        with pytest.raises(ExportError, match="nothing to export"):
            export_jsonl([], ChatTemplate("alpaca"), tmp_path / "x.jsonl")

    def test_parse_back_recovers_every_record_id_once(self, tmp_path):
        records = [record(f"q{i}", f"answer number {i}", rid=f"r{i}") for i in range(5)]
        for template in ("alpaca", "role_json"):
            out = tmp_path / f"{template}.jsonl"
            export_jsonl(records, ChatTemplate(template), out)
            ids = [json.loads(line)["record_id"] for line in out.read_text().splitlines()]
            assert sorted(ids) == sorted(r.record_id for r in records)

    def test_role_json_message_shape(self, tmp_path):
        out = tmp_path / "rj.jsonl"
        export_jsonl([record("ask", "tell")], ChatTemplate("role_json"), out)
        obj = json.loads(out.read_text().splitlines()[0])
        assert obj["messages"] == [
            {"role": "user", "content": "ask"},
            {"role": "assistant", "content": "tell"},
        ]

    def test_unknown_template_rejected(self):
        with pytest.raises(ExportError):
            ChatTemplate("harmony")

    def test_manifest_sidecar_written(self, tmp_path):
        out = tmp_path / "ds.jsonl"
        export_jsonl([record("q", "a nice answer")], ChatTemplate("alpaca"), out)
        sidecar = json.loads((tmp_path / "ds.jsonl.manifest.json").read_text())
        assert sidecar["count"] == 1 and len(sidecar["sha256"]) == 64


class TestBatchTokenStats:
    def test_paper_batch_1024(self):
        stats = batch_token_stats(1_600_000, 1024, 4096)
        assert stats.tokens_per_batch == 4_194_304

    def test_paper_batch_1536(self):
        stats = batch_token_stats(1_600_000, 1536, 4096)
        assert stats.tokens_per_batch == 6_291_456

    def test_batches_per_epoch_ceil(self):
        assert batch_token_stats(1_600_000, 1536, 4096).batches_per_epoch == 1042

    def test_exact_product_invariant(self):
        stats = batch_token_stats(10, 3, 7)
        assert stats == BatchStats(
            records_per_batch=3,
            seq_len=7,
            tokens_per_batch=21,
            batches_per_epoch=4,
            records_total=10,
        )

    def test_nonpositive_rejected(self):
        with pytest.raises(ExportError):
            batch_token_stats(0, 1024, 4096)
        with pytest.raises(ExportError):
            batch_token_stats(10, -1, 4096)


def test_alpaca_system_line_matches_template_reference():
    assert ALPACA_SYSTEM_LINE.startswith("Below is an instruction from a USER")
    assert "concisely completes the request." in ALPACA_SYSTEM_LINE
