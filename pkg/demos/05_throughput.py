# Walkthrough: measuring prompt-processing and token-generation speed.
#
# The mock server streams at a configured rate, so the measurements have a
# known ground truth. Against a real llama.cpp/vLLM server the same calls
# produce the genuine hardware numbers.

from specforge import BenchConfig, ModelEndpoint, MockInferenceServer, run_bench

# pretend hardware: 0.1 s to first token, then 80 tokens/s generation
with MockInferenceServer(stream_ttft_s=0.1, stream_tokens_per_s=80.0) as server:
    endpoint = ModelEndpoint(base_url=server.base_url, model_name="demo-20b")
    config = BenchConfig(
        prompt_tokens=256,  # prefill benchmark sends this many tokens, generates 1
        gen_tokens=40,      # generation benchmark streams this many tokens
        trials=3,
        warmup_trials=1,    # excluded from the statistics
    )
    report = run_bench(endpoint, config, hardware_label="mock-rig")

print(report.text_table())
print()
print(f"expected: prompt ~{256 / 0.1:,.0f} tok/s, generation ~80 tok/s")
print(f"per-trial generation numbers: {[f'{v:.1f}' for v in report.generation.values]}")
