"""Needle-in-a-haystack: generating cases, scoring answers, running grids.

No model endpoint required; deterministic stub clients stand in for one.
Point run_grid at an HttpCompletionClient to evaluate something real.
"""

from longctx.niah import (
    DropLastDigitStub,
    EchoStub,
    NiahCase,
    build_prompt,
    generate_case,
    grid_csv,
    run_grid,
    score,
)

print("=== One case ===")
case = NiahCase(haystack_tokens=1200, depth_percent=35.0, needle_payload="7418118", seed=4)
gen = generate_case(case)
print(f"  target {case.haystack_tokens} tokens, generated ~{gen.estimated_tokens:.0f}")
print(f"  needle is sentence {gen.needle_sentence_index}, "
      f"char offset {gen.needle_char_offset} of {len(gen.document)}")
start = max(0, gen.needle_char_offset - 60)
print(f"  ...{gen.document[start : gen.needle_char_offset + 70]}...")

print()
print("=== Scoring semantics ===")
for answer in ("The number is 7418118.", "I found 741811", "maybe 9999999?", "no idea"):
    result = score("7418118", answer)
    print(f"  {answer!r:<28} -> {result.verdict.value:<9} (prefix match {result.matched_prefix_len})")
print("  'truncated' flags a leading prefix of at least half the payload:")
print("  the signature of position-precision loss, not ordinary wrongness.")

print()
print("=== Grids with stub clients ===")
print("  echo stub (a perfect reader):")
result = run_grid([600, 1200], [0, 25, 50, 75, 100], 2, EchoStub(), base_seed=1)
print("\n".join("    " + line for line in grid_csv(result).strip().splitlines()))

print("  drop-last-digit stub (a reader with the precision bug):")
result = run_grid([600, 1200], [0, 25, 50, 75, 100], 2, DropLastDigitStub(), base_seed=1)
print("\n".join("    " + line for line in grid_csv(result, metric="truncated").strip().splitlines()))

print()
print("=== What a prompt looks like ===")
prompt = build_prompt(gen)
print(f"  {len(prompt)} chars ending with: ...{prompt[-90:]!r}")
