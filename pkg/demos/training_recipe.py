"""The four-phase context-extension plan as a validated manifest.

Shows the built-in MegaBeam-Mistral-7B plan, recomputes its token
accounting, and demonstrates what the validator catches.
"""

from dataclasses import replace

from longctx.recipe import megabeam_recipe, validate

manifest = megabeam_recipe()

print(f"base model: {manifest.base_model}")
print()
print("phase  theta      budget      sequence layout")
for p in manifest.phases:
    layout = []
    for e in p.sequence_spec:
        span = f"{e.seq_len:,}" + (f"-{e.seq_len_max:,}" if e.seq_len_max else "")
        count = f"{e.sequence_count} x " if e.sequence_count else ""
        layout.append(f"{count}{span}")
    print(f"  {p.phase_id:<4} {p.rope_theta / 1e6:>4.0f}M  {p.token_budget / 1e6:>7.0f}M     "
          + "; ".join(layout))
    if p.mix:
        print("        mix: " + ", ".join(f"{k} {v:.0%}" for k, v in p.mix.items()))
    if p.checkpoint:
        print(f"        checkpoint: {p.checkpoint}")

pretraining = sum(p.token_budget for p in manifest.phases if p.phase_id != "4")
print()
print(f"pretraining total (phases 1-3): {pretraining / 1e9:.2f}B tokens, under the 2B ceiling")

print()
print("=== Independent accounting check ===")
problems = validate(manifest)
print(f"  violations in the built-in plan: {len(problems)}")
phase3 = next(p for p in manifest.phases if p.phase_id == "3")
recount = sum(e.sequence_count * e.seq_len for e in phase3.sequence_spec)
declared = sum(e.token_subtotal for e in phase3.sequence_spec)
print(f"  phase 3 recount: counts x lengths = {recount / 1e6:.1f}M, "
      f"declared subtotals = {declared / 1e6:.0f}M, budget = {phase3.token_budget / 1e6:.0f}M")
print(f"  tolerance for that phase: {phase3.subtotal_tolerance:.0%} (published figures round up)")

print()
print("=== What the validator catches ===")
broken = replace(
    manifest,
    phases=tuple(
        replace(p, rope_theta=10_000_000.0) if p.phase_id == "3" else p
        for p in manifest.phases
    ),
)
for violation in validate(broken):
    print(f"  {violation}")
