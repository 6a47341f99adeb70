"""How 16-bit position rounding breaks long-range recall.

The truncated-mantissa 16-bit format keeps float32's exponent range but
only 7 fraction bits. Integers above 256 start landing on a shared grid,
and by 300K the grid step is 2,048 tokens wide. Rotary encodings computed
from those collapsed indices stop telling neighbors apart.
"""

import numpy as np

from longctx.rope import RopeConfig, relative_score, rotate
from longctx.softnum import PrecisionMode, distinct_integer_census, round_trip

print("=== Integer census: how many positions survive rounding ===")
for limit in (257, 512, 4096, 65_536, 524_288):
    distinct = distinct_integer_census(limit)
    print(
        f"  positions [0, {limit:>7,d}) -> {distinct:>5,d} distinct "
        f"({1 - distinct / limit:7.2%} collide)"
    )

print()
print("=== The grid around 300,000 ===")
for p in (299_000, 300_000, 300_017, 301_000, 302_000):
    print(f"  position {p:,d} is stored as {round_trip(float(p)):>9,.0f}")

print()
print("=== Colliding positions rotate identically ===")
cfg16 = RopeConfig(
    theta_base=75e6, head_dim=64, max_position=1 << 20, precision=PrecisionMode.REDUCED16
)
v = np.random.default_rng(0).standard_normal(64)
same = np.array_equal(rotate(v, 256, cfg16), rotate(v, 257, cfg16))
print(f"  rotate(v, 256) == rotate(v, 257) under 16-bit rounding: {same}")

cfg32 = RopeConfig(theta_base=75e6, head_dim=64, max_position=1 << 20)
same32 = np.array_equal(rotate(v, 256, cfg32), rotate(v, 257, cfg32))
print(f"  same comparison with 32-bit positions:                  {same32}")

print()
print("=== Shift invariance: the property the bug destroys ===")
# Attention scores should depend only on the distance m - n. Slide a pair
# of positions by a constant and watch both precision modes.
rng = np.random.default_rng(2)
q, k = rng.standard_normal(128), rng.standard_normal(128)
m, n, s = 300_017, 299_000, 12_345
for mode, label in ((PrecisionMode.FULL32, "32-bit"), (PrecisionMode.REDUCED16, "16-bit")):
    cfg = RopeConfig(theta_base=75e6, head_dim=128, max_position=1 << 21, precision=mode)
    a = relative_score(q, k, m, n, cfg)
    b = relative_score(q, k, m + s, n + s, cfg)
    rel = abs(a - b) / max(abs(a), abs(b))
    print(f"  {label}: score({m},{n}) = {a:+9.4f}   shifted = {b:+9.4f}   rel drift {rel:.2e}")
print()
print("  The 16-bit path reports a different relation between the same two")
print("  tokens depending on where the pair sits, which is exactly the")
print("  failure mode behind dropped digits in long-range recall.")
