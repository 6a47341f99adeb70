"""Desk-scale mechanics of half-megatoken-context training.

Subpackages cover reduced-precision position rounding (softnum), rotary
position encoding and theta planning (rope), ring-scheduled chunked
attention simulation (ringsim), lookup-table memory planning (memplan),
needle-in-a-haystack evaluation (niah), and phased training-plan
manifests (recipe). A CLI exposes all of it with JSON/CSV output.
"""

__version__ = "0.1.0"

from . import memplan, niah, recipe, ringsim, rope, softnum  # noqa: E402,F401
