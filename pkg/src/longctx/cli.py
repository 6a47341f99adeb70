"""Command-line entry point with machine-readable JSON/CSV output.

Exit codes: 0 success, 1 domain error (JSON error object on stderr),
2 usage error (argparse). Success output on stdout is exactly one JSON
document or one CSV table. Identical argv produce byte-identical output
when --no-timestamp is given; otherwise a timestamp field is included.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import memplan, niah, recipe, ringsim, rope, softnum

SCHEMA_VERSION = recipe.SCHEMA_VERSION


def _print_json(doc: dict, args) -> None:
    if not args.no_timestamp:
        doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _parse_number_list(text: str, caster):
    try:
        return [caster(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise ValueError(f"cannot parse list {text!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_census(args) -> None:
    distinct = softnum.distinct_integer_census(args.limit)
    _print_json(
        {
            "command": "census",
            "limit": args.limit,
            "distinct": distinct,
            "collision_rate": 1.0 - distinct / args.limit,
        },
        args,
    )


def _cmd_rope_plan(args) -> None:
    candidates = _parse_number_list(args.candidates, float)
    plan = rope.plan_theta(args.context_len, candidates, head_dim=args.head_dim)
    _print_json(
        {
            "command": "rope-plan",
            "context_len": plan.context_len,
            "head_dim": plan.head_dim,
            "lower_bound": plan.lower_bound,
            "recommended": plan.recommended,
            "candidates": [
                {
                    "theta": c.theta,
                    "bound_ratio": c.bound_ratio,
                    "fraction_complete": c.fraction_complete,
                    "classification": c.classification.value,
                }
                for c in plan.candidates
            ],
        },
        args,
    )


def _cmd_rope_report(args) -> None:
    cfg = rope.RopeConfig(
        theta_base=args.theta_base, head_dim=args.head_dim, max_position=args.max_position
    )
    report = rope.rotation_report(cfg)
    sys.stdout.write("pair_index,inv_freq,wavelength,complete\n")
    for dim in report.dims:
        sys.stdout.write(
            f"{dim.pair_index},{dim.inv_freq!r},{dim.wavelength!r},"
            f"{str(dim.completes_full_rotation).lower()}\n"
        )


def _parse_segments(spec: str, seq_len: int) -> np.ndarray:
    lengths = _parse_number_list(spec, int)
    if sum(lengths) != seq_len or any(n < 1 for n in lengths):
        raise ValueError(f"segment lengths {lengths} must be positive and sum to {seq_len}")
    return np.repeat(np.arange(len(lengths)), lengths)


def _cmd_ringsim(args) -> None:
    rng = np.random.default_rng(args.seed)
    if args.segments:
        segment_ids = _parse_segments(args.segments, args.seq_len)
        problem = ringsim.AttentionProblem(
            q=rng.standard_normal((args.seq_len, args.head_dim)),
            k=rng.standard_normal((args.seq_len, args.head_dim)),
            v=rng.standard_normal((args.seq_len, args.head_dim)),
            segment_ids=segment_ids,
        )
    else:
        problem = ringsim.random_problem(args.seq_len, args.head_dim, rng, num_segments=1)
    mesh = ringsim.RingMesh(
        device_count=args.devices, query_chunk=args.q_chunk, kv_chunk=args.kv_chunk
    )
    out, trace = ringsim.ring_attention(problem, mesh)
    reference = ringsim.exact_attention(problem)
    if args.dump_weights:
        weights = ringsim.attention_weights(problem)
        np.savetxt(args.dump_weights, weights, delimiter=",")
    _print_json(
        {
            "command": "ringsim",
            "seq_len": args.seq_len,
            "head_dim": args.head_dim,
            "devices": args.devices,
            "q_chunk": args.q_chunk,
            "kv_chunk": args.kv_chunk,
            "seed": args.seed,
            "max_abs_error_vs_oracle": float(np.max(np.abs(out - reference))),
            "transfers": trace.transfers,
            "schedule": [
                {"step": s.step, "device": s.device, "kv_origin": s.kv_origin}
                for s in trace.steps
            ],
        },
        args,
    )


def _plan_json(plan: memplan.ChunkPlan) -> dict:
    nbytes = memplan.lookup_table_bytes(plan)
    return {
        "devices": plan.devices,
        "seq_len": plan.seq_len,
        "q_chunk": plan.q_chunk,
        "kv_chunk": plan.kv_chunk,
        "per_device": plan.per_device,
        "num_q_chunks": plan.num_q_chunks,
        "num_kv_chunks": plan.num_kv_chunks,
        "lookup_table_bytes": nbytes,
        "lookup_table_gib": memplan.format_gib(nbytes),
    }


def _cmd_memplan(args) -> None:
    plan = memplan.ChunkPlan(
        devices=args.devices, seq_len=args.seq_len, q_chunk=args.q_chunk, kv_chunk=args.kv_chunk
    )
    extra = {}
    for term in args.extra_term or []:
        name, _, value = term.partition("=")
        if not value:
            raise ValueError(f"--extra-term must look like name=bytes, got {term!r}")
        extra[name] = int(value)
    report = memplan.memory_report(plan, budget_bytes=args.budget, extra_terms=extra)
    doc = {"command": "memplan", **_plan_json(plan)}
    doc["breakdown"] = {"lookup_table": report.lookup_table_bytes, **report.extra_terms}
    doc["total_bytes"] = report.total_bytes
    doc["budget_bytes"] = report.budget_bytes
    doc["fits"] = report.fits
    _print_json(doc, args)


def _cmd_memplan_search(args) -> None:
    constraints = memplan.SearchConstraints(
        min_q_chunk=args.min_q_chunk,
        min_kv_chunk=args.min_kv_chunk,
        max_q_chunk=args.max_q_chunk,
        max_kv_chunk=args.max_kv_chunk,
        power_of_two=args.power_of_two,
    )
    plan = memplan.search_chunk_plan(args.devices, args.seq_len, args.budget, constraints)
    _print_json(
        {
            "command": "memplan-search",
            "devices": args.devices,
            "seq_len": args.seq_len,
            "budget_bytes": args.budget,
            "plan": None if plan is None else _plan_json(plan),
        },
        args,
    )


def _cmd_niah_gen(args) -> None:
    case = niah.NiahCase(
        haystack_tokens=args.haystack_tokens,
        depth_percent=args.depth,
        needle_payload=args.payload,
        seed=args.seed,
    )
    gen = niah.generate_case(case)
    doc = {
        "command": "niah-gen",
        "haystack_tokens": args.haystack_tokens,
        "depth_percent": args.depth,
        "payload": args.payload,
        "seed": args.seed,
        "needle_sentence_index": gen.needle_sentence_index,
        "needle_char_offset": gen.needle_char_offset,
        "estimated_tokens": gen.estimated_tokens,
        "question": gen.question,
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(gen.document)
        doc["document_file"] = args.out
    else:
        doc["document"] = gen.document
    _print_json(doc, args)


def _cmd_niah_score(args) -> None:
    if args.answer_file:
        with open(args.answer_file, encoding="utf-8") as fh:
            answer = fh.read()
    else:
        answer = args.answer
    result = niah.score(args.expected, answer)
    _print_json(
        {
            "command": "niah-score",
            "expected": args.expected,
            "verdict": result.verdict.value,
            "matched_prefix_len": result.matched_prefix_len,
        },
        args,
    )


_STUBS = {
    "echo": niah.EchoStub,
    "drop-last": niah.DropLastDigitStub,
    "silent": niah.SilentStub,
}


def _cmd_niah_grid(args, parser) -> None:
    if args.stub:
        client = _STUBS[args.stub]()
    else:
        endpoint = args.endpoint or os.environ.get("LONGCTX_ENDPOINT")
        if not endpoint:
            parser.error("niah-grid needs --endpoint, --stub, or LONGCTX_ENDPOINT")
        shape = niah.ApiShape.from_file(args.api_shape) if args.api_shape else None
        client = niah.HttpCompletionClient(endpoint, shape=shape)
    result = niah.run_grid(
        _parse_number_list(args.lengths, int),
        _parse_number_list(args.depths, float),
        args.trials,
        client,
        base_seed=args.seed,
        max_tokens=args.max_tokens,
        max_concurrency=args.concurrency,
    )
    if args.detail_log:
        with open(args.detail_log, "w", encoding="utf-8") as fh:
            json.dump(list(result.details), fh, indent=2)
            fh.write("\n")
    if args.format == "csv":
        sys.stdout.write(niah.grid_csv(result, metric=args.metric))
        return
    _print_json(
        {
            "command": "niah-grid",
            "lengths": list(result.lengths),
            "depths": list(result.depths),
            "trials": result.trials,
            "cells": [
                {
                    "haystack_tokens": c.haystack_tokens,
                    "depth_percent": c.depth_percent,
                    "exact_rate": c.rate("exact"),
                    "truncated_rate": c.rate("truncated"),
                    "wrong_rate": c.rate("wrong"),
                    "empty_rate": c.rate("empty"),
                    "error_rate": c.rate("error"),
                    "counts": c.counts,
                }
                for c in result.cells
            ],
        },
        args,
    )


def _load_or_builtin_manifest(path: str | None) -> recipe.RecipeManifest:
    if path is None:
        return recipe.megabeam_recipe()
    with open(path, encoding="utf-8") as fh:
        return recipe.load_manifest(fh.read())


def _cmd_recipe(args) -> None:
    if args.action in ("show", "emit"):
        manifest = _load_or_builtin_manifest(args.file)
        text = recipe.emit_manifest(manifest)
        if args.action == "emit" and args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return
    # validate: load without invariant enforcement so violations are reported,
    # not raised.
    if args.file is None:
        manifest = recipe.megabeam_recipe()
        violations = recipe.validate(manifest)
    else:
        with open(args.file, encoding="utf-8") as fh:
            text = fh.read()
        try:
            recipe.load_manifest(text)
            violations = []
        except recipe.ManifestError as exc:
            _print_json(
                {"command": "recipe-validate", "ok": False, "violations": [], "error": str(exc)},
                args,
            )
            return
    _print_json(
        {
            "command": "recipe-validate",
            "ok": not violations,
            "violations": [
                {
                    "phase_id": v.phase_id,
                    "field": v.field,
                    "expected": v.expected,
                    "actual": v.actual,
                    "message": v.message,
                }
                for v in violations
            ],
        },
        args,
    )


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longctx",
        description="Long-context training mechanics at desk scale",
    )
    parser.add_argument(
        "--version", action="version", version=f"longctx {__version__} (schema {SCHEMA_VERSION})"
    )
    parser.add_argument(
        "--no-timestamp",
        action="store_true",
        help="omit the timestamp field so output is byte-stable",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("census", help="distinct 16-bit roundings of integer positions")
    p.add_argument("--limit", type=int, required=True)

    p = sub.add_parser("rope-plan", help="classify theta-base candidates for a context length")
    p.add_argument("--context-len", type=int, required=True)
    p.add_argument("--candidates", required=True, help="comma-separated theta bases")
    p.add_argument("--head-dim", type=int, default=128)

    p = sub.add_parser("rope-report", help="per-dimension wavelength CSV")
    p.add_argument("--theta-base", type=float, required=True)
    p.add_argument("--head-dim", type=int, default=128)
    p.add_argument("--max-position", type=int, required=True)

    p = sub.add_parser("ringsim", help="ring attention vs oracle on a random problem")
    p.add_argument("--seq-len", type=int, required=True)
    p.add_argument("--devices", type=int, required=True)
    p.add_argument("--q-chunk", type=int, required=True)
    p.add_argument("--kv-chunk", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--head-dim", type=int, default=16)
    p.add_argument("--segments", help="comma-separated segment lengths summing to seq-len")
    p.add_argument("--dump-weights", help="write the oracle weight matrix to this CSV file")

    p = sub.add_parser("memplan", help="lookup-table memory report for a chunk plan")
    p.add_argument("--devices", type=int, required=True)
    p.add_argument("--seq-len", type=int, required=True)
    p.add_argument("--q-chunk", type=int, required=True)
    p.add_argument("--kv-chunk", type=int, required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--extra-term", action="append", help="name=bytes, additive report term")

    p = sub.add_parser("memplan-search", help="smallest chunk sizes fitting a byte budget")
    p.add_argument("--devices", type=int, required=True)
    p.add_argument("--seq-len", type=int, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--min-q-chunk", type=int, default=1)
    p.add_argument("--min-kv-chunk", type=int, default=1)
    p.add_argument("--max-q-chunk", type=int)
    p.add_argument("--max-kv-chunk", type=int)
    p.add_argument("--power-of-two", action="store_true")

    p = sub.add_parser("niah-gen", help="generate one needle-in-a-haystack document")
    p.add_argument("--haystack-tokens", type=int, required=True)
    p.add_argument("--depth", type=float, required=True)
    p.add_argument("--payload", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the document here instead of inlining it")

    p = sub.add_parser("niah-score", help="score an answer against the expected payload")
    p.add_argument("--expected", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--answer")
    group.add_argument("--answer-file")

    p = sub.add_parser("niah-grid", help="run a length x depth recall grid")
    p.add_argument("--lengths", required=True)
    p.add_argument("--depths", required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--endpoint", help="completion endpoint URL (or LONGCTX_ENDPOINT)")
    p.add_argument("--stub", choices=sorted(_STUBS), help="offline stub client")
    p.add_argument("--api-shape", help="JSON file describing a non-default API shape")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-tokens", type=int, default=64)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--metric", default="exact", help="rate shown in CSV output")
    p.add_argument("--detail-log", help="write per-trial JSON records to this file")

    p = sub.add_parser("recipe", help="show, validate, or emit the training-plan manifest")
    p.add_argument("action", choices=["show", "validate", "emit"])
    p.add_argument("--file", help="manifest file (defaults to the built-in plan)")
    p.add_argument("--out", help="with emit: write the manifest here")

    return parser


def dispatch(argv: list[str]) -> int:
    """Route argv to a subcommand; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "census": _cmd_census,
        "rope-plan": _cmd_rope_plan,
        "rope-report": _cmd_rope_report,
        "ringsim": _cmd_ringsim,
        "memplan": _cmd_memplan,
        "memplan-search": _cmd_memplan_search,
        "niah-gen": _cmd_niah_gen,
        "niah-score": _cmd_niah_score,
        "recipe": _cmd_recipe,
    }
    try:
        if args.subcommand == "niah-grid":
            _cmd_niah_grid(args, parser)
        else:
            handlers[args.subcommand](args)
    except (ValueError, OSError) as exc:
        error = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        sys.stderr.write(json.dumps(error, indent=2) + "\n")
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
