"""Command-line entry point: run, stats, synth, and viz subcommands.

Exit codes: 0 success, 1 validation error (bad flags, bad config, bad
input data, budget violations found by stats), 2 I/O error (missing or
unreadable files).  Every failure prints one machine-parsable line of the
form ``error: <flag-or-file>: <reason>`` to stderr.
"""

from __future__ import annotations

import argparse
import glob as globlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .allocator import EngineConfig
from .efficiency import (
    ModelProfile,
    corpus_stats,
    estimate_cost,
    format_stats_table,
    stats_to_dict,
)
from .errors import ConfigError, HiredError, ManifestInvalid, ManifestMissing
from .geometry import (
    DEFAULT_BASE_RESOLUTION,
    DEFAULT_CANDIDATES,
    layout_from_grid,
    plan_partitions,
)
from .selector import run_hired
from .tensor_io import (
    generate_synthetic_dump,
    load_attention_dump,
    most_square_grid,
    read_selection_manifest,
    write_attention_dump,
    write_selection_manifest,
)


class _Validation(Exception):
    """Flag-level validation failure: (subject, reason, optional usage)."""

    def __init__(self, subject: str, reason: str, usage: str | None = None):
        super().__init__(f"{subject}: {reason}")
        self.subject = subject
        self.reason = reason
        self.usage = usage


def _split_argparse_message(message: str) -> tuple[str, str]:
    """Map argparse's error strings onto (flag, reason)."""
    if message.startswith("argument ") and ": " in message:
        flag, reason = message[len("argument "):].split(": ", 1)
        return flag.split("/")[0], reason
    if message.startswith("unrecognized arguments: "):
        extras = message[len("unrecognized arguments: "):]
        return extras.split()[0], "unrecognized argument"
    if message.startswith("the following arguments are required: "):
        missing = message[len("the following arguments are required: "):]
        return missing.split(",")[0].strip(), "required"
    return "args", message


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; the contract wants 1."""

    def error(self, message):
        subject, reason = _split_argparse_message(message)
        raise _Validation(subject, reason, usage=self.format_usage())


def _parse_budget(text: str):
    """Budget flag: integers >= 0 are absolute counts; values in (0, 1)
    are fractions of capacity; 1.0 means full capacity."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a token count or fraction, got {text!r}"
        ) from None
    if 0.0 < value <= 1.0:
        return value
    if value > 1.0 and value.is_integer():
        return int(value)
    raise argparse.ArgumentTypeError(
        f"fractions must be in (0, 1]; counts must be integers >= 0, got {text!r}"
    )


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) == 2 and all(p.isdigit() for p in parts):
        w, h = int(parts[0]), int(parts[1])
        if w >= 1 and h >= 1:
            return (w, h)
    raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None


def _parse_candidates(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        out.append(_parse_size(part.strip()))
    if not out:
        raise argparse.ArgumentTypeError("need at least one WxH candidate")
    return out


def build_parser() -> _Parser:
    parser = _Parser(
        prog="hired",
        description="Visual-token budgeting and dropping over attention dumps.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    run = sub.add_parser("run", help="allocate a budget and select tokens")
    run.add_argument("--dump", required=True, help="attention dump directory")
    run.add_argument("--budget", type=_parse_budget, default=None,
                     help="absolute token count (int >= 0), fraction in (0, 1), "
                          "or 1.0 for full capacity")
    run.add_argument("--alpha", type=float, default=None,
                     help="share of the budget reserved for the full image")
    run.add_argument("--init-layer", type=int, default=None,
                     help="layer scoring sub-image content")
    run.add_argument("--final-layer", type=int, default=None,
                     help="layer scoring token importance")
    run.add_argument("--agg", default=None,
                     help="head aggregation: sum, mean, max, or head:N")
    run.add_argument("--distribution", choices=("content", "even"), default=None,
                     help="apportion by content score or evenly")
    run.add_argument("--emit-scores", action="store_true", default=None,
                     help="embed importance scores in the manifest")
    run.add_argument("--config", default=None,
                     help="JSON file with defaults; explicit flags win")
    run.add_argument("--out", required=True, help="selection manifest to write")
    run.set_defaults(func=cmd_run)

    stats = sub.add_parser("stats", help="audit kept-token counts of manifests")
    stats.add_argument("--manifests", required=True,
                       help="glob of selection manifests")
    stats.add_argument("--budget", type=int, required=True,
                       help="budget the corpus must respect")
    stats.add_argument("--report", default=None, metavar="DIR",
                       help="also write usage.csv, stats.json, usage.png here")
    stats.add_argument("--profile", default=None, metavar="FILE",
                       help="JSON model profile for KV-cache sizing")
    stats.add_argument("--full-tokens", type=int, default=None,
                       help="unpruned visual token count for cost ratios")
    stats.set_defaults(func=cmd_stats)

    synth = sub.add_parser("synth", help="write a synthetic attention dump")
    synth.add_argument("--seed", type=int, required=True)
    synth.add_argument("--partitions", type=int, default=None,
                       help="total partitions incl. the full image (default 5)")
    synth.add_argument("--image", type=_parse_size, default=None, metavar="WxH",
                       help="plan the grid for this image size instead of "
                            "--partitions")
    synth.add_argument("--candidates", type=_parse_candidates, default=None,
                       metavar="WxH,...", help="grids to consider with --image")
    synth.add_argument("--base-resolution", type=int,
                       default=DEFAULT_BASE_RESOLUTION)
    synth.add_argument("--heads", type=int, default=16)
    synth.add_argument("--tokens", type=int, default=576,
                       help="tokens per partition")
    synth.add_argument("--layers", type=_parse_int_list, default=None,
                       help="captured layers (default 0,11,22)")
    synth.add_argument("--out", required=True, help="dump directory to write")
    synth.set_defaults(func=cmd_synth)

    viz = sub.add_parser("viz", help="render a kept-token mask as PGM")
    viz.add_argument("--manifest", required=True, help="selection manifest")
    viz.add_argument("--dump", required=True, help="dump directory (for geometry)")
    viz.add_argument("--partition", type=int, required=True)
    viz.add_argument("--out", required=True, help="PGM file to write")
    viz.set_defaults(func=cmd_viz)
    return parser


_CONFIG_KEYS = {
    "budget": "budget",
    "alpha": "alpha",
    "init_layer": "init_layer",
    "final_layer": "final_layer",
    "agg": "aggregation",
    "distribution": "distribution",
    "emit_scores": "emit_scores",
}


def _load_config_file(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise _Validation("--config", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise _Validation("--config", "top level must be an object")
    overrides = {}
    for key, value in doc.items():
        if key not in _CONFIG_KEYS:
            raise _Validation("--config", f"unknown key {key!r}")
        if key == "budget" and isinstance(value, float) and value.is_integer() \
                and value > 1.0:
            value = int(value)
        overrides[_CONFIG_KEYS[key]] = value
    return overrides


def cmd_run(args) -> int:
    overrides = _load_config_file(args.config) if args.config else {}
    flags = {
        "budget": args.budget,
        "alpha": args.alpha,
        "init_layer": args.init_layer,
        "final_layer": args.final_layer,
        "aggregation": args.agg,
        "distribution": args.distribution,
        "emit_scores": args.emit_scores,
    }
    kwargs = dict(overrides)
    kwargs.update({k: v for k, v in flags.items() if v is not None})
    config = EngineConfig(**kwargs)

    dump = load_attention_dump(args.dump)
    layout = layout_from_grid(dump.grid, dump.patch_grid, dump.image_size)
    plan, result = run_hired(dump, layout, config)
    write_selection_manifest(result, plan, config, args.out)
    budgets = [plan.n_full] + list(plan.n_sub)
    capacity = (dump.k + 1) * dump.tokens_per_partition
    print(f"kept {result.total_kept} of {capacity} tokens "
          f"(budget {plan.budget}); per-partition {budgets}")
    return 0


def cmd_stats(args) -> int:
    paths = sorted(globlib.glob(args.manifests, recursive=True))
    if not paths:
        raise _Validation("--manifests", f"no manifests matched {args.manifests!r}")
    try:
        stats = corpus_stats(paths, args.budget)
    except ManifestInvalid as exc:
        # a file that does not parse as a manifest is an unreadable input
        print(f"error: {exc.subject or args.manifests}: {exc}", file=sys.stderr)
        return 2

    cost = None
    if args.profile is not None:
        try:
            profile_doc = json.loads(Path(args.profile).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise _Validation("--profile", f"invalid JSON: {exc}") from None
        if not isinstance(profile_doc, dict):
            raise _Validation("--profile", "top level must be an object")
        try:
            profile = ModelProfile(**profile_doc)
        except (TypeError, ConfigError) as exc:
            raise _Validation("--profile", str(exc)) from None
        cost = estimate_cost(stats.maximum, profile, args.full_tokens)

    print(format_stats_table(stats))
    print(json.dumps(stats_to_dict(stats, cost)))

    if args.report is not None:
        from .report import render_usage_figure, write_stats_json, write_usage_csv

        report_dir = Path(args.report)
        report_dir.mkdir(parents=True, exist_ok=True)
        rows = [(p, read_selection_manifest(p)["total_kept"]) for p in paths]
        write_usage_csv(rows, args.budget, report_dir / "usage.csv")
        write_stats_json(stats, report_dir / "stats.json", cost)
        render_usage_figure([kept for _, kept in rows], args.budget,
                            report_dir / "usage.png")
        print(f"report written to {report_dir}")

    if stats.violations:
        print(f"error: {args.manifests}: {stats.violations} manifest(s) "
              f"exceed budget {args.budget}", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    if args.image is not None and args.partitions is not None:
        raise _Validation("--image", "mutually exclusive with --partitions")
    layers = args.layers if args.layers is not None else [0, 11, 22]
    if any(b <= a for a, b in zip(layers, layers[1:])) or any(v < 0 for v in layers):
        raise _Validation("--layers", "must be strictly increasing and nonnegative")
    if args.heads < 1:
        raise _Validation("--heads", "must be >= 1")
    if args.tokens < 1:
        raise _Validation("--tokens", "must be >= 1")

    if args.image is not None:
        candidates = args.candidates if args.candidates is not None \
            else DEFAULT_CANDIDATES
        layout = plan_partitions(args.image[0], args.image[1], candidates,
                                 args.base_resolution,
                                 most_square_grid(args.tokens))
        dump = generate_synthetic_dump(
            args.seed, layout.k, args.heads, args.tokens, layers,
            grid=layout.grid, image_size=layout.image_size,
        )
    else:
        partitions = args.partitions if args.partitions is not None else 5
        if partitions < 1:
            raise _Validation("--partitions", "must be >= 1")
        dump = generate_synthetic_dump(
            args.seed, partitions - 1, args.heads, args.tokens, layers,
            base_resolution=args.base_resolution,
        )
    write_attention_dump(dump, args.out)
    print(f"wrote {dump.k + 1} partitions x {dump.tokens_per_partition} tokens "
          f"to {args.out}")
    return 0


def cmd_viz(args) -> int:
    doc = read_selection_manifest(args.manifest)
    dump = load_attention_dump(args.dump)
    p_w, p_h = dump.patch_grid
    entry = next((e for e in doc["partitions"] if e["id"] == args.partition), None)
    if entry is None:
        raise _Validation("--partition",
                          f"manifest has no partition {args.partition}")
    if args.partition > dump.k:
        raise _Validation("--partition",
                          f"dump has partitions 0..{dump.k}")
    kept = entry["kept_indices"]
    n = p_w * p_h
    if any(j >= n for j in kept):
        raise _Validation(str(args.manifest),
                          f"kept index exceeds the {p_w}x{p_h} patch grid")
    img = np.zeros(n, dtype=np.uint8)
    img[kept] = 255
    header = f"P5\n{p_w} {p_h}\n255\n".encode("ascii")
    Path(args.out).write_bytes(header + img.tobytes())
    print(f"wrote {args.out} ({p_w}x{p_h}, {len(kept)} of {n} kept)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _Validation as exc:
        print(f"error: {exc.subject}: {exc.reason}", file=sys.stderr)
        if exc.usage:
            sys.stderr.write(exc.usage)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _Validation as exc:
        print(f"error: {exc.subject}: {exc.reason}", file=sys.stderr)
        return 1
    except ManifestMissing as exc:
        print(f"error: {exc.subject or 'input'}: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        flag = "--" + exc.field.replace("_", "-").lstrip("-")
        print(f"error: {flag}: {exc}", file=sys.stderr)
        return 1
    except HiredError as exc:
        print(f"error: {exc.subject or 'input'}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        subject = exc.filename or "i/o"
        print(f"error: {subject}: {exc.strerror or exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
