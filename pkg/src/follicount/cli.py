"""Command-line entry point: analyze, batch, compare, synth, calibrate.

Exit status: 0 success, 1 configuration or usage error, 2 when at least one
image failed and was recorded as an error row.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from follicount import census
from follicount.calibrate import CalibrationError, calibrate
from follicount.runner import list_images, run_batch
from follicount.settings import Magnification, SettingsError, load_profiles, profile_pair
from follicount.synthlab import MANIFEST, default_corpus_params, default_params, generate_corpus, load_manifest

log = logging.getLogger("follicount")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _profiles(source, mags) -> dict:
    try:
        profiles = load_profiles(source)
        return {m: profile_pair(profiles, m) for m in mags}
    except (OSError, SettingsError) as exc:
        raise UsageError(f"profiles: {exc}") from exc


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _emit_report(results, args, timing=None) -> int:
    rows = [r.row for r in results]
    text = census.counts_csv(rows)
    if args.out:
        _write(args.out, text)
        from follicount.plotting import counts_figure

        counts_figure(rows, str(Path(args.out).with_suffix(".png")))
    else:
        sys.stdout.write(text)
    if args.json:
        census.write_json(census.counts_json(rows), args.json)
    if timing is not None:
        sidecar = (args.out or args.json) and str(Path(args.out or args.json).with_suffix(".timing.json"))
        if sidecar:
            census.write_json(timing, sidecar)
        log.info("%d images in %.2f s", timing["images"], timing["wall_seconds"])
    return EXIT_PARTIAL if any(r.error for r in rows) else EXIT_OK


def cmd_analyze(args) -> int:
    missing = [p for p in args.images if not os.path.exists(p)]
    if missing:
        raise UsageError("no such file: " + ", ".join(missing))
    mag = Magnification(args.mag)
    pair = _profiles(args.profiles, [mag])[mag]
    jobs = [(p, mag, pair, args.overlays, args.overlays is not None) for p in args.images]
    results, timing = run_batch(jobs, workers=1)
    return _emit_report(results, args, timing if args.out else None)


def _batch_mags(directory, paths, mag):
    if mag is not None:
        return {p: Magnification(mag) for p in paths}
    try:
        manifest = load_manifest(directory)
    except FileNotFoundError:
        if paths:
            raise UsageError(f"--mag is required: {directory} has no {MANIFEST}") from None
        return {}
    by_name = {e["file"]: Magnification(e["magnification"]) for e in manifest["images"]}
    out = {}
    for p in paths:
        if p.name not in by_name:
            raise UsageError(f"--mag is required: {p.name} is not listed in {MANIFEST}")
        out[p] = by_name[p.name]
    return out


def cmd_batch(args) -> int:
    if not os.path.isdir(args.directory):
        raise UsageError(f"not a directory: {args.directory}")
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    paths = list_images(args.directory)
    mags = _batch_mags(args.directory, paths, args.mag)
    pairs = _profiles(args.profiles, sorted(set(mags.values())))
    jobs = [(str(p), mags[p], pairs[mags[p]], args.overlays, False) for p in paths]
    results, timing = run_batch(jobs, workers=args.workers)
    return _emit_report(results, args, timing)


def _human_source(source):
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name not in census.TABLES:
            raise UsageError(f"unknown built-in table {name!r} (have {', '.join(census.TABLES)})")
        return census.load_table(name)
    try:
        return None, census.parse_human_csv(census.read_text(source))
    except (OSError, ValueError) as exc:
        raise UsageError(f"human counts: {exc}") from exc


def cmd_compare(args) -> int:
    table_auto, humans = _human_source(args.human)
    if args.report.startswith("builtin:"):
        auto, _ = _human_source(args.report)
    else:
        try:
            auto = census.parse_counts_csv(census.read_text(args.report))
        except (OSError, ValueError) as exc:
            raise UsageError(f"report: {exc}") from exc
    try:
        report = census.compare(auto, humans)
    except census.JoinError as exc:
        raise UsageError(str(exc)) from exc
    except census.DuplicateImage as exc:
        raise UsageError(f"duplicate image id: {exc}") from exc
    text = report.to_csv()
    if args.out:
        _write(args.out, text)
        from follicount.plotting import comparison_figure

        comparison_figure(report, str(Path(args.out).with_suffix(".png")))
    else:
        sys.stdout.write(text)
    if args.json:
        census.write_json(report.to_json(), args.json)
    for row in [*report.rows, report.total]:
        print(_verdict(row), file=sys.stderr)
    return EXIT_OK


def _verdict(row) -> str:
    parts = []
    for name, ok in row.bands.items():
        key = name.split("_")[0]
        dev = row.deviations[key]
        shown = "n/a" if dev is None else f"{dev:+.1f}%"
        parts.append(f"{name}={'yes' if ok else 'no'} ({shown})")
    return f"{row.imageId}: " + " ".join(parts)


def cmd_synth(args) -> int:
    if args.n < 0:
        raise UsageError("--n must be non-negative")
    if args.mag is None:
        params = default_corpus_params(seed=args.seed)
    else:
        params = default_params(Magnification(args.mag), seed=args.seed)
    manifest = generate_corpus(params, args.n, args.out)
    print(json.dumps(manifest["totals"], sort_keys=True))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if not os.path.exists(os.path.join(args.corpus, MANIFEST)):
        raise UsageError(f"{args.corpus}: no {MANIFEST} (generate one with `follicount synth`)")
    try:
        result = calibrate(args.corpus, holdout=args.split == "half")
    except CalibrationError as exc:
        raise UsageError(f"calibration refused: {exc}") from exc
    _write(args.out, result.to_ini())
    for line in result.header()[3:]:
        print(line, file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="follicount", description="Count primordial follicles in PCNA-stained ovary sections.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def outputs(sp):
        sp.add_argument("--out", help="report CSV (stdout when omitted); a figure is written next to it")
        sp.add_argument("--json", help="report JSON")

    a = sub.add_parser("analyze", help="count follicles in one or more images")
    a.add_argument("images", nargs="+")
    a.add_argument("--mag", type=int, choices=(100, 200), required=True)
    a.add_argument("--profiles", default="default", help="profile INI file or 'default'")
    a.add_argument("--overlays", help="directory for overlay images and stage panels")
    outputs(a)
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("batch", help="count every image in a directory")
    b.add_argument("directory")
    b.add_argument("--mag", type=int, choices=(100, 200), help="default: per image from the corpus manifest")
    b.add_argument("--profiles", default="default")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--overlays")
    outputs(b)
    b.set_defaults(func=cmd_batch)

    c = sub.add_parser("compare", help="compare a report with human counts")
    c.add_argument("report", help="report CSV, or builtin:table1 / builtin:table2")
    c.add_argument("--human", required=True, help="human counts CSV, or builtin:table1 / builtin:table2")
    outputs(c)
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mag", type=int, choices=(100, 200), help="default: alternate 200x and 100x")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    k = sub.add_parser("calibrate", help="fit detection profiles on a synthetic corpus")
    k.add_argument("corpus")
    k.add_argument("--out", required=True, help="profile INI to write")
    k.add_argument("--split", choices=("none", "half"), default="none", help="hold out half the corpus for scoring")
    k.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"follicount: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
