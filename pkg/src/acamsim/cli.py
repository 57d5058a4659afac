"""Command line front end.

Subcommands cover the full pipeline: gen-luts (device tables), compile
(decision forest to interval words and conductance rows), optimize
(sequential/parallel design sweep), infer (dataset evaluation), and stats
(mismatch statistics from a compiled model). Every subcommand is
deterministic given its inputs and --seed.

Exit codes: 0 success, 1 usage, 2 data/validation.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import arch as archmod
from . import forest as formod
from . import inference as infmod
from . import luts as lutmod

_DATA_ERRORS = (lutmod.LutError, formod.SchemaError, archmod.ArchError,
                infmod.SimError, OSError)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


class _UsageError(Exception):
    pass


def _parse_int_list(text, flag):
    try:
        values = [int(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise _UsageError("%s expects a comma-separated list of integers" % flag)
    if not values:
        raise _UsageError("%s expects at least one value" % flag)
    return values


def _parse_arch(text):
    try:
        n_seq, n_par = (int(p) for p in text.split(","))
    except ValueError:
        raise _UsageError("--arch expects 'n_seq,n_par'")
    return n_seq, n_par


def _parse_weights(text):
    try:
        w = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise _UsageError("--weights expects 'wE,wL,wA'")
    if len(w) != 3:
        raise _UsageError("--weights expects exactly three values")
    return archmod.CostWeights(*w)


def _tech_overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise _UsageError("--set expects key=value, got %r" % item)
        key, _, val = item.partition("=")
        key = key.strip()
        try:
            if key == "g_window":
                # convenience form; the flat tech dict wants g_min / g_max
                out["g_min"], out["g_max"] = (float(p) for p in val.split(":"))
            elif key == "n_levels":
                out[key] = int(val)
            else:
                out[key] = float(val)
        except ValueError:
            raise _UsageError("--set %s: unparsable value %r" % (key, val))
    return out


def _load_tech(args):
    return lutmod.load_tech(path=getattr(args, "tech", None),
                            overrides=_tech_overrides(getattr(args, "set", None)))


def _ensure_out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_gen_luts(args):
    tech = _load_tech(args)
    luts = lutmod.gen_synthetic_luts(tech, args.kind, gain=args.gain)
    out = _ensure_out(args)
    lutmod.save_luts(luts, out)
    print("wrote %s lut set (n_levels=%d, g_window=[%g, %g] S) to %s"
          % (args.kind, tech.n_levels, tech.g_window[0], tech.g_window[1], out))
    return 0


def cmd_compile(args):
    tech = _load_tech(args)
    doc, trees = formod.load_forest_file(args.forest)
    compiled = formod.compile_forest(doc, tech, max_segment=args.segment)
    out = _ensure_out(args)
    path = os.path.join(out, "compiled.json")
    formod.save_compiled(compiled, path)
    n_tiles = sum(len(t) for t in compiled.tile_map)
    print("compiled %d trees -> %d words, %d tiles (max segment %d) -> %s"
          % (len(trees), compiled.n_words, n_tiles, compiled.max_segment, path))
    for w in compiled.warnings:
        print("warning: %s" % w, file=sys.stderr)
    return 0


def cmd_optimize(args):
    tech = _load_tech(args)
    weights = _parse_weights(args.weights) if args.weights else archmod.CostWeights(
        *archmod.DEFAULT_WEIGHTS)
    points, best = archmod.sweep(args.n_word, tech, weights, args.pmm)
    out = _ensure_out(args)
    path = os.path.join(out, "sweep.csv")
    archmod.sweep_to_csv(points, path)
    print("sweep over n_word=%d -> %s" % (args.n_word, path))
    print("chosen: n_seq=%d n_par=%d cost=%.6f (t=%.3e s, a=%.4f um^2, e=%.4e J)"
          % (best.cfg.n_seq, best.cfg.n_par, best.cost, best.t_word,
             best.a_word, best.e_word))
    if args.mc_trials:
        mean, stderr = archmod.monte_carlo_energy(best.cfg, tech, args.pmm,
                                                  args.mc_trials, args.seed)
        print("monte-carlo energy at chosen point: %.6e J +/- %.2e (analytic %.6e J)"
              % (mean, stderr, best.e_word))
    return 0


def _build_mode(args, tech, compiled):
    arch = None
    if args.arch:
        n_seq, n_par = _parse_arch(args.arch)
        n_word = max(1, int(compiled.word_lengths.max(initial=1)))
        arch = archmod.ArchConfig(n_seq=n_seq, n_par=n_par, n_word=n_word)
    if args.mode == "ideal":
        return infmod.EvalMode.ideal(tech, arch=arch)
    if not args.luts:
        raise _UsageError("behavioral mode requires --luts <dir>")
    luts = lutmod.load_luts(args.luts)
    return infmod.EvalMode.behavioral(luts, tech, arch=arch)


def cmd_infer(args):
    tech = _load_tech(args)
    compiled = formod.load_compiled(args.compiled)
    X, y, _names = formod.load_dataset_csv(args.data)
    mode = _build_mode(args, tech, compiled)
    out = _ensure_out(args)
    if args.segment_sweep:
        lengths = _parse_int_list(args.segment_sweep, "--segment-sweep")
        rows = infmod.segment_length_sweep(compiled, X, y, mode, lengths,
                                           jobs=args.jobs)
        path = os.path.join(out, "segment_sweep.csv")
        with open(path, "w") as fh:
            fh.write("segment_length,accuracy,agreement\n")
            for L, acc, agr in rows:
                fh.write("%d,%.17g,%.17g\n" % (L, acc, agr))
        print("segment sweep (%d lengths) -> %s" % (len(rows), path))
        return 0
    report = infmod.evaluate_dataset(compiled, X, y, mode,
                                     segment=args.segment, jobs=args.jobs)
    csv_path = os.path.join(out, "report.csv")
    infmod.write_report_csv(report, csv_path)
    json_path = os.path.join(out, "report.json")
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    line = "queries=%d accuracy=%s agreement=%.4f abstain=%d" % (
        report.n_queries,
        "n/a" if report.accuracy is None else "%.4f" % report.accuracy,
        report.agreement, report.n_abstain)
    if report.mean_energy is not None:
        line += " mean_energy=%.4e J" % report.mean_energy
    print(line)
    print("report -> %s, %s" % (csv_path, json_path))
    return 0


def cmd_stats(args):
    tech = _load_tech(args)
    compiled = formod.load_compiled(args.compiled)
    X, _y, _names = formod.load_dataset_csv(args.data)
    X_norm = formod.normalize_queries(np.asarray(X, dtype=float),
                                      compiled.feature_ranges)
    stats = formod.measured_mismatch_stats(compiled, X_norm)
    out = _ensure_out(args)

    p_path = os.path.join(out, "p_mm_per_feature.csv")
    with open(p_path, "w") as fh:
        fh.write("feature,p_mm\n")
        for f, p in enumerate(stats.p_mm_per_feature):
            fh.write("%d,%.17g\n" % (f, p))

    counts = stats.depth_histogram
    h_path = os.path.join(out, "depth_histogram.csv")
    with open(h_path, "w") as fh:
        fh.write("depth,count\n")
        for d, c in enumerate(counts):
            fh.write("%d,%d\n" % (d, c))

    n_seq_values = _parse_int_list(args.n_seq_values, "--n-seq-values")
    curve = formod.energy_reduction_curve(stats, n_seq_values)
    r_path = os.path.join(out, "energy_reduction.csv")
    with open(r_path, "w") as fh:
        fh.write("n_seq,step_fraction,energy_reduction\n")
        for n_seq, frac, red in curve:
            fh.write("%d,%.17g,%.17g\n" % (n_seq, frac, red))

    half = next((n_seq for n_seq, _f, red in curve if red >= 0.5), None)
    print("pairs=%d mean_depth=%.3f" % (stats.n_pairs, stats.mean_depth))
    print("n_seq for >=50%% energy reduction: %s"
          % ("not reached in sweep" if half is None else str(half)))
    print("stats -> %s, %s, %s" % (p_path, h_path, r_path))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="acamsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add_common(p):
        p.add_argument("--tech", default=None, help="tech parameter file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one tech parameter (repeatable)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen-luts", help="generate a synthetic three-file LUT set")
    add_common(p)
    p.add_argument("--kind", required=True, choices=sorted(lutmod.KINDS))
    p.add_argument("--gain", type=float, default=None,
                   help="transfer steepness override")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_luts)

    p = sub.add_parser("compile", help="compile a forest interchange file")
    add_common(p)
    p.add_argument("--forest", required=True, help="forest interchange JSON")
    p.add_argument("--segment", type=int, default=formod.DEFAULT_MAX_SEGMENT,
                   help="maximum cells per match-line segment")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("optimize", help="sweep sequential/parallel splits")
    add_common(p)
    p.add_argument("--n-word", type=int, required=True, dest="n_word")
    p.add_argument("--weights", default=None, help="wE,wL,wA (sum to 1)")
    p.add_argument("--pmm", type=float, default=archmod.DEFAULT_P_MM)
    p.add_argument("--mc-trials", type=int, default=0, dest="mc_trials",
                   help="cross-check the chosen point with Monte Carlo")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("infer", help="evaluate a dataset against a compiled model")
    add_common(p)
    p.add_argument("--compiled", required=True, help="compiled model JSON")
    p.add_argument("--data", required=True, help="dataset CSV (label column last)")
    p.add_argument("--mode", choices=("ideal", "behavioral"), default="ideal")
    p.add_argument("--luts", default=None, help="LUT directory (behavioral mode)")
    p.add_argument("--arch", default=None, metavar="N_SEQ,N_PAR",
                   help="enable energy/step accounting")
    p.add_argument("--segment", type=int, default=None,
                   help="re-tile with this segment length")
    p.add_argument("--segment-sweep", default=None, dest="segment_sweep",
                   metavar="L1,L2,...", help="accuracy/agreement per segment length")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("stats", help="mismatch statistics of a compiled model")
    add_common(p)
    p.add_argument("--compiled", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-seq-values", default="1,2,3,4,5,6,7,8,12,16",
                   dest="n_seq_values", help="n_seq grid for the reduction table")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print("%s: error: %s" % (parser.prog, exc), file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print("%s: %s" % (parser.prog, exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
