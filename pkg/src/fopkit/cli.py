"""Command-line front end.

Every subcommand works inside ``--workdir``; file names come from the
``paths.*`` config keys and are relative to it. Each run writes
``<subcommand>.resolved.cfg`` holding every config value it used.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dataio
from .benchlosses import BENCH_KINDS, SLOPE_BRACKETS, bench, compare_at, report_rows
from .config import ConfigError, RunConfig, load_config
from .evalsuite import (feature_analytics, match_1_to_n, roc_curve, score_trials, verify_metrics,
                        write_csv, write_roc)
from .gradcheck import gradcheck
from .model import read_checkpoint, write_checkpoint
from .numcore import make_rng
from .synthgen import generate
from .trainer import LOSS_KINDS, NumericError, train, write_history

log = logging.getLogger("fopkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _csv_list(text: str, conv=str) -> tuple:
    return tuple(conv(x.strip()) for x in text.split(",") if x.strip())


# ---------------------------------------------------------------- commands


def _load_data(cfg: RunConfig, wd: Path):
    p = cfg.paths
    face = dataio.read_bank(wd / p.face_bank)
    voice = dataio.read_bank(wd / p.voice_bank)
    labels = dataio.read_labels(wd / p.labels, wd / p.splits)
    labels.check_bank(face)
    labels.check_bank(voice)
    if face.modality != "face" or voice.modality != "voice":
        raise dataio.DataError("face/voice bank modality tags are swapped")
    return face, voice, labels


def cmd_synth(cfg: RunConfig, wd: Path, args) -> int:
    corpus = generate(cfg.synth)
    p = cfg.paths
    dataio.write_bank(corpus.face, wd / p.face_bank)
    dataio.write_bank(corpus.voice, wd / p.voice_bank)
    dataio.write_labels(corpus.labels, wd / p.labels, wd / p.splits)
    print(f"wrote {len(corpus.face)} face / {len(corpus.voice)} voice instances")
    return EXIT_OK


def cmd_train(cfg: RunConfig, wd: Path, args) -> int:
    face, voice, labels = _load_data(cfg, wd)
    res = train(face, voice, labels, cfg.train)
    write_checkpoint(res.params, wd / cfg.paths.checkpoint)
    write_history(res.history, wd / cfg.paths.history)
    last = res.history[-1] if res.history else None
    if last is not None:
        print(f"epoch {last.epoch}: loss {last.loss:.5f} val_eer {last.val_eer:.4f}")
    return EXIT_OK


def cmd_eval_verify(cfg: RunConfig, wd: Path, args) -> int:
    face, voice, labels = _load_data(cfg, wd)
    params = read_checkpoint(wd / cfg.paths.checkpoint)
    part = cfg.eval.protocol
    bf = face.subset(dataio.protocol_ids(face, labels, part))
    bv = voice.subset(dataio.protocol_ids(voice, labels, part))
    rows = []
    for stratum in cfg.eval.stratify:
        try:
            trials = dataio.make_trials(bf, bv, labels, stratum, cfg.eval.n_neg_per_pos,
                                        make_rng(cfg.eval.trials_seed))
        except dataio.TrialError as exc:
            log.warning("stratum %s skipped: %s", stratum, exc)
            continue
        scored = score_trials(params, bf, bv, trials)
        m = verify_metrics(scored)
        rows.append([stratum, m["eer"], m["auc"], m["n_pos"], m["n_neg"]])
        write_roc(wd / f"{cfg.paths.roc_prefix}{stratum}.csv", roc_curve(scored.scores, scored.labels))
        print(f"{stratum:>4}: EER {m['eer']:.4f} AUC {m['auc']:.4f} ({m['n_pos']}+/{m['n_neg']}-)")
    if not rows:
        raise dataio.TrialError("no stratum produced usable trials")
    write_csv(wd / cfg.paths.verify_csv, ["stratum", "eer", "auc", "n_pos", "n_neg"], rows)
    return EXIT_OK


def cmd_eval_match(cfg: RunConfig, wd: Path, args) -> int:
    face, voice, labels = _load_data(cfg, wd)
    params = read_checkpoint(wd / cfg.paths.checkpoint)
    part = cfg.eval.protocol
    bf = face.subset(dataio.protocol_ids(face, labels, part))
    bv = voice.subset(dataio.protocol_ids(voice, labels, part))
    rows = []
    for n_c in cfg.eval.nc:
        rep = match_1_to_n(params, bf, bv, labels, n_c, cfg.eval.match_trials,
                           make_rng(cfg.eval.trials_seed + n_c), cfg.eval.match_direction)
        rows.append([rep.n_c, rep.accuracy, rep.trials])
        print(f"1:{n_c}: accuracy {rep.accuracy:.4f}")
    write_csv(wd / cfg.paths.match_csv, ["n_c", "accuracy", "trials"], rows)
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, wd: Path, args) -> int:
    face, voice, labels = _load_data(cfg, wd)
    params = read_checkpoint(wd / cfg.paths.checkpoint)
    part = cfg.eval.protocol
    bf = face.subset(dataio.protocol_ids(face, labels, part))
    bv = voice.subset(dataio.protocol_ids(voice, labels, part))
    s = feature_analytics(params, bf, bv, labels, make_rng(cfg.eval.trials_seed), cfg.eval.analytics_cap)
    write_csv(wd / cfg.paths.analytics_csv, ["orthogonality", "same_sim", "diff_sim"],
              [[s["orthogonality"], s["same_sim"], s["diff_sim"]]])
    print(" ".join(f"{k}={v:.4f}" for k, v in s.items()))
    return EXIT_OK


def cmd_bench_loss(cfg: RunConfig, wd: Path, args) -> int:
    kinds = _csv_list(args.losses) if args.losses else BENCH_KINDS
    for k in kinds:
        if k not in BENCH_KINDS:
            raise UsageError(f"unknown bench loss {k!r}; choose from {', '.join(BENCH_KINDS)}")
    reports = [bench(k, reps=cfg.eval.bench_reps, rng=make_rng(cfg.train.seed)) for k in kinds]
    for r in reports:
        lo, hi = SLOPE_BRACKETS[r.loss]
        print(f"{r.loss:>12}: slope {r.slope:.3f} (expected {lo}-{hi})")
    write_csv(wd / cfg.paths.bench_csv, ["loss", "n", "median_seconds", "slope"], report_rows(reports))
    if args.compare_n:
        times = compare_at(args.compare_n, reps=cfg.eval.bench_reps)
        print("at n=%d: " % args.compare_n + ", ".join(f"{k} {v:.4g}s" for k, v in times.items()))
    # wall-clock values are machine dependent; the resolved config is still written
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, wd: Path, args) -> int:
    kinds = _csv_list(args.losses) if args.losses else LOSS_KINDS
    for k in kinds:
        if k not in LOSS_KINDS:
            raise UsageError(f"unknown loss {k!r}; choose from {', '.join(LOSS_KINDS)}")
    results = gradcheck(kinds, cfg.eval.gradcheck_seeds, cfg.train)
    tol = cfg.eval.gradcheck_tol
    rows = []
    for r in results:
        ok = r.max_rel_err <= tol
        rows.append([r.loss, r.max_rel_err, r.worst_tensor, r.seeds, "pass" if ok else "FAIL"])
        print(f"{r.loss:>12}: max rel err {r.max_rel_err:.3e} ({r.worst_tensor}) {'ok' if ok else 'FAIL'}")
    write_csv(wd / cfg.paths.gradcheck_csv, ["loss", "max_rel_err", "worst_tensor", "seeds", "status"], rows)
    return EXIT_OK if all(r[-1] == "pass" for r in rows) else EXIT_NUMERIC


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval-verify": cmd_eval_verify,
    "eval-match": cmd_eval_match,
    "analyze": cmd_analyze,
    "bench-loss": cmd_bench_loss,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--workdir", default=".", help="directory holding inputs and outputs")
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="fopkit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "eval-verify":
            sp.add_argument("--stratify", help="comma list of none,G,N,A,GNA")
            sp.add_argument("--protocol", choices=["seen", "unseen", "val"])
        elif name == "eval-match":
            sp.add_argument("--nc", help="comma list of gallery sizes, e.g. 2,4,6,8,10")
            sp.add_argument("--protocol", choices=["seen", "unseen", "val"])
        elif name == "analyze":
            sp.add_argument("--protocol", choices=["seen", "unseen", "val"])
        elif name == "bench-loss":
            sp.add_argument("--losses", help=f"comma list from {','.join(BENCH_KINDS)}")
            sp.add_argument("--compare-n", type=int, default=256,
                            help="common n for the ours/contrastive/triplet timing (0 to skip)")
        elif name == "gradcheck":
            sp.add_argument("--losses", help=f"comma list from {','.join(LOSS_KINDS)}")
            sp.add_argument("--seeds", type=int)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for item in args.set:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value)
    if getattr(args, "stratify", None):
        cfg.set("eval.stratify", args.stratify)
        for s in cfg.eval.stratify:
            if s not in dataio.STRATA:
                raise ConfigError(f"unknown stratum {s!r}")
    if getattr(args, "nc", None):
        cfg.set("eval.nc", args.nc)
    if getattr(args, "protocol", None):
        cfg.set("eval.protocol", args.protocol)
    if getattr(args, "seeds", None):
        cfg.eval.gradcheck_seeds = args.seeds
    try:
        cfg.synth.validate()
        cfg.train.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    wd = Path(args.workdir)
    try:
        cfg = resolve_config(args)
        wd.mkdir(parents=True, exist_ok=True)
        (wd / f"{args.command}.resolved.cfg").write_text(cfg.dumps())
        return COMMANDS[args.command](cfg, wd, args)
    except (ConfigError, UsageError) as exc:
        print(f"fopkit: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dataio.DataError, FileNotFoundError) as exc:
        print(f"fopkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError, ArithmeticError) as exc:
        print(f"fopkit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
