"""``chromaseq`` command-line interface.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import html
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import checkpoint as ckpt_io
from .active_learning import format_round_table, predict_colors, run_rounds, write_rounds_csv
from .color_data import DataError, format_hex, load_csv, save_csv, split
from .name_gen import DEFAULT_COLORS, filter_fresh, generate_names, load_adjectives
from .nn import gradcheck
from .nn.layers import NumericError
from .nn.model import ModelConfig, parameter_count
from .text_codec import build_vocab, max_len_for
from .training import EncodedData, TrainSchedule, evaluate_encoded, train

logger = logging.getLogger("chromaseq")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "CHROMASEQ_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _fraction(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {value}")
    return value


def _int_list(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _word_list(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment. Keys may use dashes or underscores."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


# -- argument groups ---------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--embed-dim", type=_positive_int, default=64)
    g.add_argument("--conv-filters", type=_positive_int, default=256)
    g.add_argument("--conv-kernel", type=_positive_int, default=5)
    g.add_argument("--lstm-hidden", type=_positive_int, default=256)
    g.add_argument("--dense-dims", type=_int_list, default=(256, 128), help="comma-separated widths")
    g.add_argument("--pooling", choices=("last", "mean"), default="last")


def _add_schedule_flags(p, epochs, batch, lr, prefix=""):
    g = p.add_argument_group(f"{prefix.rstrip('-') or 'training'} schedule")
    g.add_argument(f"--{prefix}epochs", type=_positive_int, default=epochs)
    g.add_argument(f"--{prefix}batch-size", type=_positive_int, default=batch)
    g.add_argument(f"--{prefix}val-split", type=_fraction, default=0.2)
    g.add_argument(f"--{prefix}lr", type=float, default=lr)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chromaseq", description="Learn word-to-color mappings with a conv + BiLSTM network.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a name,hex CSV and write the normalized dataset")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--out", help="output directory")
    p.add_argument("--limit", type=_positive_int)

    p = sub.add_parser("train", help="stage-1 training")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--out", help="output directory")
    p.add_argument("--limit", type=_positive_int)
    p.add_argument("--no-plot", action="store_true")
    _add_model_flags(p)
    _add_schedule_flags(p, 350, 512, 1e-3)

    p = sub.add_parser("eval", help="loss and accuracy on the train and validation splits")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--limit", type=_positive_int)
    p.add_argument("--val-split", type=_fraction, default=None)

    p = sub.add_parser("predict", help="predict colors for words")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("words", nargs="+")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("generate-names", help="adjective x color candidate names")
    _add_common(p)
    p.add_argument("--adjectives", help="one word per line (default: bundled list)")
    p.add_argument("--colors", type=_word_list, default=DEFAULT_COLORS)
    p.add_argument("--dataset", help="drop names already present in this dataset")
    p.add_argument("--out", help="output directory (names.txt); prints to stdout otherwise")

    p = sub.add_parser("active-learn", help="pseudo-label generated names and retrain")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--out", help="output directory")
    p.add_argument("--checkpoint", help="start from this model; trains stage 1 first when omitted")
    p.add_argument("--limit", type=_positive_int)
    p.add_argument("--adjectives")
    p.add_argument("--colors", type=_word_list, default=DEFAULT_COLORS)
    p.add_argument("--rounds", type=_positive_int, default=1)
    p.add_argument("--no-plot", action="store_true")
    _add_schedule_flags(p, 15, 1024, 5e-4)
    _add_schedule_flags(p, 350, 512, 1e-3, prefix="stage1-")
    _add_model_flags(p)

    p = sub.add_parser("swatch", help="render predictions as a static HTML table")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("words_file", help="one word or phrase per line")
    p.add_argument("out", help="output HTML path")

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    _add_common(p)
    p.add_argument("--tolerance", type=float, default=gradcheck.REL_TOL)
    return parser


REQUIRED = {
    "ingest": ("dataset", "out"),
    "train": ("dataset", "out"),
    "eval": ("checkpoint", "dataset"),
    "active-learn": ("dataset", "out"),
}


def _config_path(argv) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv):
    argv = list(argv)
    parser = build_parser()
    command = next((tok for tok in argv if tok in COMMANDS), None)
    config_path = _config_path(argv)
    if command is not None and config_path:
        file_values = read_config_file(config_path)
        subparser = parser._subparsers._group_actions[0].choices[command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(file_values) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for action in subparser._actions:
            if action.dest in file_values and isinstance(action, argparse._StoreTrueAction):
                flag = file_values[action.dest].lower()
                if flag not in ("true", "false", "1", "0", "yes", "no"):
                    raise UsageError(f"{action.dest} must be true or false, got {flag!r}")
                file_values[action.dest] = flag in ("true", "1", "yes")
        # argparse applies each option's type to string defaults
        subparser.set_defaults(**file_values)
    args = parser.parse_args(argv)
    missing = [k for k in REQUIRED.get(args.command, ()) if getattr(args, k, None) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))
    if getattr(args, "seed", None) is None:
        env = os.environ.get(SEED_ENV)
        try:
            args.seed = int(env) if env else 0
        except ValueError as exc:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from exc
    return args


# -- helpers -----------------------------------------------------------------

def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_config(args, dataset) -> ModelConfig:
    return ModelConfig(
        vocab_size=build_vocab(dataset).size,
        max_len=max_len_for(dataset),
        embed_dim=args.embed_dim,
        conv_filters=args.conv_filters,
        conv_kernel=args.conv_kernel,
        lstm_hidden=args.lstm_hidden,
        dense_dims=args.dense_dims,
        pooling=args.pooling,
    )


def _schedule(args, seed, prefix="") -> TrainSchedule:
    get = lambda name: getattr(args, prefix + name)  # noqa: E731
    return TrainSchedule(epochs=get("epochs"), batch_size=get("batch_size"), val_fraction=get("val_split"),
                         seed=seed, learning_rate=get("lr"))


def _progress(every):
    def report(m):
        if m.epoch % every == 0 or m.epoch == 1:
            logger.info("epoch %4d  train loss %.5f acc %.3f | val loss %.5f acc %.3f",
                        m.epoch, m.train_loss, m.train_acc, m.val_loss, m.val_acc)
    return report


def _metrics_dict(m) -> dict:
    return {"train_loss": m.train_loss, "train_acc": m.train_acc, "val_loss": m.val_loss, "val_acc": m.val_acc}


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- commands ----------------------------------------------------------------

def cmd_ingest(args) -> int:
    dataset = load_csv(args.dataset, limit=args.limit)
    out = _out_dir(args.out)
    save_csv(dataset, out / "dataset.csv")
    fp = dataset.fingerprint()
    print(f"{fp['rows']} records  sha256={fp['sha256']}  -> {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = load_csv(args.dataset, limit=args.limit)
    vocab = build_vocab(dataset)
    config = _model_config(args, dataset)
    schedule = _schedule(args, args.seed)
    out = _out_dir(args.out)
    logger.info("%d records, vocab %d, max_len %d, %d parameters", len(dataset), vocab.size, config.max_len,
                parameter_count(config))
    params, report, opt = train(dataset, config, schedule, vocab, progress=_progress(max(1, schedule.epochs // 20)))
    meta = {
        "dataset": dataset.fingerprint(),
        "schedules": [{"stage": 1, **schedule.to_dict()}],
        "seed": args.seed,
        "metrics": _metrics_dict(report.final),
    }
    ckpt_io.save(ckpt_io.Checkpoint(config, vocab, params, opt, meta), out / "model.csq")
    report.write_csv(out / "history.csv")
    _write_json(report.to_dict(), out / "report.json")
    if not args.no_plot:
        from .plotting import plot_history

        plot_history(report.epochs, out / "history.png", title="stage 1")
    f = report.final
    print(f"epochs {f.epoch}  train loss {f.train_loss:.5f} acc {f.train_acc:.3f}  "
          f"val loss {f.val_loss:.5f} acc {f.val_acc:.3f}  ({report.wall_time:.1f}s)")
    print(f"wrote {out / 'model.csq'}, {out / 'history.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ck = ckpt_io.load(args.checkpoint)
    dataset = load_csv(args.dataset, limit=args.limit)
    stage = (ck.metadata.get("schedules") or [{}])[-1]
    val_split = args.val_split or stage.get("val_fraction", 0.2)
    seed = stage.get("seed", args.seed)
    try:
        train_idx, val_idx = split(dataset, val_split, seed)
    except DataError as exc:
        raise UsageError(str(exc)) from exc
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise UsageError(f"empty split: {len(train_idx)} train / {len(val_idx)} val records")
    data = EncodedData.build(dataset, ck.vocab, ck.config.max_len, ck.params.dtype)
    for label, idx in (("train", train_idx), ("val", val_idx)):
        loss, acc = evaluate_encoded(ck.params, ck.config, data, idx)
        print(f"{label:<5} n={len(idx):<6} loss {loss:.6f}  accuracy {acc:.4f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    ck = ckpt_io.load(args.checkpoint)
    words = [w for w in args.words]
    if any(not w.strip() for w in words):
        raise UsageError("words must be non-empty")
    rgb = predict_colors(ck.params, ck.config, ck.vocab, words)
    if args.json:
        print(json.dumps([{"name": w, "hex": format_hex(c), "rgb": [int(v) for v in c]} for w, c in zip(words, rgb)]))
    else:
        for w, c in zip(words, rgb):
            print(f"{w}\t{format_hex(c)}\t{c[0]},{c[1]},{c[2]}")
    return EXIT_OK


def cmd_generate_names(args) -> int:
    names = generate_names(load_adjectives(args.adjectives), args.colors)
    if args.dataset:
        names = filter_fresh(names, load_csv(args.dataset))
    text = "\n".join(names) + ("\n" if names else "")
    if args.out:
        path = _out_dir(args.out) / "names.txt"
        path.write_text(text, encoding="utf-8")
        print(f"{len(names)} names -> {path}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_active_learn(args) -> int:
    dataset = load_csv(args.dataset, limit=args.limit)
    adjectives = load_adjectives(args.adjectives)
    out = _out_dir(args.out)
    stage2 = _schedule(args, args.seed)
    plot = not args.no_plot
    if plot:
        from .plotting import plot_history, plot_rounds

    if args.checkpoint:
        ck = ckpt_io.load(args.checkpoint)
        config, vocab, params, meta = ck.config, ck.vocab, ck.params, dict(ck.metadata)
        schedules = list(meta.get("schedules", []))
        stage1_final = None
    else:
        vocab = build_vocab(dataset)
        config = _model_config(args, dataset)
        stage1 = _schedule(args, args.seed, prefix="stage1_")
        logger.info("stage 1: %d records, %d parameters", len(dataset), parameter_count(config))
        params, report1, _ = train(dataset, config, stage1, vocab, progress=_progress(max(1, stage1.epochs // 20)))
        report1.write_csv(out / "history_stage1.csv")
        if plot:
            plot_history(report1.epochs, out / "history_stage1.png", title="stage 1")
        schedules = [{"stage": 1, **stage1.to_dict()}]
        stage1_final = report1.final
        meta = {"dataset": dataset.fingerprint(), "seed": args.seed, "metrics": _metrics_dict(report1.final)}

    augmented, params, reports = run_rounds(dataset, params, config, vocab, stage2, adjectives, args.colors,
                                            args.rounds, progress=_progress(5))
    for rep in reports:
        if rep.stage2 is not None:
            rep.stage2.write_csv(out / f"history_round{rep.round}.csv")
            if plot:
                plot_history(rep.stage2.epochs, out / f"history_round{rep.round}.png", title=f"round {rep.round}")
            schedules.append({"stage": 2, "round": rep.round, **stage2.to_dict()})
    meta.update({
        "schedules": schedules,
        "augmented_dataset": augmented.fingerprint(),
        "adjectives_sha256": adjectives.fingerprint(),
        "colors": list(args.colors),
        "rounds": [r.to_dict() for r in reports],
    })
    save_csv(augmented, out / "augmented.csv")
    ckpt_io.save(ckpt_io.Checkpoint(config, vocab, params, None, meta), out / "model.csq")
    write_rounds_csv(reports, out / "rounds.csv")
    table = format_round_table(reports, stage1_final)
    (out / "rounds.txt").write_text(table + "\n", encoding="utf-8")
    _write_json([r.to_dict() for r in reports], out / "rounds.json")
    if plot:
        plot_rounds(reports, out / "rounds.png")
    print(table)
    print(f"dataset {len(dataset)} -> {len(augmented)} records; wrote {out / 'augmented.csv'}, {out / 'model.csq'}")
    return EXIT_OK


_SWATCH_TEMPLATE = """<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>chromaseq swatches</title>
<style>
body {{ font-family: sans-serif; margin: 2em; }}
table {{ border-collapse: collapse; }}
td, th {{ padding: 0.4em 1em; border-bottom: 1px solid #ddd; text-align: left; }}
td.swatch {{ width: 8em; }}
code {{ font-size: 1.1em; }}
</style>
</head>
<body>
<table>
<thead><tr><th>name</th><th>hex</th><th>color</th></tr></thead>
<tbody>
{rows}
</tbody>
</table>
</body>
</html>
"""


def render_swatch_html(names, rgb) -> str:
    rows = []
    for name, c in zip(names, rgb):
        hx = format_hex(c)
        rows.append(f'<tr><td>{html.escape(name)}</td><td><code>{hx}</code></td>'
                    f'<td class="swatch" style="background-color: {hx}"></td></tr>')
    return _SWATCH_TEMPLATE.format(rows="\n".join(rows))


def cmd_swatch(args) -> int:
    ck = ckpt_io.load(args.checkpoint)
    try:
        lines = Path(args.words_file).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {args.words_file}: {exc}") from exc
    names = [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not names:
        raise DataError(f"{args.words_file}: no words")
    rgb = predict_colors(ck.params, ck.config, ck.vocab, names)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_swatch_html(names, rgb), encoding="utf-8")
    print(f"{len(names)} swatches -> {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(args.seed)
    width = max(map(len, results))
    for name, err in results.items():
        print(f"{name:<{width}}  {err:.3e}  {'ok' if err < args.tolerance else 'FAIL'}")
    worst = max(results.values())
    print(f"max relative error {worst:.3e} (tolerance {args.tolerance:g})")
    return EXIT_OK if worst < args.tolerance else EXIT_NUMERIC


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "generate-names": cmd_generate_names,
    "active-learn": cmd_active_learn,
    "swatch": cmd_swatch,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ckpt_io.CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
