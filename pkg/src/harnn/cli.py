"""Command-line entry point.

Every command that writes into ``--out`` also drops a ``manifest.json``
(command, arguments, seed, config, package version) so an output directory
describes how it was made.  Failures print one line to stderr::

    error<TAB><kind><TAB><message>

and exit with the code of that kind (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from harnn import __version__

EXIT_CODES = {"usage": 2, "missing-file": 3, "checkpoint": 4, "data": 5, "numeric": 6, "invalid": 7}

CHOICES = {
    "model": ("pop", "nhmf", "harnn"), "placement": ("none", "input", "output", "both"), "mode": ("mix", "het"),
    "pool": ("mean", "max"), "share": ("shared", "separate"), "reduction": ("sum", "average"),
    "cell": ("gru", "lstm"),
}
REPORT_TSV, REPORT_JSON, METRICS_TSV, CHECKPOINT = "report.tsv", "report.json", "metrics.tsv", "model.ckpt"


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


# --- helpers -------------------------------------------------------------------------

def _need_file(path, what="file"):
    if path is None or not os.path.exists(path):
        raise CliError("missing-file", f"{what} not found: {path}")
    return path


def _k_list(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(sorted({int(x) for x in text.split(",") if x.strip()}))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None
    if not ks or ks[0] < 1:
        raise argparse.ArgumentTypeError("cutoffs must be positive")
    return ks


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _write(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _manifest(out_dir, args, seed, config: dict | None = None):
    os.makedirs(out_dir, exist_ok=True)
    info = {"command": args.command, "version": __version__, "seed": seed, "config": config,
            "args": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command", "out")}}
    _write(os.path.join(out_dir, "manifest.json"), json.dumps(info, indent=2, sort_keys=True, default=list) + "\n")


def _load(args, config=None):
    from harnn.schema import load_dataset

    _need_file(args.data, "data directory")
    _need_file(os.path.join(args.data, "interactions.tsv"), "interactions file")
    if args.schema is not None:
        _need_file(args.schema, "schema file")
    min_count = config.min_count if config is not None else 2
    return load_dataset(args.data, args.schema, min_count=min_count, seed=config.seed if config else 0)


def _config(args):
    """TrainConfig from ``--config`` with every explicitly given flag applied on top."""
    from harnn.trainer import TrainConfig

    base = {}
    if args.config is not None:
        with open(_need_file(args.config, "config file"), encoding="utf-8") as fh:
            base = json.load(fh)
    for f in dataclasses.fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            base[f.name] = value
    return TrainConfig.from_dict(base)


def _read_users(path, ds) -> list[int]:
    index = {u: i for i, u in enumerate(ds.user_ids)}
    out = []
    with open(_need_file(path, "users file"), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            uid = line.strip()
            if not uid:
                continue
            if uid not in index:
                raise CliError("data", f"{path}:{lineno}: unknown user {uid!r}")
            out.append(index[uid])
    return out


def _splits(ds, config):
    from harnn.studies import make_splits

    return make_splits(ds, config)


def _report(model, sp, args, users=None):
    from harnn.evaluate import evaluate

    return evaluate(model, sp.history, sp.test, args.exclude_history == "on", args.k, users=users)


def _write_report(out_dir, report):
    _write(os.path.join(out_dir, REPORT_TSV), report.to_tsv())
    _write(os.path.join(out_dir, REPORT_JSON), report.to_json(per_user=True))


# --- commands ------------------------------------------------------------------------

def cmd_ingest(args):
    from harnn.schema import write_dataset_artifacts

    ds = _load(args)
    write_dataset_artifacts(ds, args.out)
    _manifest(args.out, args, None)
    print(f"users\t{ds.n_users}\nitems\t{ds.n_items}\ninteractions\t{len(ds)}")


def cmd_synth(args):
    from harnn.synth import SynthSpec, generate_synthetic

    data = {}
    if args.config is not None:
        with open(_need_file(args.config, "synthetic spec"), encoding="utf-8") as fh:
            data = json.load(fh)
    for f in dataclasses.fields(SynthSpec):
        value = getattr(args, "synth_" + f.name, None)
        if value is not None:
            data[f.name] = value
    if args.seed is not None:
        data["seed"] = args.seed
    unknown = set(data) - {f.name for f in dataclasses.fields(SynthSpec)}
    if unknown:
        raise CliError("invalid", f"unknown synthetic spec fields: {sorted(unknown)}")
    spec = SynthSpec.from_dict(data)
    generate_synthetic(spec, args.out)
    _manifest(args.out, args, spec.seed, spec.to_dict())


def cmd_train(args):
    from harnn.checkpoint import save_model
    from harnn.trainer import train

    config = _config(args)
    ds = _load(args, config)
    sp = _splits(ds, config)
    result = train(sp.train, sp.dev, config)
    os.makedirs(args.out, exist_ok=True)
    save_model(os.path.join(args.out, CHECKPOINT), result.model, config, ds)
    _write(os.path.join(args.out, METRICS_TSV), result.metrics_tsv())
    _write(os.path.join(args.out, "config.json"), json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_report(args.out, _report(result.model, sp, args))
    _manifest(args.out, args, config.seed, config.to_dict())
    print(f"best_epoch\t{result.best_epoch}\nbest_dev_perplexity\t{result.best_dev_perplexity:.10f}")


def _load_checkpoint(args):
    from harnn.checkpoint import load_model, read_checkpoint
    from harnn.trainer import TrainConfig

    _need_file(args.checkpoint, "checkpoint")
    _, cfg, _, _ = read_checkpoint(args.checkpoint)
    ds = _load(args, TrainConfig.from_dict(cfg))
    model, config = load_model(args.checkpoint, ds)
    return ds, model, config


def cmd_eval(args):
    ds, model, config = _load_checkpoint(args)
    users = _read_users(args.users, ds) if args.users else None
    report = _report(model, _splits(ds, config), args, users)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_report(args.out, report)
        _manifest(args.out, args, config.seed, config.to_dict())
    sys.stdout.write(report.to_tsv())


def cmd_recommend(args):
    from harnn.params import predict_top_k
    from harnn.sequences import build_sequences

    ds, model, config = _load_checkpoint(args)
    users = _read_users(args.users, ds) if args.users else list(range(ds.n_users))
    past = {s.user: s.items for s in build_sequences(ds)}
    k = max(args.k)
    contexts = [past.get(u, ()) for u in users]
    scores = model.user_scores(np.asarray(users, dtype=np.int64), contexts) if users else []
    lines = ["user\trank\titem\tscore\n"]
    for u, row, ctx in zip(users, scores, contexts):
        exclude = set(ctx) if args.exclude_history == "on" else ()
        for rank, item in enumerate(predict_top_k(row, k, exclude), 1):
            lines.append(f"{ds.user_ids[u]}\t{rank}\t{ds.item_ids[item]}\t{row[item]:.10g}\n")
    sys.stdout.write("".join(lines))


def cmd_nn(args):
    from harnn.params import nearest_neighbors

    ds, model, config = _load_checkpoint(args)
    if config.model == "pop":
        raise CliError("invalid", "POP has no attribute embeddings")
    type_name, sep, token = args.token.partition("=")
    if not sep:
        raise CliError("usage", f"--token must be TYPE=TOKEN, got {args.token!r}")
    vocab = ds.vocab[args.side]
    index = vocab.get(type_name, token)
    if index is None:
        raise CliError("data", f"unknown {args.side} attribute {type_name}={token}")
    phi = model.store[f"{args.side}_attr"]
    lines = ["type\ttoken\tcosine_distance\n"]
    for j, dist in nearest_neighbors(phi, index, max(args.k)):
        t, tok = vocab.entries[j]
        lines.append(f"{t}\t{tok}\t{dist:.10f}\n")
    sys.stdout.write("".join(lines))


def _study_seeds(args, config):
    return [config.seed + s for s in range(args.seeds)]


def cmd_study_sampling(args):
    from harnn.studies import sampling_study

    config = _config(args)
    ds = _load(args, config)
    study = sampling_study(ds, config, _study_seeds(args, config), args.levels, args.drop_prob, args.keep_original,
                           args.k, args.exclude_history == "on")
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "sampling.tsv"), study.to_tsv())
    _write(os.path.join(args.out, "sampling.json"), study.to_json())
    _manifest(args.out, args, config.seed, config.to_dict())
    sys.stdout.write(study.to_tsv())


def cmd_study_scaling(args):
    from harnn.studies import scaling_study

    config = _config(args)
    ds = _load(args, config)
    study = scaling_study(ds, config, _study_seeds(args, config), args.fractions, cutoffs=args.k,
                          exclude_history=args.exclude_history == "on")
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "scaling.tsv"), study.to_tsv())
    _write(os.path.join(args.out, "scaling.json"), study.to_json())
    _manifest(args.out, args, config.seed, config.to_dict())
    sys.stdout.write(study.to_tsv())


# --- parser --------------------------------------------------------------------------

def _add_data(p, schema=True):
    p.add_argument("--data", required=True, help="dataset directory")
    if schema:
        p.add_argument("--schema", help="attribute schema JSON (default: DATA/schema.json)")


def _add_eval(p):
    from harnn.evaluate import CUTOFFS

    p.add_argument("--exclude-history", choices=("on", "off"), default="off")
    p.add_argument("--k", type=_k_list, default=CUTOFFS, help="comma-separated cutoffs")


def _add_train_flags(p):
    from harnn.trainer import TrainConfig

    p.add_argument("--config", help="TrainConfig JSON; flags override its fields")
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = type(f.default)
        p.add_argument(flag, dest=f.name, type=kind, choices=CHOICES.get(f.name), default=None,
                       help=f"default {f.default}")


def build_parser() -> Parser:
    from harnn.studies import FRACTIONS
    from harnn.synth import SynthSpec

    parser = Parser(prog="harnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"harnn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("ingest", help="validate a dataset and write coded artifacts")
    _add_data(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="synthetic spec JSON; flags override its fields")
    p.add_argument("--seed", type=int)
    for f in dataclasses.fields(SynthSpec):
        if f.name != "seed":
            p.add_argument("--" + f.name.replace("_", "-"), dest="synth_" + f.name, type=type(f.default),
                           help=f"default {f.default}")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model, write checkpoint, metrics log and test report")
    _add_data(p)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    _add_eval(p)
    p.set_defaults(func=cmd_train)

    for name, func, hlp in (("eval", cmd_eval, "evaluate a checkpoint on the test slice"),
                            ("recommend", cmd_recommend, "print top-k items per user"),
                            ("nn", cmd_nn, "print nearest attribute embeddings")):
        p = sub.add_parser(name, help=hlp)
        _add_data(p)
        p.add_argument("--checkpoint", required=True)
        _add_eval(p)
        if name == "eval":
            p.add_argument("--out")
        if name != "nn":
            p.add_argument("--users", help="file with one user id per line")
        else:
            p.add_argument("--side", choices=("user", "item"), default="item")
            p.add_argument("--token", required=True, help="TYPE=TOKEN")
        p.set_defaults(func=func)

    p = sub.add_parser("study-sampling", help="subsequence sampling and augmentation sweep")
    _add_data(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=3, help="number of training seeds")
    p.add_argument("--levels", type=_k_list, default=(1, 2, 4, 8), help="levels N of x_N; x_N draws N+1 copies")
    p.add_argument("--drop-prob", type=float, help="one drop rate for every level (default N/(N+1) for x_N)")
    p.add_argument("--keep-original", action="store_true", help="add the original sequences to each level")
    _add_train_flags(p)
    _add_eval(p)
    p.set_defaults(func=cmd_study_sampling)

    p = sub.add_parser("study-scaling", help="nested user-fraction sweep for harnn and nhmf")
    _add_data(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=3, help="number of seeds")
    p.add_argument("--fractions", type=_float_list, default=FRACTIONS)
    _add_train_flags(p)
    _add_eval(p)
    p.set_defaults(func=cmd_study_scaling)
    return parser


def fail(kind: str, message: str) -> int:
    message = " ".join(str(message).split())
    sys.stderr.write(f"error\t{kind}\t{message}\n")
    return EXIT_CODES[kind]


def run(argv=None) -> int:
    from harnn.checkpoint import CheckpointError
    from harnn.schema import ParseError, SchemaError

    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        args.func(args)
    except CliError as exc:
        return fail(exc.kind, str(exc))
    except CheckpointError as exc:
        return fail("checkpoint", str(exc))
    except FileNotFoundError as exc:
        return fail("missing-file", f"{exc.strerror}: {exc.filename}")
    except (ParseError, SchemaError, json.JSONDecodeError) as exc:
        return fail("data", str(exc))
    except FloatingPointError as exc:
        return fail("numeric", str(exc))
    except (ValueError, KeyError, TypeError) as exc:
        return fail("invalid", str(exc))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
