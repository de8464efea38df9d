"""Command-line entry point: synth, train, eval, ablate, gradcheck, report."""

import argparse
import os
import sys
from dataclasses import asdict, replace

from . import harness
from .harness import ConfigError, DatasetMismatch, build_config, parse_config_text
from .metrics import write_report
from .numerics import CheckpointError
from .synth import load_dataset, synthesize

SEED_ENV = "COMMENTARY_SEED"


class UsageError(Exception):
    pass


def resolve_config(args):
    """Precedence, lowest first: COMMENTARY_SEED, --config file, --set, --seed."""
    values = {}
    if os.environ.get(SEED_ENV) is not None:
        values["seed"] = os.environ[SEED_ENV]
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(key.strip(), "expected KEY=VALUE")
        values[key.strip()] = value.strip()
    if args.seed is not None:
        values["seed"] = str(args.seed)
    config = build_config(values)
    if not args.out:
        raise UsageError(f"{args.command}: --out is required")
    os.makedirs(args.out, exist_ok=True)
    return config


def _dataset_path(args, config):
    path = args.data or config.dataset
    if not path:
        raise ConfigError("dataset", "no dataset given (use --data or a 'dataset' config key)")
    return path


def _open_splits(path):
    if not os.path.isfile(os.path.join(path, "manifest.json")):
        raise FileNotFoundError(2, "dataset manifest not found", os.path.join(path, "manifest.json"))
    return load_dataset(path)


def cmd_synth(args):
    config = resolve_config(args)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    splits, manifest = synthesize(args.out, args.n, seed=config.seed, F=config.F, G=config.G,
                                  D=config.D, max_len=config.max_len, ratios=ratios, noise=args.noise)
    sizes = "/".join(str(len(s)) for s in splits)
    print(f"wrote {args.n} clips ({sizes}) to {args.out}")
    return 0


def cmd_train(args):
    config = resolve_config(args)
    data = _dataset_path(args, config)
    splits, _ = _open_splits(data)
    config = replace(config, dataset=data)
    result = harness.train(config, splits, log_path=os.path.join(args.out, "loss_log.csv"))
    harness.save_model(os.path.join(args.out, "model.cexp"), result)
    with open(os.path.join(args.out, "config.cfg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(harness.format_config(replace(config, dataset="")))
    first, last = result.log[0]["L_total"], result.log[-1]["L_total"]
    print(f"trained {len(result.log)} steps; L_total {first:.4f} -> {last:.4f}")
    return 0


def _load_for_eval(args):
    if not os.path.isfile(args.checkpoint):
        raise FileNotFoundError(2, "checkpoint not found", args.checkpoint)
    model, _, model_config = harness.load_model(args.checkpoint)
    splits, _ = _open_splits(args.data)
    harness.check_vocab(model, splits)
    return model, model_config, splits


def cmd_eval(args):
    config = resolve_config(args)
    model, model_config, splits = _load_for_eval(args)
    report = harness.evaluate(model, splits.by_name(args.split), model_config.weights,
                              oracle=args.oracle, config=asdict(model_config))
    label = "oracle" if args.oracle else "model"
    write_report(os.path.join(args.out, "report.csv"), {label: report.scores})
    harness.write_samples(os.path.join(args.out, "samples.csv"), report)
    s = report.scores
    print(f"{args.split}: {len(report)} clips, METEOR desc {s.description_meteor:.2f} "
          f"expl {s.explanation_meteor:.2f}, BLEU desc {s.description_bleu:.2f} "
          f"expl {s.explanation_bleu:.2f} (corpus METEOR is the mean of sentence scores); "
          f"free-running P_null {report.free_running['P_null']:.3f} "
          f"P_struct {report.free_running['P_struct']:.3f}; {len(report.flags)} flags; "
          f"threshold {config.threshold:g}; {report.runtime:.1f}s")
    return 0


def cmd_ablate(args):
    config = resolve_config(args)
    data = _dataset_path(args, config)
    splits, _ = _open_splits(data)
    results = harness.ablate(config, splits, sweep=args.sweep, split=args.split)
    name = "sweep" if args.sweep else "ablation"
    harness.write_table(os.path.join(args.out, f"{name}.csv"), results)
    write_report(os.path.join(args.out, f"{name}_report.csv"), results)
    for label, scores in results.items():
        values = " ".join(f"{scores.get(p, m):6.2f}" for p, m in harness.TABLE_COLUMNS)
        print(f"{label:45s} {values}")
    return 0


def cmd_gradcheck(args):
    config = resolve_config(args)
    report = harness.verify_gradients(config)
    harness.write_gradcheck(os.path.join(args.out, "gradcheck.csv"), report)
    worst = report.max_error
    stray = max(report.disconnected.values())
    ok = worst < 1e-4 and stray == 0.0
    print(f"max relative error {worst:.3e}; disconnected gradient {stray:.1e}; "
          f"{report.runtime:.1f}s; {'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


def cmd_report(args):
    config = resolve_config(args)
    model, model_config, splits = _load_for_eval(args)
    report = harness.evaluate(model, splits.by_name(args.split), model_config.weights,
                              config=asdict(model_config))
    threshold = config.threshold if args.threshold is None else args.threshold
    samples, notes = harness.qualitative_report(report, args.k, threshold,
                                                os.path.join(args.out, "attention"), model_config.G)
    harness.write_qualitative(os.path.join(args.out, "qualitative.csv"), samples, threshold)
    for note in notes:
        print(f"note: {note}")
    for s in samples:
        print(f"{s.rank:6s} {s.category:4s} {s.meteor:.3f} {s.clip_id}: {s.generated}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="commentary",
                                     description="Driving-commentary captioning experiments.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", default=None, help="output directory (required)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="'key = value' config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "write a synthetic dataset")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--ratios", default="0.75,0.125,0.125")

    p = add("train", cmd_train, "train a model")
    p.add_argument("--data", default=None)

    for name, func, text in (("eval", cmd_eval, "score a checkpoint on a split"),
                             ("report", cmd_report, "qualitative good/bad samples with attention")):
        p = add(name, func, text)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--split", default="test", choices=("train", "validation", "test"))
        if name == "eval":
            p.add_argument("--oracle", action="store_true", help="score truths against themselves")
        else:
            p.add_argument("--k", type=int, default=2)
            p.add_argument("--threshold", type=float, default=None)

    p = add("ablate", cmd_ablate, "train and score the loss-variant ablation")
    p.add_argument("--data", default=None)
    p.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p.add_argument("--sweep", action="store_true", help="lambda_pos / gamma_null sweep instead")

    add("gradcheck", cmd_gradcheck, "finite-difference gradient verification")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: invalid config value for key '{exc.key}': {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot read {exc.filename or exc}", file=sys.stderr)
        return 1
    except (DatasetMismatch, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
