"""``zslopt`` command line: synth, train, eval, gradcheck.

Exit codes: 0 on success, 1 when a run fails, 2 for usage or validation errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from . import dataset, gradcheck, mlp, structopt, vpb
from .errors import ConfigError, ZslError
from .evaluation import FORMATS, emit_report, eval_gzsl, eval_zsl

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

METHODS = ("vpb", "vcb", "srs", "brs", "sr", "br")
CHECKPOINT_NAME = "checkpoint.zslw"
TRAINLOG_NAME = "trainlog.csv"
CONFIG_NAME = "config.json"

# what each method pins in its config; user values must agree with these
_METHOD_FIXED = {
    "vpb": {"proto_mode": "learned"},
    "vcb": {"proto_mode": "centroid"},
    "srs": {"variant": "SRS"},
    "brs": {"variant": "BRS"},
    "sr": {"variant": "SRS", "lambda_struct": 0.0},
    "br": {"variant": "BRS", "lambda_struct": 0.0},
}

_SYNTH_DEFAULTS = {"p": 8, "q": 2, "d": 32, "k": 16, "n": 50, "sigma": 0.05, "test_seen_frac": 0.2}


class UsageError(Exception):
    """Bad input detected before any work started."""


def _config_class(method):
    return vpb.VpbConfig if method in ("vpb", "vcb") else structopt.StructOptConfig


def config_digest(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _read_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return obj


def _overrides(args, names):
    """Flag values the user actually passed; unset flags are absent or None."""
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


def _reject_unknown(cfg, allowed, where):
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise UsageError(f"unknown {where} keys: {', '.join(unknown)}")


def _load_dataset(path, normalize=False):
    try:
        return dataset.load(path, normalize=normalize)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ZslError as exc:
        raise UsageError(f"cannot load dataset {path}: {exc}") from None


# -- synth -------------------------------------------------------------------

def cmd_synth(args):
    cfg = dict(_SYNTH_DEFAULTS, seed=42)
    user = _read_config(args.config)
    _reject_unknown(user, cfg, "synth config")
    cfg.update(user)
    cfg.update(_overrides(args, list(_SYNTH_DEFAULTS) + ["seed"]))
    try:
        ds = dataset.synth(seed=cfg["seed"], p=cfg["p"], q=cfg["q"], d=cfg["d"], k=cfg["k"],
                           n_per_class=cfg["n"], noise_sigma=cfg["sigma"],
                           test_seen_frac=cfg["test_seen_frac"])
    except ZslError as exc:
        raise UsageError(str(exc)) from None
    print(dataset.save(ds, args.out or "data"))
    return EXIT_OK


# -- train -------------------------------------------------------------------

def _config_fields(cls):
    return [f.name for f in dataclasses.fields(cls)]


def build_train_config(args):
    """Merge defaults, the JSON config and flags; returns ``(method, normalize, config object)``."""
    user = _read_config(args.config)
    method = getattr(args, "method", None) or user.get("method")
    if method is None:
        raise UsageError("train needs --method (or a 'method' key in the config)")
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    cls = _config_class(method)
    fields = _config_fields(cls)
    _reject_unknown(user, fields + ["method", "normalize"], f"{method} config")
    merged = {k: v for k, v in user.items() if k not in ("method", "normalize")}
    foreign = sorted(n for n in _TRAIN_FLAGS if getattr(args, n, None) is not None and n not in fields)
    if foreign:
        raise UsageError(f"flags not used by method {method}: "
                         + ", ".join("--" + n.replace("_", "-") for n in foreign))
    merged.update(_overrides(args, fields))
    for key, value in _METHOD_FIXED[method].items():
        if key in merged and merged[key] != value:
            raise UsageError(f"method {method} fixes {key}={value!r}, got {merged[key]!r}")
        merged[key] = value
    normalize = bool(getattr(args, "normalize", user.get("normalize", False)))
    try:
        cfg = cls(**merged)
        cfg.validate()
    except (TypeError, ConfigError) as exc:
        raise UsageError(f"invalid {method} config: {exc}") from None
    return method, normalize, cfg


def run_record(method, normalize, cfg, ds):
    """Everything ``eval`` needs to rebuild a trained model, echoed as config.json."""
    return {
        "method": method,
        "normalize": normalize,
        "config": cfg.to_dict(),
        "dataset": {"name": ds.name, "d": ds.d, "k": ds.k, "seen_classes": ds.seen_classes.tolist(),
                    "unseen_classes": ds.unseen_classes.tolist()},
    }


def cmd_train(args):
    method, normalize, cfg = build_train_config(args)
    ds = _load_dataset(args.dataset, normalize)
    if isinstance(cfg, structopt.StructOptConfig):
        try:
            cfg.validate(ds.d)
            structopt._check_batch_feasible(ds, cfg)
        except ZslError as exc:
            raise UsageError(f"invalid {method} config for this dataset: {exc}") from None
    out = Path(args.out or "model")
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(cfg, vpb.VpbConfig):
        bank, net, log = vpb.train(ds, cfg)
        vpb.save_model(out / CHECKPOINT_NAME, bank, net)
    else:
        visual, semantic, log = structopt.train(ds, cfg)
        structopt.save_model(out / CHECKPOINT_NAME, visual, semantic)
    log.to_csv(out / TRAINLOG_NAME)
    record = run_record(method, normalize, cfg, ds)
    (out / CONFIG_NAME).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(out / CHECKPOINT_NAME)
    return EXIT_OK


# -- eval --------------------------------------------------------------------

def _load_model(model_dir, ds):
    model_dir = Path(model_dir)
    cfg_path, ckpt_path = model_dir / CONFIG_NAME, model_dir / CHECKPOINT_NAME
    for p in (cfg_path, ckpt_path):
        if not p.is_file():
            raise UsageError(f"model file not found: {p}")
    record = _read_config(cfg_path)
    method = record.get("method")
    if method not in METHODS:
        raise UsageError(f"{cfg_path}: unknown method {method!r}")
    try:
        nets = mlp.load_checkpoint(ckpt_path)
    except ZslError as exc:
        raise UsageError(str(exc)) from None
    if len(nets) != 2:
        raise UsageError(f"{ckpt_path}: expected 2 records, found {len(nets)}")
    if method in ("vpb", "vcb"):
        net, protos = nets
        if net.in_dim != ds.k or net.out_dim != ds.d:
            raise UsageError(f"checkpoint maps {net.in_dim}-dim attributes to {net.out_dim}-dim "
                             f"features, dataset has k={ds.k}, d={ds.d}")
        if protos.in_dim != ds.d or protos.hidden != ds.seen_classes.size:
            raise UsageError(f"checkpoint holds {protos.hidden} prototypes of dim {protos.in_dim}, "
                             f"dataset has {ds.seen_classes.size} seen classes of dim {ds.d}")
        model = vpb.VpbModel(vpb.bank_from_net(protos, ds.seen_classes), net)
    else:
        visual, semantic = nets
        if visual.in_dim != ds.d or semantic.in_dim != ds.k or visual.out_dim != semantic.out_dim:
            raise UsageError(f"checkpoint branches are {visual.in_dim}->{visual.out_dim} and "
                             f"{semantic.in_dim}->{semantic.out_dim}, dataset has d={ds.d}, k={ds.k}")
        model = structopt.StructOptModel(visual, semantic)
    return record, model


def cmd_eval(args):
    tasks = ("zsl", "gzsl") if args.task == "both" else (args.task,)
    record_path = Path(args.model_dir) / CONFIG_NAME
    normalize = bool(_read_config(record_path).get("normalize", False)) if record_path.is_file() else False
    ds = _load_dataset(args.dataset, normalize)
    record, model = _load_model(args.model_dir, ds)
    if "gzsl" in tasks and ds.test_seen_indices.size == 0:
        raise UsageError(f"dataset {args.dataset} has no seen test split; --task gzsl needs one")
    digest = config_digest({k: record[k] for k in ("method", "normalize", "config")})
    seed = int(args.seed if args.seed is not None else record["config"].get("seed", 0))
    recognizer = model.recognizer(ds.attributes)
    out = Path(args.out or args.model_dir)
    for task in tasks:
        fn = eval_zsl if task == "zsl" else eval_gzsl
        report = fn(recognizer, ds, config_digest=digest, seed=seed)
        emit_report(report, out, FORMATS)
        if task == "zsl":
            print(f"zsl  top1={report.top1_zsl:.4f}")
        else:
            print(f"gzsl ts={report.acc_ts:.4f} tr={report.acc_tr:.4f} H={report.harmonic:.4f}")
    return EXIT_OK


# -- gradcheck ---------------------------------------------------------------

def cmd_gradcheck(args):
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    start = args.seed if args.seed is not None else 0
    faults = (args.plant_fault,) if args.plant_fault else ()
    errors = gradcheck.run(range(start, start + args.seeds), faults=faults)
    failed = []
    for name in gradcheck.LOSS_NAMES:
        ok = errors[name] < gradcheck.TOLERANCE
        print(f"{name:<22} max_rel_err={errors[name]:.3e}  {'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append(name)
    if failed:
        print(f"gradcheck failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# -- parser ------------------------------------------------------------------

_TRAIN_FLAGS = {}


def _add_config_flags(group, cls):
    for f in dataclasses.fields(cls):
        if f.name == "seed":
            continue
        default = f.default
        kind = type(default) if default is not None else int
        if kind is bool:
            kind = _parse_bool
        group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind,
                           default=argparse.SUPPRESS, help=f"(default: {default})")
        _TRAIN_FLAGS[f.name] = cls


def _parse_bool(text):
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    def common(required_default):
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
        p.add_argument("--out", default=argparse.SUPPRESS, help=f"output directory (default: {required_default})")
        p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file; flags override its keys")
        return p

    parser = _Parser(prog="zslopt", description=__doc__.splitlines()[0],
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--config", default=None, help="JSON config file; flags override its keys")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common("data")], help="write a synthetic dataset")
    p.add_argument("--p", type=int, default=argparse.SUPPRESS, help="seen classes (default: 8)")
    p.add_argument("--q", type=int, default=argparse.SUPPRESS, help="unseen classes (default: 2)")
    p.add_argument("--d", type=int, default=argparse.SUPPRESS, help="feature dim (default: 32)")
    p.add_argument("--k", type=int, default=argparse.SUPPRESS, help="attribute dim (default: 16)")
    p.add_argument("--n", type=int, default=argparse.SUPPRESS, help="instances per class (default: 50)")
    p.add_argument("--sigma", type=float, default=argparse.SUPPRESS, help="feature noise (default: 0.05)")
    p.add_argument("--test-seen-frac", dest="test_seen_frac", type=float, default=argparse.SUPPRESS,
                   help="held-out fraction per seen class (default: 0.2)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common("model")], help="train a model on a dataset")
    p.add_argument("dataset", help="dataset directory or manifest")
    p.add_argument("--method", choices=METHODS, default=argparse.SUPPRESS,
                   help="vpb/vcb: prototype methods; srs/brs: structure optimization; "
                        "sr/br: the same without the structure term")
    p.add_argument("--normalize", action="store_true", default=argparse.SUPPRESS,
                   help="scale feature rows to unit norm (default: off)")
    _add_config_flags(p.add_argument_group("vpb / vcb"), vpb.VpbConfig)
    _add_config_flags(p.add_argument_group("srs / brs / sr / br"), structopt.StructOptConfig)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common("MODEL_DIR")], help="evaluate a trained model")
    p.add_argument("model_dir", metavar="MODEL_DIR")
    p.add_argument("dataset", metavar="DATASET")
    p.add_argument("--task", choices=("zsl", "gzsl", "both"), default="both", help="(default: both)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common("unused")], help="finite-difference check of all losses")
    p.add_argument("--seeds", type=int, default=20, help="number of random instances (default: 20)")
    p.add_argument("--plant-fault", dest="plant_fault", choices=gradcheck.LOSS_NAMES, default=None,
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    # sub-command flags default to SUPPRESS, so values given before the
    # command survive unless repeated after it
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"zslopt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ZslError, OSError, ArithmeticError) as exc:
        print(f"zslopt {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
