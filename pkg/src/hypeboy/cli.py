"""Command-line front end.

Every command takes its settings from flags, from a ``--config`` file, or
both (flags win). A config file is either flat ``key = value`` text with
``#`` comments or a manifest JSON written by an earlier run. Each run writes
its artifacts plus ``<command>-manifest.json`` into ``--out``; feeding that
manifest back through ``--config`` reproduces the same files.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from hypeboy import __version__
from hypeboy.diagnostics import diagnose
from hypeboy.encoder import load_checkpoint, save_checkpoint
from hypeboy.evaluate import (fine_tune, hyperedge_prediction, linear_probe, write_results_csv,
                              write_summary_json)
from hypeboy.hypergraph import (HypergraphFormatError, Hypergraph, SplitSpec, SyntheticSpec,
                                generate_synthetic, load_hypergraph, node_swap, save_hypergraph,
                                split_hyperedges, split_nodes)
from hypeboy.theory import theory_grid
from hypeboy.train import ModelParams, TrainConfig, embed, train

MANIFEST_FORMAT = "hypeboy-manifest"
MANIFEST_VERSION = 1
REQUIRED = object()


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# value parsers (accept strings from flags/files and typed values from manifests)
# ---------------------------------------------------------------------------

def _int(v):
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, int):
        return v
    return int(str(v).strip())


def _float(v):
    if isinstance(v, bool):
        raise ValueError("expected a number")
    return float(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _str(v):
    return str(v)


def parse_sizes(text):
    """``"4x100"`` or ``"3x10,4,5x2"`` into a tuple of hyperedge sizes."""
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        size, _, count = item.partition("x")
        out.extend([int(size)] * (int(count) if count else 1))
    if not out:
        raise ValueError("no hyperedge sizes given")
    return tuple(out)


def parse_int_range(text):
    """``"2..8"`` (inclusive) or ``"2,4,6"``."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty range {text!r}")
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",") if t.strip()]


def parse_float_range(text):
    """``"start:step:stop"`` (inclusive, exact decimal steps) or ``"0.1,0.5"``."""
    text = str(text).strip()
    if ":" in text:
        try:
            start, step, stop = (Decimal(t) for t in text.split(":"))
        except (ValueError, InvalidOperation) as exc:
            raise ValueError(f"bad range {text!r}") from exc
        if step <= 0 or stop < start:
            raise ValueError(f"bad range {text!r}")
        count = int((stop - start) / step) + 1
        return [float(start + i * step) for i in range(count)]
    return [float(t) for t in text.split(",") if t.strip()]


def parse_ratios(text):
    vals = tuple(float(t) for t in str(text).split(","))
    if len(vals) != 3:
        raise ValueError("expected three comma-separated ratios")
    return vals


# ---------------------------------------------------------------------------
# command schemas: key -> (parser, default, help)
# ---------------------------------------------------------------------------

COMMON = {
    "out": (_str, ".", "output directory"),
    "seed": (_int, 0, "global seed"),
}

SCHEMAS = {
    "generate": {
        "N": (_int, REQUIRED, "nodes per class"),
        "d": (_int, REQUIRED, "feature dimension"),
        "P": (_float, REQUIRED, "class affinity of hyperedges"),
        "sizes": (_str, REQUIRED, "hyperedge sizes, e.g. 4x100 or 3x10,5x2"),
    },
    "swap": {
        "input": (_str, REQUIRED, "hypergraph file"),
        "T": (_int, REQUIRED, "number of swap iterations"),
    },
    "train": {
        "input": (_str, REQUIRED, "hypergraph file with features"),
        "p_v": (_float, REQUIRED, "feature masking probability"),
        "p_e": (_float, REQUIRED, "hyperedge dropping probability"),
        "filling_epochs": (_int, REQUIRED, "hyperedge-filling epochs"),
        "warmup_epochs": (_int, 300, "feature-reconstruction warm-up epochs"),
        "lr": (_float, 1e-3, "filling learning rate"),
        "warmup_lr": (_float, 1e-3, "warm-up learning rate"),
        "weight_decay": (_float, 1e-6, "decoupled weight decay"),
        "hidden": (_int, 128, "encoder hidden width"),
        "embed_dim": (_int, 128, "embedding dimension"),
        "head_dim": (_int, 0, "projection head output dimension (0: embed_dim)"),
        "dropout": (_float, 0.5, "encoder dropout"),
        "temperature": (_float, 1.0, "softmax temperature of the filling loss"),
        "use_heads": (_bool, True, "use projection heads"),
    },
    "embed": {
        "input": (_str, REQUIRED, "hypergraph file with features"),
        "checkpoint": (_str, REQUIRED, "checkpoint written by train"),
    },
    "eval-node": {
        "input": (_str, REQUIRED, "hypergraph file with features and labels"),
        "protocol": (_str, "linear", "linear or finetune"),
        "embeddings": (_str, "", "embedding CSV for the linear protocol (empty: raw features)"),
        "checkpoint": (_str, "", "pretrained checkpoint for finetune (empty: random init)"),
        "repeats": (_int, 5, "independent splits"),
        "split": (_str, "0.01,0.01,0.98", "train,valid,test ratios"),
        "epochs": (_int, 200, "training epochs"),
        "lr": (_float, 1e-3, "learning rate"),
        "method": (_str, "", "method label in the results"),
    },
    "eval-edge": {
        "input": (_str, REQUIRED, "hypergraph file"),
        "embeddings": (_str, REQUIRED, "embedding CSV"),
        "repeats": (_int, 5, "independent splits"),
        "split": (_str, "0.6,0.2,0.2", "train,valid,test hyperedge ratios"),
        "epochs": (_int, 200, "training epochs"),
        "lr": (_float, 1e-3, "learning rate"),
        "hidden": (_int, 128, "classifier hidden width"),
        "dropout": (_float, 0.5, "classifier dropout"),
        "method": (_str, "", "method label in the results"),
    },
    "theory-grid": {
        "S": (_str, "2..8", "hyperedge sizes, e.g. 2..8"),
        "d": (_str, "2..8", "dimensions, e.g. 2..8"),
        "P": (_str, "0:0.1:1", "affinities, start:step:stop"),
        "trials": (_int, 100_000, "Monte Carlo trials per cell"),
        "N": (_int, 10, "nodes per class in the simulated universe"),
        "workers": (_int, 1, "worker processes"),
    },
    "diagnose": {
        "embeddings": (_str, REQUIRED, "embedding CSV"),
        "input": (_str, "", "hypergraph file with labels (for alignment)"),
    },
}

# keys that never change what is computed
_NON_SEMANTIC = {"workers"}


def schema(command):
    return {**SCHEMAS[command], **COMMON}


def read_config_file(path):
    """Flat ``key = value`` text or a manifest JSON. Returns (command or None, dict)."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        if payload.get("format") != MANIFEST_FORMAT:
            raise ConfigError("config", f"{path} is JSON but not a manifest")
        return payload.get("command"), dict(payload.get("config", {}))
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError("config", f"{path}:{lineno}: expected key = value")
        values[key.strip().replace("-", "_")] = value.strip()
    return None, values


def resolve(command, file_values, flag_values):
    """Merge defaults, file values and flags; validate keys and types."""
    spec = schema(command)
    merged = {}
    for source in (file_values, flag_values):
        for key, value in source.items():
            if key not in spec:
                raise ConfigError(key, f"unknown key for {command}")
            merged[key] = value
    out = {}
    for key, (parse, default, _) in spec.items():
        if key in merged:
            try:
                out[key] = parse(merged[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"invalid value {merged[key]!r} ({exc})") from None
        elif default is REQUIRED:
            raise ConfigError(key, "missing required key")
        else:
            out[key] = default
    return out


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def write_embeddings(path, Z):
    Z = np.asarray(Z, dtype=np.float64)
    header = ",".join(["node"] + [f"z{k}" for k in range(Z.shape[1])])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header.split(","))
        for i, row in enumerate(Z):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_embeddings(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "node":
        raise ValueError(f"{path}: missing 'node' header")
    body = rows[1:]
    ids = [int(r[0]) for r in body]
    if ids != list(range(len(body))):
        raise ValueError(f"{path}: node ids must be 0..n-1 in order")
    return np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(len(body), -1)


def _train_config(cfg):
    return TrainConfig(p_v=cfg["p_v"], p_e=cfg["p_e"], filling_epochs=cfg["filling_epochs"],
                       warmup_epochs=cfg["warmup_epochs"], lr=cfg["lr"], warmup_lr=cfg["warmup_lr"],
                       weight_decay=cfg["weight_decay"], hidden=cfg["hidden"], embed_dim=cfg["embed_dim"],
                       head_dim=cfg["head_dim"] or None, dropout=cfg["dropout"],
                       temperature=cfg["temperature"], use_heads=cfg["use_heads"], seed=cfg["seed"])


def load_model(path):
    arrays, meta = load_checkpoint(path)
    if "config" not in meta or "in_dim" not in meta:
        raise ValueError(f"{path}: checkpoint lacks model metadata")
    params = ModelParams(int(meta["in_dim"]), TrainConfig(**meta["config"]))
    params.load_arrays(arrays)
    return params


def _need(value, what, path):
    if value is None:
        raise ValueError(f"{path}: file has no {what}")
    return value


# ---------------------------------------------------------------------------
# commands: each returns the list of files it wrote (relative to out)
# ---------------------------------------------------------------------------

def cmd_generate(cfg, out):
    spec = SyntheticSpec(cfg["N"], cfg["d"], cfg["P"], parse_sizes(cfg["sizes"]), seed=cfg["seed"])
    hg, X, y = generate_synthetic(spec)
    save_hypergraph(out / "hypergraph.txt", hg, X, y)
    return ["hypergraph.txt"]


def cmd_swap(cfg, out):
    hg, X, y = load_hypergraph(cfg["input"])
    swapped = Hypergraph(hg.num_nodes, tuple(node_swap(hg.hyperedges, cfg["T"], cfg["seed"])))
    save_hypergraph(out / "hypergraph.txt", swapped, X, y)
    return ["hypergraph.txt"]


def cmd_train(cfg, out):
    hg, X, _ = load_hypergraph(cfg["input"])
    X = _need(X, "features", cfg["input"])
    config = _train_config(cfg)
    history = []
    params = train(X, hg.hyperedges, config, history=history)
    save_checkpoint(out / "checkpoint.json", params.named_arrays(),
                    {"config": asdict(config), "in_dim": int(X.shape[1])})
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "stage", "loss"])
        for epoch, stage, loss in history:
            w.writerow([epoch, stage, repr(loss)])
    return ["checkpoint.json", "history.csv"]


def cmd_embed(cfg, out):
    hg, X, _ = load_hypergraph(cfg["input"])
    X = _need(X, "features", cfg["input"])
    params = load_model(cfg["checkpoint"])
    write_embeddings(out / "embeddings.csv", embed(X, hg.hyperedges, params))
    return ["embeddings.csv"]


def cmd_eval_node(cfg, out):
    hg, X, y = load_hypergraph(cfg["input"])
    y = _need(y, "labels", cfg["input"])
    ratios = parse_ratios(cfg["split"])
    protocol = cfg["protocol"]
    if protocol == "linear":
        if cfg["embeddings"]:
            Z, method = read_embeddings(cfg["embeddings"]), "embeddings"
        else:
            Z, method = _need(X, "features", cfg["input"]), "raw"
        if Z.shape[0] != hg.num_nodes:
            raise ValueError("embedding rows do not match the node count")
    elif protocol == "finetune":
        X = _need(X, "features", cfg["input"])
        pretrained = load_model(cfg["checkpoint"]).encoder if cfg["checkpoint"] else None
        method = "pretrained" if pretrained is not None else "random-init"
    else:
        raise ConfigError("protocol", f"expected linear or finetune, got {protocol!r}")
    method = cfg["method"] or method
    rows = []
    for r in range(cfg["repeats"]):
        seed = cfg["seed"] + r
        splits = split_nodes(y, SplitSpec(ratios=ratios, seed=seed))
        if protocol == "linear":
            acc = linear_probe(Z, y, splits, epochs=cfg["epochs"], lr=cfg["lr"], seed=seed)
        else:
            acc = fine_tune(X, hg.hyperedges, pretrained, y, splits, epochs=cfg["epochs"],
                            lr=cfg["lr"], seed=seed)
        rows.append({"method": method, "task": f"node-{protocol}", "seed": seed, "split_id": r,
                     "metric": "accuracy", "value": acc})
    write_results_csv(out / "results.csv", rows)
    write_summary_json(out / "summary.json", rows)
    return ["results.csv", "summary.json"]


def cmd_eval_edge(cfg, out):
    hg, _, _ = load_hypergraph(cfg["input"])
    Z = read_embeddings(cfg["embeddings"])
    if Z.shape[0] != hg.num_nodes:
        raise ValueError("embedding rows do not match the node count")
    ratios = parse_ratios(cfg["split"])
    rows = []
    for r in range(cfg["repeats"]):
        seed = cfg["seed"] + r
        splits = split_hyperedges(hg, ratios, seed=seed)
        au = hyperedge_prediction(Z, hg.hyperedges, splits, seed=seed, epochs=cfg["epochs"],
                                  lr=cfg["lr"], hidden=cfg["hidden"], dropout=cfg["dropout"])
        rows.append({"method": cfg["method"] or "embeddings", "task": "hyperedge-prediction",
                     "seed": seed, "split_id": r, "metric": "auroc", "value": au})
    write_results_csv(out / "results.csv", rows)
    write_summary_json(out / "summary.json", rows)
    return ["results.csv", "summary.json"]


def cmd_theory_grid(cfg, out):
    rows = theory_grid(parse_int_range(cfg["S"]), parse_int_range(cfg["d"]), parse_float_range(cfg["P"]),
                       cfg["trials"], seed=cfg["seed"], N=cfg["N"], workers=cfg["workers"])
    cols = ("S", "d", "P", "closed_form", "mc_estimate", "mc_stderr")
    with open(out / "theory_grid.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([row["S"], row["d"], repr(row["P"])] + [repr(row[c]) for c in cols[3:]])
    return ["theory_grid.csv"]


def cmd_diagnose(cfg, out):
    Z = read_embeddings(cfg["embeddings"])
    labels = None
    if cfg["input"]:
        _, _, labels = load_hypergraph(cfg["input"])
        labels = _need(labels, "labels", cfg["input"])
    report = diagnose(Z, labels)
    with open(out / "spectrum.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "sigma", "relative"])
        for k, (s, rel) in enumerate(zip(report["singular_values"], report["relative_singular_values"])):
            w.writerow([k, repr(s), repr(rel)])
    summary = {k: report[k] for k in ("alignment", "uniformity", "effective_rank", "zero_norm_rows")}
    (out / "diagnostics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    return ["spectrum.csv", "diagnostics.json"]


COMMANDS = {
    "generate": (cmd_generate, "sample a synthetic two-class hypergraph"),
    "swap": (cmd_swap, "corrupt topology by swapping nodes between hyperedges"),
    "train": (cmd_train, "self-supervised training (warm-up then hyperedge filling)"),
    "embed": (cmd_embed, "write node embeddings from a checkpoint"),
    "eval-node": (cmd_eval_node, "node classification (linear probe or fine-tuning)"),
    "eval-edge": (cmd_eval_edge, "hyperedge prediction from embeddings"),
    "theory-grid": (cmd_theory_grid, "closed form versus Monte Carlo over an (S, d, P) grid"),
    "diagnose": (cmd_diagnose, "singular spectrum, alignment and uniformity of embeddings"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="hypeboy", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext, description=helptext)
        p.add_argument("--config", help="key = value file or manifest JSON (flags override it)")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        for key, (_, default, h) in schema(name).items():
            flags = [f"--{key}"]
            if "_" in key:
                flags.append(f"--{key.replace('_', '-')}")
            shown = "required" if default is REQUIRED else f"default {default}"
            p.add_argument(*flags, dest=key, default=argparse.SUPPRESS, metavar="VALUE",
                           help=f"{h} ({shown})")
    return parser


def write_manifest(path, command, cfg, outputs):
    payload = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "command": command,
        "config": {k: v for k, v in cfg.items() if k not in _NON_SEMANTIC},
        "outputs": outputs,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run(argv=None):
    """Parse, resolve and execute; returns the list of written paths. Raises on error."""
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    verbose = args.pop("verbose")
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    file_values = {}
    if config_path:
        try:
            file_command, file_values = read_config_file(config_path)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc.strerror}") from None
        if file_command is not None and file_command != command:
            raise ConfigError("config", f"manifest is for {file_command!r}, not {command!r}")
    cfg = resolve(command, file_values, args)
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".hypeboy-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError("out", f"cannot write to {out}: {exc.strerror}") from None
    func = COMMANDS[command][0]
    outputs = func(cfg, out)
    manifest = f"{command}-manifest.json"
    write_manifest(out / manifest, command, cfg, outputs)
    return [out / name for name in outputs + [manifest]]


def main(argv=None):
    try:
        for path in run(argv):
            print(path)
    except ConfigError as exc:
        print(f"hypeboy: config error: {exc}", file=sys.stderr)
        return 2
    except (HypergraphFormatError, ValueError, OSError) as exc:
        print(f"hypeboy: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
