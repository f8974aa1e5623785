"""Command-line front end: generate / train / attack / transfer / report /
verify, each reproducible from (config, seed) and each writing its resolved
configuration next to its outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .attacks import EPSILON_CAP, evaluate_attack
from .config import NetworkConfig
from .dataset import (PowerDataset, generate_dataset, load_dataset,
                      normalization_stats, save_dataset, split)
from .defense import adversarial_train, generate_adv_dataset, save_adv_dataset
from .evalreport import (TransferReport, build_power_sources, emit_report,
                         recover_gain_tables, sum_se_cdf, transfer_eval)
from .geometry import drop_ues
from .network import ModelParams, build_arch, load_model, save_model, train
from .runconfig import (RunConfig, code_version, load_runconfig,
                        write_resolved)

ATTACK_KINDS = ("fgsm", "pgdm", "mifgsm", "random")
DEFAULT_EPS = (0.05, 0.1, 0.2, 0.3)
EXAMPLES_VERSION = "advpower.examples.v1"

USAGE_ERROR, DATA_ERROR, NUMERICAL_ERROR = 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_config(args) -> RunConfig:
    if not args.config:
        raise CliError("--config is required", USAGE_ERROR)
    path = Path(args.config)
    if not path.is_file():
        raise CliError(f"config file not found: {path}", USAGE_ERROR)
    try:
        rc = load_runconfig(path)
    except ValueError as e:
        raise CliError(str(e), USAGE_ERROR) from None
    if getattr(args, "seed", None) is not None:
        rc = rc.with_root_seed(args.seed)
    return rc


def _load_dataset(path_str: str) -> PowerDataset:
    path = Path(path_str)
    if not path.is_file():
        raise CliError(f"dataset not found: {path}", DATA_ERROR)
    try:
        return load_dataset(path)
    except ValueError as e:
        raise CliError(f"{path}: {e}", DATA_ERROR) from None


def _check_eps(values) -> list[float]:
    out = []
    for e in values:
        if not 0.0 <= e < EPSILON_CAP:
            raise CliError(f"epsilon {e:g} outside [0, {EPSILON_CAP})",
                           USAGE_ERROR)
        out.append(float(e))
    return out


def _splits(rc: RunConfig, ds: PowerDataset):
    return split(ds, rc.dataset.fractions, seed=rc.seed)


def _model_id(arch: str, precoder: str, mode: str) -> str:
    return f"{arch}-{precoder}-{mode}"


def _load_checkpoints(ckpt_dir: str) -> tuple[list[ModelParams], dict]:
    d = Path(ckpt_dir)
    meta_path = d / "train_meta.json"
    if not meta_path.is_file():
        raise CliError(f"no train_meta.json under {d}", DATA_ERROR)
    meta = json.loads(meta_path.read_text())
    models = []
    for j in range(meta["cells"]):
        p = d / f"model_cell{j}.txt"
        if not p.is_file():
            raise CliError(f"missing checkpoint {p}", DATA_ERROR)
        models.append(load_model(p))
    return models, meta


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    rc = _load_config(args)
    out = Path(args.out)
    ds = generate_dataset(rc.network, rc.dataset.n_total,
                          rc.dataset.precoder, rc.seed)
    out.mkdir(parents=True, exist_ok=True)
    ds_path = out / "dataset.csv"
    save_dataset(ds, ds_path)
    write_resolved(rc, out, extra={"stage": "generate",
                                   "dataset": ds_path.name})
    if args.verify:
        problems = _scan_dataset(ds_path)
        if problems:
            raise CliError("; ".join(problems), DATA_ERROR)
    print(f"wrote {ds_path} ({len(ds)} samples)")
    return 0


# ------------------------------------------------------------------- train

def cmd_train(args) -> int:
    rc = _load_config(args)
    if args.arch not in ("m1", "m2"):
        raise CliError(f"unknown arch {args.arch!r}", USAGE_ERROR)
    ds = _load_dataset(args.dataset)
    tr, va, te = _splits(rc, ds)
    stats = normalization_stats(tr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    L = rc.network.L

    if args.mode == "standard":
        models, histories = [], []
        for j in range(L):
            init = build_arch(args.arch, rc.network, stats, j, rc.train.seed)
            model, hist = train(init, tr.positions_matrix(),
                                tr.cell_targets(j), va.positions_matrix(),
                                va.cell_targets(j), rc.train)
            models.append(model)
            histories.append(hist)
        epsilon = None
    else:
        eps = _check_eps([args.eps if args.eps is not None else 0.2])[0]
        if not args.from_checkpoints:
            raise CliError("adversarial mode needs --from (standard "
                           "checkpoints)", USAGE_ERROR)
        std_models, std_meta = _load_checkpoints(args.from_checkpoints)
        if std_meta.get("dataset_sha") != ds.content_hash():
            raise CliError("--from checkpoints were trained on a different "
                           "dataset", DATA_ERROR)
        cfg = rc.attack_config("pgdm", eps)
        Y_tr = np.stack([tr.cell_targets(j) for j in range(L)], axis=1)
        Y_va = np.stack([va.cell_targets(j) for j in range(L)], axis=1)
        adv_tr = generate_adv_dataset(std_models, tr.positions_matrix(),
                                      Y_tr, cfg)
        adv_va = generate_adv_dataset(std_models, va.positions_matrix(),
                                      Y_va, cfg)
        save_adv_dataset(adv_tr, out / "adv_train.csv")
        save_adv_dataset(adv_va, out / "adv_val.csv")
        models, histories = adversarial_train(adv_tr, adv_va, args.arch,
                                              rc.network, stats, rc.train)
        epsilon = eps

    best_vals = []
    for j, (model, hist) in enumerate(zip(models, histories)):
        save_model(model, out / f"model_cell{j}.txt")
        lines = ["epoch,train_loss,val_loss,best_val_loss"]
        lines += [f"{e},{t:.17g},{v:.17g},{b:.17g}" for e, t, v, b
                  in hist.rows()]
        (out / f"history_cell{j}.csv").write_text("\n".join(lines) + "\n")
        best_vals.append(hist.best_val_loss[-1])
    meta = {
        "arch": args.arch,
        "precoder": ds.precoder,
        "mode": args.mode,
        "cells": L,
        "dataset_sha": ds.content_hash(),
        "model_id": _model_id(args.arch, ds.precoder, args.mode),
        "best_val_loss": best_vals,
    }
    if epsilon is not None:
        meta["epsilon"] = epsilon
    (out / "train_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")
    write_resolved(rc, out, extra={"stage": "train", "arch": args.arch,
                                   "mode": args.mode})
    print(f"trained {L} {args.arch} models ({args.mode}) -> {out}")
    return 0


# ------------------------------------------------------------------ attack

def cmd_attack(args) -> int:
    rc = _load_config(args)
    ds = _load_dataset(args.dataset)
    models, meta = _load_checkpoints(args.checkpoints)
    tr, va, te = _splits(rc, ds)
    X = te.positions_matrix()
    kinds = args.attack or list(ATTACK_KINDS)
    for k in kinds:
        if k not in ATTACK_KINDS:
            raise CliError(f"unknown attack {k!r}", USAGE_ERROR)
    eps_list = _check_eps(args.eps or DEFAULT_EPS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    reports = []
    for kind in kinds:
        for eps in eps_list:
            cfg = rc.attack_config(kind, eps)
            rep = evaluate_attack(models, X, cfg, rc.network.p_max,
                                  seed=rc.seed, model_id=meta["model_id"])
            reports.append(rep)
            _persist_examples(out, te, models, cfg, rc, meta["model_id"])
    emit_report(out, attack_reports=reports,
                metadata={"stage": "attack", "model_id": meta["model_id"],
                          "attacks": kinds, "epsilons": eps_list,
                          "dataset_sha": ds.content_hash()})
    write_resolved(rc, out, extra={"stage": "attack"})
    if args.verify:
        problems = _scan_examples_dir(out, te)
        if problems:
            raise CliError("; ".join(problems), DATA_ERROR)
    print(f"attacked {meta['model_id']} with {len(reports)} "
          f"(attack, epsilon) settings -> {out}")
    return 0


def _persist_examples(out: Path, te: PowerDataset,
                      models: list[ModelParams], cfg, rc: RunConfig,
                      model_id: str) -> Path:
    from .attacks import craft
    X = te.positions_matrix()
    header = {
        "format": EXAMPLES_VERSION,
        "attack": cfg.kind,
        "epsilon": cfg.epsilon,
        "model_id": model_id,
        "config": rc.network.config_hash(),
        "n": len(te),
        "cells": rc.network.L,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for j, model in enumerate(models):
        x_adv = craft(model, X, cfg, seed=rc.seed + j)
        for s, row in zip(te.samples, x_adv):
            coords = ",".join(f"{v:.17g}" for v in row)
            lines.append(f"{j},{s.id},{coords}")
    path = out / f"examples_{cfg.kind}_eps{cfg.epsilon:g}.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------- transfer

def cmd_transfer(args) -> int:
    rc = _load_config(args)
    ds = _load_dataset(args.dataset)
    surr, surr_meta = _load_checkpoints(args.surrogate)
    vict, vict_meta = _load_checkpoints(args.victim)
    tr, va, te = _splits(rc, ds)
    X = te.positions_matrix()
    kinds = args.attack or list(ATTACK_KINDS)
    for k in kinds:
        if k not in ATTACK_KINDS:
            raise CliError(f"unknown attack {k!r}", USAGE_ERROR)
    eps_list = _check_eps(args.eps or DEFAULT_EPS)
    out = Path(args.out)

    reports = []
    for kind in kinds:
        for eps in eps_list:
            cfg = rc.attack_config(kind, eps)
            reports.append(transfer_eval(
                surr, vict, cfg, X, rc.network.p_max, seed=rc.seed,
                surrogate_id=surr_meta["model_id"],
                victim_id=vict_meta["model_id"]))
    emit_report(out, transfer_reports=reports,
                metadata={"stage": "transfer",
                          "surrogate": surr_meta["model_id"],
                          "victim": vict_meta["model_id"],
                          "attacks": kinds, "epsilons": eps_list,
                          "dataset_sha": ds.content_hash()})
    write_resolved(rc, out, extra={"stage": "transfer"})
    print(f"transfer {surr_meta['model_id']} -> {vict_meta['model_id']}: "
          f"{len(reports)} settings -> {out}")
    return 0


# ------------------------------------------------------------------ report

def cmd_report(args) -> int:
    out = Path(args.out)
    found = []
    for d in sorted(args.inputs or []):
        src = Path(d)
        if not src.is_dir():
            raise CliError(f"input directory not found: {src}", DATA_ERROR)
        for name in ("attacks.csv", "transfers.csv"):
            p = src / name
            if p.is_file():
                found.append(p)
        found.extend(sorted(src.glob("cdf_*.csv")))
    curves = None
    # input provenance by label, not by path, so relocated same-seed runs
    # produce identical bundles
    meta: dict = {"stage": "report",
                  "inputs": [f"{p.parent.name}/{p.name}" for p in found]}
    if args.std:
        rc = _load_config(args)
        ds = _load_dataset(args.dataset)
        std_models, std_meta = _load_checkpoints(args.std)
        adv_models, adv_meta = _load_checkpoints(args.adv or args.std)
        tr, va, te = _splits(rc, ds)
        eps = _check_eps([args.eps if args.eps is not None else 0.3])[0]
        cfg = rc.attack_config(args.se_attack, eps)
        gains = recover_gain_tables(te)
        sources = build_power_sources(te, std_models, adv_models, cfg,
                                      seed=rc.seed)
        curves = sum_se_cdf(gains, sources, rc.se_config(), rc.network)
        meta.update({"se_attack": cfg.kind, "se_epsilon": eps,
                     "std_model": std_meta["model_id"],
                     "adv_model": adv_meta["model_id"],
                     "se": {"tau_c": rc.se_config().tau_c,
                            "tau_d": rc.se_config().tau_d}})
    if not found and curves is None:
        raise CliError("nothing to report: no inputs and no SE evaluation "
                       "requested", DATA_ERROR)
    out.mkdir(parents=True, exist_ok=True)
    for p in found:
        label = p.parent.name
        (out / f"{p.stem}_{label}.csv").write_text(p.read_text())
    if curves:
        emit_report(out, cdf_curves=curves, metadata=meta)
        write_resolved(rc, out, extra={"stage": "report"})
    else:
        (out / "report_meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n")
        (out / "resolved_config.json").write_text(json.dumps(
            {"stage": "report", "code_version": code_version()},
            indent=2, sort_keys=True) + "\n")
    print(f"report bundle -> {out}")
    return 0


# ------------------------------------------------------------------ verify

def _scan_dataset(path: Path) -> list[str]:
    problems = []
    try:
        ds = load_dataset(path)
    except (ValueError, OSError) as e:
        return [f"{path}: {e}"]
    cfg = ds.config
    ids = [s.id for s in ds.samples]
    if len(set(ids)) != len(ids):
        problems.append("duplicate sample ids")
    side = cfg.global_side
    for s in ds.samples:
        if not np.all((s.positions >= 0) & (s.positions <= side)):
            problems.append(f"sample {s.id}: position outside the grid")
            break
    sums = np.array([s.powers.sum(axis=1) for s in ds.samples])
    worst = float((sums - cfg.p_max).max())
    if worst > 1e-9:
        problems.append(f"label power budget violated by {worst:.3g} mW")
    stored = np.array([s.sum_powers for s in ds.samples])
    if not np.allclose(stored, sums, rtol=0, atol=1e-9):
        problems.append("sum_powers column disagrees with powers")
    return problems


def _scan_examples_dir(d: Path, te: PowerDataset) -> list[str]:
    problems = []
    for p in sorted(d.glob("examples_*.csv")):
        problems.extend(_scan_examples(p, te))
    return problems


def _scan_examples(path: Path, te: PowerDataset) -> list[str]:
    by_id = {s.id: s.positions.reshape(-1) for s in te.samples}
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != EXAMPLES_VERSION:
            return [f"{path}: unsupported format {header.get('format')!r}"]
        eps = float(header["epsilon"])
        tol = eps + 1e-12
        n_rows = 0
        for line in fh:
            parts = line.rstrip("\n").split(",")
            sid = int(parts[1])
            if sid not in by_id:
                return [f"{path}: unknown sample id {sid}"]
            x_adv = np.array([float(v) for v in parts[2:]])
            shift = np.abs(x_adv - by_id[sid]).max()
            if shift > tol:
                return [f"{path}: ball violation {shift:.17g} > {tol:.17g}"]
            n_rows += 1
        expected = header["n"] * header["cells"]
        if n_rows != expected:
            return [f"{path}: {n_rows} rows, expected {expected}"]
    return []


def cmd_verify(args) -> int:
    if not args.dataset and not args.examples:
        raise CliError("verify needs --dataset and/or --examples",
                       USAGE_ERROR)
    problems = []
    te = None
    if args.dataset:
        ds_path = Path(args.dataset)
        if not ds_path.is_file():
            raise CliError(f"dataset not found: {ds_path}", DATA_ERROR)
        problems += _scan_dataset(ds_path)
        if args.examples:
            ds = _load_dataset(args.dataset)
            if args.config:
                rc = _load_config(args)
                tr, va, te = _splits(rc, ds)
            else:
                te = ds
    if args.examples:
        if te is None:
            raise CliError("--examples needs --dataset for the clean "
                           "reference", USAGE_ERROR)
        p = Path(args.examples)
        if not p.is_file():
            raise CliError(f"examples file not found: {p}", DATA_ERROR)
        problems += _scan_examples(p, te)
    if problems:
        for msg in problems:
            print(msg, file=sys.stderr)
        return DATA_ERROR
    print("ok")
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="advpower",
        description="Adversarial attacks on learned downlink power "
                    "allocation: dataset generation, training, attack "
                    "campaigns, defenses, transfer studies, reporting.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True, seed=True, out=True):
        if config:
            p.add_argument("--config", help="run configuration JSON")
        if seed:
            p.add_argument("--seed", type=int, help="root seed override")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    g = sub.add_parser("generate", help="synthesize a labeled dataset")
    common(g)
    g.add_argument("--verify", action="store_true",
                   help="re-scan the written dataset")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train per-cell models")
    common(t)
    t.add_argument("--dataset", required=True)
    t.add_argument("--arch", required=True, choices=("m1", "m2"))
    t.add_argument("--mode", default="standard",
                   choices=("standard", "adversarial"))
    t.add_argument("--eps", type=float, default=None,
                   help="perturbation budget for adversarial mode")
    t.add_argument("--from", dest="from_checkpoints",
                   help="standard checkpoints to craft from (adversarial)")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("attack", help="run white-box attack campaigns")
    common(a)
    a.add_argument("--dataset", required=True)
    a.add_argument("--checkpoints", required=True)
    a.add_argument("--attack", nargs="+", choices=ATTACK_KINDS)
    a.add_argument("--eps", nargs="+", type=float)
    a.add_argument("--verify", action="store_true",
                   help="re-scan persisted adversarial examples")
    a.set_defaults(func=cmd_attack)

    tr = sub.add_parser("transfer", help="black-box surrogate -> victim")
    common(tr)
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--surrogate", required=True)
    tr.add_argument("--victim", required=True)
    tr.add_argument("--attack", nargs="+", choices=ATTACK_KINDS)
    tr.add_argument("--eps", nargs="+", type=float)
    tr.set_defaults(func=cmd_transfer)

    r = sub.add_parser("report", help="bundle reports; optional SE CDFs")
    common(r)
    r.add_argument("--inputs", nargs="*", default=[],
                   help="directories with attack/transfer outputs")
    r.add_argument("--dataset")
    r.add_argument("--std", help="standard checkpoints for SE curves")
    r.add_argument("--adv", help="adversarially trained checkpoints")
    r.add_argument("--eps", type=float, default=None)
    r.add_argument("--se-attack", default="pgdm", choices=ATTACK_KINDS)
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("verify", help="invariant scans on artifacts")
    v.add_argument("--config", help="run configuration JSON")
    v.add_argument("--seed", type=int)
    v.add_argument("--dataset", help="dataset file to scan")
    v.add_argument("--examples", help="adversarial-examples file to scan")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_ERROR
    except (FloatingPointError, ZeroDivisionError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
