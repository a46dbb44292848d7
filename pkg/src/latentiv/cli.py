"""Command-line experiment orchestration.

Subcommands: generate, train, estimate, bench, ablate, sweep-alpha,
eval-pcc, pdf-compare.  Every run is driven by a JSON config (``--config``)
whose unknown keys are rejected; artifacts land in ``--out`` and are
byte-deterministic given config + seed (wall-clock times are isolated in
the report's "timing" block).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dataio import ColumnMapping, load_tabular_dataset
from .errors import LatentIVError, SchemaError, SpecError
from .estimators import estimate_effect
from .evaluation import pdf_compare, replicate
from .model import VaeConfig, extract_iv, train
from .scm import ScenarioSpec, generate

ALPHA_GRID = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0]

_TOP_KEYS = {"version", "scenario", "dataset", "vae", "estimator",
             "conditioning", "reps", "seed", "jobs", "out_dir", "bins",
             "alphas"}
_SCENARIO_KEYS = {"generator", "n", "outcome", "siv_count", "dim", "seed"}
_DATASET_KEYS = {"path", "treatment", "outcome", "covariates",
                 "treatment_threshold", "threshold_op"}
_VAE_KEYS = {"dim_z", "dim_c", "hidden", "alpha_w", "alpha_y", "opr_enabled",
             "batch_size", "epochs", "lr", "outcome", "seed"}


class ConfigError(SpecError):
    pass


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("version") != 1:
        raise ConfigError("config must declare \"version\": 1")
    _reject_unknown(cfg, _TOP_KEYS, "config")
    if ("scenario" in cfg) == ("dataset" in cfg):
        raise ConfigError("config must contain exactly one of scenario/dataset")
    if "scenario" in cfg:
        _reject_unknown(cfg["scenario"], _SCENARIO_KEYS, "scenario")
    else:
        _reject_unknown(cfg["dataset"], _DATASET_KEYS, "dataset")
        for key in ("path", "treatment", "outcome", "covariates"):
            if key not in cfg["dataset"]:
                raise ConfigError(f"dataset section requires {key!r}")
    _reject_unknown(cfg.get("vae", {}), _VAE_KEYS, "vae")
    return cfg


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.reps is not None:
        cfg["reps"] = args.reps
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    if args.out is not None:
        cfg["out_dir"] = args.out
    return cfg


def _scenario(cfg: dict) -> ScenarioSpec:
    if "scenario" not in cfg:
        raise ConfigError("this subcommand requires a scenario config")
    s = dict(cfg["scenario"])
    s.setdefault("seed", cfg.get("seed", 0))
    try:
        return ScenarioSpec(**s)
    except TypeError as exc:
        raise ConfigError(f"bad scenario: {exc}")


def _vae_config(cfg: dict, **overrides) -> VaeConfig:
    v = dict(cfg.get("vae", {}))
    v.setdefault("seed", cfg.get("seed", 0))
    v.update(overrides)
    return VaeConfig.from_dict(v)


def _load_data(cfg: dict):
    """Returns (dataset, info_or_None).  Scenario and file configs both land here."""
    if "scenario" in cfg:
        return generate(_scenario(cfg)), None
    d = cfg["dataset"]
    mapping = ColumnMapping(
        treatment=d["treatment"], outcome=d["outcome"],
        covariates=tuple(d["covariates"]),
        treatment_threshold=d.get("treatment_threshold"),
        threshold_op=d.get("threshold_op", "lt"))
    return load_tabular_dataset(d["path"], mapping)


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(out: Path, payload: dict, timing: dict) -> None:
    report = dict(payload)
    report["timing"] = timing
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_replications(out: Path, rows: list, extra_fields: tuple = ()) -> None:
    fields = ["replication", *extra_fields, "method", "beta_hat",
              "bias_percent", "mean_abs_pcc", "seed"]
    with open(out / "replications.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(f)) for f in fields) + "\n")


def _records_to_rows(summary, **extra) -> list:
    rows = []
    for rec in summary.records:
        rows.append({"replication": rec["replication"], "method": rec["method"],
                     "beta_hat": rec["beta_hat"],
                     "bias_percent": rec["bias_percent"],
                     "mean_abs_pcc": rec["extras"].get("mean_abs_pcc"),
                     "seed": rec["seed"], **extra})
    return rows


# ---- subcommands --------------------------------------------------------------


def cmd_generate(cfg: dict) -> int:
    out = _out_dir(cfg)
    dataset = generate(_scenario(cfg))
    dataset.to_csv(out / "dataset.csv")
    print(f"wrote {out / 'dataset.csv'} ({dataset.n} rows, {dataset.d} covariates)")
    return 0


def cmd_train(cfg: dict) -> int:
    out = _out_dir(cfg)
    dataset, _ = _load_data(cfg)
    t0 = time.perf_counter()
    params = train(dataset, _vae_config(cfg))
    params.save(out / "model.json")
    with open(out / "loss_trace.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(params.loss_trace, start=1):
            fh.write(f"{epoch},{loss!r}\n")
    _write_report(out, {"final_loss": params.loss_trace[-1],
                        "epochs": params.config.epochs},
                  {"train_seconds": time.perf_counter() - t0})
    print(f"trained; final epoch loss {params.loss_trace[-1]:.4f}")
    return 0


def cmd_estimate(cfg: dict) -> int:
    out = _out_dir(cfg)
    dataset, info = _load_data(cfg)
    t0 = time.perf_counter()
    report = estimate_effect(dataset, _vae_config(cfg),
                             estimator=cfg.get("estimator", "ortho_iv"),
                             conditioning=cfg.get("conditioning", "c"))
    d = report.to_dict()
    runtime = d.pop("runtime_seconds")
    if info is not None:
        d["ingest"] = {"rows_total": info.rows_total,
                       "rows_dropped": info.rows_dropped,
                       "one_hot": info.one_hot}
    _write_report(out, d, {"total_seconds": time.perf_counter() - t0,
                           "estimate_seconds": runtime})
    print(f"{report.method}: beta_hat = {report.beta_hat:.4f}")
    return 0


def _bench_summary(cfg: dict, **vae_overrides):
    scenario = _scenario(cfg)
    vae = _vae_config(cfg, **vae_overrides)
    return replicate(scenario, vae, cfg.get("estimator", "ortho_iv"),
                     reps=cfg.get("reps", 10),
                     conditioning=cfg.get("conditioning", "c"),
                     jobs=cfg.get("jobs", 1))


def cmd_bench(cfg: dict) -> int:
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    summary = _bench_summary(cfg)
    _write_replications(out, _records_to_rows(summary))
    _write_report(out, {"mean_bias": summary.mean_bias,
                        "std_bias": summary.std_bias,
                        "mean_beta": summary.mean_beta,
                        "reps": summary.reps,
                        "base_seed": summary.base_seed},
                  {"total_seconds": time.perf_counter() - t0})
    print(f"bench: mean bias {summary.mean_bias:.2f}% "
          f"± {summary.std_bias:.2f} over {summary.reps} reps")
    return 0


def cmd_ablate(cfg: dict) -> int:
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    rows, payload = [], {}
    for opr_on in (True, False):
        summary = _bench_summary(cfg, opr_enabled=opr_on)
        rows.extend(_records_to_rows(summary, opr=int(opr_on)))
        key = "with_opr" if opr_on else "without_opr"
        payload[key] = {"mean_bias": summary.mean_bias,
                        "std_bias": summary.std_bias}
    _write_replications(out, rows, extra_fields=("opr",))
    _write_report(out, payload, {"total_seconds": time.perf_counter() - t0})
    print(f"ablate: with OPR {payload['with_opr']['mean_bias']:.2f}%, "
          f"without {payload['without_opr']['mean_bias']:.2f}%")
    return 0


def cmd_sweep_alpha(cfg: dict) -> int:
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    alphas = cfg.get("alphas", ALPHA_GRID)
    rows, payload = [], {}
    for alpha in alphas:
        summary = _bench_summary(cfg, alpha_w=float(alpha), alpha_y=float(alpha))
        rows.extend(_records_to_rows(summary, alpha=alpha))
        payload[str(alpha)] = {"mean_bias": summary.mean_bias,
                               "std_bias": summary.std_bias}
    _write_replications(out, rows, extra_fields=("alpha",))
    _write_report(out, {"sweep": payload},
                  {"total_seconds": time.perf_counter() - t0})
    for alpha in alphas:
        print(f"alpha={alpha}: mean bias {payload[str(alpha)]['mean_bias']:.2f}%")
    return 0


def cmd_eval_pcc(cfg: dict) -> int:
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    payload = {}
    rows = []
    for opr_on in (True, False):
        summary = _bench_summary(cfg, opr_enabled=opr_on)
        per_rep = [r["extras"]["mean_abs_pcc"] for r in summary.records]
        key = "with_opr" if opr_on else "without_opr"
        payload[key] = {"mean_abs_pcc": float(np.mean(per_rep)),
                        "std_abs_pcc": float(np.std(per_rep, ddof=1))
                        if len(per_rep) > 1 else 0.0}
        rows.extend(_records_to_rows(summary, opr=int(opr_on)))
    _write_replications(out, rows, extra_fields=("opr",))
    _write_report(out, payload, {"total_seconds": time.perf_counter() - t0})
    print(f"mean |PCC|: with OPR {payload['with_opr']['mean_abs_pcc']:.3f}, "
          f"without {payload['without_opr']['mean_abs_pcc']:.3f}")
    return 0


def cmd_pdf_compare(cfg: dict) -> int:
    out = _out_dir(cfg)
    scenario = _scenario(cfg)
    if scenario.generator == "multi_siv":
        raise ConfigError("pdf-compare needs a single latent instrument")
    t0 = time.perf_counter()
    dataset = generate(scenario)
    params = train(dataset, _vae_config(cfg))
    learned = extract_iv(params, dataset)[:, 0]
    comparison = pdf_compare(dataset.latents["Z"], learned,
                             bins=cfg.get("bins", 50))
    comparison.to_csv(out / "pdf_compare.csv")
    _write_report(out, {"l1_distance": comparison.l1_distance,
                        "bins": cfg.get("bins", 50)},
                  {"total_seconds": time.perf_counter() - t0})
    print(f"pdf-compare: L1 distance {comparison.l1_distance:.4f}")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
    "sweep-alpha": cmd_sweep_alpha,
    "eval-pcc": cmd_eval_pcc,
    "pdf-compare": cmd_pdf_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentiv",
        description="Causal effect estimation with a learned IV representation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="base seed (overrides config)")
        p.add_argument("--jobs", type=int, help="parallel replications")
        p.add_argument("--reps", type=int, help="replication count")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, SpecError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LatentIVError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
