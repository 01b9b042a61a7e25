"""Command-line front end: prepare, train, advtrain, attack, report.

Every command takes an optional JSON config file whose keys mirror the
long flag names; explicit flags win. Unknown config keys are rejected.
All randomness flows from the --seed of the producing command. Exit
codes are a stable contract: 0 success, 2 input error, 3 training
failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import FILE_FORMAT_VERSION, __version__, attacks, dataset, network, report
from .advtrain import AdvTrainConfig, advtrain
from .metrics import box_stats
from .network import NonfiniteLoss, TrainConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRAINING = 3
EXIT_VERIFY = 4

_INPUT_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    ValueError,  # covers the dataset/network schema errors, all ValueError subclasses
)


class _ConfigError(ValueError):
    pass


def _load_config(args, known: set[str]) -> dict:
    path = getattr(args, "config", None)
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise _ConfigError("config file must hold a JSON object")
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise _ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return cfg


def _opt(args, cfg: dict, key: str, default):
    value = getattr(args, key, None)
    if value is None:
        value = cfg.get(key, default)
    return value


def _out_dir(args, cfg) -> Path:
    out = _opt(args, cfg, "out", None) or os.environ.get("LOADSHIELD_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(value) -> str:
    if isinstance(value, float):  # incl. numpy scalars; plain repr round-trips
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _parse_dims(text: str) -> list[int]:
    try:
        dims = [int(part) for part in text.split("-")]
    except ValueError:
        raise _ConfigError(f"bad dims {text!r}; expected e.g. 12-40-20-10-1") from None
    if len(dims) < 3:
        raise _ConfigError("dims needs at least one hidden layer")
    return dims


def _parse_grid(text: str, cast):
    """Grid values: '1..6' ranges (integers) or comma lists."""
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        return [cast(v) for v in range(int(lo), int(hi) + 1)]
    return [cast(v) for v in text.split(",")]


# --- prepare ------------------------------------------------------------------


def cmd_prepare(args) -> int:
    known = {"synthetic", "csv", "schema", "ratio", "seed", "noise_scale", "out"}
    cfg = _load_config(args, known)
    synthetic = _opt(args, cfg, "synthetic", None)
    csv_path = _opt(args, cfg, "csv", None)
    if (synthetic is None) == (csv_path is None):
        raise _ConfigError("exactly one of --synthetic and --csv is required")
    ratio = float(_opt(args, cfg, "ratio", 0.8))
    seed = int(_opt(args, cfg, "seed", 0))

    if synthetic is not None:
        noise = float(_opt(args, cfg, "noise_scale", dataset.SYNTH_NOISE_SCALE))
        records = dataset.synth_records(int(synthetic), seed, noise)
        source = f"synthetic(n={synthetic}, noise={noise})"
    else:
        schema_path = _opt(args, cfg, "schema", None)
        schema = None
        if schema_path:
            with open(schema_path, encoding="utf-8") as fh:
                schema = json.load(fh)
        records = dataset.load_csv(csv_path, schema)
        source = str(csv_path)

    data = dataset.prepare(records, ratio, seed, source=source)
    out = _out_dir(args, cfg)
    dataset.save_prepared(data, out / "dataset.npz", out / "manifest.json")
    print(f"rows read: {len(records)}")
    print(f"outliers removed: {data.manifest['outliers_removed']}")
    print(f"train rows: {data.manifest['rows_train']}, test rows: {data.manifest['rows_test']}")
    print(f"wrote {out / 'dataset.npz'} and {out / 'manifest.json'}")
    return EXIT_OK


# --- train / advtrain ---------------------------------------------------------


def _load_data(args, cfg) -> dataset.PreparedData:
    data_dir = Path(_opt(args, cfg, "data", "."))
    return dataset.load_prepared(data_dir / "dataset.npz", data_dir / "manifest.json")


def _train_config(args, cfg) -> TrainConfig:
    return TrainConfig(
        epochs=int(_opt(args, cfg, "epochs", 150)),
        batch_size=int(_opt(args, cfg, "batch_size", 64)),
        lr0=float(_opt(args, cfg, "lr0", 5e-4)),
        seed=int(_opt(args, cfg, "seed", 0)),
    )


TRAIN_KEYS = {"data", "dims", "epochs", "batch_size", "lr0", "seed", "out", "model_out", "history_out"}


def cmd_train(args) -> int:
    cfg = _load_config(args, TRAIN_KEYS)
    data = _load_data(args, cfg)
    dims = _parse_dims(_opt(args, cfg, "dims", "12-40-20-10-1"))
    tcfg = _train_config(args, cfg)
    model = network.init_network(dims, seed=tcfg.seed)
    try:
        best, history = network.train(model, data.train, data.test, tcfg)
    except NonfiniteLoss as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    out = _out_dir(args, cfg)
    model_path = out / str(_opt(args, cfg, "model_out", "model.json"))
    history_path = out / str(_opt(args, cfg, "history_out", "train_history.csv"))
    network.save(best, model_path, manifest_hash=data.manifest_hash)
    network.save_history_csv(history, history_path, ["epoch", "train_mse", "test_mape", "lr"])
    best_mape = min(h["test_mape"] for h in history)
    print(f"best test MAPE: {best_mape:.4f}%")
    print(f"wrote {model_path} and {history_path}")
    return EXIT_OK


ADVTRAIN_KEYS = TRAIN_KEYS | {"budget", "impute", "bmax", "bmin", "inner", "inner_objective", "workers"}


def cmd_advtrain(args) -> int:
    cfg = _load_config(args, ADVTRAIN_KEYS)
    data = _load_data(args, cfg)
    dims = _parse_dims(_opt(args, cfg, "dims", "12-40-20-10-1"))
    acfg = AdvTrainConfig(
        base=_train_config(args, cfg),
        budget=int(_opt(args, cfg, "budget", 6)),
        imputation=str(_opt(args, cfg, "impute", "zero")),
        max_weight=float(_opt(args, cfg, "bmax", 1.0)),
        min_weight=float(_opt(args, cfg, "bmin", 1.0)),
        inner_solver=str(_opt(args, cfg, "inner", "bruteforce")),
        inner_objective=str(_opt(args, cfg, "inner_objective", "squared_error")),
        workers=int(_opt(args, cfg, "workers", 1)),
    )
    model = network.init_network(dims, seed=acfg.base.seed)
    try:
        best, history = advtrain(model, data.train, data.test, acfg)
    except NonfiniteLoss as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    out = _out_dir(args, cfg)
    model_path = out / str(_opt(args, cfg, "model_out", "model_adv.json"))
    history_path = out / str(_opt(args, cfg, "history_out", "advtrain_history.csv"))
    network.save(best, model_path, manifest_hash=data.manifest_hash)
    network.save_history_csv(
        history,
        history_path,
        [
            "epoch",
            "clean_loss",
            "adv_max_loss",
            "adv_min_loss",
            "test_mape",
            "test_median_abs_mpe_max",
            "test_median_abs_mpe_min",
            "lr",
        ],
    )
    print(f"best test MAPE: {min(h['test_mape'] for h in history):.4f}%")
    print(f"wrote {model_path} and {history_path}")
    return EXIT_OK


# --- attack -------------------------------------------------------------------

ATTACK_KEYS = {
    "model",
    "data",
    "split",
    "kind",
    "mode",
    "impute",
    "beta",
    "eps",
    "engine",
    "workers",
    "limit",
    "oracle_check",
    "out",
    "pgd_steps",
    "pgd_restarts",
    "seed",
}


def _cell_label(spec: attacks.AttackSpec) -> str:
    if spec.kind == "availability":
        return f"availability_{spec.mode}_{spec.imputation}_b{spec.budget}"
    return f"integrity_{spec.mode}_eps{spec.radius:g}"


def _results_rows(spec, batch, X):
    rows = []
    for i, r in enumerate(batch.results):
        if r is None:
            continue
        if spec.kind == "availability":
            rows.append(
                [
                    i,
                    r.clean_forecast,
                    r.adversarial_forecast,
                    r.mpe,
                    r.missing_count,
                    "".join(str(int(b)) for b in r.mask),
                    r.stats.nodes,
                ]
            )
        else:
            linf = float(np.max(np.abs(r.adversarial_input[: dataset.N_FLEX] - X[i, : dataset.N_FLEX])))
            rows.append(
                [i, r.clean_forecast, r.adversarial_forecast, r.mpe, linf, r.stats.nodes]
            )
    return rows


def cmd_attack(args) -> int:
    cfg = _load_config(args, ATTACK_KEYS)
    model_path = _opt(args, cfg, "model", None)
    if model_path is None:
        raise _ConfigError("--model is required")
    model, model_hash = network.load(model_path)
    data = _load_data(args, cfg)
    if model_hash is not None and model_hash != data.manifest_hash:
        print(
            "model was trained against a different dataset manifest "
            f"({model_hash[:12]}... vs {data.manifest_hash[:12]}...)",
            file=sys.stderr,
        )
        return EXIT_INPUT

    split_name = str(_opt(args, cfg, "split", "test"))
    if split_name not in ("train", "test"):
        raise _ConfigError("--split must be train or test")
    ds = data.test if split_name == "test" else data.train
    limit = _opt(args, cfg, "limit", None)
    if limit is not None:
        n = int(limit)
        ds = dataset.Dataset(X=ds.X[:n], Y=ds.Y[:n], scale_min=ds.scale_min, scale_max=ds.scale_max)

    kind = str(_opt(args, cfg, "kind", "availability"))
    mode = str(_opt(args, cfg, "mode", "max"))
    engine = str(_opt(args, cfg, "engine", "milp"))
    workers = int(_opt(args, cfg, "workers", 1))
    oracle_check = bool(_opt(args, cfg, "oracle_check", False))
    seed = int(_opt(args, cfg, "seed", 0))

    specs = []
    if kind == "availability":
        impute_mode = str(_opt(args, cfg, "impute", "mean"))
        for budget in _parse_grid(_opt(args, cfg, "beta", "1..6"), int):
            specs.append(
                attacks.AttackSpec(
                    kind="availability",
                    mode=mode,
                    budget=budget,
                    imputation=impute_mode,
                    engine=engine,
                )
            )
    elif kind == "integrity":
        pgd = attacks.PgdConfig(
            steps=int(_opt(args, cfg, "pgd_steps", 40)),
            restarts=int(_opt(args, cfg, "pgd_restarts", 5)),
            seed=seed,
        )
        for radius in _parse_grid(_opt(args, cfg, "eps", "0.05,0.1,0.2"), float):
            specs.append(
                attacks.AttackSpec(
                    kind="integrity", mode=mode, radius=radius, engine=engine, pgd=pgd
                )
            )
    else:
        raise _ConfigError("--kind must be availability or integrity")

    out = _out_dir(args, cfg)
    summary_rows = []
    timing_rows = []
    exit_code = EXIT_OK
    for spec in specs:
        imp = data.imputation_zero if spec.imputation == "zero" else data.imputation_mean
        batch = attacks.batch_attack(model, ds, spec, imputation=imp, workers=workers)
        label = _cell_label(spec)

        if oracle_check and spec.kind == "availability":
            oracle_spec = attacks.AttackSpec(
                kind="availability",
                mode=spec.mode,
                budget=spec.budget,
                imputation=spec.imputation,
                engine="bruteforce",
            )
            oracle = attacks.batch_attack(model, ds, oracle_spec, imputation=imp, workers=workers)
            for i, (a, b) in enumerate(zip(batch.results, oracle.results)):
                if a is None or b is None:
                    continue
                if abs(a.adversarial_forecast - b.adversarial_forecast) > 1e-6:
                    print(
                        f"oracle mismatch at sample {i} of {label}: "
                        f"milp={a.adversarial_forecast!r} oracle={b.adversarial_forecast!r}",
                        file=sys.stderr,
                    )
                    return EXIT_VERIFY

        if spec.kind == "availability":
            header = [
                "sample_index",
                "clean_forecast",
                "adv_forecast",
                "mpe_percent",
                "missing_count",
                "mask_bits",
                "nodes",
            ]
        else:
            header = [
                "sample_index",
                "clean_forecast",
                "adv_forecast",
                "mpe_percent",
                "l_inf_norm_used",
                "nodes",
            ]
        _write_csv(out / f"results_{label}.csv", header, _results_rows(spec, batch, ds.X))
        _write_csv(
            out / f"timing_{label}.csv",
            ["sample_index", "ms"],
            [[i, f"{1000.0 * t:.3f}"] for i, t in enumerate(batch.wall_times)],
        )
        if batch.summary.failures:
            _write_csv(
                out / f"failures_{label}.csv",
                ["sample_index", "error"],
                [[i, err.replace(",", ";")] for i, err in batch.summary.failures],
            )

        stats = batch.summary.mpe_stats
        summary_rows.append(
            [
                label,
                spec.kind,
                spec.mode,
                spec.imputation if spec.kind == "availability" else "",
                spec.budget if spec.kind == "availability" else "",
                repr(spec.radius) if spec.kind == "integrity" else "",
                batch.summary.n,
                len(batch.summary.failures),
                stats.median if stats else "",
                stats.q1 if stats else "",
                stats.q3 if stats else "",
                stats.min if stats else "",
                stats.max if stats else "",
            ]
        )
        timing_rows.append([label, f"{batch.summary.mean_ms:.3f}"])
        n_fail = len(batch.summary.failures)
        print(f"{label}: n={batch.summary.n} failed={n_fail} mean_ms={batch.summary.mean_ms:.2f}")
        if n_fail > 0.01 * batch.summary.n:
            print(f"{label}: more than 1% of samples failed", file=sys.stderr)
            exit_code = EXIT_VERIFY

    _write_csv(
        out / "summary.csv",
        [
            "label",
            "kind",
            "mode",
            "imputation",
            "budget",
            "radius",
            "n",
            "n_failed",
            "mpe_median",
            "mpe_q1",
            "mpe_q3",
            "mpe_min",
            "mpe_max",
        ],
        summary_rows,
    )
    _write_csv(out / "timing_summary.csv", ["label", "mean_ms_per_sample"], timing_rows)
    print(f"wrote {len(specs)} result set(s) under {out}")
    return exit_code


# --- report -------------------------------------------------------------------


def _read_csv(path: Path) -> list[dict]:
    import csv as _csv

    with open(path, encoding="utf-8") as fh:
        return list(_csv.DictReader(fh))


def cmd_report(args) -> int:
    cfg = _load_config(args, {"results", "out"})
    results_dir = Path(_opt(args, cfg, "results", "."))
    out = Path(_opt(args, cfg, "out", None) or results_dir)
    out.mkdir(parents=True, exist_ok=True)

    summary_path = results_dir / "summary.csv"
    if not summary_path.exists():
        print("no results found", file=sys.stderr)
        return EXIT_INPUT
    summary = _read_csv(summary_path)
    if not summary:
        print("no results found", file=sys.stderr)
        return EXIT_INPUT

    grids: dict[tuple, list[dict]] = {}
    for row in summary:
        grids.setdefault((row["kind"], row["mode"], row["imputation"]), []).append(row)

    written = []
    for (kind, mode, imputation), rows in grids.items():
        def cell_key(r):
            return float(r["budget"]) if kind == "availability" else float(r["radius"])

        rows = sorted(rows, key=cell_key)
        groups = []
        for row in rows:
            per_sample = _read_csv(results_dir / f"results_{row['label']}.csv")
            if not per_sample:
                continue
            mpes = np.array([float(r["mpe_percent"]) for r in per_sample])
            if kind == "availability":
                label = f"beta={int(float(row['budget']))}"
            else:
                label = f"eps={float(row['radius']):g}"
            groups.append((label, box_stats(mpes)))

            if kind == "availability":
                counts: dict[int, int] = {}
                for r in per_sample:
                    k = int(r["missing_count"])
                    counts[k] = counts.get(k, 0) + 1
                svg = report.render_histogram_svg(
                    counts,
                    title=f"actual missing features, {mode}/{imputation}, budget {int(float(row['budget']))}",
                    xlabel="missing features",
                )
                hist_path = out / f"hist_{row['label']}.svg"
                hist_path.write_text(svg, encoding="utf-8")
                written.append(hist_path)

        if groups:
            name = f"box_{kind}_{mode}" + (f"_{imputation}" if imputation else "")
            title = f"{kind} attack, {mode} mode" + (f", {imputation} imputation" if imputation else "")
            svg = report.render_box_svg(groups, title=title, ylabel="per-sample MPE (%)")
            box_path = out / f"{name}.svg"
            box_path.write_text(svg, encoding="utf-8")
            written.append(box_path)

    table_rows = []
    for label, fname in (("clean", "train_history.csv"), ("adversarial", "advtrain_history.csv")):
        hist_path = results_dir / fname
        if hist_path.exists():
            hist = _read_csv(hist_path)
            if hist:
                table_rows.append((label, min(float(r["test_mape"]) for r in hist)))
    if table_rows:
        table_path = out / "table_mape.txt"
        table_path.write_text(report.render_mape_table(table_rows), encoding="utf-8")
        written.append(table_path)

    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadshield",
        description="Train, attack, and harden piecewise-linear load forecasters.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"loadshield {__version__} (file format v{FILE_FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest a CSV or synthesize data")
    p.add_argument("--config")
    p.add_argument("--synthetic", type=int, help="generate N synthetic hourly rows")
    p.add_argument("--csv", help="hourly load CSV to ingest")
    p.add_argument("--schema", help="JSON mapping canonical field names to CSV headers")
    p.add_argument("--ratio", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-scale", dest="noise_scale", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_prepare)

    for name, fn in (("train", cmd_train), ("advtrain", cmd_advtrain)):
        p = sub.add_parser(name, help=f"{name} a forecaster on a prepared dataset")
        p.add_argument("--config")
        p.add_argument("--data")
        p.add_argument("--dims")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr0", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--model-out", dest="model_out")
        p.add_argument("--history-out", dest="history_out")
        if name == "advtrain":
            p.add_argument("--budget", type=int)
            p.add_argument("--impute", choices=["zero", "mean"])
            p.add_argument("--bmax", type=float)
            p.add_argument("--bmin", type=float)
            p.add_argument("--inner", choices=["bruteforce", "milp"])
            p.add_argument(
                "--inner-objective",
                dest="inner_objective",
                choices=["squared_error", "forecast"],
            )
            p.add_argument("--workers", type=int)
        p.set_defaults(func=fn)

    p = sub.add_parser("attack", help="run an attack grid against a trained model")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--split", choices=["train", "test"])
    p.add_argument("--kind", choices=["availability", "integrity"])
    p.add_argument("--mode", choices=["max", "min"])
    p.add_argument("--impute", choices=["zero", "mean"])
    p.add_argument("--beta", help="budget grid, e.g. 1..6 or 0,3,6")
    p.add_argument("--eps", help="radius grid, e.g. 0.05,0.1,0.2")
    p.add_argument("--engine", choices=["milp", "pgd", "bruteforce"])
    p.add_argument("--workers", type=int)
    p.add_argument("--limit", type=int, help="attack only the first N samples")
    p.add_argument("--oracle-check", dest="oracle_check", action="store_const", const=True)
    p.add_argument("--pgd-steps", dest="pgd_steps", type=int)
    p.add_argument("--pgd-restarts", dest="pgd_restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="render SVG plots and tables from attack CSVs")
    p.add_argument("--config")
    p.add_argument("--results")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonfiniteLoss as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
