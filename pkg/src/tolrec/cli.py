"""Command-line pipeline: label -> train -> analyze -> simulate -> report.

Every command accepts ``--config FILE`` (a JSON object whose keys mirror
the long flag names with dashes replaced by underscores); explicit flags
override the file, which overrides built-in defaults. Each output file
gets a ``<name>.manifest.json`` sidecar recording the resolved
configuration, input digests, tool version, and seed, so identical
manifests imply identical outputs.
"""

import argparse
import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .cohort import CohortConfig, analyze, read_report, write_plot_data, write_report
from .events import Platform, TimeWindow, ingest_log
from .labeling import (
    LabelingConfig,
    LabelingMode,
    RuleMode,
    label_log,
    read_samples,
    write_profiles,
    write_samples,
)
from .simulation import (
    DAILY_REPORT_HEADER,
    ReturnCurve,
    SimConfig,
    append_daily_report,
    simulate_experiment,
    write_daily_report,
)
from .trainer import (
    Objective,
    TrainConfig,
    augment_with_sampled_negatives,
    train,
    write_history,
    write_model,
)


def _iso_to_epoch(text: str) -> int:
    moment = datetime.fromisoformat(text)
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return int(moment.timestamp())


def parse_window(text: str) -> TimeWindow:
    """`2024-06-01..2024-06-08` -> half-open window in epoch seconds (UTC)."""
    start, sep, end = text.partition("..")
    if not sep:
        raise ValueError(f"window {text!r} must look like ISODATE..ISODATE")
    return TimeWindow(_iso_to_epoch(start), _iso_to_epoch(end))


def _parse_edges(text: str) -> tuple[float, ...]:
    if not text:
        return ()
    return tuple(float(part) for part in text.split(","))


def _parse_beta(text: str) -> float | None:
    if text == "from-samples":
        return None
    if text.startswith("fixed:"):
        return float(text.split(":", 1)[1])
    raise ValueError(f"beta spec {text!r} must be 'from-samples' or 'fixed:<value>'")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    out_path: str,
    command: str,
    resolved: dict,
    inputs: list[str],
    outputs: list[str],
) -> None:
    manifest = {
        "command": command,
        "config": {k: resolved[k] for k in sorted(resolved)},
        "inputs": {path: _sha256(path) for path in sorted(inputs)},
        "version": __version__,
        "seed": resolved.get("seed"),
    }
    path = out_path + ".manifest.json"
    outputs.append(path)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


# Per-command defaults; CLI flags override the config file, which overrides
# these. Everything lands in the manifest fully materialized.
DEFAULTS: dict[str, dict] = {
    "label": {
        "mode": "causal",
        "rule": "ratio-or-action",
        "buckets": "60,300",
        "min_history": 5,
        "ratio_cap": 1.0,
        "beta_baseline": "user",
        "profiles_out": None,
        "threads": 1,
    },
    "train": {
        "objective": "standard",
        "beta": "from-samples",
        "lr": 0.1,
        "epochs": 20,
        "dim": 8,
        "l2": 0.0,
        "batch_size": 256,
        "seed": 0,
        "neg_sample": 0,
        "history_out": None,
    },
    "analyze": {
        "platform": "video",
        "buckets": "",
        "ratio_cap": 1.0,
        "min_watch_seconds": 0.0,
        "plot_out": None,
        "threads": 1,
    },
    "simulate": {
        "seeds": 1,
        "seed": 0,
        "obj_a": "standard",
        "obj_b": "tol-weak",
        "beta": "from-samples",
        "days": 7,
        "population": 100,
        "catalog": 200,
        "slate": 10,
        "pool": 40,
        "dim": 8,
        "temperature": 1.0,
        "rho": 0.3,
        "trust_decay": 0.05,
        "trust_recovery": 0.005,
        "lr": 0.3,
        "epochs": 30,
        "l2": 1e-4,
        "batch_size": 256,
        "warm_start": False,
        "rule": "ratio-or-action",
    },
    "report": {"analyze": None, "simulate": None, "train_history": None},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tolrec",
        description="Label engagement logs, train tolerance-aware rankers, "
        "and analyze retention.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", required=True, help="primary output file")

    p = sub.add_parser("label", help="label an event log")
    add_common(p)
    p.add_argument("--events", required=True, help="event JSONL file")
    p.add_argument("--mode", choices=["causal", "loo"])
    p.add_argument("--rule", choices=["ratio-or-action", "ratio-only"])
    p.add_argument("--buckets", help="duration bucket edges, e.g. 60,300")
    p.add_argument("--min-history", type=int)
    p.add_argument("--ratio-cap", type=float)
    p.add_argument("--beta-baseline", choices=["user", "population"])
    p.add_argument("--profiles-out", help="profile snapshot path")
    p.add_argument("--threads", type=int)

    p = sub.add_parser("train", help="train a ranking model on labeled samples")
    add_common(p)
    p.add_argument("--samples", required=True, help="labeled sample JSONL file")
    p.add_argument("--objective", choices=[o.value for o in Objective])
    p.add_argument("--beta", help="'from-samples' or 'fixed:<v>'")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--neg-sample",
        type=int,
        help="sample this many negatives per positive (logs without impressions)",
    )
    p.add_argument("--history-out", help="loss history CSV path")

    p = sub.add_parser("analyze", help="reference/investigation cohort analysis")
    add_common(p)
    p.add_argument("--events", required=True)
    p.add_argument("--ref", required=True, help="reference window, ISO..ISO")
    p.add_argument("--inv", required=True, help="investigation window, ISO..ISO")
    p.add_argument("--platform", choices=[pf.value for pf in Platform])
    p.add_argument("--buckets", help="tolerance-stat bucket edges")
    p.add_argument("--ratio-cap", type=float)
    p.add_argument("--min-watch-seconds", type=float)
    p.add_argument("--plot-out")
    p.add_argument("--threads", type=int)

    p = sub.add_parser("simulate", help="paired two-arm retention simulation")
    add_common(p)
    p.add_argument("--seeds", type=int, help="number of paired seeds")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--objA", dest="obj_a", choices=[o.value for o in Objective])
    p.add_argument("--objB", dest="obj_b", choices=[o.value for o in Objective])
    p.add_argument("--beta", help="'from-samples' or 'fixed:<v>'")
    p.add_argument("--days", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--catalog", type=int)
    p.add_argument("--slate", type=int)
    p.add_argument("--pool", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--rho", type=float, help="surface/content correlation")
    p.add_argument("--trust-decay", type=float)
    p.add_argument("--trust-recovery", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--warm-start", action="store_const", const=True, default=None)
    p.add_argument("--rule", choices=["ratio-or-action", "ratio-only"])

    p = sub.add_parser("report", help="merge pipeline outputs into one summary")
    add_common(p)
    p.add_argument("--analyze", help="cohort report CSV")
    p.add_argument("--simulate", help="simulation daily CSV")
    p.add_argument("--train-history", help="loss history CSV")

    return parser


def _resolve(args: argparse.Namespace) -> dict:
    resolved = dict(DEFAULTS[args.command])
    if args.config:
        with open(args.config, encoding="utf-8") as handle:
            file_config = json.load(handle)
        unknown = set(file_config) - set(vars(args))
        if unknown:
            raise ValueError(f"config file has unknown keys {sorted(unknown)}")
        resolved.update(file_config)
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            resolved[key] = value
    return resolved


def _labeling_config(resolved: dict) -> LabelingConfig:
    return LabelingConfig(
        rule_mode=RuleMode(resolved.get("rule", "ratio-or-action")),
        duration_bucket_edges=_parse_edges(resolved.get("buckets", "60,300")),
        min_history=resolved.get("min_history", 5),
        ratio_cap=resolved["ratio_cap"],
        beta_baseline=resolved.get("beta_baseline", "user"),
    )


def _cmd_label(resolved: dict, outputs: list[str]) -> None:
    result = ingest_log(resolved["events"], workers=resolved["threads"])
    if result.rejected_count:
        print(
            f"note: rejected {result.rejected_count} malformed lines",
            file=sys.stderr,
        )
    config = _labeling_config(resolved)
    mode = LabelingMode.CAUSAL if resolved["mode"] == "causal" else LabelingMode.LEAVE_ONE_OUT
    labeled = label_log(result.events, config, mode)
    out = resolved["out"]
    profiles_out = resolved["profiles_out"] or out + ".profiles"
    resolved["profiles_out"] = profiles_out
    outputs.append(out)
    write_samples(out, labeled.samples)
    outputs.append(profiles_out)
    write_profiles(profiles_out, labeled.profiles)
    _write_manifest(out, "label", resolved, [resolved["events"]], outputs)


def _cmd_train(resolved: dict, outputs: list[str]) -> None:
    samples = read_samples(resolved["samples"])
    config = TrainConfig(
        objective=Objective(resolved["objective"]),
        learning_rate=resolved["lr"],
        epochs=resolved["epochs"],
        dimension=resolved["dim"],
        l2=resolved["l2"],
        seed=resolved["seed"],
        fixed_beta=_parse_beta(resolved["beta"]),
        batch_size=resolved["batch_size"],
    )
    if resolved["neg_sample"]:
        catalog = [s.item_id for s in samples]
        before = len(samples)
        samples = augment_with_sampled_negatives(
            samples, resolved["neg_sample"], catalog, seed=resolved["seed"]
        )
        print(
            f"note: negative sampling added {len(samples) - before} samples",
            file=sys.stderr,
        )
    result = train(samples, config)
    out = resolved["out"]
    outputs.append(out)
    write_model(out, result.model)
    history_out = resolved["history_out"] or out + ".history.csv"
    resolved["history_out"] = history_out
    outputs.append(history_out)
    write_history(history_out, result.history, config.objective)
    _write_manifest(out, "train", resolved, [resolved["samples"]], outputs)


def _cmd_analyze(resolved: dict, outputs: list[str]) -> None:
    result = ingest_log(resolved["events"], workers=resolved["threads"])
    config = CohortConfig(
        reference=parse_window(resolved["ref"]),
        investigation=parse_window(resolved["inv"]),
        platform=Platform(resolved["platform"]),
        bucket_edges=_parse_edges(resolved["buckets"]),
        min_watch_seconds=resolved["min_watch_seconds"],
    )
    labeling = LabelingConfig(ratio_cap=resolved["ratio_cap"])
    report = analyze(result.events, config, labeling)
    if report.empty:
        print("warning: no users with reference-window engagement", file=sys.stderr)
    out = resolved["out"]
    outputs.append(out)
    write_report(out, report)
    plot_out = resolved["plot_out"] or out + ".plot.csv"
    resolved["plot_out"] = plot_out
    outputs.append(plot_out)
    write_plot_data(plot_out, report)
    _write_manifest(out, "analyze", resolved, [resolved["events"]], outputs)


def _cmd_simulate(resolved: dict, outputs: list[str]) -> None:
    fixed_beta = _parse_beta(resolved["beta"])

    def train_config(objective: str, seed: int) -> TrainConfig:
        return TrainConfig(
            objective=Objective(objective),
            learning_rate=resolved["lr"],
            epochs=resolved["epochs"],
            dimension=resolved["dim"],
            l2=resolved["l2"],
            seed=seed,
            fixed_beta=fixed_beta,
            batch_size=resolved["batch_size"],
        )

    def sim_config(seed: int) -> SimConfig:
        return SimConfig(
            population=resolved["population"],
            catalog=resolved["catalog"],
            days=resolved["days"],
            slate_size=resolved["slate"],
            candidate_pool=resolved["pool"],
            dimension=resolved["dim"],
            temperature=resolved["temperature"],
            surface_true_correlation=resolved["rho"],
            trust_decay=resolved["trust_decay"],
            trust_recovery=resolved["trust_recovery"],
            return_curve=ReturnCurve(),
            seed=seed,
            warm_start=resolved["warm_start"],
            labeling=LabelingConfig(rule_mode=RuleMode(resolved["rule"])),
        )

    out = resolved["out"]
    outputs.append(out)
    base = resolved["seed"]
    if resolved["seeds"] == 1:
        report = simulate_experiment(
            train_config(resolved["obj_a"], base),
            train_config(resolved["obj_b"], base),
            sim_config(base),
        )
        write_daily_report(out, report)
    else:
        with open(out, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["seed"] + DAILY_REPORT_HEADER)
            for offset in range(resolved["seeds"]):
                seed = base + offset
                report = simulate_experiment(
                    train_config(resolved["obj_a"], seed),
                    train_config(resolved["obj_b"], seed),
                    sim_config(seed),
                )
                append_daily_report(handle, report, seed)
    _write_manifest(out, "simulate", resolved, [], outputs)


def _cmd_report(resolved: dict, outputs: list[str]) -> None:
    sections = []
    inputs = []
    if resolved["analyze"]:
        inputs.append(resolved["analyze"])
        cohort = read_report(resolved["analyze"])
        lines = ["[cohort] bucket,users,decline_proportion"]
        for bucket in cohort.buckets:
            lines.append(
                f"{bucket.label},{bucket.users},{bucket.decline_proportion:.6f}"
            )
        lines.append(
            f"considered={cohort.considered} excluded={cohort.excluded}"
        )
        sections.append("\n".join(lines))
    if resolved["simulate"]:
        inputs.append(resolved["simulate"])
        with open(resolved["simulate"], encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
        if not rows or rows[0] not in (
            DAILY_REPORT_HEADER,
            ["seed"] + DAILY_REPORT_HEADER,
        ):
            raise ValueError(
                f"{resolved['simulate']}: not a simulation daily report"
            )
        lines = ["[simulation] " + ",".join(rows[0])]
        lines += [",".join(row) for row in rows[1:]]
        sections.append("\n".join(lines))
    if resolved["train_history"]:
        inputs.append(resolved["train_history"])
        with open(resolved["train_history"], encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
        if not rows or rows[0] != ["epoch", "objective", "loss"]:
            raise ValueError(f"{resolved['train_history']}: not a loss history")
        lines = ["[training] epoch,objective,loss"]
        lines += [",".join(row) for row in rows[1:]]
        sections.append("\n".join(lines))
    if not sections:
        raise ValueError("report needs at least one of --analyze/--simulate/--train-history")
    out = resolved["out"]
    outputs.append(out)
    with open(out, "w", encoding="utf-8") as handle:
        handle.write(f"tolrec {__version__} run summary\n\n")
        handle.write("\n\n".join(sections))
        handle.write("\n")
    _write_manifest(out, "report", resolved, inputs, outputs)


_HANDLERS = {
    "label": _cmd_label,
    "train": _cmd_train,
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    outputs: list[str] = []
    try:
        resolved = _resolve(args)
        _HANDLERS[args.command](resolved, outputs)
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        for path in outputs:
            try:
                Path(path).unlink(missing_ok=True)
            except OSError:
                pass
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
