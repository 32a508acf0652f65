"""Command-line pipeline driver.

Each subcommand runs one stage end to end and writes its artifacts to the
declared output paths. Errors exit nonzero with a single machine-parsable
line on stderr: ``error: <key>: <message>``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from pathlib import Path

import click

from . import forest
from .detector import Thresholds, detect, write_warnings_file
from .errors import FootlabError
from .evaluation import load_segment_dataset, loso_evaluate, render_report
from .features import FeatureVector, chi2_scores, read_feature_csv, select_top_k
from .ingest import load_device_setup, parse_sensor_file, synchronize
from .mining import (
    apriori,
    build_entries,
    generate_rules,
    load_manual_rules,
    read_rules_file,
    write_rules_file,
)
from .store import AnnotationStore, parse_episode_file

DATA_DIR_ENV = "FOOTLAB_DATA_DIR"


def _fail(key: str, message: str) -> None:
    click.echo(f"error: {key}: {message}", err=True)
    sys.exit(1)


def _require_path(key: str, value: str | None) -> Path:
    if not value:
        _fail(key, "path not found")
    path = Path(value)
    if not path.exists():
        _fail(key, "path not found")
    return path


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = _require_path("config", path)
    try:
        return json.loads(p.read_text())
    except ValueError as exc:
        _fail("config", f"invalid document: {exc}")
        raise AssertionError  # unreachable


def _store_dir(explicit: str | None, config: dict) -> Path:
    root = explicit or config.get("store_dir") or os.environ.get(DATA_DIR_ENV)
    if not root:
        _fail("store", f"no store directory (use --store or ${DATA_DIR_ENV})")
    return Path(root)


@click.group()
def main() -> None:
    """Football annotation pipeline: ingest, HAR, mining, detection, serving."""


@main.command()
@click.option("--config", "config_path", required=True, help="ingest config document")
@click.option("--out", "out_path", required=True, help="output readings file")
def ingest(config_path: str, out_path: str) -> None:
    """Parse device files and synchronize them to the match clock."""
    doc = _load_config(config_path)
    try:
        players, periods = load_device_setup(doc)
    except FootlabError as exc:
        _fail("config", str(exc))
        return
    base = Path(config_path).parent
    rows = 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["player", "period_id", "t", "signal_id", "value"])
    dropped = 0
    for player, devices in players.items():
        device_files = doc["players"][player]
        for cfg, entry in zip(devices, device_files):
            file_key = f"players.{player}.file"
            rel = entry.get("file")
            if not rel:
                _fail(file_key, "path not found")
            path = base / rel
            if not path.exists():
                _fail(file_key, f"path not found ({path})")
            try:
                raw = parse_sensor_file(path.read_bytes(), cfg)
                synced, diag = synchronize(raw, cfg, periods, player_id=player)
            except FootlabError as exc:
                _fail(str(path), str(exc))
                return
            dropped += diag.dropped
            for r in synced:
                writer.writerow([r.player_id, r.period_id, repr(r.t), r.signal_id, repr(r.value)])
                rows += 1
    Path(out_path).write_bytes(buf.getvalue().encode())
    click.echo(f"wrote {rows} readings to {out_path} ({dropped} dropped)")


def _labeled_vectors_from(dataset_dir: str | None, features_path: str | None) -> list[FeatureVector]:
    if dataset_dir:
        return load_segment_dataset(_require_path("dataset", dataset_dir))
    path = _require_path("features", features_path)
    vectors, _ = read_feature_csv(path.read_bytes())
    return vectors


@main.command("har-train")
@click.option("--dataset", "dataset_dir", default=None, help="segment dataset directory")
@click.option("--features", "features_path", default=None, help="labeled feature table")
@click.option("--k", default=30, show_default=True)
@click.option("--trees", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True)
def har_train(dataset_dir, features_path, k, trees, seed, out_path) -> None:
    """Select features by chi-squared and train the forest."""
    if not dataset_dir and not features_path:
        _fail("dataset", "one of --dataset or --features is required")
    vectors = _labeled_vectors_from(dataset_dir, features_path)
    try:
        scores = chi2_scores(vectors)
        selection = select_top_k(scores, k)
        model = forest.train(vectors, selection, forest.ForestParams(n_trees=trees, seed=seed))
    except ValueError as exc:
        _fail("train", str(exc))
        return
    Path(out_path).write_bytes(forest.serialize(model))
    click.echo(f"trained {trees} trees on {len(vectors)} vectors; wrote {out_path}")


@main.command("har-predict")
@click.option("--model", "model_path", required=True)
@click.option("--features", "features_path", required=True, help="feature table to classify")
@click.option("--out", "out_path", required=True)
def har_predict(model_path, features_path, out_path) -> None:
    """Classify feature vectors and write predictions."""
    model = forest.deserialize(_require_path("model", model_path).read_bytes())
    vectors, _ = read_feature_csv(_require_path("features", features_path).read_bytes())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["player", "window_start", "window_duration", "predicted_class", "vote_fraction"])
    for vec in vectors:
        pred = forest.predict(model, vec)
        writer.writerow(
            [
                pred.player_id,
                repr(vec.window_ref[0]),
                repr(vec.window_ref[1]),
                pred.predicted_class,
                repr(pred.vote_fractions[pred.predicted_class]),
            ]
        )
    Path(out_path).write_bytes(buf.getvalue().encode())
    click.echo(f"predicted {len(vectors)} vectors; wrote {out_path}")


@main.command()
@click.option("--dataset", "dataset_dir", required=True, help="segment dataset directory")
@click.option("--k", default=30, show_default=True)
@click.option("--trees", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
def evaluate(dataset_dir, k, trees, seed, out_path, fmt) -> None:
    """Leave-one-subject-out evaluation over a segment dataset."""
    vectors = load_segment_dataset(_require_path("dataset", dataset_dir), progress=lambda m: click.echo(m, err=True))
    report = loso_evaluate(
        vectors, k=k, params=forest.ForestParams(n_trees=trees, seed=seed),
        progress=lambda m: click.echo(m, err=True),
    )
    Path(out_path).write_bytes(render_report(report, fmt))
    p, r, f = report.averages
    click.echo(f"macro averages: precision {p:.3f} recall {r:.3f} f-score {f:.3f}")


@main.command()
@click.option("--episodes", "episodes_path", default=None, help="episode file to mine")
@click.option("--store", "store_dir", default=None, help="store directory to mine from")
@click.option("--match", "match_id", default=None)
@click.option("--manual-rules", "manual_path", default=None, help="hand-written rules to append")
@click.option("--window", "window_s", default=10.0, show_default=True)
@click.option("--step", "step_s", default=5.0, show_default=True)
@click.option("--scope", default="per-player", show_default=True,
              type=click.Choice(["per-player", "per-team", "per-match"]))
@click.option("--min-support", default=0.05, show_default=True)
@click.option("--min-confidence", default=0.6, show_default=True)
@click.option("--out", "out_path", required=True)
def mine(episodes_path, store_dir, match_id, manual_path, window_s, step_s, scope,
         min_support, min_confidence, out_path) -> None:
    """Mine association rules from annotations (and activity labels)."""
    rows: list = []
    if episodes_path:
        rows.extend(parse_episode_file(_require_path("episodes", episodes_path).read_bytes()))
    elif store_dir or match_id:
        root = _store_dir(store_dir, {})
        with AnnotationStore(root) as store:
            matches = [match_id] if match_id else [m.match_id for m in store.list_matches()]
            for mid in matches:
                rows.extend(store.list_episodes(mid))
                rows.extend(store.list_activity_rows(mid))
    else:
        _fail("episodes", "one of --episodes or --store is required")
    if not rows:
        _fail("episodes", "no rows to mine")
    entries = build_entries(rows, window_s=window_s, step_s=step_s, scope=scope)
    if not entries:
        _fail("episodes", "no entries produced by the window parameters")
    itemsets = apriori(entries, min_support)
    rules = generate_rules(itemsets, entries, min_confidence)
    if manual_path:
        rules = rules + load_manual_rules(_require_path("manual-rules", manual_path).read_text())
    Path(out_path).write_bytes(write_rules_file(rules))
    # sidecar records the parameters the rules were mined under
    meta = {
        "window_s": window_s,
        "step_s": step_s,
        "scope": scope,
        "min_support": min_support,
        "min_confidence": min_confidence,
        "entries": len(entries),
        "rows": len(rows),
        "mined_rules": sum(1 for r in rules if r.origin == "mined"),
        "manual_rules": sum(1 for r in rules if r.origin == "manual"),
    }
    Path(str(out_path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    click.echo(f"mined {len(rules)} rules from {len(entries)} entries; wrote {out_path}")


@main.command("detect")
@click.option("--store", "store_dir", default=None)
@click.option("--match", "match_id", required=True)
@click.option("--rules", "rules_path", default=None)
@click.option("--window", "window_s", default=10.0, show_default=True)
@click.option("--step", "step_s", default=5.0, show_default=True)
@click.option("--scope", default="per-player", show_default=True,
              type=click.Choice(["per-player", "per-team", "per-match"]))
@click.option("--min-support", default=None, type=float)
@click.option("--min-confidence", default=None, type=float)
@click.option("--min-conviction", default=None, type=float)
@click.option("--out", "out_path", required=True)
def detect_cmd(store_dir, match_id, rules_path, window_s, step_s, scope,
               min_support, min_confidence, min_conviction, out_path) -> None:
    """Apply rules to a match and persist the resulting warnings."""
    rules_file = _require_path("rules", rules_path)
    rules = read_rules_file(rules_file.read_bytes())
    try:
        thresholds = Thresholds(
            min_support=min_support, min_confidence=min_confidence, min_conviction=min_conviction
        )
    except ValueError as exc:
        _fail("thresholds", str(exc))
        return
    root = _store_dir(store_dir, {})
    with AnnotationStore(root) as store:
        try:
            rows = [*store.list_episodes(match_id), *store.list_activity_rows(match_id)]
        except FootlabError as exc:
            _fail("match", str(exc))
            return
        entries = build_entries(rows, window_s=window_s, step_s=step_s, scope=scope) if rows else []
        warnings = detect(entries, rules, thresholds)
        store.store_warnings(match_id, warnings)
        Path(out_path).write_bytes(write_warnings_file(warnings))
    click.echo(f"detected {len(warnings)} warnings; wrote {out_path}")


@main.command()
@click.option("--store", "store_dir", default=None)
@click.option("--model", "model_path", default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--ui-dir", default=None, help="built review UI to serve under /ui")
def serve(store_dir, model_path, host, port, ui_dir) -> None:
    """Run the HTTP review service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    root = _store_dir(store_dir, {})
    if model_path:
        _require_path("model", model_path)
    if ui_dir is None and Path("frontend/dist").is_dir():
        ui_dir = "frontend/dist"
    store = AnnotationStore(root)
    app = create_app(store, ServiceConfig(model_path=model_path, ui_dir=ui_dir))
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--store", "store_dir", default=None)
@click.option("--out", "out_dir", required=True)
def export(store_dir, out_dir) -> None:
    """Dump every store table as delimited text."""
    root = _store_dir(store_dir, {})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with AnnotationStore(root) as store:
        tables = store.export_tables()
    for name, data in tables.items():
        (out / f"{name}.csv").write_bytes(data)
    click.echo(f"exported {len(tables)} tables to {out_dir}")


if __name__ == "__main__":
    main()
