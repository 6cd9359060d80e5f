"""Subcommand implementations. Each ``cmd_*`` returns a process exit code.

Exit codes: 0 when all requested work succeeded, 1 when some dataset or
step failed, 2 when an input file is missing or the configuration is
invalid.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__
from . import classifiers as clf
from . import config as config_mod
from .encoding import FeatureMatrix, encode_dataset, read_feature_csv
from .evaluation import ENSEMBLE, EvaluationReport, accuracy_f1, confusion, mcc, run_experiment
from .gan import balance_dataset, save_gan
from .sequence_io import DatasetRegistry, load_dataset

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2
CLASSIFIER_ORDER = (*clf.KINDS, ENSEMBLE)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _prepare_out(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(config_mod.dump(cfg), encoding="utf-8")
    return out


def _selected(cfg, names):
    entries = cfg["datasets"]
    if names:
        unknown = set(names) - {e["name"] for e in entries}
        if unknown:
            raise config_mod.ConfigError(f"--dataset names not in config: {sorted(unknown)}")
        entries = [e for e in entries if e["name"] in names]
    return entries


def _load_and_encode(cfg, entry):
    path = config_mod.resolve_path(cfg, entry["path"])
    ds = load_dataset(entry["name"], path, DatasetRegistry())
    fm = encode_dataset(ds, config_mod.encoder_configs(cfg), cfg["encoders"]["enabled"])
    return ds, fm


def _for_each_dataset(cfg, names, work) -> int:
    """Run ``work(entry)`` per dataset, isolating failures."""
    code = EXIT_OK
    failures = []
    for entry in _selected(cfg, names):
        try:
            work(entry)
        except FileNotFoundError as exc:
            log.error("%s: missing file: %s", entry["name"], exc.filename or exc)
            failures.append((entry["name"], f"missing file {exc.filename or exc}"))
            code = max(code, EXIT_INPUT)
        except Exception as exc:  # one dataset must not stop the others
            log.error("%s: %s", entry["name"], exc)
            failures.append((entry["name"], str(exc)))
            code = max(code, EXIT_FAILED)
    if failures:
        log.error("%d dataset(s) failed: %s", len(failures), "; ".join(f"{n} ({m})" for n, m in failures))
    return code


# -- encode -------------------------------------------------------------------

def cmd_encode(cfg, datasets=None) -> int:
    out = _prepare_out(cfg) / "encoded"

    def work(entry):
        ds, fm = _load_and_encode(cfg, entry)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{ds.name}.csv").write_text(fm.to_csv(), encoding="utf-8")
        _write_json(out / f"{ds.name}.meta.json", {
            **config_mod.echo(cfg), "dataset": ds.name, "n_pos": ds.n_pos, "n_neg": ds.n_neg,
            "warnings": ds.warnings,
            "blocks": [{"name": b.name, "offset": b.offset, "width": b.width} for b in fm.schema.blocks]})
        log.info("%s: encoded %d x %d", ds.name, *fm.rows.shape)

    return _for_each_dataset(cfg, datasets, work)


# -- balance --------------------------------------------------------------------

def _balance_matrix(cfg, fm, name, out):
    bal = balance_dataset(fm.rows, fm.labels, config_mod.gan_config(cfg))
    n_syn = bal.n_synthetic
    ids = list(fm.row_ids) + [f"synthetic_{i:05d}" for i in range(n_syn)]
    balanced = FeatureMatrix(bal.features, fm.schema, ids, bal.labels)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.csv").write_text(balanced.to_csv({"provenance": bal.provenance}), encoding="utf-8")
    if bal.gan is not None:
        save_gan(bal.gan, out / f"{name}.gan.npz")
    _write_json(out / f"{name}.meta.json", {**config_mod.echo(cfg), "dataset": name,
                                             "n_real": len(fm.row_ids), "n_synthetic": n_syn})
    log.info("%s: %d synthetic rows appended", name, n_syn)


def cmd_balance(cfg, datasets=None, features=None) -> int:
    out = _prepare_out(cfg) / "balanced"
    if features:
        path = Path(features)
        if not path.exists():
            log.error("missing file: %s", path)
            return EXIT_INPUT
        fm, _ = read_feature_csv(path.read_text(encoding="utf-8"))
        try:
            _balance_matrix(cfg, fm, path.stem, out)
        except Exception as exc:
            log.error("%s: %s", path, exc)
            return EXIT_FAILED
        return EXIT_OK

    def work(entry):
        _balance_matrix(cfg, _load_and_encode(cfg, entry)[1], entry["name"], out)

    return _for_each_dataset(cfg, datasets, work)


# -- train / evaluate ----------------------------------------------------------

def _train_one(cfg, X, y, kind):
    exp = config_mod.experiment_config(cfg)
    seeds = np.random.SeedSequence(cfg["seed"]).generate_state(len(exp.classifiers) + 1)
    specs = [clf.ClassifierSpec(k, dict(exp.hyper.get(k, {})), int(s)) for k, s in zip(exp.classifiers, seeds)]
    if kind == ENSEMBLE:
        meta = clf.ClassifierSpec("logistic", dict(exp.hyper.get("meta", {})), int(seeds[-1]))
        return clf.train_stacking(specs, meta, X, y, mode=exp.stacking_mode)
    spec = next((s for s in specs if s.kind == kind), None)
    if spec is None:
        spec = clf.ClassifierSpec(kind, dict(exp.hyper.get(kind, {})), int(seeds[0]))
    return clf.train(spec, X, y)


def _save_model(cfg, model, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {**clf.model_to_dict(model), "provenance": config_mod.echo(cfg)}
    path.write_text(json.dumps(payload), encoding="utf-8")


def cmd_train(cfg, classifier: str, datasets=None, features=None) -> int:
    if classifier not in CLASSIFIER_ORDER:
        log.error("unknown classifier %r; choose from %s", classifier, ", ".join(CLASSIFIER_ORDER))
        return EXIT_INPUT
    out = _prepare_out(cfg) / "models"
    if features:
        path = Path(features)
        if not path.exists():
            log.error("missing file: %s", path)
            return EXIT_INPUT
        fm, _ = read_feature_csv(path.read_text(encoding="utf-8"))
        try:
            _save_model(cfg, _train_one(cfg, fm.rows, fm.labels, classifier), out / f"{path.stem}.{classifier}.json")
        except Exception as exc:
            log.error("%s: %s", path, exc)
            return EXIT_FAILED
        return EXIT_OK

    def work(entry):
        _, fm = _load_and_encode(cfg, entry)
        _save_model(cfg, _train_one(cfg, fm.rows, fm.labels, classifier), out / f"{entry['name']}.{classifier}.json")

    return _for_each_dataset(cfg, datasets, work)


def evaluate_model(model, X, y) -> dict:
    pred = clf.predict(model, X)
    cm = confusion(y, pred)
    acc, f1 = accuracy_f1(cm)
    return {"confusion": {"tp": cm.tp, "tn": cm.tn, "fp": cm.fp, "fn": cm.fn},
            "mcc": mcc(cm), "accuracy": acc, "f1": f1, "n": cm.total}


def cmd_evaluate(cfg, model_path, features) -> int:
    model_path, features = Path(model_path), Path(features)
    for p in (model_path, features):
        if not p.exists():
            log.error("missing file: %s", p)
            return EXIT_INPUT
    out = _prepare_out(cfg) / "evaluation"
    try:
        model = clf.model_from_dict(json.loads(model_path.read_text(encoding="utf-8")))
        fm, extra = read_feature_csv(features.read_text(encoding="utf-8"))
        keep = np.array([p != "synthetic" for p in extra.get("provenance", ["real"] * len(fm.row_ids))])
        metrics = evaluate_model(model, fm.rows[keep], fm.labels[keep])
    except Exception as exc:
        log.error("evaluation failed: %s", exc)
        return EXIT_FAILED
    _write_json(out / f"{features.stem}.{model_path.stem}.json",
                {**config_mod.echo(cfg), "model": str(model_path), "features": str(features), **metrics})
    print(json.dumps(metrics))
    return EXIT_OK


# -- run / report ------------------------------------------------------------------

def report_filename(rep: EvaluationReport) -> str:
    return f"{rep.dataset}__{rep.classifier}__{rep.tag}.json"


def report_payload(cfg, rep: EvaluationReport, warnings=()) -> dict:
    return {"schema_version": REPORT_SCHEMA_VERSION, "toolkit_version": __version__, "created": _now(),
            **rep.to_dict(), "dataset_warnings": list(warnings), "config": config_mod.echo(cfg)["config"]}


def cmd_run(cfg, datasets=None) -> int:
    out = _prepare_out(cfg)
    report_dir = out / "reports"
    exp = config_mod.experiment_config(cfg)
    payloads = []

    def work(entry):
        ds, fm = _load_and_encode(cfg, entry)
        enabled = list(cfg["encoders"]["enabled"])
        modes = ["off"] + ([cfg["balance"]] if cfg["balance"] != "off" else [])
        for mode in modes:
            reports = run_experiment(fm.rows, fm.labels, ds.name, enabled, mode, exp, cfg["seed"])
            for rep in reports.values():
                payload = report_payload(cfg, rep, ds.warnings)
                _write_json(report_dir / report_filename(rep), payload)
                payloads.append(payload)
            log.info("%s %s: ensemble mean MCC %.3f", ds.name, "-G" if mode == "off" else "+G",
                     reports[ENSEMBLE].mean_mcc if ENSEMBLE in reports else float("nan"))

    code = _for_each_dataset(cfg, datasets, work)
    if payloads:
        write_tables(payloads, out)
    return code


def _load_reports(report_dir: Path) -> list:
    payloads = []
    for path in sorted(report_dir.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, dict) and "schema_version" in data and "folds" in data:
            payloads.append(data)
    return payloads


def cmd_report(report_dir, out=None) -> int:
    report_dir = Path(report_dir)
    if not report_dir.is_dir():
        log.error("missing file: %s", report_dir)
        return EXIT_INPUT
    payloads = _load_reports(report_dir)
    if not payloads:
        log.error("no reports found in %s", report_dir)
        return EXIT_FAILED
    versions = {p["schema_version"] for p in payloads}
    if len(versions) > 1:
        log.error("mixed report schema versions %s in %s", sorted(versions), report_dir)
        return EXIT_FAILED
    target = Path(out) if out else report_dir
    write_tables(payloads, target)
    print((target / "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def _cell(p) -> str:
    return f"{p['mean_mcc']:.4f} ± {p['std_mcc']:.4f}"


def build_table(payloads) -> tuple[list, list]:
    """Rows per dataset, ``<classifier>-G`` / ``<classifier>+G`` column pairs."""
    datasets = list(dict.fromkeys(p["dataset"] for p in payloads))
    present = {(p["classifier"], p["balance"]) for p in payloads}
    columns = [(c, g) for c in CLASSIFIER_ORDER for g in ("-G", "+G") if (c, g) in present]
    index = {(p["dataset"], p["classifier"], p["balance"]): p for p in payloads}
    header = ["dataset"] + [f"{c}{g}" for c, g in columns]
    rows = []
    for d in datasets:
        rows.append([d] + [_cell(index[(d, c, g)]) if (d, c, g) in index else "" for c, g in columns])
    return header, rows


def directional(payloads) -> list:
    """Ensemble -G vs +G per dataset; flags which mean MCC is higher."""
    out = []
    index = {(p["dataset"], p["classifier"], p["balance"]): p for p in payloads}
    for d in dict.fromkeys(p["dataset"] for p in payloads):
        minus, plus = index.get((d, ENSEMBLE, "-G")), index.get((d, ENSEMBLE, "+G"))
        if minus is None or plus is None:
            continue
        a, b = minus["mean_mcc"], plus["mean_mcc"]
        higher = "+G" if b > a else "-G" if a > b else "tie"
        out.append({"dataset": d, "ensemble_minus_G": a, "ensemble_plus_G": b, "higher": higher,
                    "balance_mode": plus["balance_mode"]})
    return out


def write_tables(payloads, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    header, rows = build_table(payloads)
    lines = [",".join(header)] + [",".join(r) for r in rows]
    (out / "table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    direction = directional(payloads)
    _write_json(out / "directional.json", direction)

    text = ["MCC (mean ± std over folds)", ""]
    width = max(len(h) for h in header)
    for r in rows:
        text.append(r[0])
        text += [f"  {h:<{width}}  {v}" for h, v in zip(header[1:], r[1:]) if v]
    if direction:
        text += ["", "Ensemble before (-G) vs after (+G) balancing"]
        for d in direction:
            text.append(f"  {d['dataset']}: -G {d['ensemble_minus_G']:.4f}  +G {d['ensemble_plus_G']:.4f}"
                        f"  higher: {d['higher']} ({d['balance_mode']})")
    modes = {p["balance_mode"] for p in payloads}
    if "paper_faithful" in modes:
        text += ["", "NOTE: +G results use paper_faithful balancing (whole dataset balanced before splitting;"
                     " synthetic rows may appear in test sets)."]
    (out / "summary.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
