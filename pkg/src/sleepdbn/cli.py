"""Command-line entry point: ``sleepdbn <command> [options]``.

Every command reads files, writes files into ``--out`` and records a
``run_log_<command>.json`` with the configuration hash, seed, schema
versions and output checksums. No command reads state other than its
inputs, so re-running with the same inputs and seed reproduces the outputs
byte for byte.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import bn as bnlib
from . import experiments as ex
from . import interventions as iv
from . import reporting as rp
from .bouts import cohort_bouts, discretize_subject, fit_discretization
from .hypnogram_io import HEALTH_STATUSES, STAGES, parse_cohort, validate_cohort, write_cohort
from .seeding import int_seed
from .simulator import make_default_ground_truth, simulate_cohort

log = logging.getLogger("sleepdbn")

BOUT_COLUMNS = [
    "subject_id", "t", "stage", "duration_min", "tsso_min", "cst_min", "crst_min",
    "d_level", "t_level", "cst_level", "crst_level",
]


@dataclass
class RunConfig:
    input: str | None = None
    out: str = "out"
    model: str | None = None
    metadata: str | None = None
    stage_format: str = "token"
    lag: int = 2
    include_tsso: bool = False
    include_duration: bool = True
    cumulative: str = "none"
    alpha: float = 1.0
    seed: int = 0
    folds: int = 3
    replicates: int = 1000
    samples: int = 1000
    night_length_min: float = 480.0
    group_sizes: dict | None = None

    def bn_config(self) -> bnlib.BnConfig:
        return bnlib.BnConfig(self.lag, self.include_tsso, self.include_duration, self.cumulative, self.alpha)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def load_run_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    names = {f.name for f in fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(**values)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_log(cfg: RunConfig, command: str, outputs: list[Path], notes: list[str]):
    out = Path(cfg.out)
    doc = {
        "command": command,
        "config": asdict(cfg),
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "schemas": {
            "model": bnlib.MODEL_SCHEMA,
            "table": rp.TABLE_SCHEMA,
            "results": rp.RESULTS_SCHEMA,
        },
        "outputs": {p.name: _sha(p) for p in sorted(outputs)},
        "notes": notes,
    }
    rp.write_json(doc, out / f"run_log_{command}.json")


def _read_cohort(cfg: RunConfig):
    if not cfg.input:
        raise SystemExit("--input is required")
    return parse_cohort(cfg.input, cfg.stage_format, cfg.metadata)


def _discrete(cohort, spec, notes):
    skipped = []
    subjects = cohort_bouts(cohort, skipped)
    for sid in skipped:
        notes.append(f"skipped {sid}: no sleep onset")
        log.warning("skipped %s: no sleep onset", sid)
    return subjects, [discretize_subject(s, spec) for s in subjects] if spec else None


def cmd_simulate(cfg: RunConfig):
    gt = make_default_ground_truth(night_length_min=cfg.night_length_min)
    if cfg.group_sizes:
        gt.group_sizes = dict(cfg.group_sizes)
    cohort = simulate_cohort(gt, int_seed(cfg.seed, "simulation"))
    path = Path(cfg.out) / "cohort.csv"
    write_cohort(cohort, path, cfg.stage_format)
    return [path], []


def cmd_preprocess(cfg: RunConfig):
    notes: list[str] = []
    cohort = _read_cohort(cfg)
    report = validate_cohort(cohort)
    notes.extend(report.lines())
    subjects, _ = _discrete(cohort, None, notes)
    spec = fit_discretization(subjects)
    rows = []
    for s in subjects:
        ds = discretize_subject(s, spec)
        for t in range(len(s)):
            rows.append([
                s.subject_id, t, STAGES[s.stage[t]], f"{s.duration[t]:.1f}", f"{s.tsso[t]:.1f}",
                f"{s.cst[t]:.1f}", f"{s.crst[t]:.1f}",
                ds.d_level[t], ds.t_level[t], ds.cst_level[t], ds.crst_level[t],
            ])
    out = Path(cfg.out)
    p1 = out / "bouts.csv"
    rp.write_delimited(rows, p1, BOUT_COLUMNS)
    p2 = out / "discretization.json"
    rp.write_json(spec.to_dict(), p2)
    n_epochs = sum(s.n_epochs for s in subjects)
    notes.append(f"{n_epochs} epochs after onset -> {len(rows)} bouts")
    return [p1, p2], notes


def cmd_fit(cfg: RunConfig):
    notes: list[str] = []
    cohort = _read_cohort(cfg)
    subjects, _ = _discrete(cohort, None, notes)
    spec = fit_discretization(subjects)
    model = ex.fit_model(cfg.bn_config(), [discretize_subject(s, spec) for s in subjects], spec)
    path = Path(cfg.model) if cfg.model else Path(cfg.out) / "model.json"
    bnlib.save_model(model, path)
    notes.append(f"config {model.config.label}; {bnlib.n_parameters(model.dag)} free parameters")
    return [path], notes


def _load_model(cfg: RunConfig):
    path = Path(cfg.model) if cfg.model else Path(cfg.out) / "model.json"
    return bnlib.load_model(path)


def _mean_sd(v) -> str:
    v = np.asarray(v, float) * 100
    sd = v.std(ddof=1) if len(v) > 1 else 0.0
    return f"{v.mean():.1f} ({sd:.1f})"


def cmd_predict(cfg: RunConfig):
    notes: list[str] = []
    model = _load_model(cfg)
    cohort = _read_cohort(cfg)
    _, discrete = _discrete(cohort, model.discretization, notes)
    windows = bnlib.build_windows(discrete, model.config, model.dag)
    probs = bnlib.predict_proba(model, windows)
    pred = np.argmax(probs, axis=1)
    truth = windows.column(bnlib.stage_node(0))
    rows = []
    t_index = np.zeros(len(windows), dtype=int)
    for i in np.unique(windows.subject):
        m = windows.subject == i
        t_index[m] = np.arange(m.sum()) + model.lag
    for j in range(len(windows)):
        rows.append([
            windows.subject_ids[windows.subject[j]], t_index[j], STAGES[truth[j]], STAGES[pred[j]],
            *(f"{p:.4f}" for p in probs[j]),
        ])
    out = Path(cfg.out)
    p1 = out / "predictions.csv"
    rp.write_delimited(rows, p1, ["subject_id", "t", "truth", "predicted", *(f"p_{s}" for s in STAGES)])
    scores = ex.score_subjects(model, discrete)
    summary = [[s.subject_id, HEALTH_STATUSES[s.hs], f"{100 * s.accuracy:.1f}", f"{100 * s.f1:.1f}"] for s in scores]
    summary.append(["on-subject mean (SD)", "", _mean_sd([s.accuracy for s in scores]), _mean_sd([s.f1 for s in scores])])
    p2 = out / "prediction_summary.csv"
    rp.write_delimited(summary, p2, ["subject_id", "health_status", "accuracy_pct", "f1_pct"])
    notes.append(f"accuracy {summary[-1][2]}, F1 {summary[-1][3]}")
    return [p1, p2], notes


def cmd_classify(cfg: RunConfig):
    notes: list[str] = []
    model = _load_model(cfg)
    cohort = _read_cohort(cfg)
    _, discrete = _discrete(cohort, model.discretization, notes)
    scores = ex.score_subjects(model, discrete)
    rows = [
        [s.subject_id, HEALTH_STATUSES[s.hs], *(f"{p:.4f}" for p in s.posterior), HEALTH_STATUSES[int(np.argmax(s.posterior))]]
        for s in scores
    ]
    out = Path(cfg.out)
    p1 = out / "posteriors.csv"
    rp.write_delimited(rows, p1, ["subject_id", "health_status", *(f"p_{h}" for h in HEALTH_STATUSES), "predicted"])
    report = [
        ["accuracy_pct", _mean_sd([s.accuracy for s in scores])],
        ["f1_pct", _mean_sd([s.f1 for s in scores])],
    ]
    try:
        auroc = ex.mean_ovr_auroc(np.array([s.posterior for s in scores]), [s.hs for s in scores])
        report.append(["mean_ovr_auroc_pct", f"{100 * auroc:.1f}"])
    except ValueError as exc:
        report.append(["mean_ovr_auroc_pct", "NA"])
        notes.append(str(exc))
    p2 = out / "classify_report.csv"
    rp.write_delimited(report, p2, ["metric", "value"])
    return [p1, p2], notes


def cmd_experiment(cfg: RunConfig):
    notes: list[str] = []
    cohort = _read_cohort(cfg)
    plan = ex.make_cv_plan(cohort, cfg.folds, int_seed(cfg.seed, "cv"))
    results = ex.run_grid(cohort, plan, ex.enumerate_configs(cfg.alpha))
    rows = []
    for r in results:
        c = r.config
        rows.append([
            c.lag, int(c.include_tsso), int(c.include_duration), c.cumulative,
            *(f"{100 * r.mean(m):.1f}" for m in ex.METRICS), *(f"{100 * r.sd(m):.1f}" for m in ex.METRICS),
        ])
    out = Path(cfg.out)
    paths = [out / "experiment_results.csv"]
    rp.write_delimited(
        rows, paths[0],
        ["lag", "tsso", "duration", "cumulative", "accuracy_pct", "f1_pct", "auroc_pct", "accuracy_sd", "f1_sd", "auroc_sd"],
    )
    doc = {"schema": rp.RESULTS_SCHEMA, "folds": cfg.folds, "assignments": plan.assignments, "regressions": {}}
    for metric in ex.METRICS:
        mr = ex.fit_meta_regression(results, metric)
        p = out / f"regression_{metric}.csv"
        rp.write_delimited(rp.regression_rows(mr), p, ["variable", "coefficient", "p_value", "band"])
        paths.append(p)
        doc["regressions"][metric] = {
            "coefficients": dict(zip(ex.REGRESSORS, mr.coefficients.tolist())),
            "p_values": dict(zip(ex.REGRESSORS, mr.p_values.tolist())),
            "f_stat": mr.f_stat,
            "df": [mr.df_model, mr.df_resid],
            "r2_adjusted": mr.r2_adjusted,
        }
    paths.append(out / "experiment.json")
    rp.write_json(doc, paths[-1])
    return paths, notes


def cmd_intervene(cfg: RunConfig):
    notes: list[str] = []
    model = _load_model(cfg)
    run = iv.run_interventions(model, cfg.replicates, cfg.samples, int_seed(cfg.seed, "intervention"))
    records = []
    for h, est in run.expected.items():
        records.extend(rp.estimate_rows(est, "expected", h, "", cfg.samples))
    for name, est in run.contrasts.items():
        cond, ref = name.split("-")
        records.extend(rp.estimate_rows(est, "contrast", cond, ref, cfg.samples))
    out = Path(cfg.out)
    paths = [out / "estimates.csv", out / "estimates.json"]
    rp.export_tables(records, paths[0], paths[1])
    graphs = out / "graphs"
    lags = [lag for lag in (1, 2) if lag <= model.lag]
    if model.lag < 2:
        notes.append("model lag < 2: lag-2 outputs skipped")
    for lag in lags:
        paths += rp.export_transition_graph(run.expected["H"], "expected", lag, graphs, "H")
        for name, est in run.contrasts.items():
            paths += rp.export_transition_graph(est, "contrast", lag, graphs, name)
    return paths, notes


def cmd_report(cfg: RunConfig):
    notes: list[str] = []
    cohort = _read_cohort(cfg)
    subjects, _ = _discrete(cohort, None, notes)
    table = rp.bout_stats_table(rp.descriptive_bout_stats(subjects))
    path = Path(cfg.out) / "bout_stats.csv"
    rp.write_delimited(table[1:], path, table[0])
    return [path], notes


COMMANDS = {
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "classify": cmd_classify,
    "experiment": cmd_experiment,
    "intervene": cmd_intervene,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sleepdbn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with RunConfig fields")
        sp.add_argument("--input", help="hypnogram file")
        sp.add_argument("--metadata", help="sidecar subject_id,health_status file")
        sp.add_argument("--model", help="model file (default <out>/model.json)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--stage-format", dest="stage_format", choices=("token", "numeric"))
        sp.add_argument("--folds", type=int)
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--lag", type=int)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--cumulative", choices=bnlib.CUMULATIVE_VARIANTS)
        sp.add_argument("--tsso", dest="include_tsso", action="store_true", default=None)
        sp.add_argument("--no-duration", dest="include_duration", action="store_false", default=None)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    cfg = load_run_config(args)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    outputs, notes = COMMANDS[args.command](cfg)
    _write_log(cfg, args.command, outputs, notes)
    for line in notes:
        log.info(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
