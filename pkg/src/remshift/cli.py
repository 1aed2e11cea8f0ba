"""Command-line interface.

Every subcommand reads a YAML configuration, writes its tables under
``--out-dir`` and records a ``manifest.json`` from which ``replay`` can
re-run it and check the outputs byte for byte (timing columns excepted).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .baseline import anchored_lambda0, breslow_cumulative, lambda0_from_step, write_breslow
from .bike import fit_bike
from .design import TermSpec, assemble_difference_design
from .errors import RemError
from .fitter import fit_degenerate_logistic, predict_smooth
from .fullik import BiasConfig, compare_bias
from .ingest import load_config, read_manifest, sha256_file, write_events, write_manifest
from .scenarios import Scenario, simulate_scenario
from .simulate import spawn_seeds
from .studies import StudyConfig, run_study, scenario_terms, summarize, write_records, write_summary
from .timeshift import draw_shifts_for, sample_case_control, shift_process

log = logging.getLogger("remshift")

STUDY_STATISTICS = ("wave", "l2_g0", "l2_g0_shape", "g0_level_error", "lambda0_hat", "lambda0_anchored",
                    "dropped_fraction", "structural_zero_fraction")
VOLATILE = {"fullik_summary.csv": ("mean_runtime_seconds",), "records.csv": ("seconds",)}


def _seed(args, cfg):
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def _simulate(cfg, seed):
    sc = Scenario.from_dict(cfg.get("scenario", {}))
    sim_seed, rest = spawn_seeds(seed, 2)
    seq, inst = simulate_scenario(sc, sim_seed)
    return seq, inst, rest


def _sample(seq, nu, seed, policy=None):
    shift_seed, cc_seed, cv_seed = spawn_seeds(seed, 3)
    kw = {} if policy is None else {"policy": policy}
    shifts = draw_shifts_for(seq, nu, shift_seed, **kw)
    base = {} if policy is None else {"base_risk": policy}
    ccs = sample_case_control(shift_process(seq, shifts), seed=cc_seed, **base)
    return ccs, int(cv_seed.generate_state(1)[0])


def _sim_terms(cfg):
    if "terms" in cfg:
        return [TermSpec.from_dict(t) for t in cfg["terms"]]
    return scenario_terms(cfg.get("fit", {}).get("rank", 10))


def _fit_simulation(cfg, seed):
    seq, inst, rest = _simulate(cfg, seed)
    ccs, cv_seed = _sample(seq, float(cfg.get("nu", 1.0)), rest)
    design = assemble_difference_design(ccs, inst.catalog, _sim_terms(cfg))
    fc = cfg.get("fit", {})
    fit = fit_degenerate_logistic(design, folds=fc.get("folds", 10), grid=fc.get("grid"), seed=cv_seed)
    return seq, inst, ccs, fit


def _write_curves(fit, out, points=200):
    paths = []
    for name, b in fit.design.blocks.items():
        if b.spec.kind == "linear" or name in fit.inestimable:
            continue
        lo, hi = (0.0, b.basis.period) if b.spec.kind == "cyclic" else (b.basis.lo, b.basis.hi)
        path = out / f"curve_{name}.csv"
        predict_smooth(fit, name, np.linspace(lo, hi, points)).to_csv(path)
        paths.append(path)
    return paths


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
    return path


def cmd_simulate(cfg, args, out):
    seed = _seed(args, cfg)
    seq, inst, _ = _simulate(cfg, seed)
    ev = out / "events.csv"
    write_events(seq, ev)
    nodes = out / "nodes.csv"
    with open(nodes, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x"])
        for i, x in enumerate(inst.catalog.node_attrs["x"]):
            w.writerow([i, repr(float(x))])
    return seed, [ev, nodes], {}


def cmd_shift(cfg, args, out):
    seed = _seed(args, cfg)
    if cfg.get("model") == "bike":
        from .bike import load_bike_data
        data = load_bike_data(cfg, args.base_dir)
        seq, policy, labels = data.sequence, data.policy, data.sequence.labels
        ccs, _ = _sample(seq, float(cfg.get("nu", 1.0)), seed, policy)
    else:
        seq, inst, rest = _simulate(cfg, seed)
        labels = None
        ccs, _ = _sample(seq, float(cfg.get("nu", 1.0)), rest)
    path = out / "case_control.csv"
    ccs.to_csv(path, labels=labels)
    info = _write_json(out / "sampling.json", {"rows": len(ccs), "dropped_uninformative": ccs.dropped_uninformative,
                                               "dropped_fraction": ccs.dropped_fraction,
                                               "total_events": ccs.total_events})
    return seed, [path, info], {}


def cmd_fit(cfg, args, out):
    seed = _seed(args, cfg)
    inputs = []
    if cfg.get("model") == "bike":
        bf = fit_bike(cfg, args.base_dir, seed)
        fit, report = bf.fit, bf.data.report
        inputs = bf.data.inputs
    else:
        _, _, ccs, fit = _fit_simulation(cfg, seed)
        report = {"rows": len(ccs), "dropped_uninformative": ccs.dropped_uninformative}
    summary = out / "summary.csv"
    fit.write_summary(summary)
    paths = [summary] + _write_curves(fit, out)
    report = {**report, "converged": fit.converged, "iterations": fit.iterations, "separation": fit.separation,
              "inestimable": list(fit.inestimable), "smoothing_params": fit.smoothing_params, "edf": fit.edf,
              "deviance": fit.deviance}
    paths.append(_write_json(out / "fit_report.json", report))
    return seed, paths, {"inputs": inputs}


def cmd_baseline(cfg, args, out):
    seed = _seed(args, cfg)
    if cfg.get("model") == "bike":
        bf = fit_bike(cfg, args.base_dir, seed)
        fit = bf.fit
        step = breslow_cumulative(bf.data.sequence, fit, bf.data.catalog, bf.data.policy)
        inputs = bf.data.inputs
    else:
        seq, inst, _, fit = _fit_simulation(cfg, seed)
        step = breslow_cumulative(seq, fit, inst.catalog)
        inputs = []
    path = out / "breslow.csv"
    write_breslow(path, step)
    lam, se = lambda0_from_step(step)
    info = {"lambda0": lam, "se": se}
    time_smooths = [n for n, b in fit.design.blocks.items() if b.spec.covariate == "time" and b.spec.kind != "linear"]
    if len(time_smooths) == 1:
        info["lambda0_anchored"] = anchored_lambda0(fit, time_smooths[0], lam)
    res = _write_json(out / "lambda0.json", info)
    return seed, [path, res], {"inputs": inputs}


def cmd_compare_fullik(cfg, args, out):
    section = dict(cfg.get("compare", cfg))
    section.pop("model", None)
    if args.seed is not None:
        section["seed"] = args.seed
    bc = BiasConfig.from_dict(section)
    summary = compare_bias(bc, workers=args.workers)
    path = out / "fullik_summary.csv"
    summary.to_csv(path)
    est = out / "fullik_estimates.csv"
    with open(est, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "n", "replication", "estimate"])
        for (m, n), vals in summary.estimates.items():
            for r, v in enumerate(vals):
                w.writerow([m, n, r, repr(float(v))])
    return bc.seed, [path, est], {}


def cmd_study(cfg, args, out):
    section = dict(cfg.get("study", cfg))
    section.pop("model", None)
    if args.seed is not None:
        section["seed"] = args.seed
    sc = StudyConfig.from_dict(section)
    records = run_study(sc, workers=args.workers)
    rec_path = out / "records.csv"
    write_records(rec_path, records)
    rows = []
    for col in STUDY_STATISTICS:
        rows += summarize(records, col)
    sum_path = out / "summary.csv"
    write_summary(sum_path, rows)
    return sc.seed, [rec_path, sum_path], {}


COMMANDS = {
    "simulate": cmd_simulate,
    "shift": cmd_shift,
    "fit": cmd_fit,
    "baseline": cmd_baseline,
    "compare-fullik": cmd_compare_fullik,
    "study": cmd_study,
}


def stable_digest(path):
    """SHA-256 of a file, ignoring the timing columns of known tables."""
    path = Path(path)
    drop = VOLATILE.get(path.name)
    if not drop:
        return sha256_file(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    keep = [i for i, h in enumerate(rows[0]) if h not in drop]
    buf = io.StringIO()
    w = csv.writer(buf)
    for r in rows:
        w.writerow([r[i] for i in keep])
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def run_command(name, cfg, args, config_path=None):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed, outputs, extra = COMMANDS[name](cfg, args, out)
    extra = {**extra, "stable_outputs": {Path(p).name: stable_digest(p) for p in outputs},
             "base_dir": str(Path(args.base_dir).resolve()), "workers": args.workers}
    inputs = extra.pop("inputs", [])
    return write_manifest(out, name, cfg, config_path, seed, inputs, outputs, extra)


def cmd_replay(args):
    man = read_manifest(args.manifest)
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(args.out_dir) if args.out_dir else Path(tmp)
        ns = argparse.Namespace(seed=man["seed"], workers=args.workers, out_dir=str(out),
                                base_dir=man.get("base_dir", "."))
        new = read_manifest(run_command(man["command"], man["config"], ns, man.get("config_path")))
        mismatched = sorted(k for k, v in man["stable_outputs"].items() if new["stable_outputs"].get(k) != v)
    if mismatched:
        print(f"replay differs in: {', '.join(mismatched)}", file=sys.stderr)
        return 1
    print(f"replay identical: {len(man['stable_outputs'])} output(s)")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="remshift", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--workers", type=int, default=1, help="parallel replication workers")
        p.add_argument("--out-dir", default=".", help="directory for outputs and manifest")
    r = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    r.add_argument("manifest")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out-dir", default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        if args.command == "replay":
            return cmd_replay(args)
        cfg = load_config(args.config)
        args.base_dir = str(Path(args.config).resolve().parent)
        path = run_command(args.command, cfg, args, Path(args.config).resolve())
        print(f"wrote {path}")
        return 0
    except RemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
