"""Command-line entry point: synth, preprocess, distance, train, evaluate, report, matrix.

Exit codes: 0 success, 1 computation failure, 2 usage or I/O error.
Outputs default to ``$SUBJECTGAN_OUTPUT_DIR`` when an output flag is omitted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from itertools import permutations
from pathlib import Path

import numpy as np

from . import bench, pipeline
from .config import RunConfig
from .container import ContainerError, atomic_write_text
from .distance import w1_estimate
from .domain import Domain
from .estimators import ConvNetClassifier
from .metrics import EvalReport, read_confusion, weighted_f1
from .model import SaganModel
from .preprocessing import ParseError, discover_subject_files, read_channel_spec, read_label_map
from .synth import RawSubjectSpec, write_raw_subjects

ENV_OUTPUT = "SUBJECTGAN_OUTPUT_DIR"
log = logging.getLogger("subjectgan")


class UsageError(Exception):
    pass


def _out_dir(value) -> Path:
    if value:
        return Path(value)
    env = os.environ.get(ENV_OUTPUT)
    if not env:
        raise UsageError(f"no output location: pass --out or set {ENV_OUTPUT}")
    return Path(env)


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg.with_seed(getattr(args, "seed", None))


def _ids(text) -> list[str] | None:
    return None if not text else [s.strip() for s in text.split(",") if s.strip()]


def _header(cfg: RunConfig, **extra) -> str:
    items = {"config_digest": cfg.digest(), "seed": cfg.seed, **extra}
    return " ".join(f"{k}={v}" for k, v in items.items())


# -- subcommands -------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = _out_dir(args.out)
    shifts = [float(s) for s in args.shifts.split(",")]
    specs = [RawSubjectSpec(subject_id=str(i + 1), shift=sh, channels=args.channels, n_classes=args.classes,
                            sample_rate_hz=args.sample_rate, runs=args.runs,
                            segments_per_run=args.segments, seed=args.seed * 100 + i + 1,
                            population_seed=args.seed)
             for i, sh in enumerate(shifts)]
    files = write_raw_subjects(out, specs)
    print(f"synth: wrote {len(specs)} subjects ({len(files)} files) to {out}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    spec = read_channel_spec(args.channel_spec)
    label_map = read_label_map(args.label_map)
    files = discover_subject_files(args.input)
    if not files:
        raise FileNotFoundError(f"no S<id>-ADL<n>.dat files in {args.input}")
    domains, space = pipeline.assemble_domains(files, spec, label_map, cfg.window_seconds, cfg.overlap,
                                               cfg.sample_rate_hz, cfg.pca_components, _ids(args.fit_subjects))
    out = _out_dir(args.out)
    meta = {"config_digest": cfg.digest(), "seed": cfg.seed}
    pipeline.save_domains(domains, space, out, meta)
    n_classes = len({c for c in label_map.values() if c >= 0})
    atomic_write_text(out / "dataset.json", json.dumps(
        {"subjects": sorted(domains), "n_classes": n_classes, "k": space.k, **meta}, sort_keys=True) + "\n")
    sizes = ", ".join(f"S{s}: " + "/".join(str(len(d[sp])) for sp in ("train", "validation", "test"))
                      for s, d in domains.items())
    print(f"preprocess: {len(domains)} subjects, k={space.k} ({sizes}) -> {out}")
    return 0


def _dataset_info(data_dir) -> dict:
    p = Path(data_dir) / "dataset.json"
    if p.is_file():
        return json.loads(p.read_text())
    subjects = pipeline.list_subjects(data_dir)
    if not subjects:
        raise FileNotFoundError(f"no preprocessed domains in {data_dir}")
    return {"subjects": subjects}


def cmd_distance(args) -> int:
    cfg = _config(args)
    info = _dataset_info(args.data)
    sources = _ids(args.source) or info["subjects"]
    targets = _ids(args.target) or info["subjects"]
    doms = {s: pipeline.load_domain(args.data, s, args.split) for s in set(sources) | set(targets)}
    rows = []
    for s in sources:
        for t in targets:
            if s == t:
                continue
            n = min(cfg.distance_n_sub, len(doms[s]), len(doms[t]))
            rows.append((s, t, w1_estimate(doms[s].features, doms[t].features, n, cfg.distance_repeats, cfg.seed)))
    out = _out_dir(args.out)
    txt, tsv = bench.write_distance_table(rows, out, _header(cfg))
    print(f"distance: {len(rows)} pairs -> {txt}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    info = _dataset_info(args.data)
    n_classes = info.get("n_classes")
    source = pipeline.load_domain(args.data, args.source, "train")
    target_lab = pipeline.load_domain(args.data, args.target, "train")
    epochs = cfg.baseline_epochs if cfg.baseline_epochs >= 0 else cfg.epochs
    ckpt = Path(args.out) if args.out else _out_dir(None) / f"{args.mode}_{args.source}_to_{args.target}.ckpt"
    meta = {"mode": args.mode, "source_id": args.source, "target_id": args.target,
            "config_digest": cfg.digest(), "seed": cfg.seed}
    header = _header(cfg, mode=args.mode, source=args.source, target=args.target)
    if args.mode == "sagan":
        est = bench.sagan_estimator(cfg.sagan(), n_classes).fit(source.features, source.labels,
                                                                 target_lab.features)
        model = est.model_
        state = est.train_state_
        meta.update(best_epoch=state.best_epoch, degraded=state.degraded)
        from .trainer import write_loss_trace, write_scores
        write_loss_trace(state, ckpt.with_name(ckpt.name + ".loss.tsv"), header)
        write_scores(state, ckpt.with_name(ckpt.name + ".scores.tsv"), header)
        summary = f"best epoch {state.best_epoch}, score {state.best_score:.4f}"
    elif args.mode in ("no-transfer", "supervised"):
        x, y, ref = ((source.features, source.labels, target_lab.features) if args.mode == "no-transfer"
                     else (target_lab.features, target_lab.labels, source.features))
        est = ConvNetClassifier(**bench._classifier_kwargs(cfg.sagan(), epochs, n_classes)).fit(x, y, ref)
        model = SaganModel(source.k, len(est.classes_), cfg.sagan())
        model.C.params.load_state_dict(est.classifier_.params.state_dict())
        summary = f"{epochs} epochs"
    else:
        raise UsageError(f"unknown mode {args.mode!r}")
    model.save(ckpt, extra={"scale": np.array([est.scale_]), "classes": est.classes_.astype(float)}, meta=meta)
    print(f"train: {args.mode} S{args.source}->S{args.target}, {summary} -> {ckpt}")
    return 0


class _CheckpointClassifier:
    def __init__(self, path):
        self.model, extra, self.meta = SaganModel.load(path)
        self.scale = float(extra["scale"][0])
        self.classes = extra["classes"].astype(np.int64)
        self.n_features_in_ = self.model.k

    def predict(self, x):
        return self.classes[self.model.C.predict(np.asarray(x) * self.scale).argmax(axis=1)]


def cmd_evaluate(args) -> int:
    if args.confusion:
        cm = read_confusion(args.confusion)
        rep = EvalReport.from_confusion(cm, args.source or "", args.target or "", args.mode)
        print(f"evaluate: weighted F1 {weighted_f1(cm):.4f} over {cm.total} windows ({args.confusion})")
        if args.out:
            rep.save(args.out)
        return 0
    if not (args.checkpoint and args.data and args.target):
        raise UsageError("evaluate needs --checkpoint, --data and --target (or --confusion)")
    cfg = _config(args)
    clf = _CheckpointClassifier(args.checkpoint)
    meta = clf.meta
    cfg = cfg.with_seed(meta.get("seed"))
    test = pipeline.load_domain(args.data, args.target, args.split)
    info = _dataset_info(args.data)
    source_id = str(meta.get("source_id", ""))
    w = float("nan")
    if source_id:
        src = pipeline.load_domain(args.data, source_id, "train")
        tgt = pipeline.load_domain(args.data, args.target, "train")
        n = min(cfg.distance_n_sub, len(src), len(tgt))
        w = w1_estimate(src.features, tgt.features, n, cfg.distance_repeats, cfg.seed)
    rep = bench.evaluate(clf, test, source_id, meta.get("mode", "sagan"), info.get("n_classes"),
                         wasserstein=w, seed=int(meta.get("seed", cfg.seed)),
                         config_digest=str(meta.get("config_digest", cfg.digest())))
    out = Path(args.out) if args.out else _out_dir(None) / f"report_{rep.mode}_{source_id}_to_{args.target}.json"
    rep.save(out)
    print(f"evaluate: {rep.mode} S{source_id}->S{args.target} weighted F1 {rep.weighted_f1:.4f} -> {out}")
    return 0


def _collect(paths, pattern) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(p.glob(pattern)))
        elif p.is_file():
            found.append(p)
        else:
            raise FileNotFoundError(f"no such report path: {p}")
    return found


def _parse_header(path: Path) -> dict:
    first = path.read_text().split("\n", 1)[0]
    if not first.startswith("#"):
        return {}
    return dict(kv.split("=", 1) for kv in first[1:].split() if "=" in kv)


def _provenance(reports) -> str:
    """Header line naming every (config digest, seed) pair that fed a table."""
    pairs = sorted({(r.config_digest, r.seed) for r in reports})
    return "# " + " ".join(f"config_digest={d} seed={s}" for d, s in pairs) + "\n"


def cmd_report(args) -> int:
    files = [f for f in _collect(args.reports, "*.json") if f.name != "dataset.json"]
    reports = [EvalReport.load(f) for f in files]
    if not reports:
        raise FileNotFoundError("no report files found")
    reference = bench.read_reference(args.reference) if args.reference else None
    out = _out_dir(args.out)
    stamp = _provenance(reports)
    atomic_write_text(out / "table.txt", stamp + bench.render_table(reports, reference))
    atomic_write_text(out / "table.tsv", stamp + bench.render_rows(reports, reference))
    n_curves = 0
    for trace in _collect(args.reports, "*.scores.tsv"):
        h = _parse_header(trace)
        loss = trace.with_name(trace.name.replace(".scores.tsv", ".loss.tsv"))
        tag = f"{h.get('mode', 'sagan')}_{h.get('source', 'x')}_to_{h.get('target', 'x')}"
        scores = np.loadtxt(trace, comments="#", skiprows=2, ndmin=2)
        lines = [trace.read_text().split("\n", 1)[0] + "\n", "epoch\tselection_score\td\tc\tg_adv\tg_cls\n"]
        per_epoch = None
        if loss.is_file():
            losses = np.loadtxt(loss, comments="#", skiprows=2, ndmin=2)
            n_ep = max(len(scores) - 1, 1)
            per_epoch = np.array_split(losses[:, 1:5], n_ep) if len(losses) else None
        for i, row in enumerate(scores):
            vals = ["nan"] * 4
            if per_epoch is not None and i > 0 and len(per_epoch[i - 1]):
                vals = [f"{v:.8g}" for v in per_epoch[i - 1].mean(axis=0)]
            lines.append(f"{int(row[0])}\t{row[1]:.8g}\t" + "\t".join(vals) + "\n")
        atomic_write_text(out / "curves" / f"{tag}.tsv", "".join(lines))
        n_curves += 1
    print(f"report: {len(reports)} reports, {len(bench.table_rows(reports))} cells, {n_curves} curves -> {out}")
    return 0


def cmd_matrix(args) -> int:
    cfg = _config(args)
    info = _dataset_info(args.data)
    ids = _ids(args.subjects) or info["subjects"]
    subjects = {s: {sp: pipeline.load_domain(args.data, s, sp) for sp in ("train", "test")} for s in ids}
    epochs = cfg.baseline_epochs if cfg.baseline_epochs >= 0 else None
    settings = bench.BenchSettings(cfg.sagan(), cfg.k_neighbors, cfg.distance_n_sub, cfg.distance_repeats,
                                   epochs, info.get("n_classes"), cfg.digest())
    modes = _ids(args.modes) or list(bench.MODE_COLUMNS)
    reports = bench.run_matrix(subjects, modes, settings, list(permutations(ids, 2)))
    out = _out_dir(args.out)
    for r in reports:
        r.save(out / f"report_{r.mode}_{r.source_id}_to_{r.target_id}.json")
    atomic_write_text(out / "table.txt", _provenance(reports) + bench.render_table(reports))
    atomic_write_text(out / "table.tsv", _provenance(reports) + bench.render_rows(reports))
    failed = sum(not r.ok for r in reports)
    print(f"matrix: {len(reports)} reports ({failed} failed) -> {out}")
    return 1 if failed == len(reports) else 0


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subjectgan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write synthetic subjects in the recording format")
    s.add_argument("--out")
    s.add_argument("--shifts", default="0,0.5,1,2", help="comma-separated shift magnitude per subject")
    s.add_argument("--channels", type=int, default=6)
    s.add_argument("--classes", type=int, default=6)
    s.add_argument("--sample-rate", type=float, default=10.0)
    s.add_argument("--runs", type=int, default=5)
    s.add_argument("--segments", type=int, default=12)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="impute, normalize, window and project recordings")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--channel-spec", required=True)
    s.add_argument("--label-map", required=True)
    s.add_argument("--out")
    s.add_argument("--config")
    s.add_argument("--fit-subjects", help="subjects whose training windows fit the PCA (default: all)")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("distance", help="estimated Wasserstein-1 distance between subjects")
    s.add_argument("--data", required=True)
    s.add_argument("--source")
    s.add_argument("--target")
    s.add_argument("--split", default="train")
    s.add_argument("--out")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_distance)

    s = sub.add_parser("train", help="train a transfer model or a baseline classifier")
    s.add_argument("--data", required=True)
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--mode", default="sagan", choices=["sagan", "no-transfer", "supervised"])
    s.add_argument("--config")
    s.add_argument("--out", help="checkpoint path")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="evaluate a checkpoint or a confusion matrix file")
    s.add_argument("--checkpoint")
    s.add_argument("--data")
    s.add_argument("--target")
    s.add_argument("--source")
    s.add_argument("--split", default="test")
    s.add_argument("--confusion", help="integer confusion matrix, rows = true class")
    s.add_argument("--mode", default="sagan", choices=list(bench.MODE_COLUMNS))
    s.add_argument("--config")
    s.add_argument("--out", help="report path")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="merge reports into comparison tables and curve files")
    s.add_argument("--reports", nargs="+", required=True, help="report files or directories")
    s.add_argument("--reference", help="static 'source target GFK STL' numbers")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("matrix", help="run every ordered subject pair in every mode")
    s.add_argument("--data", required=True)
    s.add_argument("--subjects")
    s.add_argument("--modes", help="comma-separated subset of " + ",".join(bench.MODE_COLUMNS))
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_matrix)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, ParseError, ContainerError, KeyError, PermissionError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - computation failures map to exit code 1
        log.debug("failure", exc_info=True)
        print(f"{parser.prog} {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
