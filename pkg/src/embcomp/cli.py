"""Command-line front end.

Every command resolves its configuration from built-in defaults, an optional
JSON ``--config`` file and explicit flags (in increasing precedence), then
writes its outputs to ``<out>/<command>-<hash>/`` where ``hash`` digests the
resolved configuration and the contents of every input file. Randomness is
drawn from sub-seeds derived by hashing ``(seed, command, purpose)``.

Exit codes: 0 success, 1 input or validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from embcomp import __version__
from embcomp._validation import NumericalError, ValidationError
from embcomp.complementarity import (
    ComplementarityCell,
    adjust_family,
    complementarity_index,
    per_location_complementarity,
    task_complementarity,
    write_complementarity_table,
)
from embcomp.dataset import LocationTable, align, fuse, load_table, make_folds
from embcomp.probes import EvaluationReport, R2_BASELINES, ZSCORE_MODES, evaluate
from embcomp.sampler import (
    DEFAULT_INITIAL_RATIO,
    DEFAULT_MIN_LAT,
    DEFAULT_STEP_SIZE,
    PopulationDataset,
    SamplerConfig,
    greedy_stratified_sample,
    sample_sphere_uniform,
    sweep_sampler,
    uniformity,
)
from embcomp.similarity import DEFAULT_CCA_EPSILON, pairwise_similarity, write_similarity_table
from embcomp.spatial import class_spatial_scales, scale_score_correlation, write_entropy_curves, write_scale_fits
from embcomp.stats import benjamini_hochberg, stars, t_test_one_sided

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2

DEFAULTS = {
    "locations": None,
    "embeddings": {},
    "tasks": {},
    "combos": "singles,pairs,all",
    "folds": 20,
    "seed": 0,
    "lambda": 1.0,
    "zscore": "fold",
    "r2_baseline": "test",
    "fdr": 0.05,
    "per_location": False,
    "n_jobs": 1,
    "out": "runs",
    "epsilon": DEFAULT_CCA_EPSILON,
    "paired": True,
    "from_eval": None,
    "means": None,
    "population": None,
    "strategy": "greedy-lc",
    "n": None,
    "step_size": DEFAULT_STEP_SIZE,
    "initial_ratio": DEFAULT_INITIAL_RATIO,
    "min_lat": DEFAULT_MIN_LAT,
    "sweep": False,
    "step_sizes": [1, 2, 5, 10, 20, 50],
    "initial_ratios": [0.0, 0.05, 0.1, 0.15, 0.2, 0.3],
    "max_dist": 1000.0,
    "bins": 100,
}

# keys each command reads; only these enter the output hash and manifest
COMMAND_KEYS = {
    "similarity": ["locations", "embeddings", "epsilon", "paired", "fdr"],
    "evaluate": ["locations", "embeddings", "tasks", "combos", "folds", "seed", "lambda", "zscore",
                 "r2_baseline", "n_jobs"],
    "complementarity": ["from_eval", "means", "locations", "fdr", "per_location"],
    "spatial-scale": ["locations", "embeddings", "tasks", "combos", "folds", "seed", "lambda",
                      "zscore", "r2_baseline", "fdr", "max_dist", "bins", "n_jobs"],
    "sample": ["locations", "population", "strategy", "n", "seed", "step_size", "initial_ratio",
               "min_lat", "sweep", "step_sizes", "initial_ratios", "n_jobs"],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


# ---------------------------------------------------------------- plumbing


def derive_seed(seed, command, purpose):
    """Sub-seed from ``sha256("<seed>/<command>/<purpose>")`` (first 8 bytes)."""
    digest = hashlib.sha256(f"{int(seed)}/{command}/{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _file_digest(path):
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from None
    return h.hexdigest()


def _input_paths(cfg):
    paths = []
    for key in ("locations", "population", "means"):
        if cfg.get(key):
            paths.append(cfg[key])
    paths.extend(cfg.get("embeddings", {}).values())
    paths.extend(_split_task_spec(v)[0] for v in cfg.get("tasks", {}).values())
    if cfg.get("from_eval"):
        paths.append(str(Path(cfg["from_eval"]) / "fold_scores.json"))
    return paths


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _versions():
    import scipy
    import sklearn

    return {
        "embcomp": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "python": platform.python_version(),
    }


class _Run:
    """Output directory, manifest and sub-seeds of one command invocation."""

    def __init__(self, command, cfg):
        self.command = command
        self.config = {k: cfg[k] for k in COMMAND_KEYS[command]}
        self.inputs = {p: _file_digest(p) for p in _input_paths(self.config)}
        key = _canonical({"command": command, "config": self.config, "inputs": self.inputs})
        self.hash = hashlib.sha256(key.encode()).hexdigest()[:16]
        self.dir = Path(cfg["out"]) / f"{command}-{self.hash}"
        self.seeds = {}
        self.outputs = []

    def seed(self, purpose):
        s = derive_seed(self.config.get("seed", 0) or 0, self.command, purpose)
        self.seeds[purpose] = s
        return s

    def path(self, name):
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return self.dir / name

    def finish(self, extra=None):
        manifest = {
            "command": self.command,
            "config": self.config,
            "config_hash": self.hash,
            "inputs": self.inputs,
            "sub_seeds": self.seeds,
            "versions": _versions(),
            "outputs": sorted(set(self.outputs)),
        }
        if extra:
            manifest.update(extra)
        self.dir.mkdir(parents=True, exist_ok=True)
        _write_json(self.dir / "manifest.json", manifest)
        return self.dir


def _split_task_spec(spec):
    if isinstance(spec, dict):
        return spec["path"], spec["kind"]
    path, sep, kind = str(spec).rpartition(":")
    if not sep or not path:
        raise ValidationError(f"task spec {spec!r} must be path:kind")
    return path, kind


def _parse_pairs(items, what):
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name or not value:
            raise ValidationError(f"--{what} expects name=value, got {item!r}")
        if name in out:
            raise ValidationError(f"duplicate {what} name {name!r}")
        out[name] = value
    return out


def parse_combos(spec, models):
    """Expand ``singles``/``pairs``/``all`` shorthands and explicit ``a+b`` names.

    Returns tuples of model names in declaration order, without duplicates.
    """
    models = list(models)
    tokens = spec if isinstance(spec, list) else [t.strip() for t in str(spec).split(",")]
    combos = []
    for tok in tokens:
        if not tok:
            continue
        if tok == "singles":
            new = [(m,) for m in models]
        elif tok == "pairs":
            new = list(itertools.combinations(models, 2))
        elif tok == "all":
            new = [tuple(models)]
        else:
            parts = tuple(tok.split("+"))
            unknown = [p for p in parts if p not in models]
            if unknown:
                raise ValidationError(f"combination {tok!r} references unknown model(s) {unknown}")
            if len(set(parts)) != len(parts):
                raise ValidationError(f"combination {tok!r} repeats a model")
            new = [parts]
        for c in new:
            if c not in combos:
                combos.append(c)
    if not combos:
        raise ValidationError("no model combinations requested")
    return combos


def _load_inputs(cfg, need_tasks):
    if not cfg["locations"]:
        raise ValidationError("--locations is required")
    if not cfg["embeddings"]:
        raise ValidationError("at least one --embedding is required")
    locations = load_table(cfg["locations"], "locations")
    embeddings = [load_table(p, "embedding", name=n) for n, p in cfg["embeddings"].items()]
    tasks = []
    for name, spec in cfg["tasks"].items():
        path, kind = _split_task_spec(spec)
        tasks.append(load_table(path, "targets", name=name, kind=kind))
    if need_tasks and not tasks:
        raise ValidationError("at least one --task is required")
    aligned, dropped = align(locations, *embeddings, *tasks)
    locations = aligned[0]
    embeddings = aligned[1 : 1 + len(embeddings)]
    tasks = aligned[1 + len(embeddings) :]
    return locations, embeddings, tasks, dropped


def _eval_grid(combos, emb_by_name, tasks, folds, cfg):
    cells = [(c, t) for c in combos for t in tasks]
    fused = {c: fuse([emb_by_name[m] for m in c]) for c in combos}

    def run(cell):
        c, t = cell
        return evaluate(fused[c], t, folds, cfg["lambda"], zscore=cfg["zscore"],
                        r2_baseline=cfg["r2_baseline"])

    n_jobs = int(cfg.get("n_jobs") or 1)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(run, cells))
    return [run(c) for c in cells]


def _fmt_cell(report):
    return f"{report.mean:.1f} ± {report.sem:.1f}"


# ---------------------------------------------------------------- commands


def cmd_similarity(cfg):
    run = _Run("similarity", cfg)
    _, embeddings, _, dropped = _load_inputs({**cfg, "tasks": {}}, need_tasks=False)
    reports = pairwise_similarity(embeddings, cfg["epsilon"])
    write_similarity_table(run.path("similarity.csv"), reports)
    test = {"alternative": "cka > cca", "paired": bool(cfg["paired"]), "n_pairs": len(reports)}
    if len(reports) >= 2:
        try:
            r = t_test_one_sided([x.cka for x in reports], [x.cca_mean for x in reports],
                                 paired=bool(cfg["paired"]), alternative="greater")
            test.update(statistic=r.statistic, p_value=r.p_value, method=r.method)
        except NumericalError as exc:
            test["error"] = str(exc)
    else:
        test["error"] = "needs at least 2 pairs"
    _write_json(run.path("cka_vs_cca_ttest.json"), test)
    return run.finish({"dropped_rows": dropped})


def cmd_evaluate(cfg):
    run = _Run("evaluate", cfg)
    locations, embeddings, tasks, dropped = _load_inputs(cfg, need_tasks=True)
    names = [e.model_name for e in embeddings]
    combos = parse_combos(cfg["combos"], names)
    folds = make_folds(len(locations), int(cfg["folds"]), run.seed("folds"))
    reports = _eval_grid(combos, dict(zip(names, embeddings)), tasks, folds, cfg)

    task_names = [t.task_name for t in tasks]
    by_cell = {(r.embedding_name, r.task_name): r for r in reports}
    with run.path("scores.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["combo", *task_names])
        for c in combos:
            name = "+".join(c)
            w.writerow([name, *(_fmt_cell(by_cell[(name, t)]) for t in task_names)])

    payload = {
        "models": names,
        "combos": ["+".join(c) for c in combos],
        "tasks": [{"name": t.task_name, "kind": t.kind, "targets": list(t.target_names)}
                  for t in tasks],
        "locations": {"ids": list(locations.ids), "lon": locations.lon.tolist(),
                      "lat": locations.lat.tolist()},
        "folds": {"k": folds.k, "seed": folds.seed,
                  "test_indices": [ix.tolist() for ix in folds.test_index_sets]},
        "reports": [
            {**r.to_dict(), "per_location_error": None if r.per_location_error is None
             else r.per_location_error.tolist()}
            for r in reports
        ],
    }
    _write_json(run.path("fold_scores.json"), payload)
    return run.finish({"dropped_rows": dropped})


def _read_means(path):
    """Score table of ``combo,<task>...`` cells (``mean`` or ``mean ± sem``)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from None
    if len(rows) < 2 or rows[0][0] != "combo":
        raise ValidationError(f"{path}: expected header combo,<task>,...")
    tasks = rows[0][1:]
    means = {}
    for row in rows[1:]:
        if len(row) != len(tasks) + 1:
            raise ValidationError(f"{path}: ragged row for {row[0] if row else '?'}")
        for t, cell in zip(tasks, row[1:]):
            token = cell.split("±")[0].strip()
            try:
                means[(row[0], t)] = float(token)
            except ValueError:
                raise ValidationError(f"{path}: non-numeric cell {cell!r}") from None
    return tasks, means


def _multi_combos(combo_names, single_names):
    out = []
    for name in combo_names:
        parts = name.split("+")
        if len(parts) >= 2 and all(p in single_names for p in parts):
            out.append((name, parts))
    return out


def cmd_complementarity(cfg):
    if bool(cfg["from_eval"]) == bool(cfg["means"]):
        raise ValidationError("give exactly one of --from-eval or --means")
    run = _Run("complementarity", cfg)
    maps_written = []
    if cfg["means"]:
        if cfg["per_location"]:
            raise ValidationError("--per-location needs --from-eval")
        tasks, means = _read_means(cfg["means"])
        combos = list(dict.fromkeys(c for c, _ in means))
        cells = []
        for name, parts in _multi_combos(combos, set(combos)):
            for t in tasks:
                idx = complementarity_index(means[(name, t)], [means[(p, t)] for p in parts])
                best = max(parts, key=lambda p: means[(p, t)])
                cells.append(ComplementarityCell(name, t, idx, means[(name, t)],
                                                 means[(best, t)], best))
        write_complementarity_table(run.path("complementarity.csv"), cells)
        return run.finish({"family_size": 0, "p_values": "unavailable without fold scores"})

    path = Path(cfg["from_eval"]) / "fold_scores.json"
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError:
        raise ValidationError(f"missing evaluation artifact {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    loc = payload["locations"]
    locations = LocationTable(tuple(loc["ids"]), loc["lon"], loc["lat"])
    reports = {}
    for d in payload["reports"]:
        reports[(d["embedding_name"], d["task_name"])] = EvaluationReport.from_dict(
            d, locations.ids, d.get("per_location_error"))
    task_names = [t["name"] for t in payload["tasks"]]
    kinds = {t["name"]: t["kind"] for t in payload["tasks"]}
    singles = {c for c in payload["combos"] if "+" not in c}
    cells = []
    for name, parts in _multi_combos(payload["combos"], singles):
        for t in task_names:
            cells.append(task_complementarity(reports[(name, t)], [reports[(p, t)] for p in parts]))
    cells = adjust_family(cells, cfg["fdr"])
    write_complementarity_table(run.path("complementarity.csv"), cells)

    if cfg["per_location"]:
        for name, parts in _multi_combos(payload["combos"], singles):
            for t in task_names:
                if kinds[t] != "regression":
                    continue
                m = per_location_complementarity(reports[(name, t)],
                                                 [reports[(p, t)] for p in parts], locations)
                fname = f"per_location__{name}__{t}.csv"
                m.write_csv(run.path(fname))
                maps_written.append(fname)
    return run.finish({"family_size": len(cells)})


def cmd_spatial_scale(cfg):
    run = _Run("spatial-scale", cfg)
    if not cfg["locations"] or not cfg["tasks"]:
        raise ValidationError("spatial-scale needs --locations and one probability-valued --task")
    if len(cfg["tasks"]) != 1:
        raise ValidationError("spatial-scale takes exactly one --task")
    locations = load_table(cfg["locations"], "locations")
    (tname, spec), = cfg["tasks"].items()
    path, kind = _split_task_spec(spec)
    task = load_table(path, "targets", name=tname, kind=kind)
    embeddings = [load_table(p, "embedding", name=n) for n, p in cfg["embeddings"].items()]
    aligned, dropped = align(locations, task, *embeddings)
    locations, task, embeddings = aligned[0], aligned[1], aligned[2:]
    if task.kind != "regression" or task.targets.shape[1] < 2:
        raise ValidationError("spatial-scale needs a multivariate regression task of class probabilities")
    if np.any(np.abs(task.targets.sum(axis=1) - 1.0) > 1e-6):
        raise ValidationError("task rows must sum to 1 (class probabilities)")

    results = class_spatial_scales(task, locations, cfg["max_dist"], cfg["bins"], cfg.get("n_jobs"))
    write_entropy_curves(run.path("entropy_curves.csv"), {k: v[0] for k, v in results.items()})
    fits = {k: v[1] for k, v in results.items()}
    write_scale_fits(run.path("scale_fits.csv"), fits)

    extra = {"dropped_rows": dropped}
    if embeddings:
        names = [e.model_name for e in embeddings]
        combos = parse_combos(cfg["combos"], names)
        folds = make_folds(len(locations), int(cfg["folds"]), run.seed("folds"))
        usable = [c for c in task.target_names if not fits[c].degenerate]
        extra["classes_used"] = usable
        columns = [task.column(j) for j, c in enumerate(task.target_names) if c in usable]
        reports = _eval_grid(combos, dict(zip(names, embeddings)), columns, folds, cfg)
        mean = {(r.embedding_name, r.task_name): r.mean for r in reports}
        col_names = [c.task_name for c in columns]
        d = [fits[c].d for c in usable]

        with run.path("class_scores.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["combo", *usable])
            for c in combos:
                w.writerow(["+".join(c), *(repr(mean[("+".join(c), cn)]) for cn in col_names)])

        rows = []
        if len(usable) >= 4:
            for c in combos:
                name = "+".join(c)
                if len(c) == 1:
                    vals, what = [mean[(name, cn)] for cn in col_names], "score"
                else:
                    vals = [complementarity_index(mean[(name, cn)], [mean[(m, cn)] for m in c])
                            for cn in col_names]
                    what = "complementarity"
                try:
                    r = scale_score_correlation(d, vals)
                except ValidationError as exc:
                    extra.setdefault("skipped_correlations", {})[name] = str(exc)
                    continue
                rows.append([name, what, r.statistic, r.p_value])
        else:
            extra["skipped_correlations"] = "fewer than 4 non-degenerate classes"
        if rows:
            adj, _ = benjamini_hochberg([r[3] for r in rows], cfg["fdr"])
        with run.path("scale_correlations.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["combo", "versus", "rho", "p_value", "p_adjusted", "stars"])
            for r, q in zip(rows, adj if rows else []):
                w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), repr(float(q)), stars(q)])
    return run.finish(extra)


def _write_sample(run, locations, index, probs):
    sub = locations.take(index)
    with run.path("sample.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lon", "lat"])
        for i, lo, la in zip(sub.ids, sub.lon, sub.lat):
            w.writerow([i, repr(float(lo)), repr(float(la))])
    if index is not None:
        run.path("sample_indices.txt").write_text("".join(f"{int(i)}\n" for i in index),
                                                  encoding="utf-8")
    if probs is None:
        return {}
    m = uniformity(probs[index])
    return {"c_eff": m.c_eff, "entropy": m.entropy, "class_mass": m.class_mass.tolist()}


def cmd_sample(cfg):
    run = _Run("sample", cfg)
    if cfg["n"] is None:
        raise ValidationError("--n is required")
    n = int(cfg["n"])
    strategy = cfg["strategy"]
    if strategy not in ("uniform", "greedy-lc"):
        raise ValidationError("--strategy must be uniform or greedy-lc")
    report = {"strategy": strategy, "n": n}
    if strategy == "uniform" and not cfg["population"]:
        locs = sample_sphere_uniform(n, cfg["min_lat"], run.seed("sphere"))
        report.update(_write_sample(run, locs, np.arange(n), None), min_lat=cfg["min_lat"])
        _write_json(run.path("uniformity.json"), report)
        return run.finish()

    if not cfg["population"] or not cfg["locations"]:
        raise ValidationError("this sampling mode needs --population and --locations")
    locations = load_table(cfg["locations"], "locations")
    ptask = load_table(cfg["population"], "targets", name="population", kind="regression")
    (locations, ptask), _ = align(locations, ptask)
    pop = PopulationDataset.from_task(locations, ptask)
    if strategy == "uniform":
        if n > len(pop):
            raise ValidationError(f"n = {n} exceeds population size {len(pop)}")
        rng = np.random.default_rng(run.seed("uniform"))
        index = np.sort(rng.choice(len(pop), size=n, replace=False))
    else:
        conf = SamplerConfig(n, int(cfg["step_size"]), float(cfg["initial_ratio"]),
                             run.seed("greedy"))
        index = greedy_stratified_sample(pop, conf)
        report.update(step_size=conf.step_size, initial_ratio=conf.initial_ratio)
    report.update(_write_sample(run, locations, index, pop.probs))
    report["class_names"] = list(pop.class_names)

    if cfg["sweep"]:
        res = sweep_sampler(pop, n, cfg["step_sizes"], cfg["initial_ratios"], run.seed("sweep"),
                            cfg.get("n_jobs"))
        with run.path("sweep.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step_size", "initial_ratio", "c_eff", "entropy"])
            for s, row in zip(res.step_sizes, res.metrics):
                for r, m in zip(res.initial_ratios, row):
                    w.writerow([s, repr(r), repr(m.c_eff), repr(m.entropy)])
        best = res.best
        report["sweep_best"] = {"step_size": best[0], "initial_ratio": best[1],
                                "c_eff": float(res.c_eff.max())}
    _write_json(run.path("uniformity.json"), report)
    return run.finish()


COMMANDS = {
    "similarity": cmd_similarity,
    "evaluate": cmd_evaluate,
    "complementarity": cmd_complementarity,
    "spatial-scale": cmd_spatial_scale,
    "sample": cmd_sample,
}


# ---------------------------------------------------------------- argparse


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser():
    p = _Parser(prog="embcomp", description="Evaluate and compare spatially aligned embeddings.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", default=S, help="JSON file with defaults for any flag")
    common.add_argument("--out", default=S, help="output root directory (default: runs)")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--n-jobs", dest="n_jobs", type=int, default=S)
    common.add_argument("--locations", default=S)

    data = _Parser(add_help=False)
    data.add_argument("--embedding", action="append", default=S, metavar="NAME=PATH")
    data.add_argument("--task", action="append", default=S, metavar="NAME=PATH:KIND")
    data.add_argument("--combos", default=S, help="singles, pairs, all or a+b, comma-separated")
    data.add_argument("--folds", type=int, default=S)
    data.add_argument("--lambda", dest="lambda", type=float, default=S)
    data.add_argument("--zscore", choices=ZSCORE_MODES, default=S)
    data.add_argument("--r2-baseline", dest="r2_baseline", choices=R2_BASELINES, default=S)
    fdr = _Parser(add_help=False)
    fdr.add_argument("--fdr", type=float, default=S)

    s = sub.add_parser("similarity", parents=[common, data, fdr], help="pairwise CCA / CKA")
    s.add_argument("--epsilon", type=float, default=S)
    s.add_argument("--independent", dest="paired", action="store_false", default=S,
                   help="unpaired t-test for CKA > CCA")
    sub.add_parser("evaluate", parents=[common, data], help="probe scores per combination and task")
    c = sub.add_parser("complementarity", parents=[common, fdr], help="complementarity table")
    c.add_argument("--from-eval", dest="from_eval", default=S, help="an evaluate output directory")
    c.add_argument("--means", default=S, help="score table combo,<task>,... of means")
    c.add_argument("--per-location", dest="per_location", action="store_true", default=S)
    sp = sub.add_parser("spatial-scale", parents=[common, data, fdr], help="per-class spatial scale")
    sp.add_argument("--max-dist", dest="max_dist", type=float, default=S)
    sp.add_argument("--bins", type=int, default=S)
    sa = sub.add_parser("sample", parents=[common], help="uniform or class-balanced sampling")
    sa.add_argument("--population", default=S, help="class-probability table id,<class>,...")
    sa.add_argument("--strategy", choices=("uniform", "greedy-lc"), default=S)
    sa.add_argument("--n", type=int, default=S)
    sa.add_argument("--step-size", dest="step_size", type=int, default=S)
    sa.add_argument("--initial-ratio", dest="initial_ratio", type=float, default=S)
    sa.add_argument("--min-lat", dest="min_lat", type=float, default=S)
    sa.add_argument("--sweep", action="store_true", default=S)
    sa.add_argument("--step-sizes", dest="step_sizes", type=_int_list, default=S)
    sa.add_argument("--initial-ratios", dest="initial_ratios", type=_float_list, default=S)
    return p


def resolve_config(args):
    """Merge defaults, the JSON config file and explicit flags."""
    flags = vars(args).copy()
    command = flags.pop("command")
    cfg = dict(DEFAULTS)
    if "config" in flags:
        path = flags.pop("config")
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(loaded, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg.update(loaded)
    if "embedding" in flags:
        cfg["embeddings"] = _parse_pairs(flags.pop("embedding"), "embedding")
    if "task" in flags:
        cfg["tasks"] = _parse_pairs(flags.pop("task"), "task")
    cfg.update(flags)
    return command, cfg


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        command, cfg = resolve_config(args)
        out = COMMANDS[command](cfg)
    except NumericalError as exc:
        print(f"embcomp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"embcomp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, KeyError, TypeError, ValueError) as exc:
        print(f"embcomp: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
