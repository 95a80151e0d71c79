"""``childci`` command line: one subcommand per pipeline stage.

Every subcommand reads its dataset from ``--data`` (default: ``--out``),
writes into ``--out`` and stamps each file with the tool version, a hash of
the resolved configuration and the seed. Reruns with identical flags give
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from . import classifiers as clf
from . import evaluation as ev
from . import features, ingest, synth
from .model import ALL_TESTS, AgeGroup, ChildCIError, TestId
from .selection import FeatureSubset, SelectorConfig
from .stats import bonferroni_pairwise

log = logging.getLogger("childci")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


class UsageError(ChildCIError):
    pass


class InvariantError(ChildCIError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- output helpers --------------------------------------------------------

class Outputs:
    def __init__(self, root: Path, resolved: dict, seed: int):
        self.root = root
        self.resolved = resolved
        self.seed = seed
        blob = json.dumps(resolved, sort_keys=True, default=str).encode()
        self.config_hash = hashlib.sha256(blob).hexdigest()[:12]
        self.written: list[Path] = []

    @property
    def header(self) -> list[str]:
        return [f"childci {__version__} config={self.config_hash} seed={self.seed}"]

    @property
    def meta(self) -> dict:
        return {"tool": "childci", "version": __version__, "config_hash": self.config_hash,
                "seed": self.seed, "config": self.resolved}

    def _path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.root / name
        self.written.append(p)
        return p

    def text(self, name: str, text: str):
        self._path(name).write_text(text)

    def csv(self, name: str, columns: Sequence[str], rows):
        buf = io.StringIO()
        for h in self.header:
            buf.write(f"# {h}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self.text(name, buf.getvalue())

    def json(self, name: str, payload: dict):
        doc = {"_meta": self.meta, **payload}
        self.text(name, json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return v


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not serialisable: {type(o).__name__}")


# -- configuration ---------------------------------------------------------

def _experiment_config(args) -> ev.ExperimentConfig:
    base: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(base, dict):
            raise UsageError("config file must hold a JSON object")
    cfg = ev.ExperimentConfig.from_dict(base)
    over: dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "k", None) is not None:
        over["k"] = args.k
    if getattr(args, "repetitions", None) is not None:
        over["repetitions"] = args.repetitions
    if getattr(args, "test", None):
        over["test_ids"] = tuple(ALL_TESTS) if args.test == "all" else (TestId(args.test),)
    if getattr(args, "selector", None):
        over["selector"] = replace(cfg.selector, method=args.selector)
    if getattr(args, "classifier", None):
        over["classifier"] = replace(cfg.classifier, variant={"rf": "random_forest", "svm": "svm_poly"}[args.classifier])
    return replace(cfg, **over)


def _load(args) -> ingest.Dataset:
    path = Path(args.data or args.out)
    return ingest.load_dataset(path)


# -- subcommands -----------------------------------------------------------

def cmd_synth(args) -> Outputs:
    spec = synth.CohortSpec(per_group=tuple(args.per_group), seed=args.seed if args.seed is not None else 0)
    resolved = {"command": "synth", "per_group": list(spec.per_group), "seed": spec.seed,
                "jitter": {t.value: spec.jitter(t) for t in TestId}}
    out = Outputs(Path(args.out), resolved, spec.seed)
    ds = synth.generate_cohort(spec)
    root = Path(args.out)
    ingest.write_dataset(ds, root, out.header)
    out.written.append(root / ingest.SUBJECTS_INDEX)
    out.json("manifest.json", {"n_children": len(ds), "n_sessions": ds.n_sessions,
                               "provenance": dict(ds.provenance)})
    return out


def cmd_ingest(args) -> Outputs:
    ds = _load(args)
    out = Outputs(Path(args.out), {"command": "ingest"}, 0)
    rows = [[r.child_id, r.test_id.value if hasattr(r.test_id, "value") else r.test_id,
             "fatal" if r.fatal else ("warning" if r.issues else "ok"), ";".join(r.codes)]
            for r in ds.reports]
    out.csv("validation.csv", ["child_id", "test_id", "status", "codes"], rows)
    out.json("ingest_summary.json", {
        "n_children": len(ds), "n_sessions": ds.n_sessions,
        "excluded": sum(1 for r in ds.reports if r.fatal),
        "groups": {g.value: sum(1 for s in ds.subjects if s.group is g) for g in AgeGroup},
    })
    return out


def cmd_extract(args) -> Outputs:
    ds = _load(args)
    tests = ALL_TESTS if args.test in (None, "all") else (TestId(args.test),)
    out = Outputs(Path(args.out), {"command": "extract", "tests": [t.value for t in tests]}, 0)
    for t in tests:
        path = out._path(f"features_{t.value}.csv")
        features.export_feature_csv(ds, t, path, header_lines=out.header)
        out.written.append(path.with_name(path.stem + ".valid.csv"))
    return out


def _dev_matrix(ds, cfg: ev.ExperimentConfig, test: TestId):
    dev, _ = ev.split_dev_eval(ds, cfg.dev_fraction, cfg.seed)
    ids, X, _, y = features.feature_matrix(dev, test, cfg.with_global)
    return ids, X, y, features.feature_ids(test, cfg.with_global)


def cmd_select(args) -> Outputs:
    ds = _load(args)
    cfg = _experiment_config(args)
    out = Outputs(Path(args.out), {"command": "select", **cfg.to_dict()}, cfg.seed)
    subsets = ev.select_subsets(ds, cfg)
    for t, sub in subsets.items():
        out.json(f"subset_{t.value}.json", sub.to_dict(test_id=t, params=cfg.selector.to_dict(), seed=cfg.seed))
    return out


def cmd_train(args) -> Outputs:
    ds = _load(args)
    cfg = _experiment_config(args)
    out = Outputs(Path(args.out), {"command": "train", **cfg.to_dict()}, cfg.seed)
    for t in cfg.test_ids:
        ids, X, y, fids = _dev_matrix(ds, cfg, t)
        seed = ev.derive_seed(cfg.seed, t.index, 0x7A1)
        tt = ev.train_and_score(X, y, np.array(ids), X[:0], cfg, seed, ev.Audit(), fids)
        sub = tt.subset
        out.json(f"subset_{t.value}.json", sub.to_dict(test_id=t, params=cfg.selector.to_dict(), seed=cfg.seed))
        if tt.model is None:
            raise InvariantError(f"{t.value}: selection returned an empty subset; nothing to train")
        out.json(f"model_{t.value}.json", {"test_id": t.value, "feature_ids": list(sub.feature_ids),
                                           "model": tt.model.to_dict()})
    return out


def cmd_eval_single(args) -> Outputs:
    ds = _load(args)
    cfg = _experiment_config(args)
    out = Outputs(Path(args.out), {"command": "eval-single", **cfg.to_dict()}, cfg.seed)
    reports = [ev.run_single_test(ds, cfg, test_id=t) for t in cfg.test_ids]
    for r in reports:
        if len(r.fold_accuracies) != cfg.k:
            raise InvariantError("fold count differs from k")
    rows = []
    for r in reports:
        for i, a in enumerate(r.fold_accuracies):
            rows.append([r.test_id.value, r.classifier, r.selector, f"fold{i + 1}", a])
        rows += [[r.test_id.value, r.classifier, r.selector, "mean", r.mean],
                 [r.test_id.value, r.classifier, r.selector, "std", r.std],
                 [r.test_id.value, r.classifier, r.selector, "eval", r.eval_accuracy]]
    out.csv("single_test_accuracy.csv", ["test", "classifier", "selector", "row", "accuracy"], rows)
    out.json("single_test_report.json", {"reports": [r.to_dict() for r in reports]})
    return out


def _stat_outputs(out: Outputs, table):
    out.csv("pairwise_stats.csv", ["first", "second", "U", "p", "alpha_cor", "rejected"],
            [[r.first, r.second, r.u, f"{r.p:.6g}", table.alpha_corrected, str(r.rejected).lower()]
             for r in table.rows])
    out.json("stats_report.json", table.to_dict())


def cmd_eval_multi(args) -> Outputs:
    ds = _load(args)
    cfg = _experiment_config(args)
    if not getattr(args, "repetitions", None) and "repetitions" not in _config_keys(args):
        cfg = replace(cfg, repetitions=25)
    out = Outputs(Path(args.out), {"command": "eval-multi", **cfg.to_dict()}, cfg.seed)
    rep = ev.run_multi_test(ds, cfg)
    n = len(cfg.test_ids)
    expected = sum(len(ev.enumerate_combinations(n, x)) for x in range(2, n + 1))
    if len(rep.combinations) != expected:
        raise InvariantError(f"expected {expected} combinations, got {len(rep.combinations)}")
    out.csv("combinations.csv", ["tests", "size", "mean", "std"],
            [[r.name, len(r.tests), r.mean, r.std] for r in rep.combinations])
    best = [[r.name, 1, r.mean, r.std] for r in rep.singles]
    best += [[r.name, k, r.mean, r.std] for k, r in rep.best_per_size().items()]
    out.csv("best_per_size.csv", ["tests", "size", "mean", "std"], best)
    payload = rep.to_dict()
    if len(rep.best_per_size()) >= 2:
        table = rep.stat_table()
        _stat_outputs(out, table)
        payload["stats"] = table.to_dict()
    out.json("multi_test_report.json", payload)
    return out


def _config_keys(args) -> set:
    if getattr(args, "config", None):
        try:
            return set(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError):
            return set()
    return set()


def cmd_stats(args) -> Outputs:
    try:
        doc = json.loads(Path(args.report).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read report {args.report}: {e}") from e
    if "combinations" not in doc:
        raise UsageError("stats needs a multi-test report (multi_test_report.json)")
    best: dict[int, dict] = {}
    for row in doc["combinations"]:
        cur = best.get(row["size"])
        if cur is None or row["mean"] > cur["mean"]:
            best[row["size"]] = row
    samples = {best[k]["tests"]: best[k]["samples"] for k in sorted(best)}
    seed = doc.get("_meta", {}).get("seed", 0)
    out = Outputs(Path(args.out), {"command": "stats", "alpha": args.alpha,
                                   "source_hash": doc.get("_meta", {}).get("config_hash")}, seed)
    _stat_outputs(out, bonferroni_pairwise(samples, args.alpha))
    return out


def completion_svg(table: features.CompletionTable) -> str:
    years = sorted({r.age_years for r in table.rows})
    tests = [t for t in ALL_TESTS if any(r.test_id is t for r in table.rows)]
    colors = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"]
    w, h, pad = 120 + 110 * len(years), 320, 40
    bw = 90 / max(len(tests), 1)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">',
             f'<line x1="{pad}" y1="{h - pad}" x2="{w - 10}" y2="{h - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="20" x2="{pad}" y2="{h - pad}" stroke="black"/>']
    scale = h - pad - 20
    for frac in (0.0, 0.5, 1.0):
        y = h - pad - frac * scale
        parts.append(f'<text x="{pad - 5}" y="{y + 4:.1f}" text-anchor="end">{frac:.1f}</text>')
    for i, yr in enumerate(years):
        x0 = pad + 10 + 110 * i
        for j, t in enumerate(tests):
            try:
                f = table.fraction(yr, t)
            except KeyError:
                continue
            bh = f * scale
            parts.append(f'<rect x="{x0 + j * bw:.1f}" y="{h - pad - bh:.1f}" width="{bw - 1:.1f}" '
                         f'height="{bh:.1f}" fill="{colors[j % len(colors)]}"><title>{t.value} age {yr}: {f:.2f}</title></rect>')
        parts.append(f'<text x="{x0 + 45}" y="{h - pad + 15}" text-anchor="middle">{yr} y</text>')
    for j, t in enumerate(tests):
        parts.append(f'<rect x="{w - 60}" y="{20 + 14 * j}" width="10" height="10" fill="{colors[j % len(colors)]}"/>'
                     f'<text x="{w - 45}" y="{29 + 14 * j}">{t.value}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_completion(args) -> Outputs:
    ds = _load(args)
    out = Outputs(Path(args.out), {"command": "completion"}, 0)
    table = features.completion_report(ds)
    out.csv("completion.csv", ["age_years", "test", "completed_fraction", "n_children"],
            [[r.age_years, r.test_id.value, r.completed_fraction, r.n_children] for r in table.rows])
    out.text("completion.svg", f"<!-- {out.header[0]} -->\n" + completion_svg(table))
    return out


def export_embedding(X, labels, child_ids=None) -> list[tuple[str, float, float, str]]:
    """Rows (child_id, dim1, dim2, group) of a 2-D PCA projection.

    Columns are standardised first; each component's sign is fixed so its
    largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) < 3:
        raise ChildCIError("embedding needs a matrix with >= 3 rows")
    labels = list(labels)
    ids = list(child_ids) if child_ids is not None else [str(i) for i in range(len(X))]
    sd = X.std(axis=0)
    Z = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    if not np.any(sd > 0):
        log.warning("constant feature matrix; embedding collapses to the origin")
        P = np.zeros((len(X), 2))
    else:
        _, _, Vt = np.linalg.svd(Z, full_matrices=False)
        comps = Vt[:2]
        for c in comps:
            if c[np.argmax(np.abs(c))] < 0:
                c *= -1
        P = Z @ comps.T
        if P.shape[1] < 2:
            P = np.column_stack([P, np.zeros(len(P))])
    out = []
    for cid, (a, b), g in zip(ids, P, labels):
        g = AgeGroup.from_index(int(g)).value if not isinstance(g, (str, AgeGroup)) else AgeGroup(g).value
        out.append((cid, float(a), float(b), g))
    return out


def cmd_embed(args) -> Outputs:
    ds = _load(args)
    test = TestId(args.test or "T1")
    out = Outputs(Path(args.out), {"command": "embed", "test": test.value}, 0)
    ids, X, _, y = features.feature_matrix(ds, test)
    rows = export_embedding(X, y, ids)
    out.csv(f"embedding_{test.value}.csv", ["child_id", "dim1", "dim2", "group"], rows)
    return out


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "extract": cmd_extract, "select": cmd_select,
    "train": cmd_train, "eval-single": cmd_eval_single, "eval-multi": cmd_eval_multi,
    "stats": cmd_stats, "completion": cmd_completion, "embed": cmd_embed,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="childci", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"childci {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    tests = [t.value for t in ALL_TESTS]

    def common(sp, data=True):
        sp.add_argument("--out", default=".", help="output directory")
        if data:
            sp.add_argument("--data", default=None, help="dataset directory (default: --out)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--config", default=None, help="JSON experiment config; flags override it")
        sp.add_argument("-v", "--verbose", action="store_true")

    def experiment(sp, multi=False):
        sp.add_argument("--test", choices=tests + ["all"], default=None if multi else "all")
        sp.add_argument("--selector", choices=["sffs", "ga", "none"], default=None)
        sp.add_argument("--classifier", choices=["rf", "svm"], default=None)
        sp.add_argument("--k", type=int, default=None)
        sp.add_argument("--repetitions", type=int, default=None)

    sp = sub.add_parser("synth", help="generate a synthetic cohort")
    common(sp, data=False)
    sp.add_argument("--per-group", type=int, nargs="+", default=[30])
    sub_ingest = sub.add_parser("ingest", help="validate a dataset")
    common(sub_ingest)
    sp = sub.add_parser("extract", help="feature matrices as CSV")
    common(sp)
    sp.add_argument("--test", choices=tests + ["all"], default="all")
    for name, text in (("select", "feature subsets per test on the dev split"),
                       ("train", "fit and save one model per test on the dev split"),
                       ("eval-single", "k-fold accuracy of each single-test pipeline")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        experiment(sp)
    sp = sub.add_parser("eval-multi", help="combination ensembles over repeated k-fold")
    common(sp)
    experiment(sp, multi=True)
    sp = sub.add_parser("stats", help="Kruskal-Wallis and pairwise tests from a multi-test report")
    common(sp, data=False)
    sp.add_argument("--report", required=True)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp = sub.add_parser("completion", help="completion rate per age and test")
    common(sp)
    sp = sub.add_parser("embed", help="2-D PCA projection of one test's features")
    common(sp)
    sp.add_argument("--test", choices=tests, default="T1")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if args.command == "synth":
            pg = args.per_group
            if len(pg) not in (1, 3) or any(c < 1 for c in pg):
                raise UsageError("--per-group takes one count or three counts >= 1")
            args.per_group = pg * 3 if len(pg) == 1 else pg
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        out = COMMANDS[args.command](args)
        print(f"childci {args.command}: seed={out.seed} config={out.config_hash}", file=sys.stderr)
        for p in out.written:
            log.info("wrote %s", p)
        return EXIT_OK
    except InvariantError as e:
        print(f"childci: invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ChildCIError, ValueError, KeyError, OSError) as e:
        print(f"childci: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssertionError, ArithmeticError) as e:  # pragma: no cover
        print(f"childci: internal error: {e!r}", file=sys.stderr)
        return EXIT_INVARIANT


def main() -> None:  # pragma: no cover
    sys.exit(run())
