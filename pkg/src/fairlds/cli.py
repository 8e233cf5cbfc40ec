"""Command-line entry point: ``fairlds {generate,fit,sweep,compas,post}``.

Exit codes: 0 success, 2 usage or input error, 3 solver failure.
Every output file starts with ``#`` provenance lines (tool version, config
hash, seed); readers in this package skip them.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .datagen import GeneratorConfig, sample_panel
from .ingest import IngestError, binify_with_stats, load_cohort_119, load_sample_1005, post_features
from .lds import FitConfig, FitError, Panel, PanelError, _as_kind, fit
from .metrics import LabeledScores, base_rates, fairness_report, race_wise_thresholds, uni_race_threshold
from .sdp import SolverConfig
from .postprocess import PostFeatures, PostFitError, classify, fit_post, score, write_scores_csv

log = logging.getLogger("fairlds")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3
SWEEP_KINDS = ("BetaSweep", "SeedSweep", "HorizonSweep", "PostCompare")
SWEEP_HEADER = ["model", "beta", "seed", "T", "subgroup", "nrmse", "runtime_s", "num_vars", "status"]
POST_HEADER = ["model", "threshold", "index", "value", "status"]


class UsageError(Exception):
    pass


def _hash(payload) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(command: str, config, seed=None) -> list[str]:
    return [f"fairlds {__version__} {command}", f"config-sha256 {_hash(config)}", f"seed {seed if seed is not None else '-'}"]


def _with_header(lines: list[str], body: str) -> str:
    return "".join(f"# {ln}\n" for ln in lines) + body


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return data


def _json_text(payload: dict, header: list[str]) -> str:
    # JSON has no comments, so provenance travels as a key
    payload = dict(payload)
    payload["provenance"] = header
    return json.dumps(payload, indent=2) + "\n"


# ----------------------------------------------------------------------------
# generate / fit


def cmd_generate(args) -> int:
    payload = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        payload["seed"] = args.seed
    try:
        config = GeneratorConfig.from_dict(payload)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid generator config: {exc}") from None
    panel = sample_panel(config)
    from dataclasses import asdict

    panel.to_csv(args.out, provenance("generate", asdict(config), config.seed))
    return EXIT_OK


def _fit_config(objective, lambda1, lambda2, order, loss) -> FitConfig:
    try:
        return FitConfig(objective_kind=objective, lambda1=lambda1, lambda2=lambda2,
                         relax_order=order, loss_mode=loss)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_fit(args) -> int:
    config = _fit_config(args.objective, args.lambda1, args.lambda2, args.order, args.loss)
    try:
        panel = Panel.read_csv(args.panel)
    except FileNotFoundError:
        raise UsageError(f"file not found: {args.panel}") from None
    except PanelError as exc:
        raise UsageError(f"{args.panel}: {exc}") from None
    if len(panel) == 0:
        raise UsageError(f"{args.panel}: panel is empty")
    settings = {"objective": config.objective_kind.value, "lambda1": config.lambda1, "lambda2": config.lambda2,
                "order": config.relax_order, "loss": config.loss_mode.value, "panel": panel.to_csv()}
    header = provenance("fit", settings)
    try:
        result = fit(panel, config)
    except (PanelError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    except FitError as exc:
        log.error("%s", exc)
        stats = exc.solution.summary() if exc.solution is not None else {}
        _write(args.out, _json_text({"error": str(exc), "solver": stats}, header))
        return EXIT_SOLVER
    _write(args.out, _json_text(result.to_json_dict(), header))
    return EXIT_OK


# ----------------------------------------------------------------------------
# sweep


@dataclass
class ExperimentSpec:
    kind: str
    models: list = field(default_factory=lambda: ["unfair", "subgroup-fair", "instant-fair"])
    betas: list | None = None
    seeds: list = field(default_factory=lambda: [0])
    horizons: list | None = None
    thresholds: list | None = None
    generator: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    train: str | None = None
    test: str | None = None
    lambda3: float = 0.05

    @classmethod
    def from_dict(cls, payload: dict, base: Path | None = None) -> "ExperimentSpec":
        unknown = set(payload) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown experiment keys {sorted(unknown)}")
        spec = cls(**payload)
        if spec.kind not in SWEEP_KINDS:
            raise UsageError(f"kind must be one of {list(SWEEP_KINDS)}, got {spec.kind!r}")
        for name in ("models", "seeds", "betas", "horizons", "thresholds"):
            value = getattr(spec, name)
            if value is not None and not isinstance(value, list):
                raise UsageError(f"{name} must be a list")
        if base is not None:
            for name in ("train", "test"):
                value = getattr(spec, name)
                if value is not None and not Path(value).is_absolute():
                    setattr(spec, name, str(base / value))
        return spec

    def fit_config(self, model: str) -> FitConfig:
        """FitConfig for one model; ``lambda1_by_model`` overrides lambda1 per model name."""
        settings = dict(self.fit)
        per_model = settings.pop("lambda1_by_model", {}) or {}
        if model in per_model:
            settings["lambda1"] = per_model[model]
        if isinstance(settings.get("solver"), dict):
            settings["solver"] = SolverConfig(**settings["solver"])
        return FitConfig(objective_kind=model, **settings)

    def cells(self) -> list[dict]:
        if self.kind == "PostCompare":
            return [{"model": m, "threshold": x} for m in self.models for x in (self.thresholds or [])]
        gen = GeneratorConfig.from_dict(self.generator) if self.generator else GeneratorConfig()
        betas = self.betas if self.betas is not None else [gen.beta_d]
        horizons = self.horizons if self.horizons is not None else [gen.T]
        return [
            {"model": m, "beta": float(b), "seed": int(s), "T": int(T)}
            for m in self.models for b in betas for s in self.seeds for T in horizons
        ]


def _lds_cell(spec: ExperimentSpec, cell: dict) -> list[dict]:
    gen = GeneratorConfig.from_dict({**spec.generator, "beta_d": cell["beta"], "seed": cell["seed"], "T": cell["T"]})
    panel = sample_panel(gen)
    config = spec.fit_config(cell["model"])
    start = time.perf_counter()
    try:
        result = fit(panel, config)
    except FitError as exc:
        runtime = time.perf_counter() - start
        status = exc.solution.status.value if exc.solution is not None else "error"
        return [dict(cell, subgroup=s, nrmse=None, runtime_s=runtime, num_vars=None, status=status)
                for s in panel.subgroups]
    except ValueError as exc:
        runtime = time.perf_counter() - start
        status = f"input-error: {exc}"
        return [dict(cell, subgroup=s, nrmse=None, runtime_s=runtime, num_vars=None, status=status)
                for s in panel.subgroups]
    runtime = time.perf_counter() - start
    return [dict(cell, subgroup=s, nrmse=result.nrmse[s], runtime_s=runtime, num_vars=result.num_vars,
                 status="ok") for s in panel.subgroups]


def _post_cell(spec: ExperimentSpec, cell: dict) -> list[dict]:
    train = PostFeatures.read_csv(spec.train)
    test = PostFeatures.read_csv(spec.test)
    try:
        model = fit_post(train, cell["model"], spec.lambda3)
    except PostFitError as exc:
        return [dict(cell, index=None, value=None, status=str(exc))]
    g = score(model, test.subgroup, test.X)
    data = LabeledScores(test.subgroup, g, test.y, test.ids)
    threshold = uni_race_threshold(g, float(cell["threshold"]))
    report = fairness_report(data, threshold).to_dict()["indices"]
    return [dict(cell, index=k, value=v, status="ok") for k, v in report.items()]


def _run_cell(spec: ExperimentSpec, cell: dict) -> list[dict]:
    return _post_cell(spec, cell) if spec.kind == "PostCompare" else _lds_cell(spec, cell)


def _workers() -> int:
    raw = os.environ.get("FAIRLDS_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise UsageError(f"FAIRLDS_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def run_sweep(spec: ExperimentSpec, omit_timing: bool = False) -> tuple[list[dict], int]:
    cells = spec.cells()
    workers = min(_workers(), len(cells))
    rows: list[dict] = []
    if workers <= 1:
        for cell in cells:
            rows.extend(_run_cell(spec, cell))
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_cell, [spec] * len(cells), cells):
                rows.extend(part)
    if omit_timing:
        for row in rows:
            if "runtime_s" in row:
                row["runtime_s"] = None
    failed = sum(1 for c in cells if all(r["status"] != "ok" for r in rows if _same_cell(r, c)))
    return rows, failed


def _same_cell(row: dict, cell: dict) -> bool:
    return all(row.get(k) == v for k, v in cell.items())


def sweep_table(spec: ExperimentSpec, rows: list[dict]) -> str:
    header = POST_HEADER if spec.kind == "PostCompare" else SWEEP_HEADER
    keyed = [[_fmt(r.get(col)) for col in header] for r in rows]
    if spec.kind == "PostCompare":
        keyed.sort(key=lambda r: (r[0], float(r[1]), r[2]))
    else:
        keyed.sort(key=lambda r: (r[0], float(r[1]), int(r[2]), int(r[3]), r[4]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(keyed)
    return buf.getvalue()


def cmd_sweep(args) -> int:
    payload = _read_json(args.spec)
    try:
        spec = ExperimentSpec.from_dict(payload, Path(args.spec).resolve().parent)
        cells = spec.cells()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment spec: {exc}") from None
    if not cells:
        raise UsageError("experiment grid is empty")
    if spec.kind == "PostCompare":
        for name in ("train", "test"):
            path = getattr(spec, name)
            if not path or not Path(path).exists():
                raise UsageError(f"PostCompare needs an existing {name} feature table")
    if spec.kind != "PostCompare":
        for m in spec.models:
            try:
                spec.fit_config(m)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"invalid fit settings for {m!r}: {exc}") from None
    else:
        for m in spec.models:
            try:
                kind = _as_kind(m)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            if kind.value == "unfair":
                raise UsageError("PostCompare models must be subgroup-fair or instant-fair")
    rows, failed = run_sweep(spec, omit_timing=args.omit_timing)
    _write(args.out, _with_header(provenance("sweep", payload, spec.seeds), sweep_table(spec, rows)))
    if failed:
        log.warning("%d of %d cells failed", failed, len(cells))
    return EXIT_SOLVER if failed == len(cells) else EXIT_OK


# ----------------------------------------------------------------------------
# compas / post


def cmd_compas(args) -> int:
    columns = _read_json(args.columns) if args.columns else None
    out = Path(args.out)
    settings = {"mode": args.mode, "csv": os.path.basename(str(args.csv)), "columns": columns}
    try:
        if args.mode == "cohort119":
            res = load_cohort_119(args.csv, columns)
            panel, dropped_days = binify_with_stats(res, args.period_days)
            header = provenance("compas", settings)
            panel.to_csv(_prepare(out / "panel.csv"), header)
            counts = {"rows": len(res), "subsamples": {k: len(v) for k, v in res.subsamples.items()},
                      "dropped": dict(res.dropped, nonpositive_days=dropped_days)}
        else:
            res = load_sample_1005(args.csv, columns)
            feats = post_features(res)
            header = provenance("compas", settings, args.seed)
            _write(out / "features.csv", _with_header(header, feats.to_frame().to_csv(index=False, lineterminator="\n")))
            from .ingest import split_train_test

            train, test = split_train_test(feats, args.seed)
            for name, part in (("train", train), ("test", test)):
                _write(out / f"{name}.csv", _with_header(header, part.to_frame().to_csv(index=False, lineterminator="\n")))
            counts = {"rows": len(res), "by_race": {g: int((res.rows["race"] == g).sum()) for g in sorted(set(res.rows["race"]))},
                      "train": len(train), "test": len(test), "dropped": res.dropped}
    except FileNotFoundError:
        raise UsageError(f"file not found: {args.csv}") from None
    except IngestError as exc:
        raise UsageError(str(exc)) from None
    _write(out / "counts.json", _json_text(counts, header))
    return EXIT_OK


def _prepare(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _parse_thresholds(text: str):
    if text == "base-rate":
        return ("base-rate", None)
    if text.startswith("uni:"):
        try:
            x = float(text[4:])
        except ValueError:
            raise UsageError(f"bad percentile in {text!r}") from None
        if not 0 <= x <= 100:
            raise UsageError("percentile must lie in [0, 100]")
        return ("uni", x)
    raise UsageError("--thresholds must be 'base-rate' or 'uni:<percentile>'")


def cmd_post(args) -> int:
    mode, x = _parse_thresholds(args.thresholds)
    try:
        train = PostFeatures.read_csv(args.train)
        test = PostFeatures.read_csv(args.test)
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {exc.filename}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        model = fit_post(train, args.kind, args.lambda3, include_label=not args.no_label)
    except PostFitError as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    g = score(model, test.subgroup, test.X)
    data = LabeledScores(test.subgroup, g, test.y, test.ids)
    if mode == "uni":
        thresholds = uni_race_threshold(g, x)
    else:
        g_train = score(model, train.subgroup, train.X)
        rates = base_rates(LabeledScores(train.subgroup, g_train, train.y))
        thresholds = race_wise_thresholds(data, rates)
    settings = {"kind": args.kind, "lambda3": args.lambda3, "thresholds": args.thresholds, "include_label": not args.no_label}
    header = provenance("post", settings, args.seed)
    report = fairness_report(data, thresholds, seed=args.seed)
    extra = {
        "model": {s: {"coef": model.coef[s].tolist(), "intercept": model.intercept[s]} for s in sorted(model.coef)},
        "train_objective": model.objective,
    }
    _write(args.out, _json_text({**report.to_dict(), **extra}, header))
    if args.scores:
        pred = classify(g, thresholds, test.subgroup)
        write_scores_csv(_prepare(Path(args.scores)), test.subgroup, test.ids, g, test.y, pred, header)
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fairlds", description="Fair forecasting of linear dynamical systems.")
    p.add_argument("--version", action="version", version=f"fairlds {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a biased synthetic panel")
    g.add_argument("--config", help="generator config JSON (defaults if omitted)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a forecaster to a panel")
    f.add_argument("--panel", required=True)
    f.add_argument("--objective", default="subgroup-fair")
    f.add_argument("--lambda1", type=float, default=1.0)
    f.add_argument("--lambda2", type=float, default=0.01)
    f.add_argument("--order", type=int, default=1)
    f.add_argument("--loss", default="abs")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("sweep", help="run an experiment grid")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--omit-timing", action="store_true", help="leave runtime_s blank for byte-stable output")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compas", help="prepare COMPAS panels or feature tables")
    c.add_argument("--csv", required=True)
    c.add_argument("--mode", choices=("cohort119", "sample1005"), required=True)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--columns", help="JSON overriding the column-name map")
    c.add_argument("--seed", type=int, default=0, help="train/test split seed")
    c.add_argument("--period-days", type=int, default=20)
    c.set_defaults(func=cmd_compas)

    q = sub.add_parser("post", help="fit the post-processor and report fairness indices")
    q.add_argument("--train", required=True)
    q.add_argument("--test", required=True)
    q.add_argument("--kind", default="subgroup-fair")
    q.add_argument("--lambda3", type=float, default=0.05)
    q.add_argument("--thresholds", default="base-rate", help="'base-rate' or 'uni:<percentile>'")
    q.add_argument("--no-label", action="store_true", help="drop the label from the explanatory variables")
    q.add_argument("--seed", type=int, default=0, help="seed for the balanced resample")
    q.add_argument("--scores", help="optional scores CSV output")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_post)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"fairlds: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fairlds: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
