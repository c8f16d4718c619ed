"""Command-line entry point: ``povertytrap <command> [options]``.

Every command reads the same flat configuration (``--config`` file, then
``--preset``, then explicit flags) and writes into ``--out``. Data files carry
a ``# config_digest=... / # master_seed=...`` header and no timestamps, so a
rerun with the same configuration reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import PRESETS, RunConfig, load_config
from .experiments import ExperimentDesign, run_ensemble, run_intervention, saltelli_design
from .fileio import (DataError, atomic_write_text, dump_jsonl, load_jsonl, read_csv, write_csv,
                     write_histogram_csv)
from .social_graph import ConvergenceError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3

QOIS = ("final_gini", "total_final_wealth", "fraction_richer")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# design ---------------------------------------------------------------------

DESIGN_FILE = "design.csv"
RESULTS_FILE = "results.jsonl"


def _need_seed(cfg: RunConfig) -> int:
    if cfg.master_seed is None:
        raise UsageError("a master seed is required (--seed or master_seed in the config file)")
    return cfg.master_seed


def write_design(design: ExperimentDesign, path, cfg: RunConfig) -> None:
    meta = {**cfg.provenance(), "base_sample_count": design.base_sample_count, "rep_count": design.rep_count}
    rows = [(i, *map(float, design.rows[i])) for i in range(design.n_rows)]
    write_csv(path, ("row_id", *design.names), rows, meta)


def read_design(path) -> ExperimentDesign:
    meta, rows = read_csv(path)
    try:
        names = tuple(k for k in rows[0] if k != "row_id")
        for i, r in enumerate(rows):
            if int(r["row_id"]) != i:
                raise DataError(f"{path}: row_id {r['row_id']} out of order at data row {i + 1}")
        mat = np.array([[float(r[k]) for k in names] for r in rows])
        return ExperimentDesign(mat, int(meta["base_sample_count"]), int(meta["rep_count"]),
                                int(meta["master_seed"]), names)
    except (KeyError, IndexError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed design file ({exc})") from None


def cmd_design(cfg: RunConfig) -> int:
    seed = _need_seed(cfg)
    design = saltelli_design(cfg.base_n, cfg.bounds(), seed, cfg.reps)
    path = Path(cfg.out) / DESIGN_FILE
    write_design(design, path, cfg)
    _log(f"wrote {design.n_rows} design rows to {path}")
    return EXIT_OK


# run ------------------------------------------------------------------------

def _load_or_make_design(cfg: RunConfig) -> ExperimentDesign:
    path = Path(cfg.out) / DESIGN_FILE
    if path.exists():
        design = read_design(path)
        meta, _ = read_csv(path)
        if meta.get("config_digest") != cfg.digest():
            raise DataError(f"{path} was written with config {meta.get('config_digest')}, "
                            f"current config is {cfg.digest()}")
        return design
    cmd_design(cfg)
    return read_design(path)


def load_results(path, digest: str | None = None) -> list[dict]:
    records = load_jsonl(path)
    for n, rec in enumerate(records, start=1):
        for key in ("row_id", "rep", "seed"):
            if key not in rec:
                raise DataError(f"{path}:{n}: record lacks {key!r}")
        if digest is not None and rec.get("config_digest") != digest:
            raise DataError(f"{path}:{n}: record from config {rec.get('config_digest')}, expected {digest}")
    return records


def cmd_run(cfg: RunConfig, save_wealth: bool = False) -> int:
    _need_seed(cfg)
    design = _load_or_make_design(cfg)
    out = Path(cfg.out)
    path = out / RESULTS_FILE
    digest = cfg.digest()
    existing = load_results(path, digest) if path.exists() else []
    by_key = {(r["row_id"], r["rep"]): r for r in existing}
    total = design.n_rows * design.rep_count
    _log(f"{len(by_key)}/{total} runs already recorded")

    with open(path, "a") as fh:
        done = [len(by_key)]

        def record(rec):
            rec["config_digest"] = digest
            rec.pop("traceback", None)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            by_key[(rec["row_id"], rec["rep"])] = rec
            done[0] += 1
            if done[0] % 50 == 0 or done[0] == total:
                _log(f"{done[0]}/{total} runs")

        run_ensemble(design, cfg.fixed(), cfg.workers, skip=by_key.keys(), on_record=record,
                     wealth_dir=out / "wealth" if save_wealth else None)

    # rewrite in canonical order so the store does not depend on scheduling
    atomic_write_text(path, dump_jsonl(by_key[k] for k in sorted(by_key)))
    failures = [r for r in by_key.values() if r.get("error")]
    if failures:
        _log(f"{len(failures)} runs failed; first: row {failures[0]['row_id']} rep {failures[0]['rep']}: "
             f"{failures[0]['error']}")
        if any(r["error"].startswith("convergence") for r in failures):
            return EXIT_CONVERGENCE
    return EXIT_OK


# classify / analyze / sobol -------------------------------------------------

def _results(cfg: RunConfig) -> list[dict]:
    path = Path(cfg.out) / RESULTS_FILE
    if not path.exists():
        raise DataError(f"{path} not found; run `povertytrap run` first")
    return load_results(path, cfg.digest())


def cmd_classify(cfg: RunConfig) -> int:
    records = _results(cfg)
    table = analysis.regime_counts(records)
    rows = []
    for level, idx in (("individual", 1), ("community", 0)):
        for tag in analysis.REGIMES:
            n = sum(v for k, v in table.items() if k[idx] == tag)
            rows.append((level, tag, n))
    meta = cfg.provenance()
    write_csv(Path(cfg.out) / "regime_counts.csv", ("level", "regime", "count"), rows, meta)
    write_csv(Path(cfg.out) / "regime_joint.csv", ("community_regime", "individual_regime", "count"),
              [(c, i, n) for (c, i), n in table.items()], meta)
    _log("  ".join(f"{lvl}:{tag}={n}" for lvl, tag, n in rows))
    return EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    records = [r for r in _results(cfg) if not r.get("error")]
    out, meta = Path(cfg.out), cfg.provenance()

    gini_rows = [(tag, len(v), float(np.median(v)), float(np.mean(v)))
                 for tag in analysis.REGIMES
                 if (v := [r["final_gini"] for r in records if r["individual_regime"] == tag])]
    write_csv(out / "gini_by_regime.csv", ("regime", "runs", "median_gini", "mean_gini"), gini_rows, meta)

    prof_rows = []
    for level in ("individual", "community"):
        prof = analysis.regime_parameter_profile(records, level, cfg.bounds())
        for tag in prof.mean:
            for p in prof.mean[tag]:
                prof_rows.append((level, tag, prof.count[tag], p, prof.mean[tag][p], prof.sd[tag][p]))
    write_csv(out / "regime_profile.csv", ("level", "regime", "runs", "parameter", "normalized_mean",
                                           "normalized_sd"), prof_rows, meta)

    try:
        corr = analysis.wealth_gini_correlation(records)
        corr_row = [(corr.n, corr.r if corr.defined else "undefined")]
    except ValueError:
        corr_row = [(0, "undefined")]
    write_csv(out / "wealth_gini_correlation.csv", ("someRich_runs", "pearson_r"), corr_row, meta)

    write_csv(out / "inequality.csv", ("row_id", "rep", "individual_regime", "horizontal_gini", "vertical_gini"),
              [(r["row_id"], r["rep"], r["individual_regime"], r["horizontal_gini"], r["vertical_gini"])
               for r in records], meta)

    returns = analysis.project_return_summary(records)
    for tag, values in returns.items():
        if values.size:
            counts, edges = np.histogram(values, bins=40)
            write_histogram_csv(out / f"project_returns_{tag}.csv", counts, edges, meta)

    deg_rows = []
    for tag, groups in analysis.degree_wealth_by_regime(records).items():
        for d, q in groups.items():
            deg_rows.append((tag, d, *map(float, q)))
    write_csv(out / "degree_wealth.csv", ("regime", "memberships", "q10", "q25", "q50", "q75", "q90"),
              deg_rows, meta)

    sizes = [s for r in records for s in r["details"]["community_sizes"]]
    counts = [r["n_communities"] for r in records]
    for name, values in (("community_sizes", sizes), ("community_counts", counts)):
        if values:
            c, e = np.histogram(values, bins=np.arange(min(values), max(values) + 2) - 0.5)
            write_histogram_csv(out / f"{name}.csv", c, e, meta)
    _log(f"analyzed {len(records)} runs")
    return EXIT_OK


def cmd_sobol(cfg: RunConfig) -> int:
    design = read_design(Path(cfg.out) / DESIGN_FILE)
    records = {(r["row_id"], r["rep"]): r for r in _results(cfg)}
    missing = [k for k in design.jobs() if k not in records or records[k].get("error")]
    if missing:
        raise DataError(f"{len(missing)} (row, rep) results missing or failed, e.g. {missing[0]}")
    rows = []
    for q in QOIS:
        y = [records[k][q] for k in design.jobs()]
        rep = analysis.sobol_indices(design, y, n_boot=cfg.sobol_bootstrap, seed=design.master_seed)
        for i, name in enumerate(rep.names):
            rows.append((q, name, "first", rep.first[i], *rep.first_ci[i]))
            rows.append((q, name, "total", rep.total[i], *rep.total_ci[i]))
    write_csv(Path(cfg.out) / "sobol.csv", ("qoi", "parameter", "index", "value", "ci_low", "ci_high"),
              rows, cfg.provenance())
    return EXIT_OK


# intervene / demo -----------------------------------------------------------

def confirmed_row(records: list[dict], regime: str) -> int:
    """Lowest row id whose every repetition was classified ``regime``."""
    by_row: dict[int, set] = {}
    for r in records:
        by_row.setdefault(r["row_id"], set()).add(r.get("individual_regime"))
    for row in sorted(by_row):
        if by_row[row] == {regime}:
            return row
    raise DataError(f"no design row has all repetitions classified {regime}")


def cmd_intervene(cfg: RunConfig, row: int | None, regime: str | None) -> int:
    seed = _need_seed(cfg)
    design = read_design(Path(cfg.out) / DESIGN_FILE)
    if row is None:
        if regime is None:
            raise UsageError("give --row or --regime")
        row = confirmed_row(_results(cfg), regime)
    if not 0 <= row < design.n_rows:
        raise UsageError(f"row {row} outside the design (0..{design.n_rows - 1})")
    spec = cfg.intervention()
    report = run_intervention(design.params(row), spec, seed, cfg.fixed(), row_id=row)
    rows = [(r.rep, r.seed, r.escape_fraction, r.poverty_line, float(r.target_final_wealth.max()),
             float(np.mean(r.target_final_wealth < 1e-8))) for r in report.reps]
    meta = {**cfg.provenance(), "row_id": row}
    write_csv(Path(cfg.out) / f"intervention_row{row}.csv",
              ("rep", "seed", "escape_fraction", "poverty_line", "max_target_final_wealth",
               "fraction_targets_below_1e-8"), rows, meta)
    esc = report.escape_fractions
    _log(f"row {row}: mean escape {esc.mean():.3f} (sd {esc.std():.3f}) over {len(esc)} reps")
    return EXIT_OK


def cmd_demo_bimodal(cfg: RunConfig, k: int) -> int:
    seed = _need_seed(cfg)
    demo = analysis.bimodal_sum_demo(k, seed)
    write_histogram_csv(Path(cfg.out) / f"bimodal_k{k}.csv", demo.counts, demo.edges, {**cfg.provenance(), "k": k})
    _log(f"pooled {demo.sample.size} draws, mean {demo.sample.mean():.2f}")
    return EXIT_OK


# entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="built-in scale preset (default desk)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="worker processes for ensemble runs")
    common.add_argument("--out", help="output directory")

    p = _Parser(prog="povertytrap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("design", parents=[common], help="write the Saltelli design CSV")
    run = sub.add_parser("run", parents=[common], help="simulate every (row, rep); resumable")
    run.add_argument("--save-wealth", action="store_true", help="also write each run's wealth matrix")
    sub.add_parser("classify", parents=[common], help="regime counts at both levels")
    inter = sub.add_parser("intervene", parents=[common], help="capital-injection experiment")
    inter.add_argument("--row", type=int, help="design row to use")
    inter.add_argument("--regime", choices=analysis.REGIMES, help="pick the first row confirmed in this regime")
    sub.add_parser("analyze", parents=[common], help="inequality and regime reports")
    sub.add_parser("sobol", parents=[common], help="first and total order Sobol indices")
    demo = sub.add_parser("demo-bimodal", parents=[common], help="pooled bimodal sample histogram")
    demo.add_argument("--k", type=int, default=200, help="number of bimodal samples")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset, master_seed=args.seed, workers=args.workers, out=args.out)
        if args.command == "design":
            return cmd_design(cfg)
        if args.command == "run":
            return cmd_run(cfg, args.save_wealth)
        if args.command == "classify":
            return cmd_classify(cfg)
        if args.command == "intervene":
            return cmd_intervene(cfg, args.row, args.regime)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "sobol":
            return cmd_sobol(cfg)
        return cmd_demo_bimodal(cfg, args.k)
    except UsageError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except DataError as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except ConvergenceError as exc:
        _log(f"convergence failure: {exc}")
        return EXIT_CONVERGENCE
    except ValueError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
