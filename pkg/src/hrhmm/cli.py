"""Command-line workflows: fit, predict, validate, report, simulate.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 sampler error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, predict, synth
from .config import ConfigError, RunConfig
from .data import POSITIONS, IngestError, elite_hitter_filter, load_holdout, load_seasons
from .errors import SamplerError
from .sampler import chain_rhat, pooled, read_chain, run_gibbs
from .sampler.store import dumps_chain

log = logging.getLogger("hrhmm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SAMPLER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Outputs:
    """Tracks files written by one command so a failed run can remove them."""

    def __init__(self, root: Path, fingerprint: str):
        self.root = root
        self.fingerprint = fingerprint
        self.written: list[Path] = []

    def path(self, *parts: str) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(*rel.split("/"))
        self.written.append(p)
        p.write_text(text)
        return p

    def write_csv(self, rel: str, header, rows, trailer: list[str] = ()) -> Path:
        buf = io.StringIO()
        buf.write(f"# config {self.fingerprint}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        for line in trailer:
            buf.write(f"# {line}\n")
        return self.write_text(rel, buf.getvalue())

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--seed", type=int, help="master seed (sampler, or simulation for 'simulate')")
    common.add_argument("--chains", type=int, help="number of chains")
    common.add_argument("--iters", type=int, help="iterations per chain, burn-in included")
    common.add_argument("--burn-in", type=int, help="iterations discarded before storing")
    common.add_argument("--thin", type=int, help="store every N-th post-burn-in draw")
    common.add_argument("--variant", help="full, no_position_no_elite or pshmm")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--threads", type=int, help="worker processes for running chains")
    common.add_argument("--train", type=Path, help="training seasons file")
    common.add_argument("--holdout", type=Path, help="hold-out seasons file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="hrhmm", description="Hierarchical hidden Markov model for home-run forecasting")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("fit", parents=[common], help="sample the posterior and write chain files")
    pp = sub.add_parser("predict", parents=[common], help="forecast the hold-out season")
    pp.add_argument("--chain-dir", type=Path, help="directory of chain files (default OUT/chains)")
    pv = sub.add_parser("validate", parents=[common], help="score forecasts against the hold-out truths")
    pv.add_argument("--predictions", type=Path, help="forecast table (default OUT/predictions.csv)")
    pv.add_argument("--compare", action="append", default=[], metavar="NAME=PATH",
                    help="another forecast table to score alongside, e.g. a different variant")
    pr = sub.add_parser("report", parents=[common], help="export elite onset, age curves and intercepts")
    pr.add_argument("--chain-dir", type=Path, help="directory of chain files (default OUT/chains)")
    ps = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset with known truth")
    ps.add_argument("--players", type=int, default=500)
    ps.add_argument("--seasons", type=int, default=10, help="training seasons per player")
    return p


def resolve_config(args) -> RunConfig:
    over: dict[str, dict] = {"data": {}, "model": {}, "sampler": {}, "output": {}}
    if args.seed is not None:
        over["sampler"]["seed"] = args.seed
    for flag, key in (("chains", "n_chains"), ("iters", "n_iter"), ("burn_in", "burn_in"),
                      ("thin", "thin"), ("threads", "threads")):
        if getattr(args, flag) is not None:
            over["sampler"][key] = getattr(args, flag)
    if args.variant is not None:
        over["model"]["variant"] = args.variant
    if args.out is not None:
        over["output"]["dir"] = str(args.out)
    if args.train is not None:
        over["data"]["train"] = str(args.train)
    if args.holdout is not None:
        over["data"]["holdout"] = str(args.holdout)
    return RunConfig.from_sources(args.config, over)


def _require(cfg: RunConfig, section: str, key: str) -> Path:
    value = cfg[section][key]
    if value is None:
        raise UsageError(f"{section}.{key} is required (config file or --{key} flag)")
    p = Path(value)
    if not p.exists():
        raise UsageError(f"{section}.{key}: {p} does not exist")
    return p


def _load_train(cfg: RunConfig):
    d = load_seasons(_require(cfg, "data", "train"), cfg.ingest())
    if cfg["data"]["elite_filter"]:
        d = elite_hitter_filter(d)
    if d.n_seasons == 0:
        raise IngestError("no training seasons left after filtering")
    return d


def _chain_files(cfg: RunConfig, chain_dir: Path | None) -> list[Path]:
    root = chain_dir or Path(cfg["output"]["dir"]) / "chains"
    files = sorted(root.glob("chain_*.csv"))
    if not files:
        raise UsageError(f"no chain files in {root}; run 'hrhmm fit' first")
    return files


def cmd_fit(cfg: RunConfig, out: Outputs) -> None:
    d = _load_train(cfg)
    h = cfg.hyper().resolve(d)
    sc = cfg.sampler()
    log.info("fitting %s variant: %d seasons, %d players, %d parks; %d chains x %d iterations",
             h.variant, d.n_seasons, d.n_players, d.n_parks, sc.n_chains, sc.n_iter)
    start = time.time()
    chains = run_gibbs(d, h, sc)
    elapsed = time.time() - start
    files = []
    for c in chains:
        c.tags = {"config": out.fingerprint}
        files.append(out.write_text(f"chains/chain_{c.chain}.csv", dumps_chain(c)).name)

    acc_rows = []
    for c in chains:
        for kind, rates in c.acceptance.items():
            for idx in np.ndindex(np.shape(rates)):
                acc_rows.append([c.chain, kind, ":".join(map(str, idx)), float(np.asarray(rates)[idx]),
                                 float(np.asarray(c.scales[kind])[idx])])
    out.write_csv("acceptance.csv", ["chain", "block", "index", "accept_rate", "final_scale"], acc_rows)

    rhat_note = None
    if len(chains) >= 2 and sc.n_stored >= 2:
        names, r = chain_rhat(chains)
        out.write_csv("rhat.csv", ["parameter", "rhat"], zip(names, r))
        worst = int(np.argmax(r)) if r.size else None
        if worst is not None and r[worst] > 1.1:
            log.warning("largest potential scale reduction %.3f for %s", r[worst], names[worst])
    else:
        rhat_note = "needs at least two chains with two stored draws"

    manifest = {
        "version": __version__,
        "config_fingerprint": out.fingerprint,
        "config": cfg.raw,
        "data_fingerprint": d.fingerprint(),
        "n_seasons": d.n_seasons, "n_players": d.n_players, "n_parks": d.n_parks,
        "hyper": h.to_dict(),
        "chain_files": files,
        "draws_per_chain": sc.n_stored,
        "total_draws": sc.n_stored * sc.n_chains,
        "wall_clock_seconds": round(elapsed, 3),
        "gelman_rubin": rhat_note or "rhat.csv",
    }
    out.write_text("fit_manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    out.write_text("config.toml", cfg.dumps())
    print(f"wrote {len(files)} chain files ({sc.n_stored} draws each) to {out.root / 'chains'}")


PRED_HEADER = ["player_id", "year", "age", "position", "ab", "mean_total", "lo", "hi",
               "elite_prob", "mean_rate", "n_draws", "rookie", "unknown_park"]


def cmd_predict(cfg: RunConfig, out: Outputs, chain_dir: Path | None) -> None:
    store = pooled([read_chain(p) for p in _chain_files(cfg, chain_dir)])
    skipped: list[tuple[str, str]] = []
    targets = load_holdout(_require(cfg, "data", "holdout"), cfg.ingest(), skipped=skipped)
    preds = predict.predict_season(store, targets, seed=int(cfg["predict"]["seed"]),
                                   mass=float(cfg["predict"]["mass"]))
    rows = [[p.player_id, p.year, p.age, POSITIONS[p.position], p.ab, p.mean_total, p.interval[0],
             p.interval[1], p.elite_prob, p.mean_rate, p.n_draws, p.rookie, p.unknown_park] for p in preds]
    trailer = [f"skipped {pid}: {why}" for pid, why in skipped]
    if skipped:
        log.warning("skipped %d hold-out rows with missing covariates", len(skipped))
    out.write_csv("predictions.csv", PRED_HEADER, rows, trailer)
    print(f"wrote {len(preds)} forecasts to {out.root / 'predictions.csv'}"
          + (f" ({len(skipped)} players skipped)" if skipped else ""))


def read_predictions(path: Path) -> list[predict.PredictiveSummary]:
    from .data import POSITION_INDEX, read_table

    header, rows = read_table(path)
    missing = [c for c in PRED_HEADER if c not in header]
    if missing:
        raise IngestError(f"{path}: not a forecast table (missing {missing})")
    out = []
    for _, r in rows:
        out.append(predict.PredictiveSummary(
            player_id=r["player_id"], year=int(r["year"]), age=int(r["age"]),
            position=POSITION_INDEX[r["position"]], ab=int(r["ab"]), mean_total=float(r["mean_total"]),
            interval=(int(r["lo"]), int(r["hi"])), elite_prob=float(r["elite_prob"]),
            mean_rate=float(r["mean_rate"]), n_draws=int(r["n_draws"]),
            rookie=r["rookie"] == "1", unknown_park=r["unknown_park"] == "1",
        ))
    return out


def _report_text(reports, fingerprint: str, notes: list[str]) -> str:
    lines = [f"# config {fingerprint}", "80% intervals: shortest contiguous integer interval", ""]
    for rep in reports:
        lines.append(f"cohort: {rep.cohort} ({rep.n_players} players)")
        lines.append(f"  {'method':<24}{'n':>5}{'RMSE':>9}{'MAE':>8}{'cover':>8}{'width':>8}{'%BEST':>8}")
        for name, s in rep.scores.items():
            cov = "" if s.coverage is None else f"{s.coverage:.3f}"
            wid = "" if s.avg_width is None else f"{s.avg_width:.2f}"
            lines.append(f"  {name:<24}{s.n:>5}{s.rmse:>9.3f}{s.mae:>8.2f}{cov:>8}{wid:>8}{s.pct_best:>8.1f}")
        for m, ids in rep.dropped.items():
            lines.append(f"  {m}: no forecast for {len(ids)} players")
        lines.append("")
    lines.extend(notes)
    return "\n".join(lines) + "\n"


def cmd_validate(cfg: RunConfig, out: Outputs, pred_path: Path | None, compare: list[str]) -> None:
    external = list(cfg["data"]["external"])
    targets = load_holdout(_require(cfg, "data", "holdout"), cfg.ingest(), external=external, skipped=[])
    methods = {"model": read_predictions(pred_path or out.root / "predictions.csv")}
    for item in compare:
        if "=" not in item:
            raise UsageError(f"--compare expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        methods[name] = read_predictions(Path(path))
    ids = {p.player_id for p in methods["model"]}
    targets = [t for t in targets if t.player_id in ids]
    competing = {}
    notes = []
    if cfg["predict"]["strawman"] and cfg["data"]["train"] is not None:
        competing["strawman"] = predict.strawman(targets, _load_train(cfg))
    for col in external:
        competing[col] = {t.player_id: t.external[col] for t in targets}
    kinds = {c: cfg["data"]["external_kind"] for c in external}
    kinds["strawman"] = "total"
    if external:
        notes.append(f"external forecasts read as {cfg['data']['external_kind']}s"
                     + (" and multiplied by true at-bats" if cfg["data"]["external_kind"] == "rate" else ""))
    reports = predict.score_cohorts(methods, targets, competing, kinds, cutoff=int(cfg["predict"]["age_cutoff"]))
    rows = [[r[k] for k in ("cohort", "method", "n", "rmse", "mae", "coverage", "avg_width", "pct_best")]
            for rep in reports for r in rep.rows()]
    out.write_csv("validation.csv", ["cohort", "method", "n", "rmse", "mae", "coverage", "avg_width", "pct_best"], rows)
    text = _report_text(reports, out.fingerprint, notes)
    out.write_text("validation.txt", text)
    print(text, end="")


def cmd_report(cfg: RunConfig, out: Outputs, chain_dir: Path | None) -> None:
    store = pooled([read_chain(p) for p in _chain_files(cfg, chain_dir)])
    rep = cfg["report"]
    onset = predict.elite_onset(store, threshold=float(rep["onset_threshold"]))
    if not onset:
        log.warning("no player is inferred elite in two or more seasons; onset histogram is empty")
    total = sum(onset.values())
    out.write_csv("report/onset.csv", ["years_to_elite", "players", "share"],
                  [[k, v, v / total] for k, v in onset.items()])

    labels = list(store.layout["groups"])
    positions = list(rep["positions"]) or labels
    states = (0, 1) if store.alpha.shape[2] == 2 else (0,)
    for pos in positions:
        for e in states:
            grid, curves = predict.age_curves(store, pos, bool(e), park=rep["park"], n_curves=int(rep["n_curves"]))
            status = "elite" if e else "nonelite"
            header = ["age"] + [f"draw_{j}" for j in range(curves.shape[0])]
            out.write_csv(f"report/curves/{pos}_{status}.csv", header,
                          [[a, *curves[:, i]] for i, a in enumerate(grid)])

    rows = [[r.position, r.elite, r.mean, r.lo, r.hi]
            for r in predict.intercept_summary(store, age=float(rep["intercept_age"]))]
    out.write_csv("report/intercepts.csv", ["position", "elite", "mean_rate", "lo95", "hi95"], rows)

    pred_path = out.root / "predictions.csv"
    if pred_path.exists() and cfg["data"]["train"] is not None:
        rows, skipped = predict.model_contribution(read_predictions(pred_path), _load_train(cfg))
        out.write_csv("report/contribution.csv",
                      ["player_id", "contribution", "model_rate", "naive_rate", "age", "past_rate_sd", "n_past"],
                      [[c.player_id, c.contribution, c.model_rate, c.naive_rate, c.age, c.past_rate_sd, c.n_past]
                       for c in rows], [f"skipped {pid}: no previous season" for pid in skipped])
    print(f"wrote report tables to {out.root / 'report'}")


def cmd_simulate(cfg: RunConfig, out: Outputs, n_players: int, n_seasons: int) -> None:
    from .data import dumps_seasons

    rng = np.random.default_rng(int(cfg["sampler"]["seed"]))
    tp = synth.default_true_params(rng, n_players=n_players, n_seasons=n_seasons)
    tp = synth.extend_schedules(tp, rng)
    full, elite = synth.simulate(tp, rng)
    train, hold = synth.split_last_season(full)
    out.write_text("train.csv", f"# config {out.fingerprint}\n" + dumps_seasons(train))
    out.write_csv("holdout.csv", ["player_id", "year", "hr", "ab", "age", "park", "position"],
                  [[t.player_id, t.year, t.hr, t.ab, t.age, t.park, POSITIONS[t.position]] for t in hold])
    st = tp.state
    truth = {
        "alpha": st.alpha.tolist(), "beta": dict(zip(tp.parks, st.beta.tolist())),
        "gamma": st.gamma.tolist(), "nu": st.nu.tolist(), "hyper": tp.hyper.to_dict(),
        "positions": list(POSITIONS),
        "elite": {f"{s.player_id}:{s.year}": int(e) for s, e in zip(full.seasons, elite)},
    }
    out.write_text("truth.json", json.dumps(truth, sort_keys=True) + "\n")
    print(f"wrote {train.n_seasons} training seasons and {len(hold)} hold-out seasons to {out.root}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as err:
        print(f"hrhmm: configuration error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = Outputs(Path(cfg["output"]["dir"]), cfg.fingerprint())
    try:
        if args.command == "fit":
            cmd_fit(cfg, out)
        elif args.command == "predict":
            cmd_predict(cfg, out, args.chain_dir)
        elif args.command == "validate":
            cmd_validate(cfg, out, args.predictions, args.compare)
        elif args.command == "report":
            cmd_report(cfg, out, args.chain_dir)
        elif args.command == "simulate":
            cmd_simulate(cfg, out, args.players, args.seasons)
    except UsageError as err:
        out.rollback()
        print(f"hrhmm: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestError, FileNotFoundError) as err:
        out.rollback()
        print(f"hrhmm: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except SamplerError as err:
        out.rollback()
        print(f"hrhmm: sampler error: {err}", file=sys.stderr)
        return EXIT_SAMPLER
    except BaseException:
        out.rollback()
        raise
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
