"""Command-line driver: fit, predict, simulate, evaluate, diagnose.

Structured results are JSON, plot-ready tables are CSV. Every file carries
a digest of the run configuration. All randomness comes from ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .evaluate import (
    bayes_factor_vs_tossup,
    evaluation_games,
    model_bt_map_mc,
    model_bt_mle,
    model_tossup,
    model_win_ratio,
)
from .laplace import (
    CrossSection,
    cross_section,
    gaussian_approx,
    importance_weights,
    normalized_distance,
    sample,
    weight_histogram,
)
from .league_data import DataError, build_win_matrix, ingest_csv, parse_games
from .predict import (
    OutcomeFunction,
    mc_average,
    predict_importance,
    predict_map,
    series,
    single_game,
)
from .ratings import Prior, fit_map, gauge_fix
from .simulate import (
    FixedStrengths,
    GaussianStrengths,
    ImportanceStrengths,
    load_json,
    parse_queries,
    parse_schedule,
    simulate,
)

COMMANDS = ("fit", "predict", "simulate", "evaluate", "diagnose")
METHODS = ("map", "gaussian", "importance")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    games: str | None = None
    prior: str = "haldane"
    method: str = "map"
    n: int = 20000
    seeds: list[int] = field(default_factory=lambda: [0])
    schedule: str | None = None
    queries: str | None = None
    eval_manifest: str | None = None
    out: str | None = None
    tol: float = 1e-10

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        Prior.parse(self.prior)
        if self.n < 2:
            raise ConfigError("--n must be at least 2")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.tol > 0:
            raise ConfigError("--tol must be positive")
        needs = {
            "fit": ["games"],
            "predict": ["games", "queries"],
            "simulate": ["games", "schedule", "queries"],
            "evaluate": ["eval_manifest"],
            "diagnose": ["games", "out"],
        }[self.command]
        for name in needs:
            if getattr(self, name) is None:
                raise ConfigError(f"{self.command} requires --{name.replace('_', '-')}")

    def digest(self) -> str:
        payload = {k: v for k, v in vars(self).items() if k != "out"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def header(self) -> dict:
        return {
            "config_digest": self.digest(),
            "config": {k: v for k, v in vars(self).items() if k != "out"},
            "version": __version__,
        }


def _load_games(path):
    games, teams = ingest_csv(path)
    return build_win_matrix(games, len(teams), teams)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _clean(value):
    # JSON has no inf/nan
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean(v) for v in value]
    return value


def _emit_json(cfg: RunConfig, body: dict, path: str | None = None) -> None:
    doc = _clean({**cfg.header(), **body})
    text = json.dumps(doc, indent=2, default=_json_default) + "\n"
    target = path if path is not None else cfg.out
    if target is None:
        sys.stdout.write(text)
    else:
        Path(target).write_text(text, encoding="utf-8")


def _emit_csv(cfg: RunConfig, path: Path, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# config_digest={cfg.digest()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _seed_summary(rows: list[dict], key: str) -> list[dict]:
    """Append one summary row per id: mean over seeds and spread between them."""
    out = list(rows)
    ids = list(dict.fromkeys(r[key] for r in rows))
    for i in ids:
        group = [r for r in rows if r[key] == i]
        if len(group) < 2:
            continue
        est = np.array([r["estimate"] for r in group])
        out.append(
            {
                key: i,
                "method": group[0]["method"],
                "estimate": float(est.mean()),
                "stderr": float(est.std(ddof=1) / math.sqrt(len(est))),
                "n": sum(r["n"] for r in group),
                "seed": "summary",
            }
        )
    return out


def cmd_fit(cfg: RunConfig) -> None:
    wm = _load_games(cfg.games)
    prior = Prior.parse(cfg.prior)
    ls = fit_map(wm, prior, cfg.tol)
    centred = gauge_fix(ls).lam
    krach = ls.krach()
    teams = [
        {
            "team": wm.team_name(i),
            "lambda": float(ls.lam[i]),
            "lambda_sum_zero": float(centred[i]),
            "krach": float(krach[i]),
            "wins": float(wm.v[i]),
            "games": float(wm.games_played[i]),
        }
        for i in range(wm.t)
    ]
    _emit_json(cfg, {"prior": str(prior), "gauge": ls.gauge, "teams": teams})


def _outcomes(doc, teams) -> list[OutcomeFunction]:
    if not isinstance(doc, list):
        raise ConfigError("outcome specs must be a JSON list")
    out = []
    for item in doc:
        args = item.get("args", {})
        try:
            i = teams.index(args["team"])
            j = teams.index(args["opponent"])
        except ValueError as exc:
            raise DataError(f"outcome {item.get('id')!r}: unknown team ({exc})") from None
        kind = item.get("kind", "game")
        if kind == "game":
            f = single_game(i, j)
        elif kind == "series":
            f = series(i, j, int(args.get("best_of", 3)))
        else:
            raise ConfigError(f"unknown outcome kind {kind!r}")
        out.append(OutcomeFunction(str(item["id"]), f.evaluate))
    return out


def cmd_predict(cfg: RunConfig) -> None:
    wm = _load_games(cfg.games)
    prior = Prior.parse(cfg.prior)
    outcomes = _outcomes(load_json(cfg.queries), list(wm.teams))
    rows = []
    if cfg.method == "map":
        ls = fit_map(wm, prior, cfg.tol)
        for f in outcomes:
            rows.append(
                {"outcome_id": f.name, "method": "map", "estimate": predict_map(f, ls),
                 "stderr": 0.0, "n": 1, "seed": None}
            )
    else:
        approx = gaussian_approx(wm, prior, cfg.tol)
        for seed in cfg.seeds:
            draws = sample(approx, cfg.n, seed)
            weighted = (
                importance_weights(draws, wm, prior, approx)
                if cfg.method == "importance"
                else None
            )
            for f in outcomes:
                est = (
                    predict_importance(f, weighted)
                    if weighted is not None
                    else mc_average(f, draws)
                )
                row = {"outcome_id": f.name, "method": cfg.method, "estimate": est.estimate,
                       "stderr": est.stderr, "n": cfg.n, "seed": seed}
                if est.n_eff is not None:
                    row["n_eff"] = est.n_eff
                if est.warning:
                    row["warning"] = est.warning
                rows.append(row)
        rows = _seed_summary(rows, "outcome_id")
    _emit_json(cfg, {"rows": rows})


def cmd_simulate(cfg: RunConfig) -> None:
    wm = _load_games(cfg.games)
    prior = Prior.parse(cfg.prior)
    teams = list(wm.teams)
    schedule = parse_schedule(load_json(cfg.schedule), teams)
    queries = parse_queries(load_json(cfg.queries), teams)
    if cfg.method == "map":
        source = FixedStrengths(fit_map(wm, prior, cfg.tol))
    else:
        approx = gaussian_approx(wm, prior, cfg.tol)
        source = (
            GaussianStrengths(approx)
            if cfg.method == "gaussian"
            else ImportanceStrengths(approx, wm, prior)
        )
    rows = []
    for seed in cfg.seeds:
        for est in simulate(schedule, queries, source, cfg.n, seed, base=wm):
            rows.append(est.as_row())
    _emit_json(cfg, {"rows": _seed_summary(rows, "query_id")})


def _load_manifest(path: str):
    base = Path(path).parent
    doc = load_json(path)
    if not isinstance(doc, list) or not doc:
        raise ConfigError("evaluation manifest must be a non-empty JSON list")
    seasons = []
    for k, item in enumerate(doc):
        train_games, teams = ingest_csv(base / item["train"])
        wm = build_win_matrix(train_games, len(teams), teams)
        with open(base / item["eval"], newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            eval_records, names = parse_games(reader, teams)
        if len(names) != len(teams):
            raise DataError(
                f"{item['eval']}: teams without training games: {names[len(teams):]}"
            )
        games = evaluation_games(eval_records, teams)
        seasons.append((str(item.get("label", k + 1)), wm, games))
    return seasons


def cmd_evaluate(cfg: RunConfig) -> None:
    seasons = _load_manifest(cfg.eval_manifest)
    models = [model_tossup(), model_win_ratio(), model_bt_mle(cfg.tol)]
    prior = Prior.parse(cfg.prior)
    if prior.proper:
        models += [model_bt_map_mc(prior, cfg.n, seed) for seed in cfg.seeds]
    rows, summary = [], []
    for k, model in enumerate(models):
        seed = cfg.seeds[k - 3] if k >= 3 else None
        cumulative, log2 = 1.0, 0.0
        impossible = False
        for label, wm, games in seasons:
            result = bayes_factor_vs_tossup(model, wm, games)
            for g in result.trajectory:
                rows.append(
                    {
                        "model": model.name,
                        "seed": seed,
                        "season": label,
                        "label": g.label,
                        "p_win": g.p_win,
                        "cumulative_bayes_factor": cumulative * g.cumulative_bayes_factor,
                        "cumulative_log2": log2 + g.cumulative_log2,
                        "saturated": g.saturated,
                    }
                )
            cumulative *= result.factor
            log2 += result.log2_factor
            impossible |= result.impossible
        summary.append(
            {"model": model.name, "seed": seed, "bayes_factor": cumulative,
             "log2_bayes_factor": log2, "impossible": impossible}
        )
    _emit_json(cfg, {"rows": rows, "summary": summary})


def cmd_diagnose(cfg: RunConfig) -> None:
    wm = _load_games(cfg.games)
    prior = Prior.parse(cfg.prior)
    approx = gaussian_approx(wm, prior, cfg.tol)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dof = approx.t - approx.null_dim
    per_seed = []
    for seed in cfg.seeds:
        draws = sample(approx, cfg.n, seed)
        ws = importance_weights(draws, wm, prior, approx)
        dist = normalized_distance(draws, approx)
        top = int(np.argmax(ws.weights))
        _emit_csv(
            cfg, out / f"weights_seed{seed}.csv", ("weight_lo", "weight_hi", "count"),
            weight_histogram(ws.weights),
        )
        section = cross_section(approx, wm, prior, draws[top])
        _emit_csv(cfg, out / f"cross_section_seed{seed}.csv", CrossSection.COLUMNS, section.rows())
        per_seed.append(
            {
                "seed": seed,
                "n": cfg.n,
                "n_eff": ws.n_eff,
                "mean_weight": 1.0 / cfg.n,
                "max_weight": float(ws.weights[top]),
                "max_weight_distance": float(dist[top]),
                "distance_mean": float(dist.mean()),
                "distance_sd": float(dist.std(ddof=1)),
                "distance_min": float(dist.min()),
                "distance_max": float(dist.max()),
                "squared_distance_mean": float(np.mean(dist**2)),
                "fraction_distance_5_to_10": float(np.mean((dist >= 5) & (dist <= 10))),
            }
        )
    _emit_json(
        cfg,
        {"prior": str(prior), "teams": approx.t, "null_dim": approx.null_dim,
         "degrees_of_freedom": dof, "seeds": per_seed},
        path=str(out / "summary.json"),
    )


HANDLERS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "diagnose": cmd_diagnose,
}


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btpredict", description="Bayesian Bradley-Terry ratings and predictions"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--games", help="game results CSV (date,home,away,outcome)")
        p.add_argument("--prior", default="haldane", help="haldane | logistic:<eta> | gaussian:<sigma>")
        p.add_argument("--method", default="map", choices=METHODS)
        p.add_argument("--n", type=int, default=20000, help="Monte Carlo draws / trials")
        p.add_argument("--seed", type=_seeds, default=[0], dest="seeds", help="comma-separated seeds")
        p.add_argument("--schedule", help="schedule JSON")
        p.add_argument("--queries", help="query / outcome JSON")
        p.add_argument("--eval-manifest", dest="eval_manifest", help="JSON list of {train, eval}")
        p.add_argument("--out", help="output path (directory for diagnose)")
        p.add_argument("--tol", type=float, default=1e-10, help="fit residual tolerance")
    return parser


def run(cfg: RunConfig) -> int:
    cfg.validate()
    HANDLERS[cfg.command](cfg)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(**vars(args))
    try:
        return run(cfg)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        kind = type(exc).__name__
        message = str(exc).replace("\n", " ")
        sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
