"""Monte Carlo simulation of the rest of a season.

Each trial fixes one log-strength vector (the MAP point, a Gaussian draw,
or an importance-weighted Gaussian draw) and plays every scheduled event
with it, in dependency order. Events may take their participants from
earlier results (winner or loser of an event, or a standings position).
Outcome queries are tallied over trials, with importance weights when
present.

Trials are processed as arrays: one event is resolved for all trials at
once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import expit

from .laplace import GaussianApprox, WeightedSamples, importance_weights, sample
from .league_data import WinMatrix
from .ratings import LogStrengths, Prior

DEFAULT_N = 20000


class ScheduleError(ValueError):
    pass


# -- schedule -------------------------------------------------------------


@dataclass(frozen=True)
class Team:
    index: int


@dataclass(frozen=True)
class WinnerOf:
    event: str


@dataclass(frozen=True)
class LoserOf:
    event: str


@dataclass(frozen=True)
class RankOf:
    """The team in position ``k`` (1-based) of the standings.

    Standings use the base results plus the events in ``after`` (``None``
    means every event listed before this one). ``among`` restricts the
    ranking to a group of teams, e.g. a conference.
    """

    k: int
    among: tuple[int, ...] | None = None
    after: tuple[str, ...] | None = None
    ranking: str = "points"


Participant = Union[Team, WinnerOf, LoserOf, RankOf]


@dataclass(frozen=True)
class ScheduleEvent:
    id: str
    home: Participant
    away: Participant
    best_of: int = 1

    def __post_init__(self):
        if self.best_of < 1 or self.best_of % 2 == 0:
            raise ScheduleError(f"event {self.id!r}: best-of must be a positive odd number")

    @property
    def format(self) -> str:
        return "single-game" if self.best_of == 1 else f"best-of-{self.best_of}"


def _dependencies(ev: ScheduleEvent, earlier: list[str]) -> list[str]:
    deps = []
    for p in (ev.home, ev.away):
        if isinstance(p, (WinnerOf, LoserOf)):
            deps.append(p.event)
        elif isinstance(p, RankOf):
            deps.extend(earlier if p.after is None else p.after)
    return deps


def order_events(schedule: Sequence[ScheduleEvent]) -> list[ScheduleEvent]:
    """Dependency order, keeping input order where free. Rejects cycles."""
    by_id = {}
    for ev in schedule:
        if ev.id in by_id:
            raise ScheduleError(f"duplicate event id {ev.id!r}")
        by_id[ev.id] = ev
    deps = {}
    seen = []
    for ev in schedule:
        d = _dependencies(ev, list(seen))
        for ref in d:
            if ref not in by_id:
                raise ScheduleError(f"event {ev.id!r} refers to unknown event {ref!r}")
            if ref == ev.id:
                raise ScheduleError(f"event {ev.id!r} refers to itself")
        deps[ev.id] = set(d)
        seen.append(ev.id)
    done: list[ScheduleEvent] = []
    placed: set[str] = set()
    pending = list(schedule)
    while pending:
        for k, ev in enumerate(pending):
            if deps[ev.id] <= placed:
                done.append(ev)
                placed.add(ev.id)
                del pending[k]
                break
        else:
            raise ScheduleError(
                "schedule has a dependency cycle among " + ", ".join(e.id for e in pending)
            )
    return done


# -- standings ------------------------------------------------------------


def ranking_points(results: WinMatrix, among: Sequence[int] | None = None) -> list[int]:
    """Reference standings: points, then points fraction, head-to-head, id.

    A win is 2 points, a tie 1 (so points are twice the win credit). Teams
    level on points and fraction are split by win credit against each other,
    then by lower team id.
    """
    return _rank(results.n, results.w, among)


def _rank(n: np.ndarray, w: np.ndarray, among=None) -> list[int]:
    teams = list(range(n.shape[0])) if among is None else [int(i) for i in among]
    points = 2.0 * w.sum(axis=1)
    played = n.sum(axis=1)
    frac = np.divide(points, 2.0 * played, out=np.zeros_like(points), where=played > 0)
    teams.sort(key=lambda i: (-points[i], -frac[i], i))
    out: list[int] = []
    k = 0
    while k < len(teams):
        m = k + 1
        key = (points[teams[k]], frac[teams[k]])
        while m < len(teams) and (points[teams[m]], frac[teams[m]]) == key:
            m += 1
        group = teams[k:m]
        if len(group) > 1:
            h2h = {i: sum(w[i, j] for j in group) for i in group}
            group = sorted(group, key=lambda i: (-h2h[i], i))
        out.extend(group)
        k = m
    return out


@dataclass(frozen=True)
class RankingRule:
    """Orders teams from a season's results; winners of ``auto_bids`` qualify."""

    name: str
    rank: Callable[..., list[int]]
    auto_bids: tuple[str, ...] = ()


POINTS = RankingRule("points", ranking_points)


# -- single-trial resolution -------------------------------------------------


@dataclass(frozen=True)
class EventResult:
    winner: int
    loser: int
    games: list[bool]  # True where the first (home) team won


def resolve_event(home: int, away: int, best_of: int, theta, rng) -> EventResult:
    """Play one event: the home team wins a game when a uniform draw is below theta.

    ``theta`` is a probability or a function ``theta(home, away)``; ``rng``
    needs a ``random()`` method.
    """
    p = theta(home, away) if callable(theta) else float(theta)
    need = (best_of + 1) // 2
    games: list[bool] = []
    while games.count(True) < need and games.count(False) < need:
        games.append(bool(rng.random() < p))
    if games.count(True) == need:
        return EventResult(home, away, games)
    return EventResult(away, home, games)


# -- trials -----------------------------------------------------------------


@dataclass
class EventOutcomes:
    """Per-trial results of one event; games are 1/0 for home win/loss, -1 unplayed."""

    home: np.ndarray
    away: np.ndarray
    games: np.ndarray
    winner: np.ndarray
    loser: np.ndarray
    home_wins: np.ndarray = field(init=False, repr=False)
    away_wins: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.home_wins = (self.games == 1).sum(axis=1)
        self.away_wins = (self.games == 0).sum(axis=1)


@dataclass
class Trials:
    n: int
    lam: np.ndarray
    base: WinMatrix
    events: dict[str, EventOutcomes] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    rankings: dict[str, RankingRule] = field(default_factory=dict)
    _standings: dict = field(default_factory=dict, repr=False)

    def results(self, s: int, upto: Sequence[str] | None = None) -> WinMatrix:
        """Base results plus simulated games of trial ``s``."""
        n = np.array(self.base.n)
        w = np.array(self.base.w)
        for eid in self.order if upto is None else upto:
            ev = self.events[eid]
            h, a = ev.home[s], ev.away[s]
            hw, aw = ev.home_wins[s], ev.away_wins[s]
            n[h, a] += hw + aw
            n[a, h] += hw + aw
            w[h, a] += hw
            w[a, h] += aw
        return WinMatrix(n, w, self.base.teams)

    def standings(self, ranking: str = "points", among=None) -> list[list[int]]:
        """Final standings for every trial (cached)."""
        key = (ranking, None if among is None else tuple(among))
        if key not in self._standings:
            rule = self.rankings[ranking]
            self._standings[key] = [rule.rank(self.results(s), among) for s in range(self.n)]
        return self._standings[key]


def _play(lam: np.ndarray, home: np.ndarray, away: np.ndarray, best_of: int, u: np.ndarray):
    rows = np.arange(home.size)
    if lam.ndim == 1:
        theta = expit(lam[home] - lam[away])
    else:
        theta = expit(lam[rows, home] - lam[rows, away])
    hw = u < theta[:, None]
    need = (best_of + 1) // 2
    cum_h = np.cumsum(hw, axis=1)
    cum_a = np.cumsum(~hw, axis=1)
    decided = np.argmax((cum_h == need) | (cum_a == need), axis=1)
    played = np.arange(best_of)[None, :] <= decided[:, None]
    games = np.where(played, hw.astype(np.int8), np.int8(-1))
    home_won = cum_h[rows, decided] == need
    winner = np.where(home_won, home, away)
    loser = np.where(home_won, away, home)
    return EventOutcomes(home, away, games, winner, loser)


def _participants(p: Participant, trials: Trials, earlier: list[str]) -> np.ndarray:
    if isinstance(p, Team):
        return np.full(trials.n, p.index)
    if isinstance(p, WinnerOf):
        return trials.events[p.event].winner
    if isinstance(p, LoserOf):
        return trials.events[p.event].loser
    rule = trials.rankings[p.ranking]
    upto = earlier if p.after is None else list(p.after)
    out = np.empty(trials.n, dtype=int)
    for s in range(trials.n):
        order = rule.rank(trials.results(s, upto), p.among)
        if p.k > len(order):
            raise ScheduleError(f"rank {p.k} requested but only {len(order)} teams ranked")
        out[s] = order[p.k - 1]
    return out


def play_schedule(
    schedule: Sequence[ScheduleEvent],
    lam: np.ndarray,
    n: int,
    seed: int,
    base: WinMatrix,
    rankings: dict[str, RankingRule] | None = None,
) -> Trials:
    """Resolve every event for ``n`` trials.

    ``lam`` is a single vector shared by all trials or an ``(n, t)`` array
    with one row per trial.
    """
    ordered = order_events(schedule)
    trials = Trials(n, lam, base, rankings={"points": POINTS, **(rankings or {})})
    for k, ev in enumerate(ordered):
        home = _participants(ev.home, trials, trials.order)
        away = _participants(ev.away, trials, trials.order)
        for side in (home, away):
            if np.any((side < 0) | (side >= base.t)):
                raise ScheduleError(f"event {ev.id!r}: team id out of range")
        if np.any(home == away):
            raise ScheduleError(f"event {ev.id!r}: a team would play itself")
        ss = np.random.SeedSequence([seed, 1], spawn_key=(k,))
        u = np.random.Generator(np.random.PCG64(ss)).random((n, ev.best_of))
        trials.events[ev.id] = _play(lam, home, away, ev.best_of, u)
        trials.order.append(ev.id)
    return trials


# -- queries ------------------------------------------------------------------


@dataclass(frozen=True)
class OutcomeQuery:
    """An event whose probability is estimated.

    ``predicate(trials)`` returns one 0/1 indicator per trial. With
    ``per_trial=True`` it is instead called as ``predicate(trials, s)`` for
    each trial ``s``.
    """

    id: str
    predicate: Callable
    per_trial: bool = False

    def indicators(self, trials: Trials) -> np.ndarray:
        if self.per_trial:
            out = np.array([self.predicate(trials, s) for s in range(trials.n)])
        else:
            out = np.asarray(self.predicate(trials))
        return out.astype(float)


def wins_event(qid: str, event: str, team: int) -> OutcomeQuery:
    return OutcomeQuery(qid, lambda tr: tr.events[event].winner == team)


def wins_game(qid: str, event: str, team: int, game: int = 1) -> OutcomeQuery:
    """``team`` takes part in ``event`` and wins its ``game``-th game (1-based)."""

    def predicate(tr: Trials):
        ev = tr.events[event]
        if not 1 <= game <= ev.games.shape[1]:
            raise ScheduleError(f"event {event!r} has no game {game}")
        g = ev.games[:, game - 1]
        return ((ev.home == team) & (g == 1)) | ((ev.away == team) & (g == 0))

    return OutcomeQuery(qid, predicate)


def ranked_top_k(
    qid: str, team: int, k: int, among=None, ranking: str = "points"
) -> OutcomeQuery:
    def predicate(tr: Trials):
        return np.array([team in order[:k] for order in tr.standings(ranking, among)])

    return OutcomeQuery(qid, predicate)


def qualifies(
    qid: str,
    team: int,
    field_size: int,
    auto_bids: Sequence[str] = (),
    ranking: str = "points",
) -> OutcomeQuery:
    """Team is in a field made of auto-bid event winners filled up from the standings."""

    def predicate(tr: Trials):
        standings = tr.standings(ranking)
        out = np.zeros(tr.n, dtype=bool)
        for s in range(tr.n):
            field_ = {int(tr.events[e].winner[s]) for e in auto_bids}
            for i in standings[s]:
                if len(field_) >= field_size:
                    break
                field_.add(i)
            out[s] = team in field_
        return out

    return OutcomeQuery(qid, predicate)


# -- strength sources ---------------------------------------------------------


@dataclass(frozen=True)
class FixedStrengths:
    ls: LogStrengths
    method: str = "map"

    def draw(self, n: int, seed: int):
        return self.ls.lam, np.full(n, 1.0 / n)


@dataclass(frozen=True)
class GaussianStrengths:
    approx: GaussianApprox
    method: str = "gaussian"

    def draw(self, n: int, seed: int):
        return sample(self.approx, n, seed), np.full(n, 1.0 / n)


@dataclass(frozen=True)
class ImportanceStrengths:
    approx: GaussianApprox
    wm: WinMatrix
    prior: Prior
    log_target: Callable | None = None
    method: str = "importance"

    def draw(self, n: int, seed: int):
        lam = sample(self.approx, n, seed)
        ws = importance_weights(lam, self.wm, self.prior, self.approx, self.log_target)
        return lam, ws.weights


@dataclass(frozen=True)
class SampleStrengths:
    """Precomputed draws (with weights) reused as the trial strengths."""

    samples: WeightedSamples
    method: str = "samples"

    def draw(self, n: int, seed: int):
        if n != len(self.samples):
            raise ValueError(f"have {len(self.samples)} samples, {n} trials requested")
        return self.samples.lam, self.samples.weights


StrengthSource = Union[FixedStrengths, GaussianStrengths, ImportanceStrengths, SampleStrengths]


@dataclass(frozen=True)
class QueryEstimate:
    query_id: str
    method: str
    estimate: float
    stderr: float
    n: int
    seed: int
    count: int
    n_eff: float

    def as_row(self) -> dict:
        return {
            "query_id": self.query_id,
            "method": self.method,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n": self.n,
            "seed": self.seed,
        }


def tally(indicators: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Weighted indicator fraction and its standard error."""
    n = indicators.size
    if np.all(weights == weights[0]):
        # exact count / n, so certain events give exactly 1
        p = float(indicators.sum() / n)
        err = float(np.std(indicators, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    else:
        p = min(max(float(np.dot(weights, indicators)), 0.0), 1.0)
        err = float(math.sqrt(np.sum(weights**2 * (indicators - p) ** 2)))
    return p, err


def simulate(
    schedule: Sequence[ScheduleEvent],
    queries: Sequence[OutcomeQuery],
    strengths: StrengthSource,
    n: int = DEFAULT_N,
    seed: int = 0,
    base: WinMatrix | None = None,
    rankings: dict[str, RankingRule] | None = None,
) -> list[QueryEstimate]:
    """Estimate each query's probability over ``n`` simulated trials.

    ``base`` holds results already played (used by standings); it defaults
    to an empty record for the teams in ``strengths``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lam, weights = strengths.draw(n, seed)
    t = lam.shape[-1]
    if base is None:
        base = WinMatrix.empty(t)
    elif base.t != t:
        raise ValueError("base results and strengths disagree on the number of teams")
    trials = play_schedule(schedule, lam, n, seed, base, rankings)
    n_eff = float(1.0 / np.sum(weights**2))
    out = []
    for q in queries:
        ind = q.indicators(trials)
        p, err = tally(ind, weights)
        out.append(
            QueryEstimate(q.id, strengths.method, p, err, n, seed, int(ind.sum()), n_eff)
        )
    return out


# -- JSON formats --------------------------------------------------------------


def _team(name, teams: Sequence[str] | None) -> int:
    if teams is None:
        return int(name)
    try:
        return list(teams).index(name)
    except ValueError:
        raise ScheduleError(f"unknown team {name!r}") from None


def _participant(obj, teams) -> Participant:
    if not isinstance(obj, dict) or len(obj) == 0:
        raise ScheduleError(f"bad participant {obj!r}")
    if "team" in obj:
        return Team(_team(obj["team"], teams))
    if "winner_of" in obj:
        return WinnerOf(str(obj["winner_of"]))
    if "loser_of" in obj:
        return LoserOf(str(obj["loser_of"]))
    if "rank" in obj:
        among = obj.get("among")
        after = obj.get("after")
        return RankOf(
            int(obj["rank"]),
            None if among is None else tuple(_team(a, teams) for a in among),
            None if after is None else tuple(str(a) for a in after),
            obj.get("ranking", "points"),
        )
    raise ScheduleError(f"bad participant {obj!r}")


def _best_of(fmt) -> int:
    if fmt is None or fmt in ("single-game", "single"):
        return 1
    if isinstance(fmt, str) and fmt.startswith("best-of-"):
        try:
            return int(fmt[len("best-of-") :])
        except ValueError:
            pass
    raise ScheduleError(f"bad event format {fmt!r}")


def parse_schedule(doc, teams: Sequence[str] | None = None) -> list[ScheduleEvent]:
    """Schedule from its JSON form: a list of ``{id, home, away, format}``."""
    if not isinstance(doc, list):
        raise ScheduleError("schedule must be a JSON list")
    events = []
    for item in doc:
        try:
            events.append(
                ScheduleEvent(
                    str(item["id"]),
                    _participant(item["home"], teams),
                    _participant(item["away"], teams),
                    _best_of(item.get("format")),
                )
            )
        except KeyError as exc:
            raise ScheduleError(f"schedule entry missing {exc}") from None
    order_events(events)
    return events


def parse_queries(doc, teams: Sequence[str] | None = None) -> list[OutcomeQuery]:
    """Queries from ``{id, kind, args}`` records.

    Kinds: ``wins_event`` (event, team), ``wins_game`` (event, team, game),
    ``ranked_top_k`` (team, k, among), ``qualifies`` (team, field_size,
    auto_bids).
    """
    if not isinstance(doc, list):
        raise ScheduleError("queries must be a JSON list")
    out = []
    for item in doc:
        qid, kind, args = str(item["id"]), item["kind"], dict(item.get("args", {}))
        team = _team(args["team"], teams)
        if kind == "wins_event":
            out.append(wins_event(qid, str(args["event"]), team))
        elif kind == "wins_game":
            out.append(wins_game(qid, str(args["event"]), team, int(args.get("game", 1))))
        elif kind == "ranked_top_k":
            among = args.get("among")
            among = None if among is None else tuple(_team(a, teams) for a in among)
            out.append(ranked_top_k(qid, team, int(args["k"]), among))
        elif kind == "qualifies":
            out.append(
                qualifies(qid, team, int(args["field_size"]), tuple(args.get("auto_bids", ())))
            )
        else:
            raise ScheduleError(f"unknown query kind {kind!r}")
    return out


def load_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
