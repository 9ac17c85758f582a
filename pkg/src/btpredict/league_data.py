"""Game results: CSV ingestion, pairwise win matrix, MLE existence check.

Ties are credited as half a win to each side, so every game contributes
exactly one unit of win credit.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

CSV_COLUMNS = ("date", "home", "away", "outcome")


class DataError(ValueError):
    """Raised for malformed game files or inconsistent game records."""


class Outcome(enum.Enum):
    HOME_WIN = "H"
    AWAY_WIN = "A"
    TIE = "T"


@dataclass(frozen=True)
class GameRecord:
    date: dt.date | None
    home: int
    away: int
    outcome: Outcome

    def __post_init__(self):
        if self.home == self.away:
            raise DataError(f"team {self.home} cannot play itself")
        if self.home < 0 or self.away < 0:
            raise DataError("team ids must be non-negative")


@dataclass(frozen=True, eq=False)
class WinMatrix:
    """Aggregated pairwise results.

    ``n[i, j]`` is the number of games between ``i`` and ``j`` and
    ``w[i, j]`` the win credit of ``i`` against ``j``. Half-integer credits
    are exact in float64, so no scaling is needed.
    """

    n: np.ndarray
    w: np.ndarray
    teams: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if n.ndim != 2 or n.shape[0] != n.shape[1] or w.shape != n.shape:
            raise DataError("n and w must be square matrices of the same shape")
        if np.any(n < 0) or np.any(w < 0):
            raise DataError("game and win counts must be non-negative")
        if not np.array_equal(n, n.T) or np.any(np.diag(n) != 0):
            raise DataError("n must be symmetric with a zero diagonal")
        if not np.allclose(w + w.T, n, rtol=0, atol=1e-12):
            raise DataError("w[i, j] + w[j, i] must equal n[i, j]")
        if self.teams is not None and len(self.teams) != n.shape[0]:
            raise DataError("team name list does not match matrix size")
        n.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "w", w)

    def __eq__(self, other):
        if not isinstance(other, WinMatrix):
            return NotImplemented
        return np.array_equal(self.n, other.n) and np.array_equal(self.w, other.w)

    __hash__ = None

    @property
    def t(self) -> int:
        return self.n.shape[0]

    @property
    def v(self) -> np.ndarray:
        """Total win credit per team."""
        return self.w.sum(axis=1)

    @property
    def games_played(self) -> np.ndarray:
        return self.n.sum(axis=1)

    def team_name(self, i: int) -> str:
        return self.teams[i] if self.teams is not None else str(i)

    def team_index(self, name: str) -> int:
        if self.teams is None:
            return int(name)
        try:
            return self.teams.index(name)
        except ValueError:
            raise DataError(f"unknown team {name!r}") from None

    def plus(self, other: "WinMatrix") -> "WinMatrix":
        return WinMatrix(self.n + other.n, self.w + other.w, self.teams)

    @classmethod
    def empty(cls, t: int, teams: Sequence[str] | None = None) -> "WinMatrix":
        z = np.zeros((t, t))
        return cls(z, z.copy(), tuple(teams) if teams is not None else None)


@dataclass(frozen=True)
class MLECheck:
    exists: bool
    partition: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    message: str = ""

    def __bool__(self):
        return self.exists


def _parse_date(text: str, row: int) -> dt.date | None:
    text = text.strip()
    if not text:
        return None
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise DataError(f"row {row}: bad date {text!r}") from None


def parse_games(
    rows: Iterable[Sequence[str]], teams: list[str] | None = None
) -> tuple[list[GameRecord], list[str]]:
    """Parse ``(date, home, away, outcome)`` rows, header excluded.

    Row numbers in error messages count the header as row 1. ``teams`` seeds
    the name table; new names are appended in first-appearance order.
    """
    teams = list(teams) if teams is not None else []
    index = {name: i for i, name in enumerate(teams)}
    games = []
    for rownum, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_COLUMNS):
            raise DataError(f"row {rownum}: expected 4 fields, got {len(row)}")
        if tuple(c.strip() for c in row) == CSV_COLUMNS:
            raise DataError(f"row {rownum}: duplicate header")
        date, home, away, token = (c.strip() for c in row)
        if not home or not away:
            raise DataError(f"row {rownum}: missing team name")
        try:
            outcome = Outcome(token.upper())
        except ValueError:
            raise DataError(f"row {rownum}: unknown outcome {token!r}") from None
        if home == away:
            raise DataError(f"row {rownum}: {home!r} cannot play itself")
        ids = []
        for name in (home, away):
            if name not in index:
                index[name] = len(teams)
                teams.append(name)
            ids.append(index[name])
        games.append(GameRecord(_parse_date(date, rownum), ids[0], ids[1], outcome))
    return games, teams


def ingest_csv(
    path: str | Path, teams: list[str] | None = None
) -> tuple[list[GameRecord], list[str]]:
    """Read a ``date,home,away,outcome`` file.

    Returns the games and the team-name table (index = TeamId).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file, header required")
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column in header {header}")
        if tuple(header) != CSV_COLUMNS:
            raise DataError(f"{path}: header must be {','.join(CSV_COLUMNS)}")
        try:
            return parse_games(reader, teams)
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None


def build_win_matrix(
    games: Iterable[GameRecord], t: int, teams: Sequence[str] | None = None
) -> WinMatrix:
    n = np.zeros((t, t))
    w = np.zeros((t, t))
    for g in games:
        if g.home >= t or g.away >= t:
            raise DataError(f"team id out of range for t={t}: {g}")
        i, j = g.home, g.away
        n[i, j] += 1
        n[j, i] += 1
        if g.outcome is Outcome.HOME_WIN:
            w[i, j] += 1
        elif g.outcome is Outcome.AWAY_WIN:
            w[j, i] += 1
        else:
            w[i, j] += 0.5
            w[j, i] += 0.5
    return WinMatrix(n, w, tuple(teams) if teams is not None else None)


def check_mle_exists(wm: WinMatrix) -> MLECheck:
    """Whether finite maximum-likelihood log-strengths exist.

    They do iff the directed graph with an edge ``i -> j`` whenever ``i`` has
    win credit against ``j`` is strongly connected. On failure the diagnostic
    partition ``(A, B)`` has no win credit from ``B`` against ``A``.
    """
    if wm.t < 2:
        raise DataError("need at least two teams")
    graph = csr_matrix((wm.w > 0).astype(np.int8))
    ncomp, labels = connected_components(graph, directed=True, connection="strong")
    if ncomp == 1:
        return MLECheck(True)
    # a sink component in the condensation never beats anyone outside it
    adj = wm.w > 0
    for c in range(ncomp):
        inside = labels == c
        if not adj[np.ix_(inside, ~inside)].any():
            sink = tuple(int(i) for i in np.flatnonzero(inside))
            rest = tuple(int(i) for i in np.flatnonzero(~inside))
            names = ", ".join(wm.team_name(i) for i in sink)
            return MLECheck(
                False,
                (rest, sink),
                f"teams [{names}] have no win credit against the other "
                f"{len(rest)} team(s); maximum-likelihood estimates diverge",
            )
    raise AssertionError("condensation of a finite digraph has a sink")
