"""Season-level hitting records: ingest, covariate encoding and dataset filters."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

POSITIONS: tuple[str, ...] = ("1B", "2B", "3B", "SS", "LF", "CF", "RF", "C", "DH")
POSITION_INDEX: dict[str, int] = {p: i for i, p in enumerate(POSITIONS)}

REQUIRED_COLUMNS: tuple[str, ...] = ("player_id", "year", "hr", "ab", "age", "park", "position")


class IngestError(ValueError):
    """Base class for problems with an input table."""


class SchemaError(IngestError):
    pass


class DataError(IngestError):
    pass


@dataclass(frozen=True)
class PlayerSeason:
    player_id: str
    year: int
    hr: int
    ab: int
    age: int
    park: int
    position: int

    @property
    def position_label(self) -> str:
        return POSITIONS[self.position]


@dataclass(frozen=True)
class IngestConfig:
    year_min: int | None = None
    year_max: int | None = None
    min_ab: int = 1
    age_min: int = 20
    age_max: int = 49
    delimiter: str = ","


@dataclass(frozen=True)
class Dataset:
    """Player-seasons sorted by player id, then year.

    ``parks`` maps park index to park name; park indices were assigned in
    lexicographic order of the names.
    """

    seasons: tuple[PlayerSeason, ...]
    parks: tuple[str, ...]
    positions: tuple[str, ...] = POSITIONS
    _park_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_park_index", {p: i for i, p in enumerate(self.parks)})
        prev = None
        for s in self.seasons:
            if not 0 <= s.park < len(self.parks):
                raise DataError(f"park index {s.park} for {s.player_id} {s.year} not in park table")
            if not 0 <= s.position < len(self.positions):
                raise DataError(f"position index {s.position} for {s.player_id} {s.year} out of range")
            if prev is not None:
                if s.player_id < prev.player_id or (
                    s.player_id == prev.player_id and s.year <= prev.year
                ):
                    raise DataError(
                        f"seasons not in (player, strictly increasing year) order at {s.player_id} {s.year}"
                    )
            prev = s

    def park_index(self, name: str) -> int:
        return self._park_index[name]

    def has_park(self, name: str) -> bool:
        return name in self._park_index

    @property
    def n_seasons(self) -> int:
        return len(self.seasons)

    @property
    def n_parks(self) -> int:
        return len(self.parks)

    @cached_property
    def player_ids(self) -> tuple[str, ...]:
        out: list[str] = []
        for s in self.seasons:
            if not out or out[-1] != s.player_id:
                out.append(s.player_id)
        return tuple(out)

    @property
    def n_players(self) -> int:
        return len(self.player_ids)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Row offsets: player ``i`` owns rows ``offsets[i]:offsets[i+1]``."""
        starts = [0]
        for i in range(1, len(self.seasons)):
            if self.seasons[i].player_id != self.seasons[i - 1].player_id:
                starts.append(i)
        if self.seasons:
            starts.append(len(self.seasons))
        return np.asarray(starts if self.seasons else [0], dtype=np.int64)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def player_seasons(self, player_id: str) -> tuple[PlayerSeason, ...]:
        i = self.player_row(player_id)
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return self.seasons[lo:hi]

    def player_row(self, player_id: str) -> int:
        try:
            return self._player_lookup[player_id]
        except KeyError:
            raise KeyError(f"player {player_id!r} not in dataset") from None

    @cached_property
    def _player_lookup(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.player_ids)}

    def __contains__(self, player_id: object) -> bool:
        return player_id in self._player_lookup

    @property
    def year_range(self) -> tuple[int, int] | None:
        if not self.seasons:
            return None
        years = [s.year for s in self.seasons]
        return min(years), max(years)

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        """Column arrays in row order."""
        return {
            "year": np.array([s.year for s in self.seasons], dtype=np.int64),
            "hr": np.array([s.hr for s in self.seasons], dtype=np.int64),
            "ab": np.array([s.ab for s in self.seasons], dtype=np.int64),
            "age": np.array([s.age for s in self.seasons], dtype=np.float64),
            "park": np.array([s.park for s in self.seasons], dtype=np.int64),
            "position": np.array([s.position for s in self.seasons], dtype=np.int64),
            "player": np.repeat(np.arange(self.n_players), self.group_sizes),
        }

    def subset(self, player_ids: Iterable[str]) -> "Dataset":
        """Keep only the given players. The park table is rebuilt from what remains."""
        keep = set(player_ids)
        rows = [s for s in self.seasons if s.player_id in keep]
        used = sorted({self.parks[s.park] for s in rows})
        index = {p: i for i, p in enumerate(used)}
        rows = [
            PlayerSeason(s.player_id, s.year, s.hr, s.ab, s.age, index[self.parks[s.park]], s.position)
            for s in rows
        ]
        return Dataset(tuple(rows), tuple(used))

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_seasons(self).encode()).hexdigest()[:16]


def build_dataset(rows: Iterable[tuple[str, int, int, int, int, str, int]]) -> Dataset:
    """Build a Dataset from ``(player_id, year, hr, ab, age, park_name, position_index)``."""
    rows = sorted(rows, key=lambda r: (r[0], r[1]))
    parks = tuple(sorted({r[5] for r in rows}))
    index = {p: i for i, p in enumerate(parks)}
    seen = set()
    seasons = []
    for pid, year, hr, ab, age, park, pos in rows:
        if (pid, year) in seen:
            raise DataError(f"duplicate player-year ({pid}, {year})")
        seen.add((pid, year))
        seasons.append(PlayerSeason(pid, int(year), int(hr), int(ab), int(age), index[park], int(pos)))
    return Dataset(tuple(seasons), parks)


def _parse_int(value: str, column: str, line: int) -> int:
    try:
        return int(value.strip())
    except ValueError:
        try:
            f = float(value)
        except ValueError:
            raise DataError(f"line {line}: cannot parse {column}={value!r} as a number") from None
        if not f.is_integer():
            raise DataError(f"line {line}: {column}={value!r} is not an integer") from None
        return int(f)


def _data_lines(handle):
    for line in handle:
        if not line.startswith("#"):
            yield line


def read_table(path: str | Path, delimiter: str = ",") -> tuple[list[str], list[tuple[int, dict[str, str]]]]:
    """Read a delimited file, skipping ``#`` comment lines.

    Returns the header and ``(line_number, row)`` pairs, where line numbers
    count every physical line of the file.
    """
    with open(path, newline="") as fh:
        lines = fh.read().splitlines(keepends=True)
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if not ln.startswith("#") and ln.strip()]
    if not numbered:
        raise SchemaError(f"{path}: no header line")
    reader = csv.reader([ln for _, ln in numbered], delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    out = []
    for (lineno, _), values in zip(numbered[1:], reader):
        if len(values) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(values)}")
        out.append((lineno, dict(zip(header, values))))
    return header, out


def check_columns(header: Sequence[str], required: Sequence[str], path) -> None:
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing required column {col!r}")


def parse_row(lineno: int, row: dict[str, str]) -> tuple[str, int, int, int, int, str, str]:
    pid = row["player_id"].strip()
    year = _parse_int(row["year"], "year", lineno)
    hr = _parse_int(row["hr"], "hr", lineno)
    ab = _parse_int(row["ab"], "ab", lineno)
    age = _parse_int(row["age"], "age", lineno)
    if hr < 0 or ab < 0:
        raise DataError(f"line {lineno}: negative count for {pid} {year}")
    if hr > ab:
        raise DataError(f"line {lineno}: hr={hr} exceeds ab={ab} for {pid} {year}")
    return pid, year, hr, ab, age, row["park"].strip(), row["position"].strip().upper()


def load_seasons(path: str | Path, config: IngestConfig | None = None) -> Dataset:
    """Load player-seasons from a delimited file.

    Pitchers and any other position outside the nine hitting positions are
    dropped, as are rows outside the year window, rows with fewer than
    ``config.min_ab`` at-bats (always including ``ab == 0``) and rows whose
    age falls outside the admissible range.
    """
    config = config or IngestConfig()
    header, rows = read_table(path, config.delimiter)
    check_columns(header, REQUIRED_COLUMNS, path)
    kept = []
    dropped = {"position": 0, "window": 0, "ab": 0, "age": 0}
    for lineno, row in rows:
        pid, year, hr, ab, age, park, pos = parse_row(lineno, row)
        if pos not in POSITION_INDEX:
            dropped["position"] += 1
            continue
        if (config.year_min is not None and year < config.year_min) or (
            config.year_max is not None and year > config.year_max
        ):
            dropped["window"] += 1
            continue
        if ab == 0 or ab < config.min_ab:
            dropped["ab"] += 1
            continue
        if not config.age_min <= age <= config.age_max:
            dropped["age"] += 1
            continue
        kept.append((pid, year, hr, ab, age, park, POSITION_INDEX[pos]))
    if dropped["age"]:
        log.warning("%s: dropped %d rows with age outside [%d, %d]",
                    path, dropped["age"], config.age_min, config.age_max)
    log.info("%s: kept %d rows, dropped %s", path, len(kept), dropped)
    return build_dataset(kept)


def dumps_seasons(d: Dataset, delimiter: str = ",") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(REQUIRED_COLUMNS)
    for s in d.seasons:
        w.writerow([s.player_id, s.year, s.hr, s.ab, s.age, d.parks[s.park], POSITIONS[s.position]])
    return buf.getvalue()


def write_seasons(d: Dataset, path: str | Path, delimiter: str = ",") -> None:
    Path(path).write_text(dumps_seasons(d, delimiter))


def elite_hitter_filter(d: Dataset, min_ab: int = 300, min_rate: float = 1 / 40) -> Dataset:
    """Players with at least one season of ``ab >= min_ab`` and ``hr/ab >= min_rate``.

    All seasons of a retained player are kept.
    """
    keep = {s.player_id for s in d.seasons if s.ab >= min_ab and s.hr >= min_rate * s.ab}
    return d.subset(keep)


def split_by_age(predictions: Sequence, cutoff: int = 26, key=None) -> tuple[list, list]:
    """Partition into (age <= cutoff, age > cutoff).

    Entries need an ``age`` attribute or key unless ``key`` is given.
    """
    if key is None:
        def key(p):
            return p["age"] if isinstance(p, dict) else p.age
    young, old = [], []
    for p in predictions:
        (young if key(p) <= cutoff else old).append(p)
    return young, old


@dataclass(frozen=True)
class TargetSeason:
    """A hold-out row: the season to forecast, plus the truth and any external forecasts."""

    player_id: str
    year: int
    hr: int
    ab: int
    age: int
    park: str
    position: int
    external: dict[str, float] = field(default_factory=dict)


def load_holdout(
    path: str | Path,
    config: IngestConfig | None = None,
    external: Sequence[str] = (),
    skipped: list | None = None,
) -> list[TargetSeason]:
    """Load hold-out seasons; the same format as training data plus optional
    numeric columns named in ``external``. Missing external values are NaN.

    When ``skipped`` is a list, rows with a blank covariate (age, park,
    position or at-bats) are recorded there as ``(player_id, reason)``
    instead of raising.
    """
    config = config or IngestConfig()
    header, rows = read_table(path, config.delimiter)
    check_columns(header, REQUIRED_COLUMNS, path)
    for col in external:
        if col not in header:
            raise SchemaError(f"{path}: missing external prediction column {col!r}")
    out = []
    seen = set()
    for lineno, row in rows:
        if skipped is not None:
            blank = [c for c in ("age", "park", "position", "ab") if row[c].strip() in ("", "NA")]
            if blank:
                skipped.append((row["player_id"].strip(), f"line {lineno}: missing {', '.join(blank)}"))
                continue
        pid, year, hr, ab, age, park, pos = parse_row(lineno, row)
        if pos not in POSITION_INDEX:
            continue
        if (pid, year) in seen:
            raise DataError(f"line {lineno}: duplicate player-year ({pid}, {year})")
        seen.add((pid, year))
        ext = {}
        for col in external:
            raw = row[col].strip()
            if raw == "" or raw.upper() == "NA":
                ext[col] = float("nan")
            else:
                try:
                    ext[col] = float(raw)
                except ValueError:
                    raise DataError(f"line {lineno}: cannot parse {col}={raw!r} as a number") from None
        out.append(TargetSeason(pid, year, hr, ab, age, park, POSITION_INDEX[pos], ext))
    out.sort(key=lambda t: (t.player_id, t.year))
    return out
