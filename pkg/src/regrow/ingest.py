"""Parse, validate, join, and filter the input tables.

File formats (UTF-8 CSV with a header row, `.` decimal point):

- embeddings.csv        id,year,A00,...  (dimension = number of A-columns)
- sites.csv             site_id,lon,lat,area_ha,start_year,strategy,start_lulc
- spectral.csv          id,year,ndvi,evi
- covariates.csv        id,year,precip_mm,tmin_c,tmax_c,et_mm,elevation_m,
                        slope_deg,aspect_deg,forest_cover_2km,road_density_5km
- reference_points.csv  point_id,lon,lat,lulc_<Y> for each configured year Y
- lulc_codes.csv        code,name

Loading is order-independent: outputs are keyed or sorted by id, so a
shuffled input yields an identical Dataset.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    CovariateSet,
    EmbeddingVector,
    LULCClass,
    ReferencePoint,
    SiteRecord,
    SpectralIndices,
    parse_strategy,
    validate_embedding,
)
from .errors import (
    CsvParseError,
    DuplicateKeyError,
    InvalidValueError,
    MissingColumnError,
    MissingMetadataFieldError,
    MissingYearColumnError,
)

log = logging.getLogger("regrow.ingest")

DEFAULT_LULC_YEARS = (2015, 2024)


class LULCCodeMap:
    """Bijective code<->name mapping for known classes.

    Unknown codes are mapped to Other(code) and a warning is logged; they
    are never dropped silently.
    """

    def __init__(self, entries: Mapping[int, str]):
        self._by_code: dict[int, LULCClass] = {}
        self._by_name: dict[str, LULCClass] = {}
        for code, name in sorted(entries.items()):
            if name in self._by_name:
                raise InvalidValueError(f"duplicate LULC name in code table: {name!r}")
            cls = LULCClass(name, code)
            self._by_code[code] = cls
            self._by_name[name] = cls

    def class_for_code(self, code: int) -> LULCClass:
        cls = self._by_code.get(code)
        if cls is None:
            log.warning("unmapped LULC code %d kept as Other(%d)", code, code)
            cls = LULCClass("Other", code)
        return cls

    def class_for_name(self, name: str) -> LULCClass:
        try:
            return self._by_name[name]
        except KeyError:
            raise InvalidValueError(f"unknown LULC class label: {name!r}") from None

    def entries(self) -> list[tuple[int, LULCClass]]:
        return sorted(self._by_code.items())


#: Placeholder defaults used by the synthetic generator and tests; real data
#: supplies its own lulc_codes.csv.
DEFAULT_LULC_CODES = LULCCodeMap(
    {
        1: "PrimaryForest",
        2: "SecondaryForest",
        3: "ForestFormation",
        4: "ForestPlantation",
        5: "Wetland",
        6: "SugarCane",
        7: "Coffee",
        8: "Grassland",
        9: "Pasture",
        10: "Urban",
    }
)


@dataclass(frozen=True)
class Dataset:
    """The joined study dataset: sites plus reference points."""

    sites: tuple[SiteRecord, ...]
    references: tuple[ReferencePoint, ...]
    window: tuple[int, int]

    def __post_init__(self):
        first, last = self.window
        if first > last:
            raise InvalidValueError(f"empty year window: {self.window}")
        site_ids = [s.site_id for s in self.sites]
        if len(set(site_ids)) != len(site_ids):
            raise InvalidValueError("duplicate site_id in dataset")
        point_ids = [p.point_id for p in self.references]
        if len(set(point_ids)) != len(point_ids):
            raise InvalidValueError("duplicate point_id in dataset")


@dataclass(frozen=True)
class FilterReport:
    """Drop funnel for filter_sites: sequential per-reason counts."""

    n_input: int
    stages: tuple[tuple[str, int, int], ...]  # (reason, dropped, remaining)

    @property
    def n_kept(self) -> int:
        return self.stages[-1][2] if self.stages else self.n_input


def _read_rows(path: str | Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Read a CSV into (header, [(line_number, fields), ...])."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: file is empty (no header row)") from None
        rows = [(i, row) for i, row in enumerate(reader, start=2) if row]
    return [h.strip() for h in header], rows


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise CsvParseError(f"bad {what}: {text!r}", line=line) from None


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise CsvParseError(f"bad {what}: {text!r}", line=line) from None


def load_lulc_codes(path: str | Path) -> LULCCodeMap:
    header, rows = _read_rows(path)
    if header[:2] != ["code", "name"]:
        raise MissingColumnError(f"{path}: expected header code,name, got {header}")
    entries: dict[int, str] = {}
    for line, row in rows:
        if len(row) != 2:
            raise MissingColumnError("expected 2 fields", line=line)
        code = _parse_int(row[0], "code", line)
        if code in entries:
            raise DuplicateKeyError(f"duplicate LULC code {code}", line=line)
        entries[code] = row[1].strip()
    return LULCCodeMap(entries)


def load_embeddings(path: str | Path) -> dict[tuple[str, int], EmbeddingVector]:
    """Load per-(id, year) embedding vectors.

    The dimension is inferred from the header (number of A-columns) and
    must be constant; a row with a different field count raises
    MissingColumnError with its line number.
    """
    header, rows = _read_rows(path)
    if len(header) < 3 or header[0] != "id" or header[1] != "year":
        raise MissingColumnError(f"{path}: expected header id,year,A00,..., got {header[:3]}")
    a_cols = header[2:]
    bad = [c for c in a_cols if not c.startswith("A")]
    if bad:
        raise MissingColumnError(f"{path}: non-embedding columns after id,year: {bad}")
    dim = len(a_cols)
    out: dict[tuple[str, int], EmbeddingVector] = {}
    for line, row in rows:
        if len(row) != len(header):
            raise MissingColumnError(
                f"expected {len(header)} fields, got {len(row)}", line=line
            )
        key = (row[0], _parse_int(row[1], "year", line))
        if key in out:
            raise DuplicateKeyError(f"duplicate embedding key {key}", line=line)
        values = [_parse_float(v, "embedding value", line) for v in row[2:]]
        out[key] = validate_embedding(values, dim)
    return out


def _load_spectral(path: str | Path) -> dict[tuple[str, int], SpectralIndices]:
    header, rows = _read_rows(path)
    if header[:4] != ["id", "year", "ndvi", "evi"]:
        raise MissingColumnError(f"{path}: expected header id,year,ndvi,evi, got {header}")
    out: dict[tuple[str, int], SpectralIndices] = {}
    for line, row in rows:
        if len(row) < 4:
            raise MissingColumnError("expected 4 fields", line=line)
        key = (row[0], _parse_int(row[1], "year", line))
        if key in out:
            raise DuplicateKeyError(f"duplicate spectral key {key}", line=line)
        try:
            out[key] = SpectralIndices(
                ndvi=_parse_float(row[2], "ndvi", line),
                evi=_parse_float(row[3], "evi", line),
            )
        except InvalidValueError as exc:
            raise CsvParseError(str(exc), line=line) from None
    return out


def _load_covariates(path: str | Path) -> dict[tuple[str, int], CovariateSet]:
    header, rows = _read_rows(path)
    expected = ["id", "year", *CovariateSet.FIELD_NAMES]
    if header != expected:
        raise MissingColumnError(f"{path}: expected header {expected}, got {header}")
    out: dict[tuple[str, int], CovariateSet] = {}
    for line, row in rows:
        if len(row) != len(expected):
            raise MissingColumnError(
                f"expected {len(expected)} fields, got {len(row)}", line=line
            )
        key = (row[0], _parse_int(row[1], "year", line))
        if key in out:
            raise DuplicateKeyError(f"duplicate covariate key {key}", line=line)
        values = [
            _parse_float(v, name, line)
            for v, name in zip(row[2:], CovariateSet.FIELD_NAMES)
        ]
        try:
            out[key] = CovariateSet(*values)
        except InvalidValueError as exc:
            raise CsvParseError(str(exc), line=line) from None
    return out


def _per_year(table: Mapping[tuple[str, int], object], record_id: str, window: tuple[int, int]) -> dict:
    first, last = window
    return {
        year: value
        for (rid, year), value in table.items()
        if rid == record_id and first <= year <= last
    }


def load_sites(
    meta_path: str | Path,
    embeddings: Mapping[tuple[str, int], EmbeddingVector],
    spectral_path: str | Path | None = None,
    covariates_path: str | Path | None = None,
    *,
    window: tuple[int, int] = (2017, 2024),
    lulc_codes: LULCCodeMap = DEFAULT_LULC_CODES,
) -> tuple[list[SiteRecord], list[str]]:
    """Join site metadata with the per-year tables.

    Returns (sites sorted by site_id, ids of sites that had no embedding
    years). The latter are excluded from the result rather than kept
    silently; callers should surface them.
    """
    header, rows = _read_rows(meta_path)
    expected = ["site_id", "lon", "lat", "area_ha", "start_year", "strategy", "start_lulc"]
    if header != expected:
        raise MissingColumnError(f"{meta_path}: expected header {expected}, got {header}")
    spectral = _load_spectral(spectral_path) if spectral_path else {}
    covariates = _load_covariates(covariates_path) if covariates_path else {}

    # Regroup per-year tables by id up front; scanning per site is quadratic.
    emb_by_id: dict[str, dict[int, EmbeddingVector]] = {}
    first, last = window
    for (rid, year), vec in embeddings.items():
        emb_by_id.setdefault(rid, {})[year] = vec
    spec_by_id: dict[str, dict[int, SpectralIndices]] = {}
    for (rid, year), val in spectral.items():
        if first <= year <= last:
            spec_by_id.setdefault(rid, {})[year] = val
    cov_by_id: dict[str, dict[int, CovariateSet]] = {}
    for (rid, year), val in covariates.items():
        if first <= year <= last:
            cov_by_id.setdefault(rid, {})[year] = val

    sites: list[SiteRecord] = []
    no_embeddings: list[str] = []
    seen: set[str] = set()
    for line, row in rows:
        if len(row) != len(expected):
            raise MissingColumnError(f"expected {len(expected)} fields, got {len(row)}", line=line)
        site_id = row[0].strip()
        if not site_id:
            raise MissingMetadataFieldError("empty site_id", line=line)
        if site_id in seen:
            raise DuplicateKeyError(f"duplicate site_id {site_id!r}", line=line)
        seen.add(site_id)
        for idx, name in ((1, "lon"), (2, "lat"), (3, "area_ha"), (4, "start_year")):
            if not row[idx].strip():
                raise MissingMetadataFieldError(f"missing {name} for {site_id}", line=line)
        site_embeddings = {
            y: v for y, v in emb_by_id.get(site_id, {}).items() if first <= y <= last
        }
        if not site_embeddings:
            no_embeddings.append(site_id)
            continue
        start_lulc_text = row[6].strip()
        try:
            site = SiteRecord(
                site_id=site_id,
                centroid_lon=_parse_float(row[1], "lon", line),
                centroid_lat=_parse_float(row[2], "lat", line),
                area_ha=_parse_float(row[3], "area_ha", line),
                start_year=_parse_int(row[4], "start_year", line),
                strategy=parse_strategy(row[5]),
                embeddings=site_embeddings,
                spectral=spec_by_id.get(site_id, {}),
                covariates=cov_by_id.get(site_id, {}),
                start_lulc=lulc_codes.class_for_name(start_lulc_text) if start_lulc_text else None,
            )
        except InvalidValueError as exc:
            raise CsvParseError(str(exc), line=line) from None
        sites.append(site)
    if no_embeddings:
        log.warning(
            "%d site(s) had no embedding years and were excluded: %s",
            len(no_embeddings),
            ", ".join(sorted(no_embeddings)[:10]),
        )
    sites.sort(key=lambda s: s.site_id)
    return sites, sorted(no_embeddings)


def load_reference_points(
    meta_path: str | Path,
    embeddings: Mapping[tuple[str, int], EmbeddingVector],
    *,
    lulc_years: tuple[int, int] = DEFAULT_LULC_YEARS,
    window: tuple[int, int] = (2017, 2024),
    lulc_codes: LULCCodeMap = DEFAULT_LULC_CODES,
) -> list[ReferencePoint]:
    """Load reference points; stability is left unclassified.

    The header must contain lulc_<Y> for every year in ``lulc_years``;
    otherwise MissingYearColumnError is raised.
    """
    header, rows = _read_rows(meta_path)
    if header[:3] != ["point_id", "lon", "lat"]:
        raise MissingColumnError(
            f"{meta_path}: expected header point_id,lon,lat,lulc_<Y>..., got {header[:3]}"
        )
    year_cols: dict[int, int] = {}
    for idx, name in enumerate(header[3:], start=3):
        if not name.startswith("lulc_"):
            raise MissingColumnError(f"{meta_path}: unexpected column {name!r}")
        year_cols[int(name[len("lulc_"):])] = idx
    for year in range(lulc_years[0], lulc_years[1] + 1):
        if year not in year_cols:
            raise MissingYearColumnError(f"{meta_path}: missing column lulc_{year}")

    emb_by_id: dict[str, dict[int, EmbeddingVector]] = {}
    first, last = window
    for (rid, year), vec in embeddings.items():
        if first <= year <= last:
            emb_by_id.setdefault(rid, {})[year] = vec

    points: list[ReferencePoint] = []
    seen: set[str] = set()
    for line, row in rows:
        if len(row) != len(header):
            raise MissingColumnError(f"expected {len(header)} fields, got {len(row)}", line=line)
        point_id = row[0].strip()
        if not point_id:
            raise MissingMetadataFieldError("empty point_id", line=line)
        if point_id in seen:
            raise DuplicateKeyError(f"duplicate point_id {point_id!r}", line=line)
        seen.add(point_id)
        series = {
            year: lulc_codes.class_for_code(_parse_int(row[idx], f"lulc_{year}", line))
            for year, idx in year_cols.items()
        }
        try:
            points.append(
                ReferencePoint(
                    point_id=point_id,
                    lon=_parse_float(row[1], "lon", line),
                    lat=_parse_float(row[2], "lat", line),
                    lulc_series=series,
                    embeddings=emb_by_id.get(point_id, {}),
                )
            )
        except InvalidValueError as exc:
            raise CsvParseError(str(exc), line=line) from None
    points.sort(key=lambda p: p.point_id)
    return points


def filter_sites(
    sites: Sequence[SiteRecord],
    min_area_ha: float = 1.0,
    start_year_range: tuple[int, int] = (2017, 2024),
) -> tuple[list[SiteRecord], FilterReport]:
    """Apply the study-selection funnel: area first, then start year.

    Both bounds are inclusive ("at least 1 hectare"; "between 2017 and
    2024"). Filtering is total and idempotent.
    """
    n_input = len(sites)
    after_area = [s for s in sites if s.area_ha >= min_area_ha]
    lo, hi = start_year_range
    kept = [s for s in after_area if lo <= s.start_year <= hi]
    report = FilterReport(
        n_input=n_input,
        stages=(
            ("area", n_input - len(after_area), len(after_area)),
            ("start_year", len(after_area) - len(kept), len(kept)),
        ),
    )
    return kept, report


def load_dataset(
    embeddings_path: str | Path,
    sites_path: str | Path,
    reference_points_path: str | Path,
    spectral_path: str | Path | None = None,
    covariates_path: str | Path | None = None,
    lulc_codes_path: str | Path | None = None,
    *,
    window: tuple[int, int] = (2017, 2024),
    lulc_years: tuple[int, int] = DEFAULT_LULC_YEARS,
) -> tuple[Dataset, list[str]]:
    """Convenience joiner used by the CLI. Returns (dataset, zero-embedding site ids)."""
    codes = load_lulc_codes(lulc_codes_path) if lulc_codes_path else DEFAULT_LULC_CODES
    embeddings = load_embeddings(embeddings_path)
    sites, skipped = load_sites(
        sites_path,
        embeddings,
        spectral_path,
        covariates_path,
        window=window,
        lulc_codes=codes,
    )
    references = load_reference_points(
        reference_points_path,
        embeddings,
        lulc_years=lulc_years,
        window=window,
        lulc_codes=codes,
    )
    return Dataset(sites=tuple(sites), references=tuple(references), window=window), skipped
