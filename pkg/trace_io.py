#!/usr/bin/env python3
"""
Trace IO - Ingest, normalize and synthesize recognition-password traces
Delimited-text and record-stream datasets, z-normalization, synthetic gestures
"""

import io
import csv
import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import orjson
from pydantic import BaseModel, ValidationError

from errors import ConfigError, TraceFormatError

logger = logging.getLogger(__name__)

DELIMITED_TEXT = "delimited-text"
RECORD_STREAM = "record-stream"
FORMAT_TAGS = (DELIMITED_TEXT, RECORD_STREAM)

HEADER = ("account_id", "sample_id", "t", "x", "y")

SHAPES = ("circle", "square", "zigzag", "letter-stroke", "random-walk")


@dataclass(frozen=True)
class RawTrace:
    """One password attempt: timestamped (t, x, y) points in screen units"""
    account_id: str
    sample_id: str
    points: Tuple[Tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise TraceFormatError(
                f"trace {self.account_id}/{self.sample_id} has {len(self.points)} point(s), need >= 2")
        for k in range(1, len(self.points)):
            if self.points[k][0] < self.points[k - 1][0]:
                raise TraceFormatError(
                    f"trace {self.account_id}/{self.sample_id}: timestamp decreases at point {k + 1}")

    def xy(self) -> np.ndarray:
        """(n, 2) array of x, y in sample order"""
        return np.array([(x, y) for _, x, y in self.points], dtype=float)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class NormalizedTrace:
    """Per-dimension z-normalized x and y series"""
    x_series: np.ndarray
    y_series: np.ndarray
    degenerate_x: bool = False
    degenerate_y: bool = False

    def __post_init__(self):
        x = np.array(self.x_series, dtype=float)
        y = np.array(self.y_series, dtype=float)
        if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
            raise TraceFormatError(f"x and y series must be 1-D of equal length, got {x.shape} and {y.shape}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, 'x_series', x)
        object.__setattr__(self, 'y_series', y)

    @property
    def degenerate(self) -> bool:
        return self.degenerate_x or self.degenerate_y

    def points(self) -> np.ndarray:
        return np.column_stack((self.x_series, self.y_series))

    def __len__(self) -> int:
        return int(self.x_series.size)


@dataclass(frozen=True)
class TraceRejection:
    """A trace dropped during parsing, with the offending row"""
    account_id: str
    sample_id: str
    line: int
    reason: str


@dataclass(frozen=True)
class TraceSet:
    traces: Tuple[RawTrace, ...]
    source_name: str = ""
    device_bounds: Optional[Tuple[float, float, float, float]] = None  # xmin, ymin, xmax, ymax
    rejected: Tuple[TraceRejection, ...] = field(default=())

    def __post_init__(self):
        seen = set()
        for trace in self.traces:
            key = (trace.account_id, trace.sample_id)
            if key in seen:
                raise TraceFormatError(f"duplicate sample {trace.account_id}/{trace.sample_id}")
            seen.add(key)

    def accounts(self) -> Dict[str, List[RawTrace]]:
        """Traces grouped by account, both in first-seen order"""
        grouped: Dict[str, List[RawTrace]] = {}
        for trace in self.traces:
            grouped.setdefault(trace.account_id, []).append(trace)
        return grouped

    def account_ids(self) -> List[str]:
        return list(self.accounts().keys())

    def subset(self, account_ids: Sequence[str]) -> 'TraceSet':
        keep = set(account_ids)
        return TraceSet(
            traces=tuple(t for t in self.traces if t.account_id in keep),
            source_name=self.source_name,
            device_bounds=self.device_bounds,
        )

    def __len__(self) -> int:
        return len(self.traces)


class TraceRecord(BaseModel):
    """Record-stream schema: one trace per line"""
    account_id: str
    sample_id: str
    points: List[Tuple[float, float, float]]


def parse_trace_file(data: bytes, format_tag: str, source_name: str = "<bytes>") -> TraceSet:
    """
    Parse a dataset file into a TraceSet

    Args:
        data: raw file bytes (UTF-8)
        format_tag: 'delimited-text' or 'record-stream'
        source_name: recorded in the TraceSet metadata

    Returns:
        TraceSet with every well-formed trace; traces with decreasing
        timestamps are rejected (logged, listed in `rejected`)
    """
    if format_tag not in FORMAT_TAGS:
        raise TraceFormatError(f"unknown format tag '{format_tag}', expected one of {FORMAT_TAGS}")
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        raise TraceFormatError(f"{source_name} is not UTF-8: {e}")
    if not text.strip():
        raise TraceFormatError(f"{source_name} is empty")

    if format_tag == DELIMITED_TEXT:
        pending = _read_delimited(text)
    else:
        pending = _read_record_stream(text)

    if not pending:
        raise TraceFormatError(f"{source_name} holds no trace rows")

    traces: List[RawTrace] = []
    rejected: List[TraceRejection] = []
    for account_id, sample_id, rows in pending:
        problem = _first_problem(rows)
        if problem is not None:
            line, reason = problem
            logger.warning("Rejected trace %s/%s at line %d: %s", account_id, sample_id, line, reason)
            rejected.append(TraceRejection(account_id, sample_id, line, reason))
            continue
        traces.append(RawTrace(account_id, sample_id, tuple((t, x, y) for t, x, y, _ in rows)))

    if not traces:
        raise TraceFormatError(f"{source_name}: every trace was rejected ({len(rejected)} total)")

    logger.info("Parsed %d traces from %s (%d rejected)", len(traces), source_name, len(rejected))
    return TraceSet(traces=tuple(traces), source_name=source_name, rejected=tuple(rejected))


def _first_problem(rows: List[Tuple[float, float, float, int]]) -> Optional[Tuple[int, str]]:
    if len(rows) < 2:
        return rows[0][3], "trace has fewer than 2 points"
    for k in range(1, len(rows)):
        if rows[k][0] < rows[k - 1][0]:
            return rows[k][3], f"timestamp decreases ({rows[k - 1][0]} -> {rows[k][0]})"
    return None


def _parse_number(value: str, column: str, line: int) -> float:
    try:
        number = float(value)
    except ValueError:
        raise TraceFormatError(f"column '{column}' is not a number: {value!r}", line=line)
    if not math.isfinite(number):
        raise TraceFormatError(f"column '{column}' is not finite: {value!r}", line=line)
    return number


def _read_delimited(text: str) -> List[Tuple[str, str, List[Tuple[float, float, float, int]]]]:
    lines = text.splitlines()
    header_seen = False
    pending = []
    current_key = None
    finished = set()

    for line_no, row in enumerate(csv.reader(lines), start=1):
        if not row or not ''.join(row).strip():
            continue
        if not header_seen:
            if row[0].lstrip().startswith('#'):
                continue
            if tuple(cell.strip() for cell in row) != HEADER:
                raise TraceFormatError(f"expected header {','.join(HEADER)}", line=line_no)
            header_seen = True
            continue
        if len(row) != len(HEADER):
            raise TraceFormatError(f"expected {len(HEADER)} columns, found {len(row)}", line=line_no)

        account_id, sample_id = row[0].strip(), row[1].strip()
        if not account_id or not sample_id:
            raise TraceFormatError("account_id and sample_id must be non-empty", line=line_no)
        t = _parse_number(row[2], 't', line_no)
        x = _parse_number(row[3], 'x', line_no)
        y = _parse_number(row[4], 'y', line_no)

        key = (account_id, sample_id)
        if key != current_key:
            if key in finished:
                raise TraceFormatError(f"rows of sample {account_id}/{sample_id} are not contiguous", line=line_no)
            if current_key is not None:
                finished.add(current_key)
            pending.append((account_id, sample_id, []))
            current_key = key
        pending[-1][2].append((t, x, y, line_no))

    if not header_seen:
        raise TraceFormatError("missing header row")
    return pending


def _read_record_stream(text: str) -> List[Tuple[str, str, List[Tuple[float, float, float, int]]]]:
    pending = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = orjson.loads(line)
        except orjson.JSONDecodeError as e:
            raise TraceFormatError(f"invalid record: {e}", line=line_no)
        if isinstance(payload, dict) and set(payload) == {'provenance'}:
            continue
        try:
            record = TraceRecord.model_validate(payload)
        except ValidationError as e:
            raise TraceFormatError(f"invalid trace record: {e.errors()[0]['msg']}", line=line_no)
        rows = []
        for t, x, y in record.points:
            if not all(math.isfinite(v) for v in (t, x, y)):
                raise TraceFormatError("non-finite point value", line=line_no)
            rows.append((t, x, y, line_no))
        if not rows:
            raise TraceFormatError("trace record has no points", line=line_no)
        pending.append((record.account_id, record.sample_id, rows))
    return pending


def serialize_trace_set(trace_set: TraceSet, format_tag: str,
                        provenance: Optional[Mapping[str, object]] = None) -> bytes:
    """Inverse of parse_trace_file; floats keep their shortest exact repr"""
    if format_tag == DELIMITED_TEXT:
        buffer = io.StringIO()
        for key, value in (provenance or {}).items():
            buffer.write(f"# {key}: {_provenance_value(value)}\n")
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(HEADER)
        for trace in trace_set.traces:
            for t, x, y in trace.points:
                writer.writerow((trace.account_id, trace.sample_id, repr(float(t)), repr(float(x)), repr(float(y))))
        return buffer.getvalue().encode('utf-8')

    if format_tag == RECORD_STREAM:
        out = []
        if provenance:
            out.append(orjson.dumps({'provenance': dict(provenance)}, option=orjson.OPT_SORT_KEYS))
        for trace in trace_set.traces:
            out.append(orjson.dumps({
                'account_id': trace.account_id,
                'sample_id': trace.sample_id,
                'points': [list(p) for p in trace.points],
            }))
        return b'\n'.join(out) + b'\n'

    raise TraceFormatError(f"unknown format tag '{format_tag}', expected one of {FORMAT_TAGS}")


def _provenance_value(value: object) -> str:
    if isinstance(value, (dict, list, tuple)):
        return orjson.dumps(value, option=orjson.OPT_SORT_KEYS).decode()
    return str(value)


def guess_format(path_name: str) -> str:
    """Format tag from a file name (.jsonl/.json -> record-stream)"""
    lowered = path_name.lower()
    if lowered.endswith('.jsonl') or lowered.endswith('.json'):
        return RECORD_STREAM
    return DELIMITED_TEXT


def znormalize_series(values: Sequence[float]) -> Tuple[np.ndarray, bool]:
    """
    Shift/scale one series to zero mean and unit standard deviation (N-1 divisor)

    Returns:
        (normalized series, degenerate flag); a constant series maps to zeros
    """
    series = np.asarray(values, dtype=float)
    if series.size < 2:
        raise TraceFormatError(f"need at least 2 values to normalize, got {series.size}")
    mean = series.mean()
    std = series.std(ddof=1)
    if std <= 1e-12 * (1.0 + abs(mean)):
        return np.zeros_like(series), True
    return (series - mean) / std, False


def znormalize(trace: RawTrace) -> NormalizedTrace:
    xy = trace.xy()
    x, degenerate_x = znormalize_series(xy[:, 0])
    y, degenerate_y = znormalize_series(xy[:, 1])
    if degenerate_x or degenerate_y:
        logger.debug("Trace %s/%s has a constant dimension", trace.account_id, trace.sample_id)
    return NormalizedTrace(x, y, degenerate_x=degenerate_x, degenerate_y=degenerate_y)


# ---------------------------------------------------------------------------
# Synthetic gestures

DEFAULT_SHAPE_MIX = (
    ("circle", 0.2),
    ("square", 0.2),
    ("zigzag", 0.2),
    ("letter-stroke", 0.25),
    ("random-walk", 0.15),
)

# Unit-box polylines, y grows downwards as on a touchscreen
LETTER_STROKES = {
    "L": [(0, 0), (0, 1), (0.7, 1)],
    "M": [(0, 1), (0, 0), (0.5, 0.6), (1, 0), (1, 1)],
    "N": [(0, 1), (0, 0), (1, 1), (1, 0)],
    "V": [(0, 0), (0.5, 1), (1, 0)],
    "W": [(0, 0), (0.25, 1), (0.5, 0.3), (0.75, 1), (1, 0)],
    "Z": [(0, 0), (1, 0), (0, 1), (1, 1)],
    "S": [(1, 0), (0, 0), (0, 0.5), (1, 0.5), (1, 1), (0, 1)],
    "C": [(1, 0), (0.2, 0), (0, 0.5), (0.2, 1), (1, 1)],
    "U": [(0, 0), (0, 0.8), (0.3, 1), (0.7, 1), (1, 0.8), (1, 0)],
}


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic gesture population"""
    accounts: int = 100
    samples_per_account: int = 5
    jitter: float = 0.05              # per-point noise sigma as a fraction of shape size
    shape_mix: Tuple[Tuple[str, float], ...] = DEFAULT_SHAPE_MIX
    points_per_trace: int = 64
    scale: float = 400.0              # nominal shape size, screen units
    screen: Tuple[float, float] = (1080.0, 1920.0)
    start_bias: float = 0.0           # probability of a top-left, left-to-right placement
    sample_interval_ms: float = 16.0

    def __post_init__(self):
        mix = tuple((str(name), float(weight)) for name, weight in
                    (self.shape_mix.items() if isinstance(self.shape_mix, Mapping) else self.shape_mix))
        object.__setattr__(self, 'shape_mix', mix)
        if not mix:
            raise ConfigError("shape mix is empty")
        for name, weight in mix:
            if name not in SHAPES:
                raise ConfigError(f"unknown shape '{name}', expected one of {SHAPES}")
            if weight < 0 or not math.isfinite(weight):
                raise ConfigError(f"shape weight for '{name}' must be a finite non-negative number")
        if sum(w for _, w in mix) <= 0:
            raise ConfigError("shape mix weights sum to zero")
        if self.accounts < 1:
            raise ConfigError("synthetic dataset needs at least one account")
        if self.samples_per_account < 1:
            raise ConfigError("synthetic dataset needs at least one sample per account")
        if self.jitter < 0:
            raise ConfigError(f"jitter must be >= 0, got {self.jitter}")
        if self.points_per_trace < 2:
            raise ConfigError("points_per_trace must be >= 2")
        if not 0.0 <= self.start_bias <= 1.0:
            raise ConfigError("start_bias must lie in [0, 1]")
        if self.scale * 1.5 > min(self.screen):
            raise ConfigError("shape scale does not fit on the screen")


def parse_shape_mix(text: str) -> Tuple[Tuple[str, float], ...]:
    """'circle=0.5,zigzag=0.5' -> (('circle', 0.5), ('zigzag', 0.5))"""
    mix = []
    for part in text.split(','):
        if not part.strip():
            continue
        name, _, weight = part.partition('=')
        try:
            mix.append((name.strip(), float(weight) if weight else 1.0))
        except ValueError:
            raise ConfigError(f"bad shape weight in {part!r}")
    return tuple(mix)


def synth_gestures(spec: SynthSpec, seed: int) -> TraceSet:
    """
    Generate a deterministic synthetic gesture dataset

    Within an account every sample is a jittered copy of one base shape;
    base shapes are drawn independently per account.
    """
    rng = np.random.default_rng(seed)
    names = [name for name, _ in spec.shape_mix]
    weights = np.array([w for _, w in spec.shape_mix], dtype=float)
    weights /= weights.sum()
    width, height = spec.screen
    n = spec.points_per_trace
    t = np.arange(n, dtype=float) * spec.sample_interval_ms

    traces = []
    for account in range(spec.accounts):
        shape = names[int(rng.choice(len(names), p=weights))]
        base = _base_shape(shape, rng, n)
        size = spec.scale * rng.uniform(0.6, 1.0)
        half = size / 2.0

        if spec.start_bias > 0 and rng.random() < spec.start_bias:
            if base[0, 0] > base[-1, 0]:
                base = base[::-1].copy()
            origin = (rng.uniform(half, width / 2.0), rng.uniform(half, height / 2.0))
        else:
            origin = (rng.uniform(half, width - half), rng.uniform(half, height - half))

        template = base * size + np.asarray(origin)
        for sample in range(spec.samples_per_account):
            points = template
            if spec.jitter > 0:
                points = template + rng.normal(0.0, spec.jitter * size, size=template.shape)
            rows = np.column_stack((t, points))
            traces.append(RawTrace(
                account_id=f"acct{account:05d}",
                sample_id=f"s{sample:02d}",
                points=tuple(tuple(row) for row in rows.tolist()),
            ))

    logger.info("Generated %d synthetic traces for %d accounts", len(traces), spec.accounts)
    return TraceSet(traces=tuple(traces), source_name=f"synthetic(seed={seed})",
                    device_bounds=(0.0, 0.0, width, height))


def _base_shape(shape: str, rng: np.random.Generator, n: int) -> np.ndarray:
    if shape == "circle":
        start = rng.uniform(0, 2 * np.pi)
        direction = 1.0 if rng.random() < 0.5 else -1.0
        aspect = rng.uniform(0.6, 1.4)
        angles = start + direction * np.linspace(0.0, 2 * np.pi, n)
        points = np.column_stack((np.cos(angles) * aspect, np.sin(angles)))
    else:
        if shape == "square":
            corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
            first = int(rng.integers(4))
            order = corners[first:] + corners[:first]
            if rng.random() < 0.5:
                order = [order[0]] + order[1:][::-1]
            vertices = order + [order[0]]
        elif shape == "zigzag":
            zigs = int(rng.integers(2, 6))
            vertices = [(k / zigs, float(k % 2)) for k in range(zigs + 1)]
            if rng.random() < 0.5:
                vertices = [(y, x) for x, y in vertices]
        elif shape == "letter-stroke":
            letters = sorted(LETTER_STROKES)
            vertices = LETTER_STROKES[letters[int(rng.integers(len(letters)))]]
        else:
            count = int(rng.integers(6, 11))
            vertices = [tuple(v) for v in rng.uniform(0.0, 1.0, size=(count, 2))]
        points = _resample_polyline(np.asarray(vertices, dtype=float), n)

    angle = np.deg2rad(rng.uniform(-15.0, 15.0))
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    points = points @ rotation.T

    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = max(float((hi - lo).max()), 1e-9)
    return (points - (lo + hi) / 2.0) / extent


def _resample_polyline(vertices: np.ndarray, n: int) -> np.ndarray:
    """n points evenly spaced by arc length along the polyline"""
    seg = np.sqrt((np.diff(vertices, axis=0) ** 2).sum(axis=1))
    cumulative = np.concatenate(([0.0], np.cumsum(seg)))
    targets = np.linspace(0.0, cumulative[-1], n)
    return np.column_stack((
        np.interp(targets, cumulative, vertices[:, 0]),
        np.interp(targets, cumulative, vertices[:, 1]),
    ))
