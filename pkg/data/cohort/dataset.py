import logging
import os
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed

from chosvd.errors import DataError, IngestionError, UsageError
from chosvd.signals import MAX_MISSING, complexify
from chosvd.tensor import ComplexTensor3

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PAIN_THRESHOLD = 3.0

DEFAULT_CHANNELS = ['hr', 'hr_spo2', 'spo2', 'sbp', 'dbp', 'etco2', 'tidal_volume', 'et_agent']

# The two analysis settings: a 75-minute window from the start of the
# record, and a 50-minute window opening 10 minutes before incision.
WINDOW_PRESETS = {
    'discovery': {'start': 0, 'length': 75, 'anchor': 'start'},
    'outcome': {'start': -10, 'length': 50, 'anchor': 'incision'},
}


class Service(str, Enum):
    THORACIC = 'thoracic'
    ORTHOPAEDICS = 'orthopaedics'
    UROLOGY = 'urology'
    COLORECTAL = 'colorectal'
    TRANSPLANT = 'transplant'
    PANCREAS_BILIARY = 'pancreas_biliary'
    OTHER = 'other'


class Horizon(str, Enum):
    DAY30 = 'day30'
    DAY90 = 'day90'


class Label(IntEnum):
    MILD = 0
    SEVERE = 1


@dataclass(frozen=True)
class Window:
    start: float
    length: float
    anchor: str = 'start'

    @classmethod
    def parse(cls, value):
        if isinstance(value, Window):
            return value
        if isinstance(value, str):
            if value not in WINDOW_PRESETS:
                raise UsageError(f'unknown window preset {value!r}; '
                                 f'choose from {sorted(WINDOW_PRESETS)}')
            value = WINDOW_PRESETS[value]
        window = cls(start=float(value['start']), length=float(value['length']),
                     anchor=str(value.get('anchor', 'start')))
        if window.anchor not in ('start', 'incision'):
            raise UsageError(f'window anchor must be start or incision, got {window.anchor!r}')
        if window.length <= 0:
            raise UsageError(f'window length must be positive, got {window.length}')
        return window

    def as_dict(self):
        return {'start': self.start, 'length': self.length, 'anchor': self.anchor}


@dataclass
class SubjectRecord:
    id: str
    service: Service
    series_path: str
    pain_day30: Optional[float] = None
    pain_day90: Optional[float] = None
    incision_minute: Optional[int] = None

    def __post_init__(self):
        try:
            self.service = Service(self.service)
        except ValueError:
            raise UsageError(f'subject {self.id}: unknown service {self.service!r}; '
                             f'choose from {[s.value for s in Service]}') from None
        for name in ('pain_day30', 'pain_day90'):
            score = getattr(self, name)
            if score is None:
                continue
            score = float(score)
            if not 0.0 <= score <= 10.0:
                raise UsageError(f'subject {self.id}: {name}={score} outside [0, 10]')
            setattr(self, name, score)
        if self.incision_minute is not None and int(self.incision_minute) < 0:
            raise UsageError(f'subject {self.id}: negative incision minute')

    def pain(self, horizon):
        return self.pain_day30 if Horizon(horizon) is Horizon.DAY30 else self.pain_day90

    def as_dict(self):
        return {'id': self.id, 'service': self.service.value, 'series': self.series_path,
                'pain_day30': self.pain_day30, 'pain_day90': self.pain_day90,
                'incision_minute': self.incision_minute}


@dataclass
class CohortManifest:
    subjects: list
    channels: list = field(default_factory=lambda: list(DEFAULT_CHANNELS))
    sampling_rate: float = 1.0
    window: Window = field(default_factory=lambda: Window.parse('discovery'))
    base_dir: str = '.'

    def __post_init__(self):
        if not self.channels:
            raise UsageError('manifest needs at least one channel')
        if len(set(self.channels)) != len(self.channels):
            raise UsageError(f'duplicate channel names in {self.channels}')
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise UsageError('duplicate subject ids in manifest')
        if self.sampling_rate <= 0:
            raise UsageError('sampling rate must be positive')
        self.window = Window.parse(self.window)


@dataclass
class Cohort:
    tensor: ComplexTensor3
    subjects: list
    channels: list

    @property
    def ids(self):
        return [s.id for s in self.subjects]

    def take(self, indices):
        indices = list(indices)
        return Cohort(self.tensor.take_subjects(indices), [self.subjects[i] for i in indices],
                      self.channels)


def load_manifest(path):
    if not os.path.isfile(path):
        raise UsageError(f'manifest not found: {path}')
    with open(path) as f:
        doc = yaml.safe_load(f) or {}
    version = doc.get('schema_version')
    if version != SCHEMA_VERSION:
        raise UsageError(f'{path}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})')
    subjects = [SubjectRecord(id=str(s['id']), service=s.get('service', 'other'),
                              series_path=s['series'], pain_day30=s.get('pain_day30'),
                              pain_day90=s.get('pain_day90'),
                              incision_minute=s.get('incision_minute'))
                for s in doc.get('subjects', [])]
    return CohortManifest(subjects=subjects,
                          channels=list(doc.get('channels', DEFAULT_CHANNELS)),
                          sampling_rate=float(doc.get('sampling_rate', 1.0)),
                          window=doc.get('window', 'discovery'),
                          base_dir=os.path.dirname(os.path.abspath(path)))


def save_manifest(manifest, path, header=None):
    doc = {'schema_version': SCHEMA_VERSION,
           'channels': list(manifest.channels),
           'sampling_rate': manifest.sampling_rate,
           'window': manifest.window.as_dict(),
           'subjects': [s.as_dict() for s in manifest.subjects]}
    with open(path, 'w') as f:
        if header:
            f.write(header)
        yaml.safe_dump(doc, f, sort_keys=False)


def _window_bounds(record, window, rate):
    if window.anchor == 'incision':
        if record.incision_minute is None:
            return None, 'window is anchored at incision but incision_minute is missing'
        start_minute = record.incision_minute + window.start
    else:
        start_minute = window.start
    first = int(round(start_minute * rate))
    return (first, first + int(round(window.length * rate))), None


def _load_subject(record, channels, window, rate, base_dir, standardized, taper, max_missing):
    """Returns (complex I1 x L matrix or None, list of issues)."""
    path = record.series_path
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    if not os.path.isfile(path):
        return None, [(record.id, None, f'series file not found: {path}')]
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as err:
        return None, [(record.id, None, f'cannot parse {path}: {err}')]

    missing = [c for c in channels if c not in frame.columns]
    if missing:
        return None, [(record.id, c, 'channel missing from series file') for c in missing]

    bounds, problem = _window_bounds(record, window, rate)
    if problem:
        return None, [(record.id, None, problem)]
    first, last = bounds
    if first < 0 or last > len(frame):
        return None, [(record.id, None, f'series has {len(frame)} samples, '
                                        f'window needs samples {first}..{last - 1}')]

    rows, issues = [], []
    for channel in channels:
        values = pd.to_numeric(frame[channel], errors='coerce').to_numpy(dtype=float)[first:last]
        try:
            rows.append(complexify(values, channel=channel, standardized=standardized,
                                   taper=taper, max_missing=max_missing))
        except DataError as err:
            issues.append((record.id, channel, str(err)))
    if issues:
        return None, issues
    return np.vstack(rows), []


def ingest(manifest, window=None, standardized=True, taper=False, max_missing=MAX_MISSING,
           skip_bad=False, n_jobs=1):
    """Reads, windows, gap-fills, standardizes and complexifies every
    subject, stacking them into a (channels, window, subjects) tensor in
    manifest order.

    Any problem aborts the run with an itemized IngestionError unless
    skip_bad is set, in which case the offending subjects are dropped.
    """
    window = Window.parse(window) if window is not None else manifest.window
    if not manifest.subjects:
        raise UsageError('manifest lists no subjects')
    results = Parallel(n_jobs=n_jobs)(
        delayed(_load_subject)(record, manifest.channels, window, manifest.sampling_rate,
                               manifest.base_dir, standardized, taper, max_missing)
        for record in manifest.subjects)

    slices, kept, issues = [], [], []
    for record, (matrix, problems) in zip(manifest.subjects, results):
        if problems:
            issues.extend(problems)
            continue
        slices.append(matrix)
        kept.append(record)

    if issues:
        if not skip_bad:
            raise IngestionError(issues)
        for subject, channel, message in issues:
            logger.warning('skipping %s%s: %s', subject,
                           f' [{channel}]' if channel else '', message)
    if not slices:
        raise IngestionError(issues or [('*', None, 'no subjects left')])

    tensor = ComplexTensor3(np.stack(slices, axis=2))
    logger.info('ingested %d subjects into a tensor of dims %s', len(kept), tensor.dims)
    return Cohort(tensor=tensor, subjects=kept, channels=list(manifest.channels))


def label_pain(score, threshold=PAIN_THRESHOLD):
    """mild iff score <= threshold; None for an absent score."""
    if score is None or (isinstance(score, float) and np.isnan(score)):
        return None
    score = float(score)
    if not 0.0 <= score <= 10.0:
        raise UsageError(f'pain score {score} outside [0, 10]')
    return Label.MILD if score <= threshold else Label.SEVERE


def horizon_labels(subjects, horizon, threshold=PAIN_THRESHOLD):
    """Indices of subjects with an outcome at this horizon and their labels.

    Subjects without a score are excluded and logged.
    """
    horizon = Horizon(horizon)
    indices, labels = [], []
    for i, subject in enumerate(subjects):
        label = label_pain(subject.pain(horizon), threshold)
        if label is None:
            logger.info('%s: no %s pain score, excluded from this horizon', subject.id, horizon.value)
            continue
        indices.append(i)
        labels.append(int(label))
    return np.asarray(indices, dtype=int), np.asarray(labels, dtype=int)


def group_by_service(subjects):
    """Service -> subject indices, in first-appearance order; empty services omitted."""
    groups = {}
    for i, subject in enumerate(subjects):
        groups.setdefault(subject.service.value, []).append(i)
    return groups


def export_cohort(cohort, out_dir, window_length=None, header=None):
    """Writes the real part of every subject slice as a series CSV plus a
    manifest, in the format `load_manifest`/`ingest` read back."""
    series_dir = os.path.join(out_dir, 'series')
    os.makedirs(series_dir, exist_ok=True)
    length = cohort.tensor.dims[1] if window_length is None else window_length
    records = []
    for i, subject in enumerate(cohort.subjects):
        rel = os.path.join('series', f'{subject.id}.csv')
        frame = pd.DataFrame(np.real(cohort.tensor.subject_slice(i)).T, columns=cohort.channels)
        frame.to_csv(os.path.join(out_dir, rel), index=False, float_format='%.17g')
        records.append(SubjectRecord(id=subject.id, service=subject.service, series_path=rel,
                                     pain_day30=subject.pain_day30, pain_day90=subject.pain_day90,
                                     incision_minute=subject.incision_minute))
    manifest = CohortManifest(subjects=records, channels=list(cohort.channels),
                              window={'start': 0, 'length': length, 'anchor': 'start'},
                              base_dir=out_dir)
    path = os.path.join(out_dir, 'manifest.yaml')
    save_manifest(manifest, path, header=header)
    return path
