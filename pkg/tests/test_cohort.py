import logging

import numpy as np
import pandas as pd
import pytest
import yaml

from chosvd.errors import IngestionError, UsageError
from chosvd.signals import complexify
from data.cohort.dataset import (CohortManifest, Horizon, Label, Service, SubjectRecord, Window,
                                 export_cohort, group_by_service, horizon_labels, ingest,
                                 label_pain, load_manifest, save_manifest)
from data.cohort.synth import SynthSpec, synth_cohort

CHANNELS = ['hr', 'spo2']


def write_series(path, n, seed, gaps=()):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    frame = pd.DataFrame({'hr': 70 + 5 * np.sin(2 * np.pi * t / 25) + rng.standard_normal(n),
                          'spo2': 97 + np.cos(2 * np.pi * t / 15) + 0.1 * rng.standard_normal(n)})
    for i in gaps:
        frame.loc[i, 'hr'] = np.nan
    frame.to_csv(path, index=False)
    return frame


def make_manifest(tmp_path, lengths=(75, 75, 75), window='discovery', incision=None, gaps=()):
    (tmp_path / 'series').mkdir(exist_ok=True)
    subjects = []
    for i, n in enumerate(lengths):
        sid = f'P{i + 1}'
        write_series(tmp_path / 'series' / f'{sid}.csv', n, seed=i, gaps=gaps if i == 0 else ())
        subjects.append(SubjectRecord(id=sid, service=['thoracic', 'urology', 'thoracic'][i % 3],
                                      series_path=f'series/{sid}.csv',
                                      pain_day30=[2.0, 5.0, None][i % 3], pain_day90=4.0,
                                      incision_minute=incision))
    manifest = CohortManifest(subjects=subjects, channels=CHANNELS, window=window,
                              base_dir=str(tmp_path))
    path = tmp_path / 'manifest.yaml'
    save_manifest(manifest, str(path))
    return path


def test_manifest_roundtrip(tmp_path):
    path = make_manifest(tmp_path)
    manifest = load_manifest(str(path))
    assert manifest.channels == CHANNELS
    assert [s.id for s in manifest.subjects] == ['P1', 'P2', 'P3']
    assert manifest.subjects[1].service is Service.UROLOGY
    assert manifest.subjects[2].pain_day30 is None
    assert manifest.window == Window(0.0, 75.0, 'start')
    doc = yaml.safe_load(path.read_text())
    assert doc['schema_version'] == 1


def test_manifest_validation(tmp_path):
    with pytest.raises(UsageError):
        load_manifest(str(tmp_path / 'missing.yaml'))
    (tmp_path / 'old.yaml').write_text('schema_version: 0\nsubjects: []\n')
    with pytest.raises(UsageError, match='schema_version'):
        load_manifest(str(tmp_path / 'old.yaml'))
    with pytest.raises(UsageError):
        SubjectRecord(id='x', service='cardiac', series_path='x.csv')
    with pytest.raises(UsageError):
        SubjectRecord(id='x', service='other', series_path='x.csv', pain_day30=11)
    with pytest.raises(UsageError):
        CohortManifest(subjects=[], channels=['hr', 'hr'])
    with pytest.raises(UsageError):
        Window.parse('overnight')


def test_ingest_stacks_subjects_in_manifest_order(tmp_path):
    cohort = ingest(load_manifest(str(make_manifest(tmp_path))))
    assert cohort.tensor.dims == (2, 75, 3)
    assert cohort.ids == ['P1', 'P2', 'P3']
    frame = pd.read_csv(tmp_path / 'series' / 'P2.csv')
    np.testing.assert_allclose(cohort.tensor.subject_slice(1)[1], complexify(frame['spo2'].to_numpy()),
                               atol=1e-12)


def test_ingest_parallel_matches_serial(tmp_path):
    manifest = load_manifest(str(make_manifest(tmp_path)))
    assert ingest(manifest, n_jobs=2).tensor == ingest(manifest).tensor


def test_short_series_names_the_subject(tmp_path):
    manifest = load_manifest(str(make_manifest(tmp_path, lengths=(75, 74, 75))))
    with pytest.raises(IngestionError) as info:
        ingest(manifest)
    assert [issue[0] for issue in info.value.issues] == ['P2']
    assert 'P2' in str(info.value)
    cohort = ingest(manifest, skip_bad=True)
    assert cohort.ids == ['P1', 'P3']


def test_gap_limit_names_subject_and_channel(tmp_path):
    manifest = load_manifest(str(make_manifest(tmp_path, gaps=range(10, 20))))
    with pytest.raises(IngestionError) as info:
        ingest(manifest)
    assert info.value.issues[0][:2] == ('P1', 'hr')


def test_missing_channel_and_file(tmp_path):
    path = make_manifest(tmp_path)
    manifest = load_manifest(str(path))
    manifest.channels = ['hr', 'etco2']
    (tmp_path / 'series' / 'P3.csv').unlink()
    with pytest.raises(IngestionError) as info:
        ingest(manifest)
    problems = {(s, c) for s, c, _ in info.value.issues}
    assert ('P1', 'etco2') in problems and ('P3', None) in problems


def test_incision_anchored_window(tmp_path):
    manifest = load_manifest(str(make_manifest(tmp_path, lengths=(60, 60, 60), window='outcome',
                                               incision=10)))
    cohort = ingest(manifest)
    assert cohort.tensor.dims == (2, 50, 3)
    frame = pd.read_csv(tmp_path / 'series' / 'P1.csv')
    expected = complexify(frame['hr'].to_numpy()[0:50])
    np.testing.assert_allclose(cohort.tensor.subject_slice(0)[0], expected, atol=1e-12)


def test_incision_window_needs_incision(tmp_path):
    manifest = load_manifest(str(make_manifest(tmp_path, window='outcome')))
    with pytest.raises(IngestionError, match='incision'):
        ingest(manifest)


def test_label_pain_threshold():
    assert label_pain(3.0) is Label.MILD
    assert label_pain(3.01) is Label.SEVERE
    assert label_pain(0) is Label.MILD
    assert label_pain(None) is None
    with pytest.raises(UsageError):
        label_pain(12)


def test_horizon_labels_count_every_subject(tmp_path, caplog):
    caplog.set_level(logging.INFO)
    manifest = load_manifest(str(make_manifest(tmp_path)))
    indices, labels = horizon_labels(manifest.subjects, Horizon.DAY30)
    np.testing.assert_array_equal(indices, [0, 1])
    np.testing.assert_array_equal(labels, [0, 1])
    excluded = len(manifest.subjects) - indices.size
    assert (labels == 0).sum() + (labels == 1).sum() + excluded == len(manifest.subjects)
    assert 'P3' in caplog.text
    _, day90 = horizon_labels(manifest.subjects, 'day90')
    np.testing.assert_array_equal(day90, [1, 1, 1])


def test_group_by_service(tmp_path):
    manifest = load_manifest(str(make_manifest(tmp_path)))
    groups = group_by_service(manifest.subjects)
    assert groups == {'thoracic': [0, 2], 'urology': [1]}
    assert sum(len(v) for v in groups.values()) == len(manifest.subjects)
    same = [SubjectRecord(id=str(i), service='other', series_path='x') for i in range(3)]
    assert group_by_service(same) == {'other': [0, 1, 2]}


def test_export_then_ingest_reproduces_synthetic_tensor(tmp_path):
    cohort, labels, _ = synth_cohort(SynthSpec(dims=(8, 75, 12), seed=4,
                                               services=('thoracic', 'urology')))
    path = export_cohort(cohort, str(tmp_path))
    again = ingest(load_manifest(path))
    assert again.ids == cohort.ids
    np.testing.assert_allclose(again.tensor.data, cohort.tensor.data, atol=1e-10)
    _, relabelled = horizon_labels(again.subjects, 'day30')
    np.testing.assert_array_equal(relabelled, labels)


def test_take_keeps_subjects_and_slices_together():
    cohort, _, _ = synth_cohort(SynthSpec(dims=(8, 75, 6), seed=9, services=('thoracic', 'urology')))
    part = cohort.take(group_by_service(cohort.subjects)['urology'])
    assert part.ids == ['S002', 'S004', 'S006']
    assert part.channels == cohort.channels
    np.testing.assert_array_equal(part.tensor.subject_slice(0), cohort.tensor.subject_slice(1))
