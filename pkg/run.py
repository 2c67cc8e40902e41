import argparse
import logging
import os
import sys

import numpy as np
import pandas as pd
from hydra import compose, initialize_config_dir
from hydra.errors import HydraException
from omegaconf.errors import MissingMandatoryValue, OmegaConfBaseException

from chosvd.classify import cross_validate, published_tables
from chosvd.errors import ChosvdError, UsageError
from chosvd.features import fisher_scores, feature_table, phase_features, select_top_k
from chosvd.hosvd import (factor_portrait, hosvd, reconstruction_error, truncation_bound)
from data.cohort.dataset import (Horizon, export_cohort, group_by_service, horizon_labels,
                                 ingest, load_manifest)
from data.cohort.synth import SynthSpec, synth_cohort
from utils import *

logger = logging.getLogger('run')

ROOT = os.path.dirname(os.path.abspath(__file__))


def ranks_override(value):
    if value == 'energy':
        return ['hosvd.energy=0.95']
    parts = value.split(',')
    if len(parts) != 3:
        raise UsageError(f'--ranks expects R1,R2,R3 or energy, got {value!r}')
    items = ['null' if p.strip() in ('full', 'none', '') else p.strip() for p in parts]
    return [f'hosvd.ranks=[{",".join(items)}]', 'hosvd.energy=null']


def overrides_from_args(args):
    overrides = []
    if args.ranks is not None:
        overrides += ranks_override(args.ranks)
    simple = {'window': 'cohort.window', 'horizon': 'cohort.horizon', 'manifest': 'cohort.manifest',
              'folds': 'classify.folds', 'seed': 'run.seed', 'projection': 'features.projection',
              'fisher': 'features.fisher', 'selection': 'classify.selection', 'out': 'run.out',
              'method': 'hosvd.method', 'scope': 'hosvd.scope', 'reports': 'run.reports'}
    for name, key in simple.items():
        value = getattr(args, name, None)
        if value is not None:
            overrides.append(f"{key}='{value}'" if isinstance(value, str) else f'{key}={value}')
    if args.rotate is not None:
        rotate = {"on": "true", "off": "false"}.get(args.rotate, args.rotate)
        overrides.append(f"features.rotate={rotate}")
    if args.skip_bad:
        overrides.append('cohort.skip_bad=true')
    if args.raw:
        overrides.append('signal.standardize=false')
    if getattr(args, 'published', False):
        overrides.append('run.published=true')
    return overrides + list(args.overrides)


def load_config(args):
    path = os.path.abspath(args.config or os.path.join(ROOT, 'config.yaml'))
    if not os.path.isfile(path):
        raise UsageError(f'config file not found: {path}')
    try:
        with initialize_config_dir(config_dir=os.path.dirname(path), version_base=None):
            cfg = compose(config_name=os.path.basename(path), overrides=overrides_from_args(args))
        cfg.run.seed = int(cfg.run.seed)
    except MissingMandatoryValue:
        raise UsageError('no seed given: pass --seed or set run.seed') from None
    except (HydraException, OmegaConfBaseException, ValueError) as err:
        raise UsageError(f'invalid configuration: {err}') from None
    return cfg


def window_from_cfg(value):
    if value is None:
        return None
    value = str(value)
    if ',' not in value:
        return value
    parts = [p.strip() for p in value.split(',')]
    if len(parts) not in (2, 3):
        raise UsageError(f'window expects START,LEN[,ANCHOR], got {value!r}')
    try:
        start, length = float(parts[0]), float(parts[1])
    except ValueError:
        raise UsageError(f'window expects numbers, got {value!r}') from None
    return {'start': start, 'length': length, 'anchor': parts[2] if len(parts) == 3 else 'start'}


def synth_spec(cfg):
    s = cfg.synth
    return SynthSpec(dims=tuple(s.dims), planted_ranks=tuple(s.planted_ranks),
                     weights=None if s.weights is None else tuple(s.weights),
                     designated=s.designated, class_offsets=tuple(s.class_offsets),
                     jitter=s.jitter, subject_phase_spread=s.subject_phase_spread, noise=s.noise,
                     severe_fraction=s.severe_fraction, services=tuple(s.services),
                     standardized=cfg.signal.standardize, seed=cfg.run.seed)


def load_cohort(cfg):
    if cfg.cohort.manifest is None:
        logger.info('no manifest given, using the synthetic cohort of the synth section')
        cohort, _, _ = synth_cohort(synth_spec(cfg))
        return cohort
    manifest = load_manifest(cfg.cohort.manifest)
    return ingest(manifest, window=window_from_cfg(cfg.cohort.window),
                  standardized=cfg.signal.standardize, taper=cfg.signal.taper,
                  max_missing=cfg.signal.max_missing, skip_bad=cfg.cohort.skip_bad,
                  n_jobs=cfg.cohort.n_jobs)


def decompose(cfg, tensor):
    h = cfg.hosvd
    ranks = [r for r in h.ranks]
    return hosvd(tensor, ranks=ranks, energy=h.energy, sequential=h.sequential,
                 method=h.method, n_jobs=h.n_jobs)


def decompositions(cfg, cohort):
    """(name, sub-cohort, factors) per decomposition scope."""
    if cfg.hosvd.scope == 'global':
        return [('all', cohort, decompose(cfg, cohort.tensor))]
    if cfg.hosvd.scope != 'per_group':
        raise UsageError(f'unknown decomposition scope {cfg.hosvd.scope!r}')
    out = []
    for service, indices in group_by_service(cohort.subjects).items():
        print(f'Decomposing {service} ({len(indices)} subjects)....')
        part = cohort.take(indices)
        out.append((service, part, decompose(cfg, part.tensor)))
    return out


def cmd_synth(cfg):
    spec = synth_spec(cfg).validate()
    cohort, labels, truth = synth_cohort(spec)
    out = ensure_dir(cfg.run.out)
    header = audit_header(cfg)
    path = export_cohort(cohort, out, header=header)
    write_json(os.path.join(out, 'truth.json'),
               {'designated': truth.designated, 'labels': labels.tolist(),
                'weights': truth.weights.tolist(),
                'multivariate': encode_complex(truth.multivariate),
                'temporal': encode_complex(truth.temporal),
                'subject': encode_complex(truth.subject)}, cfg)
    print(f'Synthetic cohort of {len(cohort.subjects)} subjects written to {path}')
    return path


def cmd_decompose(cfg):
    cohort = load_cohort(cfg)
    results = decompositions(cfg, cohort)
    out = ensure_dir(cfg.run.out)
    header = audit_header(cfg)
    for name, part, f in results:
        target = out if cfg.hosvd.scope == 'global' else ensure_dir(os.path.join(out, name))
        error = reconstruction_error(f, part.tensor)
        write_json(os.path.join(target, 'factors.json'), factors_payload(f, part.channels, part.ids), cfg)
        write_text(os.path.join(target, 'spectrum.txt'),
                   spectrum_text(f, error, truncation_bound(f)), header)
        write_table(spectrum_frame(f.mode_singular_values), os.path.join(target, 'spectrum.csv'), header)
        write_table(portrait_frame(factor_portrait(f.U1), cohort.channels),
                    os.path.join(target, 'portrait_U1.csv'), header)
        print(f'{name}: ranks {f.ranks}, relative reconstruction error {error:.3e}')
    return results


def _horizons(value):
    if value == 'both':
        return [Horizon.DAY30, Horizon.DAY90]
    if value not in (h.value for h in Horizon):
        raise UsageError(f"horizon must be day30, day90 or both, got {value!r}")
    return [Horizon(value)]


def _rotations(value):
    if isinstance(value, str):
        if value == 'both':
            return [False, True]
        raise UsageError(f'features.rotate must be true, false or both, got {value!r}')
    return [bool(value)]


def cmd_classify(cfg):
    cohort = load_cohort(cfg)
    horizons = _horizons(cfg.cohort.horizon)
    rotations = _rotations(cfg.features.rotate)
    results = decompositions(cfg, cohort)
    fcfg, ccfg = cfg.features, cfg.classify
    circular = fcfg.fisher == 'circular'
    if fcfg.fisher not in ('linear', 'circular'):
        raise UsageError(f'unknown Fisher variant {fcfg.fisher!r}')

    reports, skipped, fold_rows, scatters = [], [], [], []
    for _, part, f in results:
        sub, subjects = part.tensor, part.subjects
        groups = group_by_service(subjects) if ccfg.by_service else {'all': list(range(len(subjects)))}
        for rotated in rotations:
            pfm = phase_features(sub, f, rotate=rotated, projection=fcfg.projection,
                                 reference=fcfg.reference, scale=fcfg.scale)
            names = pfm.labels()
            for horizon in horizons:
                labelled, labels = horizon_labels(subjects, horizon, cfg.cohort.pain_threshold)
                label_of = dict(zip(labelled.tolist(), labels.tolist()))
                for group, members in groups.items():
                    rows = [i for i in members if i in label_of]
                    y = np.asarray([label_of[i] for i in rows], dtype=int)
                    counts = np.bincount(y, minlength=2)
                    if counts.min() < 2:
                        logger.warning('%s / %s: %d severe and %d mild subjects, group skipped',
                                       group, horizon.value, counts[1], counts[0])
                        skipped.append({'group': group, 'horizon': horizon.value, 'rotated': rotated,
                                        'severe': int(counts[1]), 'mild': int(counts[0])})
                        continue
                    print(f'Classifying {group} / {horizon.value} / rotated={rotated}....')
                    phases = pfm.phases[rows]
                    report = cross_validate(phases, y, k=min(ccfg.folds, len(rows)), seed=cfg.run.seed,
                                            top_k=fcfg.top_k, selection=ccfg.selection,
                                            circular=circular, auc_mode=ccfg.auc, feature_names=names,
                                            group=group, horizon=horizon.value, rotated=rotated)
                    reports.append(report)
                    ids = [subjects[i].id for i in rows]
                    for sid, label, fold, score in zip(ids, y, report.fold_assignments, report.scores):
                        fold_rows.append({'group': group, 'horizon': horizon.value, 'rotated': rotated,
                                          'subject': sid, 'label': int(label), 'fold': int(fold),
                                          'score': float(score)})
                    shown = select_top_k(fisher_scores(phases, y, circular=circular),
                                         min(3, phases.shape[1]))
                    scatter = feature_table(pfm.take(rows), ids, shown, labels=y)
                    scatters.append((f'{group}_{horizon.value}_{"rotated" if rotated else "unrotated"}',
                                     scatter))
                    print(report.to_text(), end='')

    out = ensure_dir(cfg.run.out)
    header = audit_header(cfg)
    body = ''.join(r.to_text() + '\n' for r in reports)
    body += ''.join(f'{s["group"]} / {s["horizon"]} / rotated={s["rotated"]}: skipped '
                    f'({s["severe"]} severe, {s["mild"]} mild)\n' for s in skipped)
    write_text(os.path.join(out, 'report.txt'), body, header)
    write_table(pd.DataFrame([r.as_record() for r in reports],
                             columns=list(REPORT_COLUMNS)), os.path.join(out, 'report.csv'), header)
    write_table(pd.DataFrame(skipped, columns=['group', 'horizon', 'rotated', 'severe', 'mild']),
                os.path.join(out, 'skipped.csv'), header)
    write_table(pd.DataFrame(fold_rows, columns=['group', 'horizon', 'rotated', 'subject', 'label',
                                                 'fold', 'score']),
                os.path.join(out, 'folds.csv'), header)
    scatter_dir = ensure_dir(os.path.join(out, 'scatter'))
    for name, frame in scatters:
        write_table(frame, os.path.join(scatter_dir, f'{name}.csv'), header)
    return reports


REPORT_COLUMNS = ('group', 'horizon', 'rotated', 'selection', 'seed', 'TP', 'FN', 'FP', 'TN',
                  'PPV', 'TPR', 'TNR', 'AUC', 'selected')


def cmd_report(cfg):
    if cfg.run.published:
        records = published_tables()
    else:
        path = cfg.run.reports or os.path.join(cfg.run.out, 'report.csv')
        if not os.path.isfile(path):
            raise UsageError(f'report table not found: {path}')
        records = read_table(path).to_dict('records')
    text = render_tables(records)
    print(text, end='')
    return text


COMMANDS = {'synth': cmd_synth, 'decompose': cmd_decompose, 'classify': cmd_classify,
            'report': cmd_report}


def build_parser():
    parser = argparse.ArgumentParser(description='Complex HOSVD analysis of vital-sign cohorts')
    parser.add_argument('command', choices=sorted(COMMANDS))
    parser.add_argument('overrides', nargs='*', help='extra config overrides, key=value')
    parser.add_argument('--config', help='config YAML (default: config.yaml next to run.py)')
    parser.add_argument('--manifest')
    parser.add_argument('--ranks', help='R1,R2,R3 (full for a whole mode) or energy')
    parser.add_argument('--window', help='START,LEN[,ANCHOR] in minutes, or discovery / outcome')
    parser.add_argument('--rotate', nargs='?', const='on', choices=['on', 'off', 'both'])
    parser.add_argument('--horizon', choices=['day30', 'day90', 'both'])
    parser.add_argument('--folds', type=int)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--projection', choices=['bilinear', 'normalized'])
    parser.add_argument('--fisher', choices=['linear', 'circular'])
    parser.add_argument('--selection', choices=['in-fold', 'global'])
    parser.add_argument('--method', choices=['jacobi', 'lapack'])
    parser.add_argument('--scope', choices=['global', 'per_group'])
    parser.add_argument('--skip-bad', action='store_true')
    parser.add_argument('--raw', action='store_true', help='skip per-channel standardization')
    parser.add_argument('--published', action='store_true')
    parser.add_argument('--reports', help='report.csv to render (report command)')
    parser.add_argument('--out')
    return parser


def main(argv=None):
    args = build_parser().parse_intermixed_args(argv)
    logging.basicConfig(level=logging.INFO, format='%(levelname)s %(name)s: %(message)s')
    try:
        cfg = load_config(args)
        logging.getLogger().setLevel(cfg.run.log_level)
        COMMANDS[args.command](cfg)
    except ChosvdError as err:
        logger.error('%s', err)
        return err.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
