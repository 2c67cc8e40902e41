import json
import os

import numpy as np
import pandas as pd
from omegaconf import OmegaConf

FLOAT_FORMAT = '%.10g'


def audit_header(cfg):
    """The resolved config as '# '-prefixed lines."""
    lines = OmegaConf.to_yaml(cfg, resolve=True).rstrip('\n').split('\n')
    return ''.join(f'# {line}\n' for line in lines)


def write_text(path, body, header=''):
    with open(path, 'w') as f:
        f.write(header)
        f.write(body)


def write_table(frame, path, header=''):
    with open(path, 'w', newline='') as f:
        f.write(header)
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def read_table(path):
    return pd.read_csv(path, comment='#')


def encode_complex(array):
    """Nested lists with every complex entry as [re, im]."""
    array = np.asarray(array, dtype=np.complex128)
    return np.stack([array.real, array.imag], axis=-1).tolist()


def decode_complex(nested):
    pairs = np.asarray(nested, dtype=float)
    return pairs[..., 0] + 1j * pairs[..., 1]


def write_json(path, payload, cfg=None):
    if cfg is not None:
        payload = {'config': OmegaConf.to_container(cfg, resolve=True), **payload}
    with open(path, 'w') as f:
        json.dump(payload, f, indent=1)
        f.write('\n')


def factors_payload(f, channels=None, subject_ids=None):
    return {
        'dims': list(f.dims),
        'ranks': list(f.ranks),
        'channels': channels,
        'subjects': subject_ids,
        'U1': encode_complex(f.U1),
        'U2': encode_complex(f.U2),
        'U3': encode_complex(f.U3),
        'core': encode_complex(f.core.data),
        'mode_singular_values': [s.tolist() for s in f.mode_singular_values],
    }


def spectrum_frame(spectra):
    rows = []
    for mode, s in enumerate(spectra, start=1):
        energy = np.asarray(s, dtype=float) ** 2
        total = energy.sum()
        cumulative = np.cumsum(energy) / total if total > 0 else np.zeros_like(energy)
        for k, (sigma, frac) in enumerate(zip(s, cumulative), start=1):
            rows.append({'mode': mode, 'index': k, 'sigma': float(sigma), 'energy': float(frac)})
    return pd.DataFrame(rows, columns=['mode', 'index', 'sigma', 'energy'])


def spectrum_text(f, error, bound):
    out = [f'dims: {f.dims}', f'ranks: {f.ranks}',
           f'relative reconstruction error: {error:.3e}',
           f'truncation bound (squared): {bound:.6e}']
    for mode, (s, r) in enumerate(zip(f.mode_singular_values, f.ranks), start=1):
        shown = ' '.join(f'{x:.6g}' for x in s)
        out.append(f'mode {mode} (kept {r}): {shown}')
    return '\n'.join(out) + '\n'


def portrait_frame(portrait, row_names):
    rows = []
    for column, (magnitude, phase) in enumerate(portrait, start=1):
        for name, m, p in zip(row_names, magnitude, phase):
            rows.append({'column': column, 'element': name, 'magnitude': float(m), 'phase': float(p)})
    return pd.DataFrame(rows, columns=['column', 'element', 'magnitude', 'phase'])


TABLE_COLUMNS = ['TP', 'FN', 'FP', 'TN', 'PPV', 'TPR', 'TNR', 'AUC']


def render_tables(records):
    """Text tables in the layout of the published results: one block per
    (horizon, rotation) with a row per group."""
    frame = pd.DataFrame(records)
    blocks = []
    for (horizon, rotated), block in frame.groupby(['horizon', 'rotated'], sort=True):
        title = f'{horizon}, {"rotated before projection" if rotated else "without rotation"}'
        lines = [title, f'{"group":<18}' + ''.join(f'{c:>7}' for c in TABLE_COLUMNS)]
        for _, row in block.iterrows():
            cells = []
            for c in TABLE_COLUMNS:
                value = row.get(c)
                if value is None or (isinstance(value, float) and np.isnan(value)):
                    cells.append(f'{"-":>7}')
                elif c in ('PPV', 'TPR', 'TNR', 'AUC'):
                    cells.append(f'{float(value):>7.2f}')
                else:
                    cells.append(f'{int(value):>7d}')
            lines.append(f'{str(row["group"]):<18}' + ''.join(cells))
        blocks.append('\n'.join(lines))
    return '\n\n'.join(blocks) + '\n'


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
