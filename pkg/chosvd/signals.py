"""Per-channel preprocessing: gap filling, standardization, DFT and the
analytic signal used to complexify vital-sign series."""
import logging

import numpy as np

from chosvd.errors import DataError, DegenerateChannelError, UsageError

logger = logging.getLogger(__name__)

MAX_MISSING = 0.1
TAPER_SAMPLES = 5


def fill_gaps(samples, channel='?', max_missing=MAX_MISSING):
    """Linear interpolation inside the series, hold of the nearest valid
    sample at the edges. More than `max_missing` missing samples is an error."""
    x = np.asarray(samples, dtype=float)
    missing = ~np.isfinite(x)
    if not missing.any():
        return x.copy()
    n_missing = int(missing.sum())
    if n_missing == x.size:
        raise DataError(f'channel {channel!r}: no valid samples')
    if n_missing > max_missing * x.size:
        raise DataError(f'channel {channel!r}: {n_missing}/{x.size} samples missing '
                        f'(limit {max_missing:.0%})')
    t = np.arange(x.size)
    filled = x.copy()
    filled[missing] = np.interp(t[missing], t[~missing], x[~missing])
    logger.debug('channel %r: filled %d missing samples', channel, n_missing)
    return filled


def standardize(samples, channel='?'):
    """Zero mean, unit population standard deviation."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise UsageError(f'channel {channel!r}: need at least 2 samples, got {x.size}')
    centered = x - x.mean()
    std = np.sqrt(np.mean(centered ** 2))
    if std <= np.finfo(float).eps * max(1.0, np.abs(x).max()):
        raise DegenerateChannelError(channel)
    return centered / std


def dft(x):
    """Discrete Fourier transform of any length (Bluestein chirp-z).

    The length-N transform is rewritten as a circular convolution with a
    chirp and evaluated with power-of-two FFTs, so no zero padding of the
    data itself is needed.
    """
    x = np.asarray(x, dtype=np.complex128).ravel()
    n = x.size
    if n == 0:
        raise UsageError('cannot transform an empty vector')
    if n == 1:
        return x.copy()
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp argument small for long inputs
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)

    a = np.zeros(m, dtype=np.complex128)
    a[:n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:][::-1])

    conv = np.fft.ifft(np.fft.fft(a) * np.fft.fft(b))
    return conv[:n] * chirp


def idft(spectrum):
    spectrum = np.asarray(spectrum, dtype=np.complex128).ravel()
    return np.conj(dft(np.conj(spectrum))) / spectrum.size


def cosine_taper(samples, width=TAPER_SAMPLES):
    """Raised-cosine ramp over the first and last `width` samples."""
    x = np.asarray(samples, dtype=float).copy()
    width = min(int(width), x.size // 2)
    if width <= 0:
        return x
    ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(width) + 0.5) / width))
    x[:width] *= ramp
    x[-width:] *= ramp[::-1]
    return x


def analytic_signal(samples, taper=False):
    """x + i*H[x]: keeps DC (and Nyquist for even lengths), doubles the
    positive-frequency bins and zeroes the negative ones."""
    x = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError('series has non-finite samples')
    if taper:
        x = cosine_taper(x)
    n = x.size
    weights = np.zeros(n)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[n // 2] = 1.0
        weights[1:n // 2] = 2.0
    else:
        weights[1:(n + 1) // 2] = 2.0
    return idft(dft(x) * weights)


def complexify(samples, channel='?', standardized=True, taper=False, max_missing=MAX_MISSING):
    """Gap filling, optional standardization, then the analytic signal."""
    x = fill_gaps(samples, channel=channel, max_missing=max_missing)
    if standardized:
        x = standardize(x, channel=channel)
    return analytic_signal(x, taper=taper)
