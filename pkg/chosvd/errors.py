"""Exception hierarchy shared by the library and the batch CLI."""


class ChosvdError(Exception):
    exit_code = 1


class UsageError(ChosvdError, ValueError):
    """Invalid arguments: modes, ranks, indices, fold counts, config values."""
    exit_code = 2


class DataError(ChosvdError):
    """Input data that cannot be analysed (non-finite, degenerate, unreadable)."""
    exit_code = 3


class DegenerateChannelError(DataError):
    def __init__(self, channel, message='zero variance'):
        self.channel = channel
        super().__init__(f'channel {channel!r}: {message}')


class IngestionError(DataError):
    """Collects every problem found while reading a cohort.

    `issues` is a list of (subject, channel, message) triples; channel is
    None for subject-level problems such as a missing file.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        lines = [f'  {subject}'
                 + (f' [{channel}]' if channel is not None else '')
                 + f': {message}'
                 for subject, channel, message in self.issues]
        super().__init__(f'{len(self.issues)} ingestion error(s):\n' + '\n'.join(lines))


class NumericalError(ChosvdError):
    exit_code = 4


class ConvergenceError(NumericalError):
    def __init__(self, sweeps, off_norm, tol):
        self.sweeps = sweeps
        self.off_norm = off_norm
        self.tol = tol
        super().__init__(f'Jacobi iteration did not converge after {sweeps} sweeps '
                         f'(relative off-diagonal mass {off_norm:.3e}, tolerance {tol:.1e})')
