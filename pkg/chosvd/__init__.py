__all__ = ['tensor', 'linalg', 'signals', 'hosvd', 'features', 'classify', 'errors']
