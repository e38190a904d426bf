"""Global numerical tolerances, in the style of ``sklearn.get_config``."""
from contextlib import contextmanager

_DEFAULTS = {
    "rank_tol": 1e-10,
    "solve_tol": 1e-8,
    "equality_tol": 1e-12,
    "parallelism": 1,
}
_config = dict(_DEFAULTS)


def get_config():
    return dict(_config)


def set_config(rank_tol=None, solve_tol=None, equality_tol=None, parallelism=None):
    """Set global tolerances; ``None`` leaves a value unchanged."""
    updates = {
        "rank_tol": rank_tol,
        "solve_tol": solve_tol,
        "equality_tol": equality_tol,
    }
    for name, value in updates.items():
        if value is None:
            continue
        if not value > 0:
            raise ValueError(f"{name} must be strictly positive, got {value!r}")
        _config[name] = float(value)
    if parallelism is not None:
        if int(parallelism) < 0:
            raise ValueError("parallelism must be >= 0")
        _config["parallelism"] = int(parallelism)


@contextmanager
def config_context(**kwargs):
    old = get_config()
    set_config(**kwargs)
    try:
        yield
    finally:
        _config.clear()
        _config.update(old)


def resolve(name, value):
    """Return ``value`` or, if it is ``None``, the configured default."""
    return _config[name] if value is None else value
