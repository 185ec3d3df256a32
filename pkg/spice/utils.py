import hashlib
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .typing import SeedLike

INTERVAL_LEVEL = 0.95
ACCEPTANCE_TARGET = 0.44
ACCEPTANCE_BAND = (0.2, 0.6)

# Largest double below one; keeps inverse-logit draws strictly inside (0, 1).
P_CEILING = np.nextafter(1, 0)
P_FLOOR = np.finfo(float).tiny


def fix_dataclass_init_docs(cls):
    """Fix the ``__init__`` documentation for a :class:`dataclasses.dataclass`.

    Args:
        cls: The class whose docstring needs fixing

    Returns:
        The class that was passed so this function can be used as a decorator

    See Also:
        https://github.com/agronholm/sphinx-autodoc-typehints/issues/123
    """
    cls.__init__.__qualname__ = f'{cls.__name__}.__init__'
    return cls


def as_generator(seed: SeedLike = None) -> np.random.Generator:
    """Coerce a seed-like object into a numpy :code:`Generator`.

    Args:
        seed: An existing generator (returned as is), a :code:`SeedSequence`, an integer or a sequence of integers.

    Returns:
        The random generator.

    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("An explicit seed is required; wall-clock seeding is not supported.")
    return np.random.default_rng(seed)


def task_seed(seed: int, *key: int) -> np.random.SeedSequence:
    """Seed sequence for a task addressed by integer :code:`key` (e.g. scenario, population, replicate, model).

    The same :code:`(seed, key)` always yields the same stream, regardless of the order tasks run in.

    Args:
        seed: Root seed of the run.
        *key: Task coordinates.

    Returns:
        The seed sequence for the task.

    """
    return np.random.SeedSequence([int(seed), *[int(k) for k in key]])


def file_digest(path: Union[str, Path]) -> str:
    """SHA-256 hex digest of a file (recorded in run manifests)."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def percentile_interval(values: np.ndarray, level: float = INTERVAL_LEVEL, axis: int = 0) -> np.ndarray:
    """Central percentile interval using linear interpolation between order statistics.

    For sorted values :math:`x_{(1)} \\leq \\ldots \\leq x_{(m)}` the :math:`q`-quantile is
    :math:`x_{(k)} + f (x_{(k+1)} - x_{(k)})` where :math:`h = (m - 1) q`, :math:`k = \\lfloor h \\rfloor + 1` and
    :math:`f = h - \\lfloor h \\rfloor` (numpy's default :code:`linear` method).

    Args:
        values: Replicates or posterior draws.
        level: Central coverage of the interval.
        axis: Axis along which the replicates lie.

    Returns:
        Array with the lower and upper bounds stacked along the first axis.

    """
    alpha = (1 - level) / 2
    return np.percentile(values, [100 * alpha, 100 * (1 - alpha)], axis=axis)


def check_lengths(name: str, arrays: Sequence[np.ndarray], n: int):
    for a in arrays:
        if len(a) != n:
            raise ValueError(f"Expected {name} arrays of length {n} but got {len(a)}.")
