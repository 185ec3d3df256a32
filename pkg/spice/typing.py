from typing import Sequence, Tuple, Union
import numpy as np

UnitId = str
Edge = Tuple[UnitId, UnitId]
EdgeList = Sequence[Edge]
IntArray = np.ndarray
FloatArray = np.ndarray
SeedLike = Union[None, int, Sequence[int], np.random.SeedSequence, np.random.Generator]
Interval = Tuple[float, float]
Prior = Tuple[float, float]
