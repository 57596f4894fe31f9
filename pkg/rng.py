"""
Counter-based random streams.

Every stochastic routine derives its numbers from a (seed, stream index)
pair so a given sample, trial or tensor always sees the same values no
matter how work is split across threads or batches. Philox keys on the seed;
independent streams occupy the top counter word, and batched uniform rows
occupy fixed counter blocks in the low word.
"""

import numpy as np

__all__ = ['stream', 'uniform_rows']

_MASK64 = (1 << 64) - 1


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Generator for stream `index` of `seed`."""
    if seed < 0 or index < 0:
        raise ValueError(f'seed and stream index must be nonnegative, got {seed}, {index}')
    counter = np.array([0, 0, 0, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed & _MASK64, counter=counter))


def uniform_rows(seed: int, first: int, count: int, width: int) -> np.ndarray:
    """Uniforms in [0, 1) of shape (count, width); row t belongs to trial `first + t`.

    A Philox counter block yields four doubles, so trial t owns the blocks
    [t*b, (t+1)*b) with b = ceil(width / 4). Any batching of the same trial
    range therefore produces identical rows.
    """
    if seed < 0 or first < 0:
        raise ValueError(f'seed and first trial must be nonnegative, got {seed}, {first}')
    blocks = max(1, -(-width // 4))
    counter = np.array([(first * blocks) & _MASK64, 0, 0, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=seed & _MASK64, counter=counter))
    return gen.random((count, blocks * 4))[:, :width]
