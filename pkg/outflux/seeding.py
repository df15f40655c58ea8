"""Deterministic seed expansion.

A run has one 64-bit root seed. Every independent trial draws from its own
generator seeded by ``derive_seed(root, *path)``, a splitmix64 chain over the
path components, so results do not depend on execution order or thread count.
"""

MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 output for the given 64-bit state."""
    z = (state + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *path: int) -> int:
    """Seed for the trial addressed by ``path`` under ``root``."""
    state = splitmix64(root & MASK64)
    for part in path:
        state = splitmix64(state ^ (part & MASK64))
    return state
