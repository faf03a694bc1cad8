from ._core import *  # noqa: F401,F403
from ._core import Error, JudgePolicy, JudgePolicyKind, ProbeConfig

__all__ = [name for name in dir() if not name.startswith("_")]


def hybrid_judge(fast, strong, attempts=1):
    """Hybrid policy over two callables that map a judge prompt to response text."""
    return JudgePolicy.from_functions(JudgePolicyKind.HYBRID, fast=fast, strong=strong, attempts=attempts)


def config(**fields):
    """ProbeConfig with the given fields set."""
    c = ProbeConfig()
    for name, value in fields.items():
        if not hasattr(c, name):
            raise AttributeError(f"ProbeConfig has no field {name!r}")
        setattr(c, name, value)
    return c
