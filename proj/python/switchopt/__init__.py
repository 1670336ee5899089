"""Switched-system optimal control toolkit.

Thin wrapper over the compiled extension; see the project README for the
pipeline overview (relaxed solve, CIA rounding, STO, iterative sequence
optimization).
"""

try:
    from ._switchopt import *  # noqa: F401,F403  (installed layout)
except ImportError:  # in-build layout: extension sits on sys.path directly
    from _switchopt import *  # noqa: F401,F403
