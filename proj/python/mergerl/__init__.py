"""Python surface of the QMIX highway-merging stack.

The heavy lifting lives in the C++ extension; this package re-exports it.
"""

from mergerl._core import *  # noqa: F401,F403
from mergerl._core import __doc__  # noqa: F401

__version__ = "0.1.0"
