"""Semantic speech transceiver (DeepSC-S) with a classical telephony baseline."""

from ._deepscs import *  # noqa: F401,F403
from ._deepscs import __doc__ as _doc

__doc__ = _doc
