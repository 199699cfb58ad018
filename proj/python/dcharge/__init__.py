from ._dcharge import *  # noqa: F401,F403
from ._dcharge import __doc__  # noqa: F401
