from airqkd._core import *  # noqa: F401,F403
from airqkd._core import __version__  # noqa: F401
