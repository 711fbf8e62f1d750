try:
    from ._fedsim import *  # noqa: F401,F403
    from ._fedsim import __version__  # noqa: F401
except ImportError:  # editable / in-tree builds put the module at top level
    from _fedsim import *  # noqa: F401,F403
    from _fedsim import __version__  # noqa: F401
