"""Subprocess host for machine-written selection operator scripts.

Run as ``python -m operator_host <script.py>``: the script is loaded once,
then the process serves selection requests over stdio, one line-delimited
JSON document per request and per response.  Only this wire protocol is
shared with the engine side; neither package imports the other.
"""

from importlib import resources

__version__ = "0.1.0"

__all__ = ["reference_script", "__version__"]


def reference_script(name: str) -> str:
    """Filesystem path of a bundled reference operator script."""
    path = resources.files(__name__) / "reference" / f"{name}.py"
    if not path.is_file():
        raise KeyError(f"no reference script named {name!r}")
    return str(path)
