"""seqforge: a desk-scale encoder-decoder transformer lab.

Submodules are imported lazily so the `forge` CLI can cap BLAS thread
counts from FORGE_THREADS before numpy is first loaded.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "archive",
    "cli",
    "corpus",
    "corruption",
    "decoding",
    "metrics",
    "model",
    "recipes",
    "sampling",
    "surgery",
    "tensor",
    "training",
    "vocab",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
