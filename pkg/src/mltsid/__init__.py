"""Multi-label training for text-independent speaker identification.

The package covers the full desk-scale pipeline: spectral feature
extraction, a ratio-mask speech enhancement network, a 1-D convolutional
speaker identification network, subgroup label expansion with alias-based
scoring, and a seeded experiment harness with a CLI.

Submodules are imported lazily so that the CLI can configure BLAS thread
counts before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "autodiff",
    "checkpoint",
    "cli",
    "config",
    "data",
    "dsp",
    "errors",
    "evaluation",
    "labels",
    "nets",
    "optim",
    "seeding",
    "training",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
