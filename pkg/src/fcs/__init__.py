"""Forward-curve spaces: weighted norms, a computable singular system of the
compact embedding between them, HJMM-style diffusion simulation, and audits
of the finite-rank approximation bounds.

Submodules are imported lazily so the CLI can cap BLAS threads before numpy
loads (see the FCS_THREADS environment variable).
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("curves", "spectral", "fourier", "hjmm", "approx", "report", "plots", "cli", "errors")


def __getattr__(name: str):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
