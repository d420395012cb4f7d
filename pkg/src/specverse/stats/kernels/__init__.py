"""Random-walk Metropolis kernel with compiled and pure-python backends.

The compiled Cython kernel is used when the extension built; otherwise the
numpy fallback is selected at import. Both consume identical pre-generated
random streams and are deterministic given those inputs. Set the environment
variable SPECVERSE_MH_BACKEND to "compiled" or "python" to force one (forcing
"compiled" without the extension raises at import).

Family codes: 0 = gaussian (identity link, known variance),
1 = poisson (log link), 2 = negative binomial (log link, fixed dispersion).
"""

import os

FAMILY_GAUSSIAN = 0
FAMILY_POISSON = 1
FAMILY_NEGBIN = 2

_forced = os.environ.get("SPECVERSE_MH_BACKEND")

if _forced == "python":
    from . import _mh_py as _impl

    BACKEND = "python"
elif _forced == "compiled":
    from . import _mh_cy as _impl  # noqa: F401  (ImportError is the contract)

    BACKEND = "compiled"
elif _forced:
    raise ImportError(f"unknown SPECVERSE_MH_BACKEND value: {_forced!r}")
else:
    try:
        from . import _mh_cy as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _mh_py as _impl

        BACKEND = "python"

mh_chain = _impl.mh_chain


def backend_name() -> str:
    return BACKEND
