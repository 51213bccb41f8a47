"""Kernel backend selection.

Imports the compiled extension when it is available, otherwise the numpy
reference implementation. Set ELL1_NO_EXT=1 to force the fallback (used by
the kernel benchmark and by tests that compare the two backends).
"""

import os

if os.environ.get("ELL1_NO_EXT"):
    from ell1._accel import reference as impl

    COMPILED = False
else:
    try:
        from ell1._accel import _fastkernels as impl

        COMPILED = True
    except ImportError:
        from ell1._accel import reference as impl

        COMPILED = False

soft_threshold = impl.soft_threshold
project_box_linf = impl.project_box_linf
chol_update = impl.chol_update
chol_downdate = impl.chol_downdate
