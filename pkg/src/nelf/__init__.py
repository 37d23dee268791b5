"""nelf: light-transport fields on analytic scenes.

Bakes ground-truth light transport on procedural sphere scenes, fits a
differentiable light-transport field from a handful of posed views, and
renders novel views under novel low-resolution environment lighting.
"""

__version__ = "0.1.0"


def _tune_allocator() -> None:
    # Training alternates many multi-MB numpy temporaries; keeping large
    # blocks in the malloc arena (instead of mmap/munmap churn) avoids
    # re-faulting pages every step.
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
    except Exception:
        pass


_tune_allocator()

from . import envmap, io, scene, transport, volrender  # noqa: F401
