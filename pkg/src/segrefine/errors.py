"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Two rasters that must share a shape do not."""


class NoForegroundError(ValueError):
    """An operation that needs foreground pixels got an empty mask."""


class PhantomGeometryError(ValueError):
    """Requested phantom geometry cannot be rasterized (e.g. band too thin)."""


class NonFiniteGradientError(RuntimeError):
    """Optimization aborted because a gradient or loss went non-finite.

    Carries the partial trace (if any) on the ``trace`` attribute so the
    caller can inspect how far the run got.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class BridgeTransportError(RuntimeError):
    """The external segmentation backend misbehaved at the wire level."""
