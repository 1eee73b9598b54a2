"""Exception types raised across the package."""


class MitodetError(Exception):
    """Base class for validation failures raised by mitodet."""


class StainEstimationDegenerate(MitodetError):
    """Too little stain signal to estimate a two-stain profile."""


class InvalidTiling(MitodetError):
    """Tile plan parameters are unusable (nonpositive dims, bad overlap)."""


class MalformedAnnotation(MitodetError):
    """Centroid CSV line failed to parse; message carries the line number."""


class DegenerateBox(MitodetError):
    """Box collapsed to zero width or height after clamping."""


class NonFiniteLoss(MitodetError):
    """A loss value or gradient evaluated to NaN or infinity."""


class ManifestError(MitodetError):
    """Dataset manifest failed schema validation."""
