"""Exception types shared across the package."""


class HotspotterError(Exception):
    """Base class for all package errors."""


class ValidationError(HotspotterError, ValueError):
    """An argument or configuration value violates its contract."""


class IngestionError(HotspotterError):
    """A dataset row references a file that cannot be read."""


class NumericDomainError(HotspotterError, ValueError):
    """A numeric operation was called outside its mathematical domain."""


class SegmentationFailure(HotspotterError):
    """A segmentation method cannot operate on the given image."""


class TrainingDiverged(HotspotterError):
    """Training produced a non-finite loss; carries step diagnostics."""

    def __init__(self, epoch: int, step: int, components: dict):
        self.epoch = epoch
        self.step = step
        self.components = components
        parts = ", ".join(f"{k}={v}" for k, v in components.items())
        super().__init__(f"non-finite loss at epoch {epoch}, step {step} ({parts})")
