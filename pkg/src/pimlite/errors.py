"""Exception types raised by the device model and the framework layers."""


class PimError(Exception):
    """Base class for all framework errors."""


# --- device faults (hard errors, mirroring hardware behavior) ---------------


class OutOfBankMemory(PimError):
    """A symmetric allocation did not fit in every core's DRAM bank."""


class AlignmentViolation(PimError):
    """A transfer offset or size broke the DMA alignment rule."""


class SizeLimitViolation(PimError):
    """A DMA command exceeded the per-command byte limit."""


class OutOfBounds(PimError):
    """A transfer touched bytes outside the bank or the scratchpad."""


class UnequalSliceSizes(PimError):
    """Parallel transfers require same-sized slices on every core."""


class ScratchpadOverflow(PimError):
    """A kernel claimed more scratchpad than the usable budget."""


class TaskletCountInvalid(PimError):
    """Requested tasklet count outside 1..max_tasklets."""


# --- registry ----------------------------------------------------------------


class UnknownArrayId(PimError):
    """No array with this id is registered."""


class DuplicateArrayId(PimError):
    """An array with this id is already registered."""


class WrongLayout(PimError):
    """The operation does not support this array's layout."""


# --- handles and iterators ----------------------------------------------------


class InvalidHandleKind(PimError):
    """Handle kind is not one of map / reduce / zip."""


class MissingCallback(PimError):
    """A callback required by the handle kind was not provided."""


class HandleKindMismatch(PimError):
    """A handle of the wrong kind was passed to an iterator."""


class LengthMismatch(PimError):
    """Zip inputs must have the same element count."""


class DistributionMismatch(PimError):
    """Zip inputs must have identical per-core element distributions."""


class NoFeasiblePlan(PimError):
    """No reduction variant fits the scratchpad even with one tasklet."""


class ElementTooLarge(PimError):
    """No aligned batch of at least one element fits in a DMA command."""
