"""Exception hierarchy shared by all modules."""


class DesignError(Exception):
    """Base class for errors raised by consecdesign."""


class SingularMatrix(DesignError):
    """A factorization pivot fell below the singularity tolerance."""


class DimensionMismatch(DesignError):
    pass


class Inestimable(DesignError):
    """The consecutive contrasts are not all estimable (information matrix singular)."""


class MaxItersExceeded(DesignError):
    pass


class EmptyDesign(DesignError):
    """Rounding produced no blocks at all."""


class NotNested(DesignError):
    pass


class NoDeletableBlock(DesignError):
    pass
