"""Exception hierarchy shared by every module."""


class DriftstabError(Exception):
    pass


class ConfigError(DriftstabError, ValueError):
    """A parameter violates a documented invariant.

    ``field`` carries the dotted path of the offending value when known,
    e.g. ``"quantizer.K"``.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class InputError(DriftstabError, ValueError):
    pass


class SynthesisError(DriftstabError):
    """No lattice configuration satisfies the rate inequalities."""

    def __init__(self, message: str, violated: str):
        self.violated = violated
        super().__init__(message)


class NumericEscape(DriftstabError, ArithmeticError):
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} (step {step})")


class StructureError(DriftstabError):
    """Chain is reducible or a target set is unreachable."""

    def __init__(self, message: str, classes=None):
        self.classes = classes
        super().__init__(message)


class EnumerationLimit(DriftstabError):
    pass
