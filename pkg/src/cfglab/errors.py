"""Exception classes shared across the package."""


class CfgLabError(Exception):
    """Base class for all domain errors."""


class ParseError(CfgLabError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class LevelError(CfgLabError):
    """A symbol is used at a level inconsistent with its declared one."""


class SynthesisExhausted(CfgLabError):
    """Constraint retries ran out; the synthesis spec is over-constrained."""


class InconsistentDerivation(CfgLabError):
    pass


class UnknownSymbol(CfgLabError):
    pass


class NotInLanguage(CfgLabError):
    pass


class BudgetExceeded(CfgLabError):
    pass


class FormatError(CfgLabError):
    pass


class StochasticityError(FormatError):
    """An attention row does not sum to 1 within tolerance."""


class NonFiniteError(FormatError):
    pass


class Exhausted(CfgLabError):
    """A record stream ran out before the requested count was reached."""


class InfeasibleSpec(CfgLabError):
    pass


class LengthExceeded(CfgLabError):
    pass


class Divergence(CfgLabError):
    """Training loss became non-finite."""


class MisalignedAnnotations(CfgLabError):
    pass


class EmptyPool(CfgLabError):
    pass
