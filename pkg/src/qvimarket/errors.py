"""Exception hierarchy shared by all modules."""


class QVIMarketError(Exception):
    """Base class for every error raised by this package."""


class ScenarioError(QVIMarketError, ValueError):
    """Malformed scenario data (schema, shapes, inverted bounds)."""


class InvalidParams(ScenarioError):
    pass


class StateOutsideGlobalBox(QVIMarketError, ValueError):
    pass


class EmptyPolytope(ScenarioError):
    """The technology inequalities leave no feasible price vector."""


class WrongPricingMode(QVIMarketError, ValueError):
    pass


class NumericalFailure(QVIMarketError, ArithmeticError):
    """An inner numerical routine failed to terminate or lost feasibility."""


class EmptyBalanceSet(QVIMarketError, ValueError):
    def __init__(self, message: str, commodity: int | None = None):
        super().__init__(message)
        self.commodity = commodity


class InfeasibleMarket(QVIMarketError, ValueError):
    pass


class InfeasiblePoint(QVIMarketError, ValueError):
    pass


class AssumptionViolation(QVIMarketError, ValueError):
    def __init__(self, message: str, findings=()):
        super().__init__(message)
        self.findings = tuple(findings)


class TooLargeForOracle(QVIMarketError, ValueError):
    pass


class OracleNotConverged(QVIMarketError, ArithmeticError):
    pass
