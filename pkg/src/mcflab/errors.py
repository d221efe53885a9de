"""Exception hierarchy shared by all mcflab modules."""


class MCFError(Exception):
    """Base class for every error raised by mcflab."""


class DegenerateMetric(MCFError):
    def __init__(self, index, det):
        self.index = index
        self.det = det
        super().__init__(f"induced metric degenerate at sample {index} (det g = {det:.3e})")


class FrameFailure(MCFError):
    pass


class StepRejected(MCFError):
    pass


class FlowStalled(MCFError):
    pass


class IncomparableSnapshots(MCFError):
    pass


class Unsupported(MCFError):
    pass


class InsufficientData(MCFError):
    pass


class FitDiverged(MCFError):
    pass


class BadAnchor(MCFError):
    pass


class GraphFold(MCFError):
    pass


class HypothesisViolated(MCFError):
    pass


class PreconditionUnsatisfied(MCFError):
    pass


class RadiusTooLarge(MCFError):
    pass


class ScenarioParseError(MCFError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ScenarioValidationError(MCFError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class TrajectoryIOError(MCFError):
    pass
