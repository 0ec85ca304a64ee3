"""Exception hierarchy.

Every error carries a stable ``code`` string, which the command-line front
end emits verbatim in its JSON error line.
"""


class RobustMdpError(ValueError):
    code = "RobustMdpError"

    def __init__(self, message=""):
        super().__init__(message)
        self.message = message

    def to_dict(self):
        return {"code": self.code, "message": self.message}


def _make(name, doc):
    return type(name, (RobustMdpError,), {"code": name, "__doc__": doc})


DiscountTooLarge = _make("DiscountTooLarge", "alpha * C_P >= 1, or alpha <= 0.")
InvalidDimension = _make("InvalidDimension", "Window length or asset count below 1.")
NegativeRadius = _make("NegativeRadius", "Ambiguity radius below zero.")
InvalidConfig = _make("InvalidConfig", "Any other malformed configuration value.")
DimensionMismatch = _make("DimensionMismatch", "Array shapes do not agree.")
HistoryTooShort = _make("HistoryTooShort", "Fewer than m + 1 historical returns.")
WindowTooShort = _make("WindowTooShort", "Window length m < 2 where a covariance is needed.")
SupportTooLarge = _make("SupportTooLarge", "Measure support above the exact-LP cap.")
NoConvergence = _make("NoConvergence", "Value iteration hit its iteration cap.")
TooLarge = _make("TooLarge", "Brute-force enumeration above its cap.")
InvalidMdp = _make("InvalidMdp", "Malformed finite MDP.")
EmptyTrainingSet = _make("EmptyTrainingSet", "No training windows supplied.")
ParseError = _make("ParseError", "Malformed input file.")
NonPositivePrice = _make("NonPositivePrice", "A price is zero or negative.")
NonMonotoneDates = _make("NonMonotoneDates", "Dates are not strictly increasing.")
TooShort = _make("TooShort", "Series too short for the requested operation.")
SplitOutOfRange = _make("SplitOutOfRange", "Split point outside the data range.")
EmptyTestSet = _make("EmptyTestSet", "No test windows supplied.")
