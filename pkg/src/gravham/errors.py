"""Exception hierarchy.

Every error carries a stable ``code`` used by the command-line front end to
pick an exit status: 1 for failed checks, 2 for configuration problems and 3
for numeric degeneracies.
"""


class GravhamError(Exception):
    code = "GRAVHAM_ERROR"
    exit_status = 3


class ConfigInvalid(GravhamError):
    code = "CONFIG_INVALID"
    exit_status = 2


class DimensionTooSmall(GravhamError):
    code = "DIMENSION_TOO_SMALL"
    exit_status = 2


# -- metric admissibility ---------------------------------------------------

class SingularMetric(GravhamError):
    code = "SINGULAR_METRIC"


class NonLorentzian(GravhamError):
    code = "NON_LORENTZIAN"


class TemporalDegeneracy(GravhamError):
    code = "TEMPORAL_DEGENERACY"


class MetricDegenerated(GravhamError):
    code = "METRIC_DEGENERATED"


# -- tensor algebra ---------------------------------------------------------

class VarianceMismatch(GravhamError):
    code = "VARIANCE_MISMATCH"
    exit_status = 2


class RankOverflow(GravhamError):
    code = "RANK_OVERFLOW"
    exit_status = 2


class UnsupportedSymbol(GravhamError):
    code = "UNSUPPORTED_SYMBOL"
    exit_status = 2


# -- numerical consistency --------------------------------------------------

class ChristoffelMismatch(GravhamError):
    code = "CHRISTOFFEL_MISMATCH"
    exit_status = 1


class Unstable(GravhamError):
    code = "UNSTABLE"


class NoFront(GravhamError):
    code = "NO_FRONT"


class DegenerateFit(GravhamError):
    code = "DEGENERATE_FIT"


class NonIntegrableGauge(GravhamError):
    code = "NON_INTEGRABLE_GAUGE"
    exit_status = 2


class NonUnitaryDrift(GravhamError):
    code = "NON_UNITARY_DRIFT"
