"""Exception hierarchy. Each error carries a stable kebab-case ``code``."""


class SrbkitError(Exception):
    code = "srbkit-error"

    def __init__(self, message="", **details):
        super().__init__(message or self.code)
        self.details = details


def _make(name, code, base=SrbkitError):
    return type(name, (base,), {"code": code, "__doc__": f"Raised as ``{code}``."})


OrbitEscapesBasin = _make("OrbitEscapesBasin", "orbit-escapes-basin")
NoPreimageFound = _make("NoPreimageFound", "no-preimage-found")
BranchAmbiguous = _make("BranchAmbiguous", "branch-ambiguous")
DegenerateCocycle = _make("DegenerateCocycle", "degenerate-cocycle")
NotConverged = _make("NotConverged", "not-converged")
DimensionMismatch = _make("DimensionMismatch", "dimension-mismatch")
InsufficientPairs = _make("InsufficientPairs", "insufficient-pairs")
TailNotConverged = _make("TailNotConverged", "tail-not-converged")
ConditionsViolated = _make("ConditionsViolated", "conditions-violated")
FixedPointDiverged = _make("FixedPointDiverged", "fixed-point-diverged")
LeftClass = _make("LeftClass", "left-class")
RankDeficient = _make("RankDeficient", "rank-deficient")
NotOnPatch = _make("NotOnPatch", "not-on-patch")
BackwardOrbitFailure = _make("BackwardOrbitFailure", "backward-orbit-failure")
InsufficientSupport = _make("InsufficientSupport", "insufficient-support")
PlaneMissesBasin = _make("PlaneMissesBasin", "plane-misses-basin")
TooFar = _make("TooFar", "too-far")
NoIntersection = _make("NoIntersection", "no-intersection")
KBudgetExceeded = _make("KBudgetExceeded", "k-budget-exceeded")
ChartConditionsViolated = _make("ChartConditionsViolated", "chart-conditions-violated")
NewtonDiverged = _make("NewtonDiverged", "newton-diverged")
RefinementExplosion = _make("RefinementExplosion", "refinement-explosion")
SmallnessChainViolated = _make("SmallnessChainViolated", "smallness-chain-violated")
InadmissibleWord = _make("InadmissibleWord", "inadmissible-word")
EmptyIntersection = _make("EmptyIntersection", "empty-intersection")
WanderingStates = _make("WanderingStates", "wandering-states")
ReducibleChain = _make("ReducibleChain", "reducible-chain")
PartitionNotMixing = _make("PartitionNotMixing", "partition-not-mixing")
EntropyNotConverged = _make("EntropyNotConverged", "entropy-not-converged")
ConfigInvalid = _make("ConfigInvalid", "config-invalid")
PipelineAssertionFailed = _make("PipelineAssertionFailed", "pipeline-assertion-failed")
