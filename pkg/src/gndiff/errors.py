"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can emit a
single parseable line on failure.
"""


class GndiffError(Exception):
    code = "error"

    def __init__(self, message: str = "", **context):
        super().__init__(message or self.code)
        self.context = context

    def as_dict(self) -> dict:
        out = {"code": self.code, "message": str(self)}
        out.update({k: v for k, v in self.context.items() if v is not None})
        return out


class GraphError(GndiffError):
    code = "invalid-graph"


class AsymmetricIncidence(GraphError):
    code = "asymmetric-incidence"


class NonzeroDiagonal(GraphError):
    code = "nonzero-diagonal"


class ShapeMismatch(GndiffError):
    code = "shape-mismatch"


class ScaleOverflow(GndiffError):
    code = "scale-overflow"


class ZeroNormFeature(GndiffError):
    code = "zero-norm-feature"


class MissingFrozenDenominators(GndiffError):
    code = "missing-frozen-denominators"


class UnsupportedVariant(GndiffError):
    code = "unsupported-variant"


class NoConvergence(GndiffError):
    code = "no-convergence"


class SingularLinearSystem(GndiffError):
    code = "singular-linear-system"


class ConfigError(GndiffError):
    code = "invalid-config"


class UnknownPreset(ConfigError):
    code = "unknown-preset"


class NonFiniteState(GndiffError):
    code = "non-finite-state"
