"""
Exception hierarchy for SkillLab

Library code raises these; only the command-line interface turns them into exit
codes (0 ok, 2 config, 3 data, 4 numeric).
"""


class SkillLabError(Exception):
    """Base class for every error raised by the package."""
    exit_code = 2


class ConfigError(SkillLabError):
    """Unknown config keys, bad task names, missing inputs."""
    exit_code = 2


class DataError(SkillLabError):
    """Expert failures, malformed or inconsistent dataset files."""
    exit_code = 3


class NumericalError(SkillLabError):
    """Non-finite values during training or checking."""
    exit_code = 4


class ShapeError(SkillLabError, ValueError):
    """Operand shapes incompatible with a diffcore op."""
    exit_code = 2


class TapeError(SkillLabError):
    """Misuse of the autodiff tape (double backward, missing gradients)."""
    exit_code = 2


class FrozenError(SkillLabError):
    """Attempt to update a frozen parameter set."""
    exit_code = 2


class VariantError(SkillLabError):
    """Operation not supported by, or inconsistent with, a policy variant."""
    exit_code = 2


class EvaluationError(SkillLabError):
    """Evaluation preconditions not met."""
    exit_code = 2
