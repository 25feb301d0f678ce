"""Exception hierarchy shared by all pipeline stages."""


class CodeImageError(Exception):
    """Base class for every error raised by this package."""


class UnbalancedBraces(CodeImageError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class MalformedControlStructure(CodeImageError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonConvergence(CodeImageError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class AlphaTooLarge(CodeImageError):
    pass


class SingularSystem(CodeImageError):
    pass


class EmptyCorpus(CodeImageError):
    pass


class InvalidSplice(CodeImageError):
    pass


class LengthMismatch(CodeImageError):
    pass


class BadMagic(CodeImageError):
    pass


class ShapeMismatch(CodeImageError):
    pass


class TruncatedFile(CodeImageError):
    pass


class RowsTooSmall(CodeImageError):
    pass


class SingleClassDataset(CodeImageError):
    pass


class TooFewSamples(CodeImageError):
    pass


class EmptyConfusion(CodeImageError):
    pass
