"""Exception hierarchy shared by every atcnn module."""


class AtcnnError(Exception):
    """Base class for all errors raised by atcnn."""


class DimensionError(AtcnnError, ValueError):
    pass


class NumericInputError(AtcnnError, ValueError):
    pass


class ContractError(AtcnnError, ValueError):
    """A documented precondition of an operation was violated."""


class FilterSpecError(AtcnnError, ValueError):
    pass


class ConfigError(AtcnnError, ValueError):
    pass


class LabelError(AtcnnError, ValueError):
    pass


class DatasetError(AtcnnError, ValueError):
    pass


class DivergenceError(AtcnnError, RuntimeError):
    pass


class ModelFormatError(AtcnnError, ValueError):
    """Bad magic, unsupported version or truncated model file."""


class ChecksumError(ModelFormatError):
    pass


class EnsembleIncompleteError(AtcnnError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "ensemble incomplete"


class DegenerateROCError(AtcnnError, ValueError):
    pass
