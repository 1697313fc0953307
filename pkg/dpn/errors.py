class DPNError(Exception):
    pass


class DimensionError(DPNError, ValueError):
    pass


class InvalidMaskError(DPNError, ValueError):
    pass


class ContractError(DPNError, ValueError):
    pass


class ConfigError(DPNError, ValueError):
    pass


class VocabularyError(DPNError, ValueError):
    pass


class LengthError(DPNError, ValueError):
    pass


class CorpusError(DPNError, ValueError):
    pass


class EmptyBatchError(DPNError, ValueError):
    pass


class DataError(DPNError, ValueError):
    pass


class DivergenceError(DPNError, RuntimeError):
    pass


class CheckpointError(DPNError, RuntimeError):
    pass


class CheckpointVersionError(CheckpointError):
    pass
