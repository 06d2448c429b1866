"""Shared exception types, mapped to CLI exit codes in descnet.cli."""


class DataError(ValueError):
    """Malformed or inconsistent user input: datasets, config files, labels."""


class ArtifactError(RuntimeError):
    """Incompatible or corrupted produced artifact: checkpoints, file hashes."""
