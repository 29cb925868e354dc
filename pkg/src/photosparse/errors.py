"""Exception hierarchy. Each family maps onto a distinct CLI exit code."""


class PhotosparseError(Exception):
    exit_code = 1


class ConfigError(PhotosparseError):
    exit_code = 2


class MissingInputError(PhotosparseError):
    exit_code = 3


class ModelError(PhotosparseError):
    """Invalid model structure, shape mismatch or non-finite data."""

    exit_code = 4


class ContainerError(ModelError):
    """Malformed manifest or tensor blob."""


class StageError(PhotosparseError):
    """A pipeline stage (prune, cluster, simulate, ...) could not complete."""

    exit_code = 5
