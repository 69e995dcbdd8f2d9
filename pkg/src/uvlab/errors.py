"""Exception hierarchy shared across the harness.

Exit-code classes used by the CLI hang off four bases: ``ConfigError``,
``DeviceError``, ``StorageError`` and everything else (``UvlabError``).
"""


class UvlabError(Exception):
    """Base for every error raised by this package."""


class ConfigError(UvlabError):
    """Bad configuration: grids, selections, missing inputs."""


class DeviceError(UvlabError):
    pass


class StorageError(UvlabError):
    pass


# -- V/F grid ----------------------------------------------------------------

class GridError(ConfigError):
    pass


class OffGridVoltage(GridError):
    pass


class OffGridFrequency(GridError):
    pass


class AboveNominal(GridError):
    pass


class VoltageAboveNominal(AboveNominal):
    pass


class NonPositiveVoltage(GridError):
    pass


class UnscalableDomain(GridError):
    pass


class EmptyGrid(GridError):
    pass


class InvalidSelection(ConfigError):
    pass


# -- device ------------------------------------------------------------------

class DeviceUnresponsive(DeviceError):
    pass


class UnknownPmd(DeviceError):
    pass


# -- watchdog ----------------------------------------------------------------

class NonPositiveDuration(UvlabError):
    pass


class ProtocolViolation(UvlabError):
    pass


# -- orchestrator ------------------------------------------------------------

class InvalidGrid(ConfigError):
    pass


class MissingGolden(ConfigError):
    pass


class CorruptJournal(StorageError):
    pass


class JournalWriteFailure(StorageError):
    pass


class StorageFull(StorageError):
    pass


# -- analysis ----------------------------------------------------------------

class MalformedLogTree(UvlabError):
    pass


class MixedGrids(UvlabError):
    pass


class NonContiguousGrid(UvlabError):
    pass


class IoFailure(StorageError):
    pass
