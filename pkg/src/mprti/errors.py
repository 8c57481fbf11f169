"""Exception types shared across the package."""


class MprtiError(Exception):
    """Base class; ``category`` is reported by the CLI on failure."""

    category = "error"


class ConfigError(MprtiError, ValueError):
    category = "config"


class GeometryError(MprtiError, ValueError):
    category = "geometry"


class ContractError(MprtiError, ValueError):
    category = "contract"
