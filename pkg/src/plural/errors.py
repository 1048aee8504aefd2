"""Exception types shared across the package.

Precondition violations (bad arguments the caller controls) raise ValueError;
the classes here represent domain-state failures a caller may want to handle.
"""


class PluralError(Exception):
    """Base class for domain errors."""


class NotFound(PluralError):
    """An id does not exist in the fabric."""


class AlreadyMember(PluralError):
    """Membership edge already exists."""


class InsufficientStanding(PluralError):
    """A standing spend would push the raw weight below the floor."""


class DegenerateInput(PluralError):
    """Clustering input has too few distinct rows to support the request."""


class TooSmall(PluralError):
    """Community too small (or too sparsely observed) for subcommunity detection."""


class InsufficientData(PluralError):
    """Not enough raters/items for the factorization fit."""


class FewerThanTwoBlocs(PluralError):
    """Bridging/divisiveness need at least two blocs; caller should fall back."""


class NoAcceptedDeal(PluralError):
    """Ad-funded weight requires at least one accepted advertiser deal."""


class InsufficientFunds(PluralError):
    """Account balance cannot cover the requested amount."""


class Unregistered(PluralError):
    """Community has no registered administrator."""


class EmptyCommunity(PluralError):
    """Aggregation over an empty member set."""


class ConfigError(PluralError):
    """Scenario document failed validation.

    `path` locates the offending field, e.g. "communities[0].lambda".
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")
