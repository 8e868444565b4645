class ConfigError(ValueError):
    """Invalid scenario or configuration; ``key`` names the offending field."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class NoFeasibleTechnology(RuntimeError):
    """Every technology is masked out for a request; the request must be rejected."""


class BookkeepingError(KeyError):
    """Feedback referenced a decision the engine does not retain."""
