"""Shared exception types."""


class FootlabError(Exception):
    """Base class for all footlab errors."""


class FormatError(FootlabError):
    """A file or payload does not match its documented format.

    ``row`` is the 1-based data row index when the problem is row-local,
    ``offset`` the byte offset for binary payloads.
    """

    def __init__(self, message: str, *, row: int | None = None, offset: int | None = None):
        super().__init__(message)
        self.row = row
        self.offset = offset


class NotFoundError(FootlabError):
    """A referenced record does not exist."""


class ConflictError(FootlabError):
    """An operation conflicts with current state (e.g. double resolution)."""
